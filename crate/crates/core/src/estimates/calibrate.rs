//! Fits the runtime model constants to timings of the actual kernels on this
//! machine. Everything runs on a single thread.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kspace::{apply_se_influence, Fft3d, RealGrid};
use crate::realspace::{real_space_with_list, NeighborList};
use crate::se::{SeEngine, SeParams};
use crate::system::{generate_system, SystemKind};

use super::runtime::{fft_work, RuntimeModel};

#[derive(Clone, Debug)]
pub struct CalibrationConfig {
    /// Timed repetitions per point; the median is used.
    pub repeats: usize,
    /// Largest accepted `(max - min) / median` over the repetitions.
    pub max_spread: f64,
    /// Measurement rounds per point before giving up on an unstable timing.
    pub attempts: usize,
    pub fft_sizes: Vec<usize>,
    /// `(N, P)` pairs for spreading and gathering.
    pub spga_points: Vec<(usize, usize)>,
    /// Particle counts for the real-space kernels, at density 100 and cutoff
    /// `real_cutoff`.
    pub real_sizes: Vec<usize>,
    pub real_cutoff: f64,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            repeats: 5,
            max_spread: 0.5,
            attempts: 6,
            fft_sizes: vec![32, 48, 64, 96],
            spga_points: vec![(2000, 4), (2000, 8), (4000, 6), (4000, 10)],
            real_sizes: vec![2000, 4000, 8000, 16000],
            real_cutoff: 0.4,
            seed: 1,
        }
    }
}

/// One timed point: `seconds` for `work` model operations.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub kernel: &'static str,
    pub work: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub model: RuntimeModel,
    pub samples: Vec<Sample>,
}

/// Least-squares slope of `time = c * work` through the origin.
pub fn fit_through_origin(work: &[f64], time: &[f64]) -> f64 {
    let num: f64 = work.iter().zip(time).map(|(w, t)| w * t).sum();
    let den: f64 = work.iter().map(|w| w * w).sum();
    num / den
}

/// Median wall time of `f` over `repeats` runs. Short kernels are repeated
/// inside one measurement until it lasts a few milliseconds.
pub fn time_median(
    kernel: &str,
    repeats: usize,
    max_spread: f64,
    attempts: usize,
    mut f: impl FnMut(),
) -> Result<f64> {
    let clock = Instant::now();
    f();
    let once = clock.elapsed().as_secs_f64();
    let inner = ((2e-3 / once.max(1e-9)).ceil() as usize).clamp(1, 10_000);
    let mut spread = f64::INFINITY;
    for _ in 0..attempts.max(1) {
        let mut times: Vec<f64> = (0..repeats.max(1))
            .map(|_| {
                let clock = Instant::now();
                for _ in 0..inner {
                    f();
                }
                clock.elapsed().as_secs_f64() / inner as f64
            })
            .collect();
        times.sort_by(f64::total_cmp);
        let median = times[times.len() / 2];
        spread = (times[times.len() - 1] - times[0]) / median;
        if spread <= max_spread {
            return Ok(median);
        }
        log::info!("timing of {kernel} spread {spread:.2}, measuring again");
    }
    Err(Error::TimingUnstable {
        kernel: kernel.to_string(),
        spread,
        limit: max_spread,
    })
}

/// Times every kernel over its ladder and fits the model constants.
pub fn calibrate(config: &CalibrationConfig) -> Result<Calibration> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    pool.install(|| calibrate_inner(config))
}

fn calibrate_inner(cfg: &CalibrationConfig) -> Result<Calibration> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let time = |kernel: &'static str, f: &mut dyn FnMut()| {
        time_median(kernel, cfg.repeats, cfg.max_spread, cfg.attempts, f)
    };
    let mut samples = Vec::new();

    for &m in &cfg.fft_sizes {
        let fft = Fft3d::<f64>::new(m)?;
        let grid = RealGrid::from_vec(m, (0..m * m * m).map(|_| rng.random::<f64>()).collect())?;
        let t = time("fft", &mut || {
            let s = fft.forward(&grid).expect("planned size");
            std::hint::black_box(fft.inverse(s).expect("planned size"));
        })?;
        samples.push(Sample {
            kernel: "fft",
            work: fft_work(m),
            seconds: t,
        });

        let spectrum = fft.forward(&grid)?;
        let t = time("solve", &mut || {
            let mut s = spectrum.clone();
            apply_se_influence(&mut s, 3.0, 0.5, 1.0);
            std::hint::black_box(&s);
        })?;
        // the clone is part of the measurement; it is of the same order as the scaling
        samples.push(Sample {
            kernel: "solve",
            work: (m * m * m) as f64,
            seconds: t,
        });
    }

    for &(n, p) in &cfg.spga_points {
        let l = (n as f64 / 100.0).cbrt();
        let sys = generate_system::<f64>(SystemKind::Uniform, n, l, rng.random())?;
        let engine = SeEngine::new(SeParams::new(32, p, 3.0, l)?)?;
        let mut acc = Vec::new();
        time("spread_gather", &mut || {
            let (_, tm) = engine.kspace(&sys).expect("matching box");
            acc.push(tm.spread_gather().as_secs_f64());
        })?;
        acc.sort_by(f64::total_cmp);
        samples.push(Sample {
            kernel: "spread_gather",
            work: n as f64 * (p as f64).powi(3),
            seconds: acc[acc.len() / 2],
        });
    }

    for &n in &cfg.real_sizes {
        let l = (n as f64 / 100.0).cbrt();
        let rc = cfg.real_cutoff.min(l / 2.0);
        let sys = generate_system::<f64>(SystemKind::Uniform, n, l, rng.random())?;
        let list = NeighborList::build(&sys, rc)?;
        let pairs = list.pair_count() as f64;
        let t = time("neighbor_search", &mut || {
            std::hint::black_box(NeighborList::build(&sys, rc).expect("valid cutoff"));
        })?;
        samples.push(Sample {
            kernel: "neighbor_search",
            work: pairs,
            seconds: t,
        });
        let t = time("real_force", &mut || {
            std::hint::black_box(real_space_with_list(&sys, 3.0, &list));
        })?;
        samples.push(Sample {
            kernel: "real_force",
            work: pairs,
            seconds: t,
        });
    }

    let fit = |kernel: &str| {
        let (w, t): (Vec<f64>, Vec<f64>) = samples
            .iter()
            .filter(|s| s.kernel == kernel)
            .map(|s| (s.work, s.seconds))
            .unzip();
        if w.is_empty() {
            None
        } else {
            Some(fit_through_origin(&w, &t))
        }
    };
    let model = RuntimeModel {
        c_ns: fit("neighbor_search"),
        c_force: fit("real_force"),
        c_fft: fit("fft"),
        c_solve: fit("solve"),
        c_spga: fit("spread_gather"),
    };
    Ok(Calibration { model, samples })
}
