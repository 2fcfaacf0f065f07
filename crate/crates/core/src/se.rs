//! Spectral Ewald: k-space part with a truncated Gaussian window.
//!
//! Charges are spread with Gaussians `C e^{-2 xi^2 |x|^2 / eta}` onto the `P^3`
//! nearest grid points, the grid is scaled in Fourier space by
//! `e^{-(1 - eta) k^2/(4 xi^2)} / k^2`, and the same Gaussians gather
//! potentials and forces back. `eta = (2 w xi / m)^2` with support half-width
//! `w = P h / 2` and shape `m = c sqrt(pi P)`.
//!
//! Window values use fast Gaussian gridding: along each axis
//! `e^{-a (t + s h)^2} = e^{-a t^2} (e^{-2 a t h})^s e^{-a h^2 s^2}` where `t` is
//! the offset from the particle to a grid point next to it. Only the
//! first two factors depend on the particle, so each particle costs six
//! exponentials; the last factor is a table of `P` values.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::estimates::SHAPE_BALANCE;
use crate::field::FieldResult;
use crate::kspace::{apply_se_influence, Fft3d, RealGrid};
use crate::mesh::{self, Spare, Stencils};
use crate::oracle;
use crate::realspace;
use crate::scalar::Real;
use crate::system::ParticleSystem;

/// Grid and window parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeParams {
    /// Grid points per dimension (even).
    pub m: usize,
    /// Window support in grid points per dimension.
    pub support: usize,
    pub xi: f64,
    pub box_length: f64,
    /// Balance constant `c` of the shape parameter.
    pub balance: f64,
}

impl SeParams {
    pub fn new(m: usize, support: usize, xi: f64, box_length: f64) -> Result<Self> {
        Self::with_balance(m, support, xi, box_length, SHAPE_BALANCE)
    }

    pub fn with_balance(
        m: usize,
        support: usize,
        xi: f64,
        box_length: f64,
        balance: f64,
    ) -> Result<Self> {
        if m < 2 || m % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid size must be even and >= 2, got {m}"
            )));
        }
        if support < 2 || support > m {
            return Err(Error::InvalidParameter(format!(
                "support {support} must lie in [2, M = {m}]"
            )));
        }
        for (name, v) in [("xi", xi), ("box length", box_length), ("balance", balance)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let p = Self {
            m,
            support,
            xi,
            box_length,
            balance,
        };
        if p.eta() >= 1.0 {
            log::warn!(
                "eta = {:.3} >= 1: the grid is too coarse for xi = {xi} and the Fourier scaling amplifies high modes",
                p.eta()
            );
        }
        Ok(p)
    }

    pub fn h(&self) -> f64 {
        self.box_length / self.m as f64
    }

    /// Half-width of the window support.
    pub fn width(&self) -> f64 {
        self.support as f64 * self.h() / 2.0
    }

    /// Gaussian shape parameter `m = c sqrt(pi P)`.
    pub fn shape(&self) -> f64 {
        self.balance * (PI * self.support as f64).sqrt()
    }

    pub fn eta(&self) -> f64 {
        (2.0 * self.width() * self.xi / self.shape()).powi(2)
    }

    /// Exponent coefficient `2 xi^2 / eta` of the window.
    pub fn decay(&self) -> f64 {
        2.0 * self.xi * self.xi / self.eta()
    }

    /// Window normalization `(2 xi^2 / (pi eta))^{3/2}`.
    pub fn normalization(&self) -> f64 {
        (self.decay() / PI).powf(1.5)
    }
}

/// Wall-clock time of each stage and the number of exponentials evaluated
/// for the window.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub precompute: Duration,
    pub spread: Duration,
    pub fft: Duration,
    pub influence: Duration,
    pub ifft: Duration,
    pub gather: Duration,
    pub exp_calls: usize,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.precompute + self.spread + self.fft + self.influence + self.ifft + self.gather
    }

    /// Spreading and gathering including the window precomputation.
    pub fn spread_gather(&self) -> Duration {
        self.precompute + self.spread + self.gather
    }
}

/// Window tables for all particles: grid indices, `g` and `(x_grid - x) g`.
pub(crate) fn fgg_precompute<T: Real>(
    system: &ParticleSystem<T>,
    params: &SeParams,
    reuse: Option<Stencils<T>>,
) -> (Stencils<T>, usize) {
    let p = params.support;
    let m = params.m;
    let h = params.h();
    let a = params.decay();
    let half = p / 2;
    let table: Vec<T> = (0..p)
        .map(|j| {
            let s = j as f64 - half as f64;
            T::lit((-a * h * h * s * s).exp())
        })
        .collect();
    let a_t = T::lit(a);
    let h_t = T::lit(h);
    let two_a_h = T::lit(2.0 * a * h);
    let positions = system.positions();
    let st = Stencils::build(
        positions.len(),
        m,
        p,
        reuse,
        || (),
        |_, i, start, w, dw| {
            for (axis, &xa) in positions[i].iter().enumerate() {
                let u = xa.as_f64() / h;
                // odd supports center on the nearest grid point, even ones on the next one up
                let ic = if p % 2 == 1 { u.round() } else { u.ceil() } as i64;
                let t = T::lit(ic as f64) * h_t - xa;
                // e^{-a (t - half h)^2} up to the tabulated factor, then stepped by `ratio`
                let mut g = (-a_t * t * t + T::lit(half as f64) * two_a_h * t).exp();
                let ratio = (-two_a_h * t).exp();
                start[axis] = (ic - half as i64).rem_euclid(m as i64) as usize;
                let o = axis * p;
                for j in 0..p {
                    let d = t + T::lit(j as f64 - half as f64) * h_t;
                    w[o + j] = g * table[j];
                    dw[o + j] = d * w[o + j];
                    g = g * ratio;
                }
            }
        },
    );
    (st, 6 * system.len() + p)
}

/// Reusable engine: holds the FFT plans for one grid size.
pub struct SeEngine<T: Real> {
    params: SeParams,
    fft: Fft3d<T>,
    spare_grid: Spare<RealGrid<T>>,
    spare_stencils: Spare<Stencils<T>>,
}

impl<T: Real> SeEngine<T> {
    pub fn new(params: SeParams) -> Result<Self> {
        Ok(Self {
            spare_grid: Spare::new(),
            spare_stencils: Spare::new(),
            fft: Fft3d::new(params.m)?,
            params,
        })
    }

    pub fn params(&self) -> &SeParams {
        &self.params
    }

    /// k-space potentials, forces and energy with per-stage timings.
    pub fn kspace(&self, system: &ParticleSystem<T>) -> Result<(FieldResult<T>, StageTimings)> {
        check_box(system, self.params.box_length)?;
        let prm = &self.params;
        let mut tm = StageTimings::default();

        let clock = Instant::now();
        let (st, exp_calls) = fgg_precompute(system, prm, self.spare_stencils.take());
        tm.exp_calls = exp_calls;
        tm.precompute = clock.elapsed();

        let clock = Instant::now();
        let c = T::lit(prm.normalization());
        let coef: Vec<T> = system.charges().iter().map(|&q| q * c).collect();
        let grid = mesh::spread(self.spare_grid.zeroed(prm.m), &st, &coef);
        tm.spread = clock.elapsed();

        let clock = Instant::now();
        let mut spectrum = self.fft.forward(&grid)?;
        tm.fft = clock.elapsed();

        let clock = Instant::now();
        apply_se_influence(&mut spectrum, prm.xi, prm.eta(), prm.box_length);
        tm.influence = clock.elapsed();

        let clock = Instant::now();
        let smoothed = self.fft.inverse(spectrum)?;
        tm.ifft = clock.elapsed();

        let clock = Instant::now();
        let h3 = prm.h().powi(3);
        let pot_scale = T::lit(4.0 * PI * h3 * prm.normalization());
        let force_scale = T::lit(-4.0 * PI * h3 * prm.normalization() * 2.0 * prm.decay());
        let gathered = mesh::gather(&smoothed, &st);
        self.spare_grid.put(smoothed);
        self.spare_stencils.put(st);
        let q = system.charges();
        let potentials: Vec<T> = gathered.iter().map(|g| g.0 * pot_scale).collect();
        let forces = gathered
            .iter()
            .zip(q)
            .map(|(g, &qi)| g.1.map(|v| v * force_scale * qi))
            .collect();
        tm.gather = clock.elapsed();

        let energy = FieldResult::energy_from_potentials(&potentials, q);
        Ok((
            FieldResult {
                potentials,
                forces,
                energy,
            },
            tm,
        ))
    }
}

pub(crate) fn check_box<T: Real>(system: &ParticleSystem<T>, box_length: f64) -> Result<()> {
    let l = system.box_length().as_f64();
    if (l - box_length).abs() > 1e-6 * box_length {
        return Err(Error::InvalidParameter(format!(
            "parameters were set up for box length {box_length}, system has {l}"
        )));
    }
    Ok(())
}

/// k-space part by the Gaussian-window method.
pub fn se_kspace<T: Real>(system: &ParticleSystem<T>, params: &SeParams) -> Result<FieldResult<T>> {
    Ok(SeEngine::new(*params)?.kspace(system)?.0)
}

/// Full result: cell-list real space within `rc`, Gaussian-window k-space and
/// self term.
pub fn se_total<T: Real>(
    system: &ParticleSystem<T>,
    params: &SeParams,
    rc: f64,
) -> Result<FieldResult<T>> {
    Ok(realspace::real_space(system, params.xi, rc)?
        + se_kspace(system, params)?
        + oracle::self_term(system, params.xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimates::{se_error_scale, se_relative_bound, ErrorKind};
    use crate::oracle::{fourier_space_sum, EwaldSplit};
    use crate::system::{generate_system, SystemKind};
    use proptest::prelude::*;

    fn reference(sys: &ParticleSystem<f64>, xi: f64) -> FieldResult<f64> {
        let kinf = (6.0 * xi * sys.box_length() / PI).ceil() as usize;
        fourier_space_sum(sys, &EwaldSplit::new(xi, 1.0, kinf).unwrap()).unwrap()
    }

    #[test]
    fn parameter_relations() {
        let p = SeParams::new(32, 8, 3.0, 2.0).unwrap();
        assert!((p.h() - 0.0625).abs() < 1e-15);
        assert!((p.width() - 0.25).abs() < 1e-15);
        let m = 0.95 * (8.0 * PI).sqrt();
        assert!((p.eta() - (2.0 * 0.25 * 3.0 / m).powi(2)).abs() < 1e-15);
        assert!(p.eta() < 1.0);
        assert!(SeParams::new(31, 8, 3.0, 2.0).is_err());
        assert!(SeParams::new(32, 40, 3.0, 2.0).is_err());
        assert!(SeParams::new(32, 8, -1.0, 2.0).is_err());
    }

    #[test]
    fn window_matches_direct_gaussian() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 4, 2.0, 9).unwrap();
        let prm = SeParams::new(16, 7, 4.0, 2.0).unwrap();
        let (st, exps) = fgg_precompute(&sys, &prm, None);
        assert_eq!(exps, 6 * 4 + 7);
        let h = prm.h();
        for i in 0..4 {
            for a in 0..3 {
                let x = sys.positions()[i][a];
                for j in 0..7 {
                    let k = (3 * i + a) * 7 + j;
                    // unwrapped grid coordinate nearest to the stored index
                    let mut g = ((st.start[3 * i + a] + j) % 16) as f64 * h;
                    g -= 2.0 * ((g - x) / 2.0).round();
                    let d = g - x;
                    assert!(d.abs() <= prm.width() + 1e-12);
                    let direct = (-prm.decay() * d * d).exp();
                    assert!((st.w[k] - direct).abs() < 1e-13, "{} {}", st.w[k], direct);
                    assert!((st.dw[k] - d * direct).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn converges_to_the_fourier_sum() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 40, 2.0, 4).unwrap();
        let xi = 4.0;
        let reference = reference(&sys, xi);
        let a_p = se_error_scale(ErrorKind::Potential, xi, 2.0, sys.charge_sq_sum());
        let mut last = f64::INFINITY;
        for support in [4, 8, 12, 16] {
            let m = 40;
            let res = se_kspace(&sys, &SeParams::new(m, support, xi, 2.0).unwrap()).unwrap();
            let err = crate::field::rms_error(&res, &reference).unwrap();
            assert!(
                err.abs_rms_potential < 3.0 * a_p * se_relative_bound(support),
                "P={support} {err:?}"
            );
            assert!(err.abs_rms_potential < last);
            last = err.abs_rms_potential;
        }
        assert!(last < 1e-9);
    }

    #[test]
    fn forces_match_reference() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 30, 3.0, 6).unwrap();
        let xi = 2.5;
        let res = se_kspace(&sys, &SeParams::new(48, 16, xi, 3.0).unwrap()).unwrap();
        let err = crate::field::rms_error(&res, &reference(&sys, xi)).unwrap();
        assert!(err.rel_rms_force < 1e-8, "{err:?}");
        assert!((res.energy - reference(&sys, xi).energy).abs() < 1e-8);
    }

    #[test]
    fn single_precision_runs() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 30, 3.0, 6).unwrap();
        let xi = 2.5;
        let res = se_kspace(&sys.cast::<f32>(), &SeParams::new(32, 8, xi, 3.0).unwrap()).unwrap();
        let err = crate::field::rms_error(&res, &reference(&sys, xi)).unwrap();
        assert!(err.rel_rms_force < 1e-3, "{err:?}");
    }

    #[test]
    fn rejects_wrong_box() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 4, 3.0, 6).unwrap();
        assert!(se_kspace(&sys, &SeParams::new(16, 4, 2.0, 2.0).unwrap()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn translation_invariant(seed in 0u64..100, s in 0.0f64..3.0) {
            let sys = generate_system::<f64>(SystemKind::Uniform, 20, 3.0, seed).unwrap();
            let prm = SeParams::new(32, 12, 2.5, 3.0).unwrap();
            let a = se_kspace(&sys, &prm).unwrap();
            let b = se_kspace(&sys.translated([s, 0.3 * s, 1.1]), &prm).unwrap();
            prop_assert!((a.energy - b.energy).abs() < 1e-6 * a.energy.abs().max(1.0));
            let f = a.net_force();
            for k in 0..3 {
                prop_assert!(f[k].abs() < 1e-4 * a.rms_force() * 20.0);
            }
        }
    }
}
