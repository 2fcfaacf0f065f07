//! Direct Ewald summation: the reference every fast method is measured against.
//!
//! The real-space part is a truncated `erfc` pair sum over periodic images,
//! the Fourier part an explicit structure-factor sum over wave vectors with
//! `0 < |n| <= k_inf`, `k = 2 pi n / L`.
//!
//! The `*_targets` variants evaluate potentials and forces for a subset of
//! particles only (all particles still act as sources). Their energy is
//! `1/2 sum q_m phi_m` restricted to the targets.

use std::f64::consts::PI;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimates::{kinf_from_tolerance, xi_from_tolerance, ErrorKind};
use crate::field::FieldResult;
use crate::scalar::{norm_sqr, Real, Vec3};
use crate::system::{min_image_displacement, ParticleSystem};

/// Coulomb constant in kJ mol^-1 nm e^-2, for converting Gaussian-unit
/// results to molecular units.
pub const COULOMB_KJ_MOL_NM: f64 = 138.935_458;

/// Parameters of one Ewald decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EwaldSplit {
    /// Split parameter.
    pub xi: f64,
    /// Real-space cutoff.
    pub rc: f64,
    /// Largest wave index `|n|` kept in the Fourier sum.
    pub kinf: usize,
}

impl EwaldSplit {
    pub fn new(xi: f64, rc: f64, kinf: usize) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "split parameter must be positive, got {xi}"
            )));
        }
        if !(rc > 0.0 && rc.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cutoff must be positive, got {rc}"
            )));
        }
        Ok(Self { xi, rc, kinf })
    }
}

fn all_indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn check_targets(n: usize, targets: &[usize]) -> Result<()> {
    match targets.iter().find(|&&t| t >= n) {
        Some(&t) => Err(Error::InvalidParameter(format!(
            "target index {t} out of range for {n} particles"
        ))),
        None => Ok(()),
    }
}

fn energy_of<T: Real>(system: &ParticleSystem<T>, targets: &[usize], potentials: &[T]) -> T {
    let q: Vec<T> = targets.iter().map(|&t| system.charges()[t]).collect();
    FieldResult::energy_from_potentials(potentials, &q)
}

/// Real-space part for all particles.
pub fn real_space_sum<T: Real>(
    system: &ParticleSystem<T>,
    split: &EwaldSplit,
) -> Result<FieldResult<T>> {
    real_space_targets(system, split, &all_indices(system.len()))
}

/// Real-space part `sum q_n erfc(xi r)/r` over all images within the cutoff.
pub fn real_space_targets<T: Real>(
    system: &ParticleSystem<T>,
    split: &EwaldSplit,
    targets: &[usize],
) -> Result<FieldResult<T>> {
    check_targets(system.len(), targets)?;
    let l = system.box_length();
    let lf = l.as_f64();
    let xi = T::lit(split.xi);
    let rc2 = T::lit(split.rc * split.rc);
    let gauss_coef = T::lit(2.0 * split.xi / PI.sqrt());
    // Below half the box only the minimum image can lie within the cutoff.
    let shells = if split.rc <= 0.5 * lf {
        0
    } else {
        (split.rc / lf).ceil() as i64
    };
    let pos = system.positions();
    let q = system.charges();

    let per_target: Vec<(T, Vec3<T>)> = targets
        .par_iter()
        .map(|&m| {
            let mut phi = T::zero();
            let mut f = [T::zero(); 3];
            let mut pair = |d: Vec3<T>, qn: T| {
                let r2 = norm_sqr(&d);
                if r2 >= rc2 || r2 == T::zero() {
                    return;
                }
                let r = r2.sqrt();
                let erfc = (xi * r).erfc();
                phi = phi + qn * erfc / r;
                let scal = qn * (gauss_coef * (-xi * xi * r2).exp() + erfc / r) / r2;
                for k in 0..3 {
                    f[k] = f[k] + scal * d[k];
                }
            };
            for n in 0..pos.len() {
                let d0 = min_image_displacement(&pos[m], &pos[n], l);
                if shells == 0 {
                    pair(d0, q[n]);
                    continue;
                }
                for px in -shells..=shells {
                    for py in -shells..=shells {
                        for pz in -shells..=shells {
                            let shift = [px, py, pz].map(|p| T::lit(p as f64) * l);
                            pair([d0[0] + shift[0], d0[1] + shift[1], d0[2] + shift[2]], q[n]);
                        }
                    }
                }
            }
            (phi, f.map(|c| c * q[m]))
        })
        .collect();

    let potentials: Vec<T> = per_target.iter().map(|p| p.0).collect();
    let energy = energy_of(system, targets, &potentials);
    Ok(FieldResult {
        potentials,
        forces: per_target.into_iter().map(|p| p.1).collect(),
        energy,
    })
}

/// Fourier-space part for all particles.
pub fn fourier_space_sum<T: Real>(
    system: &ParticleSystem<T>,
    split: &EwaldSplit,
) -> Result<FieldResult<T>> {
    fourier_space_targets(system, split, &all_indices(system.len()))
}

// e^{i 2 pi j x_a / L} for j = 0..=K, stored as table[a][j][particle].
struct Phases<T> {
    table: [Vec<Vec<Complex<T>>>; 3],
}

impl<T: Real> Phases<T> {
    fn new(positions: &[Vec3<T>], l: f64, kmax: usize) -> Self {
        let table = std::array::from_fn(|a| {
            (0..=kmax)
                .map(|j| {
                    positions
                        .iter()
                        .map(|p| {
                            let arg = 2.0 * PI * j as f64 * p[a].as_f64() / l;
                            Complex::new(T::lit(arg.cos()), T::lit(arg.sin()))
                        })
                        .collect()
                })
                .collect()
        });
        Self { table }
    }

    #[inline]
    fn get(&self, axis: usize, j: i64, n: usize) -> Complex<T> {
        let c = self.table[axis][j.unsigned_abs() as usize][n];
        if j < 0 {
            c.conj()
        } else {
            c
        }
    }
}

/// Fourier part `(4 pi / L^3) sum_k e^{-k^2/(4 xi^2)}/k^2 sum_n q_n e^{i k.(x_m - x_n)}`.
///
/// Wave vectors come in `+k/-k` pairs; only one of each pair is visited.
pub fn fourier_space_targets<T: Real>(
    system: &ParticleSystem<T>,
    split: &EwaldSplit,
    targets: &[usize],
) -> Result<FieldResult<T>> {
    check_targets(system.len(), targets)?;
    let l = system.box_length().as_f64();
    let kmax = split.kinf as i64;
    let k2max = kmax * kmax;
    let unit = 2.0 * PI / l;
    let prefactor = 4.0 * PI / l.powi(3);
    let pos = system.positions();
    let q = system.charges();
    let src = Phases::new(pos, l, split.kinf);

    let columns: Vec<(i64, i64)> = (0..=kmax)
        .flat_map(|kx| (-kmax..=kmax).map(move |ky| (kx, ky)))
        .filter(|&(kx, ky)| (kx > 0 || ky >= 0) && kx * kx + ky * ky <= k2max)
        .collect();

    // For each half-space wave vector: (n, 2 * prefactor * G(k) * conj(S(k)))
    // with S(k) = sum_n q_n e^{i k.x_n}.
    let modes: Vec<([i64; 3], Complex<T>)> = columns
        .par_iter()
        .flat_map_iter(|&(kx, ky)| {
            let exy: Vec<Complex<T>> = (0..pos.len())
                .map(|n| src.get(0, kx, n) * src.get(1, ky, n) * q[n])
                .collect();
            let zmax = ((k2max - kx * kx - ky * ky) as f64).sqrt().floor() as i64;
            (-zmax..=zmax)
                .filter(move |&kz| kx > 0 || ky > 0 || kz > 0)
                .map(|kz| {
                    let mut s = Complex::new(T::zero(), T::zero());
                    for (n, e) in exy.iter().enumerate() {
                        s = s + *e * src.get(2, kz, n);
                    }
                    let k2 = unit * unit * (kx * kx + ky * ky + kz * kz) as f64;
                    let weight = 2.0 * prefactor * (-k2 / (4.0 * split.xi * split.xi)).exp() / k2;
                    ([kx, ky, kz], s.conj() * T::lit(weight))
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let unit_t = T::lit(unit);
    let per_target: Vec<(T, Vec3<T>)> = targets
        .par_iter()
        .map(|&m| {
            let mut phi = T::zero();
            let mut f = [T::zero(); 3];
            for (n, w) in &modes {
                let e = src.get(0, n[0], m) * src.get(1, n[1], m) * src.get(2, n[2], m) * *w;
                phi = phi + e.re;
                for a in 0..3 {
                    f[a] = f[a] + T::lit(n[a] as f64) * e.im;
                }
            }
            (phi, f.map(|c| c * unit_t * q[m]))
        })
        .collect();

    let potentials: Vec<T> = per_target.iter().map(|p| p.0).collect();
    let energy = energy_of(system, targets, &potentials);
    Ok(FieldResult {
        potentials,
        forces: per_target.into_iter().map(|p| p.1).collect(),
        energy,
    })
}

/// Self-interaction correction `phi_m = -2 xi q_m / sqrt(pi)`; no force.
pub fn self_term<T: Real>(system: &ParticleSystem<T>, xi: f64) -> FieldResult<T> {
    self_term_targets(system, xi, &all_indices(system.len()))
}

fn self_term_targets<T: Real>(
    system: &ParticleSystem<T>,
    xi: f64,
    targets: &[usize],
) -> FieldResult<T> {
    let c = T::lit(-2.0 * xi / PI.sqrt());
    let potentials: Vec<T> = targets.iter().map(|&t| c * system.charges()[t]).collect();
    let energy = energy_of(system, targets, &potentials);
    FieldResult {
        potentials,
        forces: vec![[T::zero(); 3]; targets.len()],
        energy,
    }
}

/// Real + Fourier + self for all particles.
pub fn direct_total<T: Real>(
    system: &ParticleSystem<T>,
    split: &EwaldSplit,
) -> Result<FieldResult<T>> {
    direct_total_targets(system, split, &all_indices(system.len()))
}

pub fn direct_total_targets<T: Real>(
    system: &ParticleSystem<T>,
    split: &EwaldSplit,
    targets: &[usize],
) -> Result<FieldResult<T>> {
    Ok(real_space_targets(system, split, targets)?
        + fourier_space_targets(system, split, targets)?
        + self_term_targets(system, split.xi, targets))
}

/// Smallest tolerance a reference can be asked for.
pub const MIN_REFERENCE_TOL: f64 = 1e-14;

/// Picks an Ewald split whose truncation estimates for potential, energy and
/// force all lie a decade below `tol`, choosing the cutoff that minimizes the
/// operation count for `n_targets` evaluation points.
pub fn converged_split(
    n: usize,
    box_length: f64,
    charge_sq_sum: f64,
    tol: f64,
    n_targets: usize,
) -> Result<EwaldSplit> {
    if !(tol >= MIN_REFERENCE_TOL) {
        return Err(Error::InvalidParameter(format!(
            "reference tolerance {tol:e} is below what double precision can deliver ({MIN_REFERENCE_TOL:e})"
        )));
    }
    let l = box_length;
    let q = charge_sq_sum.max(f64::MIN_POSITIVE);
    let goal = tol / 10.0;
    let (n, t) = (n as f64, n_targets as f64);
    let mut best: Option<(f64, EwaldSplit)> = None;
    for i in 1..=40 {
        let rc = 0.05 * i as f64 * l;
        let xi = ErrorKind::ALL
            .iter()
            .filter_map(|&k| xi_from_tolerance(k, rc, goal, q, l).ok())
            .fold(1.0 / rc, f64::max);
        let kinf = ErrorKind::ALL
            .iter()
            .map(|&k| kinf_from_tolerance(k, xi, goal, q, l))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(1.0, f64::max)
            .ceil();
        // rough nanosecond weights: a distance check, an erfc pair, a complex multiply-add
        let images = if rc <= 0.5 * l {
            1.0
        } else {
            (2.0 * (rc / l).ceil() + 1.0).powi(3)
        };
        let inside = (4.0 * PI / 3.0 * (rc / l).powi(3)).min(images);
        let cost_real = t * n * (images + 40.0 * inside);
        let cost_fourier = (n + t) * 2.0 * PI / 3.0 * kinf.powi(3) * 4.0;
        let cost = cost_real + cost_fourier;
        if best.map_or(true, |(c, _)| cost < c) {
            best = Some((cost, EwaldSplit::new(xi, rc, kinf as usize)?));
        }
    }
    Ok(best.expect("candidate list is not empty").1)
}

/// Direct Ewald result converged to `tol` for every particle.
pub fn converged_reference<T: Real>(
    system: &ParticleSystem<T>,
    tol: f64,
) -> Result<FieldResult<T>> {
    converged_reference_targets(system, tol, &all_indices(system.len()))
}

pub fn converged_reference_targets<T: Real>(
    system: &ParticleSystem<T>,
    tol: f64,
    targets: &[usize],
) -> Result<FieldResult<T>> {
    let split = converged_split(
        system.len(),
        system.box_length().as_f64(),
        system.charge_sq_sum(),
        tol,
        targets.len(),
    )?;
    log::debug!("reference split {split:?}");
    direct_total_targets(system, &split, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{generate_system, SystemKind};
    use proptest::prelude::*;

    fn rock_salt() -> ParticleSystem<f64> {
        let a = 1.0;
        let mut pos = vec![];
        let mut q = vec![];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    pos.push([
                        i as f64 * a + 0.25,
                        j as f64 * a + 0.25,
                        k as f64 * a + 0.25,
                    ]);
                    q.push(if (i + j + k) % 2 == 0 { 1.0 } else { -1.0 });
                }
            }
        }
        ParticleSystem::new(2.0 * a, pos, q).unwrap()
    }

    #[test]
    fn madelung_constant() {
        let sys = rock_salt();
        let r = converged_reference(&sys, 1e-13).unwrap();
        let madelung = r.energy / 4.0;
        assert!((madelung + 1.747_564_594_6).abs() < 1e-9, "{madelung}");
        for p in &r.potentials {
            assert!((p.abs() - 1.747_564_594_6).abs() < 1e-9);
        }
    }

    #[test]
    fn total_is_independent_of_the_split() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 20, 3.0, 11).unwrap();
        let a = direct_total(&sys, &EwaldSplit::new(2.0, 3.0, 12).unwrap()).unwrap();
        let b = direct_total(&sys, &EwaldSplit::new(3.0, 2.0, 18).unwrap()).unwrap();
        for i in 0..sys.len() {
            assert!((a.potentials[i] - b.potentials[i]).abs() < 1e-9);
            for k in 0..3 {
                assert!((a.forces[i][k] - b.forces[i][k]).abs() < 1e-9);
            }
        }
        assert!((a.energy - b.energy).abs() < 1e-9);
    }

    #[test]
    fn real_space_matches_brute_force_images() {
        let l = 4.0;
        let sys = generate_system::<f64>(SystemKind::Uniform, 30, l, 5).unwrap();
        for rc in [1.99, 2.5, 5.0] {
            let res = real_space_sum(&sys, &EwaldSplit::new(1.5, rc, 1).unwrap()).unwrap();
            for m in [0, 7] {
                let mut phi = 0.0;
                for n in 0..sys.len() {
                    for p in -3i32..=3 {
                        for s in -3i32..=3 {
                            for t in -3i32..=3 {
                                let d: Vec<f64> = (0..3)
                                    .map(|k| {
                                        sys.positions()[m][k] - sys.positions()[n][k]
                                            + [p, s, t][k] as f64 * l
                                    })
                                    .collect();
                                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                                if r > 0.0 && r < rc {
                                    phi += sys.charges()[n] * libm::erfc(1.5 * r) / r;
                                }
                            }
                        }
                    }
                }
                assert!(
                    (phi - res.potentials[m]).abs() < 1e-12,
                    "rc {rc}: {phi} {}",
                    res.potentials[m]
                );
            }
        }
    }

    #[test]
    fn fourier_matches_full_space_sum() {
        // independent check: explicit double sum over the full cube of wave vectors
        let sys = generate_system::<f64>(SystemKind::Uniform, 6, 2.0, 3).unwrap();
        let (xi, kinf) = (2.0, 5);
        let res = fourier_space_sum(&sys, &EwaldSplit::new(xi, 1.0, kinf).unwrap()).unwrap();
        let l: f64 = 2.0;
        for m in 0..sys.len() {
            let mut phi = 0.0;
            let mut f = [0.0; 3];
            let k = kinf as i64;
            for a in -k..=k {
                for b in -k..=k {
                    for c in -k..=k {
                        let n2 = a * a + b * b + c * c;
                        if n2 == 0 || n2 > k * k {
                            continue;
                        }
                        let kv = [a, b, c].map(|v| 2.0 * PI * v as f64 / l);
                        let k2: f64 = kv.iter().map(|v| v * v).sum();
                        let g = 4.0 * PI / l.powi(3) * (-k2 / (4.0 * xi * xi)).exp() / k2;
                        for n in 0..sys.len() {
                            let arg: f64 = (0..3)
                                .map(|d| kv[d] * (sys.positions()[m][d] - sys.positions()[n][d]))
                                .sum();
                            phi += g * sys.charges()[n] * arg.cos();
                            for d in 0..3 {
                                f[d] += sys.charges()[m] * g * sys.charges()[n] * kv[d] * arg.sin();
                            }
                        }
                    }
                }
            }
            assert!((phi - res.potentials[m]).abs() < 1e-12);
            for d in 0..3 {
                assert!((f[d] - res.forces[m][d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forces_are_minus_energy_gradient() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 10, 2.0, 8).unwrap();
        let split = EwaldSplit::new(2.4, 1.0, 14).unwrap();
        let base = direct_total(&sys, &split).unwrap();
        let h = 1e-5;
        for m in [0, 3] {
            for d in 0..3 {
                let mut plus = sys.positions()[m];
                let mut minus = plus;
                plus[d] += h;
                minus[d] -= h;
                let ep = direct_total(&sys.with_position(m, plus), &split)
                    .unwrap()
                    .energy;
                let em = direct_total(&sys.with_position(m, minus), &split)
                    .unwrap()
                    .energy;
                let fd = -(ep - em) / (2.0 * h);
                assert!(
                    (fd - base.forces[m][d]).abs() < 1e-6,
                    "{fd} {}",
                    base.forces[m][d]
                );
            }
        }
    }

    #[test]
    fn self_term_energy() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 8, 1.0, 2).unwrap();
        let s = self_term(&sys, 3.0);
        assert!((s.energy + 3.0 / PI.sqrt() * sys.charge_sq_sum()).abs() < 1e-12);
    }

    #[test]
    fn targets_agree_with_full_evaluation() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 40, 3.0, 4).unwrap();
        let split = EwaldSplit::new(2.0, 1.4, 10).unwrap();
        let full = direct_total(&sys, &split).unwrap();
        let idx = [3, 17, 39];
        let part = direct_total_targets(&sys, &split, &idx).unwrap();
        let sel = full.select(&idx);
        for i in 0..3 {
            assert!((part.potentials[i] - sel.potentials[i]).abs() < 1e-14);
        }
        assert!(direct_total_targets(&sys, &split, &[40]).is_err());
    }

    #[test]
    fn reference_rejects_impossible_tolerance() {
        let sys = rock_salt();
        assert!(converged_reference(&sys, 1e-16).is_err());
    }

    #[test]
    fn single_precision_reference() {
        let sys = rock_salt().cast::<f32>();
        let r = converged_reference(&sys, 1e-6).unwrap();
        assert!((r.energy / 4.0 + 1.747_564_6).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn translation_invariance(seed in 0u64..100, sx in 0.0f64..3.0, sy in 0.0f64..3.0) {
            let sys = generate_system::<f64>(SystemKind::Uniform, 12, 3.0, seed).unwrap();
            let split = EwaldSplit::new(2.0, 1.4, 10).unwrap();
            let a = direct_total(&sys, &split).unwrap();
            let b = direct_total(&sys.translated([sx, sy, 0.7]), &split).unwrap();
            for i in 0..sys.len() {
                prop_assert!((a.potentials[i] - b.potentials[i]).abs() < 1e-10);
            }
            prop_assert!((a.energy - b.energy).abs() < 1e-10);
        }

        #[test]
        fn net_force_vanishes(seed in 0u64..100) {
            let sys = generate_system::<f64>(SystemKind::Uniform, 16, 2.5, seed).unwrap();
            let r = direct_total(&sys, &EwaldSplit::new(2.0, 1.2, 8).unwrap()).unwrap();
            let f = r.net_force();
            for k in 0..3 {
                prop_assert!(f[k].abs() < 1e-10);
            }
        }
    }
}
