//! Parameter tuner: the cheapest `(xi, rc, M, P)` under the runtime model that
//! meets a relative rms force tolerance according to the error estimates.
//!
//! The absolute target is `rel_tol * F_rms`, where `F_rms` comes from a cheap
//! low-accuracy evaluation. The squared error budget is shared equally by the
//! real and Fourier truncation; the window support (SE) or the largest
//! `xi h` per spline order (SPME) is fixed by the relative tolerance alone.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::field::{rms_error, ErrorReport, FieldResult};
use crate::oracle::{self, EwaldSplit};
use crate::realspace;
use crate::scalar::Real;
use crate::se::{se_total, SeEngine, SeParams};
use crate::spme::{spme_kspace, spme_total, SpmeParams};
use crate::system::ParticleSystem;

use super::runtime::{predict_runtime, RuntimeBreakdown, RuntimeModel};
use super::{
    average_neighbors, kinf_from_tolerance, rc_from_tolerance, se_relative_bound,
    support_from_tolerance, xi_from_tolerance, ErrorKind, MAX_SUPPORT, SHAPE_BALANCE,
};

/// Fast k-space method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Se,
    Spme,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" => Ok(Self::Se),
            "spme" => Ok(Self::Spme),
            other => Err(Error::InvalidParameter(format!(
                "unknown method '{other}' (se, spme)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Se => "se",
            Self::Spme => "spme",
        })
    }
}

/// Tuner output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunedParams {
    pub method: Method,
    pub xi: f64,
    pub rc: f64,
    pub m: usize,
    /// Window support (SE) or spline order (SPME).
    pub p: usize,
    pub box_length: f64,
    /// Absolute rms force target.
    pub abs_tol: f64,
    /// Estimated rms force magnitude.
    pub force_rms: f64,
    pub predicted: RuntimeBreakdown,
}

impl TunedParams {
    pub fn se_params(&self) -> Result<SeParams> {
        SeParams::new(self.m, self.p, self.xi, self.box_length)
    }

    pub fn spme_params(&self) -> Result<SpmeParams> {
        SpmeParams::new(self.m, self.p, self.xi, self.box_length)
    }
}

/// Number of split parameters tried between the smallest usable one and the
/// grid size cap.
pub const XI_POINTS: usize = 48;
/// Largest grid considered.
pub const MAX_GRID: usize = 512;
/// Upper limit on `eta` for the Gaussian window.
pub const MAX_ETA: f64 = 0.95;
/// Safety factor on the window bound: measured SE force errors, taken
/// relative to the total force rms, sit up to a few tens above the relative
/// bound `e^{-pi P c^2/2}`.
pub const WINDOW_MARGIN: f64 = 10.0;
/// Spline orders tried for SPME.
pub const SPME_ORDERS: [usize; 3] = [3, 5, 7];

/// Rms force magnitude from a low-accuracy SE evaluation
/// (`xi rc = 3`, `P = 8`, about 60 neighbours per particle).
pub fn estimate_force_rms<T: Real>(system: &ParticleSystem<T>) -> Result<f64> {
    let l = system.box_length().as_f64();
    let rho = system.density();
    let rc = (60.0 * 3.0 / (4.0 * std::f64::consts::PI * rho))
        .cbrt()
        .min(0.5 * l);
    let xi = 3.0 / rc;
    let m = (((1.9 * xi * l).ceil() as usize).max(8) + 1) & !1;
    let m = m.min(MAX_GRID);
    let prm = SeParams::new(m, 8.min(m), xi, l)?;
    let real = realspace::real_space(system, xi, rc)?;
    let (kspace, _) = SeEngine::new(prm)?.kspace(system)?;
    Ok((real + kspace).rms_force())
}

fn even_ceil(x: f64) -> usize {
    let c = x.ceil().max(2.0) as usize;
    c + c % 2
}

/// Tunes with the force rms estimated from the system.
pub fn tune<T: Real>(
    system: &ParticleSystem<T>,
    method: Method,
    rel_tol: f64,
    model: &RuntimeModel,
) -> Result<TunedParams> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "relative tolerance must lie in (0, 1), got {rel_tol}"
        )));
    }
    if !model.is_calibrated() {
        return Err(Error::Uncalibrated);
    }
    let force_rms = estimate_force_rms(system)?;
    let (n, l, q) = (
        system.len(),
        system.box_length().as_f64(),
        system.charge_sq_sum(),
    );
    match method {
        Method::Se => {
            let window = rel_tol / WINDOW_MARGIN;
            if se_relative_bound(MAX_SUPPORT) > window {
                return Err(Error::Infeasible(format!(
                    "{rel_tol:e} is below the window error floor of the largest support {MAX_SUPPORT}"
                )));
            }
            let p = support_from_tolerance(window)?;
            tune_with(
                method,
                n,
                l,
                q,
                rel_tol,
                force_rms,
                &[(p, f64::INFINITY)],
                model,
            )
        }
        Method::Spme => {
            // the lowest order whose grid requirement fits under the cap
            let mut last = None;
            for p in SPME_ORDERS {
                let attempt = spme_max_xi_h(system, p, rel_tol / 2f64.sqrt()).and_then(|xh| {
                    tune_with(method, n, l, q, rel_tol, force_rms, &[(p, xh)], model)
                });
                match attempt {
                    Ok(t) => return Ok(t),
                    Err(e @ Error::Infeasible(_)) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last.expect("at least one order is tried"))
        }
    }
}

/// Tuner core for given `(p, largest xi h)` candidates.
#[allow(clippy::too_many_arguments)]
pub fn tune_with(
    method: Method,
    n: usize,
    l: f64,
    q: f64,
    rel_tol: f64,
    force_rms: f64,
    orders: &[(usize, f64)],
    model: &RuntimeModel,
) -> Result<TunedParams> {
    let abs_tol = rel_tol * force_rms;
    let part_tol = abs_tol / 2f64.sqrt();
    let xi_lo = xi_from_tolerance(ErrorKind::Force, 0.5 * l, part_tol, q, l)?;
    let mut best: Option<TunedParams> = None;
    for &(p, max_xi_h) in orders {
        // the Fourier cutoff alone already bounds xi through the grid cap
        let mut xi_hi = xi_lo;
        while xi_hi < 1e6 * xi_lo {
            let k = kinf_from_tolerance(ErrorKind::Force, xi_hi * 1.05, part_tol, q, l)?;
            if 2.0 * k.ceil() > MAX_GRID as f64 {
                break;
            }
            xi_hi *= 1.05;
        }
        for i in 0..XI_POINTS {
            let xi = if XI_POINTS == 1 {
                xi_lo
            } else {
                xi_lo * (xi_hi / xi_lo).powf(i as f64 / (XI_POINTS - 1) as f64)
            };
            let rc = rc_from_tolerance(ErrorKind::Force, xi, part_tol, q, l)?.min(0.5 * l);
            let kinf = kinf_from_tolerance(ErrorKind::Force, xi, part_tol, q, l)?;
            let mut m = even_ceil(2.0 * kinf).max(p + p % 2);
            match method {
                Method::Se => {
                    // eta = P L^2 xi^2 / (c^2 pi M^2) below MAX_ETA
                    let m_eta = (p as f64 * (l * xi).powi(2)
                        / (SHAPE_BALANCE.powi(2) * std::f64::consts::PI * MAX_ETA))
                        .sqrt();
                    m = m.max(even_ceil(m_eta));
                }
                Method::Spme => m = m.max(even_ceil(xi * l / max_xi_h)),
            }
            if m > MAX_GRID {
                continue;
            }
            let predicted = predict_runtime(model, n, average_neighbors(n, l, rc), m, p)?;
            let candidate = TunedParams {
                method,
                xi,
                rc,
                m,
                p,
                box_length: l,
                abs_tol,
                force_rms,
                predicted,
            };
            log::debug!("candidate {candidate:?}");
            if best.map_or(true, |b| predicted.total() < b.predicted.total()) {
                best = Some(candidate);
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no parameters within the grid cap {MAX_GRID} meet {rel_tol:e}"
        ))
    })?;
    log::info!(
        "tuned {}: xi {:.4}, rc {:.4}, M {}, P {}, neighbours {:.1}, predicted {:.3e} s",
        best.method,
        best.xi,
        best.rc,
        best.m,
        best.p,
        average_neighbors(n, l, best.rc),
        best.predicted.total()
    );
    Ok(best)
}

/// Largest `xi h` for spline order `p` whose k-space force error relative to
/// the k-space force rms stays below `rel_tol`, measured on a neutral
/// subsample of at most 200 particles against the explicit Fourier sum.
pub fn spme_max_xi_h<T: Real>(system: &ParticleSystem<T>, p: usize, rel_tol: f64) -> Result<f64> {
    let sub = system.neutral_subset(system.len().min(200))?.cast::<f64>();
    let l = sub.box_length();
    let xi = 20.0 / l;
    // e^{-(pi k / (xi L))^2} below 1e-16
    let kinf = (6.1 * xi * l / std::f64::consts::PI).ceil() as usize;
    let reference = oracle::fourier_space_sum(&sub, &EwaldSplit::new(xi, 0.5 * l, kinf)?)?;
    let error_at = |m: usize| -> Result<f64> {
        let res = spme_kspace(&sub, &SpmeParams::new(m, p, xi, l)?)?;
        Ok(rms_error(&res, &reference)?.rel_rms_force)
    };
    let mut lo = even_ceil(p as f64).max(4);
    let mut hi = MAX_GRID;
    if error_at(hi)? > rel_tol {
        return Err(Error::Infeasible(format!(
            "spline order {p} cannot reach {rel_tol:e} on a {MAX_GRID} grid"
        )));
    }
    if error_at(lo)? <= rel_tol {
        return Ok(xi * l / lo as f64);
    }
    while hi - lo > 2 {
        let mid = ((lo + hi) / 2) & !1;
        let mid = if mid <= lo { lo + 2 } else { mid };
        if error_at(mid)? <= rel_tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(xi * l / hi as f64)
}

/// Error of the tuned method against a converged direct sum on at most
/// `max_targets` particles. The energy entry compares `1/2 sum q phi` over
/// those particles only.
pub fn verify_tuned<T: Real>(
    system: &ParticleSystem<T>,
    tuned: &TunedParams,
    max_targets: usize,
) -> Result<ErrorReport> {
    let n = system.len();
    let stride = n.div_ceil(max_targets.max(1)).max(1);
    let targets: Vec<usize> = (0..n).step_by(stride).collect();
    let test = match tuned.method {
        Method::Se => se_total(system, &tuned.se_params()?, tuned.rc)?,
        Method::Spme => spme_total(system, &tuned.spme_params()?, tuned.rc)?,
    };
    let reference = oracle::converged_reference_targets(
        system,
        (tuned.abs_tol * 1e-2).max(oracle::MIN_REFERENCE_TOL),
        &targets,
    )?;
    let mut test = test.select(&targets);
    let charges: Vec<T> = targets.iter().map(|&t| system.charges()[t]).collect();
    test.energy = FieldResult::energy_from_potentials(&test.potentials, &charges);
    rms_error(&test, &reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{generate_system, SystemKind};

    #[test]
    fn method_names() {
        assert_eq!("SE".parse::<Method>().unwrap(), Method::Se);
        assert_eq!(Method::Spme.to_string(), "spme");
        assert!("pppm".parse::<Method>().is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 20, 2.0, 1).unwrap();
        assert!(tune(&sys, Method::Se, 0.0, &RuntimeModel::desktop()).is_err());
        assert!(matches!(
            tune(&sys, Method::Se, 1e-4, &RuntimeModel::default()),
            Err(Error::Uncalibrated)
        ));
        assert!(matches!(
            tune(&sys, Method::Se, 1e-16, &RuntimeModel::desktop()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn tuned_parameters_meet_their_estimates() {
        let (n, l, q) = (5000, 3.684, 5000.0);
        let t = tune_with(
            Method::Se,
            n,
            l,
            q,
            1e-5,
            30.0,
            &[(10, f64::INFINITY)],
            &RuntimeModel::desktop(),
        )
        .unwrap();
        let part = t.abs_tol / 2f64.sqrt();
        assert!(
            super::super::truncation_error_real(ErrorKind::Force, q, t.rc, t.xi, l)
                <= part * 1.0001
        );
        assert!(
            super::super::truncation_error_fourier(ErrorKind::Force, q, (t.m / 2) as f64, t.xi, l)
                <= part * 1.0001
        );
        assert!(t.rc <= l / 2.0);
    }

    #[test]
    fn cheaper_fourier_shifts_split_up() {
        // making the grid cheaper moves work from real to Fourier space
        let base = RuntimeModel::desktop();
        let cheap = RuntimeModel {
            c_fft: Some(4.5e-11),
            c_spga: Some(5e-11),
            c_solve: Some(2e-11),
            ..base
        };
        let a = tune_with(
            Method::Se,
            20000,
            5.85,
            20000.0,
            1e-4,
            30.0,
            &[(8, f64::INFINITY)],
            &base,
        )
        .unwrap();
        let b = tune_with(
            Method::Se,
            20000,
            5.85,
            20000.0,
            1e-4,
            30.0,
            &[(8, f64::INFINITY)],
            &cheap,
        )
        .unwrap();
        assert!(b.xi > a.xi, "{} {}", a.xi, b.xi);
    }

    #[test]
    fn expensive_fft_pushes_xi_to_the_bottom() {
        let slow = RuntimeModel {
            c_fft: Some(1e3),
            ..RuntimeModel::desktop()
        };
        let t = tune_with(
            Method::Se,
            20000,
            5.85,
            20000.0,
            1e-4,
            30.0,
            &[(8, f64::INFINITY)],
            &slow,
        )
        .unwrap();
        let xi_lo = xi_from_tolerance(
            ErrorKind::Force,
            0.5 * 5.85,
            t.abs_tol / 2f64.sqrt(),
            20000.0,
            5.85,
        )
        .unwrap();
        assert!((t.xi - xi_lo).abs() < 1e-12 * xi_lo, "{} {}", t.xi, xi_lo);
    }

    #[test]
    fn small_system_tunes_and_verifies() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 400, 2.0, 3).unwrap();
        let t = tune(&sys, Method::Se, 1e-4, &RuntimeModel::desktop()).unwrap();
        let report = verify_tuned(&sys, &t, 100).unwrap();
        assert!(report.rel_rms_force < 1.5e-4, "{t:?} {report:?}");
    }

    #[test]
    fn spme_tuner_meets_tolerance() {
        let sys = generate_system::<f64>(SystemKind::Uniform, 400, 2.0, 3).unwrap();
        let t = tune(&sys, Method::Spme, 1e-3, &RuntimeModel::desktop()).unwrap();
        assert!(SPME_ORDERS.contains(&t.p));
        let report = verify_tuned(&sys, &t, 100).unwrap();
        assert!(report.rel_rms_force < 1.5e-3, "{t:?} {report:?}");
    }
}
