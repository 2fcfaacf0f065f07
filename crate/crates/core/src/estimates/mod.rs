//! Error estimates and parameter selection.
//!
//! Truncation estimates for the real-space and Fourier-space Ewald sums, their
//! inverses (pick the split parameter or the Fourier cutoff for a target
//! error), the approximation error bound of the Gaussian-window (SE) method,
//! the runtime model and the tuner built on top of them.
//!
//! Every estimate is an absolute rms error for unit-free Gaussian units.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub mod calibrate;
pub mod runtime;
pub mod tune;

pub use runtime::{predict_runtime, RuntimeModel};
pub use tune::{tune, Method, TunedParams};

/// Balance constant `c` tying the Gaussian shape parameter to the support
/// width, `m = c sqrt(pi P)`.
pub const SHAPE_BALANCE: f64 = 0.95;

/// Largest useful support width: beyond it the window error is below double
/// precision rounding.
pub const MAX_SUPPORT: usize = 24;

/// Quantity an estimate refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Potential,
    Energy,
    Force,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 3] = [ErrorKind::Potential, ErrorKind::Energy, ErrorKind::Force];
}

impl FromStr for ErrorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "potential" | "p" => Ok(Self::Potential),
            "energy" | "e" => Ok(Self::Energy),
            "force" | "f" => Ok(Self::Force),
            other => Err(Error::InvalidParameter(format!(
                "unknown error kind '{other}'"
            ))),
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Potential => "potential",
            Self::Energy => "energy",
            Self::Force => "force",
        })
    }
}

/// Inverse of `x e^{-x}` on the branch `x >= 1`, for `y` in `(0, 1/e]`.
///
/// Bisection brackets the root, a Newton step on `ln x - x - ln y` polishes it.
pub fn lambert_w_decay(y: f64) -> Result<f64> {
    let peak = 1.0 / E;
    if !(y > 0.0) || y > peak * (1.0 + 1e-15) || !y.is_finite() {
        return Err(Error::Domain {
            function: "lambert_w_decay",
            arg: y,
        });
    }
    if y >= peak * (1.0 - 1e-15) {
        return Ok(1.0);
    }
    let f = |x: f64| x.ln() - x - y.ln();
    let mut lo = 1.0;
    let mut hi = 2.0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    let slope = 1.0 / x - 1.0;
    if slope.abs() > 1e-6 {
        let step = f(x) / slope;
        if step.abs() < (hi - lo).max(1e-300) * 4.0 {
            x -= step;
        }
    }
    Ok(x)
}

/// Principal branch of the Lambert W function, the inverse of `w e^w`, for
/// `y >= 0`.
pub fn lambert_w0(y: f64) -> Result<f64> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::Domain {
            function: "lambert_w0",
            arg: y,
        });
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    Ok(lambert_w0_exp(y.ln()))
}

/// `W0(e^t)`, usable when `e^t` itself would overflow.
pub fn lambert_w0_exp(t: f64) -> f64 {
    if t < 1.0 {
        // Halley on w e^w = y, y < e
        let y = t.exp();
        let mut w = if y < 0.5 {
            y * (1.0 - y)
        } else {
            0.5 * y.ln_1p() + 0.3
        };
        for _ in 0..100 {
            let ew = w.exp();
            let g = w * ew - y;
            let gp = ew * (w + 1.0);
            let step = g / (gp - (w + 2.0) * g / (2.0 * w + 2.0));
            w -= step;
            if step.abs() <= 1e-16 * w.abs().max(1e-300) {
                break;
            }
        }
        w
    } else {
        // Newton on w + ln w = t
        let mut w = if t > 3.0 { t - t.ln() } else { 0.6 * t };
        for _ in 0..100 {
            let g = w + w.ln() - t;
            let step = g / (1.0 + 1.0 / w);
            w -= step;
            if step.abs() <= 1e-16 * w {
                break;
            }
        }
        w
    }
}

/// Real-space truncation estimate for cutoff `rc`, split `xi`, box `L` and
/// `Q = sum q^2`.
pub fn truncation_error_real(kind: ErrorKind, q: f64, rc: f64, xi: f64, l: f64) -> f64 {
    let decay = (-(rc * xi).powi(2)).exp();
    let l3 = l * l * l;
    match kind {
        ErrorKind::Potential => (q * rc / (2.0 * l3)).sqrt() * (xi * rc).powi(-2) * decay,
        ErrorKind::Energy => q * (rc / (2.0 * l3)).sqrt() * (xi * rc).powi(-2) * decay,
        ErrorKind::Force => 2.0 * q * (1.0 / (rc * l3)).sqrt() * decay,
    }
}

/// Fourier-space truncation estimate for maximal wave index `kinf`.
pub fn truncation_error_fourier(kind: ErrorKind, q: f64, kinf: f64, xi: f64, l: f64) -> f64 {
    let decay = (-(PI * kinf / (xi * l)).powi(2)).exp();
    match kind {
        ErrorKind::Potential => xi / (PI * PI) * kinf.powf(-1.5) * q.sqrt() * decay,
        ErrorKind::Energy => xi / (PI * PI) * kinf.powf(-1.5) * q * decay,
        ErrorKind::Force => xi / (l * PI) * (8.0 / kinf).sqrt() * q * decay,
    }
}

/// Split parameter for which the real-space estimate equals `tol` at cutoff
/// `rc`.
pub fn xi_from_tolerance(kind: ErrorKind, rc: f64, tol: f64, q: f64, l: f64) -> Result<f64> {
    check_positive(&[rc, tol, q, l])?;
    let l3 = l * l * l;
    match kind {
        ErrorKind::Potential | ErrorKind::Energy => {
            let a = match kind {
                ErrorKind::Potential => (q * rc / (2.0 * l3)).sqrt(),
                _ => q * (rc / (2.0 * l3)).sqrt(),
            };
            let w = lambert_w0_exp((a / tol).ln());
            Ok(w.sqrt() / rc)
        }
        ErrorKind::Force => {
            let arg = 2.0 * q / tol * (1.0 / (rc * l3)).sqrt();
            if !(arg > 1.0) {
                return Err(Error::Domain {
                    function: "xi_from_tolerance(log)",
                    arg,
                });
            }
            Ok(arg.ln().sqrt() / rc)
        }
    }
}

/// Real-space cutoff for which the real-space estimate equals `tol` at split
/// `xi` (the estimates decrease monotonically in `rc`).
pub fn rc_from_tolerance(kind: ErrorKind, xi: f64, tol: f64, q: f64, l: f64) -> Result<f64> {
    check_positive(&[xi, tol, q, l])?;
    let g = |rc: f64| truncation_error_real(kind, q, rc, xi, l).ln() - tol.ln();
    let mut lo = 1e-8 / xi;
    let mut hi = 1e3 / xi;
    if g(lo) <= 0.0 {
        return Ok(lo);
    }
    if g(hi) > 0.0 {
        return Err(Error::Infeasible(format!(
            "no cutoff reaches tolerance {tol:e} at xi = {xi}"
        )));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Fourier cutoff (real valued; callers round up) for which the Fourier
/// estimate equals `tol` at split `xi`.
pub fn kinf_from_tolerance(kind: ErrorKind, xi: f64, tol: f64, q: f64, l: f64) -> Result<f64> {
    check_positive(&[xi, tol, q, l])?;
    let k = match kind {
        ErrorKind::Potential | ErrorKind::Energy => {
            let qq = if kind == ErrorKind::Potential {
                q
            } else {
                q * q
            };
            // ln of 4/(3 L^2) (qq / (pi xi tol^2))^{2/3}
            let t = (4.0 / (3.0 * l * l)).ln() + (2.0 / 3.0) * (qq / (PI * xi)).ln()
                - (4.0 / 3.0) * tol.ln();
            3f64.sqrt() * l * xi / (2.0 * PI) * lambert_w0_exp(t).sqrt()
        }
        ErrorKind::Force => {
            // ln of 2^8 xi^2 Q^4 / (tol^4 L^6 pi^2)
            let t = 8.0 * 2f64.ln() + 2.0 * xi.ln() + 4.0 * q.ln()
                - 4.0 * tol.ln()
                - 6.0 * l.ln()
                - 2.0 * PI.ln();
            l * xi / (2.0 * PI) * lambert_w0_exp(t).sqrt()
        }
    };
    if !k.is_finite() {
        return Err(Error::Domain {
            function: "kinf_from_tolerance",
            arg: tol,
        });
    }
    Ok(k)
}

fn check_positive(values: &[f64]) -> Result<()> {
    for &v in values {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "expected a positive finite value, got {v}"
            )));
        }
    }
    Ok(())
}

/// `e^{-pi P c^2 / 2}`: the window error of the Gaussian method relative to
/// its scale factor.
pub fn se_relative_bound(support: usize) -> f64 {
    se_relative_bound_with(support, SHAPE_BALANCE)
}

pub fn se_relative_bound_with(support: usize, balance: f64) -> f64 {
    (-PI * support as f64 * balance * balance / 2.0).exp()
}

/// Scale factor of the window error: `sqrt(Q xi L)/L` for the potential,
/// `Q sqrt(xi L)/L` for the energy and `4 pi Q sqrt(xi^3/L)` for the force.
pub fn se_error_scale(kind: ErrorKind, xi: f64, l: f64, q: f64) -> f64 {
    match kind {
        ErrorKind::Potential => (q * xi * l).sqrt() / l,
        ErrorKind::Energy => q * (xi * l).sqrt() / l,
        ErrorKind::Force => 4.0 * PI * q * (xi.powi(3) / l).sqrt(),
    }
}

/// Approximation error bound of the Gaussian-window method with `support`
/// points per dimension.
pub fn se_approx_error(kind: ErrorKind, support: usize, xi: f64, l: f64, q: f64) -> f64 {
    se_error_scale(kind, xi, l, q) * se_relative_bound(support)
}

/// Smallest even support `P` whose relative bound is at most `rel_tol`,
/// clamped to `[4, 24]`.
pub fn support_from_tolerance(rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "relative tolerance must lie in (0, 1), got {rel_tol}"
        )));
    }
    let raw = (2.0 * (1.0 / rel_tol).ln() / (PI * SHAPE_BALANCE * SHAPE_BALANCE)).ceil() as usize;
    let even = raw + raw % 2;
    if even > MAX_SUPPORT {
        log::warn!("tolerance {rel_tol:e} is below the window error floor; support capped at {MAX_SUPPORT}");
    }
    Ok(even.clamp(4, MAX_SUPPORT))
}

/// Mean number of neighbours within `rc` for a uniform density.
pub fn average_neighbors(n: usize, l: f64, rc: f64) -> f64 {
    4.0 / 3.0 * PI * rc.powi(3) / l.powi(3) * n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        // f(lo) and f(hi) of opposite sign
        let s = f(lo).signum();
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if f(mid).signum() == s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambert_decay_closed_forms() {
        assert!((lambert_w_decay(1.0 / E).unwrap() - 1.0).abs() < 1e-7);
        assert!((lambert_w_decay(2.0 * (-2.0f64).exp()).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lambert_decay_matches_bisection() {
        let x = lambert_w_decay(1e-6).unwrap();
        let oracle = bisect(1.0, 60.0, |x| x * (-x).exp() - 1e-6);
        assert!((x - oracle).abs() < 1e-12, "{x} {oracle}");
    }

    #[test]
    fn lambert_decay_domain() {
        assert!(lambert_w_decay(0.0).is_err());
        assert!(lambert_w_decay(0.5).is_err());
        assert!(lambert_w_decay(-1.0).is_err());
    }

    #[test]
    fn lambert_w0_inverts() {
        for &y in &[1e-12, 1e-3, 0.3, 1.0, 2.5, 10.0, 1e5, 1e40, 1e300] {
            let w = lambert_w0(y).unwrap();
            let back = w.ln() + w;
            assert!(
                (back - y.ln()).abs() < 1e-13 * y.ln().abs().max(1.0),
                "y={y} w={w}"
            );
        }
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!(lambert_w0(-1.0).is_err());
        // overflow-safe path
        let w = lambert_w0_exp(2000.0);
        assert!((w + w.ln() - 2000.0).abs() < 1e-10);
    }

    #[test]
    fn real_estimate_plug_in() {
        let v = truncation_error_real(ErrorKind::Potential, 1.0, 1.0, 2.0, 1.0);
        let expect = 0.5f64.sqrt() * 0.25 * (-4.0f64).exp();
        assert!((v - expect).abs() < 1e-16);
    }

    #[test]
    fn fourier_estimate_plug_in() {
        let v = truncation_error_fourier(ErrorKind::Energy, 1.0, 4.0, 1.0, 2.0 * PI);
        let expect = 1.0 / (PI * PI) * 4f64.powf(-1.5) * (-4.0f64).exp();
        assert!((v - expect).abs() < 1e-16);
    }

    #[test]
    fn estimates_vanish_in_the_limit() {
        let mut prev = f64::INFINITY;
        for rc in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let v = truncation_error_real(ErrorKind::Force, 10.0, rc, 1.0, 10.0);
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-100);
        assert!(truncation_error_fourier(ErrorKind::Force, 10.0, 1e3, 1.0, 10.0) < 1e-300);
    }

    #[test]
    fn force_xi_hand_inversion() {
        let tol = 2.0 * (-4.0f64).exp();
        let xi = xi_from_tolerance(ErrorKind::Force, 1.0, tol, 1.0, 1.0).unwrap();
        assert!((xi - 2.0).abs() < 1e-14);
    }

    #[test]
    fn xi_round_trip_and_ordering() {
        let (q, l, rc) = (800.0, 20.0, 4.0);
        for &tol in &[1e-3, 1e-6, 1e-10] {
            let mut xis = vec![];
            for kind in ErrorKind::ALL {
                let xi = xi_from_tolerance(kind, rc, tol, q, l).unwrap();
                let back = truncation_error_real(kind, q, rc, xi, l);
                assert!((back / tol - 1.0).abs() < 0.01, "{kind} {tol}: {back}");
                xis.push(xi);
            }
            assert!(xis[0] <= xis[1] && xis[1] <= xis[2], "{xis:?}");
        }
    }

    #[test]
    fn loose_force_tolerance_is_a_domain_error() {
        assert!(matches!(
            xi_from_tolerance(ErrorKind::Force, 1.0, 10.0, 1.0, 1.0),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn kinf_round_trip_and_ordering() {
        let (q, l, xi) = (1200.0, 10.0, 3.0);
        for &tol in &[1e-4, 1e-8, 1e-12] {
            let mut ks = vec![];
            for kind in ErrorKind::ALL {
                let k = kinf_from_tolerance(kind, xi, tol, q, l).unwrap();
                let back = truncation_error_fourier(kind, q, k, xi, l);
                assert!((back / tol - 1.0).abs() < 0.01, "{kind} {tol}: {back}");
                assert!(truncation_error_fourier(kind, q, k.ceil(), xi, l) <= tol);
                ks.push(k);
            }
            assert!(ks[0] <= ks[1] && ks[0] <= ks[2], "{ks:?}");
            // energy and force cutoffs are comparable
            assert!((ks[1] / ks[2] - 1.0).abs() < 0.25, "{ks:?}");
        }
    }

    #[test]
    fn force_kinf_matches_bisection() {
        let (q, l, xi, tol) = (500.0, 8.0, 2.5, 3e-7);
        let k = kinf_from_tolerance(ErrorKind::Force, xi, tol, q, l).unwrap();
        let oracle = bisect(1.0, 500.0, |k| {
            truncation_error_fourier(ErrorKind::Force, q, k, xi, l).ln() - tol.ln()
        });
        assert!((k - oracle).abs() < 1e-9 * oracle, "{k} {oracle}");
    }

    #[test]
    fn rc_inverts_real_estimate() {
        for kind in ErrorKind::ALL {
            let rc = rc_from_tolerance(kind, 3.0, 1e-7, 100.0, 5.0).unwrap();
            let back = truncation_error_real(kind, 100.0, rc, 3.0, 5.0);
            assert!((back / 1e-7 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn remark_thresholds() {
        assert!(se_relative_bound(10) < 1e-6);
        assert!(se_relative_bound(20) < 1e-12);
        assert!(se_relative_bound(24) < 2e-15);
    }

    #[test]
    fn doubling_support_squares_the_bound() {
        for p in [4, 6, 10] {
            let a = se_relative_bound(p);
            assert!((se_relative_bound(2 * p) / (a * a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn support_selection() {
        assert_eq!(support_from_tolerance(1e-6).unwrap(), 10);
        assert_eq!(support_from_tolerance(1e-12).unwrap(), 20);
        assert_eq!(support_from_tolerance(0.5).unwrap(), 4);
        assert_eq!(support_from_tolerance(1e-30).unwrap(), 24);
        assert!(support_from_tolerance(0.0).is_err());
        assert!(support_from_tolerance(1.0).is_err());
    }

    #[test]
    fn approx_error_scales() {
        let (xi, l, q) = (3.0, 10.0, 400.0);
        let b = se_relative_bound(8);
        assert!(
            (se_approx_error(ErrorKind::Potential, 8, xi, l, q) - (q * xi * l).sqrt() / l * b)
                .abs()
                < 1e-15
        );
        assert!(
            (se_approx_error(ErrorKind::Energy, 8, xi, l, q) - q * (xi * l).sqrt() / l * b).abs()
                < 1e-12
        );
        let af = 4.0 * PI * q * (xi.powi(3) / l).sqrt();
        assert!((se_approx_error(ErrorKind::Force, 8, xi, l, q) / (af * b) - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn lambert_decay_residual(y in 1e-300f64..0.3678) {
            let x = lambert_w_decay(y).unwrap();
            prop_assert!(x >= 1.0);
            prop_assert!((x * (-x).exp() - y).abs() <= 1e-12 * y.max(1e-12));
        }

        #[test]
        fn estimates_are_monotone(q in 1.0f64..1e4, xi in 0.5f64..5.0, rc in 0.5f64..3.0, k in 2.0f64..30.0) {
            let l = 10.0;
            for kind in ErrorKind::ALL {
                prop_assert!(truncation_error_real(kind, q, rc * 1.1, xi, l) < truncation_error_real(kind, q, rc, xi, l));
                prop_assert!(truncation_error_real(kind, q * 1.1, rc, xi, l) > truncation_error_real(kind, q, rc, xi, l));
                prop_assert!(truncation_error_fourier(kind, q, k * 1.1, xi, l) < truncation_error_fourier(kind, q, k, xi, l));
                prop_assert!(truncation_error_fourier(kind, q * 1.1, k, xi, l) > truncation_error_fourier(kind, q, k, xi, l));
            }
            prop_assert!(se_relative_bound(6) < se_relative_bound(4));
        }
    }
}
