//! Runtime model of one force evaluation.
//!
//! Real space: `(c_ns + c_force) n N` with `n = 4/3 pi rc^3 N / L^3` neighbours
//! per particle. Fourier space:
//! `c_fft (M^3/2) ln(M^3/2) + c_spga N P^3 + c_solve M^3`.
//! Constants are seconds per unit operation.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RuntimeModel {
    /// Neighbour search, per pair.
    pub c_ns: Option<f64>,
    /// Real-space kernel, per pair.
    pub c_force: Option<f64>,
    /// FFT, per `(M^3/2) ln(M^3/2)`.
    pub c_fft: Option<f64>,
    /// Scaling in Fourier space, per grid point.
    pub c_solve: Option<f64>,
    /// Spreading plus gathering, per particle and stencil point.
    pub c_spga: Option<f64>,
}

/// Predicted time split.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RuntimeBreakdown {
    pub real: f64,
    pub fourier: f64,
}

impl RuntimeBreakdown {
    pub fn total(&self) -> f64 {
        self.real + self.fourier
    }
}

const KEYS: [&str; 5] = ["c_ns", "c_force", "c_fft", "c_solve", "c_spga"];

/// FFT operation count `(M^3/2) ln(M^3/2)`.
pub fn fft_work(m: usize) -> f64 {
    let v = (m as f64).powi(3) / 2.0;
    v * v.ln()
}

impl RuntimeModel {
    /// Constants of a typical desktop core.
    pub fn desktop() -> Self {
        Self {
            c_ns: Some(1.4e-8),
            c_force: Some(1.0e-8),
            c_fft: Some(4.5e-9),
            c_solve: Some(2.0e-9),
            c_spga: Some(5.0e-9),
        }
    }

    /// Named profile; only `desktop` is built in.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "desktop" => Ok(Self::desktop()),
            other => Err(Error::InvalidParameter(format!(
                "unknown runtime profile '{other}'"
            ))),
        }
    }

    fn values(&self) -> [Option<f64>; 5] {
        [
            self.c_ns,
            self.c_force,
            self.c_fft,
            self.c_solve,
            self.c_spga,
        ]
    }

    fn slot(&mut self, key: &str) -> Option<&mut Option<f64>> {
        match key {
            "c_ns" => Some(&mut self.c_ns),
            "c_force" => Some(&mut self.c_force),
            "c_fft" => Some(&mut self.c_fft),
            "c_solve" => Some(&mut self.c_solve),
            "c_spga" => Some(&mut self.c_spga),
            _ => None,
        }
    }

    pub fn is_calibrated(&self) -> bool {
        self.values().iter().all(|v| v.is_some())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    fn get(v: Option<f64>) -> Result<f64> {
        v.ok_or(Error::Uncalibrated)
    }

    /// Real-space time for `n` particles with `neighbors` neighbours each.
    pub fn real_time(&self, n: usize, neighbors: f64) -> Result<f64> {
        Ok((Self::get(self.c_ns)? + Self::get(self.c_force)?) * neighbors * n as f64)
    }

    /// Fourier-space time for an `m^3` grid and `p^3` stencils.
    pub fn fourier_time(&self, n: usize, m: usize, p: usize) -> Result<f64> {
        Ok(Self::get(self.c_fft)? * fft_work(m)
            + Self::get(self.c_spga)? * n as f64 * (p as f64).powi(3)
            + Self::get(self.c_solve)? * (m as f64).powi(3))
    }
}

/// Predicted real and Fourier time of one evaluation; see
/// [`average_neighbors`](super::average_neighbors) for the neighbour count.
pub fn predict_runtime(
    model: &RuntimeModel,
    n: usize,
    neighbors: f64,
    m: usize,
    p: usize,
) -> Result<RuntimeBreakdown> {
    Ok(RuntimeBreakdown {
        real: model.real_time(n, neighbors)?,
        fourier: model.fourier_time(n, m, p)?,
    })
}

impl fmt::Display for RuntimeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        for (k, v) in KEYS.iter().zip(self.values()) {
            if let Some(v) = v {
                writeln!(s, "{k} = {v:e}")?;
            }
        }
        f.write_str(&s)
    }
}

/// `key = value` lines; `#` starts a comment. Missing keys stay unset.
impl FromStr for RuntimeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut model = RuntimeModel::default();
        for (i, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got '{line}'")))?;
            let key = key.trim();
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad value for {key}: {e}")))?;
            if !(value > 0.0 && value.is_finite()) {
                return Err(parse_err(format!("{key} must be positive")));
            }
            *model
                .slot(key)
                .ok_or_else(|| parse_err(format!("unknown key '{key}'")))? = Some(value);
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_prediction() {
        let model = RuntimeModel::desktop();
        let (n, m, p) = (1000, 32, 8);
        let nb = super::super::average_neighbors(n, 10.0, 1.5);
        let t = predict_runtime(&model, n, nb, m, p).unwrap();
        let pairs = 4.0 / 3.0 * std::f64::consts::PI * 1.5f64.powi(3) / 1000.0 * 1000.0 * 1000.0;
        assert!((t.real - 2.4e-8 * pairs).abs() < 1e-15);
        let v = 32f64.powi(3) / 2.0;
        let fourier = 4.5e-9 * v * v.ln() + 5e-9 * 1000.0 * 512.0 + 2e-9 * 32f64.powi(3);
        assert!((t.fourier - fourier).abs() < 1e-15);
        assert!((t.total() - t.real - t.fourier).abs() < 1e-18);
    }

    #[test]
    fn doubling_the_grid_scales_the_fft_term() {
        for m in [16, 64, 128] {
            let v = (m as f64).powi(3) / 2.0;
            let expect = 8.0 * (1.0 + 8f64.ln() / v.ln());
            assert!((fft_work(2 * m) / fft_work(m) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_round_trip() {
        let model = RuntimeModel::desktop();
        let back: RuntimeModel = model.to_string().parse().unwrap();
        assert_eq!(back, model);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.profile");
        model.save(&path).unwrap();
        assert_eq!(RuntimeModel::load(&path).unwrap(), model);
    }

    #[test]
    fn missing_constants_are_reported() {
        let partial: RuntimeModel = "c_fft = 1e-9\n# comment\n".parse().unwrap();
        assert!(!partial.is_calibrated());
        assert!(matches!(
            predict_runtime(&partial, 10, 5.0, 8, 4),
            Err(Error::Uncalibrated)
        ));
        assert!(matches!(
            predict_runtime(&RuntimeModel::default(), 10, 5.0, 8, 4),
            Err(Error::Uncalibrated)
        ));
    }

    #[test]
    fn malformed_profiles() {
        assert!("c_fft 1e-9".parse::<RuntimeModel>().is_err());
        assert!("c_foo = 1".parse::<RuntimeModel>().is_err());
        assert!("c_fft = -1".parse::<RuntimeModel>().is_err());
        assert!(RuntimeModel::named("laptop").is_err());
    }
}
