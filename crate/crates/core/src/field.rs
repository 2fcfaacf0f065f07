//! Engine output and rms error metrics.

use std::ops::Add;

use crate::error::{Error, Result};
use crate::scalar::{Real, Vec3};

/// Per-particle potentials and forces plus the total energy.
///
/// Depending on the producer this is a full result or a single part
/// (real space, k-space or self term); parts combine with `+`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldResult<T> {
    pub potentials: Vec<T>,
    pub forces: Vec<Vec3<T>>,
    pub energy: T,
}

impl<T: Real> FieldResult<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            potentials: vec![T::zero(); n],
            forces: vec![[T::zero(); 3]; n],
            energy: T::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.potentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potentials.is_empty()
    }

    /// `E = 1/2 sum q_m phi_m`.
    pub fn energy_from_potentials(potentials: &[T], charges: &[T]) -> T {
        let s: T = potentials.iter().zip(charges).map(|(&p, &q)| p * q).sum();
        T::lit(0.5) * s
    }

    /// Sum of all forces.
    pub fn net_force(&self) -> Vec3<T> {
        let mut f = [T::zero(); 3];
        for v in &self.forces {
            for k in 0..3 {
                f[k] = f[k] + v[k];
            }
        }
        f
    }

    /// Restriction to the given particles; the energy is carried over as is.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            potentials: indices.iter().map(|&i| self.potentials[i]).collect(),
            forces: indices.iter().map(|&i| self.forces[i]).collect(),
            energy: self.energy,
        }
    }

    /// Multiplies every quantity by `factor`, e.g. an electrostatic
    /// conversion constant.
    pub fn scaled(mut self, factor: T) -> Self {
        self.potentials.iter_mut().for_each(|p| *p = *p * factor);
        self.forces
            .iter_mut()
            .flatten()
            .for_each(|f| *f = *f * factor);
        self.energy = self.energy * factor;
        self
    }

    pub fn cast<U: Real>(&self) -> FieldResult<U> {
        let c = |x: T| U::lit(x.as_f64());
        FieldResult {
            potentials: self.potentials.iter().map(|&p| c(p)).collect(),
            forces: self
                .forces
                .iter()
                .map(|f| [c(f[0]), c(f[1]), c(f[2])])
                .collect(),
            energy: c(self.energy),
        }
    }

    pub fn rms_potential(&self) -> f64 {
        rms(self.potentials.iter().map(|p| p.as_f64()))
    }

    /// Rms over all `3N` force components.
    pub fn rms_force(&self) -> f64 {
        rms(self.forces.iter().flatten().map(|f| f.as_f64()))
    }
}

impl<T: Real> Add for FieldResult<T> {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        assert_eq!(
            self.len(),
            rhs.len(),
            "adding field results of different sizes"
        );
        for (a, b) in self.potentials.iter_mut().zip(&rhs.potentials) {
            *a = *a + *b;
        }
        for (a, b) in self.forces.iter_mut().zip(&rhs.forces) {
            for k in 0..3 {
                a[k] = a[k] + b[k];
            }
        }
        self.energy = self.energy + rhs.energy;
        self
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Absolute and relative rms errors of a result against a reference.
///
/// Relative values divide by the rms magnitude of the reference quantity; when
/// that magnitude is zero the absolute value is reported instead.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorReport {
    pub abs_rms_potential: f64,
    pub abs_rms_force: f64,
    /// `|E - E*|` (a single number has rms equal to its magnitude).
    pub abs_rms_energy: f64,
    pub rel_rms_potential: f64,
    pub rel_rms_force: f64,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str =
        "abs_rms_potential,rel_rms_potential,abs_rms_force,rel_rms_force,abs_energy";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            self.abs_rms_potential,
            self.rel_rms_potential,
            self.abs_rms_force,
            self.rel_rms_force,
            self.abs_rms_energy
        )
    }
}

/// Rms deviation of `test` from `reference`: the potential error is
/// `sqrt(1/N sum (phi - phi*)^2)` and the force error is taken over all `3N`
/// components.
pub fn rms_error<T: Real, U: Real>(
    test: &FieldResult<T>,
    reference: &FieldResult<U>,
) -> Result<ErrorReport> {
    if test.len() != reference.len() || test.forces.len() != reference.forces.len() {
        return Err(Error::LengthMismatch {
            what: "test result",
            got: test.len(),
            expected: reference.len(),
        });
    }
    let abs_p = rms(test
        .potentials
        .iter()
        .zip(&reference.potentials)
        .map(|(a, b)| a.as_f64() - b.as_f64()));
    let abs_f = rms(test
        .forces
        .iter()
        .flatten()
        .zip(reference.forces.iter().flatten())
        .map(|(a, b)| a.as_f64() - b.as_f64()));
    let rel = |abs: f64, scale: f64| if scale > 0.0 { abs / scale } else { abs };
    Ok(ErrorReport {
        abs_rms_potential: abs_p,
        abs_rms_force: abs_f,
        abs_rms_energy: (test.energy.as_f64() - reference.energy.as_f64()).abs(),
        rel_rms_potential: rel(abs_p, reference.rms_potential()),
        rel_rms_force: rel(abs_f, reference.rms_force()),
    })
}
