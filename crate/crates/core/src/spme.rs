//! Smooth particle-mesh Ewald: k-space part with cardinal B-spline
//! interpolation of order `p` and analytic differentiation.

use std::f64::consts::PI;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::field::FieldResult;
use crate::kspace::{apply_spme_influence, bspline_bfactors, cardinal_bspline, Fft3d, RealGrid};
use crate::mesh::{self, Spare, Stencils};
use crate::oracle;
use crate::realspace;
use crate::scalar::Real;
use crate::se::{check_box, StageTimings};
use crate::system::ParticleSystem;

/// Grid and interpolation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpmeParams {
    /// Grid points per dimension (even).
    pub m: usize,
    /// B-spline order.
    pub order: usize,
    pub xi: f64,
    pub box_length: f64,
}

impl SpmeParams {
    pub fn new(m: usize, order: usize, xi: f64, box_length: f64) -> Result<Self> {
        if m < 2 || m % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid size must be even and >= 2, got {m}"
            )));
        }
        if order < 2 || order > m {
            return Err(Error::InvalidParameter(format!(
                "spline order {order} must lie in [2, M = {m}]"
            )));
        }
        for (name, v) in [("xi", xi), ("box length", box_length)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            m,
            order,
            xi,
            box_length,
        })
    }

    pub fn h(&self) -> f64 {
        self.box_length / self.m as f64
    }
}

/// Cardinal B-spline `M_p(x)`.
pub fn bspline_value(p: usize, x: f64) -> f64 {
    cardinal_bspline(p, x)
}

/// `M_p'(x) = M_{p-1}(x) - M_{p-1}(x - 1)`.
pub fn bspline_derivative(p: usize, x: f64) -> f64 {
    cardinal_bspline(p - 1, x) - cardinal_bspline(p - 1, x - 1.0)
}

/// Weights `M_p(f + j)` for `j = 0..p` and their derivatives, with `f` the
/// fractional part of the scaled coordinate.
fn spline_weights(p: usize, f: f64, w: &mut [f64], dw: &mut [f64]) {
    w.fill(0.0);
    w[0] = 1.0;
    for k in 2..=p {
        if k == p {
            for j in 0..p {
                let lower = if j == 0 { 0.0 } else { w[j - 1] };
                dw[j] = w[j] - lower;
            }
        }
        let inv = 1.0 / (k - 1) as f64;
        for j in (0..k).rev() {
            let x = f + j as f64;
            let lower = if j == 0 { 0.0 } else { w[j - 1] };
            w[j] = (x * w[j] + (k as f64 - x) * lower) * inv;
        }
    }
}

fn stencils<T: Real>(
    system: &ParticleSystem<T>,
    params: &SpmeParams,
    reuse: Option<Stencils<T>>,
) -> Stencils<T> {
    let p = params.order;
    let m = params.m;
    let scale = m as f64 / params.box_length;
    let positions = system.positions();
    let scratch = || (vec![0.0; p], vec![0.0; p]);
    Stencils::build(
        positions.len(),
        m,
        p,
        reuse,
        scratch,
        |(w, dw), i, start, wt, dwt| {
            for (axis, xa) in positions[i].iter().enumerate() {
                let u = xa.as_f64() * scale;
                let fl = u.floor();
                spline_weights(p, u - fl, w, dw);
                // grid point fl - j carries weight M_p(f + j); store in increasing grid order
                start[axis] = (fl as i64 - (p as i64 - 1)).rem_euclid(m as i64) as usize;
                let o = axis * p;
                for a in 0..p {
                    let j = p - 1 - a;
                    wt[o + a] = T::lit(w[j]);
                    dwt[o + a] = T::lit(dw[j] * scale);
                }
            }
        },
    )
}

/// Reusable engine holding FFT plans and the B-spline factors.
pub struct SpmeEngine<T: Real> {
    params: SpmeParams,
    fft: Fft3d<T>,
    spare_grid: Spare<RealGrid<T>>,
    spare_stencils: Spare<Stencils<T>>,
    bfactors: Vec<f64>,
}

impl<T: Real> SpmeEngine<T> {
    pub fn new(params: SpmeParams) -> Result<Self> {
        Ok(Self {
            spare_grid: Spare::new(),
            spare_stencils: Spare::new(),
            fft: Fft3d::new(params.m)?,
            bfactors: bspline_bfactors(params.order, params.m),
            params,
        })
    }

    pub fn params(&self) -> &SpmeParams {
        &self.params
    }

    pub fn kspace(&self, system: &ParticleSystem<T>) -> Result<(FieldResult<T>, StageTimings)> {
        check_box(system, self.params.box_length)?;
        let prm = &self.params;
        let mut tm = StageTimings::default();

        let clock = Instant::now();
        let st = stencils(system, prm, self.spare_stencils.take());
        tm.precompute = clock.elapsed();

        let clock = Instant::now();
        let grid = mesh::spread(self.spare_grid.zeroed(prm.m), &st, system.charges());
        tm.spread = clock.elapsed();

        let clock = Instant::now();
        let mut spectrum = self.fft.forward(&grid)?;
        tm.fft = clock.elapsed();

        let clock = Instant::now();
        apply_spme_influence(&mut spectrum, prm.xi, prm.box_length, &self.bfactors)?;
        tm.influence = clock.elapsed();

        let clock = Instant::now();
        let conv = self.fft.inverse(spectrum)?;
        tm.ifft = clock.elapsed();

        let clock = Instant::now();
        let scale = T::lit(4.0 * PI / prm.h().powi(3));
        let gathered = mesh::gather(&conv, &st);
        self.spare_grid.put(conv);
        self.spare_stencils.put(st);
        let q = system.charges();
        let potentials: Vec<T> = gathered.iter().map(|g| g.0 * scale).collect();
        let forces = gathered
            .iter()
            .zip(q)
            .map(|(g, &qi)| g.1.map(|v| -v * scale * qi))
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

/// k-space part by smooth particle-mesh Ewald.
pub fn spme_kspace<T: Real>(
    system: &ParticleSystem<T>,
    params: &SpmeParams,
) -> Result<FieldResult<T>> {
    Ok(SpmeEngine::new(*params)?.kspace(system)?.0)
}

/// Full result: cell-list real space within `rc`, particle-mesh k-space and
/// self term.
pub fn spme_total<T: Real>(
    system: &ParticleSystem<T>,
    params: &SpmeParams,
    rc: f64,
) -> Result<FieldResult<T>> {
    Ok(realspace::real_space(system, params.xi, rc)?
        + spme_kspace(system, params)?
        + oracle::self_term(system, params.xi))
}
