//! Periodic 3D grids, real-to-complex FFTs and the k-space influence functions.
//!
//! Grids are cubic with `M` points per dimension and row-major layout
//! `(ix * M + iy) * M + iz`. The spectrum keeps only `kz in 0..=M/2`; the
//! other half follows from Hermitian symmetry.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Real-valued periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RealGrid<T> {
    m: usize,
    pub data: Vec<T>,
}

impl<T: Real> RealGrid<T> {
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            data: vec![T::zero(); m * m * m],
        }
    }

    pub fn from_vec(m: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != m * m * m {
            return Err(Error::GridMismatch {
                expected: m * m * m,
                got: data.len(),
            });
        }
        Ok(Self { m, data })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.m + iy) * self.m + iz
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> T {
        self.data[self.index(ix, iy, iz)]
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }
}

/// Half spectrum of a real grid: `M x M x (M/2 + 1)` complex coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid<T> {
    m: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> SpectralGrid<T> {
    pub fn size(&self) -> usize {
        self.m
    }

    /// Number of stored `kz` planes, `M/2 + 1`.
    pub fn half(&self) -> usize {
        self.m / 2 + 1
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, kz: usize) -> usize {
        (ix * self.m + iy) * self.half() + kz
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize, kz: usize) -> Complex<T> {
        self.data[self.index(ix, iy, kz)]
    }

    /// Multiplicity of a stored `kz` plane in the full spectrum.
    #[inline]
    pub fn kz_weight(&self, kz: usize) -> f64 {
        if kz == 0 || kz == self.m / 2 {
            1.0
        } else {
            2.0
        }
    }

    /// `sum |X(k)|^2` over the full spectrum.
    pub fn power(&self) -> f64 {
        let h = self.half();
        self.data
            .iter()
            .enumerate()
            .map(|(i, c)| self.kz_weight(i % h) * c.norm_sqr().as_f64())
            .sum()
    }
}

/// Signed wave index of FFT bin `i` on a grid of `m` points.
#[inline]
pub fn wave_index(i: usize, m: usize) -> i64 {
    if i < m.div_ceil(2) {
        i as i64
    } else {
        i as i64 - m as i64
    }
}

/// Forward and inverse 3D transforms for one grid size.
pub struct Fft3d<T: Real> {
    m: usize,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> Fft3d<T> {
    /// Plans transforms for an `m^3` grid; `m` must be even and positive.
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 || m % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid size must be even and >= 2, got {m}"
            )));
        }
        let mut real = RealFftPlanner::<T>::new();
        let mut complex = FftPlanner::<T>::new();
        Ok(Self {
            m,
            r2c: real.plan_fft_forward(m),
            c2r: real.plan_fft_inverse(m),
            forward: complex.plan_fft_forward(m),
            inverse: complex.plan_fft_inverse(m),
        })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// Unnormalized forward transform `X(k) = sum_x f(x) e^{-2 pi i k x / M}`.
    pub fn forward(&self, grid: &RealGrid<T>) -> Result<SpectralGrid<T>> {
        let m = self.m;
        if grid.m != m {
            return Err(Error::GridMismatch {
                expected: m,
                got: grid.m,
            });
        }
        let h = m / 2 + 1;
        let mut data = vec![Complex::new(T::zero(), T::zero()); m * m * h];
        data.par_chunks_mut(m * h)
            .zip(grid.data.par_chunks(m * m))
            .for_each(|(plane, input)| {
                let mut line = self.r2c.make_input_vec();
                let mut scratch = self.r2c.make_scratch_vec();
                for iy in 0..m {
                    line.copy_from_slice(&input[iy * m..(iy + 1) * m]);
                    self.r2c
                        .process_with_scratch(
                            &mut line,
                            &mut plane[iy * h..(iy + 1) * h],
                            &mut scratch,
                        )
                        .expect("buffer sizes match the plan");
                }
                transform_y(plane, m, h, &*self.forward);
            });
        transform_x(&mut data, m, h, &*self.forward);
        Ok(SpectralGrid { m, data })
    }

    /// Inverse transform including the `1/M^3` normalization.
    pub fn inverse(&self, mut spectrum: SpectralGrid<T>) -> Result<RealGrid<T>> {
        let m = self.m;
        if spectrum.m != m {
            return Err(Error::GridMismatch {
                expected: m,
                got: spectrum.m,
            });
        }
        let h = m / 2 + 1;
        transform_x(&mut spectrum.data, m, h, &*self.inverse);
        let scale = T::one() / T::from_count(m * m * m);
        let mut out = vec![T::zero(); m * m * m];
        out.par_chunks_mut(m * m)
            .zip(spectrum.data.par_chunks_mut(m * h))
            .for_each(|(output, plane)| {
                transform_y(plane, m, h, &*self.inverse);
                let mut scratch = self.c2r.make_scratch_vec();
                for iy in 0..m {
                    let line = &mut plane[iy * h..(iy + 1) * h];
                    // the transform of a real grid has real end points
                    line[0].im = T::zero();
                    line[h - 1].im = T::zero();
                    let dst = &mut output[iy * m..(iy + 1) * m];
                    self.c2r
                        .process_with_scratch(line, dst, &mut scratch)
                        .expect("buffer sizes match the plan");
                    dst.iter_mut().for_each(|v| *v = *v * scale);
                }
            });
        Ok(RealGrid { m, data: out })
    }
}

// Rows per block in the line transposes.
const BLOCK: usize = 8;

// Transforms every y line of one x plane (`m` rows of `h` values).
fn transform_y<T: Real>(plane: &mut [Complex<T>], m: usize, h: usize, fft: &dyn Fft<T>) {
    let mut buf = vec![Complex::new(T::zero(), T::zero()); m * h];
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    for y0 in (0..m).step_by(BLOCK) {
        let y1 = (y0 + BLOCK).min(m);
        for kz in 0..h {
            for iy in y0..y1 {
                buf[kz * m + iy] = plane[iy * h + kz];
            }
        }
    }
    fft.process_with_scratch(&mut buf, &mut scratch);
    for y0 in (0..m).step_by(BLOCK) {
        let y1 = (y0 + BLOCK).min(m);
        for kz in 0..h {
            for iy in y0..y1 {
                plane[iy * h + kz] = buf[kz * m + iy];
            }
        }
    }
}

#[derive(Clone, Copy)]
struct SharedMut<T>(*mut T);
// Workers write disjoint elements only.
unsafe impl<T: Send> Send for SharedMut<T> {}
unsafe impl<T: Send> Sync for SharedMut<T> {}

impl<T> SharedMut<T> {
    fn at(&self, offset: usize) -> *mut T {
        // SAFETY: callers stay inside the allocation the pointer came from
        unsafe { self.0.add(offset) }
    }
}

// Transforms every x line. The `(ix, iy)` rows for one `iy` are gathered,
// transformed and written back by one worker; rows of different `iy` do not
// overlap.
fn transform_x<T: Real>(data: &mut [Complex<T>], m: usize, h: usize, fft: &dyn Fft<T>) {
    assert_eq!(data.len(), m * m * h);
    let base = SharedMut(data.as_mut_ptr());
    let zero = Complex::new(T::zero(), T::zero());
    (0..m).into_par_iter().for_each_init(
        || (vec![zero; m * h], vec![zero; fft.get_inplace_scratch_len()]),
        |(buf, scratch), iy| {
            let at = |ix: usize, kz: usize| (ix * m + iy) * h + kz;
            for x0 in (0..m).step_by(BLOCK) {
                let x1 = (x0 + BLOCK).min(m);
                for kz in 0..h {
                    for ix in x0..x1 {
                        // SAFETY: `at` stays inside `data` and row (ix, iy) belongs to this iy only
                        buf[kz * m + ix] = unsafe { *base.at(at(ix, kz)) };
                    }
                }
            }
            fft.process_with_scratch(buf, scratch);
            for x0 in (0..m).step_by(BLOCK) {
                let x1 = (x0 + BLOCK).min(m);
                for kz in 0..h {
                    for ix in x0..x1 {
                        // SAFETY: as above
                        unsafe { *base.at(at(ix, kz)) = buf[kz * m + ix] };
                    }
                }
            }
        },
    );
}

// Multiplies every coefficient by `scale(s) * axis(nx) * axis(ny) * axis(nz)`
// where `s = |n|^2` and the per-axis factors come from `axis`.
fn apply_separable<T: Real>(
    spectrum: &mut SpectralGrid<T>,
    axis: impl Fn(i64) -> f64,
    scale: impl Fn(i64) -> f64 + Sync,
) {
    let m = spectrum.m;
    let h = spectrum.half();
    let fa: Vec<T> = (0..m).map(|i| T::lit(axis(wave_index(i, m)))).collect();
    let fz: Vec<T> = (0..h).map(|i| T::lit(axis(wave_index(i, m)))).collect();
    let n2: Vec<i64> = (0..m).map(|i| wave_index(i, m).pow(2)).collect();
    // 1/|n|^2 style factors, indexed by |n|^2 up to 3 (M/2)^2
    let table: Vec<T> = (0..=3 * (m as i64 / 2).pow(2))
        .map(|s| T::lit(scale(s)))
        .collect();
    spectrum
        .data
        .par_chunks_mut(m * h)
        .enumerate()
        .for_each(|(ix, plane)| {
            for iy in 0..m {
                let fxy = fa[ix] * fa[iy];
                let sxy = n2[ix] + n2[iy];
                for kz in 0..h {
                    let s = (sxy + n2[kz]) as usize;
                    let c = &mut plane[iy * h + kz];
                    *c = *c * (fxy * fz[kz] * table[s]);
                }
            }
        });
}

/// Multiplies by the Gaussian-window influence function
/// `e^{-(1 - eta) k^2 / (4 xi^2)} / k^2`, `k = 2 pi n / L`, zeroing `k = 0`.
pub fn apply_se_influence<T: Real>(
    spectrum: &mut SpectralGrid<T>,
    xi: f64,
    eta: f64,
    box_length: f64,
) {
    let unit = 2.0 * PI / box_length;
    let a = (1.0 - eta) * unit * unit / (4.0 * xi * xi);
    let gauss = move |n: i64| (-a * (n * n) as f64).exp();
    apply_separable(spectrum, gauss, move |s| {
        if s == 0 {
            0.0
        } else {
            1.0 / (unit * unit * s as f64)
        }
    });
}

/// Cardinal B-spline `M_p(x)` of order `p`, supported on `[0, p]`.
pub fn cardinal_bspline(p: usize, x: f64) -> f64 {
    if x < 0.0 || x >= p as f64 {
        return 0.0;
    }
    if p == 1 {
        return 1.0;
    }
    if p == 2 {
        return 1.0 - (x - 1.0).abs();
    }
    let k = (p - 1) as f64;
    x / k * cardinal_bspline(p - 1, x) + (p as f64 - x) / k * cardinal_bspline(p - 1, x - 1.0)
}

/// `|b(n)|^2` for `n = 0..M`: the squared Euler exponential spline factors
/// that undo the B-spline interpolation. Odd orders have a zero of the
/// denominator at `n = M/2`; the factor is set to zero there.
pub fn bspline_bfactors(p: usize, m: usize) -> Vec<f64> {
    let weights: Vec<f64> = (0..p.saturating_sub(1))
        .map(|l| cardinal_bspline(p, l as f64 + 1.0))
        .collect();
    (0..m)
        .map(|n| {
            let mut s = Complex::new(0.0, 0.0);
            for (l, &w) in weights.iter().enumerate() {
                let arg = 2.0 * PI * (n * l) as f64 / m as f64;
                s += Complex::from_polar(w, arg);
            }
            let d = s.norm_sqr();
            if d < 1e-14 {
                0.0
            } else {
                1.0 / d
            }
        })
        .collect()
}

/// Multiplies by the particle-mesh influence function
/// `B(n) e^{-k^2 / (4 xi^2)} / k^2`, zeroing `k = 0`.
pub fn apply_spme_influence<T: Real>(
    spectrum: &mut SpectralGrid<T>,
    xi: f64,
    box_length: f64,
    bfactors: &[f64],
) -> Result<()> {
    let m = spectrum.m;
    if bfactors.len() != m {
        return Err(Error::GridMismatch {
            expected: m,
            got: bfactors.len(),
        });
    }
    let unit = 2.0 * PI / box_length;
    let a = unit * unit / (4.0 * xi * xi);
    let idx = move |n: i64| n.rem_euclid(m as i64) as usize;
    let axis = |n: i64| bfactors[idx(n)] * (-a * (n * n) as f64).exp();
    apply_separable(spectrum, axis, move |s| {
        if s == 0 {
            0.0
        } else {
            1.0 / (unit * unit * s as f64)
        }
    });
    Ok(())
}
