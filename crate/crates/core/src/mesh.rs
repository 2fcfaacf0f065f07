//! Separable spreading to and gathering from a periodic grid, shared by the
//! Gaussian-window and B-spline engines.

use std::sync::Mutex;

use rayon::prelude::*;

use crate::kspace::RealGrid;
use crate::scalar::Real;

/// Per-particle tensor-product stencils: for each particle and axis, the first
/// of `p` consecutive (wrapped) grid indices, and `p` weights with the weights
/// of the position derivative.
pub(crate) struct Stencils<T> {
    pub p: usize,
    pub start: Vec<usize>,
    pub w: Vec<T>,
    pub dw: Vec<T>,
    /// Particles in the order they are visited; empty means `0..n`.
    order: Vec<usize>,
}

impl<T: Real> Stencils<T> {
    #[cfg(test)]
    pub fn with_capacity(n: usize, p: usize) -> Self {
        Self {
            p,
            start: Vec::with_capacity(3 * n),
            w: Vec::with_capacity(3 * n * p),
            dw: Vec::with_capacity(3 * n * p),
            order: Vec::new(),
        }
    }

    /// Fills the three axes of every particle in parallel and sorts the
    /// visits on a grid of size `m`. `fill(scratch, i, start, w, dw)` gets the three start indices
    /// and weight slices of length `3p` laid out axis by axis. The vectors of
    /// `reuse` are recycled.
    pub fn build<S>(
        n: usize,
        m: usize,
        p: usize,
        reuse: Option<Self>,
        init: impl Fn() -> S + Sync + Send,
        fill: impl Fn(&mut S, usize, &mut [usize], &mut [T], &mut [T]) + Sync + Send,
    ) -> Self {
        let (mut start, mut w, mut dw, order) = match reuse {
            Some(st) => (st.start, st.w, st.dw, st.order),
            None => Default::default(),
        };
        start.resize(3 * n, 0);
        w.resize(3 * n * p, T::zero());
        dw.resize(3 * n * p, T::zero());
        start
            .par_chunks_mut(3)
            .zip(w.par_chunks_mut(3 * p))
            .zip(dw.par_chunks_mut(3 * p))
            .enumerate()
            .for_each_init(init, |scratch, (i, ((s, w), dw))| {
                fill(scratch, i, s, w, dw)
            });
        let mut st = Self {
            p,
            start,
            w,
            dw,
            order,
        };
        st.sort_visits(m);
        st
    }

    /// Visits particles in order of the (x, y) corner of their stencil so
    /// that consecutive particles touch nearby grid rows. Counting sort over
    /// the `m^2` corners, stable in the particle index.
    pub fn sort_visits(&mut self, m: usize) {
        let corner = |s: &[usize]| s[0] * m + s[1];
        let mut first = vec![0usize; m * m + 1];
        for s in self.start.chunks_exact(3) {
            first[corner(s) + 1] += 1;
        }
        for c in 0..m * m {
            first[c + 1] += first[c];
        }
        self.order.clear();
        self.order.resize(self.len(), 0);
        for (i, s) in self.start.chunks_exact(3).enumerate() {
            let slot = &mut first[corner(s)];
            self.order[*slot] = i;
            *slot += 1;
        }
    }

    #[inline]
    fn particle(&self, j: usize) -> usize {
        if self.order.is_empty() {
            j
        } else {
            self.order[j]
        }
    }

    pub fn len(&self) -> usize {
        self.start.len() / 3
    }

    /// Start indices and weight ranges of the three axes of particle `i`.
    #[inline]
    fn axes(&self, i: usize) -> ([usize; 3], [std::ops::Range<usize>; 3]) {
        let s = &self.start[3 * i..3 * i + 3];
        let o = 3 * i * self.p;
        let p = self.p;
        (
            [s[0], s[1], s[2]],
            [o..o + p, o + p..o + 2 * p, o + 2 * p..o + 3 * p],
        )
    }
}

#[inline]
fn next(i: usize, m: usize) -> usize {
    if i + 1 == m {
        0
    } else {
        i + 1
    }
}

/// Calls `$f::<T, Z>` with the z width fixed at compile time for the common
/// supports, or `Z = 0` (runtime width) otherwise.
macro_rules! with_width {
    ($p:expr, $f:ident::<$t:ty>($($arg:expr),*)) => {
        match $p {
            4 => $f::<$t, 4>($($arg),*),
            5 => $f::<$t, 5>($($arg),*),
            6 => $f::<$t, 6>($($arg),*),
            7 => $f::<$t, 7>($($arg),*),
            8 => $f::<$t, 8>($($arg),*),
            9 => $f::<$t, 9>($($arg),*),
            10 => $f::<$t, 10>($($arg),*),
            11 => $f::<$t, 11>($($arg),*),
            12 => $f::<$t, 12>($($arg),*),
            14 => $f::<$t, 14>($($arg),*),
            16 => $f::<$t, 16>($($arg),*),
            _ => $f::<$t, 0>($($arg),*),
        }
    };
}

fn spread_range<T: Real, const Z: usize>(
    grid: &mut [T],
    m: usize,
    st: &Stencils<T>,
    coef: &[T],
    range: std::ops::Range<usize>,
) {
    let p = st.p;
    for i in range.map(|j| st.particle(j)) {
        let ([sx, sy, sz], [rx, ry, rz]) = st.axes(i);
        let (wx, wy, wz) = (&st.w[rx], &st.w[ry], &st.w[rz]);
        let wz_fixed: &[T; Z] = wz[..Z].try_into().unwrap();
        let z_contiguous = sz + p <= m;
        let mut ix = sx;
        for &wxa in wx {
            let wa = coef[i] * wxa;
            let mut iy = sy;
            for &wyb in wy {
                let wab = wa * wyb;
                let row = &mut grid[(ix * m + iy) * m..(ix * m + iy + 1) * m];
                if Z > 0 && z_contiguous {
                    let seg: &mut [T; Z] = (&mut row[sz..sz + Z]).try_into().unwrap();
                    for c in 0..Z {
                        seg[c] = seg[c] + wab * wz_fixed[c];
                    }
                } else if z_contiguous {
                    for (g, &w) in row[sz..sz + p].iter_mut().zip(wz) {
                        *g = *g + wab * w;
                    }
                } else {
                    let mut iz = sz;
                    for &w in wz {
                        row[iz] = row[iz] + wab * w;
                        iz = next(iz, m);
                    }
                }
                iy = next(iy, m);
            }
            ix = next(ix, m);
        }
    }
}

/// Buffer kept by an engine between evaluations. A fresh multi-megabyte
/// allocation costs page faults on first touch.
pub(crate) struct Spare<X>(Mutex<Option<X>>);

impl<X> Spare<X> {
    pub fn new() -> Self {
        Self(Mutex::new(None))
    }

    pub fn take(&self) -> Option<X> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).take()
    }

    pub fn put(&self, x: X) {
        *self.0.lock().unwrap_or_else(|e| e.into_inner()) = Some(x);
    }
}

impl<T: Real> Spare<RealGrid<T>> {
    /// A zeroed grid of size `m`.
    pub fn zeroed(&self, m: usize) -> RealGrid<T> {
        match self.take() {
            Some(mut g) if g.size() == m => {
                g.data.fill(T::zero());
                g
            }
            _ => RealGrid::zeros(m),
        }
    }
}

/// Adds `sum_i coef_i w_i(x)` to `grid`. With several worker threads each one
/// fills a private grid and the grids are summed in a fixed order, so the
/// result does not depend on scheduling.
pub(crate) fn spread<T: Real>(mut grid: RealGrid<T>, st: &Stencils<T>, coef: &[T]) -> RealGrid<T> {
    let m = grid.size();
    let n = st.len();
    let chunks = rayon::current_num_threads().clamp(1, n.max(1));
    if chunks == 1 {
        with_width!(st.p, spread_range::<T>(&mut grid.data, m, st, coef, 0..n));
        return grid;
    }
    let size = n.div_ceil(chunks);
    let partial: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = vec![T::zero(); m * m * m];
            let range = c * size..((c + 1) * size).min(n);
            with_width!(st.p, spread_range::<T>(&mut local, m, st, coef, range));
            local
        })
        .collect();
    for local in partial {
        for (g, v) in grid.data.iter_mut().zip(local) {
            *g = *g + v;
        }
    }
    grid
}

/// Value and gradient contractions of particle `i`; `rows` holds `2p` partial sums.
fn gather_one<T: Real, const Z: usize>(
    grid: &[T],
    m: usize,
    st: &Stencils<T>,
    rows: &mut [T],
    i: usize,
) -> (T, [T; 3]) {
    let p = st.p;
    let ([sx, sy, sz], [rx, ry, rz]) = st.axes(i);
    let (wx, wy, wz) = (&st.w[rx.clone()], &st.w[ry.clone()], &st.w[rz.clone()]);
    let (dx, dy, dz) = (&st.dw[rx], &st.dw[ry], &st.dw[rz]);
    let wz_fixed: &[T; Z] = wz[..Z].try_into().unwrap();
    let dz_fixed: &[T; Z] = dz[..Z].try_into().unwrap();
    let z_contiguous = sz + p <= m;
    let (s0, s1) = rows.split_at_mut(p);
    let mut val = T::zero();
    let mut grad = [T::zero(); 3];
    let mut ix = sx;
    for (&wxa, &dxa) in wx.iter().zip(dx) {
        // contract z along each row of this x plane, then y
        let mut iy = sy;
        for b in 0..p {
            let row = &grid[(ix * m + iy) * m..(ix * m + iy + 1) * m];
            let (mut a0, mut a1) = (T::zero(), T::zero());
            if Z > 0 && z_contiguous {
                let seg: &[T; Z] = row[sz..sz + Z].try_into().unwrap();
                for c in 0..Z {
                    a0 = a0 + seg[c] * wz_fixed[c];
                    a1 = a1 + seg[c] * dz_fixed[c];
                }
            } else if z_contiguous {
                for ((&g, &w), &d) in row[sz..sz + p].iter().zip(wz).zip(dz) {
                    a0 = a0 + g * w;
                    a1 = a1 + g * d;
                }
            } else {
                let mut iz = sz;
                for (&w, &d) in wz.iter().zip(dz) {
                    a0 = a0 + row[iz] * w;
                    a1 = a1 + row[iz] * d;
                    iz = next(iz, m);
                }
            }
            s0[b] = a0;
            s1[b] = a1;
            iy = next(iy, m);
        }
        let (mut t0, mut ty, mut tz) = (T::zero(), T::zero(), T::zero());
        for b in 0..p {
            t0 = t0 + wy[b] * s0[b];
            ty = ty + dy[b] * s0[b];
            tz = tz + wy[b] * s1[b];
        }
        val = val + wxa * t0;
        grad[0] = grad[0] + dxa * t0;
        grad[1] = grad[1] + wxa * ty;
        grad[2] = grad[2] + wxa * tz;
        ix = next(ix, m);
    }
    (val, grad)
}

/// For each particle: `sum_x grid(x) w_i(x)` and its three derivative
/// contractions `sum_x grid(x) dw_{i,a}(x)`.
pub(crate) fn gather<T: Real>(grid: &RealGrid<T>, st: &Stencils<T>) -> Vec<(T, [T; 3])> {
    let m = grid.size();
    let p = st.p;
    let visited: Vec<(T, [T; 3])> = (0..st.len())
        .into_par_iter()
        .map_init(
            || vec![T::zero(); 2 * p],
            |rows, j| with_width!(p, gather_one::<T>(&grid.data, m, st, rows, st.particle(j))),
        )
        .collect();
    if st.order.is_empty() {
        return visited;
    }
    let mut out = vec![(T::zero(), [T::zero(); 3]); visited.len()];
    for (&i, v) in st.order.iter().zip(visited) {
        out[i] = v;
    }
    out
}
