//! Real-space part of the Ewald sum for the fast methods, using cell lists.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::FieldResult;
use crate::oracle::{self, EwaldSplit};
use crate::scalar::{norm_sqr, Real};
use crate::system::{min_image_displacement, ParticleSystem};

/// Full (both directions) minimum-image neighbor lists in compressed form.
#[derive(Clone, Debug)]
pub struct NeighborList {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    cutoff: f64,
}

impl NeighborList {
    /// Builds the lists with a cell grid of edge at least `cutoff`;
    /// `cutoff` may not exceed half the box.
    pub fn build<T: Real>(system: &ParticleSystem<T>, cutoff: f64) -> Result<Self> {
        let l = system.box_length();
        let lf = l.as_f64();
        if !(cutoff > 0.0) || cutoff > 0.5 * lf {
            return Err(Error::InvalidParameter(format!(
                "neighbor cutoff {cutoff} must lie in (0, L/2] with L = {lf}"
            )));
        }
        let pos = system.positions();
        let nc = (lf / cutoff).floor() as usize;
        let rc2 = T::lit(cutoff * cutoff);
        let lists: Vec<Vec<u32>> = if nc < 3 {
            (0..pos.len())
                .into_par_iter()
                .map(|i| {
                    (0..pos.len())
                        .filter(|&j| {
                            j != i && norm_sqr(&min_image_displacement(&pos[i], &pos[j], l)) < rc2
                        })
                        .map(|j| j as u32)
                        .collect()
                })
                .collect()
        } else {
            let cell_of = |p: &[T; 3]| -> [usize; 3] {
                p.map(|x| ((x.as_f64() / lf * nc as f64) as usize).min(nc - 1))
            };
            let mut cells: Vec<Vec<u32>> = vec![Vec::new(); nc * nc * nc];
            for (i, p) in pos.iter().enumerate() {
                let c = cell_of(p);
                cells[(c[0] * nc + c[1]) * nc + c[2]].push(i as u32);
            }
            (0..pos.len())
                .into_par_iter()
                .map(|i| {
                    let c = cell_of(&pos[i]);
                    let mut out = Vec::new();
                    for dx in [nc - 1, 0, 1] {
                        for dy in [nc - 1, 0, 1] {
                            for dz in [nc - 1, 0, 1] {
                                let cx = (c[0] + dx) % nc;
                                let cy = (c[1] + dy) % nc;
                                let cz = (c[2] + dz) % nc;
                                for &j in &cells[(cx * nc + cy) * nc + cz] {
                                    let ju = j as usize;
                                    if ju != i
                                        && norm_sqr(&min_image_displacement(&pos[i], &pos[ju], l))
                                            < rc2
                                    {
                                        out.push(j);
                                    }
                                }
                            }
                        }
                    }
                    out.sort_unstable();
                    out
                })
                .collect()
        };
        let mut offsets = Vec::with_capacity(pos.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for list in lists {
            neighbors.extend_from_slice(&list);
            offsets.push(neighbors.len());
        }
        Ok(Self {
            offsets,
            neighbors,
            cutoff,
        })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Number of stored (directed) pairs.
    pub fn pair_count(&self) -> usize {
        self.neighbors.len()
    }
}

/// Real-space Ewald part over a prebuilt neighbor list.
pub fn real_space_with_list<T: Real>(
    system: &ParticleSystem<T>,
    xi: f64,
    list: &NeighborList,
) -> FieldResult<T> {
    let l = system.box_length();
    let pos = system.positions();
    let q = system.charges();
    let xi_t = T::lit(xi);
    let gauss_coef = T::lit(2.0 * xi / PI.sqrt());
    let per: Vec<(T, [T; 3])> = (0..system.len())
        .into_par_iter()
        .map(|i| {
            let mut phi = T::zero();
            let mut f = [T::zero(); 3];
            for &j in list.neighbors(i) {
                let j = j as usize;
                let d = min_image_displacement(&pos[i], &pos[j], l);
                let r2 = norm_sqr(&d);
                let r = r2.sqrt();
                let erfc = (xi_t * r).erfc();
                phi = phi + q[j] * erfc / r;
                let scal = q[j] * (gauss_coef * (-xi_t * xi_t * r2).exp() + erfc / r) / r2;
                for k in 0..3 {
                    f[k] = f[k] + scal * d[k];
                }
            }
            (phi, f.map(|c| c * q[i]))
        })
        .collect();
    let potentials: Vec<T> = per.iter().map(|p| p.0).collect();
    let energy = FieldResult::energy_from_potentials(&potentials, system.charges());
    FieldResult {
        potentials,
        forces: per.into_iter().map(|p| p.1).collect(),
        energy,
    }
}

/// Real-space Ewald part: cell lists up to half the box, the image sum of the
/// oracle beyond.
pub fn real_space<T: Real>(system: &ParticleSystem<T>, xi: f64, rc: f64) -> Result<FieldResult<T>> {
    if rc <= 0.5 * system.box_length().as_f64() {
        let list = NeighborList::build(system, rc)?;
        Ok(real_space_with_list(system, xi, &list))
    } else {
        oracle::real_space_sum(system, &EwaldSplit::new(xi, rc, 0)?)
    }
}
