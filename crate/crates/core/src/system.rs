//! Particle systems in a cubic periodic box: construction, synthetic test
//! systems, periodic geometry and the plain-text particle file format.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::{Real, Vec3};

/// N point charges in the periodic box `[0, L)^3`.
///
/// Positions are wrapped into the primary box on construction, so callers
/// never observe periodic images. The system is immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem<T> {
    box_length: T,
    positions: Vec<Vec3<T>>,
    charges: Vec<T>,
}

impl<T: Real> ParticleSystem<T> {
    /// Builds a charge-neutral system. Fails on length mismatch, a
    /// non-positive box, non-finite input or a net charge above the
    /// neutrality tolerance (see [`ParticleSystem::neutrality_tolerance`]).
    pub fn new(box_length: T, positions: Vec<Vec3<T>>, charges: Vec<T>) -> Result<Self> {
        let system = Self::build(box_length, positions, charges)?;
        let total = system.total_charge().as_f64();
        if total.abs() > system.neutrality_tolerance() {
            return Err(Error::NotNeutral(total));
        }
        Ok(system)
    }

    /// Same as [`ParticleSystem::new`] but only warns when the system carries
    /// a net charge. The zero wave mode is still discarded by every engine,
    /// which amounts to a uniform neutralizing background.
    pub fn new_allow_charged(
        box_length: T,
        positions: Vec<Vec3<T>>,
        charges: Vec<T>,
    ) -> Result<Self> {
        let system = Self::build(box_length, positions, charges)?;
        let total = system.total_charge().as_f64();
        if total.abs() > system.neutrality_tolerance() {
            log::warn!("system is not charge neutral: total charge {total:e}");
        }
        Ok(system)
    }

    fn build(box_length: T, mut positions: Vec<Vec3<T>>, charges: Vec<T>) -> Result<Self> {
        if !(box_length > T::zero()) || !box_length.is_finite() {
            return Err(Error::InvalidBoxLength(box_length.as_f64()));
        }
        if positions.len() != charges.len() {
            return Err(Error::LengthMismatch {
                what: "charges",
                got: charges.len(),
                expected: positions.len(),
            });
        }
        if charges.iter().any(|q| !q.is_finite()) {
            return Err(Error::NonFinite("charges"));
        }
        for p in positions.iter_mut() {
            for x in p.iter_mut() {
                if !x.is_finite() {
                    return Err(Error::NonFinite("positions"));
                }
                *x = wrap(*x, box_length);
            }
        }
        Ok(Self {
            box_length,
            positions,
            charges,
        })
    }

    pub fn len(&self) -> usize {
        self.charges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charges.is_empty()
    }

    pub fn box_length(&self) -> T {
        self.box_length
    }

    pub fn positions(&self) -> &[Vec3<T>] {
        &self.positions
    }

    pub fn charges(&self) -> &[T] {
        &self.charges
    }

    pub fn volume(&self) -> T {
        self.box_length * self.box_length * self.box_length
    }

    pub fn total_charge(&self) -> T {
        self.charges.iter().copied().sum()
    }

    /// `Q = sum q_n^2`, the charge measure entering every error estimate.
    pub fn charge_sq_sum(&self) -> f64 {
        self.charges.iter().map(|q| q.as_f64() * q.as_f64()).sum()
    }

    /// Largest admissible |sum q| for a neutral system: `1e-12 * sqrt(Q)`,
    /// relaxed to the scalar's rounding level for single precision.
    pub fn neutrality_tolerance(&self) -> f64 {
        let eps = T::epsilon().as_f64() * 4.0 * (self.len().max(1) as f64).sqrt();
        self.charge_sq_sum().sqrt() * eps.max(1e-12)
    }

    pub fn density(&self) -> f64 {
        self.len() as f64 / self.volume().as_f64()
    }

    /// A new system made of the particles at `indices`. The result may carry
    /// a net charge; use [`ParticleSystem::neutral_subset`] for a neutral one.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            box_length: self.box_length,
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            charges: indices.iter().map(|&i| self.charges[i]).collect(),
        }
    }

    /// Picks the first `n/2` positive and the first `n/2` negative particles,
    /// keeping their original order. Fails if either sign runs out or the
    /// picked charges do not cancel.
    pub fn neutral_subset(&self, n: usize) -> Result<Self> {
        if n == 0 || n % 2 == 1 {
            return Err(Error::OddParticleCount(n));
        }
        let pos = self
            .charges
            .iter()
            .enumerate()
            .filter(|(_, q)| **q > T::zero())
            .map(|(i, _)| i);
        let neg = self
            .charges
            .iter()
            .enumerate()
            .filter(|(_, q)| **q < T::zero())
            .map(|(i, _)| i);
        let mut idx: Vec<usize> = pos.take(n / 2).chain(neg.take(n / 2)).collect();
        if idx.len() != n {
            return Err(Error::InvalidParameter(format!(
                "cannot pick {n} balanced charges from {} particles",
                self.len()
            )));
        }
        idx.sort_unstable();
        let sub = self.subset(&idx);
        Self::new(sub.box_length, sub.positions, sub.charges)
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> ParticleSystem<U> {
        let c = |x: T| U::lit(x.as_f64());
        ParticleSystem {
            box_length: c(self.box_length),
            positions: self
                .positions
                .iter()
                .map(|p| [c(p[0]), c(p[1]), c(p[2])])
                .collect(),
            charges: self.charges.iter().map(|&q| c(q)).collect(),
        }
    }

    /// Rigid translation of every particle, wrapped back into the box.
    pub fn translated(&self, shift: Vec3<T>) -> Self {
        let l = self.box_length;
        Self {
            box_length: l,
            positions: self
                .positions
                .iter()
                .map(|p| {
                    [
                        wrap(p[0] + shift[0], l),
                        wrap(p[1] + shift[1], l),
                        wrap(p[2] + shift[2], l),
                    ]
                })
                .collect(),
            charges: self.charges.clone(),
        }
    }

    /// Copy of the system with particle `index` moved to `position` (wrapped).
    pub fn with_position(&self, index: usize, position: Vec3<T>) -> Self {
        let mut out = self.clone();
        let l = self.box_length;
        out.positions[index] = [
            wrap(position[0], l),
            wrap(position[1], l),
            wrap(position[2], l),
        ];
        out
    }
}

/// Wraps a coordinate into `[0, L)`.
#[inline]
pub fn wrap<T: Real>(x: T, box_length: T) -> T {
    let w = x - box_length * (x / box_length).floor();
    if w >= box_length || w < T::zero() {
        T::zero()
    } else {
        w
    }
}

/// Displacement `a - b` under the minimum image convention, with each
/// component in `[-L/2, L/2)`.
#[inline]
pub fn min_image_displacement<T: Real>(a: &Vec3<T>, b: &Vec3<T>, box_length: T) -> Vec3<T> {
    let half = T::lit(0.5);
    let mut d = [T::zero(); 3];
    for k in 0..3 {
        let x = a[k] - b[k];
        d[k] = x - box_length * (x / box_length + half).floor();
    }
    d
}

/// Synthetic test geometries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SystemKind {
    /// Independent uniformly distributed positions.
    Uniform,
    /// Two charged walls and two compact clouds of opposite sign.
    CloudWall,
    /// Two dense clouds of opposite charge.
    IsolatedClouds,
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "uniform" => Ok(Self::Uniform),
            "cloud_wall" | "cloudwall" => Ok(Self::CloudWall),
            "isolated_clouds" | "isolated" | "clouds" => Ok(Self::IsolatedClouds),
            other => Err(Error::InvalidParameter(format!(
                "unknown system kind '{other}'"
            ))),
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::CloudWall => "cloud_wall",
            Self::IsolatedClouds => "isolated_clouds",
        })
    }
}

/// Population split of the cloud-wall geometry for `n` particles: each wall
/// holds four times as many particles as each cloud. Any remainder (when `n`
/// is not a multiple of ten) is shared evenly by the two walls.
pub fn cloud_wall_populations(n: usize) -> (usize, usize) {
    let cloud = n / 10;
    let wall = (n - 2 * cloud) / 2;
    (cloud, wall)
}

/// Generates a charge-neutral test system with unit charges, half positive and
/// half negative. Deterministic for fixed `(kind, n, L, seed)`.
///
/// * `Uniform`: i.i.d. uniform positions, charges alternate `+1, -1`.
/// * `CloudWall`: a positive wall (thin slab normal to x at `L/4`) and a
///   negative wall at `3L/4`, each holding four times the population of a
///   cloud; a negative Gaussian cloud sits just inside the positive wall and a
///   positive one just inside the negative wall. Reconstructed from the
///   qualitative description only: it reproduces the strong density contrast,
///   not any particular published coordinates.
/// * `IsolatedClouds`: two Gaussian blobs of width `0.05 L` at `(L/4, L/2, L/2)`
///   (positive) and `(3L/4, L/2, L/2)` (negative).
pub fn generate_system<T: Real>(
    kind: SystemKind,
    n: usize,
    box_length: T,
    seed: u64,
) -> Result<ParticleSystem<T>> {
    if n == 0 || n % 2 == 1 {
        return Err(Error::OddParticleCount(n));
    }
    let l = box_length.as_f64();
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidBoxLength(l));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut q: Vec<f64> = Vec::with_capacity(n);

    let mut blob = |rng: &mut ChaCha8Rng,
                    count: usize,
                    center: [f64; 3],
                    sigma: [f64; 3],
                    charge: f64,
                    pos: &mut Vec<[f64; 3]>| {
        for _ in 0..count {
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = if sigma[k].is_infinite() {
                    rng.random::<f64>() * l
                } else {
                    let d = Normal::new(center[k], sigma[k]).expect("positive width");
                    d.sample(rng)
                };
            }
            pos.push(p);
            q.push(charge);
        }
    };

    match kind {
        SystemKind::Uniform => {
            for i in 0..n {
                pos.push([
                    rng.random::<f64>() * l,
                    rng.random::<f64>() * l,
                    rng.random::<f64>() * l,
                ]);
                q.push(if i % 2 == 0 { 1.0 } else { -1.0 });
            }
        }
        SystemKind::CloudWall => {
            let (cloud, wall) = cloud_wall_populations(n);
            let inf = f64::INFINITY;
            let thin = 0.005 * l;
            blob(
                &mut rng,
                wall,
                [0.25 * l, 0.0, 0.0],
                [thin, inf, inf],
                1.0,
                &mut pos,
            );
            blob(
                &mut rng,
                wall,
                [0.75 * l, 0.0, 0.0],
                [thin, inf, inf],
                -1.0,
                &mut pos,
            );
            let s = 0.05 * l;
            blob(
                &mut rng,
                cloud,
                [0.4 * l, 0.5 * l, 0.5 * l],
                [s; 3],
                -1.0,
                &mut pos,
            );
            blob(
                &mut rng,
                cloud,
                [0.6 * l, 0.5 * l, 0.5 * l],
                [s; 3],
                1.0,
                &mut pos,
            );
        }
        SystemKind::IsolatedClouds => {
            let s = 0.05 * l;
            blob(
                &mut rng,
                n / 2,
                [0.25 * l, 0.5 * l, 0.5 * l],
                [s; 3],
                1.0,
                &mut pos,
            );
            blob(
                &mut rng,
                n / 2,
                [0.75 * l, 0.5 * l, 0.5 * l],
                [s; 3],
                -1.0,
                &mut pos,
            );
        }
    }

    let c = |x: f64| T::lit(x);
    ParticleSystem::new(
        box_length,
        pos.into_iter()
            .map(|p| [c(p[0]), c(p[1]), c(p[2])])
            .collect(),
        q.into_iter().map(c).collect(),
    )
}

/// Writes the particle file: first line `N L`, then one `x y z q` line per
/// particle with 17 significant digits.
pub fn write_system<T: Real, W: Write>(system: &ParticleSystem<T>, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(
        out,
        "{} {:.16e}",
        system.len(),
        system.box_length().as_f64()
    )?;
    for (p, q) in system.positions().iter().zip(system.charges()) {
        writeln!(
            out,
            "{:.16e} {:.16e} {:.16e} {:.16e}",
            p[0].as_f64(),
            p[1].as_f64(),
            p[2].as_f64(),
            q.as_f64()
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_system_file<T: Real>(
    system: &ParticleSystem<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_system(system, File::create(path)?)
}

/// Reads the particle file. A net charge only triggers a warning; a
/// malformed line or a coordinate outside `[0, L)` is an error.
pub fn read_system<T: Real, R: Read>(input: R) -> Result<ParticleSystem<T>> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#') => None,
        other => Some((i + 1, other)),
    });
    let parse_err = |line: usize, message: String| Error::Parse { line, message };

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(parse_err(hline, format!("expected 'N L', got '{header}'")));
    }
    let n: usize = fields[0]
        .parse()
        .map_err(|e| parse_err(hline, format!("bad particle count: {e}")))?;
    let l: f64 = fields[1]
        .parse()
        .map_err(|e| parse_err(hline, format!("bad box length: {e}")))?;
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidBoxLength(l));
    }

    let mut positions = Vec::with_capacity(n);
    let mut charges = Vec::with_capacity(n);
    for index in 0..n {
        let (lineno, line) = lines.next().ok_or_else(|| {
            parse_err(
                hline + index + 1,
                format!("expected {n} particles, found {index}"),
            )
        })?;
        let line = line?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(lineno, format!("bad number: {e}")))?;
        if vals.len() != 4 {
            return Err(parse_err(
                lineno,
                format!("expected 'x y z q', got {} fields", vals.len()),
            ));
        }
        for &value in &vals[..3] {
            if !(0.0..l).contains(&value) {
                return Err(Error::OutOfBox {
                    index,
                    value,
                    box_length: l,
                });
            }
        }
        positions.push([T::lit(vals[0]), T::lit(vals[1]), T::lit(vals[2])]);
        charges.push(T::lit(vals[3]));
    }
    if let Some((lineno, _)) = lines.next() {
        return Err(parse_err(
            lineno,
            format!("trailing data after {n} particles"),
        ));
    }
    ParticleSystem::new_allow_charged(T::lit(l), positions, charges)
}

pub fn read_system_file<T: Real>(path: impl AsRef<Path>) -> Result<ParticleSystem<T>> {
    read_system(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn min_image_examples() {
        let d = min_image_displacement(&[0.1f64, 0.0, 0.0], &[9.9, 0.0, 0.0], 10.0);
        assert!((d[0] - 0.2).abs() < 1e-12 && d[1] == 0.0 && d[2] == 0.0);
        assert_eq!(
            min_image_displacement(&[3.0, 4.0, 5.0], &[3.0, 4.0, 5.0], 10.0),
            [0.0; 3]
        );
        assert_eq!(
            min_image_displacement(&[7.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 10.0),
            [-4.0, 0.0, 0.0]
        );
        // exactly half a box lands on the lower end
        assert_eq!(
            min_image_displacement(&[6.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 10.0)[0],
            -5.0
        );
    }

    #[test]
    fn generated_uniform_is_neutral_and_in_box() {
        let s = generate_system::<f64>(SystemKind::Uniform, 1200, 10.0, 1).unwrap();
        assert_eq!(s.len(), 1200);
        assert_eq!(s.total_charge(), 0.0);
        assert!(s
            .positions()
            .iter()
            .flatten()
            .all(|&x| (0.0..10.0).contains(&x)));
        assert_eq!(s.charge_sq_sum(), 1200.0);
    }

    #[test]
    fn uniform_density_matches_reference_box() {
        let s = generate_system::<f64>(SystemKind::Uniform, 3000, 3.1074, 5).unwrap();
        assert!((s.density() - 100.0).abs() < 0.1, "density {}", s.density());
    }

    #[test]
    fn cloud_wall_population_ratio() {
        let (cloud, wall) = cloud_wall_populations(1200);
        assert_eq!((cloud, wall), (120, 480));
        assert_eq!(wall, 4 * cloud);
        let s = generate_system::<f64>(SystemKind::CloudWall, 1200, 10.0, 3).unwrap();
        // wall particles sit in a thin slab around x = L/4 or 3L/4
        let on_wall = s
            .positions()
            .iter()
            .filter(|p| (p[0] - 2.5).abs() < 0.25 || (p[0] - 7.5).abs() < 0.25)
            .count();
        assert!(on_wall >= 2 * wall, "{on_wall}");
        assert_eq!(s.total_charge(), 0.0);
    }

    #[test]
    fn isolated_clouds_are_compact() {
        let s = generate_system::<f64>(SystemKind::IsolatedClouds, 400, 10.0, 9).unwrap();
        let near = s
            .positions()
            .iter()
            .filter(|p| {
                let dx = (p[0] - 2.5).abs().min((p[0] - 7.5).abs());
                dx < 2.0 && (p[1] - 5.0).abs() < 2.0 && (p[2] - 5.0).abs() < 2.0
            })
            .count();
        assert_eq!(near, 400);
    }

    #[test]
    fn generator_rejects_bad_input() {
        assert!(matches!(
            generate_system::<f64>(SystemKind::Uniform, 7, 1.0, 0),
            Err(Error::OddParticleCount(7))
        ));
        assert!(matches!(
            generate_system::<f64>(SystemKind::Uniform, 8, 0.0, 0),
            Err(Error::InvalidBoxLength(_))
        ));
    }

    #[test]
    fn generator_is_deterministic() {
        for kind in [
            SystemKind::Uniform,
            SystemKind::CloudWall,
            SystemKind::IsolatedClouds,
        ] {
            let a = generate_system::<f64>(kind, 100, 4.0, 42).unwrap();
            let b = generate_system::<f64>(kind, 100, 4.0, 42).unwrap();
            let c = generate_system::<f64>(kind, 100, 4.0, 43).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn construction_wraps_and_checks_neutrality() {
        let s = ParticleSystem::new(
            2.0,
            vec![[-0.5, 2.5, 1.0], [0.0, 0.0, 4.0]],
            vec![1.0, -1.0],
        )
        .unwrap();
        assert_eq!(s.positions()[0], [1.5, 0.5, 1.0]);
        assert_eq!(s.positions()[1], [0.0, 0.0, 0.0]);
        assert!(matches!(
            ParticleSystem::new(2.0, vec![[0.0; 3]], vec![1.0]),
            Err(Error::NotNeutral(_))
        ));
        assert!(matches!(
            ParticleSystem::new(2.0, vec![[0.0; 3]], vec![1.0, -1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let s = generate_system::<f64>(SystemKind::CloudWall, 60, 7.3, 11).unwrap();
        let mut buf = Vec::new();
        write_system(&s, &mut buf).unwrap();
        let back: ParticleSystem<f64> = read_system(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn file_format_minimal() {
        let text = "2 10.0\n1 2 3 1\n4 5 6 -1\n";
        let s: ParticleSystem<f64> = read_system(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.box_length(), 10.0);
        assert_eq!(s.positions()[1], [4.0, 5.0, 6.0]);
    }

    #[test]
    fn charged_file_still_loads() {
        let text = "2 10.0\n1 2 3 1\n4 5 6 -0.5\n";
        let s: ParticleSystem<f64> = read_system(text.as_bytes()).unwrap();
        assert_eq!(s.total_charge(), 0.5);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(matches!(
            read_system::<f64, _>("2\n".as_bytes()),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read_system::<f64, _>("1 10\n1 2 3\n".as_bytes()),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read_system::<f64, _>("2 10\n1 2 3 1\n".as_bytes()),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read_system::<f64, _>("2 10\n1 2 10 1\n1 1 1 -1\n".as_bytes()),
            Err(Error::OutOfBox { index: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn min_image_is_antisymmetric(a in prop::array::uniform3(0.0f64..10.0), b in prop::array::uniform3(0.0f64..10.0)) {
            let ab = min_image_displacement(&a, &b, 10.0);
            let ba = min_image_displacement(&b, &a, 10.0);
            for k in 0..3 {
                prop_assert!(ab[k] >= -5.0 && ab[k] < 5.0);
                if ab[k] != -5.0 && ba[k] != -5.0 {
                    prop_assert!((ab[k] + ba[k]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn wrap_lands_in_box(x in -1e3f64..1e3) {
            let w = wrap(x, 3.7);
            prop_assert!((0.0..3.7).contains(&w));
        }
    }
}
