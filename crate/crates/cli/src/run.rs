//! Loading systems, resolving method parameters and running one evaluation.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use ewald_core::oracle::{
    converged_reference_targets, fourier_space_sum, real_space_sum, self_term,
};
use ewald_core::realspace::real_space;
use ewald_core::se::{SeEngine, SeParams, StageTimings};
use ewald_core::spme::{SpmeEngine, SpmeParams};
use ewald_core::{
    generate_system, read_system_file, rms_error, ErrorReport, EwaldSplit, FieldResult,
    ParticleSystem, Real, SystemKind,
};

use crate::config::{usage, CliError, CliResult, Config};

/// `kind,N,L,seed` of a generated system.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub kind: SystemKind,
    pub n: usize,
    pub box_length: f64,
    pub seed: u64,
}

impl FromStr for GenSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [kind, n, l, seed] = parts[..] else {
            return Err(format!("expected kind,N,L,seed, got '{s}'"));
        };
        Ok(Self {
            kind: kind.parse().map_err(|e: ewald_core::Error| e.to_string())?,
            n: n.parse().map_err(|e| format!("bad N '{n}': {e}"))?,
            box_length: l.parse().map_err(|e| format!("bad L '{l}': {e}"))?,
            seed: seed
                .parse()
                .map_err(|e| format!("bad seed '{seed}': {e}"))?,
        })
    }
}

impl GenSpec {
    /// Bad counts or box lengths are usage errors since they come from the flag.
    pub fn generate(&self) -> CliResult<ParticleSystem<f64>> {
        generate_system(self.kind, self.n, self.box_length, self.seed)
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

/// Where the particles come from. A flag of either kind beats both config
/// keys.
pub fn load_system(
    cfg: &Config,
    input: Option<PathBuf>,
    gen: Option<GenSpec>,
) -> CliResult<ParticleSystem<f64>> {
    let (input, gen) = if input.is_some() || gen.is_some() {
        (input, gen)
    } else {
        (cfg.pick("in", None)?, cfg.pick("gen", None)?)
    };
    match (input, gen) {
        (Some(_), Some(_)) => usage("give either --in or --gen, not both"),
        (Some(path), None) => read_system_file(&path)
            .map_err(|e| CliError::Failed(format!("cannot read {}: {e}", path.display()))),
        (None, Some(spec)) => spec.generate(),
        (None, None) => usage("no particles: give --in FILE or --gen kind,N,L,seed"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Direct,
    Se,
    Spme,
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "direct" | "ewald" => Ok(Self::Direct),
            "se" => Ok(Self::Se),
            "spme" => Ok(Self::Spme),
            other => Err(format!("unknown method '{other}' (direct, se, spme)")),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::Se => "se",
            Self::Spme => "spme",
        })
    }
}

pub const DEFAULT_SUPPORT: usize = 8;
pub const DEFAULT_ORDER: usize = 5;

/// Method parameters as given on the command line, before validation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Setup {
    pub xi: Option<f64>,
    pub rc: Option<f64>,
    pub kinf: Option<usize>,
    pub grid: Option<usize>,
    pub support: Option<usize>,
    pub order: Option<usize>,
}

/// A fully specified evaluator.
#[derive(Clone, Copy, Debug)]
pub enum Engine {
    Direct(EwaldSplit),
    Se { params: SeParams, rc: f64 },
    Spme { params: SpmeParams, rc: f64 },
}

impl Setup {
    pub fn engine(&self, scheme: Scheme, box_length: f64) -> CliResult<Engine> {
        let Some(xi) = self.xi else {
            return usage("--xi is required");
        };
        let Some(rc) = self.rc else {
            return usage("--rc is required");
        };
        let reject = |set: bool, flag: &str, allowed: &str| -> CliResult<()> {
            if set {
                usage(format!(
                    "{flag} does not apply to --method {scheme} (only {allowed})"
                ))
            } else {
                Ok(())
            }
        };
        match scheme {
            Scheme::Direct => {
                reject(self.grid.is_some(), "--grid", "se, spme")?;
                reject(self.support.is_some(), "--support", "se")?;
                reject(self.order.is_some(), "--order", "spme")?;
                let Some(kinf) = self.kinf else {
                    return usage("--method direct needs --kinf");
                };
                Ok(Engine::Direct(EwaldSplit::new(xi, rc, kinf)?))
            }
            Scheme::Se => {
                reject(self.kinf.is_some(), "--kinf", "direct")?;
                reject(self.order.is_some(), "--order", "spme")?;
                let Some(m) = self.grid else {
                    return usage("--method se needs --grid");
                };
                let p = self.support.unwrap_or(DEFAULT_SUPPORT);
                Ok(Engine::Se {
                    params: SeParams::new(m, p, xi, box_length)?,
                    rc,
                })
            }
            Scheme::Spme => {
                reject(self.kinf.is_some(), "--kinf", "direct")?;
                reject(self.support.is_some(), "--support", "se")?;
                let Some(m) = self.grid else {
                    return usage("--method spme needs --grid");
                };
                let p = self.order.unwrap_or(DEFAULT_ORDER);
                Ok(Engine::Spme {
                    params: SpmeParams::new(m, p, xi, box_length)?,
                    rc,
                })
            }
        }
    }
}

impl Engine {
    pub fn scheme(&self) -> Scheme {
        match self {
            Self::Direct(_) => Scheme::Direct,
            Self::Se { .. } => Scheme::Se,
            Self::Spme { .. } => Scheme::Spme,
        }
    }

    pub fn xi(&self) -> f64 {
        match self {
            Self::Direct(s) => s.xi,
            Self::Se { params, .. } => params.xi,
            Self::Spme { params, .. } => params.xi,
        }
    }

    pub fn rc(&self) -> f64 {
        match self {
            Self::Direct(s) => s.rc,
            Self::Se { rc, .. } | Self::Spme { rc, .. } => *rc,
        }
    }

    /// Largest wave index kept: `kinf` for the direct sum, `M/2` on a grid.
    pub fn kinf(&self) -> f64 {
        match self {
            Self::Direct(s) => s.kinf as f64,
            Self::Se { params, .. } => (params.m / 2) as f64,
            Self::Spme { params, .. } => (params.m / 2) as f64,
        }
    }

    pub fn grid(&self) -> Option<usize> {
        match self {
            Self::Direct(_) => None,
            Self::Se { params, .. } => Some(params.m),
            Self::Spme { params, .. } => Some(params.m),
        }
    }

    /// Window support or spline order.
    pub fn width(&self) -> Option<usize> {
        match self {
            Self::Direct(_) => None,
            Self::Se { params, .. } => Some(params.support),
            Self::Spme { params, .. } => Some(params.order),
        }
    }
}

/// Result of one evaluation with wall times in seconds.
pub struct Timed<T> {
    pub result: FieldResult<T>,
    pub real: f64,
    pub kspace: f64,
    /// Per-stage times of the mesh methods.
    pub stages: Option<StageTimings>,
}

pub fn evaluate<T: Real>(system: &ParticleSystem<T>, engine: &Engine) -> CliResult<Timed<T>> {
    let clock = Instant::now();
    let real = match engine {
        Engine::Direct(split) => real_space_sum(system, split)?,
        _ => real_space(system, engine.xi(), engine.rc())?,
    };
    let t_real = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let (kspace, stages) = match engine {
        Engine::Direct(split) => (fourier_space_sum(system, split)?, None),
        Engine::Se { params, .. } => {
            let (k, t) = SeEngine::new(*params)?.kspace(system)?;
            (k, Some(t))
        }
        Engine::Spme { params, .. } => {
            let (k, t) = SpmeEngine::new(*params)?.kspace(system)?;
            (k, Some(t))
        }
    };
    let t_kspace = clock.elapsed().as_secs_f64();
    Ok(Timed {
        result: real + kspace + self_term(system, engine.xi()),
        real: t_real,
        kspace: t_kspace,
        stages,
    })
}

/// `count` indices spread evenly over `0..n`; all of them when `count` is
/// `None` or at least `n`.
pub fn target_indices(n: usize, count: Option<usize>) -> Vec<usize> {
    match count {
        Some(k) if k < n && k > 0 => (0..k).map(|i| i * n / k).collect(),
        _ => (0..n).collect(),
    }
}

/// Converged direct sum on a set of target particles.
pub struct Reference {
    targets: Vec<usize>,
    field: FieldResult<f64>,
}

impl Reference {
    pub fn new(system: &ParticleSystem<f64>, tol: f64, targets: Option<usize>) -> CliResult<Self> {
        let targets = target_indices(system.len(), targets);
        log::info!(
            "converged reference on {} particles at tolerance {tol:e}",
            targets.len()
        );
        let field = converged_reference_targets(system, tol, &targets)?;
        Ok(Self { targets, field })
    }

    /// Errors on the targets. With a subset the energy entry compares
    /// `1/2 sum q phi` over the targets only.
    pub fn error<T: Real>(
        &self,
        system: &ParticleSystem<T>,
        result: &FieldResult<T>,
    ) -> CliResult<ErrorReport> {
        let mut test = result.select(&self.targets);
        if self.targets.len() < system.len() {
            let q: Vec<T> = self.targets.iter().map(|&t| system.charges()[t]).collect();
            test.energy = FieldResult::energy_from_potentials(&test.potentials, &q);
        }
        Ok(rms_error(&test, &self.field)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_spec_parses() {
        let g: GenSpec = "cloud_wall, 1200,10,15".parse().unwrap();
        assert_eq!(g.kind, SystemKind::CloudWall);
        assert_eq!((g.n, g.box_length, g.seed), (1200, 10.0, 15));
        assert!("uniform,10,1".parse::<GenSpec>().is_err());
        assert!("blob,10,1,1".parse::<GenSpec>().is_err());
    }

    #[test]
    fn inconsistent_flags_are_usage_errors() {
        let base = Setup {
            xi: Some(3.0),
            rc: Some(1.0),
            ..Setup::default()
        };
        let se = Setup {
            grid: Some(16),
            ..base
        };
        assert!(se.engine(Scheme::Se, 5.0).is_ok());
        for bad in [
            (
                Setup {
                    order: Some(4),
                    ..se
                },
                Scheme::Se,
            ),
            (
                Setup {
                    kinf: Some(4),
                    ..se
                },
                Scheme::Se,
            ),
            (
                Setup {
                    support: Some(4),
                    ..se
                },
                Scheme::Spme,
            ),
            (se, Scheme::Direct),
            (base, Scheme::Se),
            (base, Scheme::Direct),
            (Setup { xi: None, ..se }, Scheme::Se),
        ] {
            assert!(
                matches!(bad.0.engine(bad.1, 5.0), Err(CliError::Usage(_))),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn targets_are_spread_out() {
        assert_eq!(target_indices(10, Some(5)), vec![0, 2, 4, 6, 8]);
        assert_eq!(target_indices(4, Some(10)), vec![0, 1, 2, 3]);
        assert_eq!(target_indices(3, None), vec![0, 1, 2]);
    }
}
