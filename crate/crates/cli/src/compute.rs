//! `compute` and `gen`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use ewald_core::{write_system_file, ErrorReport, ParticleSystem, Real};

use crate::config::{usage, CliResult, Config};
use crate::run::{evaluate, load_system, GenSpec, Reference, Scheme, Setup};

pub const COMPUTE_HELP: &str = "\
Output (CSV, to --out or stdout):
  index,potential,fx,fy,fz     one row per particle
  # energy,<E>                 total energy
  # abs_rms_potential,rel_rms_potential,abs_rms_force,rel_rms_force,abs_energy
  # <values>                   only with --ref-tol: errors against a converged direct sum
A one-line summary goes to stderr. Units are Gaussian (phi = q / r).";

#[derive(Args, Debug)]
pub struct SourceArgs {
    /// Particle file: first line `N L`, then `x y z q` per particle
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Generate the particles instead; kind is uniform, cloud_wall or isolated_clouds
    #[arg(long, value_name = "KIND,N,L,SEED", conflicts_with = "input")]
    pub gen: Option<GenSpec>,
}

#[derive(Args, Debug, Default)]
pub struct MethodArgs {
    /// Ewald split parameter
    #[arg(long)]
    pub xi: Option<f64>,
    /// Real-space cutoff
    #[arg(long)]
    pub rc: Option<f64>,
    /// Largest wave index |n| of the direct Fourier sum (direct only)
    #[arg(long)]
    pub kinf: Option<usize>,
    /// Grid points per dimension, even (se, spme)
    #[arg(long, value_name = "M")]
    pub grid: Option<usize>,
    /// Gaussian window support P (se; default 8)
    #[arg(long, value_name = "P")]
    pub support: Option<usize>,
    /// B-spline order p (spme; default 5)
    #[arg(long, value_name = "p")]
    pub order: Option<usize>,
}

impl MethodArgs {
    pub fn setup(&self, cfg: &Config) -> CliResult<Setup> {
        Ok(Setup {
            xi: cfg.pick("xi", self.xi)?,
            rc: cfg.pick("rc", self.rc)?,
            kinf: cfg.pick("kinf", self.kinf)?,
            grid: cfg.pick("grid", self.grid)?,
            support: cfg.pick("support", self.support)?,
            order: cfg.pick("order", self.order)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" | "single" => Ok(Self::Single),
            "f64" | "double" => Ok(Self::Double),
            other => Err(format!("unknown precision '{other}' (f32, f64)")),
        }
    }
}

#[derive(Args, Debug)]
#[command(after_help = COMPUTE_HELP)]
pub struct ComputeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// direct, se or spme (default direct)
    #[arg(long)]
    pub method: Option<Scheme>,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Compare against a direct sum converged to this absolute tolerance
    #[arg(long)]
    pub ref_tol: Option<f64>,
    /// Compare on this many evenly spaced particles instead of all
    #[arg(long, value_name = "K")]
    pub ref_targets: Option<usize>,
    /// Floating point type of the evaluation: f64 (default) or f32
    #[arg(long)]
    pub precision: Option<Precision>,
    /// Output file (default stdout)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn compute(args: ComputeArgs, cfg: &Config) -> CliResult<()> {
    let system = load_system(cfg, args.source.input, args.source.gen)?;
    let scheme = cfg.pick("method", args.method)?.unwrap_or(Scheme::Direct);
    let engine = args
        .params
        .setup(cfg)?
        .engine(scheme, system.box_length())?;
    let ref_tol: Option<f64> = cfg.pick("ref-tol", args.ref_tol)?;
    let ref_targets = cfg.pick("ref-targets", args.ref_targets)?;
    if ref_targets.is_some() && ref_tol.is_none() {
        return usage("--ref-targets needs --ref-tol");
    }
    let out: Option<PathBuf> = cfg.pick("out", args.out)?;
    let reference = ref_tol
        .map(|tol| Reference::new(&system, tol, ref_targets))
        .transpose()?;
    match cfg
        .pick("precision", args.precision)?
        .unwrap_or(Precision::Double)
    {
        Precision::Double => run(&system, &engine, reference.as_ref(), out.as_deref()),
        Precision::Single => run(
            &system.cast::<f32>(),
            &engine,
            reference.as_ref(),
            out.as_deref(),
        ),
    }
}

fn run<T: Real>(
    system: &ParticleSystem<T>,
    engine: &crate::run::Engine,
    reference: Option<&Reference>,
    out: Option<&Path>,
) -> CliResult<()> {
    let timed = evaluate(system, engine)?;
    let report = reference
        .map(|r| r.error(system, &timed.result))
        .transpose()?;
    let mut w = open_output(out)?;
    writeln!(w, "index,potential,fx,fy,fz")?;
    for (i, (p, f)) in timed
        .result
        .potentials
        .iter()
        .zip(&timed.result.forces)
        .enumerate()
    {
        writeln!(
            w,
            "{i},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.as_f64(),
            f[0].as_f64(),
            f[1].as_f64(),
            f[2].as_f64()
        )?;
    }
    writeln!(w, "# energy,{:.16e}", timed.result.energy.as_f64())?;
    if let Some(r) = &report {
        writeln!(w, "# {}", ErrorReport::CSV_HEADER)?;
        writeln!(w, "# {}", r.csv_row())?;
    }
    w.flush()?;
    let mut summary = format!(
        "{} N={} energy={:.10e} real {:.3e} s kspace {:.3e} s",
        engine.scheme(),
        system.len(),
        timed.result.energy.as_f64(),
        timed.real,
        timed.kspace
    );
    if let Some(r) = report {
        summary += &format!(
            " rms error potential {:.3e} (rel {:.3e}) force {:.3e} (rel {:.3e})",
            r.abs_rms_potential, r.rel_rms_potential, r.abs_rms_force, r.rel_rms_force
        );
    }
    eprintln!("{summary}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// kind,N,L,seed; kind is uniform, cloud_wall or isolated_clouds
    #[arg(value_name = "KIND,N,L,SEED")]
    pub spec: Option<GenSpec>,
    /// Output file (default stdout)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn gen(args: GenArgs, cfg: &Config) -> CliResult<()> {
    let Some(spec) = cfg.pick("gen", args.spec)? else {
        return usage("gen needs kind,N,L,seed");
    };
    let system = spec.generate()?;
    match cfg.pick::<PathBuf>("out", args.out)? {
        Some(path) => write_system_file(&system, path)?,
        None => ewald_core::system::write_system(&system, io::stdout().lock())?,
    }
    Ok(())
}
