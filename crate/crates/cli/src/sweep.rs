//! `sweep`: errors, estimates and stage timings along one parameter axis.

use std::fmt::{self, Write as _};
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use ewald_core::estimates::runtime::RuntimeModel;
use ewald_core::estimates::{
    average_neighbors, se_approx_error, truncation_error_fourier, truncation_error_real, tune,
    ErrorKind, Method,
};
use ewald_core::ParticleSystem;

use crate::compute::{open_output, MethodArgs, SourceArgs};
use crate::config::{usage, CliResult, Config};
use crate::run::{evaluate, load_system, Engine, Reference, Scheme, Setup};
use crate::tune::load_model;

pub const SWEEP_HELP: &str = "\
Output (CSV, one row per value):
  axis,value,method,n,xi,rc,kinf,m,p,eta
  abs_rms_potential,rel_rms_potential,abs_rms_force,rel_rms_force,abs_energy
  est_real_potential,est_fourier_potential,est_window_potential,
  est_real_force,est_fourier_force,est_window_force
  pred_real,pred_fourier
  t_real,t_precompute,t_spread,t_fft,t_solve,t_ifft,t_gather,t_kspace
Errors are measured against a converged direct sum; relative values divide
by the rms of the reference. est_* are the truncation estimates and the SE
window bound; the force estimates measure sqrt(sum_i |dF_i|^2), so divide by
sqrt(3N) to compare with abs_rms_force. kinf is M/2 on a grid. pred_* come
from the runtime profile. Times are seconds; every column except t_* is
deterministic. Columns that do not apply to a method are empty.";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Grid,
    Xi,
    Support,
    Order,
    Tol,
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "M" | "grid" => Ok(Self::Grid),
            "xi" => Ok(Self::Xi),
            "P" | "support" => Ok(Self::Support),
            "p" | "order" => Ok(Self::Order),
            "tol" => Ok(Self::Tol),
            other => Err(format!("unknown axis '{other}' (M, xi, P, p, tol)")),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Grid => "M",
            Self::Xi => "xi",
            Self::Support => "P",
            Self::Order => "p",
            Self::Tol => "tol",
        })
    }
}

/// Comma-separated numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct Values(pub Vec<f64>);

impl FromStr for Values {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad value '{v}': {e}"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Values)
    }
}

#[derive(Args, Debug)]
#[command(after_help = SWEEP_HELP)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// direct, se or spme (default se)
    #[arg(long)]
    pub method: Option<crate::run::Scheme>,
    /// Swept parameter: M, xi, P, p or tol (tol runs the tuner at every point)
    #[arg(long)]
    pub axis: Option<Axis>,
    /// Comma-separated values of the swept parameter
    #[arg(long)]
    pub values: Option<Values>,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Tolerance of the converged reference (default 1e-12)
    #[arg(long)]
    pub ref_tol: Option<f64>,
    /// Measure errors on this many evenly spaced particles instead of all
    #[arg(long, value_name = "K")]
    pub ref_targets: Option<usize>,
    /// Runtime profile for the pred_* columns and the tuner (default: desktop constants)
    #[arg(long, value_name = "FILE")]
    pub profile: Option<PathBuf>,
    /// Output file (default stdout)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn integer(axis: Axis, v: f64) -> CliResult<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        usage(format!("axis {axis} takes positive integers, got {v}"))
    }
}

/// Engine for one sweep point.
fn point(
    axis: Axis,
    v: f64,
    scheme: Scheme,
    base: &Setup,
    system: &ParticleSystem<f64>,
    model: &RuntimeModel,
) -> CliResult<Engine> {
    let l = system.box_length();
    let mut s = *base;
    match axis {
        Axis::Grid => s.grid = Some(integer(axis, v)?),
        Axis::Xi => s.xi = Some(v),
        Axis::Support => s.support = Some(integer(axis, v)?),
        Axis::Order => s.order = Some(integer(axis, v)?),
        Axis::Tol => {
            let method = if scheme == Scheme::Se {
                Method::Se
            } else {
                Method::Spme
            };
            let t = tune(system, method, v, model)?;
            return Ok(match method {
                Method::Se => Engine::Se {
                    params: t.se_params()?,
                    rc: t.rc,
                },
                Method::Spme => Engine::Spme {
                    params: t.spme_params()?,
                    rc: t.rc,
                },
            });
        }
    }
    s.engine(scheme, l)
}

fn check_axis(axis: Axis, scheme: Scheme, base: &Setup) -> CliResult<()> {
    let ok = match axis {
        Axis::Grid => scheme != Scheme::Direct,
        Axis::Xi => true,
        Axis::Support => scheme == Scheme::Se,
        Axis::Order => scheme == Scheme::Spme,
        Axis::Tol => scheme != Scheme::Direct,
    };
    if !ok {
        return usage(format!("axis {axis} does not apply to --method {scheme}"));
    }
    let fixed = [
        base.xi.is_some(),
        base.rc.is_some(),
        base.grid.is_some(),
        base.support.is_some(),
        base.order.is_some(),
    ];
    if axis == Axis::Tol && fixed.iter().any(|&f| f) {
        return usage("on the tol axis the tuner chooses xi, rc, M and P/p; drop those flags");
    }
    Ok(())
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn sci(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6e}"))
}

pub const HEADER: &str = "axis,value,method,n,xi,rc,kinf,m,p,eta,\
abs_rms_potential,rel_rms_potential,abs_rms_force,rel_rms_force,abs_energy,\
est_real_potential,est_fourier_potential,est_window_potential,\
est_real_force,est_fourier_force,est_window_force,\
pred_real,pred_fourier,\
t_real,t_precompute,t_spread,t_fft,t_solve,t_ifft,t_gather,t_kspace";

pub fn sweep(args: SweepArgs, cfg: &Config) -> CliResult<()> {
    let system = load_system(cfg, args.source.input, args.source.gen)?;
    let scheme = cfg.pick("method", args.method)?.unwrap_or(Scheme::Se);
    let Some(axis) = cfg.pick("axis", args.axis)? else {
        return usage("sweep needs --axis");
    };
    let Some(Values(values)) = cfg.pick("values", args.values)? else {
        return usage("sweep needs --values");
    };
    let base = args.params.setup(cfg)?;
    check_axis(axis, scheme, &base)?;
    let model = load_model(cfg, args.profile)?;
    let ref_tol = cfg.pick("ref-tol", args.ref_tol)?.unwrap_or(1e-12);
    let reference = Reference::new(&system, ref_tol, cfg.pick("ref-targets", args.ref_targets)?)?;
    let out: Option<PathBuf> = cfg.pick("out", args.out)?;
    let (n, l, q) = (system.len(), system.box_length(), system.charge_sq_sum());

    let mut w = open_output(out.as_deref())?;
    writeln!(w, "{HEADER}")?;
    for v in values {
        let engine = point(axis, v, scheme, &base, &system, &model)?;
        log::info!("{axis} = {v}: {engine:?}");
        let timed = evaluate(&system, &engine)?;
        let err = reference.error(&system, &timed.result)?;
        let (xi, rc, kinf) = (engine.xi(), engine.rc(), engine.kinf());
        let eta = match &engine {
            Engine::Se { params, .. } => Some(params.eta()),
            _ => None,
        };
        let window = |kind| match &engine {
            Engine::Se { params, .. } => Some(se_approx_error(kind, params.support, xi, l, q)),
            _ => None,
        };
        let pred_real = model.real_time(n, average_neighbors(n, l, rc))?;
        let pred_fourier = match (engine.grid(), engine.width()) {
            (Some(m), Some(p)) => Some(model.fourier_time(n, m, p)?),
            _ => None,
        };
        let st = timed.stages;
        let stage = |f: fn(&ewald_core::se::StageTimings) -> std::time::Duration| {
            st.as_ref().map(|s| f(s).as_secs_f64())
        };

        let mut row = String::new();
        write!(
            row,
            "{axis},{v},{scheme},{n},{xi:.10e},{rc:.10e},{kinf},{},{},{}",
            opt(engine.grid()),
            opt(engine.width()),
            sci(eta),
            scheme = engine.scheme()
        )
        .expect("writing to a string");
        write!(row, ",{}", err.csv_row()).expect("writing to a string");
        for kind in [ErrorKind::Potential, ErrorKind::Force] {
            write!(
                row,
                ",{:.6e},{:.6e},{}",
                truncation_error_real(kind, q, rc, xi, l),
                truncation_error_fourier(kind, q, kinf, xi, l),
                sci(window(kind))
            )
            .expect("writing to a string");
        }
        write!(
            row,
            ",{:.6e},{},{:.6e},{},{},{},{},{},{},{:.6e}",
            pred_real,
            sci(pred_fourier),
            timed.real,
            sci(stage(|s| s.precompute)),
            sci(stage(|s| s.spread)),
            sci(stage(|s| s.fft)),
            sci(stage(|s| s.influence)),
            sci(stage(|s| s.ifft)),
            sci(stage(|s| s.gather)),
            timed.kspace
        )
        .expect("writing to a string");
        writeln!(w, "{row}")?;
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_has_one_name_per_column() {
        let cols: Vec<&str> = HEADER.split(',').collect();
        assert_eq!(cols.len(), 31);
        assert!(cols.iter().all(|c| !c.is_empty()));
    }

    #[test]
    fn axis_method_mismatch() {
        let base = Setup::default();
        assert!(check_axis(Axis::Grid, Scheme::Direct, &base).is_err());
        assert!(check_axis(Axis::Support, Scheme::Spme, &base).is_err());
        assert!(check_axis(Axis::Order, Scheme::Se, &base).is_err());
        assert!(check_axis(Axis::Tol, Scheme::Direct, &base).is_err());
        assert!(check_axis(Axis::Xi, Scheme::Direct, &base).is_ok());
        let fixed = Setup {
            xi: Some(1.0),
            ..Setup::default()
        };
        assert!(check_axis(Axis::Tol, Scheme::Se, &fixed).is_err());
    }

    #[test]
    fn value_lists() {
        assert_eq!(
            "1, 2.5,3".parse::<Values>().unwrap(),
            Values(vec![1.0, 2.5, 3.0])
        );
        assert!("1,x".parse::<Values>().is_err());
        assert!(integer(Axis::Grid, 16.5).is_err());
        assert_eq!(integer(Axis::Grid, 16.0).unwrap(), 16);
    }
}
