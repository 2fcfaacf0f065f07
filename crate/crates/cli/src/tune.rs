//! `calibrate` and `tune`.

use std::path::PathBuf;

use clap::Args;
use ewald_core::estimates::calibrate::{calibrate, CalibrationConfig};
use ewald_core::estimates::runtime::{fft_work, RuntimeModel};
use ewald_core::estimates::tune::verify_tuned;
use ewald_core::estimates::{tune, Method};

use crate::compute::SourceArgs;
use crate::config::{usage, CliError, CliResult, Config};
use crate::run::load_system;

/// The given profile, or the built-in desktop constants.
pub fn load_model(cfg: &Config, profile: Option<PathBuf>) -> CliResult<RuntimeModel> {
    let Some(path) = cfg.pick::<PathBuf>("profile", profile)? else {
        return Ok(RuntimeModel::desktop());
    };
    let model = RuntimeModel::load(&path)
        .map_err(|e| CliError::Usage(format!("cannot load profile {}: {e}", path.display())))?;
    if !model.is_calibrated() {
        return usage(format!(
            "profile {} does not set every constant",
            path.display()
        ));
    }
    Ok(model)
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Profile file to write
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Timed repetitions per ladder point (default 5)
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Largest accepted (max - min) / median of the repetitions (default 0.5)
    #[arg(long)]
    pub max_spread: Option<f64>,
    /// Measurement rounds per point before giving up (default 6)
    #[arg(long)]
    pub attempts: Option<usize>,
    /// Small ladder for a fast rough profile
    #[arg(long)]
    pub quick: bool,
}

pub fn run_calibrate(args: CalibrateArgs, cfg: &Config) -> CliResult<()> {
    let Some(out) = cfg.pick::<PathBuf>("out", args.out)? else {
        return usage("calibrate needs --out FILE");
    };
    let mut config = if cfg.switch("quick", args.quick)? {
        CalibrationConfig {
            fft_sizes: vec![16, 24, 32],
            spga_points: vec![(500, 4), (500, 6), (1000, 4), (1000, 6)],
            real_sizes: vec![1000, 2000],
            ..CalibrationConfig::default()
        }
    } else {
        CalibrationConfig::default()
    };
    if let Some(r) = cfg.pick("repeats", args.repeats)? {
        config.repeats = r;
    }
    if let Some(s) = cfg.pick("max-spread", args.max_spread)? {
        config.max_spread = s;
    }
    if let Some(a) = cfg.pick("attempts", args.attempts)? {
        config.attempts = a;
    }
    let calibration = calibrate(&config)?;
    for s in &calibration.samples {
        log::info!("{} work {:.3e} time {:.3e} s", s.kernel, s.work, s.seconds);
    }
    calibration.model.save(&out)?;
    print!("{}", calibration.model);
    Ok(())
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// se or spme (default se)
    #[arg(long)]
    pub method: Option<Method>,
    /// Relative rms force tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    /// Runtime profile from `calibrate` (default: desktop constants)
    #[arg(long, value_name = "FILE")]
    pub profile: Option<PathBuf>,
    /// Run the chosen parameters against a converged direct sum and fail
    /// unless the relative rms force error is at most 1.5 tol
    #[arg(long)]
    pub verify: bool,
    /// Particles checked by --verify (default 100)
    #[arg(long, value_name = "K")]
    pub verify_targets: Option<usize>,
}

/// Allowed ratio of verified error to the requested tolerance.
pub const VERIFY_SLACK: f64 = 1.5;

pub fn run_tune(args: TuneArgs, cfg: &Config) -> CliResult<()> {
    let system = load_system(cfg, args.source.input, args.source.gen)?;
    let method = cfg.pick("method", args.method)?.unwrap_or(Method::Se);
    let Some(tol) = cfg.pick::<f64>("tol", args.tol)? else {
        return usage("tune needs --tol");
    };
    let model = load_model(cfg, args.profile)?;
    let t = tune(&system, method, tol, &model)?;
    let width = match method {
        Method::Se => "support",
        Method::Spme => "order",
    };
    println!("method = {method}");
    println!("xi = {:.6}", t.xi);
    println!("rc = {:.6}", t.rc);
    println!("grid = {}", t.m);
    println!("{width} = {}", t.p);
    println!("abs_tol = {:.3e}", t.abs_tol);
    let (n, p) = (system.len() as f64, t.p as f64);
    if let (Some(fft), Some(spga), Some(solve)) = (model.c_fft, model.c_spga, model.c_solve) {
        println!("predicted_fft = {:.3e}", fft * fft_work(t.m));
        println!("predicted_spread_gather = {:.3e}", spga * n * p.powi(3));
        println!("predicted_solve = {:.3e}", solve * (t.m as f64).powi(3));
    }
    println!("predicted_real = {:.3e}", t.predicted.real);
    println!("predicted_fourier = {:.3e}", t.predicted.fourier);
    println!("predicted_total = {:.3e}", t.predicted.total());
    if cfg.switch("verify", args.verify)? {
        let targets = cfg
            .pick("verify-targets", args.verify_targets)?
            .unwrap_or(100);
        let r = verify_tuned(&system, &t, targets)?;
        let limit = VERIFY_SLACK * tol;
        let ok = r.rel_rms_force <= limit;
        println!("verified_rel_rms_force = {:.3e}", r.rel_rms_force);
        println!("verified_rel_rms_potential = {:.3e}", r.rel_rms_potential);
        println!("verify = {}", if ok { "pass" } else { "fail" });
        if !ok {
            return Err(CliError::Failed(format!(
                "verification failed: relative rms force error {:.3e} exceeds {limit:.3e}",
                r.rel_rms_force
            )));
        }
    }
    Ok(())
}
