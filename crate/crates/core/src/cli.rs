//! Command-line front end: `run`, `schedule`, `clip-verify`, `deff`, `hardness`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::clipping::{clip_error_exact, clip_error_mc, ClipErrorReport};
use crate::config::{parse_config, ExperimentConfig, OutputConfig};
use crate::error::{config_err, Error, Result};
use crate::harness::{self, derive_seed, persist, prepare_horizon, ExperimentResult, HorizonSetup};
use crate::noise::{d_eff_iid, d_eff_independent, d_eff_stable, OracleKind};
use crate::problems::subgrad_f;

/// Stream tag of the Monte Carlo clipping check.
const TAG_CLIP: u64 = (1 << 31) + (1 << 30);

#[derive(Debug, Parser)]
#[command(name = "htclip", version, about = "Clipped SGD under heavy-tailed noise: experiments and calculators")]
pub struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `run.master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for `run`.
    #[arg(long, global = true, env = "HTCLIP_THREADS")]
    pub threads: Option<usize>,
    /// Print one JSON document on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured experiment.
    Run,
    /// Print the resolved schedule constants.
    Schedule {
        /// Horizon for known-horizon regimes; defaults to the largest grid T.
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Check the clipping-error bounds at the starting point.
    ClipVerify {
        /// Threshold as a multiple of G.
        #[arg(long, default_value_t = 2.0)]
        tau_mult: f64,
        /// Defaults to the schedule's alpha_clip.
        #[arg(long)]
        alpha: Option<f64>,
        /// Draws per Monte Carlo pass when the noise is not enumerable.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Effective-dimension calculators.
    Deff {
        #[arg(long, value_enum)]
        variant: DeffArg,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        p: f64,
        /// Per-coordinate moments for the independent variant.
        #[arg(long, value_delimiter = ',')]
        sigmas: Vec<f64>,
        /// Gap alpha - p for the stable variant.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Dump the hard instance for one horizon.
    Hardness {
        #[arg(long)]
        horizon: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeffArg {
    Iid,
    Independent,
    Stable,
}

/// Parses `argv` and runs the command, writing to the given streams.
/// Returns the process exit code.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let path = match &cli.config {
        Some(p) => p,
        None => return config_err("--config", "this command needs a configuration file"),
    };
    let mut cfg = parse_config(path)?;
    if let Some(s) = cli.seed {
        cfg.run.master_seed = s;
    }
    if let Some(dir) = &cli.out {
        cfg.output = Some(OutputConfig { dir: dir.clone() });
    }
    Ok(cfg)
}

fn max_horizon(cfg: &ExperimentConfig, horizon: Option<u64>) -> Result<(u64, usize)> {
    let grid = cfg.run.t_grid.values();
    match horizon {
        Some(0) => config_err("--horizon", "must be at least 1"),
        Some(t) => Ok((t, grid.iter().position(|&g| g == t).unwrap_or(0))),
        None => match grid.last() {
            Some(&t) => Ok((t, grid.len() - 1)),
            None => config_err("run.t_grid", "grid is empty"),
        },
    }
}

fn emit_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(out, "{text}").map_err(|source| Error::Io { path: "<stdout>".into(), source })
}

fn emit(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{line}").map_err(|source| Error::Io { path: "<stdout>".into(), source })
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Run => cmd_run(cli, out, err),
        Command::Schedule { horizon } => {
            let cfg = load(cli)?;
            let (t, i) = max_horizon(&cfg, *horizon)?;
            let setup = prepare_horizon(&cfg, t, i)?;
            cmd_schedule(cli, &setup, out)?;
            Ok(0)
        }
        Command::ClipVerify { tau_mult, alpha, samples, horizon } => {
            let cfg = load(cli)?;
            let (t, i) = max_horizon(&cfg, *horizon)?;
            let setup = prepare_horizon(&cfg, t, i)?;
            let alpha = alpha.unwrap_or(cfg.schedule.alpha_clip);
            let report = clip_verify(&setup, *tau_mult, alpha, *samples, cfg.run.master_seed)?;
            if cli.json {
                emit_json(out, &report)?;
            } else {
                for line in report.summary_lines() {
                    emit(out, line)?;
                }
            }
            Ok(if report.all_pass() { 0 } else { 1 })
        }
        Command::Deff { variant, d, p, sigmas, eps } => {
            let value = match variant {
                DeffArg::Iid => {
                    let d = d.map_or_else(|| config_err("--d", "required"), Ok)?;
                    json!({ "variant": "iid", "d": d, "p": p, "d_eff": d_eff_iid(d, *p)? })
                }
                DeffArg::Independent => {
                    json!({ "variant": "independent", "p": p, "sigmas": sigmas, "d_eff": d_eff_independent(sigmas, *p)? })
                }
                DeffArg::Stable => {
                    let d = d.map_or_else(|| config_err("--d", "required"), Ok)?;
                    let r = d_eff_stable(d, *p, *eps)?;
                    json!({ "variant": "stable", "d": d, "p": p, "d_eff": r.bound, "detail": r })
                }
            };
            if cli.json {
                emit_json(out, &value)?;
            } else {
                emit(out, &value["d_eff"])?;
            }
            Ok(0)
        }
        Command::Hardness { horizon } => {
            let cfg = load(cli)?;
            let (t, i) = max_horizon(&cfg, *horizon)?;
            let setup = prepare_horizon(&cfg, t, i)?;
            let h = match &setup.hard {
                Some(h) => h,
                None => return config_err("problem.kind", "hardness needs the hard problem"),
            };
            let value = json!({
                "T": t,
                "params": h.params,
                "instance": h.instance,
                "declared_noise": setup.oracle.noise,
                "x_star": h.instance.x_star(),
                "f_star": h.instance.f_star(),
                "lipschitz": h.instance.lipschitz(),
                "codebook": {
                    "target_size": h.codebook.target_size,
                    "achieved_size": h.codebook.achieved_size,
                    "min_distance": h.codebook.min_distance,
                    "shortfall": h.codebook.shortfall,
                },
            });
            if cli.json {
                emit_json(out, &value)?;
            } else {
                for key in ["T", "params", "declared_noise", "f_star", "lipschitz", "codebook"] {
                    emit(out, format!("{key} = {}", value[key]))?;
                }
            }
            Ok(0)
        }
    }
}

fn cmd_run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let cfg = load(cli)?;
    let result = harness::run_experiment(&cfg, cli.threads)?;
    for w in &result.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    if let Some(o) = &cfg.output {
        persist(&result, &o.dir)?;
    }
    if cli.json {
        emit_json(out, &result)?;
    } else {
        print_result(&result, out)?;
    }
    Ok(if result.assertions_pass() { 0 } else { 1 })
}

fn print_result(result: &ExperimentResult, out: &mut dyn Write) -> Result<()> {
    emit(out, format!("config digest {}", result.config_digest))?;
    for s in &result.series {
        emit(out, format!("[{}]", harness::mode_name(s.averaging)))?;
        for r in &s.rows {
            let qs: Vec<String> = r.quantiles.iter().map(|q| format!("{q:.4e}")).collect();
            emit(
                out,
                format!(
                    "T = {:>8}  mean = {:.4e}  std = {:.4e}  q = [{}]  clip = {:.3}",
                    r.t,
                    r.mean,
                    r.std,
                    qs.join(", "),
                    r.clip_rate
                ),
            )?;
        }
    }
    for f in &result.fits {
        emit(
            out,
            format!("fit {:<16} slope = {:+.4} ± {:.4}  r2 = {:.4}", f.series, f.fit.slope, f.fit.slope_stderr, f.fit.r_squared),
        )?;
    }
    for a in &result.assertions {
        let status = if a.pass { "PASS" } else { "FAIL" };
        emit(out, format!("{status} slope[{}] = {:?}, expected {} ± {}", a.series, a.slope, a.expected, a.tol))?;
    }
    Ok(())
}

fn cmd_schedule(cli: &Cli, setup: &HorizonSetup, out: &mut dyn Write) -> Result<()> {
    let s = &setup.schedule;
    let value = json!({
        "regime": s.regime,
        "T": setup.horizon,
        "noise": setup.oracle.noise,
        "params": s.params,
        "averaging": s.averaging,
        "constants": s.constants,
        "tau_star": s.constants.tau_star.or(s.constants.tau_tilde_star).map(crate::ext_real::display),
        "varphi_star": s.constants.varphi_star.or(s.constants.varphi_tilde_star).map(crate::ext_real::display),
        "eta_star": s.constants.eta_star,
        "eta_1": s.eta(1),
        "tau_1": crate::ext_real::display(s.tau(1)),
    });
    if cli.json {
        emit_json(out, &value)
    } else {
        let obj = value.as_object().map(|o| o.iter().collect::<Vec<_>>()).unwrap_or_default();
        for (k, v) in obj {
            emit(out, format!("{k} = {v}"))?;
        }
        Ok(())
    }
}

/// Clipping-error report at `x₁` with `τ = tau_mult · G`; exact when the
/// noise has finite support.
pub fn clip_verify(setup: &HorizonSetup, tau_mult: f64, alpha: f64, samples: usize, seed: u64) -> Result<ClipErrorReport> {
    let g = setup.schedule.params.g;
    let tau = tau_mult * g;
    let x = &setup.x1;
    let grad = subgrad_f(&setup.obj, x)?;
    match setup.oracle.kind {
        OracleKind::Deterministic | OracleKind::HardInstance => {
            clip_error_exact(&setup.oracle, &setup.obj, x, &grad, tau, alpha)
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, TAG_CLIP));
            clip_error_mc(&setup.oracle, &setup.obj, x, &grad, tau, alpha, samples, &mut rng)
        }
    }
}
