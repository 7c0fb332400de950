//! Seeded multi-trial experiments: per-horizon setup, parallel trials,
//! aggregation, rate fitting and persistence.
//!
//! Every trial draws from its own ChaCha stream seeded by
//! [`derive_seed`]`(master, trial, horizon_index)`, and results are assembled
//! in index order, so the thread count only changes wall time.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{run_clipped_sgd, run_stabilized_clipped_sgd, Averaging};
use crate::config::{Algorithm, DomainConfig, ExperimentConfig, NoiseKind, ProblemKind, X1Mode};
use crate::error::{config_err, contract, Error, Result};
use crate::hardness::{gv_codebook, hard_params, twopoint_codebook, Codebook, CodebookKind, HardInputs, HardInstance, HardParams};
use crate::noise::{make_oracle, GradOracle, NoiseSpec, OracleKind, StableParams};
use crate::problems::{CompositeObjective, Domain, FKind, RKind};
use crate::schedules::{make_schedule, Schedule, ScheduleParams};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Stream tag offset for codebook construction (trial index 0).
pub const TAG_CODEBOOK: u64 = 1 << 31;

/// SplitMix64 finalizer; a bijection on `u64`.
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `(trial, stream_tag)` under `master`.
///
/// The pair is packed as `tag << 32 | trial`, multiplied by the odd golden
/// ratio constant, xored with `master` and finalized with SplitMix64. Each
/// step is a bijection, so distinct pairs with both parts below `2³²` never
/// share a seed.
pub fn derive_seed(master: u64, trial: u64, stream_tag: u64) -> u64 {
    let packed = (stream_tag << 32) ^ trial;
    splitmix64(master ^ GOLDEN.wrapping_mul(packed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased; zero for a single value.
    pub std: f64,
    pub quantiles: Vec<f64>,
}

/// Mean, standard deviation and nearest-rank quantiles `x_(⌈level·n⌉)`.
pub fn summarize(values: &[f64], levels: &[f64]) -> Result<Summary> {
    let n = values.len();
    if n == 0 {
        return contract("cannot summarize an empty sample");
    }
    if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return contract("quantile levels must lie in (0, 1)");
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = levels
        .iter()
        .map(|&l| {
            let x = l * n as f64;
            // guard against 0.9 * 100 landing a hair above 90
            let r = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() };
            sorted[(r as usize).clamp(1, n) - 1]
        })
        .collect();
    Ok(Summary { n, mean, std, quantiles })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

/// Least squares of `ln error` on `ln T`.
pub fn fit_rate(t_values: &[f64], errors: &[f64]) -> Result<RateFit> {
    let n = t_values.len();
    if n != errors.len() {
        return contract("T and error lists differ in length");
    }
    if n < 3 {
        return contract("rate fit needs at least 3 points");
    }
    if t_values.iter().chain(errors).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return contract("rate fit needs positive finite T and errors");
    }
    let xs: Vec<f64> = t_values.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return contract("rate fit needs at least two distinct T");
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let sst: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope_stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    Ok(RateFit { slope, intercept, slope_stderr, r_squared })
}

/// Everything one horizon of an experiment needs.
#[derive(Debug, Clone)]
pub struct HorizonSetup {
    pub horizon: u64,
    pub obj: CompositeObjective,
    pub oracle: GradOracle,
    pub schedule: Schedule,
    pub x1: Vec<f64>,
    pub hard: Option<HardSetup>,
}

#[derive(Debug, Clone)]
pub struct HardSetup {
    pub params: HardParams,
    pub codebook: Codebook,
    pub instance: HardInstance,
}

fn build_objective(cfg: &ExperimentConfig) -> Result<CompositeObjective> {
    let pr = &cfg.problem;
    let d = pr.d;
    let g = pr.g.unwrap_or(1.0);
    let domain = match pr.domain {
        DomainConfig::AllSpace => Domain::AllSpace { d },
        DomainConfig::Ball { radius } => Domain::Ball { center: vec![0.0; d], radius },
    };
    let r = if pr.mu > 0.0 { RKind::Quad { mu: pr.mu, center: vec![0.0; d] } } else { RKind::Zero };
    let f = match pr.kind {
        ProblemKind::EuclidNorm => FKind::EuclidNorm { g, y: vec![0.0; d] },
        ProblemKind::AbsSum => FKind::AbsSum { m: vec![g / (d as f64).sqrt(); d], y: vec![0.0; d] },
        ProblemKind::Hard => return contract("hard objectives are built per horizon"),
    };
    CompositeObjective::with_lipschitz(f, r, domain, g)?.with_optimum(vec![0.0; d], 0.0)
}

fn build_oracle(cfg: &ExperimentConfig, obj: &CompositeObjective) -> Result<GradOracle> {
    let nz = &cfg.noise;
    let d = obj.dim();
    let declared = match (nz.kind, nz.sigma_s, nz.sigma_l) {
        (NoiseKind::Hard, _, _) => None,
        (_, Some(s), Some(l)) => Some(NoiseSpec::new(nz.p, s, l)?),
        _ => None,
    };
    let kind = match nz.kind {
        NoiseKind::None => OracleKind::Deterministic,
        NoiseKind::Gaussian => OracleKind::AdditiveGaussian {
            scales: nz.scales.clone().unwrap_or_else(|| vec![nz.scale.unwrap_or(0.0); d]),
        },
        NoiseKind::Stable => {
            let st = nz.stable.as_ref().map_or_else(|| config_err("noise.stable", "missing"), Ok)?;
            OracleKind::AdditiveStable {
                params: vec![StableParams { alpha: st.alpha, beta: st.beta, gamma: st.gamma }; d],
            }
        }
        NoiseKind::Hard => OracleKind::HardInstance,
    };
    make_oracle(obj, kind, nz.p, declared)
}

fn codebook_for(cfg: &ExperimentConfig, t_index: usize) -> Result<Codebook> {
    let h = cfg.hardness.as_ref().map_or_else(|| config_err("hardness", "missing"), Ok)?;
    match h.codebook {
        CodebookKind::Gv => {
            let seed = derive_seed(cfg.run.master_seed, 0, TAG_CODEBOOK + t_index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            gv_codebook(h.d_star, cfg.problem.d, Some(h.max_codewords), &mut rng)
        }
        CodebookKind::Twopoint => twopoint_codebook(h.d_star, cfg.problem.d),
    }
}

/// Objective, oracle, schedule and starting point for horizon `T`.
pub fn prepare_horizon(cfg: &ExperimentConfig, horizon: u64, t_index: usize) -> Result<HorizonSetup> {
    let pr = &cfg.problem;
    let (obj, hard) = match pr.kind {
        ProblemKind::Hard => {
            let h = cfg.hardness.as_ref().map_or_else(|| config_err("hardness", "missing"), Ok)?;
            let inputs = HardInputs {
                g: pr.g.unwrap_or(0.0),
                d: pr.distance.unwrap_or(0.0),
                mu: pr.mu,
                sigma_l: cfg.noise.sigma_l.unwrap_or(0.0),
                p: cfg.noise.p,
                horizon,
                d_star: h.d_star,
                delta: h.delta.unwrap_or(0.0),
            };
            let params = hard_params(h.regime, &inputs)?;
            let codebook = codebook_for(cfg, t_index)?;
            let instance = HardInstance::new(h.regime.kind(), pr.d, &params, codebook.codewords[0].clone())?;
            let obj = CompositeObjective::from_hard(instance.clone())?;
            (obj, Some(HardSetup { params, codebook, instance }))
        }
        _ => (build_objective(cfg)?, None),
    };
    let x1 = match &pr.x1_mode {
        X1Mode::Origin => vec![0.0; pr.d],
        X1Mode::Offset { v } => v.clone(),
    };
    if !obj.domain.contains(&x1, 1e-12) {
        return config_err("problem.x1_mode", "starting point lies outside the domain");
    }
    let oracle = build_oracle(cfg, &obj)?;
    let distance = match pr.distance {
        Some(d) => d,
        None => match obj.initial_distance(&x1) {
            Some(d) if d > 0.0 => d,
            _ => return config_err("problem.D", "x1 is the minimizer; give D explicitly"),
        },
    };
    let regime = cfg.schedule.regime;
    let params = ScheduleParams {
        p: oracle.noise.p,
        sigma_s: oracle.noise.sigma_s,
        sigma_l: oracle.noise.sigma_l,
        g: pr.g.unwrap_or(obj.lipschitz_g),
        d: distance,
        mu: obj.mu,
        delta: cfg.schedule.delta,
        alpha_clip: cfg.schedule.alpha_clip,
        t_known: regime.needs_horizon().then_some(horizon),
    };
    let schedule = make_schedule(regime, params)?;
    Ok(HorizonSetup { horizon, obj, oracle, schedule, x1, hard })
}

#[derive(Debug, Clone, PartialEq)]
struct TrialOutcome {
    /// Clamped suboptimality per configured averaging mode.
    values: Vec<f64>,
    mu_dist_sq: f64,
    clip_events: u64,
}

fn run_trial(cfg: &ExperimentConfig, setup: &HorizonSetup, seed: u64) -> Result<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // the trial's codeword comes first from its own stream
    let relabeled;
    let obj = match &setup.hard {
        Some(h) => {
            let k = rng.random_range(0..h.codebook.codewords.len());
            relabeled = CompositeObjective::from_hard(h.instance.relabel(h.codebook.codewords[k].clone())?)?;
            &relabeled
        }
        None => &setup.obj,
    };
    let runner = match cfg.schedule.algorithm {
        Algorithm::Clipped => run_clipped_sgd::<ChaCha8Rng>,
        Algorithm::Stabilized => run_stabilized_clipped_sgd::<ChaCha8Rng>,
    };
    let traj = runner(obj, &setup.oracle, &setup.schedule, setup.horizon, &setup.x1, &mut rng, cfg.run.record_stride)?;
    let row = match traj.final_subopt() {
        Some(r) => *r,
        None => return contract("objective has no known optimum"),
    };
    let values = cfg
        .averaging_modes()
        .iter()
        .map(|m| match m {
            Averaging::Plain => row.plain.clamped,
            Averaging::Weighted => row.weighted.clamped,
            Averaging::Last => row.last.clamped,
        })
        .collect();
    Ok(TrialOutcome { values, mu_dist_sq: row.mu_dist_sq, clip_events: traj.clip_events })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    #[serde(rename = "T")]
    pub t: u64,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub quantiles: Vec<f64>,
    pub mu_dist2_mean: f64,
    /// Fraction of iterations that clipped, over all trials.
    pub clip_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub averaging: Averaging,
    pub rows: Vec<SeriesRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    /// `<mode>` for means, `<mode>:q_<level>` for quantiles, `mu_dist2`.
    pub series: String,
    pub points: usize,
    pub t_min: u64,
    pub t_max: u64,
    pub fit: RateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub series: String,
    pub expected: f64,
    pub tol: f64,
    pub slope: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRecord {
    #[serde(rename = "T")]
    pub t: u64,
    pub schedule: Schedule,
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardness: Option<HardParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub git_describe: String,
    pub master_seed: u64,
    pub config_digest: String,
    pub config: ExperimentConfig,
    pub horizons: Vec<HorizonRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_digest: String,
    pub quantile_levels: Vec<f64>,
    pub series: Vec<Series>,
    pub fits: Vec<FitRow>,
    pub assertions: Vec<AssertionOutcome>,
    pub warnings: Vec<String>,
    pub manifest: Manifest,
}

impl ExperimentResult {
    pub fn assertions_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn fit(&self, series: &str) -> Option<&RateFit> {
        self.fits.iter().find(|f| f.series == series).map(|f| &f.fit)
    }
}

pub fn mode_name(m: Averaging) -> &'static str {
    match m {
        Averaging::Plain => "plain",
        Averaging::Weighted => "weighted",
        Averaging::Last => "last",
    }
}

fn level_label(level: f64) -> String {
    format!("q_{level}")
}

fn fit_points(rows: &[SeriesRow], value: impl Fn(&SeriesRow) -> f64, drop_smallest: bool) -> Option<(Vec<f64>, Vec<f64>, u64, u64)> {
    let mut pts: Vec<(u64, f64)> = rows.iter().map(|r| (r.t, value(r))).collect();
    if drop_smallest && pts.len() >= 4 {
        pts.remove(0);
    }
    if pts.len() < 3 || pts.iter().any(|(_, v)| !(*v > 0.0)) {
        return None;
    }
    let (t_min, t_max) = (pts[0].0, pts[pts.len() - 1].0);
    Some((pts.iter().map(|p| p.0 as f64).collect(), pts.iter().map(|p| p.1).collect(), t_min, t_max))
}

/// Runs every `(T, trial)` pair on `threads` workers (rayon's default when
/// `None`) and aggregates.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    let cfg = cfg.clone().resolved()?;
    let grid = cfg.run.t_grid.values();
    if grid.is_empty() {
        return config_err("run.t_grid", "grid is empty");
    }
    let levels = cfg.quantile_levels().to_vec();
    let modes = cfg.averaging_modes().to_vec();
    let trials = cfg.run.trials;
    let master = cfg.run.master_seed;
    let setups: Vec<HorizonSetup> =
        grid.iter().enumerate().map(|(i, &t)| prepare_horizon(&cfg, t, i)).collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    if cfg.schedule.regime.is_high_probability() {
        for &l in &levels {
            // 10 / 0.1 lands a hair above 100
            let need = (10.0 / (1.0 - l) - 1e-9).ceil();
            if (trials as f64) < need {
                warnings.push(format!("{trials} trials is below 10/delta = {need} for the {l} quantile"));
            }
        }
    }

    let jobs: Vec<(usize, usize)> = (0..setups.len()).flat_map(|i| (0..trials).map(move |k| (i, k))).collect();
    let work = || -> Vec<Result<TrialOutcome>> {
        jobs.par_iter()
            .map(|&(i, k)| {
                let seed = derive_seed(master, k as u64, i as u64);
                run_trial(&cfg, &setups[i], seed).map_err(|e| Error::Trial {
                    trial: k,
                    horizon: setups[i].horizon,
                    seed,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let raw = match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Contract(format!("cannot start {n} worker threads: {e}")))?;
            pool.install(work)
        }
        None => work(),
    };
    let outcomes: Vec<TrialOutcome> = raw.into_iter().collect::<Result<_>>()?;

    let mut series: Vec<Series> = modes.iter().map(|&m| Series { averaging: m, rows: Vec::new() }).collect();
    for (i, setup) in setups.iter().enumerate() {
        let chunk = &outcomes[i * trials..(i + 1) * trials];
        let mu_dist2_mean = chunk.iter().map(|o| o.mu_dist_sq).sum::<f64>() / trials as f64;
        let clips: u64 = chunk.iter().map(|o| o.clip_events).sum();
        let clip_rate = clips as f64 / (trials as f64 * setup.horizon as f64);
        for (j, s) in series.iter_mut().enumerate() {
            let vals: Vec<f64> = chunk.iter().map(|o| o.values[j]).collect();
            let sm = summarize(&vals, &levels)?;
            s.rows.push(SeriesRow {
                t: setup.horizon,
                n: sm.n,
                mean: sm.mean,
                std: sm.std,
                quantiles: sm.quantiles,
                mu_dist2_mean,
                clip_rate,
            });
        }
    }

    let drop = cfg.eval.drop_smallest;
    let mut fits = Vec::new();
    let mut push_fit = |name: String, pts: Option<(Vec<f64>, Vec<f64>, u64, u64)>, warnings: &mut Vec<String>| {
        match pts {
            Some((ts, es, t_min, t_max)) => {
                if let Ok(fit) = fit_rate(&ts, &es) {
                    fits.push(FitRow { series: name, points: ts.len(), t_min, t_max, fit });
                }
            }
            None => warnings.push(format!("no rate fit for {name}: need 3 positive points")),
        }
    };
    for s in &series {
        let name = mode_name(s.averaging);
        push_fit(name.to_string(), fit_points(&s.rows, |r| r.mean, drop), &mut warnings);
        for (q, &l) in levels.iter().enumerate() {
            push_fit(format!("{name}:{}", level_label(l)), fit_points(&s.rows, |r| r.quantiles[q], drop), &mut warnings);
        }
    }
    if cfg.problem.mu > 0.0 {
        push_fit("mu_dist2".into(), fit_points(&series[0].rows, |r| r.mu_dist2_mean, drop), &mut warnings);
    }

    let assertions = cfg
        .eval
        .assert
        .iter()
        .map(|a| {
            let slope = fits.iter().find(|f| f.series == a.series).map(|f| f.fit.slope);
            AssertionOutcome {
                series: a.series.clone(),
                expected: a.slope,
                tol: a.tol,
                slope,
                pass: slope.is_some_and(|s| (s - a.slope).abs() <= a.tol),
            }
        })
        .collect();

    let config_digest = cfg.digest()?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        git_describe: option_env!("HTCLIP_GIT_DESCRIBE").unwrap_or("unknown").to_string(),
        master_seed: master,
        config_digest: config_digest.clone(),
        config: cfg.canonical(),
        horizons: setups
            .iter()
            .map(|s| HorizonRecord {
                t: s.horizon,
                schedule: s.schedule.clone(),
                noise: s.oracle.noise,
                hardness: s.hard.as_ref().map(|h| h.params),
                codebook_size: s.hard.as_ref().map(|h| h.codebook.achieved_size),
            })
            .collect(),
    };
    Ok(ExperimentResult { config_digest, quantile_levels: levels, series, fits, assertions, warnings, manifest })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `series.csv` body for one averaging mode.
pub fn series_csv(rows: &[SeriesRow], levels: &[f64]) -> String {
    let mut out = String::from("T,n,mean,std");
    for &l in levels {
        out.push(',');
        out.push_str(&level_label(l));
    }
    out.push_str(",mu_dist2_mean,clip_rate\n");
    for r in rows {
        let _ = write!(out, "{},{},{},{}", r.t, r.n, num(r.mean), num(r.std));
        for q in &r.quantiles {
            let _ = write!(out, ",{}", num(*q));
        }
        let _ = writeln!(out, ",{},{}", num(r.mu_dist2_mean), num(r.clip_rate));
    }
    out
}

pub fn fit_csv(fits: &[FitRow]) -> String {
    let mut out = String::from("series,slope,intercept,slope_stderr,r2,points,t_min,t_max\n");
    for f in fits {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            f.series,
            num(f.fit.slope),
            num(f.fit.intercept),
            num(f.fit.slope_stderr),
            num(f.fit.r_squared),
            f.points,
            f.t_min,
            f.t_max
        );
    }
    out
}

/// Parses a `series.csv` body back into rows.
pub fn parse_series_csv(text: &str) -> Result<Vec<SeriesRow>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().map(|h| h.split(',').collect()).unwrap_or_default();
    let nq = header.iter().filter(|h| h.starts_with("q_")).count();
    if header.len() != 6 + nq {
        return contract("malformed series header");
    }
    let bad = |_| Error::Contract("malformed series row".into());
    lines
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != header.len() {
                return contract("malformed series row");
            }
            let f = |i: usize| c[i].parse::<f64>().map_err(bad);
            Ok(SeriesRow {
                t: c[0].parse().map_err(|_| Error::Contract("malformed T".into()))?,
                n: c[1].parse().map_err(|_| Error::Contract("malformed n".into()))?,
                mean: f(2)?,
                std: f(3)?,
                quantiles: (0..nq).map(|q| f(4 + q)).collect::<Result<_>>()?,
                mu_dist2_mean: f(4 + nq)?,
                clip_rate: f(5 + nq)?,
            })
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// File name for a mode's series; the first mode owns `series.csv`.
pub fn series_file_name(index: usize, mode: Averaging) -> String {
    if index == 0 {
        "series.csv".into()
    } else {
        format!("series_{}.csv", mode_name(mode))
    }
}

/// Writes the series, `fit.csv` and `manifest.json` into `out_dir`. Files are
/// staged under temporary names and only renamed once all were written.
pub fn persist(result: &ExperimentResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if result.series.is_empty() || result.series[0].rows.is_empty() {
        return contract("nothing to persist");
    }
    let mut files: Vec<(String, String)> = result
        .series
        .iter()
        .enumerate()
        .map(|(i, s)| (series_file_name(i, s.averaging), series_csv(&s.rows, &result.quantile_levels)))
        .collect();
    files.push(("fit.csv".into(), fit_csv(&result.fits)));
    let mut manifest = serde_json::to_string_pretty(&result.manifest)?;
    manifest.push('\n');
    files.push(("manifest.json".into(), manifest));

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut staged = Vec::new();
    for (name, body) in &files {
        let tmp = out_dir.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, body) {
            for t in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(io_err(&tmp)(e));
        }
        staged.push(tmp);
    }
    let mut written = Vec::new();
    for (tmp, (name, _)) in staged.iter().zip(&files) {
        let dst = out_dir.join(name);
        fs::rename(tmp, &dst).map_err(io_err(&dst))?;
        written.push(dst);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize(&v, &[0.9, 0.5, 0.01]).unwrap();
        assert_eq!(s.quantiles, vec![90.0, 50.0, 1.0]);
        let one = summarize(&[3.5], &[0.9]).unwrap();
        assert_eq!((one.mean, one.quantiles[0], one.std), (3.5, 3.5, 0.0));
    }

    #[test]
    fn exact_power_law() {
        let ts: Vec<f64> = (0..6).map(|k| 1024.0 * 2f64.powi(k)).collect();
        let es: Vec<f64> = ts.iter().map(|t| 3.0 * t.powf(-1.0 / 3.0)).collect();
        let f = fit_rate(&ts, &es).unwrap();
        assert!((f.slope + 1.0 / 3.0).abs() < 1e-12);
        let c = fit_rate(&ts, &[2.0; 6]).unwrap();
        assert!(c.slope.abs() < 1e-12);
        assert!(fit_rate(&ts[..2], &es[..2]).is_err());
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        assert_eq!(derive_seed(7, 3, 1), derive_seed(7, 3, 1));
        assert_ne!(derive_seed(7, 0, 0), derive_seed(7, 1, 0));
        assert_ne!(derive_seed(7, 0, 1), derive_seed(7, 1, 0));
    }
}
