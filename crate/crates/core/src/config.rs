//! JSON experiment configuration: schema, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{Averaging, RecordStride};
use crate::error::{config_err, Error, Result};
use crate::hardness::{CodebookKind, HardKind, HardRegime};
use crate::schedules::Regime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub noise: NoiseConfig,
    pub schedule: ScheduleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardness: Option<HardnessConfig>,
    pub run: RunConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// `G ‖x‖`, minimized at the origin.
    EuclidNorm,
    /// `(G/√d) Σ |x_i|`, minimized at the origin.
    AbsSum,
    /// Discrete hard instance; needs a `hardness` section.
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainConfig {
    AllSpace,
    /// Ball around the origin.
    Ball { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum X1Mode {
    Origin,
    Offset { v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub d: usize,
    /// Lipschitz constant; defaults to the one implied by `kind`.
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    /// Strong convexity of the quadratic regularizer; zero means none.
    #[serde(default)]
    pub mu: f64,
    /// Distance bound fed to the schedule; defaults to `‖x₁ - x⋆‖`.
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    #[serde(default = "all_space")]
    pub domain: DomainConfig,
    #[serde(default = "origin")]
    pub x1_mode: X1Mode,
}

fn all_space() -> DomainConfig {
    DomainConfig::AllSpace
}

fn origin() -> X1Mode {
    X1Mode::Origin
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    None,
    Gaussian,
    Stable,
    /// The three-point noise of the hard instance.
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableConfig {
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub p: f64,
    /// Declared moments; both or neither. For `hard` only `sigma_l` is read,
    /// as the class parameter the instance is tuned to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stable: Option<StableConfig>,
    /// Per-coordinate Gaussian standard deviations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    /// Isotropic Gaussian standard deviation, used when `scales` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Clipped,
    Stabilized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub regime: Regime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "half")]
    pub alpha_clip: f64,
    #[serde(default = "clipped")]
    pub algorithm: Algorithm,
}

fn half() -> f64 {
    0.5
}

fn clipped() -> Algorithm {
    Algorithm::Clipped
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardnessConfig {
    pub regime: HardRegime,
    pub d_star: usize,
    #[serde(default = "gv")]
    pub codebook: CodebookKind,
    /// Failure probability the two-point regimes are tuned to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_max_codewords")]
    pub max_codewords: usize,
}

fn gv() -> CodebookKind {
    CodebookKind::Gv
}

fn default_max_codewords() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: u64,
    pub max: u64,
    #[serde(default = "two")]
    pub ratio: f64,
}

fn two() -> f64 {
    2.0
}

impl GridSpec {
    /// `round(min · ratio^k)` for `k = 0, 1, …` while at most `max`, deduplicated.
    pub fn values(&self) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        if self.min == 0 || self.max < self.min || !(self.ratio > 1.0) {
            return out;
        }
        for k in 0.. {
            let t = (self.min as f64 * self.ratio.powi(k)).round();
            if t > self.max as f64 {
                break;
            }
            let t = t as u64;
            if out.last() != Some(&t) {
                out.push(t);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(alias = "T_grid")]
    pub t_grid: GridSpec,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub record_stride: RecordStride,
}

/// Expected fitted slope of one fit series; failing it makes `run` exit nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeAssertion {
    pub series: String,
    pub slope: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Defaults to `{1 - δ}`, or `{0.9}` when the regime has no `δ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_levels: Option<Vec<f64>>,
    /// Defaults to the regime's designated aggregate(s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub averaging: Option<Vec<Averaging>>,
    #[serde(default = "yes")]
    pub drop_smallest: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assert: Vec<SlopeAssertion>,
}

fn yes() -> bool {
    true
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { quantile_levels: None, averaging: None, drop_smallest: true, assert: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

fn pos_finite(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        config_err(key, format!("must be a positive finite number, got {v}"))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config {
            key: "<document>".into(),
            message: e.to_string(),
        })?;
        cfg.resolved()
    }

    /// Fills defaults and validates every cross-field constraint.
    pub fn resolved(mut self) -> Result<Self> {
        self.validate()?;
        let regime = self.schedule.regime;
        if self.eval.quantile_levels.is_none() {
            let level = match (regime.is_high_probability(), self.schedule.delta) {
                (true, Some(delta)) => 1.0 - delta,
                _ => 0.9,
            };
            self.eval.quantile_levels = Some(vec![level]);
        }
        if self.eval.averaging.is_none() {
            self.eval.averaging = Some(match regime.averaging() {
                Averaging::Weighted => vec![Averaging::Weighted, Averaging::Last],
                a => vec![a],
            });
        }
        if let Some(levels) = &self.eval.quantile_levels {
            if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
                return config_err("eval.quantile_levels", "levels must be nonempty and inside (0, 1)");
            }
        }
        if self.eval.averaging.as_ref().is_some_and(|a| a.is_empty()) {
            return config_err("eval.averaging", "need at least one averaging mode");
        }
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let pr = &self.problem;
        let nz = &self.noise;
        let sc = &self.schedule;
        if pr.d == 0 {
            return config_err("problem.d", "dimension must be at least 1");
        }
        if let Some(g) = pr.g {
            pos_finite("problem.G", g)?;
        }
        if let Some(d) = pr.distance {
            pos_finite("problem.D", d)?;
        }
        if !(pr.mu >= 0.0) || !pr.mu.is_finite() {
            return config_err("problem.mu", "must be finite and nonnegative");
        }
        if let DomainConfig::Ball { radius } = pr.domain {
            pos_finite("problem.domain.radius", radius)?;
        }
        if let X1Mode::Offset { v } = &pr.x1_mode {
            if v.len() != pr.d {
                return config_err("problem.x1_mode.v", format!("needs {} entries, got {}", pr.d, v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return config_err("problem.x1_mode.v", "entries must be finite");
            }
        }

        if !(nz.p > 1.0 && nz.p <= 2.0) {
            return config_err("noise.p", format!("must lie in (1, 2], got {}", nz.p));
        }
        for (key, v) in [("noise.sigma_s", nz.sigma_s), ("noise.sigma_l", nz.sigma_l)] {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return config_err(key, "must be finite and nonnegative");
                }
            }
        }
        if let (Some(s), Some(l)) = (nz.sigma_s, nz.sigma_l) {
            if s > l {
                return config_err(
                    "noise.sigma_s",
                    format!("sigma_s = {s} exceeds sigma_l = {l}; the moment assumption requires sigma_s <= sigma_l"),
                );
            }
        }
        match nz.kind {
            NoiseKind::Hard => {
                if nz.sigma_l.is_none() {
                    return config_err("noise.sigma_l", "hard noise needs the class parameter sigma_l");
                }
            }
            _ => {
                if nz.sigma_s.is_some() != nz.sigma_l.is_some() {
                    return config_err("noise.sigma_s", "declare both sigma_s and sigma_l or neither");
                }
            }
        }
        match nz.kind {
            NoiseKind::Stable => {
                let st = match &nz.stable {
                    Some(st) => st,
                    None => return config_err("noise.stable", "stable noise needs {alpha, beta, gamma}"),
                };
                if !(st.alpha > nz.p) || st.alpha > 2.0 {
                    return config_err(
                        "noise.stable.alpha",
                        format!("need p < alpha <= 2, got alpha = {}, p = {}", st.alpha, nz.p),
                    );
                }
                if !(st.beta.abs() <= 1.0) {
                    return config_err("noise.stable.beta", "must lie in [-1, 1]");
                }
                pos_finite("noise.stable.gamma", st.gamma)?;
            }
            NoiseKind::Gaussian => match (&nz.scales, nz.scale) {
                (Some(s), _) => {
                    if s.len() != pr.d {
                        return config_err("noise.scales", format!("needs {} entries, got {}", pr.d, s.len()));
                    }
                    if s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                        return config_err("noise.scales", "entries must be finite and nonnegative");
                    }
                }
                (None, Some(s)) => pos_finite("noise.scale", s)?,
                (None, None) => return config_err("noise.scales", "Gaussian noise needs scales or scale"),
            },
            NoiseKind::None | NoiseKind::Hard => {}
        }
        if (nz.kind == NoiseKind::Hard) != (pr.kind == ProblemKind::Hard) {
            return config_err("noise.kind", "hard noise goes with, and only with, the hard problem");
        }

        let convex = sc.regime.is_convex();
        if convex && pr.mu != 0.0 {
            return config_err(
                "schedule.regime",
                format!("regime/mu mismatch: {} needs mu = 0, got mu = {}", sc.regime, pr.mu),
            );
        }
        if !convex && !(pr.mu > 0.0) {
            return config_err("schedule.regime", format!("regime/mu mismatch: {} needs mu > 0", sc.regime));
        }
        if sc.algorithm == Algorithm::Stabilized && pr.mu != 0.0 {
            return config_err("schedule.algorithm", "the stabilized method requires mu = 0");
        }
        if sc.regime.is_high_probability() {
            match sc.delta {
                Some(d) if d > 0.0 && d <= 1.0 => {}
                _ => return config_err("schedule.delta", format!("{} needs delta in (0, 1]", sc.regime)),
            }
        }
        if !(sc.alpha_clip > 0.0 && sc.alpha_clip < 1.0) {
            return config_err("schedule.alpha_clip", "must lie in (0, 1)");
        }

        match (&self.hardness, pr.kind) {
            (Some(h), ProblemKind::Hard) => {
                if h.d_star == 0 || h.d_star > pr.d {
                    return config_err("hardness.d_star", format!("need 1 <= d_star <= d = {}", pr.d));
                }
                let want = if convex { HardKind::Cvx } else { HardKind::Str };
                if h.regime.kind() != want {
                    return config_err("hardness.regime", format!("{:?} instance does not match {}", h.regime, sc.regime));
                }
                if h.regime.is_twopoint() && !h.delta.is_some_and(|d| d > 0.0 && d < 0.125) {
                    return config_err("hardness.delta", "two-point regimes need delta in (0, 1/8)");
                }
                if h.max_codewords == 0 {
                    return config_err("hardness.max_codewords", "must be at least 1");
                }
                if pr.g.is_none() || pr.distance.is_none() {
                    return config_err("problem.G", "the hard problem needs explicit G and D");
                }
                if pr.domain != DomainConfig::AllSpace {
                    return config_err("problem.domain", "the hard problem is unconstrained");
                }
            }
            (None, ProblemKind::Hard) => return config_err("hardness", "the hard problem needs a hardness section"),
            (Some(_), _) => return config_err("hardness", "only the hard problem takes a hardness section"),
            (None, _) => {}
        }

        if self.run.trials == 0 {
            return config_err("run.trials", "need at least one trial");
        }
        let g = &self.run.t_grid;
        if g.min == 0 || g.max < g.min {
            return config_err("run.t_grid", format!("need 1 <= min <= max, got [{}, {}]", g.min, g.max));
        }
        if !(g.ratio > 1.0) || !g.ratio.is_finite() {
            return config_err("run.t_grid.ratio", "must exceed 1");
        }
        match self.run.record_stride {
            RecordStride::Every { k: 0 } => return config_err("run.record_stride", "k must be positive"),
            RecordStride::Geometric { ratio } if !(ratio > 1.0) => {
                return config_err("run.record_stride", "ratio must exceed 1")
            }
            _ => {}
        }
        Ok(())
    }

    /// The config as stored in manifests and hashed: output location removed.
    pub fn canonical(&self) -> Self {
        Self { output: None, ..self.clone() }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(&self.canonical())?;
        let hash = Sha256::digest(&bytes);
        Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn quantile_levels(&self) -> &[f64] {
        self.eval.quantile_levels.as_deref().unwrap_or(&[])
    }

    pub fn averaging_modes(&self) -> &[Averaging] {
        self.eval.averaging.as_deref().unwrap_or(&[])
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    ExperimentConfig::from_json(&text)
}
