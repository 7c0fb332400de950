//! Clipped SGD and its stabilized variant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clipping::clip_in_place;
use crate::error::{contract, Error, Result};
use crate::noise::GradOracle;
use crate::problems::{eval_f, prox_step_into, stabilized_prox_step_into, CompositeObjective};
use crate::schedules::{averaging_weight, Schedule};
use crate::vecops::dist_sq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// `(1/T) Σ x_{t+1}`.
    Plain,
    /// `Σ (t+4)(t+5) x_{t+1} / Σ (t+4)(t+5)`.
    Weighted,
    Last,
}

/// Which iterations get a checkpoint. The final iteration is always recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RecordStride {
    Every { k: u64 },
    /// `t = 1`, then each next `t` at least `ratio` times the previous.
    Geometric { ratio: f64 },
    FinalOnly,
}

impl Default for RecordStride {
    fn default() -> Self {
        RecordStride::Geometric { ratio: 2.0 }
    }
}

impl RecordStride {
    fn validate(&self) -> Result<()> {
        match *self {
            RecordStride::Every { k } if k == 0 => contract("record stride must be positive"),
            RecordStride::Geometric { ratio } if !(ratio > 1.0) => contract("geometric record ratio must exceed 1"),
            _ => Ok(()),
        }
    }

    fn next_after(&self, t: u64) -> u64 {
        match *self {
            RecordStride::Every { k } => t + k,
            RecordStride::Geometric { ratio } => ((t as f64 * ratio).ceil() as u64).max(t + 1),
            RecordStride::FinalOnly => u64::MAX,
        }
    }

    fn first(&self) -> u64 {
        match *self {
            RecordStride::Every { k } => k,
            RecordStride::Geometric { .. } => 1,
            RecordStride::FinalOnly => u64::MAX,
        }
    }
}

/// Suboptimality with the raw value kept next to its clamp at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subopt {
    pub raw: f64,
    pub clamped: f64,
}

impl Subopt {
    fn new(raw: f64) -> Self {
        Self { raw, clamped: raw.max(0.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Iterations completed; the state describes `x_{t+1}`.
    pub t: u64,
    pub x_last: Vec<f64>,
    pub avg_plain: Vec<f64>,
    pub avg_weighted: Vec<f64>,
    /// Filled when the objective carries a known optimum.
    pub subopt: Option<SuboptRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuboptRow {
    pub t: u64,
    pub plain: Subopt,
    pub weighted: Subopt,
    pub last: Subopt,
    /// `μ ‖x_{t+1} - x⋆‖²`.
    pub mu_dist_sq: f64,
    pub dist_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub iterations: u64,
    pub record_stride: RecordStride,
    pub x_last: Vec<f64>,
    pub avg_plain: Vec<f64>,
    pub avg_weighted: Vec<f64>,
    pub weight_sum: f64,
    pub checkpoints: Vec<Checkpoint>,
    /// Iterations with `‖g_t‖ > τ_t`.
    pub clip_events: u64,
}

impl Trajectory {
    fn start(x1: &[f64], stride: RecordStride) -> Self {
        Self {
            iterations: 0,
            record_stride: stride,
            x_last: x1.to_vec(),
            avg_plain: vec![0.0; x1.len()],
            avg_weighted: vec![0.0; x1.len()],
            weight_sum: 0.0,
            checkpoints: Vec::new(),
            clip_events: 0,
        }
    }

    fn absorb(&mut self, t: u64) {
        self.iterations = t;
        let inv_t = 1.0 / t as f64;
        let w = averaging_weight(t);
        self.weight_sum += w;
        let frac = w / self.weight_sum;
        for i in 0..self.x_last.len() {
            let x = self.x_last[i];
            self.avg_plain[i] += (x - self.avg_plain[i]) * inv_t;
            self.avg_weighted[i] += (x - self.avg_weighted[i]) * frac;
        }
    }

    fn checkpoint(&mut self, obj: &CompositeObjective) -> Result<()> {
        let mut cp = Checkpoint {
            t: self.iterations,
            x_last: self.x_last.clone(),
            avg_plain: self.avg_plain.clone(),
            avg_weighted: self.avg_weighted.clone(),
            subopt: None,
        };
        if obj.optimum.is_some() {
            cp.subopt = Some(subopt_row(obj, &cp)?);
        }
        self.checkpoints.push(cp);
        Ok(())
    }

    pub fn final_subopt(&self) -> Option<&SuboptRow> {
        self.checkpoints.last().and_then(|c| c.subopt.as_ref())
    }
}

/// The requested aggregate of the iterates `x_2, …, x_{T+1}`.
pub fn average(traj: &Trajectory, mode: Averaging) -> Result<&[f64]> {
    if traj.iterations == 0 {
        return contract("trajectory has no iterations");
    }
    Ok(match mode {
        Averaging::Plain => &traj.avg_plain,
        Averaging::Weighted => &traj.avg_weighted,
        Averaging::Last => &traj.x_last,
    })
}

fn subopt_row(obj: &CompositeObjective, cp: &Checkpoint) -> Result<SuboptRow> {
    let opt = match &obj.optimum {
        Some(o) => o,
        None => return contract("objective has no known optimum"),
    };
    let dist_sq = dist_sq(&cp.x_last, &opt.x_star);
    Ok(SuboptRow {
        t: cp.t,
        plain: Subopt::new(eval_f(obj, &cp.avg_plain)? - opt.f_star),
        weighted: Subopt::new(eval_f(obj, &cp.avg_weighted)? - opt.f_star),
        last: Subopt::new(eval_f(obj, &cp.x_last)? - opt.f_star),
        mu_dist_sq: obj.mu * dist_sq,
        dist_sq,
    })
}

/// `F(aggregate) - F⋆` for every checkpoint and averaging mode, plus
/// `μ ‖x_{t+1} - x⋆‖²`.
pub fn suboptimality_series(traj: &Trajectory, obj: &CompositeObjective) -> Result<Vec<SuboptRow>> {
    traj.checkpoints.iter().map(|cp| subopt_row(obj, cp)).collect()
}

fn check_run(obj: &CompositeObjective, schedule: &Schedule, horizon: u64, x1: &[f64], stride: &RecordStride) -> Result<()> {
    if horizon == 0 {
        return contract("need at least one iteration");
    }
    if x1.len() != obj.dim() {
        return contract("initial point has the wrong dimension");
    }
    if !obj.domain.contains(x1, 1e-12) {
        return contract("initial point lies outside the domain");
    }
    stride.validate()?;
    let smu = schedule.params.mu;
    let matches = if schedule.regime.is_convex() {
        obj.mu == 0.0
    } else {
        (smu - obj.mu).abs() <= 1e-12 * obj.mu.max(smu)
    };
    if !matches {
        return contract(format!(
            "regime/mu mismatch: schedule {} with mu = {smu}, objective mu = {}",
            schedule.regime, obj.mu
        ));
    }
    Ok(())
}

fn check_finite(x: &[f64], t: u64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration: t })
    }
}

fn valid_eta(eta: f64, t: u64) -> Result<f64> {
    if eta > 0.0 && eta.is_finite() {
        Ok(eta)
    } else {
        contract(format!("stepsize {eta} at iteration {t} is not a positive finite number"))
    }
}

fn valid_tau(tau: f64, t: u64) -> Result<f64> {
    if tau > 0.0 {
        Ok(tau)
    } else {
        contract(format!("threshold {tau} at iteration {t} is not positive"))
    }
}

/// Shared driver; `stabilized` switches the update rule.
#[allow(clippy::too_many_arguments)]
fn run<R: Rng + ?Sized>(
    obj: &CompositeObjective,
    oracle: &GradOracle,
    schedule: &Schedule,
    horizon: u64,
    x1: &[f64],
    rng: &mut R,
    stride: RecordStride,
    stabilized: bool,
) -> Result<Trajectory> {
    check_run(obj, schedule, horizon, x1, &stride)?;
    if stabilized && obj.mu != 0.0 {
        return contract("the stabilized method is only defined for mu = 0");
    }
    let d = x1.len();
    let mut traj = Trajectory::start(x1, stride);
    let mut g = vec![0.0; d];
    let mut next_x = vec![0.0; d];
    let mut next_record = stride.first();
    let mut eta = valid_eta(schedule.eta(1), 1)?;
    for t in 1..=horizon {
        oracle.sample_into(obj, &traj.x_last, rng, &mut g)?;
        check_finite(&g, t)?;
        let tau = valid_tau(schedule.tau(t), t)?;
        if clip_in_place(&mut g, tau) {
            traj.clip_events += 1;
        }
        if stabilized {
            let eta_next = valid_eta(schedule.eta(t + 1), t + 1)?;
            stabilized_prox_step_into(&obj.r, &obj.domain, &traj.x_last, x1, &g, eta, eta_next, &mut next_x)?;
            eta = eta_next;
        } else {
            prox_step_into(&obj.r, &obj.domain, &traj.x_last, &g, eta, &mut next_x)?;
            if t < horizon {
                eta = valid_eta(schedule.eta(t + 1), t + 1)?;
            }
        }
        check_finite(&next_x, t)?;
        std::mem::swap(&mut traj.x_last, &mut next_x);
        traj.absorb(t);
        if t == next_record || t == horizon {
            traj.checkpoint(obj)?;
            while next_record <= t {
                next_record = stride.next_after(next_record);
            }
        }
    }
    Ok(traj)
}

/// Clipped SGD: `x_{t+1} = argmin_X r(x) + ⟨clip_{τ_t}(g_t), x⟩ + ‖x - x_t‖²/(2η_t)`.
pub fn run_clipped_sgd<R: Rng + ?Sized>(
    obj: &CompositeObjective,
    oracle: &GradOracle,
    schedule: &Schedule,
    horizon: u64,
    x1: &[f64],
    rng: &mut R,
    stride: RecordStride,
) -> Result<Trajectory> {
    run(obj, oracle, schedule, horizon, x1, rng, stride, false)
}

/// Stabilized Clipped SGD: the same step with the extra anchor
/// `(η_t/η_{t+1} - 1)‖x - x₁‖²/(2η_t)`. Requires a nonincreasing stepsize and
/// `μ = 0`.
pub fn run_stabilized_clipped_sgd<R: Rng + ?Sized>(
    obj: &CompositeObjective,
    oracle: &GradOracle,
    schedule: &Schedule,
    horizon: u64,
    x1: &[f64],
    rng: &mut R,
    stride: RecordStride,
) -> Result<Trajectory> {
    run(obj, oracle, schedule, horizon, x1, rng, stride, true)
}
