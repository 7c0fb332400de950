//! Composite objectives `F = f + r`, their subgradients, and the exact
//! proximal updates used by both solvers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::hardness::{HardInstance, HardKind};
use crate::vecops::{dist_sq, norm, sgn};

/// Nonsmooth convex part of the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FKind {
    /// `Σ M_i |x_i - y_i|`.
    AbsSum { m: Vec<f64>, y: Vec<f64> },
    /// `G ‖x - y‖`.
    EuclidNorm { g: f64, y: Vec<f64> },
    HardCvx(HardInstance),
    HardStr(HardInstance),
    /// `⟨c, x⟩`.
    Linear { c: Vec<f64> },
    /// `f_base + r_base - (μ/2)‖x - y‖²`, the convex part left over when a
    /// strongly convex function is split around `y`.
    Reduced { base: Box<FKind>, base_r: RKind, mu: f64, y: Vec<f64> },
}

/// Regularizer: either absent or an isotropic quadratic `(μ/2)‖x - c‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RKind {
    Zero,
    Quad { mu: f64, center: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Domain {
    AllSpace { d: usize },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub x_star: Vec<f64>,
    pub f_star: f64,
}

impl FKind {
    pub fn dim(&self) -> Option<usize> {
        match self {
            FKind::AbsSum { m, .. } => Some(m.len()),
            FKind::EuclidNorm { y, .. } => Some(y.len()),
            FKind::HardCvx(h) | FKind::HardStr(h) => Some(h.d),
            FKind::Linear { c } => Some(c.len()),
            FKind::Reduced { base, .. } => base.dim(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            FKind::AbsSum { m, y } => m.iter().zip(y).zip(x).map(|((m, y), x)| m * (x - y).abs()).sum(),
            FKind::EuclidNorm { g, y } => g * dist_sq(x, y).sqrt(),
            FKind::HardCvx(h) | FKind::HardStr(h) => h.f_value(x),
            FKind::Linear { c } => c.iter().zip(x).map(|(c, x)| c * x).sum(),
            FKind::Reduced { base, base_r, mu, y } => {
                base.value(x) + base_r.value(x) - 0.5 * mu * dist_sq(x, y)
            }
        }
    }

    /// Writes a subgradient at `x` into `out`, with `sgn(0) = 0` at kinks.
    pub fn subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            FKind::AbsSum { m, y } => {
                for i in 0..x.len() {
                    out[i] = m[i] * sgn(x[i] - y[i]);
                }
            }
            FKind::EuclidNorm { g, y } => {
                let r = dist_sq(x, y).sqrt();
                for i in 0..x.len() {
                    out[i] = if r > 0.0 { g * (x[i] - y[i]) / r } else { 0.0 };
                }
            }
            FKind::HardCvx(h) | FKind::HardStr(h) => h.subgrad(x, out),
            FKind::Linear { c } => out.copy_from_slice(c),
            FKind::Reduced { base, base_r, mu, y } => {
                base.subgrad_into(x, out);
                base_r.add_grad(x, out);
                for i in 0..x.len() {
                    out[i] -= mu * (x[i] - y[i]);
                }
            }
        }
    }

    /// Stochastic subgradient for the hard families (and reductions of
    /// them). Returns `false` when this kind has no built-in stochastic
    /// oracle.
    pub(crate) fn hard_stoch_grad<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) -> bool {
        match self {
            FKind::HardCvx(h) | FKind::HardStr(h) => {
                h.stoch_grad(x, rng, out);
                true
            }
            FKind::Reduced { base, base_r, mu, y } => {
                if !base.hard_stoch_grad(x, rng, out) {
                    return false;
                }
                base_r.add_grad(x, out);
                for i in 0..x.len() {
                    out[i] -= mu * (x[i] - y[i]);
                }
                true
            }
            _ => false,
        }
    }

    pub fn hard_instance(&self) -> Option<&HardInstance> {
        match self {
            FKind::HardCvx(h) | FKind::HardStr(h) => Some(h),
            FKind::Reduced { base, .. } => base.hard_instance(),
            _ => None,
        }
    }

    /// Lipschitz constant implied by the kind's own parameters.
    pub fn natural_lipschitz(&self) -> Option<f64> {
        match self {
            FKind::AbsSum { m, .. } => Some(norm(m)),
            FKind::EuclidNorm { g, .. } => Some(*g),
            FKind::HardCvx(h) | FKind::HardStr(h) => Some(h.lipschitz()),
            FKind::Linear { c } => Some(norm(c)),
            FKind::Reduced { .. } => None,
        }
    }
}

impl RKind {
    pub fn mu(&self) -> f64 {
        match self {
            RKind::Zero => 0.0,
            RKind::Quad { mu, .. } => *mu,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            RKind::Zero => 0.0,
            RKind::Quad { mu, center } => 0.5 * mu * dist_sq(x, center),
        }
    }

    fn add_grad(&self, x: &[f64], out: &mut [f64]) {
        if let RKind::Quad { mu, center } = self {
            for i in 0..x.len() {
                out[i] += mu * (x[i] - center[i]);
            }
        }
    }
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::AllSpace { d } => *d,
            Domain::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Domain::AllSpace { .. } => true,
            Domain::Ball { center, radius } => dist_sq(x, center).sqrt() <= radius + tol,
        }
    }

    /// Euclidean projection, in place.
    pub fn project_in_place(&self, x: &mut [f64]) {
        if let Domain::Ball { center, radius } = self {
            let r = dist_sq(x, center).sqrt();
            if r > *radius {
                let s = radius / r;
                for (xi, ci) in x.iter_mut().zip(center) {
                    *xi = ci + s * (*xi - ci);
                }
            }
        }
    }
}

pub fn project(domain: &Domain, x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    domain.project_in_place(&mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeObjective {
    pub f: FKind,
    pub r: RKind,
    pub domain: Domain,
    pub lipschitz_g: f64,
    pub mu: f64,
    pub optimum: Option<Optimum>,
}

impl CompositeObjective {
    /// Builds an objective with the Lipschitz constant implied by `f`.
    pub fn new(f: FKind, r: RKind, domain: Domain) -> Result<Self> {
        let g = match f.natural_lipschitz() {
            Some(g) => g,
            None => return contract("this f kind needs an explicit Lipschitz constant"),
        };
        Self::with_lipschitz(f, r, domain, g)
    }

    pub fn with_lipschitz(f: FKind, r: RKind, domain: Domain, lipschitz_g: f64) -> Result<Self> {
        let d = domain.dim();
        if d == 0 {
            return contract("dimension must be at least 1");
        }
        if f.dim() != Some(d) {
            return contract(format!("f has dimension {:?}, domain has {d}", f.dim()));
        }
        if let RKind::Quad { mu, center } = &r {
            if !(*mu > 0.0) || !mu.is_finite() {
                return contract("a quadratic regularizer needs a finite modulus mu > 0");
            }
            if center.len() != d {
                return contract("regularizer center has the wrong dimension");
            }
        }
        if let Domain::Ball { radius, .. } = &domain {
            if !(*radius >= 0.0) || !radius.is_finite() {
                return contract("ball radius must be finite and nonnegative");
            }
        }
        if !(lipschitz_g >= 0.0) {
            return contract("Lipschitz constant must be nonnegative");
        }
        let mu = r.mu();
        Ok(Self { f, r, domain, lipschitz_g, mu, optimum: None })
    }

    pub fn with_optimum(mut self, x_star: Vec<f64>, f_star: f64) -> Result<Self> {
        if x_star.len() != self.dim() {
            return contract("optimum has the wrong dimension");
        }
        self.optimum = Some(Optimum { x_star, f_star });
        Ok(self)
    }

    /// Hard instance as an unconstrained objective with its closed-form optimum.
    pub fn from_hard(h: HardInstance) -> Result<Self> {
        let d = h.d;
        let (x_star, f_star) = (h.x_star(), h.f_star());
        let obj = match h.kind {
            HardKind::Cvx => Self::new(FKind::HardCvx(h), RKind::Zero, Domain::AllSpace { d })?,
            HardKind::Str => {
                let mu = h.mu;
                Self::new(FKind::HardStr(h), RKind::Quad { mu, center: vec![0.0; d] }, Domain::AllSpace { d })?
            }
        };
        obj.with_optimum(x_star, f_star)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return contract(format!("point has dimension {}, objective has {}", x.len(), self.dim()));
        }
        Ok(())
    }

    pub fn eval_f(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.f.value(x))
    }

    pub fn eval_r(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.r.value(x))
    }

    /// Distance from `x_1` to the known minimizer.
    pub fn initial_distance(&self, x1: &[f64]) -> Option<f64> {
        self.optimum.as_ref().map(|o| dist_sq(&o.x_star, x1).sqrt())
    }
}

pub fn eval_f(obj: &CompositeObjective, x: &[f64]) -> Result<f64> {
    obj.check_dim(x)?;
    Ok(obj.f.value(x) + obj.r.value(x))
}

pub fn subgrad_f(obj: &CompositeObjective, x: &[f64]) -> Result<Vec<f64>> {
    obj.check_dim(x)?;
    let mut out = vec![0.0; x.len()];
    obj.f.subgrad_into(x, &mut out);
    Ok(out)
}

/// Shared closed form: minimizes
/// `r(x) + ⟨g, x⟩ + ‖x - x_t‖²/(2η) + κ‖x - x₁‖²/(2η)` over the domain.
///
/// With `κ = 0` the anchor is skipped entirely so the plain and stabilized
/// steps agree bit for bit.
fn prox_core(
    r: &RKind,
    domain: &Domain,
    x_t: &[f64],
    g: &[f64],
    eta: f64,
    anchor: Option<(&[f64], f64)>,
    out: &mut [f64],
) {
    match r {
        RKind::Zero => {
            for i in 0..out.len() {
                out[i] = x_t[i] - eta * g[i];
            }
        }
        RKind::Quad { mu, center } => {
            let denom = 1.0 + eta * mu;
            for i in 0..out.len() {
                out[i] = x_t[i] - eta * (g[i] - mu * center[i]);
            }
            if anchor.is_none() {
                out.iter_mut().for_each(|v| *v /= denom);
            }
        }
    }
    if let Some((x1, kappa)) = anchor {
        let denom = 1.0 + eta * r.mu() + kappa;
        for i in 0..out.len() {
            out[i] = (out[i] + kappa * x1[i]) / denom;
        }
    }
    domain.project_in_place(out);
}

pub fn prox_step_into(r: &RKind, domain: &Domain, x_t: &[f64], g: &[f64], eta: f64, out: &mut [f64]) -> Result<()> {
    if !(eta > 0.0) {
        return contract(format!("stepsize must be positive, got {eta}"));
    }
    prox_core(r, domain, x_t, g, eta, None, out);
    Ok(())
}

/// `argmin_{x ∈ X} r(x) + ⟨g, x⟩ + ‖x - x_t‖²/(2η)`.
pub fn prox_step(r: &RKind, domain: &Domain, x_t: &[f64], g: &[f64], eta: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x_t.len()];
    prox_step_into(r, domain, x_t, g, eta, &mut out)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn stabilized_prox_step_into(
    r: &RKind,
    domain: &Domain,
    x_t: &[f64],
    x_1: &[f64],
    g: &[f64],
    eta_t: f64,
    eta_next: f64,
    out: &mut [f64],
) -> Result<()> {
    if !(eta_next > 0.0) {
        return contract(format!("stepsize must be positive, got {eta_next}"));
    }
    if eta_next > eta_t {
        return contract(format!("stepsize increased from {eta_t} to {eta_next}"));
    }
    let kappa = eta_t / eta_next - 1.0;
    let anchor = if kappa == 0.0 { None } else { Some((x_1, kappa)) };
    prox_core(r, domain, x_t, g, eta_t, anchor, out);
    Ok(())
}

/// Stabilized step: the proximal step plus the anchor term
/// `(η_t/η_{t+1} - 1)‖x - x₁‖²/(2η_t)`.
pub fn stabilized_prox_step(
    r: &RKind,
    domain: &Domain,
    x_t: &[f64],
    x_1: &[f64],
    g: &[f64],
    eta_t: f64,
    eta_next: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x_t.len()];
    stabilized_prox_step_into(r, domain, x_t, x_1, g, eta_t, eta_next, &mut out)?;
    Ok(out)
}

/// Splits the `mu`-strongly convex function `F = f + r` of `obj` into a convex
/// remainder and the quadratic `(μ/2)‖x - y_ref‖²`. The result carries the
/// Lipschitz constant `5G`.
pub fn reduce_strongly_convex(obj: &CompositeObjective, mu: f64, y_ref: &[f64]) -> Result<CompositeObjective> {
    if !(mu > 0.0) {
        return contract(format!("reduction needs mu > 0, got {mu}"));
    }
    if mu > obj.mu {
        return contract(format!("objective is only known to be {}-strongly convex, asked for {mu}", obj.mu));
    }
    obj.check_dim(y_ref)?;
    let f = FKind::Reduced {
        base: Box::new(obj.f.clone()),
        base_r: obj.r.clone(),
        mu,
        y: y_ref.to_vec(),
    };
    let r = RKind::Quad { mu, center: y_ref.to_vec() };
    let mut out = CompositeObjective::with_lipschitz(f, r, obj.domain.clone(), 5.0 * obj.lipschitz_g)?;
    out.optimum = obj.optimum.clone();
    Ok(out)
}
