//! Stochastic gradient oracles, α-stable sampling, moment estimation and
//! effective-dimension lower bounds for additive noise.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{config_err, contract, Result};
use crate::problems::CompositeObjective;
use crate::vecops::{dot, norm};

/// Declared moment constants of the gradient noise.
///
/// `sigma_s` bounds the `p`-th moment along any unit direction and `sigma_l`
/// bounds the `p`-th moment of the full noise norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub p: f64,
    pub sigma_s: f64,
    pub sigma_l: f64,
}

impl NoiseSpec {
    pub fn new(p: f64, sigma_s: f64, sigma_l: f64) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) {
            return contract(format!("p = {p} outside (1, 2]"));
        }
        if !(sigma_s >= 0.0) || !sigma_s.is_finite() || !sigma_l.is_finite() {
            return contract("sigma_s and sigma_l must be finite and nonnegative");
        }
        if sigma_s > sigma_l {
            return contract(format!("need sigma_s <= sigma_l, got {sigma_s} > {sigma_l}"));
        }
        Ok(Self { p, sigma_s, sigma_l })
    }

    pub fn noiseless(p: f64) -> Result<Self> {
        Self::new(p, 0.0, 0.0)
    }

    /// Upper half of the admissible bracket: `sigma_l <= sqrt(π d / 2) sigma_s`.
    pub fn check_bracket(&self, d: usize) -> Result<()> {
        let cap = (PI * d as f64 / 2.0).sqrt() * self.sigma_s;
        if self.sigma_l > cap * (1.0 + 1e-12) {
            return contract(format!(
                "sigma_l = {} exceeds sqrt(pi d / 2) sigma_s = {cap} for d = {d}",
                self.sigma_l
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    pub gamma: f64,
}

impl StableParams {
    pub fn symmetric(alpha: f64, gamma: f64) -> Self {
        Self { alpha, beta: 0.0, gamma }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return contract(format!("stable index alpha = {} outside (0, 2]", self.alpha));
        }
        if !(-1.0..=1.0).contains(&self.beta) {
            return contract(format!("skewness beta = {} outside [-1, 1]", self.beta));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return contract("stable scale gamma must be finite and nonnegative");
        }
        Ok(())
    }
}

/// One draw from the stable law with characteristic function
/// `exp(-γ^α |t|^α (1 - iβ tan(πα/2) sgn t))` by the Chambers–Mallows–Stuck
/// transform. At `α = 2` this is `N(0, 2γ²)`.
pub fn sample_alpha_stable<R: Rng + ?Sized>(params: &StableParams, rng: &mut R) -> Result<f64> {
    params.validate()?;
    Ok(stable_unchecked(params, rng))
}

fn stable_unchecked<R: Rng + ?Sized>(params: &StableParams, rng: &mut R) -> f64 {
    let StableParams { alpha, beta, gamma } = *params;
    if gamma == 0.0 {
        return 0.0;
    }
    if alpha == 2.0 {
        let z: f64 = StandardNormal.sample(rng);
        return gamma * std::f64::consts::SQRT_2 * z;
    }
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = Exp1.sample(rng);
    if alpha == 1.0 {
        let bv = FRAC_PI_2 + beta * v;
        let x = (bv * v.tan() - beta * ((FRAC_PI_2 * w * v.cos()) / bv).ln()) / FRAC_PI_2;
        return gamma * x + beta * gamma * gamma.ln() / FRAC_PI_2;
    }
    let zeta = beta * (PI * alpha / 2.0).tan();
    let b = zeta.atan() / alpha;
    let s = (1.0 + zeta * zeta).powf(1.0 / (2.0 * alpha));
    let x = s * (alpha * (v + b)).sin() / v.cos().powf(1.0 / alpha)
        * ((v - alpha * (v + b)).cos() / w).powf((1.0 - alpha) / alpha);
    gamma * x
}

/// `E|X|^p` for a symmetric stable variable with index `alpha` and scale
/// `gamma` (requires `p < alpha`, or `alpha = 2`).
pub fn symmetric_stable_abs_moment(alpha: f64, gamma_scale: f64, p: f64) -> Result<f64> {
    if !(p > 0.0) || !(p < alpha || alpha == 2.0) {
        return contract(format!("E|X|^p is infinite for p = {p}, alpha = {alpha}"));
    }
    if alpha == 2.0 {
        return Ok((std::f64::consts::SQRT_2 * gamma_scale).powf(p) * gaussian_abs_moment(p));
    }
    Ok(gamma_scale.powf(p) * 2f64.powf(p) * gamma((1.0 + p) / 2.0) * gamma(1.0 - p / alpha)
        / (PI.sqrt() * gamma(1.0 - p / 2.0)))
}

/// `E|Z|^p` for a standard normal `Z`.
pub fn gaussian_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / PI.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum OracleKind {
    Deterministic,
    AdditiveGaussian { scales: Vec<f64> },
    AdditiveStable { params: Vec<StableParams> },
    /// Delegates to the hard instance stored in the objective.
    HardInstance,
}

/// Unbiased stochastic subgradient oracle with declared noise moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradOracle {
    pub kind: OracleKind,
    pub noise: NoiseSpec,
}

/// Moment constants implied by an additive noise kind at exponent `p`.
///
/// Gaussian and symmetric stable coordinates give the exact directional
/// constant; the total constant is an upper bound, additionally capped by
/// `sqrt(π d / 2) sigma_s`.
pub fn analytic_noise(kind: &OracleKind, obj: &CompositeObjective, p: f64) -> Result<NoiseSpec> {
    let d = obj.dim();
    match kind {
        OracleKind::Deterministic => NoiseSpec::noiseless(p),
        OracleKind::AdditiveGaussian { scales } => {
            check_len(scales.len(), d)?;
            if scales.iter().any(|s| !(*s >= 0.0)) {
                return contract("Gaussian scales must be nonnegative");
            }
            let smax = scales.iter().cloned().fold(0.0, f64::max);
            let sigma_s = smax * gaussian_abs_moment(p).powf(1.0 / p);
            let sigma_l = if p == 2.0 { norm(scales) } else { norm(scales).min(bracket_cap(d, sigma_s)) };
            NoiseSpec::new(p, sigma_s, sigma_l.max(sigma_s))
        }
        OracleKind::AdditiveStable { params } => {
            check_len(params.len(), d)?;
            let alpha = params[0].alpha;
            for sp in params {
                sp.validate()?;
                if sp.alpha != alpha {
                    return contract("all coordinates must share the stable index");
                }
                if sp.beta != 0.0 {
                    return contract("moment constants are only available for symmetric stable noise");
                }
            }
            if !(p < alpha || alpha == 2.0) {
                return config_err("noise.stable.alpha", format!("need alpha > p, got alpha = {alpha}, p = {p}"));
            }
            let unit = symmetric_stable_abs_moment(alpha, 1.0, p)?;
            let gammas: Vec<f64> = params.iter().map(|sp| sp.gamma).collect();
            let gmax = gammas.iter().cloned().fold(0.0, f64::max);
            // sup over unit e of (Σ |e_i|^α γ_i^α)^{1/α}
            let dir_scale = if gmax == 0.0 {
                0.0
            } else if alpha == 2.0 {
                gmax
            } else {
                let e = 2.0 * alpha / (2.0 - alpha);
                let s: f64 = gammas.iter().map(|g| (g / gmax).powf(e)).sum();
                gmax * s.powf((2.0 - alpha) / (2.0 * alpha))
            };
            let sigma_s = dir_scale * unit.powf(1.0 / p);
            let coord_sum: f64 = gammas.iter().map(|g| g.powf(p) * unit).sum();
            let mut sigma_l = coord_sum.powf(1.0 / p);
            if alpha == 2.0 {
                // Jensen through the second moment is tighter for Gaussians
                sigma_l = sigma_l.min((2.0 * gammas.iter().map(|g| g * g).sum::<f64>()).sqrt());
            }
            if p < 2.0 || alpha < 2.0 {
                sigma_l = sigma_l.min(bracket_cap(d, sigma_s));
            }
            NoiseSpec::new(p, sigma_s, sigma_l.max(sigma_s))
        }
        OracleKind::HardInstance => match obj.f.hard_instance() {
            Some(h) => h.declared_noise(p),
            None => contract("hard-instance oracle needs a hard objective"),
        },
    }
}

fn bracket_cap(d: usize, sigma_s: f64) -> f64 {
    (PI * d as f64 / 2.0).sqrt() * sigma_s
}

fn check_len(got: usize, d: usize) -> Result<()> {
    if got != d {
        return contract(format!("noise has {got} coordinates, objective has {d}"));
    }
    Ok(())
}

/// Builds an oracle for `obj`. Without `declared` the analytic constants are
/// used; a supplied declaration must dominate them.
pub fn make_oracle(obj: &CompositeObjective, kind: OracleKind, p: f64, declared: Option<NoiseSpec>) -> Result<GradOracle> {
    if let OracleKind::HardInstance = kind {
        if obj.f.hard_instance().is_none() {
            return config_err("noise.kind", "hard-instance noise needs a hard objective");
        }
    }
    let analytic = analytic_noise(&kind, obj, p)?;
    let noise = match declared {
        None => analytic,
        Some(dec) => {
            if dec.p != p {
                return contract("declared exponent differs from the oracle exponent");
            }
            let dec = NoiseSpec::new(dec.p, dec.sigma_s, dec.sigma_l)?;
            if dec.sigma_s < analytic.sigma_s * (1.0 - 1e-12) {
                return config_err(
                    "noise.sigma_s",
                    format!("declared {} is below the noise's directional moment {}", dec.sigma_s, analytic.sigma_s),
                );
            }
            dec
        }
    };
    Ok(GradOracle { kind, noise })
}

impl GradOracle {
    /// Writes `∇f(x) + ξ` (or the hard-instance stochastic subgradient) into `out`.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        obj: &CompositeObjective,
        x: &[f64],
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<()> {
        if x.len() != obj.dim() || out.len() != obj.dim() {
            return contract("oracle called with a point of the wrong dimension");
        }
        match &self.kind {
            OracleKind::Deterministic => obj.f.subgrad_into(x, out),
            OracleKind::AdditiveGaussian { scales } => {
                obj.f.subgrad_into(x, out);
                for (o, s) in out.iter_mut().zip(scales) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o += s * z;
                }
            }
            OracleKind::AdditiveStable { params } => {
                obj.f.subgrad_into(x, out);
                for (o, sp) in out.iter_mut().zip(params) {
                    *o += stable_unchecked(sp, rng);
                }
            }
            OracleKind::HardInstance => {
                if !obj.f.hard_stoch_grad(x, rng, out) {
                    return contract("hard-instance oracle needs a hard objective");
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, obj: &CompositeObjective, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.sample_into(obj, x, rng, &mut out)?;
        Ok(out)
    }

    /// All outcomes of the oracle at `x` with probabilities, when the noise
    /// has finite support.
    pub fn enumerate(&self, obj: &CompositeObjective, x: &[f64]) -> Result<Vec<(Vec<f64>, f64)>> {
        match &self.kind {
            OracleKind::Deterministic => {
                let mut g = vec![0.0; x.len()];
                obj.f.subgrad_into(x, &mut g);
                Ok(vec![(g, 1.0)])
            }
            OracleKind::HardInstance => {
                let h = obj
                    .f
                    .hard_instance()
                    .ok_or_else(|| crate::Error::Contract("hard-instance oracle needs a hard objective".into()))?;
                // the stochastic part differs from f's subgradient only for reductions,
                // whose extra terms are deterministic
                let mut base_exact = vec![0.0; x.len()];
                h.subgrad(x, &mut base_exact);
                let mut full_exact = vec![0.0; x.len()];
                obj.f.subgrad_into(x, &mut full_exact);
                let mut out = Vec::new();
                let mut g = vec![0.0; x.len()];
                h.for_each_outcome(|xi, prob| {
                    h.stoch_grad_at(x, xi, &mut g);
                    let v = (0..x.len()).map(|i| g[i] - base_exact[i] + full_exact[i]).collect();
                    out.push((v, prob));
                })?;
                Ok(out)
            }
            _ => contract("oracle noise does not have finite support"),
        }
    }
}

/// Uniformly random unit vector.
pub fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-300 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    /// Largest directional moment over the probed directions; a lower
    /// estimate of the supremum over the sphere.
    pub sigma_s_p_lower: f64,
    pub sigma_l_p: f64,
    pub exact: bool,
}

/// Estimates `sup_e E|⟨e, g - ∇f⟩|^p` (over coordinate axes plus `k` random
/// directions) and `E‖g - ∇f‖^p` at `x`.
///
/// With `exact` set and a finite-support oracle, expectations are computed by
/// enumeration instead of sampling.
#[allow(clippy::too_many_arguments)]
pub fn estimate_moments<R: Rng + ?Sized>(
    oracle: &GradOracle,
    obj: &CompositeObjective,
    x: &[f64],
    grad_true: &[f64],
    p: f64,
    n: usize,
    k: usize,
    exact: bool,
    rng: &mut R,
) -> Result<MomentEstimate> {
    let d = x.len();
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    dirs.extend((0..k).map(|_| random_unit(d, rng)));
    let mut dir_acc = vec![0.0; dirs.len()];
    let mut total = 0.0;
    let mut resid = vec![0.0; d];
    let mut accumulate = |g: &[f64], w: f64, dir_acc: &mut [f64], total: &mut f64| {
        for i in 0..d {
            resid[i] = g[i] - grad_true[i];
        }
        *total += w * norm(&resid).powf(p);
        for (acc, e) in dir_acc.iter_mut().zip(&dirs) {
            *acc += w * dot(e, &resid).abs().powf(p);
        }
    };
    if exact {
        for (g, prob) in oracle.enumerate(obj, x)? {
            accumulate(&g, prob, &mut dir_acc, &mut total);
        }
    } else {
        if n == 0 {
            return contract("need at least one sample");
        }
        let w = 1.0 / n as f64;
        let mut g = vec![0.0; d];
        for _ in 0..n {
            oracle.sample_into(obj, x, rng, &mut g)?;
            accumulate(&g, w, &mut dir_acc, &mut total);
        }
    }
    Ok(MomentEstimate {
        sigma_s_p_lower: dir_acc.iter().cloned().fold(0.0, f64::max),
        sigma_l_p: total,
        exact,
    })
}

/// `sup_{‖e‖=1} Σ_k w_k |⟨e, z_k⟩|^p` for a finite weighted point set.
///
/// The objective is convex and `p`-homogeneous, so the normalized gradient
/// map `e ← ∇h(e)/‖∇h(e)‖` never decreases it. Several starts (axes, the
/// heaviest points, a sphere grid for `d ≤ 3`) guard against local maxima.
pub fn directional_sup_moment(points: &[(Vec<f64>, f64)], p: f64) -> f64 {
    let Some((first, _)) = points.first() else {
        return 0.0;
    };
    let d = first.len();
    let h = |e: &[f64]| -> f64 { points.iter().map(|(z, w)| w * dot(e, z).abs().powf(p)).sum() };
    let mut starts: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut heavy: Vec<&(Vec<f64>, f64)> = points.iter().filter(|(z, _)| norm(z) > 0.0).collect();
    heavy.sort_by(|a, b| (b.1 * norm(&b.0).powf(p)).total_cmp(&(a.1 * norm(&a.0).powf(p))));
    for (z, _) in heavy.iter().take(8) {
        let n = norm(z);
        starts.push(z.iter().map(|v| v / n).collect());
    }
    match d {
        2 => starts.extend((0..64).map(|k| {
            let a = PI * k as f64 / 64.0;
            vec![a.cos(), a.sin()]
        })),
        3 => {
            let m = 200;
            let golden = PI * (3.0 - 5f64.sqrt());
            starts.extend((0..m).map(|k| {
                let z = 1.0 - (k as f64 + 0.5) / m as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * k as f64;
                vec![r * a.cos(), r * a.sin(), z]
            }));
        }
        _ => {}
    }
    // ascend only from the most promising starts
    let mut scored: Vec<(f64, Vec<f64>)> = starts.into_iter().map(|e| (h(&e), e)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = scored.first().map_or(0.0, |s| s.0);
    let mut grad = vec![0.0; d];
    for (_, mut e) in scored.into_iter().take(12) {
        let mut val = h(&e);
        for _ in 0..500 {
            grad.iter_mut().for_each(|v| *v = 0.0);
            for (z, w) in points {
                let ip = dot(&e, z);
                if ip != 0.0 {
                    let c = w * ip.abs().powf(p - 1.0) * ip.signum();
                    for i in 0..d {
                        grad[i] += c * z[i];
                    }
                }
            }
            let gn = norm(&grad);
            if gn == 0.0 {
                break;
            }
            let next: Vec<f64> = grad.iter().map(|v| v / gn).collect();
            let nv = h(&next);
            if nv <= val * (1.0 + 1e-15) {
                val = val.max(nv);
                break;
            }
            e = next;
            val = nv;
        }
        best = best.max(val);
    }
    best
}

/// Variants of the effective-dimension lower bound for additive noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeffVariant {
    Independent,
    Iid,
    Stable,
}

/// Lower bound on `d_eff` for independent coordinates with per-coordinate
/// `p`-th moments `sigmas`.
pub fn d_eff_independent(sigmas: &[f64], p: f64) -> Result<f64> {
    if !(p > 1.0 && p <= 2.0) {
        return contract(format!("p = {p} outside (1, 2]"));
    }
    if sigmas.is_empty() || sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return contract("need at least one finite nonnegative moment");
    }
    let mut s = sigmas.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let smax = s[0];
    if smax == 0.0 {
        return Ok(0.0);
    }
    // work with ratios to the largest moment to keep the powers finite
    let r: Vec<f64> = s.iter().map(|v| v / smax).collect();
    let mut best = 0.0f64;
    let mut partial = 0.0;
    for (j, rv) in r.iter().enumerate() {
        partial += rv.powf(p);
        let jj = (j + 1) as f64;
        best = best.max(jj.powf(1.0 - 2.0 / p) * partial.powf(2.0 / p));
    }
    let denom = if p == 2.0 {
        1.0
    } else {
        let e = 2.0 * p / (2.0 - p);
        2f64.powf(4.0 / p - 2.0) * r.iter().map(|v| v.powf(e)).sum::<f64>().powf(2.0 / p - 1.0)
    };
    Ok(best / denom)
}

/// `d^{2 - 2/p} / 2^{4/p - 2}`: the independent bound at equal moments.
pub fn d_eff_iid(d: usize, p: f64) -> Result<f64> {
    if d == 0 {
        return contract("need d >= 1");
    }
    if !(p > 1.0 && p <= 2.0) {
        return contract(format!("p = {p} outside (1, 2]"));
    }
    if p == 2.0 {
        return Ok(d as f64);
    }
    Ok((d as f64).powf(2.0 - 2.0 / p) / 2f64.powf(4.0 / p - 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableDeff {
    /// Bound at the requested gap `eps = alpha - p`.
    pub bound: f64,
    pub eps: f64,
    /// Largest gap for which the linear-in-`d` bound holds.
    pub eps_star: f64,
    /// `(p-1) / (p³ 3⁴ 2^{4/p} e^{1/p})`; the bound is at least this times `d`
    /// whenever `eps <= eps_star`.
    pub linear_constant: f64,
    pub linear_bound: f64,
}

/// Lower bound on `d_eff` for iid symmetric stable coordinates of index
/// `alpha = p + eps`. Uses `eps_star` when `eps` is `None`.
pub fn d_eff_stable(d: usize, p: f64, eps: Option<f64>) -> Result<StableDeff> {
    if d < 2 {
        return contract("stable bound needs d >= 2");
    }
    if !(p > 1.0 && p < 2.0) {
        return contract(format!("stable bound needs p in (1, 2), got {p}"));
    }
    let dd = d as f64;
    let eps_star = (p / (2.0 * dd.ln() - 1.0)).min(2.0 - p);
    let eps = eps.unwrap_or(eps_star);
    if !(eps > 0.0 && eps <= eps_star * (1.0 + 1e-12)) {
        return contract(format!("eps = {eps} outside (0, {eps_star}]"));
    }
    let base = (p - 1.0) / (p.powi(3) * 81.0 * 2f64.powf(4.0 / p));
    let bound = base * dd.powf(1.0 - 2.0 * eps / (p * (p + eps)));
    let linear_constant = base / (1.0 / p).exp();
    Ok(StableDeff { bound, eps, eps_star, linear_constant, linear_bound: linear_constant * dd })
}
