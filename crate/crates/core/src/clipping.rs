//! Norm clipping and verification of the clipping-error bounds.
//!
//! For `g^c = clip_τ(g)` with `E[g] = f`, the error splits into the centered
//! part `d^u = g^c - E[g^c]` and the bias `d^b = E[g^c] - f`. The six
//! bounds returned by [`clip_bounds`] control, in order: `‖d^u‖`,
//! `E‖d^u‖²`, `‖E[d^u d^uᵀ]‖` (twice, the second only when
//! `(1-α)τ ≥ ‖f‖`) and `‖d^b‖` (twice, same condition on the second).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::linalg::{jacobi_eigenvalues, operator_norm};
use crate::noise::{directional_sup_moment, GradOracle};
use crate::problems::CompositeObjective;
use crate::vecops::{dot, norm};

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return contract(format!("clipping threshold must be positive or +inf, got {tau}"));
    }
    Ok(())
}

/// Rescales `g` in place to norm at most `tau`. Returns whether it was
/// shrunk. `tau` must already be validated.
#[inline]
pub fn clip_in_place(g: &mut [f64], tau: f64) -> bool {
    if tau == f64::INFINITY {
        return false;
    }
    let n = norm(g);
    if n > tau {
        let s = tau / n;
        g.iter_mut().for_each(|v| *v *= s);
        true
    } else {
        false
    }
}

/// `min{1, τ/‖g‖} g`; `τ = +∞` disables clipping.
pub fn clip(g: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let mut out = g.to_vec();
    clip_in_place(&mut out, tau);
    Ok(out)
}

/// `a · b` with `0 · ∞ = 0`.
fn mulz(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// `τ^e` for extended `τ`.
fn tpow(tau: f64, e: f64) -> f64 {
    if tau == f64::INFINITY {
        if e > 0.0 {
            f64::INFINITY
        } else if e == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        tau.powf(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds {
    #[serde(with = "bounds_serde")]
    pub values: [f64; 6],
    /// Bounds 4 and 6 need `(1-α)τ ≥ ‖f‖`; the others always apply.
    pub applicable: [bool; 6],
}

mod bounds_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct E(#[serde(with = "crate::ext_real")] f64);

    pub fn serialize<S: Serializer>(v: &[f64; 6], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| E(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 6], D::Error> {
        let v = Vec::<E>::deserialize(d)?;
        let arr: Vec<f64> = v.into_iter().map(|e| e.0).collect();
        arr.try_into().map_err(|_| serde::de::Error::custom("expected six bounds"))
    }
}

/// The six clipping-error bounds at threshold `tau` (extended real).
pub fn clip_bounds(p: f64, sigma_s: f64, sigma_l: f64, f_norm: f64, tau: f64, alpha: f64) -> Result<ClipBounds> {
    check_tau(tau)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return contract(format!("alpha = {alpha} outside (0, 1)"));
    }
    let sl_p = sigma_l.powf(p);
    let ss_p = sigma_s.powf(p);
    let fp = f_norm.powf(p);
    let a1p = alpha.powf(1.0 - p);
    let t2p = tpow(tau, 2.0 - p);
    let t1p = tpow(tau, 1.0 - p);
    let tmp = tpow(tau, -p);
    let b1 = 2.0 * tau;
    let b2 = 4.0 * mulz(sl_p, t2p);
    let b3 = 4.0 * mulz(ss_p, t2p) + 4.0 * f_norm * f_norm;
    let b4 = 4.0 * mulz(ss_p, t2p) + 4.0 * a1p * mulz(sl_p * f_norm * f_norm, tmp);
    let b5 = std::f64::consts::SQRT_2 * mulz((sigma_l.powf(p - 1.0) + f_norm.powf(p - 1.0)) * sigma_s, t1p)
        + 2.0 * mulz((sl_p + fp) * f_norm, tmp);
    let b6 = mulz(sigma_s * sigma_l.powf(p - 1.0), t1p) + a1p * mulz(sl_p * f_norm, tmp);
    let chi = chi(tau, alpha, f_norm);
    Ok(ClipBounds { values: [b1, b2, b3, b4, b5, b6], applicable: [true, true, true, chi, true, chi] })
}

/// `1[(1-α)τ ≥ ‖f‖]`.
pub fn chi(tau: f64, alpha: f64, f_norm: f64) -> bool {
    (1.0 - alpha) * tau >= f_norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub du_max_norm: f64,
    pub du_sq_mean: f64,
    pub du_cov_opnorm: f64,
    pub db_norm: f64,
}

impl Measured {
    /// Measured quantity compared against bound `k` (0-based).
    pub fn for_bound(&self, k: usize) -> f64 {
        match k {
            0 => self.du_max_norm,
            1 => self.du_sq_mean,
            2 | 3 => self.du_cov_opnorm,
            _ => self.db_norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Method {
    ExactEnumeration { outcomes: usize },
    MonteCarlo { n: usize, margin_stderrs: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipErrorReport {
    #[serde(with = "crate::ext_real")]
    pub tau: f64,
    pub alpha: f64,
    pub p: f64,
    pub f_norm: f64,
    pub chi: bool,
    pub sigma_s: f64,
    pub sigma_l: f64,
    pub measured: Measured,
    /// Standard errors of the Monte Carlo estimates; absent for enumeration.
    pub stderr: Option<Measured>,
    pub bounds: ClipBounds,
    /// `None` where the bound does not apply.
    pub pass: [Option<bool>; 6],
    pub method: Method,
}

impl ClipErrorReport {
    pub fn all_pass(&self) -> bool {
        self.pass.iter().all(|p| p.unwrap_or(true))
    }

    /// One summary line per bound.
    pub fn summary_lines(&self) -> Vec<String> {
        (0..6)
            .map(|k| {
                let status = match self.pass[k] {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "SKIP",
                };
                format!(
                    "{status} bound {}: measured {:.6e} <= {}",
                    k + 1,
                    self.measured.for_bound(k),
                    crate::ext_real::display(self.bounds.values[k])
                )
            })
            .collect()
    }
}

fn judge(bounds: &ClipBounds, measured: &Measured, stderr: Option<&Measured>, margin: f64) -> [Option<bool>; 6] {
    let mut out = [None; 6];
    for (k, slot) in out.iter_mut().enumerate() {
        if bounds.applicable[k] {
            let slack = stderr.map_or(0.0, |s| margin * s.for_bound(k));
            *slot = Some(measured.for_bound(k) <= bounds.values[k] + slack);
        }
    }
    out
}

/// Exact clipping errors for an oracle with finite support, with `σ_s`, `σ_l`
/// computed from the same enumeration at `x`.
pub fn clip_error_exact(
    oracle: &GradOracle,
    obj: &CompositeObjective,
    x: &[f64],
    grad_true: &[f64],
    tau: f64,
    alpha: f64,
) -> Result<ClipErrorReport> {
    check_tau(tau)?;
    let outcomes = oracle.enumerate(obj, x)?;
    clip_error_from_support(&outcomes, grad_true, tau, alpha, oracle.noise.p)
}

/// [`clip_error_exact`] on an explicit weighted support.
pub fn clip_error_from_support(
    outcomes: &[(Vec<f64>, f64)],
    grad_true: &[f64],
    tau: f64,
    alpha: f64,
    p: f64,
) -> Result<ClipErrorReport> {
    check_tau(tau)?;
    let d = grad_true.len();
    if outcomes.iter().any(|(g, _)| g.len() != d) {
        return contract("support points have the wrong dimension");
    }
    let clipped: Vec<Vec<f64>> = outcomes
        .iter()
        .map(|(g, _)| {
            let mut c = g.clone();
            clip_in_place(&mut c, tau);
            c
        })
        .collect();
    let mut mean = vec![0.0; d];
    for (c, (_, w)) in clipped.iter().zip(outcomes) {
        for i in 0..d {
            mean[i] += w * c[i];
        }
    }
    let mut cov = vec![0.0; d * d];
    let mut sq = 0.0;
    let mut max_norm = 0.0f64;
    let mut du = vec![0.0; d];
    for (c, (_, w)) in clipped.iter().zip(outcomes) {
        for i in 0..d {
            du[i] = c[i] - mean[i];
        }
        let n2 = dot(&du, &du);
        if *w > 0.0 {
            max_norm = max_norm.max(n2.sqrt());
        }
        sq += w * n2;
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += w * du[i] * du[j];
            }
        }
    }
    let db: Vec<f64> = (0..d).map(|i| mean[i] - grad_true[i]).collect();
    let measured = Measured {
        du_max_norm: max_norm,
        du_sq_mean: sq,
        du_cov_opnorm: operator_norm(&cov, d)?,
        db_norm: norm(&db),
    };
    let resid: Vec<(Vec<f64>, f64)> = outcomes
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(g, w)| ((0..d).map(|i| g[i] - grad_true[i]).collect(), *w))
        .collect();
    let sigma_l = resid.iter().map(|(r, w)| w * norm(r).powf(p)).sum::<f64>().powf(1.0 / p);
    let sigma_s = directional_sup_moment(&resid, p).powf(1.0 / p).min(sigma_l);
    let f_norm = norm(grad_true);
    let bounds = clip_bounds(p, sigma_s, sigma_l, f_norm, tau, alpha)?;
    let pass = judge(&bounds, &measured, None, 0.0);
    Ok(ClipErrorReport {
        tau,
        alpha,
        p,
        f_norm,
        chi: chi(tau, alpha, f_norm),
        sigma_s,
        sigma_l,
        measured,
        stderr: None,
        bounds,
        pass,
        method: Method::ExactEnumeration { outcomes: outcomes.len() },
    })
}

/// Standard errors allowed on top of a bound before a Monte Carlo check fails.
pub const MC_MARGIN_STDERRS: f64 = 3.0;

/// Monte Carlo clipping errors against the oracle's declared `σ_s`, `σ_l`.
///
/// Pass one estimates `E[g^c]` from `n` draws; pass two uses `n` fresh draws
/// for the centered moments.
#[allow(clippy::too_many_arguments)]
pub fn clip_error_mc<R: Rng + ?Sized>(
    oracle: &GradOracle,
    obj: &CompositeObjective,
    x: &[f64],
    grad_true: &[f64],
    tau: f64,
    alpha: f64,
    n: usize,
    rng: &mut R,
) -> Result<ClipErrorReport> {
    check_tau(tau)?;
    if n < 2 {
        return contract("Monte Carlo needs at least two draws per pass");
    }
    let d = x.len();
    let nf = n as f64;
    let mut g = vec![0.0; d];
    let mut mean = vec![0.0; d];
    for _ in 0..n {
        oracle.sample_into(obj, x, rng, &mut g)?;
        clip_in_place(&mut g, tau);
        for i in 0..d {
            mean[i] += g[i];
        }
    }
    mean.iter_mut().for_each(|v| *v /= nf);

    let mut cov = vec![0.0; d * d];
    let (mut sq, mut sq2, mut max_norm) = (0.0, 0.0, 0.0f64);
    let mut du = vec![0.0; d];
    let mut second_pass: Vec<f64> = Vec::with_capacity(n * d);
    for _ in 0..n {
        oracle.sample_into(obj, x, rng, &mut g)?;
        clip_in_place(&mut g, tau);
        for i in 0..d {
            du[i] = g[i] - mean[i];
        }
        let n2 = dot(&du, &du);
        max_norm = max_norm.max(n2.sqrt());
        sq += n2;
        sq2 += n2 * n2;
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += du[i] * du[j];
            }
        }
        second_pass.extend_from_slice(&du);
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= nf;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let sq_mean = sq / nf;
    let sq_var = (sq2 / nf - sq_mean * sq_mean).max(0.0) * nf / (nf - 1.0);
    let opnorm = operator_norm(&cov, d)?;
    // spread of the quadratic form along the leading eigenvector
    let e = leading_eigenvector(&cov, d);
    let (mut qm, mut qm2) = (0.0, 0.0);
    for row in second_pass.chunks_exact(d) {
        let q = dot(&e, row).powi(2);
        qm += q;
        qm2 += q * q;
    }
    qm /= nf;
    let q_var = (qm2 / nf - qm * qm).max(0.0) * nf / (nf - 1.0);

    let db: Vec<f64> = (0..d).map(|i| mean[i] - grad_true[i]).collect();
    let measured = Measured { du_max_norm: max_norm, du_sq_mean: sq_mean, du_cov_opnorm: opnorm, db_norm: norm(&db) };
    let stderr = Measured {
        du_max_norm: 0.0,
        du_sq_mean: (sq_var / nf).sqrt(),
        du_cov_opnorm: (q_var / nf).sqrt(),
        db_norm: (sq_mean / nf).sqrt(),
    };
    let NoiseSpecView { p, sigma_s, sigma_l } = NoiseSpecView::of(oracle);
    let f_norm = norm(grad_true);
    let bounds = clip_bounds(p, sigma_s, sigma_l, f_norm, tau, alpha)?;
    let pass = judge(&bounds, &measured, Some(&stderr), MC_MARGIN_STDERRS);
    Ok(ClipErrorReport {
        tau,
        alpha,
        p,
        f_norm,
        chi: chi(tau, alpha, f_norm),
        sigma_s,
        sigma_l,
        measured,
        stderr: Some(stderr),
        bounds,
        pass,
        method: Method::MonteCarlo { n, margin_stderrs: MC_MARGIN_STDERRS },
    })
}

struct NoiseSpecView {
    p: f64,
    sigma_s: f64,
    sigma_l: f64,
}

impl NoiseSpecView {
    fn of(o: &GradOracle) -> Self {
        Self { p: o.noise.p, sigma_s: o.noise.sigma_s, sigma_l: o.noise.sigma_l }
    }
}

fn leading_eigenvector(a: &[f64], d: usize) -> Vec<f64> {
    let lam = jacobi_eigenvalues(a, d).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // inverse-free: power iteration shifted so the leading eigenvalue dominates
    let mut x: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut y = vec![0.0; d];
    for _ in 0..500 {
        for i in 0..d {
            y[i] = (0..d).map(|j| a[i * d + j] * x[j]).sum::<f64>() + lam * x[i];
        }
        let n = norm(&y);
        if n == 0.0 {
            break;
        }
        for i in 0..d {
            x[i] = y[i] / n;
        }
    }
    let n = norm(&x);
    x.iter().map(|v| v / n.max(1e-300)).collect()
}
