//! Stepsize and clipping-threshold schedules for the six theorem presets.
//!
//! All thresholds are extended reals: `f64::INFINITY` means "never clip".

use serde::{Deserialize, Serialize};

use crate::algorithms::Averaging;
use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "cvx-hp-T")]
    CvxHpT,
    #[serde(rename = "cvx-hp-anytime")]
    CvxHpAnytime,
    #[serde(rename = "cvx-ex-T")]
    CvxExT,
    #[serde(rename = "cvx-ex-anytime")]
    CvxExAnytime,
    #[serde(rename = "str-hp")]
    StrHp,
    #[serde(rename = "str-ex")]
    StrEx,
}

impl Regime {
    pub const ALL: [Regime; 6] =
        [Regime::CvxHpT, Regime::CvxHpAnytime, Regime::CvxExT, Regime::CvxExAnytime, Regime::StrHp, Regime::StrEx];

    pub fn name(self) -> &'static str {
        match self {
            Regime::CvxHpT => "cvx-hp-T",
            Regime::CvxHpAnytime => "cvx-hp-anytime",
            Regime::CvxExT => "cvx-ex-T",
            Regime::CvxExAnytime => "cvx-ex-anytime",
            Regime::StrHp => "str-hp",
            Regime::StrEx => "str-ex",
        }
    }

    pub fn is_convex(self) -> bool {
        !matches!(self, Regime::StrHp | Regime::StrEx)
    }

    pub fn is_high_probability(self) -> bool {
        matches!(self, Regime::CvxHpT | Regime::CvxHpAnytime | Regime::StrHp)
    }

    pub fn needs_horizon(self) -> bool {
        matches!(self, Regime::CvxHpT | Regime::CvxExT)
    }

    pub fn is_anytime_convex(self) -> bool {
        matches!(self, Regime::CvxHpAnytime | Regime::CvxExAnytime)
    }

    /// Aggregate the regime's guarantee is stated for.
    pub fn averaging(self) -> Averaging {
        if self.is_convex() {
            Averaging::Plain
        } else {
            Averaging::Weighted
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub p: f64,
    pub sigma_s: f64,
    pub sigma_l: f64,
    pub g: f64,
    pub d: f64,
    pub mu: f64,
    pub delta: Option<f64>,
    pub alpha_clip: f64,
    pub t_known: Option<u64>,
}

/// `σ_l² / σ_s²`, with `0/0 = 0`.
pub fn d_eff_of(sigma_s: f64, sigma_l: f64) -> Result<f64> {
    if !(sigma_s >= 0.0) || !(sigma_l >= 0.0) {
        return contract("moments must be nonnegative");
    }
    if sigma_s > sigma_l {
        return contract(format!("need sigma_s <= sigma_l, got {sigma_s} > {sigma_l}"));
    }
    if sigma_l == 0.0 {
        return Ok(0.0);
    }
    Ok((sigma_l / sigma_s).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpParams {
    #[serde(with = "crate::ext_real")]
    pub tau_star: f64,
    #[serde(with = "crate::ext_real")]
    pub varphi_star: f64,
    /// `1 + ln φ⋆`, defined when `φ⋆ ≥ 1`.
    pub psi_star: Option<f64>,
}

fn ln3(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return contract(format!("delta = {delta} outside (0, 1]"));
    }
    Ok((3.0 / delta).ln())
}

fn check_noise(p: f64, sigma_s: f64, sigma_l: f64) -> Result<f64> {
    if !(p > 1.0 && p <= 2.0) {
        return contract(format!("p = {p} outside (1, 2]"));
    }
    d_eff_of(sigma_s, sigma_l)
}

fn psi(phi: f64) -> Option<f64> {
    (phi >= 1.0 && phi.is_finite()).then(|| 1.0 + phi.ln())
}

/// Threshold scale and log factor for the high-probability regimes.
pub fn hp_params(p: f64, sigma_s: f64, sigma_l: f64, delta: f64) -> Result<HpParams> {
    let d_eff = check_noise(p, sigma_s, sigma_l)?;
    let l3 = ln3(delta)?;
    if sigma_l == 0.0 {
        return Ok(HpParams { tau_star: f64::INFINITY, varphi_star: 0.0, psi_star: None });
    }
    let a = sigma_s * sigma_l.powf(p - 1.0) / l3;
    let b = if p < 2.0 { sigma_s * sigma_s / sigma_l.powf(2.0 - p) } else { f64::INFINITY };
    let tau_star = a.min(b).powf(1.0 / p);
    let varphi_star = (d_eff.sqrt() * l3).max(if p < 2.0 { d_eff } else { 0.0 });
    Ok(HpParams { tau_star, varphi_star, psi_star: psi(varphi_star) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExParams {
    #[serde(with = "crate::ext_real")]
    pub tau_tilde_star: f64,
    #[serde(with = "crate::ext_real")]
    pub varphi_tilde_star: f64,
    pub psi_tilde_star: Option<f64>,
}

/// Threshold scale for the in-expectation regimes. At `p = 2` no clipping is
/// needed and the threshold is `+∞`.
pub fn ex_params(p: f64, sigma_s: f64, sigma_l: f64) -> Result<ExParams> {
    let d_eff = check_noise(p, sigma_s, sigma_l)?;
    if p == 2.0 || sigma_l == 0.0 {
        return Ok(ExParams { tau_tilde_star: f64::INFINITY, varphi_tilde_star: 0.0, psi_tilde_star: None });
    }
    let tau = sigma_s.powf(2.0 / p) / sigma_l.powf(2.0 / p - 1.0);
    Ok(ExParams { tau_tilde_star: tau, varphi_tilde_star: d_eff, psi_tilde_star: psi(d_eff) })
}

/// Every constant a schedule resolved, for reporting. Entries not used by
/// the regime are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConstants {
    #[serde(with = "crate::ext_real")]
    pub d_eff: f64,
    pub ln_3_over_delta: Option<f64>,
    #[serde(with = "crate::ext_real::option")]
    pub tau_star: Option<f64>,
    #[serde(with = "crate::ext_real::option")]
    pub varphi_star: Option<f64>,
    pub psi_star: Option<f64>,
    #[serde(with = "crate::ext_real::option")]
    pub tau_tilde_star: Option<f64>,
    #[serde(with = "crate::ext_real::option")]
    pub varphi_tilde_star: Option<f64>,
    pub psi_tilde_star: Option<f64>,
    /// Horizon-dependent `φ` (or `φ̃`) of the known-horizon regimes.
    pub varphi: Option<f64>,
    pub eta_star: Option<f64>,
    #[serde(with = "crate::ext_real::option")]
    pub gamma_star: Option<f64>,
    pub lambda_star: Option<f64>,
    /// `G / (1 - α)`.
    pub tau_floor: f64,
    /// Coefficient of `t^{1/p}` (or `T^{1/p}`) in the threshold.
    #[serde(with = "crate::ext_real")]
    pub tau_growth: f64,
    /// Informational `φ⋆²` scale after which the leading terms dominate.
    #[serde(with = "crate::ext_real::option")]
    pub critical_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub regime: Regime,
    pub params: ScheduleParams,
    pub constants: ResolvedConstants,
    pub averaging: Averaging,
}

/// `a · b` with `0 · ∞ = 0`.
fn mulz(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// `x / y` with `x / 0 = +∞` for `x > 0`.
fn over(x: f64, y: f64) -> f64 {
    if y == 0.0 {
        f64::INFINITY
    } else {
        x / y
    }
}

pub fn make_schedule(regime: Regime, params: ScheduleParams) -> Result<Schedule> {
    let ScheduleParams { p, sigma_s, sigma_l, g, d, mu, delta, alpha_clip: alpha, t_known } = params;
    let d_eff = check_noise(p, sigma_s, sigma_l)?;
    if sigma_s == 0.0 && sigma_l > 0.0 {
        return contract("sigma_s = 0 < sigma_l gives an infinite effective dimension");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return contract(format!("alpha_clip = {alpha} outside (0, 1)"));
    }
    if !(g > 0.0) || !g.is_finite() {
        return contract("schedules need a finite Lipschitz constant G > 0");
    }
    if regime.is_convex() {
        if mu != 0.0 {
            return contract(format!("regime/mu mismatch: {regime} needs mu = 0, got {mu}"));
        }
        if !(d > 0.0) || !d.is_finite() {
            return contract("convex regimes need a finite distance D > 0");
        }
    } else if !(mu > 0.0) || !mu.is_finite() {
        return contract(format!("regime/mu mismatch: {regime} needs mu > 0, got {mu}"));
    }
    let horizon = if regime.needs_horizon() {
        match t_known {
            Some(t) if t >= 1 => Some(t as f64),
            _ => return contract(format!("{regime} needs a known horizon T >= 1")),
        }
    } else {
        None
    };
    let l3 = if regime.is_high_probability() {
        match delta {
            Some(dl) => Some(ln3(dl)?),
            None => return contract(format!("{regime} needs delta")),
        }
    } else {
        None
    };
    let tau_floor = g / (1.0 - alpha);
    let mut c = ResolvedConstants {
        d_eff,
        ln_3_over_delta: l3,
        tau_star: None,
        varphi_star: None,
        psi_star: None,
        tau_tilde_star: None,
        varphi_tilde_star: None,
        psi_tilde_star: None,
        varphi: None,
        eta_star: None,
        gamma_star: None,
        lambda_star: None,
        tau_floor,
        tau_growth: 0.0,
        critical_time: None,
    };
    let sl_p = sigma_l.powf(p);
    // the threshold only grows when there is noise to clip
    let growth = |scale: f64| if sigma_l == 0.0 { 0.0 } else { scale };
    let varphi_t = |phi_star: f64, t: f64| phi_star.min(((1.0 - alpha).powf(p) * phi_star * (sigma_l / g).powf(p) * t).sqrt());
    if regime.is_high_probability() {
        let hp = hp_params(p, sigma_s, sigma_l, delta.unwrap_or(1.0))?;
        c.tau_star = Some(hp.tau_star);
        c.varphi_star = Some(hp.varphi_star);
        c.psi_star = hp.psi_star;
        c.tau_growth = growth(hp.tau_star);
        c.critical_time = Some(hp.varphi_star * hp.varphi_star);
    } else {
        let ex = ex_params(p, sigma_s, sigma_l)?;
        c.tau_tilde_star = Some(ex.tau_tilde_star);
        c.varphi_tilde_star = Some(ex.varphi_tilde_star);
        c.psi_tilde_star = ex.psi_tilde_star;
        c.tau_growth = growth(ex.tau_tilde_star);
        c.critical_time = Some(ex.varphi_tilde_star * ex.varphi_tilde_star);
    }
    let dg = d / g;
    match regime {
        Regime::CvxHpT => {
            let t = horizon.unwrap_or(1.0);
            let l3 = l3.unwrap_or(1.0);
            let phi = varphi_t(c.varphi_star.unwrap_or(0.0), t);
            let coef = mulz(sigma_s.powf(2.0 / p - 1.0), sigma_l.powf(2.0 - 2.0 / p))
                + mulz(sigma_s.powf(1.0 / p) * sigma_l.powf(1.0 - 1.0 / p), l3.powf(1.0 - 1.0 / p));
            let eta = (dg / (phi + l3))
                .min(dg / ((sl_p / g.powf(p) + 1.0) * t).sqrt())
                .min(over(d, coef * t.powf(1.0 / p)));
            c.varphi = Some(phi);
            c.eta_star = Some(eta);
        }
        Regime::CvxExT => {
            let t = horizon.unwrap_or(1.0);
            let phi = varphi_t(c.varphi_tilde_star.unwrap_or(0.0), t);
            let coef = mulz(sigma_s.powf(2.0 / p - 1.0), sigma_l.powf(2.0 - 2.0 / p));
            let eta = over(dg, phi)
                .min(dg / ((sl_p / g.powf(p) + 1.0) * t).sqrt())
                .min(over(d, coef * t.powf(1.0 / p)));
            c.varphi = Some(phi);
            c.eta_star = Some(eta);
        }
        Regime::CvxHpAnytime => {
            let l3 = l3.unwrap_or(1.0);
            let phi = c.varphi_star.unwrap_or(0.0);
            let phipsi = if phi == 0.0 { 0.0 } else { phi * c.psi_star.unwrap_or(1.0) };
            c.gamma_star = Some(dg / (phipsi + l3));
            c.eta_star = Some(dg / (sl_p / g.powf(p) + 1.0).sqrt());
            let ts = c.tau_star.unwrap_or(f64::INFINITY);
            if ts.is_finite() && ts > 0.0 {
                c.lambda_star = Some(
                    d / (l3 * l3 + sl_p / ts.powf(p) + sigma_s * sigma_s * sigma_l.powf(2.0 * p - 2.0) / ts.powf(2.0 * p)).sqrt(),
                );
            }
        }
        Regime::CvxExAnytime => {
            let phi = c.varphi_tilde_star.unwrap_or(0.0);
            let phipsi = if phi == 0.0 { 0.0 } else { phi * c.psi_tilde_star.unwrap_or(1.0) };
            c.gamma_star = Some(over(dg, phipsi));
            c.eta_star = Some(dg / (sl_p / g.powf(p) + 1.0).sqrt());
            let ts = c.tau_tilde_star.unwrap_or(f64::INFINITY);
            if ts.is_finite() && ts > 0.0 {
                c.lambda_star = Some(
                    d / (sl_p / ts.powf(p) + sigma_s * sigma_s * sigma_l.powf(2.0 * p - 2.0) / ts.powf(2.0 * p)).sqrt(),
                );
            }
        }
        Regime::StrHp | Regime::StrEx => {}
    }
    Ok(Schedule { regime, params, constants: c, averaging: regime.averaging() })
}

impl Schedule {
    /// Stepsize at iteration `t ≥ 1`.
    pub fn eta(&self, t: u64) -> f64 {
        debug_assert!(t >= 1);
        let tf = t.max(1) as f64;
        let c = &self.constants;
        match self.regime {
            Regime::CvxHpT | Regime::CvxExT => c.eta_star.unwrap_or(f64::NAN),
            Regime::CvxHpAnytime | Regime::CvxExAnytime => {
                let mut eta = c.gamma_star.unwrap_or(f64::INFINITY).min(c.eta_star.unwrap_or(f64::NAN) / tf.sqrt());
                let ts = c.tau_star.or(c.tau_tilde_star).unwrap_or(f64::INFINITY);
                if let Some(lambda) = c.lambda_star {
                    eta = eta.min(lambda / (ts * tf.powf(1.0 / self.params.p)));
                }
                eta
            }
            Regime::StrHp | Regime::StrEx => 6.0 / (self.params.mu * tf),
        }
    }

    /// Clipping threshold at iteration `t ≥ 1`; `+∞` disables clipping.
    pub fn tau(&self, t: u64) -> f64 {
        let c = &self.constants;
        if c.tau_growth == 0.0 {
            return c.tau_floor;
        }
        if c.tau_growth == f64::INFINITY {
            return f64::INFINITY;
        }
        let clock = match self.regime {
            Regime::CvxHpT | Regime::CvxExT => self.params.t_known.unwrap_or(1),
            _ => t.max(1),
        } as f64;
        c.tau_floor.max(c.tau_growth * clock.powf(1.0 / self.params.p))
    }
}

/// `Γ_t = t(t+4)(t+5)/30` for the stepsizes `η_s = 6/(μ s)`.
pub fn gamma_t(t: u64, mu: f64) -> Result<f64> {
    if t < 1 {
        return contract("Gamma_t needs t >= 1");
    }
    if !(mu > 0.0) {
        return contract("Gamma_t needs mu > 0");
    }
    let t = t as f64;
    Ok(t * (t + 4.0) * (t + 5.0) / 30.0)
}

/// `Π_{s=2}^t (1 + μη_{s-1}) / (1 + μη_s/2)` with `η_s = 6/(μ s)`, evaluated
/// term by term.
pub fn gamma_t_product(t: u64, mu: f64) -> Result<f64> {
    if t < 1 {
        return contract("Gamma_t needs t >= 1");
    }
    if !(mu > 0.0) {
        return contract("Gamma_t needs mu > 0");
    }
    let eta = |s: u64| 6.0 / (mu * s as f64);
    Ok((2..=t).map(|s| (1.0 + mu * eta(s - 1)) / (1.0 + mu * eta(s) / 2.0)).product())
}

/// Weight of iterate `x_{t+1}` in the strongly convex average.
pub fn averaging_weight(t: u64) -> f64 {
    let t = t as f64;
    (t + 4.0) * (t + 5.0)
}
