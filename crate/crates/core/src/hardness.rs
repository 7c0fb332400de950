//! Discrete hard instances used to witness the lower bounds.
//!
//! Every instance is built on the three-point coordinate law `D_v`: coordinate
//! `i` is `0` with probability `1 - q_i`, `+1` with probability
//! `(1 + v_i θ_i) q_i / 2` and `-1` otherwise. The convex family is a weighted
//! sum of absolute values; the strongly convex family is linear plus a
//! quadratic regularizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::noise::NoiseSpec;
use crate::vecops::{norm, sgn};

/// Largest dimension for which the `3^d` support is enumerated.
pub const MAX_ENUM_DIM: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HardKind {
    Cvx,
    Str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HardRegime {
    CvxFano,
    CvxTwopoint,
    StrFano,
    StrTwopoint,
}

impl HardRegime {
    pub fn kind(self) -> HardKind {
        match self {
            HardRegime::CvxFano | HardRegime::CvxTwopoint => HardKind::Cvx,
            HardRegime::StrFano | HardRegime::StrTwopoint => HardKind::Str,
        }
    }

    pub fn is_twopoint(self) -> bool {
        matches!(self, HardRegime::CvxTwopoint | HardRegime::StrTwopoint)
    }
}

/// Problem-class constants a regime is instantiated against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardInputs {
    pub g: f64,
    pub d: f64,
    /// Only read by the strongly convex regimes.
    pub mu: f64,
    pub sigma_l: f64,
    pub p: f64,
    pub horizon: u64,
    pub d_star: usize,
    /// Only read by the two-point regimes.
    pub delta: f64,
}

/// Scalar parameters shared by the first `d_star` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardParams {
    pub regime: HardRegime,
    pub q: f64,
    pub theta: f64,
    pub m: f64,
    /// Center magnitude; zero for the strongly convex family.
    pub y: f64,
    pub mu: f64,
    pub d_star: usize,
}

pub fn hard_params(regime: HardRegime, inp: &HardInputs) -> Result<HardParams> {
    let HardInputs { g, d, mu, sigma_l, p, horizon, d_star, delta } = *inp;
    if d_star == 0 {
        return contract("d_star must be at least 1");
    }
    if horizon == 0 {
        return contract("horizon must be at least 1");
    }
    if !(p > 1.0 && p <= 2.0) {
        return contract(format!("p = {p} outside (1, 2]"));
    }
    if g < 0.0 || d < 0.0 || sigma_l < 0.0 {
        return contract("G, D and sigma_l must be nonnegative");
    }
    let t = horizon as f64;
    let ds = d_star as f64;
    let (q, theta) = if regime.is_twopoint() {
        if !(delta > 0.0 && delta < 0.125) {
            return contract(format!("two-point regimes need delta in (0, 1/8), got {delta}"));
        }
        let theta = 0.5;
        let q = ((1.0 / (8.0 * delta)).ln() / (t * ds * theta * ((1.0 + theta) / (1.0 - theta)).ln()))
            .min(1.0);
        (q, theta)
    } else {
        (1.0 / t, 0.1)
    };
    let noise_cap = sigma_l / (4.0 * q * ds).powf(1.0 / p);
    let (m, y) = match regime.kind() {
        HardKind::Cvx => ((g / (q * ds.sqrt())).min(noise_cap), d / ds.sqrt()),
        HardKind::Str => {
            if !(mu > 0.0) {
                return contract("strongly convex regimes need mu > 0");
            }
            let m = (d / (theta * q * ds.sqrt()))
                .min(g / (mu * theta * q * ds.sqrt()))
                .min(noise_cap / mu);
            (m, 0.0)
        }
    };
    Ok(HardParams {
        regime,
        q,
        theta,
        m,
        y,
        mu: if regime.kind() == HardKind::Str { mu } else { 0.0 },
        d_star,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstance {
    pub kind: HardKind,
    pub d: usize,
    pub d_star: usize,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub theta: Vec<f64>,
    pub m: Vec<f64>,
    /// Per-coordinate centers (convex family; all zero otherwise).
    pub y: Vec<f64>,
    pub mu: f64,
}

impl HardInstance {
    /// Builds an instance whose first `d_star` coordinates carry the
    /// parameters; the rest have zero scale and center.
    pub fn new(kind: HardKind, d: usize, params: &HardParams, v: Vec<f64>) -> Result<Self> {
        let d_star = params.d_star;
        if d_star == 0 || d < d_star {
            return contract(format!("need d >= d_star >= 1, got d = {d}, d_star = {d_star}"));
        }
        Self::from_parts(
            kind,
            d_star,
            v,
            vec![params.q; d],
            vec![params.theta; d],
            (0..d).map(|i| if i < d_star { params.m } else { 0.0 }).collect(),
            (0..d)
                .map(|i| if i < d_star && kind == HardKind::Cvx { params.y } else { 0.0 })
                .collect(),
            params.mu,
        )
    }

    /// Fully per-coordinate construction.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kind: HardKind,
        d_star: usize,
        v: Vec<f64>,
        q: Vec<f64>,
        theta: Vec<f64>,
        m: Vec<f64>,
        y: Vec<f64>,
        mu: f64,
    ) -> Result<Self> {
        let d = v.len();
        if d == 0 {
            return contract("hard instance needs d >= 1");
        }
        if [q.len(), theta.len(), m.len(), y.len()].iter().any(|&l| l != d) {
            return contract("per-coordinate parameter lengths disagree");
        }
        if v.iter().any(|&s| s != 1.0 && s != -1.0) {
            return contract("v must have entries in {-1, +1}");
        }
        if q.iter().chain(&theta).any(|&a| !(0.0..=1.0).contains(&a)) {
            return contract("q and theta must lie in [0, 1]");
        }
        if m.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return contract("scales M must be finite and nonnegative");
        }
        match kind {
            HardKind::Str if !(mu > 0.0) => return contract("strongly convex instance needs mu > 0"),
            HardKind::Cvx if mu != 0.0 => return contract("convex instance must have mu = 0"),
            _ => {}
        }
        Ok(Self { kind, d, d_star, v, q, theta, m, y, mu })
    }

    /// Probabilities of `(0, +1, -1)` for coordinate `i`.
    pub fn coord_probs(&self, i: usize) -> [f64; 3] {
        let q = self.q[i];
        let b = self.v[i] * self.theta[i];
        [1.0 - q, 0.5 * (1.0 + b) * q, 0.5 * (1.0 - b) * q]
    }

    pub fn sample_dv<R: Rng + ?Sized>(&self, rng: &mut R, xi: &mut [f64]) {
        for (i, out) in xi.iter_mut().enumerate() {
            let [p0, pp, _] = self.coord_probs(i);
            let u: f64 = rng.random();
            *out = if u < p0 {
                0.0
            } else if u < p0 + pp {
                1.0
            } else {
                -1.0
            };
        }
    }

    /// Expected value of `f(x, ξ)` under `D_v` (without the regularizer).
    pub fn f_value(&self, x: &[f64]) -> f64 {
        match self.kind {
            HardKind::Cvx => (0..self.d)
                .map(|i| {
                    let b = self.v[i] * self.theta[i];
                    self.m[i]
                        * self.q[i]
                        * (0.5 * (1.0 + b) * (x[i] - self.y[i]).abs()
                            + 0.5 * (1.0 - b) * (x[i] + self.y[i]).abs())
                })
                .sum(),
            HardKind::Str => -self.mu * (0..self.d).map(|i| x[i] * self.mean_scaled_xi(i)).sum::<f64>(),
        }
    }

    /// `E[M_i ξ_i] = M_i q_i θ_i v_i`.
    fn mean_scaled_xi(&self, i: usize) -> f64 {
        self.m[i] * self.q[i] * self.theta[i] * self.v[i]
    }

    pub fn subgrad(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.d {
            out[i] = match self.kind {
                HardKind::Cvx => {
                    let b = self.v[i] * self.theta[i];
                    self.m[i]
                        * self.q[i]
                        * (0.5 * (1.0 + b) * sgn(x[i] - self.y[i]) + 0.5 * (1.0 - b) * sgn(x[i] + self.y[i]))
                }
                HardKind::Str => -self.mu * self.mean_scaled_xi(i),
            };
        }
    }

    /// Stochastic subgradient `∇f(x, ξ)` for a given outcome `ξ`.
    pub fn stoch_grad_at(&self, x: &[f64], xi: &[f64], out: &mut [f64]) {
        for i in 0..self.d {
            out[i] = match self.kind {
                HardKind::Cvx => self.m[i] * xi[i].abs() * sgn(x[i] - xi[i] * self.y[i]),
                HardKind::Str => -self.mu * self.m[i] * xi[i],
            };
        }
    }

    /// Fresh draw `ξ ~ D_v` followed by [`Self::stoch_grad_at`], without
    /// materializing `ξ`.
    pub fn stoch_grad<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        for i in 0..self.d {
            let [p0, pp, _] = self.coord_probs(i);
            let u: f64 = rng.random();
            let xi: f64 = if u < p0 {
                0.0
            } else if u < p0 + pp {
                1.0
            } else {
                -1.0
            };
            out[i] = match self.kind {
                HardKind::Cvx => self.m[i] * xi.abs() * sgn(x[i] - xi * self.y[i]),
                HardKind::Str => -self.mu * self.m[i] * xi,
            };
        }
    }

    /// Visits all `3^d` outcomes with their probabilities.
    pub fn for_each_outcome(&self, mut visit: impl FnMut(&[f64], f64)) -> Result<()> {
        if self.d > MAX_ENUM_DIM {
            return Err(crate::Error::Capacity {
                outcomes: 3u128.pow(self.d as u32),
                capacity: 3u128.pow(MAX_ENUM_DIM as u32),
            });
        }
        let probs: Vec<[f64; 3]> = (0..self.d).map(|i| self.coord_probs(i)).collect();
        let values = [0.0, 1.0, -1.0];
        let mut idx = vec![0usize; self.d];
        let mut xi = vec![0.0; self.d];
        loop {
            let mut prob = 1.0;
            for i in 0..self.d {
                xi[i] = values[idx[i]];
                prob *= probs[i][idx[i]];
            }
            visit(&xi, prob);
            let mut k = 0;
            loop {
                if k == self.d {
                    return Ok(());
                }
                idx[k] += 1;
                if idx[k] < 3 {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// Minimizer of the full objective (`f_v` for convex, `f_v + μ/2‖·‖²` otherwise).
    pub fn x_star(&self) -> Vec<f64> {
        match self.kind {
            HardKind::Cvx => self.v.iter().zip(&self.y).map(|(v, y)| v * y).collect(),
            HardKind::Str => (0..self.d).map(|i| self.mean_scaled_xi(i)).collect(),
        }
    }

    pub fn f_star(&self) -> f64 {
        match self.kind {
            HardKind::Cvx => (0..self.d)
                .map(|i| (1.0 - self.theta[i]) * self.q[i] * self.m[i] * self.y[i].abs())
                .sum(),
            HardKind::Str => {
                let xs = self.x_star();
                -0.5 * self.mu * xs.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    /// Lipschitz constant of the expected loss `f_v`.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            HardKind::Cvx => (0..self.d).map(|i| (self.m[i] * self.q[i]).powi(2)).sum::<f64>().sqrt(),
            HardKind::Str => {
                self.mu * (0..self.d).map(|i| self.mean_scaled_xi(i).powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    /// Moment constants guaranteed for the stochastic subgradient, taken from
    /// the directional and full-norm bounds of the construction.
    pub fn declared_noise(&self, p: f64) -> Result<NoiseSpec> {
        let scale = match self.kind {
            HardKind::Cvx => 1.0,
            HardKind::Str => self.mu.powf(p),
        };
        let sl_p = 4.0 * scale * (0..self.d).map(|i| self.m[i].powf(p) * self.q[i]).sum::<f64>();
        let ss_p = if p < 2.0 {
            let e = 2.0 / (2.0 - p);
            let inner: f64 =
                (0..self.d).map(|i| self.m[i].powf(p * e) * self.q[i].powf(e)).sum();
            4.0 * scale * inner.powf((2.0 - p) / 2.0)
        } else {
            4.0 * scale * (0..self.d).map(|i| self.m[i].powf(p) * self.q[i]).fold(0.0, f64::max)
        };
        let sigma_l = sl_p.powf(1.0 / p);
        // the directional bound can exceed the total one only by rounding
        let sigma_s = ss_p.powf(1.0 / p).min(sigma_l);
        NoiseSpec::new(p, sigma_s, sigma_l)
    }

    /// Lower-bound gap `Σ 2 θ_i q_i M_i |y_i| 1[u_i ≠ v_i]` (convex) or
    /// `Σ μ θ_i² q_i² M_i² 1[u_i ≠ v_i]` (strongly convex) between two labels.
    pub fn separation(&self, u: &[f64]) -> f64 {
        (0..self.d)
            .filter(|&i| u[i] != self.v[i])
            .map(|i| match self.kind {
                HardKind::Cvx => 2.0 * self.theta[i] * self.q[i] * self.m[i] * self.y[i].abs(),
                HardKind::Str => self.mu * (self.theta[i] * self.q[i] * self.m[i]).powi(2),
            })
            .sum()
    }

    /// Same instance with a different label vector.
    pub fn relabel(&self, v: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            self.kind,
            self.d_star,
            v,
            self.q.clone(),
            self.theta.clone(),
            self.m.clone(),
            self.y.clone(),
            self.mu,
        )
    }

    pub fn x_star_norm(&self) -> f64 {
        norm(&self.x_star())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodebookKind {
    Gv,
    Twopoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    /// Label vectors padded with `+1` to the ambient dimension.
    pub codewords: Vec<Vec<f64>>,
    pub d_star: usize,
    pub target_size: u64,
    pub achieved_size: usize,
    /// Smallest pairwise Hamming distance, `None` for a single codeword.
    pub min_distance: Option<usize>,
    /// `target_size - achieved_size` when the target was not reached.
    pub shortfall: u64,
}

/// Consecutive rejections after which the greedy construction gives up.
pub const GV_MAX_REJECTIONS: usize = 10_000;

/// Randomized greedy code in `{±1}^{d_star}` with pairwise Hamming distance
/// at least `d_star / 4`, padded to dimension `d`.
///
/// Stops at `⌈exp(d_star / 8)⌉` codewords, at `max_codewords` if given, or
/// after [`GV_MAX_REJECTIONS`] consecutive rejected candidates.
pub fn gv_codebook<R: Rng + ?Sized>(
    d_star: usize,
    d: usize,
    max_codewords: Option<usize>,
    rng: &mut R,
) -> Result<Codebook> {
    if d_star == 0 || d < d_star {
        return contract(format!("need d >= d_star >= 1, got d = {d}, d_star = {d_star}"));
    }
    let target = (d_star as f64 / 8.0).exp().ceil();
    let target_size = if target >= u64::MAX as f64 { u64::MAX } else { target as u64 };
    let stop_at = max_codewords
        .map(|c| (c as u64).min(target_size))
        .unwrap_or(target_size)
        .max(1);
    let words = d_star.div_ceil(64);
    let tail_mask = if d_star % 64 == 0 { u64::MAX } else { (1u64 << (d_star % 64)) - 1 };
    let mut kept: Vec<Vec<u64>> = Vec::new();
    let mut rejections = 0usize;
    while (kept.len() as u64) < stop_at && rejections < GV_MAX_REJECTIONS {
        let mut cand: Vec<u64> = (0..words).map(|_| rng.random::<u64>()).collect();
        cand[words - 1] &= tail_mask;
        let ok = kept.iter().all(|w| 4 * hamming(w, &cand) >= d_star);
        if ok {
            kept.push(cand);
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    let codewords: Vec<Vec<f64>> = kept
        .iter()
        .map(|w| {
            (0..d)
                .map(|i| if i < d_star && (w[i / 64] >> (i % 64)) & 1 == 1 { -1.0 } else { 1.0 })
                .collect()
        })
        .collect();
    let mut min_distance = None;
    for a in 0..kept.len() {
        for b in (a + 1)..kept.len() {
            let h = hamming(&kept[a], &kept[b]);
            min_distance = Some(min_distance.map_or(h, |m: usize| m.min(h)));
        }
    }
    let achieved_size = codewords.len();
    Ok(Codebook {
        codewords,
        d_star,
        target_size,
        achieved_size,
        min_distance,
        shortfall: target_size.saturating_sub(achieved_size as u64),
    })
}

fn hamming(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum()
}

/// The pair `{(1,…,1), (-1,…,-1 [d_star times], 1,…,1)}`.
pub fn twopoint_codebook(d_star: usize, d: usize) -> Result<Codebook> {
    if d_star == 0 || d < d_star {
        return contract(format!("need d >= d_star >= 1, got d = {d}, d_star = {d_star}"));
    }
    let plus = vec![1.0; d];
    let minus = (0..d).map(|i| if i < d_star { -1.0 } else { 1.0 }).collect();
    Ok(Codebook {
        codewords: vec![plus, minus],
        d_star,
        target_size: 2,
        achieved_size: 2,
        min_distance: Some(d_star),
        shortfall: 0,
    })
}

/// Hamming distance between two sign vectors.
pub fn sign_hamming(a: &[f64], b: &[f64]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}
