//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use htclip::hardness::{HardInstance, HardKind};
use htclip::{Domain, RKind};

/// `argmin_{x ∈ X} r(x) + ⟨g, x⟩ + ‖x - x_t‖²/(2η) + κ‖x - x₁‖²/(2η)` for
/// `d ≤ 3`, by golden-section search in 1-D and shrinking-grid refinement
/// otherwise. Only evaluates the objective and tests membership. On a ball,
/// an infeasible unconstrained minimizer means the answer is on the sphere,
/// which is then searched in angular coordinates.
pub fn numeric_prox(r: &RKind, domain: &Domain, x_t: &[f64], anchor: Option<(&[f64], f64)>, g: &[f64], eta: f64) -> Vec<f64> {
    let d = x_t.len();
    assert!(d <= 3);
    let phi = |x: &[f64]| -> f64 {
        let mut v = 0.0;
        for i in 0..d {
            v += g[i] * x[i] + (x[i] - x_t[i]).powi(2) / (2.0 * eta);
            if let Some((x1, kappa)) = anchor {
                v += kappa * (x[i] - x1[i]).powi(2) / (2.0 * eta);
            }
        }
        if let RKind::Quad { mu, center } = r {
            v += 0.5 * mu * (0..d).map(|i| (x[i] - center[i]).powi(2)).sum::<f64>();
        }
        v
    };
    let feasible = |x: &[f64]| match domain {
        Domain::AllSpace { .. } => true,
        Domain::Ball { center, radius } => {
            (0..d).map(|i| (x[i] - center[i]).powi(2)).sum::<f64>().sqrt() <= *radius
        }
    };
    // a box around x_t that certainly contains the unconstrained minimizer
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = |v: &[f64]| v.iter().map(|a| a.abs()).sum::<f64>();
    let mut half = 2.0 * (scale(x_t) + eta * gn + 1.0);
    if let Some((x1, _)) = anchor {
        half += 2.0 * scale(x1);
    }
    if let RKind::Quad { center, .. } = r {
        half += 2.0 * scale(center);
    }
    if d == 1 {
        if let Domain::Ball { center, radius } = domain {
            half += 2.0 * (scale(center) + radius);
        }
        return golden_1d(&phi, &feasible, if feasible(x_t) { x_t[0] } else { domain_center(domain)[0] }, half);
    }
    let free = grid_min(&phi, x_t.to_vec(), half);
    if feasible(&free) {
        return free;
    }
    let (center, radius) = match domain {
        Domain::Ball { center, radius } => (center.clone(), *radius),
        Domain::AllSpace { .. } => unreachable!(),
    };
    let on_sphere = |a: &[f64]| -> Vec<f64> {
        if d == 2 {
            vec![center[0] + radius * a[0].cos(), center[1] + radius * a[0].sin()]
        } else {
            vec![
                center[0] + radius * a[1].sin() * a[0].cos(),
                center[1] + radius * a[1].sin() * a[0].sin(),
                center[2] + radius * a[1].cos(),
            ]
        }
    };
    let angles = grid_min(&|a: &[f64]| phi(&on_sphere(a)), vec![0.0; d - 1], std::f64::consts::PI);
    on_sphere(&angles)
}

fn domain_center(domain: &Domain) -> Vec<f64> {
    match domain {
        Domain::AllSpace { d } => vec![0.0; *d],
        Domain::Ball { center, .. } => center.clone(),
    }
}

/// Shrinking-grid minimization of a smooth unimodal function around `start`.
fn grid_min(f: &impl Fn(&[f64]) -> f64, start: Vec<f64>, mut half: f64) -> Vec<f64> {
    let k = start.len();
    let n = 10i32;
    let mut best = start;
    let mut best_val = f(&best);
    let mut cand = vec![0.0; k];
    while half > 1e-10 {
        let base = best.clone();
        let step = 2.0 * half / n as f64;
        for idx in 0..(n + 1).pow(k as u32) {
            let mut m = idx;
            for c in cand.iter_mut().zip(&base) {
                *c.0 = c.1 - half + (m % (n + 1)) as f64 * step;
                m /= n + 1;
            }
            let v = f(&cand);
            if v < best_val {
                best_val = v;
                best.copy_from_slice(&cand);
            }
        }
        half *= 0.6;
    }
    best
}

fn golden_1d(phi: &impl Fn(&[f64]) -> f64, feasible: &impl Fn(&[f64]) -> bool, start: f64, half: f64) -> Vec<f64> {
    // feasible set of a 1-D ball or the line is an interval; find its ends
    let (mut lo, mut hi) = (start - half, start + half);
    let edge = |inside: f64, outside: f64| {
        let (mut a, mut b) = (inside, outside);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if feasible(&[m]) {
                a = m;
            } else {
                b = m;
            }
        }
        a
    };
    if !feasible(&[lo]) {
        lo = edge(start, lo);
    }
    if !feasible(&[hi]) {
        hi = edge(start, hi);
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..300 {
        let c = b - inv_phi * (b - a);
        let e = a + inv_phi * (b - a);
        if phi(&[c]) < phi(&[e]) {
            b = e;
        } else {
            a = c;
        }
    }
    vec![0.5 * (a + b)]
}

/// Support of the three-point law: `ξ_i = 0` w.p. `1 - q_i`, `ξ_i = ±1` w.p.
/// `q_i (1 ± θ_i v_i)/2`, independently across coordinates.
pub fn dv_support(h: &HardInstance) -> Vec<(Vec<f64>, f64)> {
    let d = h.d;
    let mut out = Vec::new();
    for code in 0..3usize.pow(d as u32) {
        let mut xi = vec![0.0; d];
        let mut prob = 1.0;
        let mut k = code;
        for i in 0..d {
            let s = [0.0, 1.0, -1.0][k % 3];
            k /= 3;
            xi[i] = s;
            prob *= if s == 0.0 { 1.0 - h.q[i] } else { h.q[i] * (1.0 + s * h.theta[i] * h.v[i]) / 2.0 };
        }
        out.push((xi, prob));
    }
    out
}

/// Gradient of `f(x, ξ)`: `M_i |ξ_i| sign(x_i - ξ_i y_i)` for the convex
/// family, `-μ M_i ξ_i` for the strongly convex one.
pub fn dv_grad(h: &HardInstance, x: &[f64], xi: &[f64]) -> Vec<f64> {
    (0..h.d)
        .map(|i| match h.kind {
            HardKind::Cvx => {
                let z = x[i] - xi[i] * h.y[i];
                let s = if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                h.m[i] * xi[i].abs() * s
            }
            HardKind::Str => -h.mu * h.m[i] * xi[i],
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn clip_ref(g: &[f64], tau: f64) -> Vec<f64> {
    let n = norm(g);
    if n <= tau {
        g.to_vec()
    } else {
        g.iter().map(|v| v * tau / n).collect()
    }
}

/// Largest eigenvalue of a small symmetric matrix by cyclic Jacobi sweeps.
pub fn sym_top_eigenvalue(a: &[f64], d: usize) -> f64 {
    let mut m = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i * d + j].powi(2)).sum();
        if off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (akp, akq) = (m[k * d + p], m[k * d + q]);
                    m[k * d + p] = c * akp - s * akq;
                    m[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let (apk, aqk) = (m[p * d + k], m[q * d + k]);
                    m[p * d + k] = c * apk - s * aqk;
                    m[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|i| m[i * d + i]).fold(f64::NEG_INFINITY, f64::max)
}

/// `[max ‖d^u‖, E‖d^u‖², ‖E d^u d^uᵀ‖, ‖d^b‖]` summed over a finite support,
/// with `d^u = clip(g) - E clip(g)` and `d^b = E clip(g) - ∇f`.
pub fn clip_stats(support: &[(Vec<f64>, f64)], grad: &[f64], tau: f64) -> [f64; 4] {
    let d = grad.len();
    let clipped: Vec<(Vec<f64>, f64)> = support.iter().map(|(g, p)| (clip_ref(g, tau), *p)).collect();
    let mut mean = vec![0.0; d];
    for (c, p) in &clipped {
        for i in 0..d {
            mean[i] += p * c[i];
        }
    }
    let mut max_norm = 0.0f64;
    let mut sq = 0.0;
    let mut cov = vec![0.0; d * d];
    for (c, p) in &clipped {
        let du: Vec<f64> = (0..d).map(|i| c[i] - mean[i]).collect();
        if *p > 0.0 {
            max_norm = max_norm.max(norm(&du));
        }
        sq += p * du.iter().map(|v| v * v).sum::<f64>();
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += p * du[i] * du[j];
            }
        }
    }
    let db: Vec<f64> = (0..d).map(|i| mean[i] - grad[i]).collect();
    [max_norm, sq, sym_top_eigenvalue(&cov, d), norm(&db)]
}
