//! Acceptance gate: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion. Exits nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use htclip::algorithms::{average, run_clipped_sgd, Averaging, RecordStride};
use htclip::clipping::{clip_error_exact, clip_error_mc};
use htclip::config::ExperimentConfig;
use htclip::hardness::{hard_params, HardInputs, HardInstance, HardKind, HardRegime};
use htclip::harness::{run_experiment, ExperimentResult};
use htclip::noise::{
    d_eff_iid, d_eff_independent, estimate_moments, make_oracle, random_unit, sample_alpha_stable, OracleKind,
    StableParams,
};
use htclip::problems::{eval_f, prox_step, stabilized_prox_step, subgrad_f};
use htclip::schedules::{ex_params, gamma_t, gamma_t_product, hp_params, make_schedule, Regime, ScheduleParams};
use htclip::{CompositeObjective, Domain, FKind, RKind};

use common::{clip_stats, dv_grad, dv_support, norm, numeric_prox};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn cvx_instance(d: usize, q: f64, theta: f64, rng: &mut ChaCha8Rng) -> HardInstance {
    let v = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let m = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
    let y = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
    HardInstance::from_parts(HardKind::Cvx, d, v, vec![q; d], vec![theta; d], m, y, 0.0).unwrap()
}

fn crit1() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut cases = 0;
    let mut worst = 0.0f64;
    for d in 1..=3 {
        for q in [0.3, 0.7] {
            for theta in [0.0, 0.1] {
                for p in [1.5, 2.0] {
                    let h = cvx_instance(d, q, theta, &mut rng);
                    let obj = CompositeObjective::from_hard(h.clone()).map_err(|e| e.to_string())?;
                    let oracle = make_oracle(&obj, OracleKind::HardInstance, p, None).map_err(|e| e.to_string())?;
                    let g_lip = h.lipschitz();
                    // random points plus the kinks at ±y and the origin
                    let mut points: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
                    points.push(h.y.clone());
                    points.push(h.y.iter().map(|v| -v).collect());
                    points.push(vec![0.0; d]);
                    for x in &points {
                        let support: Vec<(Vec<f64>, f64)> =
                            dv_support(&h).into_iter().map(|(xi, pr)| (dv_grad(&h, x, &xi), pr)).collect();
                        let mut grad = vec![0.0; d];
                        for (g, pr) in &support {
                            for i in 0..d {
                                grad[i] += pr * g[i];
                            }
                        }
                        // past both kinks the mean gradient sums to Mq with rounding,
                        // which can land one ulp above the Lipschitz constant
                        let tau = 2.0 * g_lip * (1.0 + 1e-12);
                        let rep = clip_error_exact(&oracle, &obj, x, &grad, tau, 0.5).map_err(|e| e.to_string())?;
                        ensure(rep.chi, || format!("chi should hold at d={d} q={q} theta={theta}"))?;
                        let brute = clip_stats(&support, &grad, tau);
                        let module = [
                            rep.measured.du_max_norm,
                            rep.measured.du_sq_mean,
                            rep.measured.du_cov_opnorm,
                            rep.measured.db_norm,
                        ];
                        for k in 0..4 {
                            let diff = (brute[k] - module[k]).abs();
                            worst = worst.max(diff);
                            ensure(diff <= 1e-12 * brute[k].abs().max(1.0), || {
                                format!("measured[{k}] module {} vs brute force {} at d={d}", module[k], brute[k])
                            })?;
                        }
                        let sl_p: f64 = support
                            .iter()
                            .map(|(g, pr)| pr * norm(&g.iter().zip(&grad).map(|(a, b)| a - b).collect::<Vec<_>>()).powf(p))
                            .sum();
                        ensure(rel_close(rep.sigma_l, sl_p.powf(1.0 / p), 1e-12), || {
                            format!("sigma_l {} vs brute force {}", rep.sigma_l, sl_p.powf(1.0 / p))
                        })?;
                        let by_bound = [brute[0], brute[1], brute[2], brute[2], brute[3], brute[3]];
                        for k in 0..6 {
                            ensure(rep.bounds.applicable[k], || format!("bound {} not applicable under chi", k + 1))?;
                            ensure(by_bound[k] <= rep.bounds.values[k], || {
                                format!("bound {} violated: {} > {} (d={d} q={q} theta={theta} p={p})", k + 1, by_bound[k], rep.bounds.values[k])
                            })?;
                            ensure(rep.pass[k] == Some(true), || format!("report marks bound {} failed", k + 1))?;
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{cases} points, six bounds each, max |module - brute force| = {worst:.1e}"))
}

fn crit2() -> Result<String, String> {
    let d = 4;
    let obj = CompositeObjective::new(FKind::EuclidNorm { g: 1.0, y: vec![0.0; d] }, RKind::Zero, Domain::AllSpace { d })
        .map_err(|e| e.to_string())?;
    let kind = OracleKind::AdditiveStable { params: vec![StableParams::symmetric(1.8, 1.0); d] };
    let oracle = make_oracle(&obj, kind, 1.5, None).map_err(|e| e.to_string())?;
    let x = vec![0.6, -0.8, 0.0, 0.0];
    let grad = subgrad_f(&obj, &x).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut notes = Vec::new();
    for mult in [2.0, 8.0] {
        let rep = clip_error_mc(&oracle, &obj, &x, &grad, mult, 0.5, 1_000_000, &mut rng).map_err(|e| e.to_string())?;
        for k in [0, 1, 4, 5] {
            ensure(rep.pass[k] == Some(true), || {
                format!("tau={mult}G bound {}: {}", k + 1, rep.summary_lines()[k])
            })?;
        }
        let info: Vec<String> = [2usize, 3]
            .iter()
            .map(|&k| format!("b{}:{}", k + 1, rep.pass[k].map_or("n/a", |p| if p { "ok" } else { "over" })))
            .collect();
        notes.push(format!("tau={mult}G [{}]", info.join(" ")));
    }
    Ok(format!("bounds 1,2,5,6 hold within 3 stderr; {}", notes.join(", ")))
}

fn crit3() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let p = if k % 10 == 0 { 2.0 } else { rng.random_range(1.0..2.0f64).max(1.0 + 1e-6) };
        let sigma_l = 10f64.powf(rng.random_range(-2.0..2.0));
        let sigma_s = sigma_l * rng.random_range(0.01..=1.0);
        let delta = rng.random_range(1e-6..=1.0);
        let hp = hp_params(p, sigma_s, sigma_l, delta).map_err(|e| e.to_string())?;
        let err = (hp.tau_star * hp.varphi_star.powf(1.0 / p) / sigma_l - 1.0).abs();
        worst = worst.max(err);
        ensure(err <= 1e-12, || format!("hp identity off by {err:e} at p={p}"))?;
        let ex = ex_params(p, sigma_s, sigma_l).map_err(|e| e.to_string())?;
        if p < 2.0 {
            let err = (ex.tau_tilde_star * ex.varphi_tilde_star.powf(1.0 / p) / sigma_l - 1.0).abs();
            worst = worst.max(err);
            ensure(err <= 1e-12, || format!("ex identity off by {err:e} at p={p}"))?;
        } else {
            // p = 2: +∞ threshold and zero multiplier by convention
            ensure(ex.tau_tilde_star == f64::INFINITY && ex.varphi_tilde_star == 0.0, || "p = 2 convention".into())?;
        }
    }
    Ok(format!("1000 grid points, max relative error {worst:.1e}"))
}

fn crit4() -> Result<String, String> {
    let mut worst = 0.0f64;
    for mu in [0.1, 1.0, 10.0] {
        // independent running product with η_s = 6/(μ s)
        let eta = |s: f64| 6.0 / (mu * s);
        let mut prod = 1.0;
        for t in 1..=10_000u64 {
            if t >= 2 {
                let tf = t as f64;
                prod *= (1.0 + mu * eta(tf - 1.0)) / (1.0 + mu * eta(tf) / 2.0);
            }
            let closed = gamma_t(t, mu).map_err(|e| e.to_string())?;
            let err = (closed / prod - 1.0).abs();
            worst = worst.max(err);
            ensure(err <= 1e-9, || format!("Gamma_{t} at mu={mu}: {closed} vs {prod}"))?;
        }
        for t in [1u64, 2, 4, 100, 10_000] {
            let a = gamma_t_product(t, mu).map_err(|e| e.to_string())?;
            let b = gamma_t(t, mu).map_err(|e| e.to_string())?;
            ensure((a / b - 1.0).abs() <= 1e-9, || format!("product evaluator at t={t}"))?;
        }
    }
    Ok(format!("t <= 10^4, three mu values, max relative error {worst:.1e}"))
}

fn crit5() -> Result<String, String> {
    let g = 2.0;
    let x1 = vec![1.0, -2.0, 0.5];
    let d = x1.len();
    let dist = norm(&x1);
    let obj = CompositeObjective::new(FKind::EuclidNorm { g, y: vec![0.0; d] }, RKind::Zero, Domain::AllSpace { d })
        .and_then(|o| o.with_optimum(vec![0.0; d], 0.0))
        .map_err(|e| e.to_string())?;
    let oracle = make_oracle(&obj, OracleKind::Deterministic, 1.5, None).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for t in [100u64, 10_000] {
        let params = ScheduleParams {
            p: 1.5,
            sigma_s: 0.0,
            sigma_l: 0.0,
            g,
            d: dist,
            mu: 0.0,
            delta: Some(0.1),
            alpha_clip: 0.5,
            t_known: Some(t),
        };
        let s = make_schedule(Regime::CvxHpT, params).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tr = run_clipped_sgd(&obj, &oracle, &s, t, &x1, &mut rng, RecordStride::FinalOnly).map_err(|e| e.to_string())?;
        let gap = eval_f(&obj, average(&tr, Averaging::Plain).unwrap()).unwrap();
        let bound = 3.0 * g * dist / (t as f64).sqrt();
        ensure(gap <= bound, || format!("T={t}: gap {gap:.4e} > 3GD/sqrt(T) = {bound:.4e}"))?;
        ensure(tr.clip_events == 0, || format!("T={t}: {} clip events", tr.clip_events))?;
        notes.push(format!("T={t}: {gap:.3e} <= {bound:.3e}"));
    }
    Ok(format!("{}, no clipping", notes.join("; ")))
}

fn experiment(json: &str) -> Result<ExperimentResult, String> {
    let cfg = ExperimentConfig::from_json(json).map_err(|e| e.to_string())?;
    run_experiment(&cfg, None).map_err(|e| e.to_string())
}

fn slope_check(res: &ExperimentResult, series: &str, want: f64, tol: f64) -> Result<String, String> {
    let f = res.fit(series).ok_or_else(|| format!("no fit for {series}"))?;
    let msg = format!("{series} slope {:+.4} (± {:.3}, r2 {:.3}), want {want:+.4} ± {tol}", f.slope, f.slope_stderr, f.r_squared);
    ensure((f.slope - want).abs() <= tol, || msg.clone())?;
    Ok(msg)
}

const CVX_FANO: &str = r#"{
    "problem": {"kind": "hard", "d": 4, "G": 1.0, "D": 1.0},
    "noise": {"kind": "hard", "p": 1.5, "sigma_l": 1.0},
    "schedule": {"regime": "cvx-ex-T"},
    "hardness": {"regime": "cvx-fano", "d_star": 4},
    "run": {"t_grid": {"min": 1024, "max": 65536}, "trials": 200, "master_seed": 6, "record_stride": {"type": "final-only"}}
}"#;

fn crit6() -> Result<String, String> {
    let res = experiment(CVX_FANO)?;
    slope_check(&res, "plain", -1.0 / 3.0, 0.10)
}

const STR_FANO: &str = r#"{
    "problem": {"kind": "hard", "d": 4, "G": 1.0, "D": 1.0, "mu": 1.0},
    "noise": {"kind": "hard", "p": 1.5, "sigma_l": 1.0},
    "schedule": {"regime": "str-ex"},
    "hardness": {"regime": "str-fano", "d_star": 4},
    "run": {"t_grid": {"min": 1024, "max": 65536}, "trials": 200, "master_seed": 7, "record_stride": {"type": "final-only"}}
}"#;

fn crit7() -> Result<String, String> {
    let res = experiment(STR_FANO)?;
    let a = slope_check(&res, "weighted", -2.0 / 3.0, 0.15);
    let b = slope_check(&res, "mu_dist2", -2.0 / 3.0, 0.15);
    match (a, b) {
        (Ok(a), Ok(b)) => Ok(format!("{a}; {b}")),
        (a, b) => Err(format!("{}; {}", a.unwrap_or_else(|e| e), b.unwrap_or_else(|e| e))),
    }
}

const GAUSS_P2: &str = r#"{
    "problem": {"kind": "euclid-norm", "d": 4, "G": 1.0, "x1_mode": {"type": "offset", "v": [1.0, 1.0, -1.0, 0.5]}},
    "noise": {"kind": "gaussian", "p": 2.0, "scale": 1.0},
    "schedule": {"regime": "cvx-ex-T"},
    "run": {"t_grid": {"min": 1024, "max": 65536}, "trials": 200, "master_seed": 8, "record_stride": {"type": "final-only"}}
}"#;

fn crit8() -> Result<String, String> {
    let res = experiment(GAUSS_P2)?;
    for h in &res.manifest.horizons {
        ensure(h.schedule.constants.tau_tilde_star == Some(f64::INFINITY), || "tau_tilde_star should be +inf".into())?;
        ensure(h.schedule.tau(1) == f64::INFINITY, || "threshold should be +inf".into())?;
    }
    ensure(res.series[0].rows.iter().all(|r| r.clip_rate == 0.0), || "clipping happened at p = 2".into())?;
    let msg = slope_check(&res, "plain", -0.5, 0.10)?;
    Ok(format!("threshold +inf, no clip events; {msg}"))
}

fn lemma_checks(h: &HardInstance, p: f64, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let d = h.d;
    let obj = CompositeObjective::from_hard(h.clone()).map_err(|e| e.to_string())?;
    let big_f = |x: &[f64]| eval_f(&obj, x).unwrap();
    let scale = if h.kind == HardKind::Str { h.mu.powf(p) } else { 1.0 };
    // item 1: argmin and optimal value
    let xs = h.x_star();
    let want_xs: Vec<f64> = match h.kind {
        HardKind::Cvx => (0..d).map(|i| h.v[i] * h.y[i]).collect(),
        HardKind::Str => (0..d).map(|i| h.m[i] * h.q[i] * h.theta[i] * h.v[i]).collect(),
    };
    ensure(xs.iter().zip(&want_xs).all(|(a, b)| (a - b).abs() <= 1e-12), || "x_star formula".into())?;
    let f_star = big_f(&xs);
    ensure((f_star - h.f_star()).abs() <= 1e-12 * f_star.abs().max(1.0), || "f_star formula".into())?;
    for _ in 0..50 {
        let x: Vec<f64> = xs.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        ensure(big_f(&x) >= f_star - 1e-12, || "x_star is not a minimizer".into())?;
    }
    let lip_bound: f64 = (0..d).map(|i| (h.m[i] * h.q[i]).powi(2)).sum::<f64>().sqrt();
    let u: Vec<f64> = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let hu = h.relabel(u.clone()).map_err(|e| e.to_string())?;
    let obj_u = CompositeObjective::from_hard(hu.clone()).map_err(|e| e.to_string())?;
    let sep: f64 = (0..d)
        .filter(|&i| u[i] != h.v[i])
        .map(|i| match h.kind {
            HardKind::Cvx => 2.0 * h.theta[i] * h.q[i] * h.m[i] * h.y[i].abs(),
            HardKind::Str => h.mu * (h.theta[i] * h.q[i] * h.m[i]).powi(2),
        })
        .sum();
    ensure((sep - h.separation(&u)).abs() <= 1e-12 * sep.max(1.0), || "separation formula".into())?;
    let n_points = if d <= 8 { 20 } else { 5 };
    for k in 0..n_points {
        let x: Vec<f64> = if k == 0 { xs.clone() } else { (0..d).map(|_| rng.random_range(-2.0..2.0)).collect() };
        // item 2
        let gap = big_f(&x) - f_star + eval_f(&obj_u, &x).unwrap() - hu.f_star();
        ensure(gap >= sep - 1e-9, || format!("separation violated: {gap} < {sep}"))?;
        // item 3
        let g = subgrad_f(&obj, &x).unwrap();
        let gn = norm(&g);
        match h.kind {
            HardKind::Cvx => ensure(gn <= lip_bound + 1e-12, || "gradient norm bound".into())?,
            HardKind::Str => {
                let want = h.mu * (0..d).map(|i| (h.m[i] * h.q[i] * h.theta[i]).powi(2)).sum::<f64>().sqrt();
                ensure((gn - want).abs() <= 1e-12 * want.max(1.0), || "strongly convex gradient norm".into())?
            }
        }
        // items 4 and 5
        let sl_bound = 4.0 * scale * (0..d).map(|i| h.m[i].powf(p) * h.q[i]).sum::<f64>();
        let ss_bound = if p < 2.0 {
            let e = 2.0 / (2.0 - p);
            4.0 * scale * (0..d).map(|i| h.m[i].powf(p * e) * h.q[i].powf(e)).sum::<f64>().powf((2.0 - p) / 2.0)
        } else {
            4.0 * scale * (0..d).map(|i| h.m[i].powf(p) * h.q[i]).fold(0.0, f64::max)
        };
        let residuals: Vec<(Vec<f64>, f64)> = if d <= 8 {
            dv_support(h)
                .into_iter()
                .map(|(xi, pr)| (dv_grad(h, &x, &xi).iter().zip(&g).map(|(a, b)| a - b).collect(), pr))
                .collect()
        } else {
            let mut xi = vec![0.0; d];
            (0..1000)
                .map(|_| {
                    h.sample_dv(rng, &mut xi);
                    (dv_grad(h, &x, &xi).iter().zip(&g).map(|(a, b)| a - b).collect(), 1e-3)
                })
                .collect()
        };
        let total: f64 = residuals.iter().map(|(r, w)| w * norm(r).powf(p)).sum();
        ensure(total <= sl_bound * (1.0 + 1e-12), || format!("full moment {total} > {sl_bound}"))?;
        let mut dirs: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        dirs.extend((0..30).map(|_| random_unit(d, rng)));
        for e in &dirs {
            let m: f64 = residuals
                .iter()
                .map(|(r, w)| w * r.iter().zip(e).map(|(a, b)| a * b).sum::<f64>().abs().powf(p))
                .sum();
            ensure(m <= ss_bound * (1.0 + 1e-12), || format!("directional moment {m} > {ss_bound}"))?;
        }
    }
    Ok(())
}

fn crit9() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut count = 0;
    for d in [1usize, 2, 3, 4, 5, 6, 7, 8, 10, 16] {
        for kind in [HardKind::Cvx, HardKind::Str] {
            for p in [1.2, 1.5, 1.8, 2.0] {
                let v = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
                let q = (0..d).map(|_| rng.random_range(0.05..=1.0)).collect();
                let theta = (0..d).map(|_| rng.random_range(0.0..0.9)).collect();
                let m = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
                let (y, mu) = match kind {
                    HardKind::Cvx => ((0..d).map(|_| rng.random_range(-2.0..2.0)).collect(), 0.0),
                    HardKind::Str => (vec![0.0; d], rng.random_range(0.5..2.0)),
                };
                let h = HardInstance::from_parts(kind, d, v, q, theta, m, y, mu).map_err(|e| e.to_string())?;
                lemma_checks(&h, p, &mut rng)?;
                count += 1;
            }
        }
    }
    // regime instances: ‖x⋆‖ = D (convex), ‖x⋆‖ <= D (strongly convex)
    for (regime, mu) in [(HardRegime::CvxFano, 0.0), (HardRegime::StrFano, 1.0)] {
        for horizon in [10u64, 1000, 100_000] {
            let inputs = HardInputs { g: 1.0, d: 2.0, mu, sigma_l: 3.0, p: 1.5, horizon, d_star: 6, delta: 0.0 };
            let params = hard_params(regime, &inputs).map_err(|e| e.to_string())?;
            let h = HardInstance::new(regime.kind(), 8, &params, vec![1.0; 8]).map_err(|e| e.to_string())?;
            let r = h.x_star_norm();
            match regime.kind() {
                HardKind::Cvx => ensure((r - 2.0).abs() <= 1e-12, || format!("cvx ‖x⋆‖ = {r}, want 2"))?,
                HardKind::Str => {
                    let want = params.m * params.q * params.theta * 6f64.sqrt();
                    ensure((r - want).abs() <= 1e-12 && r <= 2.0 + 1e-12, || format!("str ‖x⋆‖ = {r}"))?
                }
            }
            lemma_checks(&h, 1.5, &mut rng)?;
            count += 1;
        }
    }
    Ok(format!("{count} instances, items 1-5 of both lemmas"))
}

fn crit10() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut notes = Vec::new();
    for (alpha, p, d) in [(1.8, 1.5, 16usize), (1.5, 1.2, 4usize)] {
        let sp = StableParams::symmetric(alpha, 1.0);
        let n = 1_000_000;
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..n {
            let mut s = 0.0;
            for _ in 0..d {
                let x = sample_alpha_stable(&sp, &mut rng).map_err(|e| e.to_string())?;
                den += x.abs().powf(p);
                s += x;
            }
            num += s.abs().powf(p);
        }
        let num = num / n as f64;
        let den = den / (n * d) as f64;
        let ratio = num / ((d as f64).powf(p / alpha) * den);
        ensure((0.95..=1.05).contains(&ratio), || format!("ratio {ratio:.4} at (alpha, p, d) = ({alpha}, {p}, {d})"))?;
        notes.push(format!("({alpha}, {p}, {d}): {ratio:.4}"));
    }
    Ok(notes.join(", "))
}

fn crit11() -> Result<String, String> {
    for d in [1usize, 2, 7, 64] {
        ensure(d_eff_iid(d, 2.0).unwrap() == d as f64, || format!("iid at p = 2, d = {d}"))?;
        for p in [1.1, 1.5, 1.9, 2.0] {
            let a = d_eff_independent(&vec![0.7; d], p).unwrap();
            let b = d_eff_iid(d, p).unwrap();
            ensure(rel_close(a, b, 1e-12), || format!("independent {a} vs iid {b} at d={d}, p={p}"))?;
        }
    }
    let d = 8;
    let obj = CompositeObjective::new(FKind::EuclidNorm { g: 1.0, y: vec![0.0; d] }, RKind::Zero, Domain::AllSpace { d })
        .map_err(|e| e.to_string())?;
    let oracle = make_oracle(&obj, OracleKind::AdditiveGaussian { scales: vec![1.3; d] }, 2.0, None).map_err(|e| e.to_string())?;
    let x = vec![1.0; d];
    let grad = subgrad_f(&obj, &x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let est = estimate_moments(&oracle, &obj, &x, &grad, 2.0, 1_000_000, 8, false, &mut rng).map_err(|e| e.to_string())?;
    let hat = est.sigma_l_p / est.sigma_s_p_lower;
    ensure((0.9 * d as f64..=1.1 * d as f64).contains(&hat), || format!("empirical d_eff {hat}"))?;
    Ok(format!("iid(p=2) = d exactly, independent = iid to 1e-12, empirical d_eff = {hat:.3} for d = 8"))
}

const DET_CFG: &str = r#"{
    "problem": {"kind": "hard", "d": 6, "G": 1.0, "D": 1.0},
    "noise": {"kind": "hard", "p": 1.5, "sigma_l": 2.0},
    "schedule": {"regime": "cvx-hp-anytime", "delta": 0.1, "algorithm": "stabilized"},
    "hardness": {"regime": "cvx-fano", "d_star": 6},
    "run": {"t_grid": {"min": 64, "max": 1024, "ratio": 4}, "trials": 40, "master_seed": 12},
    "eval": {"quantile_levels": [0.5, 0.9]}
}"#;

const DET_CFG_STABLE: &str = r#"{
    "problem": {"kind": "abs-sum", "d": 3, "mu": 0.5, "x1_mode": {"type": "offset", "v": [1.0, -1.0, 2.0]}},
    "noise": {"kind": "stable", "p": 1.5, "stable": {"alpha": 1.8, "gamma": 0.5}},
    "schedule": {"regime": "str-hp", "delta": 0.05},
    "run": {"t_grid": {"min": 50, "max": 800}, "trials": 30, "master_seed": 99}
}"#;

fn crit12() -> Result<String, String> {
    let bin = env!("CARGO_BIN_EXE_htclip");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for (name, cfg) in [("hard", DET_CFG), ("stable", DET_CFG_STABLE)] {
        let cfg_path = tmp.path().join(format!("{name}.json"));
        std::fs::write(&cfg_path, cfg).map_err(|e| e.to_string())?;
        let mut outputs: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
        for threads in ["1", "3", "8"] {
            let out = tmp.path().join(format!("{name}-{threads}"));
            let status = Command::new(bin)
                .args(["run", "--config"])
                .arg(&cfg_path)
                .arg("--out")
                .arg(&out)
                .args(["--threads", threads, "--seed", "424242"])
                .output()
                .map_err(|e| e.to_string())?;
            ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
            let read = |f: &str| std::fs::read(Path::new(&out).join(f)).map_err(|e| e.to_string());
            outputs.push((read("series.csv")?, read("manifest.json")?));
        }
        ensure(outputs.windows(2).all(|w| w[0] == w[1]), || format!("{name}: outputs differ across thread counts"))?;
        checked += 1;
    }
    Ok(format!("{checked} configs byte-identical at 1, 3 and 8 threads"))
}

fn crit13() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let d = 1 + k % 3;
        let rv = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| rng.random_range(-2.0..2.0)).collect() };
        let r = if k % 2 == 0 { RKind::Zero } else { RKind::Quad { mu: rng.random_range(0.1..3.0), center: rv(&mut rng) } };
        let domain = if (k / 2) % 2 == 0 {
            Domain::AllSpace { d }
        } else {
            Domain::Ball { center: rv(&mut rng), radius: rng.random_range(0.2..2.0) }
        };
        let x_t = rv(&mut rng);
        let x1 = rv(&mut rng);
        let g: Vec<f64> = rv(&mut rng).iter().map(|v| 3.0 * v).collect();
        let eta = rng.random_range(0.05..2.0);
        let eta_next = eta * rng.random_range(0.3..=1.0);
        let got = prox_step(&r, &domain, &x_t, &g, eta).map_err(|e| e.to_string())?;
        let want = numeric_prox(&r, &domain, &x_t, None, &g, eta);
        let err = norm(&got.iter().zip(&want).map(|(a, b)| a - b).collect::<Vec<_>>());
        worst = worst.max(err);
        ensure(err <= 1e-6, || format!("prox instance {k}: error {err:e}"))?;
        let got = stabilized_prox_step(&r, &domain, &x_t, &x1, &g, eta, eta_next).map_err(|e| e.to_string())?;
        let kappa = eta / eta_next - 1.0;
        let want = numeric_prox(&r, &domain, &x_t, Some((&x1, kappa)), &g, eta);
        let err = norm(&got.iter().zip(&want).map(|(a, b)| a - b).collect::<Vec<_>>());
        worst = worst.max(err);
        ensure(err <= 1e-6, || format!("stabilized instance {k}: error {err:e}"))?;
    }
    Ok(format!("1000 instances, max distance to the numeric minimizer {worst:.1e}"))
}

fn main() {
    let criteria: [(u32, &str, Check, Option<Duration>); 13] = [
        (1, "clipping-error exactness", crit1, Some(Duration::from_secs(1))),
        (2, "clipping-error Monte Carlo", crit2, Some(Duration::from_secs(30))),
        (3, "schedule identities", crit3, Some(Duration::from_secs(1))),
        (4, "Gamma_t closed form", crit4, Some(Duration::from_secs(1))),
        (5, "noiseless recovery", crit5, Some(Duration::from_secs(5))),
        (6, "convex in-expectation exponent", crit6, None),
        (7, "strongly convex in-expectation exponent", crit7, None),
        (8, "p = 2 specialization", crit8, None),
        (9, "hard-instance lemmas", crit9, Some(Duration::from_secs(10))),
        (10, "stable-sum scaling", crit10, Some(Duration::from_secs(60))),
        (11, "d_eff calculators", crit11, None),
        (12, "determinism across thread counts", crit12, None),
        (13, "prox oracles", crit13, Some(Duration::from_secs(10))),
    ];
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(msg), Some(b)) if took > b => Err(format!("{msg}; took {took:.2?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(msg) => println!("PASS [{id:>2}] {name}: {msg} ({took:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: {msg} ({took:.2?})");
            }
        }
    }
    println!("{} of 13 criteria passed", 13 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
