"""Smoke test for the htclip Python bindings.

Build the extension and put it on the path first, e.g.

    cargo build --release -p htclip-py
    cp target/release/libhtclip_py.so python/htclip_py.so
    python3 python/smoke_test.py
"""

import math

import htclip_py as hc


def main():
    obj = hc.Objective({"type": "euclid-norm", "g": 1.0, "y": [0.0, 0.0, 0.0]})
    assert obj.dim == 3 and obj.lipschitz == 1.0
    assert abs(obj.value([3.0, 4.0, 0.0]) - 5.0) < 1e-12
    assert obj.prox([2.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.5) == [1.5, 0.0, 0.0]

    g = hc.clip([3.0, 4.0], 1.0)
    assert abs(math.hypot(*g) - 1.0) < 1e-12
    assert abs(hc.d_eff_iid(16, 1.5) - 4.0) < 1e-12

    oracle = hc.Oracle(obj, {"type": "additive-gaussian", "scales": [1.0, 1.0, 1.0]}, 2.0)
    assert oracle.sigma_s <= oracle.sigma_l
    assert len(oracle.sample(obj, [1.0, 0.0, 0.0], seed=1, n=5)) == 5

    sched = hc.Schedule("cvx-hp-T", 2.0, oracle.sigma_s, oracle.sigma_l, 1.0, 1.0, delta=0.1, horizon=1000)
    assert sched.eta(1) == sched.eta(1000) > 0.0
    assert sched.tau(1) > 0.0

    x1 = [1.0, 0.0, 0.0]
    runs = [hc.run_clipped_sgd(obj, oracle, sched, 1000, x1, seed=7, stabilized=s) for s in (False, True)]
    # a constant stepsize makes the stabilized anchor vanish
    assert runs[0] == runs[1]
    assert obj.value(runs[0]["avg_plain"]) < obj.value(x1)

    config = {
        "problem": {"kind": "euclid-norm", "d": 3, "G": 1.0, "x1_mode": {"type": "offset", "v": [1.0, 0.0, 0.0]}},
        "noise": {"kind": "none", "p": 1.5},
        "schedule": {"regime": "cvx-hp-T", "delta": 0.1},
        "run": {"t_grid": {"min": 64, "max": 1024, "ratio": 4}, "trials": 1, "master_seed": 3},
    }
    result = hc.run_experiment(config, threads=1)
    slope = [f for f in result["fits"] if f["series"] == "plain"][0]["fit"]["slope"]
    assert abs(slope + 0.5) < 0.05, slope
    print("smoke test passed: noiseless slope", round(slope, 4))


if __name__ == "__main__":
    main()
