"""Acceptance suite: one test per criterion, each recording a pass/fail line.

The lines are printed in the terminal summary (see conftest.py). Criteria 5
to 9 share one seeded end-to-end study on case6: dataset generation,
training and the six-model benchmark.
"""

import itertools
import math
import time

import numpy as np
import pytest

from rcuc import dynamics as dy
from rcuc import encoding, pipeline
from rcuc.grid import case_from_dict, load_case
from rcuc.milp import INFEASIBLE, LE, GE, OPTIMAL, MilpModel, solve_lp, solve_milp
from rcuc.predictor import forward, gradients, init_params, mse_loss

# benchmark time limit per model; the exact DNN model rarely closes its gap
STUDY_TIME_LIMIT_S = 300.0


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


# -- criterion 1 ------------------------------------------------------------------


def machine_case(H, S, D, f0):
    doc = {
        "meta": {"name": "one", "base_mva": 100.0, "f0_hz": f0},
        "buses": [{"id": 1, "kind": "generator-bus"}],
        "branches": [],
        "generators": [{"id": 1, "bus": 1, "p_min_mw": 0, "p_max_mw": S, "ramp_mw_per_h": S, "min_up_h": 1,
                        "min_down_h": 1, "cost_energy_per_mwh": 1, "cost_noload_per_h": 0, "cost_startup": 0,
                        "cost_reserve_per_mwh": 0, "inertia_h_s": H, "rated_mva": S, "damping_d": D}],
        "profiles": {"horizon_h": 1, "load_mw": {}, "wind_mw": {}},
    }
    return case_from_dict(doc)


def one_machine_errors():
    rng = np.random.default_rng(2024)
    errs = []
    for _ in range(10):
        H, S = rng.uniform(1.5, 10.0), rng.uniform(50.0, 1000.0)
        dp, D, f0 = rng.uniform(0.05, 0.5) * S, rng.uniform(0.0, 2.0), float(rng.choice([50.0, 60.0]))
        red = dy.kron_reduce(machine_case(H, S, D, f0))
        tr = dy.simulate_contingency(red, dy.ContingencyEvent(0, dp, 1), horizon_s=0.01, step_s=1e-4)
        slope = (tr.freq_hz[1, 0] - tr.freq_hz[0, 0]) / tr.step_s
        expected = -dp * f0 / (2 * H * S)
        errs.append(abs(slope - expected) / abs(expected))
    return max(errs)


def test_criterion_1_one_machine_oracle(criterion):
    worst, secs = timed(one_machine_errors)
    ok = worst <= 0.005 and secs < 5.0
    assert criterion(1, ok, f"one-machine RoCoF max rel err {worst:.2e} (<= 5e-3), {secs:.2f} s (< 5 s)")


# -- criterion 2 ------------------------------------------------------------------


def homogeneous_case(n, H=5.0, S=200.0, D=2.0):
    br = [(1, 2, 8.0)] if n == 2 else [(1, 2, 8.0), (2, 3, 6.0), (3, 4, 7.0), (4, 1, 5.0), (1, 3, 3.0)]
    doc = {
        "meta": {"name": f"h{n}", "base_mva": 100.0, "f0_hz": 60.0},
        "buses": [{"id": b, "kind": "generator-bus"} for b in range(1, n + 1)],
        "branches": [{"from_bus": a, "to_bus": b, "susceptance_pu": s, "flow_limit_mw": 1e4} for a, b, s in br],
        "generators": [{"id": b, "bus": b, "p_min_mw": 0, "p_max_mw": 500, "ramp_mw_per_h": 500, "min_up_h": 1,
                        "min_down_h": 1, "cost_energy_per_mwh": 1, "cost_noload_per_h": 0, "cost_startup": 0,
                        "cost_reserve_per_mwh": 0, "inertia_h_s": H, "rated_mva": S, "damping_d": D}
                       for b in range(1, n + 1)],
        "profiles": {"horizon_h": 1, "load_mw": {}, "wind_mw": {}},
    }
    return case_from_dict(doc)


def closed_form_deviation(n, dp=80.0, window=0.5):
    red = dy.kron_reduce(homogeneous_case(n))
    ev = dy.ContingencyEvent(0, dp, 1)
    tr = dy.simulate_contingency(red, ev, horizon_s=1.6, step_s=1e-3)
    k = int(round(window / tr.step_s))
    ode = (tr.freq_hz[k:] - tr.freq_hz[:-k]) / window
    starts = np.arange(0, int(round(1.0 / tr.step_s)) + 1)
    cf = dy.closed_form_rocof(dy.decompose(red), ev, red.inertia[0], red.gamma, window, starts * tr.step_s)
    ode = ode[starts].T
    return float(np.max(np.abs(cf - ode)) / np.max(np.abs(ode)))


def test_criterion_2_closed_form_fidelity(criterion):
    (d2, d4), secs = timed(lambda: (closed_form_deviation(2), closed_form_deviation(4)))
    ok = max(d2, d4) <= 0.02 and secs < 10.0
    assert criterion(2, ok, f"closed form vs ODE: 2-bus {d2:.2e}, 4-bus {d4:.2e} (<= 2e-2), {secs:.2f} s (< 10 s)")


# -- criterion 3 ------------------------------------------------------------------


def random_milp(rng, n_bin, n_cont):
    m = MilpModel()
    xs = [m.add_var(f"b{i}", binary=True) for i in range(n_bin)]
    xs += [m.add_var(f"c{i}", 0.0, float(rng.uniform(1, 5))) for i in range(n_cont)]
    for _ in range(int(rng.integers(2, 7))):
        coef = {v: float(rng.integers(-5, 10)) for v in xs if rng.random() < 0.7} or {xs[0]: 1.0}
        m.add_constraint(coef, LE if rng.random() < 0.8 else GE, float(rng.integers(0, 3 * n_bin)))
    m.set_objective({v: float(rng.integers(-10, 10)) for v in xs})
    return m


def enumerate_optimum(m):
    """Exhaustive search: every binary pattern at once when there are no continuous
    variables, otherwise one LP per pattern."""
    arr = m.arrays()
    bins = np.flatnonzero(arr.binary)
    patterns = np.array(list(itertools.product((0.0, 1.0), repeat=bins.size)))
    if bins.size == arr.n:
        act = arr.A @ patterns.T
        ok = np.ones(len(patterns), dtype=bool)
        for k, s in enumerate(arr.sense):
            ok &= act[k] <= arr.rhs[k] + 1e-9 if s == LE else act[k] >= arr.rhs[k] - 1e-9
            if s not in (LE, GE):
                ok &= np.abs(act[k] - arr.rhs[k]) <= 1e-9
        vals = patterns @ arr.c + arr.constant
        return float(vals[ok].min()) if ok.any() else math.inf
    best = math.inf
    for bits in patterns:
        sub = m.copy()
        for i, b in zip(bins, bits):
            sub.fix(int(i), float(b))
        r = solve_lp(sub, "highs")
        if r.status == OPTIMAL:
            best = min(best, r.objective)
    return best


def milp_mismatches():
    rng = np.random.default_rng(3)
    bad = 0
    for k in range(50):
        n_bin, n_cont = (int(rng.integers(6, 13)), 0) if k % 2 == 0 else (int(rng.integers(3, 7)),
                                                                           int(rng.integers(1, 4)))
        m = random_milp(rng, n_bin, n_cont)
        opt = enumerate_optimum(m)
        sol = solve_milp(m, gap=0.0, backend="bnb")
        if math.isinf(opt):
            bad += sol.status != INFEASIBLE
        else:
            bad += not (sol.status == OPTIMAL and abs(sol.objective_value - opt) <= 1e-6 * (1 + abs(opt))
                        and m.max_violation(sol.values) <= 1e-6)
    return bad


def test_criterion_3_milp_vs_enumeration(criterion):
    bad, secs = timed(milp_mismatches)
    ok = bad == 0 and secs < 60.0
    assert criterion(3, ok, f"branch and bound vs enumeration: {bad}/50 mismatches, {secs:.1f} s (< 60 s)")


# -- criterion 4 ------------------------------------------------------------------


def encoding_error():
    rng = np.random.default_rng(4)
    worst = 0.0
    for k in range(20):
        p = init_params([6, 10, 10, 10, 1], 500 + k)
        for b in p.biases:
            b[:] = rng.normal(scale=0.5, size=b.shape)
        lo, hi = -np.ones(6), np.ones(6)
        bounds = encoding.compute_bounds(p, lo, hi)
        for x in rng.uniform(lo, hi, size=(10, 6)):
            m = MilpModel()
            xs = [m.add_var(None, float(v), float(v)) for v in x]
            enc = encoding.encode(p, bounds, frozenset(), m, xs)
            m.set_objective({enc.output: 1.0})
            sol = solve_milp(m, gap=0.0, backend="highs")
            worst = max(worst, abs(sol.values[enc.output] - float(forward(p, x))) if sol.values is not None
                        else math.inf)
    return worst


def test_criterion_4_encoding_exactness(criterion):
    worst, secs = timed(encoding_error)
    ok = worst <= 1e-6 and secs < 120.0
    assert criterion(4, ok, f"exact encoding vs forward pass, 20 nets x 10 inputs: max err {worst:.1e} "
                            f"(<= 1e-6), {secs:.1f} s (< 120 s)")


# -- shared end-to-end study ----------------------------------------------------------


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    cfg = pipeline.RunConfig(case="case6", seed=0, time_limit_s=STUDY_TIME_LIMIT_S, out_dir=str(out))
    case = load_case(cfg.case)
    t0 = time.perf_counter()
    dataset = pipeline.generate_dataset(cfg, case)
    trained = pipeline.train_from_dataset(dataset, cfg)
    prep_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    report = pipeline.run_benchmark(cfg, trained.params, pipeline._stats_rows(dataset, cfg), case,
                                    traces_dir=out / "traces")
    bench_s = time.perf_counter() - t0
    pipeline.write_report(report, out)
    return {"cfg": cfg, "dataset": dataset, "trained": trained, "prep_s": prep_s, "report": report,
            "bench_s": bench_s, "out": out}


def lower_bound(res):
    """Proven lower bound on the model's optimal cost from its reported gap."""
    s = res.schedule
    return s.total_cost * (1.0 - s.gap)


def ordered(results, names):
    """Each model's proven lower bound does not exceed the next model's cost."""
    return all(lower_bound(results[a]) <= results[b].schedule.total_cost * (1 + 1e-9)
               for a, b in zip(names, names[1:]))


def triangle_contains_relu():
    rng = np.random.default_rng(5)
    for _ in range(200):
        lb, ub = -rng.uniform(0.01, 100), rng.uniform(0.01, 100)
        z = np.linspace(lb, ub, 1001)
        relu = np.maximum(z, 0)
        slope = ub / (ub - lb)
        if not (np.all(relu >= z - 1e-12) and np.all(relu >= 0)
                and np.all(relu <= slope * (z - lb) + 1e-9 * (1 + ub))):
            return False
    return True


def test_criterion_5_relaxation_and_ordering(criterion, study):
    res = study["report"].results
    sound = triangle_contains_relu()
    order = ordered(res, ["RLNN-RCUC", "SLNN-RCUC", "DNN-RCUC"])
    costs = ", ".join(f"{n} {res[n].schedule.total_cost:.1f} (gap {res[n].schedule.gap:.2%})"
                      for n in ("RLNN-RCUC", "SLNN-RCUC", "DNN-RCUC"))
    ok = sound and order and study["bench_s"] < 600
    assert criterion(5, ok, f"triangle sweep {'sound' if sound else 'UNSOUND'}; {costs}; "
                            f"benchmark {study['bench_s']:.0f} s (< 600 s)")


def test_criterion_6_predictor_quality(criterion, study):
    r2 = study["trained"].metrics["r2"]
    n = len(study["dataset"])
    rng = np.random.default_rng(6)
    p = init_params([4, 5, 5, 1], 6)
    for b in p.biases:  # nonzero biases keep pre-activations off the ReLU kink
        b[:] = rng.normal(size=b.shape)
    X, y = rng.normal(size=(40, 4)), rng.normal(size=40)
    gW, gb = gradients(p, X, y)
    worst, h = 0.0, 1e-5
    for arrs, grads in ((p.weights, gW), (p.biases, gb)):
        for a, g in zip(arrs, grads):
            for idx in np.ndindex(a.shape):
                old = a[idx]
                a[idx] = old + h
                up = mse_loss(p, X, y)
                a[idx] = old - h
                dn = mse_loss(p, X, y)
                a[idx] = old
                fd = (up - dn) / (2 * h)
                worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-6))
    ok = n >= 2000 and r2 >= 0.90 and worst <= 1e-4 and study["prep_s"] < 900
    assert criterion(6, ok, f"{n} rows, validation R2 {r2:.4f} (>= 0.90), gradient rel err {worst:.1e} "
                            f"(<= 1e-4), generation + training {study['prep_s']:.0f} s (< 900 s)")


def test_criterion_7_headline_stability(criterion, study):
    res = study["report"].results
    cfg = study["cfg"]
    cap = cfg.rocof_lim * (1 + cfg.verify_tolerance)
    sl = [r["rocof"] for r in res["SLNN-RCUC"].verification]
    ts = [r["rocof"] for r in res["T-SCUC"].verification]
    sl_ok = all(v <= cap for v in sl)
    ts_fails = any(v > cap for v in ts)
    ok = sl_ok and ts_fails
    assert criterion(7, ok, f"SLNN-RCUC simulated RoCoF {[round(v, 3) for v in sl]} (all <= {cap:.2f}); "
                            f"T-SCUC {[round(v, 3) for v in ts]} (some > {cap:.2f})")


def test_criterion_8_efficiency(criterion, study):
    res = study["report"].results
    sl, dn = res["SLNN-RCUC"], res["DNN-RCUC"]
    selected = sl.extra["selected"]
    faster = sl.solve_time_s <= 0.8 * dn.solve_time_s
    fewer = sl.n_binaries < dn.n_binaries if selected else True
    ok = faster and fewer
    assert criterion(8, ok, f"SLNN {sl.solve_time_s:.1f} s vs DNN {dn.solve_time_s:.1f} s (<= 0.8x); "
                            f"binaries {sl.n_binaries} vs {dn.n_binaries} with |H| = {selected}")


def test_criterion_9_data_variant_ordering(criterion, study):
    res = study["report"].results
    names = ["T-SCUC", "ERC-SCUC", "LRC-SCUC"]
    gap = study["cfg"].gap
    reached = all(res[n].schedule.gap <= gap + 1e-12 for n in names)
    order = ordered(res, names)
    costs = ", ".join(f"{n} {res[n].schedule.total_cost:.1f}" for n in names)
    ok = order if reached else True
    note = "" if reached else " (not all models reached the gap; ordering not required)"
    assert criterion(9, ok, f"{costs}{note}; study time {study['bench_s']:.0f} s")
