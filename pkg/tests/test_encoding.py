import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcuc import encoding
from rcuc.encoding import (
    EXACT,
    FIXED_IDENTITY,
    FIXED_ZERO,
    TRIANGLE,
    EncodingError,
    NeuronBounds,
    NeuronStats,
)
from rcuc.milp import EQ, GE, INFEASIBLE, LE, OPTIMAL, MilpModel, solve_milp
from rcuc.predictor import MlpParams, forward, init_params, preactivations


def random_net(seed, sizes=(2, 10, 10, 1)):
    rng = np.random.default_rng(seed)
    p = init_params(list(sizes), seed)
    for b in p.biases:
        b[:] = rng.normal(scale=0.5, size=b.shape)
    return p


def encoded_model(params, bounds, selected, x_lo, x_hi):
    m = MilpModel()
    x = [m.add_var(f"x{i}", float(a), float(b)) for i, (a, b) in enumerate(zip(x_lo, x_hi))]
    enc = encoding.encode(params, bounds, selected, m, x)
    return m, x, enc


# -- bounds -------------------------------------------------------------------


def test_bounds_single_neuron():
    p = MlpParams([np.array([[1.0], [-1.0]]), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    b = encoding.compute_bounds(p, [0, 0], [1, 1])
    assert b.lower[0].tolist() == [-1.0] and b.upper[0].tolist() == [1.0]
    assert (b.out_lower, b.out_upper) == (0.0, 1.0)


def test_bounds_zero_weights():
    p = MlpParams([np.zeros((3, 2)), np.zeros((2, 1))], [np.full(2, 2.0), np.zeros(1)])
    b = encoding.compute_bounds(p, [-5, 0, 1], [5, 1, 9])
    assert np.all(b.lower[0] == 2.0) and np.all(b.upper[0] == 2.0)


def test_bounds_bad_box():
    p = random_net(0)
    with pytest.raises(EncodingError):
        encoding.compute_bounds(p, [0, 0], [1, np.inf])
    with pytest.raises(EncodingError):
        encoding.compute_bounds(p, [1, 0], [0, 1])
    with pytest.raises(EncodingError):
        encoding.compute_bounds(p, [0], [1])


def within(pre, bounds, tol=1e-9):
    return all(np.all(z >= lo - tol) and np.all(z <= hi + tol) for z, (lo, hi) in zip(pre, bounds))


def test_bounds_grid_soundness():
    p = random_net(1)
    b = encoding.compute_bounds(p, [-1, 0], [2, 3])
    g1, g2 = np.meshgrid(np.linspace(-1, 2, 50), np.linspace(0, 3, 50))
    X = np.column_stack([g1.ravel(), g2.ravel()])
    assert within(preactivations(p, X), b)
    out = forward(p, X)
    assert out.min() >= b.out_lower - 1e-9 and out.max() <= b.out_upper + 1e-9


def test_bounds_random_samples():
    p = random_net(2, sizes=(6, 10, 10, 10, 1))
    lo, hi = np.zeros(6), np.array([1, 1, 50, 50, 80, 80.0])
    b = encoding.compute_bounds(p, lo, hi)
    X = np.random.default_rng(3).uniform(lo, hi, size=(10_000, 6))
    assert within(preactivations(p, X), b)


def triangle_rows():
    return [({0: 1.0, 1: 1.0}, LE, 1.0)]


def test_lp_tightening_valid_and_tighter():
    p = random_net(4)
    box = encoding.compute_bounds(p, [0, 0], [1, 1])
    tb = encoding.tighten_bounds(p, box, [0, 0], [1, 1], triangle_rows())
    rng = np.random.default_rng(5)
    X = rng.uniform(0, 1, size=(20_000, 2))
    X = X[X.sum(axis=1) <= 1]
    assert within(preactivations(p, X), tb, tol=1e-6)
    out = forward(p, X)
    assert out.min() >= tb.out_lower - 1e-6 and out.max() <= tb.out_upper + 1e-6
    for (l0, u0), (l1, u1) in zip(box, tb):
        assert np.all(l1 >= l0) and np.all(u1 <= u0)


def test_milp_tightening_valid_and_tighter():
    p = random_net(6)
    box = encoding.compute_bounds(p, [0, 0], [1, 1])
    lp = encoding.tighten_bounds(p, box, [0, 0], [1, 1], triangle_rows())

    def build(model):
        x = [model.add_var(f"x{i}", 0.0, 1.0) for i in range(2)]
        model.add_constraint({x[0]: 1.0, x[1]: 1.0}, LE, 1.0)
        return x

    mb = encoding.tighten_bounds_milp(p, lp, build)
    X = np.random.default_rng(7).uniform(0, 1, size=(20_000, 2))
    X = X[X.sum(axis=1) <= 1]
    pre = preactivations(p, X)
    assert within(pre, mb, tol=1e-6)
    for (l0, u0), (l1, u1) in zip(lp, mb):
        assert np.all(l1 >= l0) and np.all(u1 <= u0)
    # exact prefix: the bounds are attained up to sampling density
    for z, (lo, hi) in zip(pre, mb):
        assert np.all(z.max(axis=0) >= hi - 0.05 * (hi - lo + 1))


# -- statistics and selection ---------------------------------------------------


def one_neuron_identity():
    return MlpParams([np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])


def test_positivity_examples():
    p = one_neuron_identity()
    s = encoding.activation_stats(p, np.array([[1.0], [-1.0], [2.0], [-2.0]]))
    assert s.positivity[0].tolist() == [0.5] and s.n_samples == 4
    assert encoding.activation_stats(p, np.array([[1.0], [3.0]])).positivity[0].tolist() == [1.0]


def test_positivity_recount():
    p = random_net(8, sizes=(6, 10, 10, 10, 1))
    X = np.random.default_rng(9).normal(size=(500, 6)) * 10
    s = encoding.activation_stats(p, X)
    for q in range(3):
        for l in range(10):
            count = 0
            for x in X:
                a = x
                for qq in range(q + 1):
                    z = a @ p.weights[qq] + p.biases[qq]
                    a = np.maximum(z, 0)
                count += z[l] > 0
            assert s.positivity[q][l] == count / len(X)
            assert 0 <= s.positivity[q][l] <= 1


def test_positivity_errors_and_printed_formula():
    p = one_neuron_identity()
    with pytest.raises(EncodingError):
        encoding.activation_stats(p, np.zeros((0, 1)))
    with pytest.raises(EncodingError):
        encoding.activation_stats(p, np.ones((2, 1)), formula="other")
    s = encoding.activation_stats(p, np.array([[1.0], [-1.0], [2.0], [-2.0]]), formula="printed")
    assert s.positivity[0][0] == pytest.approx((0 - 6) / 4)


def test_selection_examples():
    s = NeuronStats([np.array([0.9, 0.4, 0.5])], 10)
    assert encoding.select_neurons(s, 0.5) == {(0, 0), (0, 2)}
    assert encoding.select_neurons(s, 0.0) == {(0, 0), (0, 1), (0, 2)}
    assert encoding.select_neurons(s, 1.01) == frozenset()


# -- encoding -------------------------------------------------------------------


def fixed_input_error(n_nets, n_inputs, sizes, backend):
    rng = np.random.default_rng(10)
    worst = 0.0
    for k in range(n_nets):
        p = random_net(100 + k, sizes=sizes)
        lo, hi = -np.ones(sizes[0]), np.ones(sizes[0])
        b = encoding.compute_bounds(p, lo, hi)
        for x in rng.uniform(lo, hi, size=(n_inputs, sizes[0])):
            for sign in (1.0, -1.0):
                m, _, enc = encoded_model(p, b, frozenset(), x, x)
                m.set_objective({enc.output: sign})
                sol = solve_milp(m, gap=0.0, backend=backend)
                assert sol.status == OPTIMAL
                worst = max(worst, abs(sol.values[enc.output] - forward(p, x)))
    return worst


def test_exact_encoding_reproduces_forward():
    # minimising and maximising the output both land on the forward pass
    assert fixed_input_error(20, 10, (6, 10, 10, 10, 1), "highs") <= 1e-6


def test_exact_encoding_builtin_solver():
    assert fixed_input_error(3, 3, (4, 5, 5, 1), "bnb") <= 1e-6


def test_modes_and_binaries():
    W = np.array([[1.0, 1.0, -1.0, 1.0]])
    p = MlpParams([W, np.ones((4, 1))], [np.array([0.0, 5.0, -5.0, 0.0]), np.zeros(1)])
    b = encoding.compute_bounds(p, [-2], [4])
    m, _, enc = encoded_model(p, b, {(0, 3)}, [-2], [4])
    assert enc.modes[0] == [EXACT, FIXED_IDENTITY, FIXED_ZERO, TRIANGLE]
    assert enc.n_binaries == 1
    assert enc.z[0][1] == enc.zhat[0][1] and enc.z[0][2] is None
    assert all(a is None for a in enc.a[0][1:])
    assert enc.big_m[0][0] == 5.0 and np.isnan(enc.big_m[0][1])


def test_triangle_vertices():
    p = MlpParams([np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    b = NeuronBounds([np.array([-2.0])], [np.array([4.0])], -10, 10)
    for zhat, expected in ((-2.0, 0.0), (4.0, 4.0)):
        for sign in (1.0, -1.0):
            m, _, enc = encoded_model(p, b, {(0, 0)}, [zhat], [zhat])
            m.set_objective({enc.z[0][0]: sign})
            sol = solve_milp(m, gap=0.0)
            assert sol.values[enc.z[0][0]] == pytest.approx(expected, abs=1e-9)


def satisfies(model, x, tol):
    for c in model.constraints:
        lhs = float(c.value @ x[c.index])
        if (c.sense == LE and lhs > c.rhs + tol) or (c.sense == GE and lhs < c.rhs - tol):
            return False
        if c.sense == EQ and abs(lhs - c.rhs) > tol:
            return False
    return all(v.lower - tol <= xv <= v.upper + tol for v, xv in zip(model.variables, x))


@settings(max_examples=40, deadline=None)
@given(st.floats(-100, -1e-3), st.floats(1e-3, 100))
def test_triangle_contains_relu(lb, ub):
    p = MlpParams([np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    b = NeuronBounds([np.array([lb])], [np.array([ub])], -1e4, 1e4)
    m, x, enc = encoded_model(p, b, {(0, 0)}, [lb], [ub])
    zh, z = enc.zhat[0][0], enc.z[0][0]
    for v in np.linspace(lb, ub, 201):
        point = np.zeros(m.n_vars)
        point[x[0]] = point[zh] = v
        point[z] = max(v, 0.0)
        point[enc.output] = max(v, 0.0)
        assert satisfies(m, point, 1e-9)


def test_selected_neuron_with_empty_interval_rejected():
    p = MlpParams([np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    b = NeuronBounds([np.array([1.0])], [np.array([-1.0])])
    with pytest.raises(EncodingError):
        encoded_model(p, b, {(0, 0)}, [0], [0])
    with pytest.raises(EncodingError):
        encoding.encode(p, encoding.compute_bounds(p, [0], [1]), set(), MilpModel(), [])


def test_binary_accounting():
    p = random_net(11, sizes=(6, 10, 10, 10, 1))
    lo, hi = -np.ones(6), np.ones(6)
    b = encoding.compute_bounds(p, lo, hi)
    fixed = sum(1 for lbs, ubs in b for l, u in zip(lbs, ubs) if u <= 0 or l >= 0)
    rng = np.random.default_rng(12)
    neurons = sorted(encoding.all_neurons(p))
    _, _, dnn = encoded_model(p, b, frozenset(), lo, hi)
    assert dnn.n_binaries == encoding.dnn_binary_count(p, b) == 30 - fixed
    for k in (0, 5, 17, 30):
        H = frozenset(neurons[i] for i in rng.choice(30, size=k, replace=False))
        _, _, enc = encoded_model(p, b, H, lo, hi)
        ambiguous_in_h = sum(1 for q, l in H if b.lower[q][l] < 0 < b.upper[q][l])
        assert enc.n_binaries == dnn.n_binaries - ambiguous_in_h
        assert enc.count(TRIANGLE) == ambiguous_in_h


def grid_minimum(p, lo, hi, n=401):
    g1, g2 = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n))
    return forward(p, np.column_stack([g1.ravel(), g2.ravel()])).min()


def test_monotone_relaxation():
    p = random_net(13, sizes=(2, 4, 1))
    lo, hi = [-1.0, -1.0], [1.0, 1.0]
    b = encoding.compute_bounds(p, lo, hi)
    neurons = sorted(encoding.all_neurons(p))
    best = {}
    for r in range(len(neurons) + 1):
        for H in itertools.combinations(neurons, r):
            m, _, enc = encoded_model(p, b, frozenset(H), lo, hi)
            m.set_objective({enc.output: 1.0})
            best[frozenset(H)] = solve_milp(m, gap=0.0).objective_value
    for small, large in itertools.combinations(best, 2):
        if small < large:
            assert best[large] <= best[small] + 1e-9
    exact = best[frozenset()]
    grid = grid_minimum(p, lo, hi)
    assert exact <= grid + 1e-9
    assert exact >= grid - 0.01 * (1 + abs(grid))


def test_rocof_row_and_infeasible_limit():
    p = random_net(14, sizes=(2, 5, 5, 1))
    lo, hi = [0.0, 0.0], [1.0, 1.0]
    b = encoding.compute_bounds(p, lo, hi)
    m, _, enc = encoded_model(p, b, frozenset(), lo, hi)
    m.set_objective({enc.output: 1.0})
    floor = solve_milp(m, gap=0.0).objective_value
    row = encoding.attach_rocof_constraint(enc, floor - 0.1, m)
    assert m.constraints[row].rhs == pytest.approx(floor - 0.1)
    assert solve_milp(m, gap=0.0).status == INFEASIBLE

    m, _, enc = encoded_model(p, b, frozenset(), lo, hi)
    m.set_objective({enc.output: -1.0})
    free = solve_milp(m, gap=0.0).objective_value
    encoding.attach_rocof_constraint(enc, 1e9, m)
    assert solve_milp(m, gap=0.0).objective_value == pytest.approx(free)


def test_penalty_weight_objective():
    p = MlpParams([np.array([[1.0, -1.0]]), np.ones((2, 1))], [np.zeros(2), np.zeros(1)])
    b = encoding.compute_bounds(p, [-1], [1])
    m = MilpModel()
    x = m.add_var("x", -1, 1)
    enc = encoding.encode(p, b, {(0, 0)}, m, [x], penalty_weight=3.0)
    assert m.objective == {enc.z[0][0]: 3.0}


def test_selection_report_lists_every_neuron():
    p = random_net(15)
    b = encoding.compute_bounds(p, [0, 0], [1, 1])
    stats = encoding.activation_stats(p, np.random.default_rng(0).uniform(size=(50, 2)))
    text = encoding.selection_report(stats, b, encoding.select_neurons(stats))
    assert len(text.strip().splitlines()) == 1 + 20 + 2
