"""Embedding a trained ReLU network into a MILP.

Hidden neurons are encoded either exactly with a binary and per-neuron big-M,
or by the triangle relaxation (convex hull of the ReLU graph over the neuron's
bounds, no binary). Neurons whose bounds are one-sided need neither.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .milp import EQ, GE, LE, MilpModel
from .predictor import MlpParams, preactivations

EXACT = "exact"
TRIANGLE = "triangle"
FIXED_ZERO = "fixed-zero"
FIXED_IDENTITY = "fixed-identity"


class EncodingError(ValueError):
    pass


@dataclass
class NeuronBounds:
    """Pre-activation bounds per hidden layer plus the output's range."""

    lower: list
    upper: list
    out_lower: float = -math.inf
    out_upper: float = math.inf

    def __iter__(self):
        return iter(zip(self.lower, self.upper))


@dataclass
class NeuronStats:
    positivity: list  # one array per hidden layer, values in [0, 1]
    n_samples: int


@dataclass
class EncodedNetwork:
    """Variable handles for one embedded copy of the network (one period)."""

    zhat: list  # per layer, list of variable handles (or None)
    z: list  # per layer, handle or None when the post-activation is identically 0
    a: list  # per layer, binary handle or None
    modes: list  # per layer, list of mode strings
    big_m: list  # per layer, array (nan where no big-M row)
    output: int
    selected: frozenset
    tag: str = ""
    rows: list = field(default_factory=list)

    @property
    def n_binaries(self) -> int:
        return sum(1 for layer in self.a for h in layer if h is not None)

    def count(self, mode: str) -> int:
        return sum(1 for layer in self.modes for m in layer if m == mode)


def _check_folded(params: MlpParams) -> MlpParams:
    if np.any(params.offset != 0) or np.any(params.scale != 1) or params.y_scale != 1 or params.y_offset != 0:
        return params.folded()
    return params


def input_box(case) -> tuple[np.ndarray, np.ndarray]:
    """Feature box: u in [0,1], omega_g and P_g in [0, pmax_g]."""
    pmax = case.gen_array("p_max_mw")
    G = len(pmax)
    lo = np.zeros(3 * G)
    hi = np.concatenate([np.ones(G), pmax, pmax])
    return lo, hi


def compute_bounds(params: MlpParams, lo, hi) -> NeuronBounds:
    """Interval propagation through the network over the box ``[lo, hi]``."""
    params = _check_folded(params)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or lo.size != params.layer_sizes[0]:
        raise EncodingError("input box does not match the network input")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(lo > hi):
        raise EncodingError("input box must be finite with lo <= hi")
    lower, upper = [], []
    a_lo, a_hi = lo, hi
    for q, (w, b) in enumerate(zip(params.weights, params.biases)):
        wp = np.maximum(w, 0.0)
        wn = np.minimum(w, 0.0)
        z_lo = a_lo @ wp + a_hi @ wn + b
        z_hi = a_hi @ wp + a_lo @ wn + b
        if q == len(params.weights) - 1:
            return NeuronBounds(lower, upper, float(z_lo[0]), float(z_hi[0]))
        lower.append(z_lo)
        upper.append(z_hi)
        a_lo, a_hi = np.maximum(z_lo, 0.0), np.maximum(z_hi, 0.0)
    raise AssertionError("unreachable")


def input_rows(case, hour: int | None = None) -> list:
    """Linear relations every UC feature vector satisfies, as (coeffs, sense, rhs).

    Coefficients are keyed by feature index in [u, omega, P] order:
    pmin u <= P <= pmax u, omega_g <= P_g, sum(omega) >= P_g for every g, and
    the reserve headroom sum(pmax u - P) >= sum(omega). With ``hour`` the total
    output is also capped by that hour's load (wind can only be spilled).
    """
    pmin = case.gen_array("p_min_mw")
    pmax = case.gen_array("p_max_mw")
    G = len(pmax)
    rows = []
    head = {g: float(pmax[g]) for g in range(G)}
    head.update({2 * G + g: -1.0 for g in range(G)})
    head.update({G + g: -1.0 for g in range(G)})
    rows.append((head, GE, 0.0))
    if hour is not None:
        rows.append(({2 * G + g: 1.0 for g in range(G)}, LE, float(case.profiles.load_mw[:, hour].sum())))
    for g in range(G):
        u, w, p = g, G + g, 2 * G + g
        rows.append(({p: 1.0, u: -pmin[g]}, GE, 0.0))
        rows.append(({p: 1.0, u: -pmax[g]}, LE, 0.0))
        rows.append(({w: 1.0, p: -1.0}, LE, 0.0))
        rows.append(({**{G + k: 1.0 for k in range(G)}, p: -1.0}, GE, 0.0))
    rows.append(({G + k: 1.0 for k in range(G)}, LE, float(pmax.max())))
    return rows


def tighten_bounds(params: MlpParams, bounds: NeuronBounds, lo, hi, rows=()) -> NeuronBounds:
    """Shrink interval bounds by LP over the input polytope and relaxed earlier layers.

    Layer by layer, each pre-activation is minimised and maximised over the box
    ``[lo, hi]`` intersected with ``rows`` (see :func:`input_rows`), with every
    earlier neuron replaced by its triangle relaxation. The result is never
    wider than ``bounds`` and stays valid for every point of the polytope.
    """
    from .milp import OPTIMAL, solve_lp

    params = _check_folded(params)
    n_in = params.layer_sizes[0]
    model = MilpModel("bounds")
    x = [model.add_var(f"x{i}", float(lo[i]), float(hi[i])) for i in range(n_in)]
    for coeffs, sense, rhs in rows:
        model.add_constraint({x[i]: c for i, c in coeffs.items()}, sense, rhs)
    lower = [np.array(v, dtype=float) for v in bounds.lower]
    upper = [np.array(v, dtype=float) for v in bounds.upper]
    prev = x
    for q in range(params.n_hidden + 1):
        w, b = params.weights[q], params.biases[q]
        last = q == params.n_hidden
        lbs = np.array([bounds.out_lower]) if last else lower[q]
        ubs = np.array([bounds.out_upper]) if last else upper[q]
        for l in range(w.shape[1]):
            expr = {h: float(w[i, l]) for i, h in enumerate(prev) if h is not None and w[i, l] != 0}
            for sign in (1.0, -1.0):
                model.set_objective({h: sign * c for h, c in expr.items()})
                res = solve_lp(model, "highs")
                if res.status != OPTIMAL:
                    continue
                val = sign * res.objective + b[l]
                # small outward margin so LP round-off never cuts a true value
                if sign > 0:
                    lbs[l] = max(lbs[l], val - 1e-7 * (1 + abs(val)))
                else:
                    ubs[l] = min(ubs[l], val + 1e-7 * (1 + abs(val)))
        if last:
            return NeuronBounds(lower, upper, float(lbs[0]), float(ubs[0]))
        nxt = []
        for l in range(w.shape[1]):
            lb, ub = float(lbs[l]), float(ubs[l])
            zh = model.add_var(None, lb, ub)
            model.add_constraint({zh: 1.0, **{h: -float(w[i, l]) for i, h in enumerate(prev)
                                             if h is not None and w[i, l] != 0}}, EQ, float(b[l]))
            mode = neuron_mode(lb, ub, True)
            if mode == FIXED_ZERO:
                nxt.append(None)
            elif mode == FIXED_IDENTITY:
                nxt.append(zh)
            else:
                z = model.add_var(None, 0.0, ub)
                slope = ub / (ub - lb)
                model.add_constraint({z: 1.0, zh: -1.0}, GE, 0.0)
                model.add_constraint({z: 1.0, zh: -slope}, LE, -slope * lb)
                nxt.append(z)
        prev = nxt
    raise AssertionError("unreachable")


def tighten_bounds_milp(params: MlpParams, bounds: NeuronBounds, build_inputs, time_limit_s: float = 20.0,
                        layers=None) -> NeuronBounds:
    """Shrink bounds by MILP with every earlier layer encoded exactly.

    ``build_inputs(model)`` adds the input variables (with any integrality and
    side constraints) to a fresh model and returns their handles. Each bound
    is the solver's proven dual bound, so a time-limited solve stays valid.
    ``layers`` restricts which hidden layers are tightened.
    """
    from .milp import solve_milp

    params = _check_folded(params)
    lower = [np.array(v, dtype=float) for v in bounds.lower]
    upper = [np.array(v, dtype=float) for v in bounds.upper]
    layers = range(params.n_hidden) if layers is None else layers
    for q in layers:
        w, b = params.weights[q], params.biases[q]
        for l in range(w.shape[1]):
            for sign in (1.0, -1.0):
                model = MilpModel("bounds")
                x = build_inputs(model)
                head = NeuronBounds(lower[:q], upper[:q])
                prev = _exact_prefix(params, head, q, model, x)
                model.set_objective({h: sign * w[i, l] for i, h in enumerate(prev) if h is not None and w[i, l]})
                sol = solve_milp(model, gap=1e-6, time_limit_s=time_limit_s, backend="highs")
                if not math.isfinite(sol.best_bound):
                    continue
                val = sign * sol.best_bound + b[l]
                if sign > 0:
                    lower[q][l] = max(lower[q][l], val - 1e-7 * (1 + abs(val)))
                else:
                    upper[q][l] = min(upper[q][l], val + 1e-7 * (1 + abs(val)))
    return NeuronBounds(lower, upper, bounds.out_lower, bounds.out_upper)


def _exact_prefix(params: MlpParams, bounds: NeuronBounds, n_layers: int, model: MilpModel, x) -> list:
    """Exact big-M encoding of the first ``n_layers`` hidden layers; returns the last post-activations."""
    prev = list(x)
    for q in range(n_layers):
        w, b = params.weights[q], params.biases[q]
        nxt = []
        for l in range(w.shape[1]):
            lb, ub = float(bounds.lower[q][l]), float(bounds.upper[q][l])
            zh = model.add_var(None, lb, ub)
            model.add_constraint({zh: 1.0, **{h: -float(w[i, l]) for i, h in enumerate(prev)
                                             if h is not None and w[i, l] != 0}}, EQ, float(b[l]))
            mode = neuron_mode(lb, ub, False)
            if mode == FIXED_ZERO:
                nxt.append(None)
            elif mode == FIXED_IDENTITY:
                nxt.append(zh)
            else:
                M = max(abs(lb), abs(ub)) + 1.0
                z = model.add_var(None, 0.0, ub)
                a = model.add_var(None, 0.0, 1.0, binary=True)
                model.add_constraint({z: 1.0, zh: -1.0}, GE, 0.0)
                model.add_constraint({z: 1.0, zh: -1.0, a: M}, LE, M)
                model.add_constraint({z: 1.0, a: -M}, LE, 0.0)
                nxt.append(z)
        prev = nxt
    return prev


def activation_stats(params: MlpParams, X, formula: str = "fraction") -> NeuronStats:
    """Per-neuron positivity index over the rows of ``X``.

    ``formula="fraction"`` is the share of samples with a positive
    pre-activation. ``"printed"`` evaluates (sum z - sum |z - mean z|) / N,
    which is not confined to [0, 1]; it is kept only for comparison.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise EncodingError("activation statistics need at least one sample")
    pre = preactivations(_check_folded(params), X)
    if formula == "fraction":
        pos = [np.mean(z > 0, axis=0) for z in pre]
    elif formula == "printed":
        pos = [(z.sum(axis=0) - np.abs(z - z.mean(axis=0)).sum(axis=0)) / X.shape[0] for z in pre]
    else:
        raise EncodingError(f"unknown positivity formula {formula!r}")
    return NeuronStats(pos, X.shape[0])


def select_neurons(stats: NeuronStats, threshold: float = 0.5) -> frozenset:
    """Neurons (layer, index) whose positivity index reaches ``threshold``."""
    return frozenset(
        (q, l) for q, layer in enumerate(stats.positivity) for l, e in enumerate(layer) if e >= threshold
    )


def all_neurons(params: MlpParams) -> frozenset:
    return frozenset((q, l) for q, n in enumerate(params.layer_sizes[1:-1]) for l in range(n))


def neuron_mode(lb: float, ub: float, selected: bool) -> str:
    if ub <= 0:
        return FIXED_ZERO
    if lb >= 0:
        return FIXED_IDENTITY
    return TRIANGLE if selected else EXACT


def encode(params: MlpParams, bounds: NeuronBounds, selected, model: MilpModel, x_vars,
           penalty_weight: float = 0.0, tag: str = "") -> EncodedNetwork:
    """Add one copy of the network to ``model`` with inputs ``x_vars``.

    ``selected`` is the set H of (layer, index) neurons to relax. Returns the
    handles, including the output variable.
    """
    params = _check_folded(params)
    x_vars = list(x_vars)
    if len(x_vars) != params.layer_sizes[0]:
        raise EncodingError("number of input variables does not match the network")
    if len(bounds.lower) != params.n_hidden:
        raise EncodingError("bounds do not cover every hidden layer")
    selected = frozenset(selected)
    prev = [(h, 1.0) for h in x_vars]  # (handle, multiplier) for each input of the current layer
    zhat_all, z_all, a_all, modes_all, m_all = [], [], [], [], []
    rows = []
    penalty = {}
    for q in range(params.n_hidden):
        w, b = params.weights[q], params.biases[q]
        lbs, ubs = bounds.lower[q], bounds.upper[q]
        zh_l, z_l, a_l, mode_l, m_l = [], [], [], [], np.full(w.shape[1], np.nan)
        nxt = []
        for l in range(w.shape[1]):
            lb, ub = float(lbs[l]), float(ubs[l])
            if lb > ub:
                raise EncodingError(f"neuron ({q},{l}) has lb > ub")
            mode = neuron_mode(lb, ub, (q, l) in selected)
            if (q, l) in selected and mode == TRIANGLE and not ub > lb:
                raise EncodingError(f"neuron ({q},{l}) selected for relaxation has ub <= lb")
            name = f"{tag}n{q}_{l}"
            zh = model.add_var(f"zhat[{name}]", lb, ub)
            coeffs = {zh: 1.0}
            for i, (h, mult) in enumerate(prev):
                if h is None or w[i, l] == 0:
                    continue
                coeffs[h] = coeffs.get(h, 0.0) - w[i, l] * mult
            rows.append(model.add_constraint(coeffs, EQ, float(b[l]), f"aff_{name}"))
            if mode == FIXED_ZERO:
                z, a = None, None
            elif mode == FIXED_IDENTITY:
                z, a = zh, None
            elif mode == EXACT:
                M = max(abs(lb), abs(ub)) + 1.0
                m_l[l] = M
                z = model.add_var(f"z[{name}]", 0.0, ub)
                a = model.add_var(f"a[{name}]", 0.0, 1.0, binary=True)
                rows.append(model.add_constraint({z: 1.0, zh: -1.0}, GE, 0.0, f"relu_ge_{name}"))
                rows.append(model.add_constraint({z: 1.0, zh: -1.0, a: M}, LE, M, f"relu_on_{name}"))
                rows.append(model.add_constraint({z: 1.0, a: -M}, LE, 0.0, f"relu_off_{name}"))
            else:
                z, a = model.add_var(f"z[{name}]", 0.0, ub), None
                slope = ub / (ub - lb)
                rows.append(model.add_constraint({z: 1.0, zh: -1.0}, GE, 0.0, f"tri_ge_{name}"))
                rows.append(model.add_constraint({z: 1.0, zh: -slope}, LE, -slope * lb, f"tri_up_{name}"))
            if (q, l) in selected and z is not None and penalty_weight:
                penalty[z] = penalty.get(z, 0.0) + penalty_weight
            zh_l.append(zh)
            z_l.append(z)
            a_l.append(a)
            mode_l.append(mode)
            nxt.append((z, 1.0))
        zhat_all.append(zh_l)
        z_all.append(z_l)
        a_all.append(a_l)
        modes_all.append(mode_l)
        m_all.append(m_l)
        prev = nxt
    w, b = params.weights[-1], params.biases[-1]
    out = model.add_var(f"Rhat[{tag}]", bounds.out_lower, bounds.out_upper)
    coeffs = {out: 1.0}
    for i, (h, _) in enumerate(prev):
        if h is not None and w[i, 0] != 0:
            coeffs[h] = coeffs.get(h, 0.0) - w[i, 0]
    rows.append(model.add_constraint(coeffs, EQ, float(b[0]), f"out_{tag}"))
    if penalty:
        model.add_objective(penalty)
    return EncodedNetwork(zhat_all, z_all, a_all, modes_all, m_all, out, selected, tag, rows)


def attach_rocof_constraint(encoded, rocof_lim: float, model: MilpModel) -> int:
    """Require the predicted RoCoF magnitude to stay within ``rocof_lim``."""
    return model.add_constraint({encoded.output: 1.0}, LE, float(rocof_lim), f"rocof_{encoded.tag}")


def dnn_binary_count(params: MlpParams, bounds: NeuronBounds) -> int:
    """Binaries of the exact encoding after presolve-fixed neurons are removed."""
    return sum(1 for lbs, ubs in bounds for lb, ub in zip(lbs, ubs) if lb < 0 < ub)


def selection_report(stats: NeuronStats | None, bounds: NeuronBounds, selected) -> str:
    """Aligned text table: layer, index, positivity, bounds and encoding mode."""
    selected = frozenset(selected)
    lines = [f"{'layer':>5} {'index':>5} {'eps':>7} {'lb':>12} {'ub':>12}  mode"]
    counts = {}
    for q, (lbs, ubs) in enumerate(bounds):
        for l, (lb, ub) in enumerate(zip(lbs, ubs)):
            mode = neuron_mode(lb, ub, (q, l) in selected)
            counts[mode] = counts.get(mode, 0) + 1
            eps = "" if stats is None else f"{stats.positivity[q][l]:.4f}"
            lines.append(f"{q:>5} {l:>5} {eps:>7} {lb:>12.5g} {ub:>12.5g}  {mode}")
    lines.append("")
    lines.append("  ".join(f"{k}: {v}" for k, v in sorted(counts.items())))
    return "\n".join(lines) + "\n"
