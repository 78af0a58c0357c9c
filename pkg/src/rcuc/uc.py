"""Unit-commitment MILPs: T-SCUC, ERC-SCUC and the simulation-guided LRC loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics
from .grid import GridCase, injection_shift_factors
from .milp import EQ, GE, LE, MilpModel, MilpSolution, solve_milp

log = logging.getLogger(__name__)

SHED_PENALTY = 10_000.0
TIE_EPSILON = 1e-7
LRC_STEP = 0.05


class UcError(ValueError):
    pass


@dataclass
class UcOptions:
    shed_penalty: float = SHED_PENALTY
    tie_epsilon: float = TIE_EPSILON
    initial_status: np.ndarray | None = None  # per generator; default all off
    network: bool = True


@dataclass
class UcModel:
    """A UC MILP together with the variable handles needed to read it back."""

    case: GridCase
    model: MilpModel
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    p: np.ndarray
    r: np.ndarray
    eta: np.ndarray
    eps: np.ndarray
    p_largest: np.ndarray
    shed: np.ndarray
    spill: dict
    variant: str = "T-SCUC"
    rocof_lim: float = math.inf
    extras: dict = field(default_factory=dict)

    def feature_vars(self, t: int) -> list[int]:
        """MILP variables forming the predictor input at period ``t``: [u, eps, P]."""
        return list(self.u[:, t]) + list(self.eps[:, t]) + list(self.p[:, t])


@dataclass
class UcSchedule:
    commitment: np.ndarray  # (G, T) ints
    dispatch: np.ndarray
    reserve: np.ndarray
    shed: np.ndarray
    spill: np.ndarray  # (n_bus, T)
    cost: dict
    status: str
    gap: float
    solve_time_s: float = 0.0
    nodes: int = 0
    variant: str = ""
    passed: np.ndarray | None = None  # LRC per-period flags

    @property
    def total_cost(self) -> float:
        return float(self.cost["total"])

    @property
    def committed_count(self) -> np.ndarray:
        return self.commitment.sum(axis=0)

    def to_dict(self) -> dict:
        d = {
            "variant": self.variant,
            "status": self.status,
            "gap": self.gap,
            "cost": self.cost,
            "commitment": self.commitment.T.astype(int).tolist(),
            "dispatch_mw": np.round(self.dispatch.T, 6).tolist(),
            "reserve_mw": np.round(self.reserve.T, 6).tolist(),
            "shed_mw": np.round(self.shed, 6).tolist(),
            "committed_count": self.committed_count.astype(int).tolist(),
        }
        if self.passed is not None:
            d["passed"] = [bool(b) for b in self.passed]
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, d: dict) -> "UcSchedule":
        T = len(d["commitment"])
        return cls(
            commitment=np.array(d["commitment"], dtype=int).T,
            dispatch=np.array(d["dispatch_mw"], dtype=float).T,
            reserve=np.array(d["reserve_mw"], dtype=float).T,
            shed=np.array(d["shed_mw"], dtype=float),
            spill=np.zeros((0, T)),
            cost=d["cost"],
            status=d["status"],
            gap=d["gap"],
            variant=d.get("variant", ""),
            passed=np.array(d["passed"]) if "passed" in d else None,
        )

    @classmethod
    def load(cls, path) -> "UcSchedule":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# model building


def big_m_largest(case: GridCase) -> float:
    return float(max(g.p_max_mw for g in case.generators))


def encode_largest_unit(model: MilpModel, p: np.ndarray, eta: np.ndarray, eps: np.ndarray,
                        p_largest: np.ndarray, big_m: float) -> None:
    """Largest-output indicator and disturbance vector for every period.

    ``p``, ``eta``, ``eps`` are (G, T) handle arrays and ``p_largest`` is (T,).
    """
    G, T = p.shape
    M = big_m
    for t in range(T):
        model.add_constraint({eta[g, t]: 1.0 for g in range(G)}, EQ, 1.0, f"onehot_{t}")
        pw = p_largest[t]
        for g in range(G):
            model.add_constraint({pw: 1.0, p[g, t]: -1.0}, GE, 0.0, f"pw_lo_{g}_{t}")
            model.add_constraint({pw: 1.0, p[g, t]: -1.0, eta[g, t]: M}, LE, M, f"pw_hi_{g}_{t}")
            model.add_constraint({eps[g, t]: 1.0, eta[g, t]: -M}, LE, 0.0, f"eps_eta_{g}_{t}")
            model.add_constraint({eps[g, t]: 1.0, pw: -1.0}, LE, 0.0, f"eps_pw_{g}_{t}")
            model.add_constraint({eps[g, t]: 1.0, pw: -1.0, eta[g, t]: -M}, GE, -M, f"eps_lo_{g}_{t}")


def build_tscuc(case: GridCase, options: UcOptions | None = None) -> UcModel:
    opts = options or UcOptions()
    T = case.horizon
    if T < 1:
        raise UcError("horizon must be at least one period")
    G = case.n_gen
    gens = case.generators
    M = big_m_largest(case)
    load = case.profiles.load_mw
    wind = case.profiles.wind_mw
    model = MilpModel(f"{case.name}-tscuc")

    def grid(prefix, lo, hi, binary=False):
        out = np.empty((G, T), dtype=int)
        for g in range(G):
            for t in range(T):
                out[g, t] = model.add_var(f"{prefix}[{gens[g].id},{t}]", lo(g), hi(g), binary)
        return out

    u = grid("u", lambda g: 0.0, lambda g: 1.0, True)
    v = grid("v", lambda g: 0.0, lambda g: 1.0, True)
    w = grid("w", lambda g: 0.0, lambda g: 1.0, True)
    p = grid("P", lambda g: 0.0, lambda g: gens[g].p_max_mw)
    r = grid("r", lambda g: 0.0, lambda g: gens[g].p_max_mw)
    eta = grid("eta", lambda g: 0.0, lambda g: 1.0, True)
    eps = grid("eps", lambda g: 0.0, lambda g: M)
    pw = np.array([model.add_var(f"Pw[{t}]", 0.0, M) for t in range(T)])
    total_load = load.sum(axis=0)
    shed = np.array([model.add_var(f"shed[{t}]", 0.0, float(total_load[t])) for t in range(T)])
    spill = {}
    for b in range(case.n_bus):
        if np.any(wind[b] > 0):
            spill[b] = np.array(
                [model.add_var(f"spill[{case.buses[b].id},{t}]", 0.0, float(wind[b, t])) for t in range(T)]
            )

    u0 = np.zeros(G) if opts.initial_status is None else np.asarray(opts.initial_status, dtype=float)

    for t in range(T):
        coeffs = {p[g, t]: 1.0 for g in range(G)}
        for b, s in spill.items():
            coeffs[s[t]] = -1.0
        coeffs[shed[t]] = 1.0
        model.add_constraint(coeffs, EQ, float(total_load[t] - wind[:, t].sum()), f"balance_{t}")
        model.add_constraint({r[g, t]: 1.0 for g in range(G)} | {pw[t]: -1.0}, GE, 0.0, f"reserve_{t}")

    for g, gen in enumerate(gens):
        su_ramp = max(gen.ramp_mw_per_h, gen.p_min_mw)
        for t in range(T):
            model.add_constraint({p[g, t]: 1.0, u[g, t]: -gen.p_min_mw}, GE, 0.0, f"pmin_{g}_{t}")
            model.add_constraint({p[g, t]: 1.0, r[g, t]: 1.0, u[g, t]: -gen.p_max_mw}, LE, 0.0, f"head_{g}_{t}")
            # commitment logic
            if t == 0:
                model.add_constraint({v[g, t]: 1.0, w[g, t]: -1.0, u[g, t]: -1.0}, EQ, -u0[g], f"logic_{g}_{t}")
                model.add_constraint({p[g, t]: 1.0, v[g, t]: -su_ramp}, LE,
                                     gen.ramp_mw_per_h * u0[g] + (gen.p_min_mw * u0[g]), f"rampup_{g}_{t}")
            else:
                model.add_constraint({v[g, t]: 1.0, w[g, t]: -1.0, u[g, t]: -1.0, u[g, t - 1]: 1.0}, EQ, 0.0,
                                     f"logic_{g}_{t}")
                model.add_constraint(
                    {p[g, t]: 1.0, p[g, t - 1]: -1.0, u[g, t - 1]: -gen.ramp_mw_per_h, v[g, t]: -su_ramp},
                    LE, 0.0, f"rampup_{g}_{t}")
                model.add_constraint(
                    {p[g, t - 1]: 1.0, p[g, t]: -1.0, u[g, t]: -gen.ramp_mw_per_h, w[g, t]: -su_ramp},
                    LE, 0.0, f"rampdn_{g}_{t}")
            model.add_constraint({v[g, t]: 1.0, w[g, t]: 1.0}, LE, 1.0, f"vw_{g}_{t}")
            up = {v[g, k]: 1.0 for k in range(max(0, t - gen.min_up_h + 1), t + 1)}
            model.add_constraint(up | {u[g, t]: -1.0}, LE, 0.0, f"minup_{g}_{t}")
            dn = {w[g, k]: 1.0 for k in range(max(0, t - gen.min_down_h + 1), t + 1)}
            model.add_constraint(dn | {u[g, t]: 1.0}, LE, 1.0, f"mindn_{g}_{t}")

    if opts.network and case.branches:
        _add_line_limits(case, model, p, spill, shed)

    encode_largest_unit(model, p, eta, eps, pw, M)

    obj = {}
    for g, gen in enumerate(gens):
        for t in range(T):
            obj[p[g, t]] = gen.cost_energy_per_mwh
            obj[u[g, t]] = gen.cost_noload_per_h
            obj[v[g, t]] = gen.cost_startup
            obj[r[g, t]] = gen.cost_reserve_per_mwh
            obj[eta[g, t]] = opts.tie_epsilon * g
    for t in range(T):
        obj[shed[t]] = opts.shed_penalty
    model.set_objective(obj)
    return UcModel(case, model, u, v, w, p, r, eta, eps, pw, shed, spill)


def _add_line_limits(case: GridCase, model: MilpModel, p, spill, shed) -> None:
    isf = injection_shift_factors(case)
    T = case.horizon
    load = case.profiles.load_mw
    wind = case.profiles.wind_mw
    gbus = case.gen_bus_index
    pmax = case.gen_array("p_max_mw")
    total = load.sum(axis=0)
    for t in range(T):
        share = load[:, t] / total[t] if total[t] > 0 else np.zeros(case.n_bus)
        const = wind[:, t] - load[:, t]
        for k, br in enumerate(case.branches):
            row = isf[k]
            # skip rows that cannot bind under any dispatch
            reach = np.abs(row @ const) + np.abs(row[gbus]) @ pmax + np.abs(row) @ wind[:, t] + np.abs(row @ share) * total[t]
            if reach <= br.flow_limit_mw:
                continue
            coeffs = {p[g, t]: row[gbus[g]] for g in range(case.n_gen)}
            for b, s in spill.items():
                coeffs[s[t]] = -row[b]
            coeffs[shed[t]] = float(row @ share)
            base = float(row @ const)
            model.add_constraint(coeffs, LE, br.flow_limit_mw - base, f"flow_hi_{k}_{t}")
            model.add_constraint(coeffs, GE, -br.flow_limit_mw - base, f"flow_lo_{k}_{t}")


def add_inertia_floor(ucm: UcModel, rocof_lim: float, hours=None) -> None:
    """Uniform-frequency RoCoF bound on the post-contingency inertia of the largest unit."""
    case = ucm.case
    if not any(g.synchronous for g in case.generators):
        raise UcError("case has no synchronous inertia")
    if rocof_lim <= 0:
        raise UcError("rocof_lim must be positive")
    if math.isinf(rocof_lim):
        return
    f0 = case.f0_hz
    hs = case.gen_array("inertia_h_s") * case.gen_array("rated_mva")
    hours = range(case.horizon) if hours is None else hours
    # f0 * P_w <= 2 * lim * (online inertia - inertia of the unit flagged by eta);
    # with eta one-hot on the largest unit this equals the per-unit big-M rows
    # f0 P_g* <= 2 lim sum_{g != g*} HS_g u_g + M (1 - eta_g*) but has no big-M.
    for t in hours:
        coeffs = {ucm.p_largest[t]: f0}
        for g in range(case.n_gen):
            if hs[g] > 0:
                coeffs[ucm.u[g, t]] = -2.0 * rocof_lim * hs[g]
                coeffs[ucm.eta[g, t]] = 2.0 * rocof_lim * hs[g]
        ucm.model.add_constraint(coeffs, LE, 0.0, f"erc_{t}")


def build_ercuc(case: GridCase, rocof_lim: float, options: UcOptions | None = None) -> UcModel:
    ucm = build_tscuc(case, options)
    add_inertia_floor(ucm, rocof_lim)
    ucm.variant = "ERC-SCUC"
    ucm.rocof_lim = rocof_lim
    ucm.model.name = f"{case.name}-ercuc"
    return ucm


# ---------------------------------------------------------------------------
# solving and schedules


def extract_schedule(ucm: UcModel, sol: MilpSolution) -> UcSchedule:
    case = ucm.case
    if sol.values is None:
        raise UcError(f"no feasible schedule ({sol.status})")
    x = sol.values
    u = np.round(x[ucm.u]).astype(int)
    pd = np.where(u > 0, x[ucm.p], 0.0)
    pd = np.maximum(pd, 0.0)
    res = np.maximum(x[ucm.r], 0.0)
    shed = np.maximum(x[ucm.shed], 0.0)
    spill = np.zeros((case.n_bus, case.horizon))
    for b, s in ucm.spill.items():
        spill[b] = x[s]
    v = np.round(x[ucm.v])
    c = case.gen_array
    cost = {
        "fuel": float((c("cost_energy_per_mwh")[:, None] * pd).sum()),
        "noload": float((c("cost_noload_per_h")[:, None] * u).sum()),
        "startup": float((c("cost_startup")[:, None] * v).sum()),
        "reserve": float((c("cost_reserve_per_mwh")[:, None] * res).sum()),
        "shed": float(SHED_PENALTY * shed.sum()),
    }
    cost["total"] = sum(cost.values())
    cost["objective"] = float(sol.objective_value)
    return UcSchedule(u, pd, res, shed, spill, cost, sol.status, sol.relative_gap, sol.time_s, sol.nodes,
                      ucm.variant)


def solve_uc(ucm: UcModel, gap: float = 1e-3, time_limit_s: float = 600.0, lp_backend: str = "auto",
             backend: str = "auto", start: dict | None = None) -> UcSchedule:
    sol = solve_milp(ucm.model, gap=gap, time_limit_s=time_limit_s, lp_backend=lp_backend, backend=backend,
                     start=start)
    sched = extract_schedule(ucm, sol)
    sched.variant = ucm.variant
    return sched


def commitment_start(ucm: UcModel, sched: UcSchedule, initial_status: np.ndarray | None = None) -> dict:
    """Partial MILP start fixing u, v, w and eta of ``ucm`` to those of ``sched``."""
    case = ucm.case
    u = sched.commitment.astype(float)
    u0 = np.zeros(case.n_gen) if initial_status is None else np.asarray(initial_status, dtype=float)
    prev = np.concatenate([u0[:, None], u[:, :-1]], axis=1)
    v = np.maximum(u - prev, 0.0)
    w = np.maximum(prev - u, 0.0)
    start = {}
    for handles, vals in ((ucm.u, u), (ucm.v, v), (ucm.w, w)):
        start.update(zip(np.ravel(handles).tolist(), np.ravel(vals).tolist()))
    for t in range(case.horizon):
        top = dynamics.largest_unit(sched.dispatch[:, t])
        for g in range(case.n_gen):
            start[int(ucm.eta[g, t])] = float(g == top)
    return start


def online_inertia(case: GridCase, commitment: np.ndarray) -> np.ndarray:
    hs = case.gen_array("inertia_h_s") * case.gen_array("rated_mva")
    return hs @ commitment


def label_schedule(case: GridCase, sched: UcSchedule, hours=None,
                   config: dynamics.LabelConfig = dynamics.LabelConfig()) -> np.ndarray:
    """Simulated max locational RoCoF per period (nan when nothing is online)."""
    hours = range(case.horizon) if hours is None else hours
    out = np.full(case.horizon, np.nan)
    for t in hours:
        u, p = sched.commitment[:, t], sched.dispatch[:, t]
        if not np.any(u) or not np.any(p > 0):
            continue
        out[t] = dynamics.label_sample(case, u, p, config)
    return out


def build_lrcuc(case: GridCase, rocof_lim: float, max_rounds: int = 10, gap: float = 1e-3,
                time_limit_s: float = 600.0, label_config: dynamics.LabelConfig = dynamics.LabelConfig(),
                options: UcOptions | None = None, hours=None, lp_backend: str = "auto") -> UcSchedule:
    """Simulation-guided locational RoCoF loop on top of ERC-SCUC.

    Each round solves the model, simulates the loss of the largest unit at
    every period and adds ``sum(H S u_t) >= (1 + 5%) * current`` wherever the
    simulated RoCoF exceeds the limit.
    """
    if max_rounds < 1:
        raise UcError("max_rounds must be >= 1")
    ucm = build_ercuc(case, rocof_lim, options)
    ucm.variant = "LRC-SCUC"
    ucm.model.name = f"{case.name}-lrcuc"
    hours = list(range(case.horizon)) if hours is None else list(hours)
    hs = case.gen_array("inertia_h_s") * case.gen_array("rated_mva")
    total_hs = float(hs.sum())
    sched = None
    passed = np.ones(case.horizon, dtype=bool)
    for rnd in range(max_rounds):
        sched = solve_uc(ucm, gap, time_limit_s, lp_backend)
        if math.isinf(rocof_lim):
            break
        labels = label_schedule(case, sched, hours, label_config)
        passed = np.ones(case.horizon, dtype=bool)
        cuts = 0
        for t in hours:
            if np.isnan(labels[t]) or labels[t] <= rocof_lim:
                continue
            passed[t] = False
            current = float(hs @ sched.commitment[:, t])
            floor = min((1.0 + LRC_STEP) * current, total_hs)
            if floor <= current + 1e-9:
                continue
            ucm.model.add_constraint({ucm.u[g, t]: hs[g] for g in range(case.n_gen) if hs[g] > 0}, GE, floor,
                                     f"lrc_{rnd}_{t}")
            cuts += 1
        log.info("LRC round %d: %d failing periods, %d cuts", rnd + 1, int((~passed).sum()), cuts)
        if cuts == 0:
            break
    sched.passed = passed
    sched.variant = "LRC-SCUC"
    return sched


# ---------------------------------------------------------------------------
# independent audit


def audit_schedule(case: GridCase, sched: UcSchedule, tol: float = 1e-4,
                   initial_status: np.ndarray | None = None, network: bool = True) -> list[str]:
    """Re-check a schedule against the operating rules without using the solver."""
    problems = []
    u = sched.commitment
    p = sched.dispatch
    r = sched.reserve
    G, T = u.shape
    load = case.profiles.load_mw
    wind = case.profiles.wind_mw
    spill = sched.spill if sched.spill.shape == wind.shape else np.zeros_like(wind)
    u_prev = np.zeros(G) if initial_status is None else np.asarray(initial_status)
    for t in range(T):
        bal = p[:, t].sum() + wind[:, t].sum() - spill[:, t].sum() + sched.shed[t] - load[:, t].sum()
        if abs(bal) > tol:
            problems.append(f"period {t}: power balance off by {bal:.6f} MW")
        if r[:, t].sum() + tol < p[:, t].max(initial=0.0):
            problems.append(f"period {t}: reserve below largest online output")
    for g, gen in enumerate(case.generators):
        su = max(gen.ramp_mw_per_h, gen.p_min_mw)
        hist = np.concatenate([[u_prev[g]], u[g]])
        for t in range(T):
            if u[g, t]:
                if p[g, t] < gen.p_min_mw - tol or p[g, t] + r[g, t] > gen.p_max_mw + tol:
                    problems.append(f"gen {gen.id} period {t}: output/reserve outside limits")
            elif p[g, t] > tol or r[g, t] > tol:
                problems.append(f"gen {gen.id} period {t}: offline unit carries output or reserve")
            prev = p[g, t - 1] if t > 0 else 0.0
            started = hist[t + 1] > hist[t]
            stopped = hist[t + 1] < hist[t]
            up_lim = gen.ramp_mw_per_h * hist[t] + (su if started else 0.0) + (gen.p_min_mw * u_prev[g] if t == 0 else 0)
            if p[g, t] - prev > up_lim + tol:
                problems.append(f"gen {gen.id} period {t}: ramp-up violated")
            dn_lim = gen.ramp_mw_per_h * hist[t + 1] + (su if stopped else 0.0)
            if t > 0 and prev - p[g, t] > dn_lim + tol:
                problems.append(f"gen {gen.id} period {t}: ramp-down violated")
        # minimum up / down times from run lengths
        starts = [t for t in range(T) if hist[t + 1] > hist[t]]
        stops = [t for t in range(T) if hist[t + 1] < hist[t]]
        for s in starts:
            end = min(T, s + gen.min_up_h)
            if not np.all(u[g, s:end]):
                problems.append(f"gen {gen.id}: minimum up time violated after start at {s}")
        for s in stops:
            end = min(T, s + gen.min_down_h)
            if np.any(u[g, s:end]):
                problems.append(f"gen {gen.id}: minimum down time violated after stop at {s}")
    if network and case.branches:
        isf = injection_shift_factors(case)
        gbus = case.gen_bus_index
        total = load.sum(axis=0)
        for t in range(T):
            inj = wind[:, t] - spill[:, t] - load[:, t]
            if total[t] > 0:
                inj = inj + sched.shed[t] * load[:, t] / total[t]
            np.add.at(inj, gbus, p[:, t])
            flows = isf @ inj
            for k, br in enumerate(case.branches):
                if abs(flows[k]) > br.flow_limit_mw + tol:
                    problems.append(f"branch {k} period {t}: flow {flows[k]:.2f} exceeds {br.flow_limit_mw}")
    return problems
