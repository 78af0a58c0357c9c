"""Grid cases: buses, branches, generators and hourly profiles.

A case is one JSON document with top-level keys ``meta``, ``buses``,
``branches``, ``generators`` and ``profiles``. Everything is validated at
load time and the returned objects are immutable.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

GENERATOR_BUS = "generator-bus"
LOAD_BUS = "load-bus"


class CaseError(ValueError):
    """Raised when a case file is malformed or violates an invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    nominal_voltage_pu: float = 1.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    susceptance_pu: float
    flow_limit_mw: float


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min_mw: float
    p_max_mw: float
    ramp_mw_per_h: float
    min_up_h: int
    min_down_h: int
    cost_energy_per_mwh: float
    cost_noload_per_h: float
    cost_startup: float
    cost_reserve_per_mwh: float
    inertia_h_s: float
    rated_mva: float
    damping_d: float

    @property
    def kinetic_energy_mws(self) -> float:
        """Stored kinetic energy H * S in MW*s."""
        return self.inertia_h_s * self.rated_mva

    @property
    def synchronous(self) -> bool:
        return self.inertia_h_s > 0


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Profiles:
    """Hourly load and wind, stored as (n_bus, horizon) arrays in bus order.

    ``load_mw`` and ``wind_mw`` in the file are dicts keyed by bus id; buses
    that are absent have zero entries.
    """

    horizon_h: int
    load_mw: np.ndarray
    wind_mw: np.ndarray

    @property
    def total_load(self) -> np.ndarray:
        return self.load_mw.sum(axis=0)

    @property
    def total_wind(self) -> np.ndarray:
        return self.wind_mw.sum(axis=0)


@dataclass(frozen=True)
class GridCase:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    profiles: Profiles
    base_mva: float = 100.0
    f0_hz: float = 60.0
    name: str = "case"
    _bus_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_bus_index", {b.id: i for i, b in enumerate(self.buses)})

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def horizon(self) -> int:
        return self.profiles.horizon_h

    def bus_index(self, bus_id: int) -> int:
        return self._bus_index[bus_id]

    @property
    def gen_bus_index(self) -> np.ndarray:
        """Bus position (not id) of every generator."""
        return np.array([self._bus_index[g.bus] for g in self.generators], dtype=int)

    def gen_array(self, attr: str) -> np.ndarray:
        return np.array([getattr(g, attr) for g in self.generators], dtype=float)

    def with_profiles(self, profiles: Profiles) -> "GridCase":
        return replace(self, profiles=profiles)


# ---------------------------------------------------------------------------
# validation


def _check(cond: bool, msg: str):
    if not cond:
        raise CaseError(msg)


def validate(case: GridCase) -> GridCase:
    ids = [b.id for b in case.buses]
    seen = set()
    for i in ids:
        _check(i not in seen, f"duplicate bus id {i}")
        seen.add(i)
    _check(len(ids) > 0, "case has no buses")
    _check(case.f0_hz > 0, "f0_hz must be positive")
    _check(case.base_mva > 0, "base_mva must be positive")
    for b in case.buses:
        _check(b.kind in (GENERATOR_BUS, LOAD_BUS), f"bus {b.id}: unknown kind {b.kind!r}")
        _check(b.nominal_voltage_pu > 0, f"bus {b.id}: nominal_voltage_pu must be positive")
    for k, br in enumerate(case.branches):
        _check(br.from_bus in seen, f"branch {k} references absent bus {br.from_bus}")
        _check(br.to_bus in seen, f"branch {k} references absent bus {br.to_bus}")
        _check(br.from_bus != br.to_bus, f"branch {k} is a self-loop on bus {br.from_bus}")
        _check(br.susceptance_pu > 0, f"branch {k}: susceptance_pu must be positive")
        _check(br.flow_limit_mw > 0, f"branch {k}: flow_limit_mw must be positive")
    gen_ids = set()
    for g in case.generators:
        _check(g.id not in gen_ids, f"duplicate generator id {g.id}")
        gen_ids.add(g.id)
        _check(g.bus in seen, f"generator {g.id} references absent bus {g.bus}")
        _check(0 <= g.p_min_mw <= g.p_max_mw, f"generator {g.id}: need 0 <= p_min <= p_max")
        costs = (g.cost_energy_per_mwh, g.cost_noload_per_h, g.cost_startup, g.cost_reserve_per_mwh)
        _check(all(c >= 0 for c in costs), f"generator {g.id}: costs must be non-negative")
        _check(g.inertia_h_s >= 0, f"generator {g.id}: inertia_h_s must be non-negative")
        _check(g.rated_mva > 0, f"generator {g.id}: rated_mva must be positive")
        _check(g.damping_d >= 0, f"generator {g.id}: damping_d must be non-negative")
        _check(g.ramp_mw_per_h > 0, f"generator {g.id}: ramp_mw_per_h must be positive")
        _check(g.min_up_h >= 1 and g.min_down_h >= 1, f"generator {g.id}: min up/down must be >= 1")
    p = case.profiles
    _check(p.horizon_h >= 1, "horizon_h must be >= 1")
    for name, arr in (("load_mw", p.load_mw), ("wind_mw", p.wind_mw)):
        _check(arr.shape == (case.n_bus, p.horizon_h), f"{name} must have horizon_h entries per bus")
        _check(bool(np.all(np.isfinite(arr))), f"{name} has non-finite entries")
        _check(bool(np.all(arr >= 0)), f"{name} has negative entries")
    _check(is_connected(case), "network graph is disconnected")
    return case


def is_connected(case: GridCase) -> bool:
    """Breadth-first search from the first bus."""
    adj = {b.id: [] for b in case.buses}
    for br in case.branches:
        adj[br.from_bus].append(br.to_bus)
        adj[br.to_bus].append(br.from_bus)
    start = case.buses[0].id
    seen = {start}
    queue = deque([start])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(adj)


# ---------------------------------------------------------------------------
# (de)serialization


def _profile_matrix(raw: dict, bus_ids: list[int], horizon: int, name: str) -> np.ndarray:
    pos = {b: i for i, b in enumerate(bus_ids)}
    out = np.zeros((len(bus_ids), horizon))
    for key, series in raw.items():
        try:
            bid = int(key)
        except ValueError:
            raise CaseError(f"{name}: bus key {key!r} is not an integer") from None
        if bid not in pos:
            raise CaseError(f"{name} references absent bus {bid}")
        if len(series) != horizon:
            raise CaseError(f"{name} for bus {bid} has {len(series)} entries, expected {horizon}")
        out[pos[bid]] = series
    return out


def case_from_dict(doc: dict) -> GridCase:
    try:
        meta = doc["meta"]
        buses = tuple(
            Bus(int(b["id"]), b["kind"], float(b.get("nominal_voltage_pu", 1.0))) for b in doc["buses"]
        )
        branches = tuple(
            Branch(int(b["from_bus"]), int(b["to_bus"]), float(b["susceptance_pu"]), float(b["flow_limit_mw"]))
            for b in doc["branches"]
        )
        gens = []
        for g in doc["generators"]:
            gens.append(
                Generator(
                    id=int(g["id"]),
                    bus=int(g["bus"]),
                    p_min_mw=float(g["p_min_mw"]),
                    p_max_mw=float(g["p_max_mw"]),
                    ramp_mw_per_h=float(g["ramp_mw_per_h"]),
                    min_up_h=int(g["min_up_h"]),
                    min_down_h=int(g["min_down_h"]),
                    cost_energy_per_mwh=float(g["cost_energy_per_mwh"]),
                    cost_noload_per_h=float(g["cost_noload_per_h"]),
                    cost_startup=float(g["cost_startup"]),
                    cost_reserve_per_mwh=float(g["cost_reserve_per_mwh"]),
                    inertia_h_s=float(g["inertia_h_s"]),
                    rated_mva=float(g["rated_mva"]),
                    damping_d=float(g.get("damping_d", 0.0)),
                )
            )
        prof = doc["profiles"]
        horizon = int(prof["horizon_h"])
        bus_ids = [b.id for b in buses]
    except (KeyError, TypeError) as exc:
        raise CaseError(f"malformed case document: missing or invalid field {exc}") from exc
    if len(set(bus_ids)) != len(bus_ids):
        dup = next(b for b in bus_ids if bus_ids.count(b) > 1)
        raise CaseError(f"duplicate bus id {dup}")
    profiles = Profiles(
        horizon_h=horizon,
        load_mw=_frozen(_profile_matrix(prof.get("load_mw", {}), bus_ids, horizon, "load_mw")),
        wind_mw=_frozen(_profile_matrix(prof.get("wind_mw", {}), bus_ids, horizon, "wind_mw")),
    )
    case = GridCase(
        buses=buses,
        branches=branches,
        generators=tuple(gens),
        profiles=profiles,
        base_mva=float(meta.get("base_mva", 100.0)),
        f0_hz=float(meta.get("f0_hz", 60.0)),
        name=str(meta.get("name", "case")),
    )
    return validate(case)


def case_to_dict(case: GridCase) -> dict:
    def series(mat):
        return {
            str(b.id): [float(v) for v in mat[i]] for i, b in enumerate(case.buses) if np.any(mat[i] != 0)
        }

    return {
        "meta": {"name": case.name, "base_mva": case.base_mva, "f0_hz": case.f0_hz},
        "buses": [
            {"id": b.id, "kind": b.kind, "nominal_voltage_pu": b.nominal_voltage_pu} for b in case.buses
        ],
        "branches": [
            {
                "from_bus": br.from_bus,
                "to_bus": br.to_bus,
                "susceptance_pu": br.susceptance_pu,
                "flow_limit_mw": br.flow_limit_mw,
            }
            for br in case.branches
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "p_min_mw": g.p_min_mw,
                "p_max_mw": g.p_max_mw,
                "ramp_mw_per_h": g.ramp_mw_per_h,
                "min_up_h": g.min_up_h,
                "min_down_h": g.min_down_h,
                "cost_energy_per_mwh": g.cost_energy_per_mwh,
                "cost_noload_per_h": g.cost_noload_per_h,
                "cost_startup": g.cost_startup,
                "cost_reserve_per_mwh": g.cost_reserve_per_mwh,
                "inertia_h_s": g.inertia_h_s,
                "rated_mva": g.rated_mva,
                "damping_d": g.damping_d,
            }
            for g in case.generators
        ],
        "profiles": {
            "horizon_h": case.profiles.horizon_h,
            "load_mw": series(case.profiles.load_mw),
            "wind_mw": series(case.profiles.wind_mw),
        },
    }


def load_case(path) -> GridCase:
    """Load and validate a case file.

    ``path`` may also be the bare name of a shipped fixture (``case6`` or
    ``case6.json``) when no such file exists on disk.
    """
    p = Path(path)
    if not p.exists():
        name = p.name if p.suffix == ".json" else p.name + ".json"
        shipped = resources.files("rcuc.data").joinpath(name)
        if not shipped.is_file():
            raise FileNotFoundError(f"no case file at {path}")
        text = shipped.read_text()
    else:
        text = p.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"cannot parse case file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise CaseError(f"case file {path} must contain a JSON object")
    return case_from_dict(doc)


def save_case(case: GridCase, path) -> None:
    Path(path).write_text(json.dumps(case_to_dict(case), indent=1))


def perturb_profiles(case: GridCase, deviation: float, seed: int) -> GridCase:
    """Scale each load and wind entry by an independent U[1-dev, 1+dev] factor."""
    if not 0 <= deviation < 1:
        raise ValueError("deviation must lie in [0, 1)")
    if deviation == 0:
        return case
    rng = np.random.default_rng(seed)
    p = case.profiles
    f_load = rng.uniform(1 - deviation, 1 + deviation, size=p.load_mw.shape)
    f_wind = rng.uniform(1 - deviation, 1 + deviation, size=p.wind_mw.shape)
    return case.with_profiles(
        Profiles(p.horizon_h, _frozen(p.load_mw * f_load), _frozen(p.wind_mw * f_wind))
    )


def scale_profiles(case: GridCase, load_factor: np.ndarray, wind_factor: np.ndarray) -> GridCase:
    """Multiply profiles by explicit factor arrays (broadcast against (n_bus, T))."""
    p = case.profiles
    return case.with_profiles(
        Profiles(p.horizon_h, _frozen(p.load_mw * load_factor), _frozen(p.wind_mw * wind_factor))
    )


def susceptance_laplacian(case: GridCase) -> np.ndarray:
    """Full bus Laplacian with l_ij = -b_ij V_i V_j and zero row sums (per unit)."""
    n = case.n_bus
    L = np.zeros((n, n))
    v = np.array([b.nominal_voltage_pu for b in case.buses])
    for br in case.branches:
        i, j = case.bus_index(br.from_bus), case.bus_index(br.to_bus)
        w = br.susceptance_pu * v[i] * v[j]
        L[i, j] -= w
        L[j, i] -= w
        L[i, i] += w
        L[j, j] += w
    return L


def injection_shift_factors(case: GridCase, slack: int = 0) -> np.ndarray:
    """DC branch-flow sensitivities (n_branch, n_bus) w.r.t. nodal injections.

    Uses plain branch susceptances (flat voltages) and the bus at position
    ``slack`` as the reference; flows are positive from ``from_bus`` to
    ``to_bus``.
    """
    n = case.n_bus
    nl = len(case.branches)
    B = np.zeros((n, n))
    Bf = np.zeros((nl, n))
    for k, br in enumerate(case.branches):
        i, j = case.bus_index(br.from_bus), case.bus_index(br.to_bus)
        b = br.susceptance_pu
        B[i, i] += b
        B[j, j] += b
        B[i, j] -= b
        B[j, i] -= b
        Bf[k, i] = b
        Bf[k, j] = -b
    keep = [i for i in range(n) if i != slack]
    X = np.zeros((n, n))
    X[np.ix_(keep, keep)] = np.linalg.inv(B[np.ix_(keep, keep)])
    return Bf @ X
