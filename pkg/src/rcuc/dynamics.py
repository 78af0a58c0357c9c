"""Reduced-order frequency dynamics used to label operating points.

Angles follow ``M theta'' + D theta' = P - L theta`` on the Kron-reduced
network of buses that carry synchronous inertia. Power is in per unit of the
case base, angles in rad, and the inertia coefficient of a bus is

    m_i = 2 * sum(H * S) / (2 * pi * f0 * base_mva)

so that a lone machine losing ``dP`` MW sees ``df/dt = -dP * f0 / (2 H S)``.
Damping uses the same scaling: ``d_i = sum(D * S) / (2 * pi * f0 * base_mva)``.

The equations are linear, so simulations integrate the deviation from the
pre-event equilibrium; absolute angles are added back for export.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import GridCase, susceptance_laplacian

DEFAULT_STEP_S = 1e-3
DEFAULT_HORIZON_S = 5.0
DEFAULT_WINDOW_S = 0.5

_ZERO_INERTIA = 1e-12


class DynamicsError(RuntimeError):
    pass


@dataclass(frozen=True)
class GovernorConfig:
    droop: float = 0.05
    time_constant_s: float = 8.0


@dataclass(frozen=True)
class ReducedNetwork:
    """Kron-reduced network over retained buses.

    ``fold`` maps a full per-bus injection vector (per unit) onto the retained
    buses, i.e. ``P_red = fold @ P_full``.
    """

    gen_buses: tuple
    laplacian: np.ndarray
    inertia: np.ndarray
    damping: np.ndarray
    injection: np.ndarray
    fold: np.ndarray
    all_buses: tuple
    rating_mva: np.ndarray
    base_mva: float = 100.0
    f0_hz: float = 60.0

    @property
    def n(self) -> int:
        return len(self.gen_buses)

    @property
    def gamma(self) -> float:
        """Damping-to-inertia ratio when it is uniform across buses."""
        m = self.inertia
        ratio = np.where(m > _ZERO_INERTIA, self.damping / np.where(m > 0, m, 1.0), np.nan)
        if np.nanmax(ratio) - np.nanmin(ratio) > 1e-9 * max(1.0, abs(np.nanmax(ratio))):
            raise DynamicsError("damping-to-inertia ratio is not homogeneous")
        return float(np.nanmean(ratio))

    def index(self, bus_id: int) -> int:
        return self.gen_buses.index(bus_id)


@dataclass(frozen=True)
class ModalDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    bus_ids: tuple
    base_mva: float = 100.0
    f0_hz: float = 60.0


@dataclass(frozen=True)
class ContingencyEvent:
    """Loss of one unit.

    ``lost_inertia``, ``lost_damping`` are in the same per-unit scale as
    :class:`ReducedNetwork` and are removed from ``bus_b`` at the event.
    """

    lost_generator: int
    delta_p_mw: float
    bus_b: int
    t_event_s: float = 0.0
    lost_inertia: float = 0.0
    lost_damping: float = 0.0
    lost_rating_mva: float = 0.0

    def __post_init__(self):
        if self.delta_p_mw < 0:
            raise ValueError("delta_p_mw must be non-negative")


@dataclass(frozen=True)
class TrajectorySet:
    time_s: np.ndarray
    theta_rad: np.ndarray  # (n_time, n_bus)
    freq_hz: np.ndarray  # (n_time, n_bus)
    bus_ids: tuple
    t_event_s: float = 0.0
    f0_hz: float = 60.0

    @property
    def step_s(self) -> float:
        return float(self.time_s[1] - self.time_s[0])

    def to_csv(self, path) -> None:
        header = "time_s," + ",".join(f"f_bus{b}" for b in self.bus_ids)
        data = np.column_stack([self.time_s, self.freq_hz])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.10g")


@dataclass(frozen=True)
class RocofMeasurement:
    per_bus: np.ndarray
    max: float
    bus_ids: tuple = field(default=())


# ---------------------------------------------------------------------------
# Kron reduction


def schur_reduce(L: np.ndarray, keep) -> tuple[np.ndarray, np.ndarray]:
    """Schur complement of ``L`` onto ``keep``.

    Returns ``(L_red, fold)`` where ``fold`` maps injections on all nodes to
    equivalent injections on the kept nodes.
    """
    n = L.shape[0]
    keep = list(keep)
    drop = [i for i in range(n) if i not in set(keep)]
    fold = np.zeros((len(keep), n))
    fold[np.arange(len(keep)), keep] = 1.0
    if not drop:
        return L[np.ix_(keep, keep)].copy(), fold
    Lkk = L[np.ix_(keep, keep)]
    Lkd = L[np.ix_(keep, drop)]
    Ldd = L[np.ix_(drop, drop)]
    if np.linalg.matrix_rank(Ldd) < len(drop):
        raise DynamicsError("elimination block is singular: some eliminated buses form an island")
    X = np.linalg.solve(Ldd, Lkd.T).T  # Lkd Ldd^-1
    L_red = Lkk - X @ Lkd.T
    L_red = 0.5 * (L_red + L_red.T)
    fold[:, drop] = -X
    return L_red, fold


def bus_machine_data(case: GridCase, commitment=None):
    """Per-bus online (H*S, D*S, MVA) sums for synchronous units."""
    u = np.ones(case.n_gen) if commitment is None else np.asarray(commitment, dtype=float)
    hs = np.zeros(case.n_bus)
    ds = np.zeros(case.n_bus)
    mva = np.zeros(case.n_bus)
    for g, gen in enumerate(case.generators):
        if u[g] > 0.5 and gen.synchronous:
            b = case.bus_index(gen.bus)
            hs[b] += gen.kinetic_energy_mws
            ds[b] += gen.damping_d * gen.rated_mva
            mva[b] += gen.rated_mva
    return hs, ds, mva


def kron_reduce(case: GridCase, injection_mw=None, keep=None, commitment=None) -> ReducedNetwork:
    """Eliminate passive buses from the full susceptance Laplacian.

    ``keep`` lists retained bus ids; by default every bus hosting an online
    synchronous unit is retained. Inertia and damping come from the units
    online under ``commitment`` (all units when omitted).
    """
    hs, ds, mva = bus_machine_data(case, commitment)
    if keep is None:
        keep_idx = [i for i in range(case.n_bus) if hs[i] > 0]
    else:
        keep_idx = [case.bus_index(b) for b in keep]
    if not keep_idx:
        raise DynamicsError("no generator buses to retain")
    L = susceptance_laplacian(case)
    L_red, fold = schur_reduce(L, keep_idx)
    inj = np.zeros(case.n_bus) if injection_mw is None else np.asarray(injection_mw, dtype=float)
    scale = 2.0 * math.pi * case.f0_hz * case.base_mva
    return ReducedNetwork(
        gen_buses=tuple(case.buses[i].id for i in keep_idx),
        laplacian=L_red,
        inertia=2.0 * hs[keep_idx] / scale,
        damping=ds[keep_idx] / scale,
        injection=fold @ (inj / case.base_mva),
        fold=fold,
        all_buses=tuple(b.id for b in case.buses),
        rating_mva=mva[keep_idx],
        base_mva=case.base_mva,
        f0_hz=case.f0_hz,
    )


def decompose(reduced: ReducedNetwork, tol: float = 1e-8) -> ModalDecomposition:
    L = reduced.laplacian
    if not np.allclose(L, L.T, atol=1e-9):
        raise DynamicsError("laplacian is not symmetric")
    try:
        lam, vec = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise DynamicsError(f"eigensolver did not converge: {exc}") from exc
    residual = float(np.linalg.norm(L @ vec - vec * lam))
    scale = max(1.0, float(np.linalg.norm(L)))
    if residual > tol * scale:
        raise DynamicsError(f"eigensolver residual {residual:.3e} exceeds tolerance")
    # fix the sign of each mode so results are reproducible
    for a in range(vec.shape[1]):
        k = int(np.argmax(np.abs(vec[:, a])))
        if vec[k, a] < 0:
            vec[:, a] = -vec[:, a]
    return ModalDecomposition(lam, vec, reduced.gen_buses, reduced.base_mva, reduced.f0_hz)


# ---------------------------------------------------------------------------
# time-domain simulation


def event_for_generator(case: GridCase, gen_index: int, dispatch, t_event_s: float = 0.0) -> ContingencyEvent:
    gen = case.generators[gen_index]
    scale = 2.0 * math.pi * case.f0_hz * case.base_mva
    sync = gen.synchronous
    return ContingencyEvent(
        lost_generator=gen.id,
        delta_p_mw=float(dispatch[gen_index]),
        bus_b=gen.bus,
        t_event_s=t_event_s,
        lost_inertia=2.0 * gen.kinetic_energy_mws / scale if sync else 0.0,
        lost_damping=gen.damping_d * gen.rated_mva / scale if sync else 0.0,
        lost_rating_mva=gen.rated_mva if sync else 0.0,
    )


def _post_event_system(reduced: ReducedNetwork, event: ContingencyEvent):
    """Post-event (L, m, d, mva, dP) with zero-inertia buses eliminated."""
    m = reduced.inertia.copy()
    d = reduced.damping.copy()
    mva = reduced.rating_mva.copy()
    dp_full = np.zeros(len(reduced.all_buses))
    dp_full[reduced.all_buses.index(event.bus_b)] = -event.delta_p_mw / reduced.base_mva
    dp = reduced.fold @ dp_full
    if event.bus_b in reduced.gen_buses:
        b = reduced.index(event.bus_b)
        m[b] = max(m[b] - event.lost_inertia, 0.0)
        d[b] = max(d[b] - event.lost_damping, 0.0)
        mva[b] = max(mva[b] - event.lost_rating_mva, 0.0)
    live = [i for i in range(reduced.n) if m[i] > _ZERO_INERTIA * max(1.0, float(reduced.inertia.max()))]
    if not live:
        raise DynamicsError("no synchronous inertia remains after the event")
    L, fold = schur_reduce(reduced.laplacian, live)
    return L, m[live], d[live], mva[live], fold @ dp, tuple(reduced.gen_buses[i] for i in live)


def _rk4_map(A: np.ndarray, b: np.ndarray, h: float):
    """One classical RK4 step for ``x' = A x + b`` written as ``x -> Phi x + psi``."""
    n = A.shape[0]
    I = np.eye(n)
    hA = h * A
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    Phi = I + hA + hA2 / 2.0 + hA3 / 6.0 + hA3 @ hA / 24.0
    psi = h * (I + hA / 2.0 + hA2 / 6.0 + hA3 / 24.0) @ b
    return Phi, psi


def _check_step(A: np.ndarray, h: float, n_steps: int, tol: float = 1e-3):
    """Reject steps whose per-mode amplitude error accumulates beyond ``tol``."""
    lam = np.linalg.eigvals(A) * h
    rk = np.abs(1 + lam + lam**2 / 2 + lam**3 / 6 + lam**4 / 24)
    exact = np.abs(np.exp(lam))
    ks = np.unique(np.geomspace(1, max(n_steps, 1), 60).astype(int))
    with np.errstate(over="ignore", invalid="ignore"):
        drift = np.abs(rk[None, :] ** ks[:, None] - exact[None, :] ** ks[:, None])
    worst = float(np.max(np.where(np.isfinite(drift), drift, np.inf)))
    if worst > tol or float(np.max(rk)) > 1.0 + 1e-9:
        raise DynamicsError(
            f"integration step {h:g} s is too large (relative energy drift {worst:.2e}); use a smaller step"
        )


def simulate_contingency(
    reduced: ReducedNetwork,
    event: ContingencyEvent,
    horizon_s: float = DEFAULT_HORIZON_S,
    step_s: float = DEFAULT_STEP_S,
    governor: GovernorConfig | None = None,
) -> TrajectorySet:
    """Integrate the post-event swing dynamics with fixed-step RK4."""
    n_steps = int(round(horizon_s / step_s))
    k_event = int(round(event.t_event_s / step_s))
    if n_steps < 1 or k_event > n_steps:
        raise DynamicsError("horizon must be positive and cover the event time")
    L, m, d, mva, dp, buses = _post_event_system(reduced, event)
    n = len(m)
    ng = n if governor is not None else 0
    A = np.zeros((2 * n + ng, 2 * n + ng))
    A[:n, n : 2 * n] = np.eye(n)
    A[n : 2 * n, :n] = -L / m[:, None]
    A[n : 2 * n, n : 2 * n] = -np.diag(d / m)
    b = np.zeros(2 * n + ng)
    b[n : 2 * n] = dp / m
    if governor is not None:
        omega0 = 2.0 * math.pi * reduced.f0_hz
        gain = mva / (governor.droop * reduced.base_mva)
        tau = governor.time_constant_s
        A[n : 2 * n, 2 * n :] = np.diag(1.0 / m)
        A[2 * n :, n : 2 * n] = -np.diag(gain / (omega0 * tau))
        A[2 * n :, 2 * n :] = -np.eye(n) / tau
    _check_step(A, step_s, n_steps - k_event)
    Phi, psi = _rk4_map(A, b, step_s)

    X = np.zeros((n_steps + 1, 2 * n + ng))
    x = np.zeros(2 * n + ng)
    for k in range(k_event, n_steps):
        x = Phi @ x + psi
        X[k + 1] = x

    # absolute angles: pre-event equilibrium of the retained buses
    theta0 = _equilibrium_angles(reduced)
    keep = [reduced.gen_buses.index(bid) for bid in buses]
    time = np.arange(n_steps + 1) * step_s
    freq = reduced.f0_hz + X[:, n : 2 * n] / (2.0 * math.pi)
    return TrajectorySet(
        time_s=time,
        theta_rad=theta0[keep][None, :] + X[:, :n],
        freq_hz=freq,
        bus_ids=buses,
        t_event_s=k_event * step_s,
        f0_hz=reduced.f0_hz,
    )


def _equilibrium_angles(reduced: ReducedNetwork) -> np.ndarray:
    P = reduced.injection - reduced.injection.mean()
    theta = np.linalg.lstsq(reduced.laplacian, P, rcond=None)[0]
    return theta - theta[0]


def measure_rocof(traj: TrajectorySet, window_s: float = DEFAULT_WINDOW_S) -> RocofMeasurement:
    """Maximum sliding-window RoCoF magnitude per bus after the event."""
    h = traj.step_s
    w = int(round(window_s / h))
    if w < 2:
        raise DynamicsError("window must span at least two integration steps")
    k0 = int(round((traj.t_event_s - traj.time_s[0]) / h))
    f = traj.freq_hz[k0:]
    if f.shape[0] - 1 < w:
        raise DynamicsError("trajectory after the event is shorter than the window")
    rocof = (f[w:] - f[:-w]) / (w * h)
    per_bus = np.max(np.abs(rocof), axis=0)
    return RocofMeasurement(per_bus=per_bus, max=float(per_bus.max()), bus_ids=traj.bus_ids)


# ---------------------------------------------------------------------------
# closed-form modal RoCoF (homogeneous inertia)


def closed_form_rocof(decomp: ModalDecomposition, event: ContingencyEvent, homogeneous_m: float,
                      gamma: float, window_s: float, t) -> np.ndarray:
    """Signed windowed RoCoF at every bus for a power step at ``event.bus_b``.

    Each non-zero mode contributes an underdamped step response; the zero
    mode is the centre-of-inertia drift ``-dP/(N m gamma) (1 - exp(-gamma t))``
    (a ramp when gamma is 0). ``t`` is measured from the event. Returns an
    array shaped ``(n_bus, len(t))``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    m = float(homogeneous_m)
    dp = event.delta_p_mw / decomp.base_mva
    lam = decomp.eigenvalues
    beta = decomp.eigenvectors
    b = decomp.bus_ids.index(event.bus_b)
    zero_tol = 1e-8 * max(1.0, float(np.max(np.abs(lam))))

    def freq_dev(tt):
        # angular frequency deviation (rad/s) at each bus, shape (n, len(tt))
        out = np.zeros((beta.shape[0], tt.size))
        for a in range(len(lam)):
            coef = beta[:, a] * beta[b, a]
            if abs(lam[a]) <= zero_tol:
                if gamma == 0:
                    g = -dp * tt / m
                else:
                    g = -dp / (m * gamma) * (1.0 - np.exp(-gamma * tt))
            else:
                disc = lam[a] / m - gamma**2 / 4.0
                if disc <= 0:
                    raise DynamicsError(f"mode {a} (eigenvalue {lam[a]:.6g}) is not underdamped")
                wd = math.sqrt(disc)
                g = -dp / (m * wd) * np.exp(-gamma * tt / 2.0) * np.sin(wd * tt)
            out += coef[:, None] * g[None, :]
        return out

    if dp == 0:
        return np.zeros((beta.shape[0], t.size))
    df = (freq_dev(t + window_s) - freq_dev(t)) / (2.0 * math.pi)
    return df / window_s


# ---------------------------------------------------------------------------
# labelling


@dataclass(frozen=True)
class LabelConfig:
    horizon_s: float = DEFAULT_HORIZON_S
    step_s: float = DEFAULT_STEP_S
    window_s: float = DEFAULT_WINDOW_S
    governor: GovernorConfig | None = None


def largest_unit(dispatch) -> int:
    """Index of the unit with maximum output; ties go to the lowest index."""
    return int(np.argmax(np.asarray(dispatch, dtype=float)))


def contingency_setup(case: GridCase, commitment, dispatch, injection_mw=None):
    u = np.asarray(commitment, dtype=float)
    p = np.asarray(dispatch, dtype=float)
    if u.shape != (case.n_gen,) or p.shape != (case.n_gen,):
        raise ValueError("commitment and dispatch need one entry per generator")
    if not np.any(u > 0.5):
        raise DynamicsError("no generator is online")
    if np.any((u <= 0.5) & (p > 1e-6)):
        raise ValueError("offline generators must have zero dispatch")
    if not np.any(p > 0):
        raise DynamicsError("all-zero dispatch defines no contingency")
    lost = largest_unit(p)
    reduced = kron_reduce(case, injection_mw=injection_mw, commitment=u)
    event = event_for_generator(case, lost, p)
    return reduced, event


def simulate_schedule_hour(case: GridCase, commitment, dispatch, config: LabelConfig = LabelConfig(),
                           injection_mw=None):
    """Simulate the loss of the largest unit; returns (trajectory, measurement)."""
    reduced, event = contingency_setup(case, commitment, dispatch, injection_mw)
    traj = simulate_contingency(reduced, event, config.horizon_s, config.step_s, config.governor)
    return traj, measure_rocof(traj, config.window_s)


def label_sample(case: GridCase, commitment, dispatch, config: LabelConfig = LabelConfig()) -> float:
    """System-wide maximum locational RoCoF magnitude (Hz/s) after losing the largest unit.

    Returns ``inf`` when the lost unit carried all online synchronous inertia.
    """
    try:
        _, meas = simulate_schedule_hour(case, commitment, dispatch, config)
    except DynamicsError as exc:
        if "no synchronous inertia remains" in str(exc):
            return math.inf
        raise
    return meas.max


def sample_hash(case: GridCase, commitment, dispatch) -> str:
    payload = json.dumps(
        {
            "case": case.name,
            "u": [int(round(float(v))) for v in commitment],
            "p": [round(float(v), 6) for v in dispatch],
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def load_golden(path) -> dict:
    p = Path(path)
    return json.loads(p.read_text()) if p.exists() else {}


def save_golden(path, table: dict) -> None:
    Path(path).write_text(json.dumps(table, indent=1, sort_keys=True))
