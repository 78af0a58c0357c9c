"""Data generation, training, the six-model benchmark and schedule verification."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import dynamics, encoding, uc
from .grid import GridCase, load_case, perturb_profiles
from .milp import FEASIBLE, GAP_REACHED, OPTIMAL, solve_milp
from .predictor import Dataset, MlpParams, TrainConfig, build_features, forward, preactivations, train

log = logging.getLogger(__name__)

VARIANTS = ("T-SCUC", "ERC-SCUC", "LRC-SCUC", "DNN-RCUC", "RLNN-RCUC", "SLNN-RCUC")
BOUND_METHODS = ("interval", "lp", "milp")
NN_VARIANTS = {"DNN-RCUC": "dnn", "RLNN-RCUC": "rlnn", "SLNN-RCUC": "slnn"}
SOLVED = (OPTIMAL, GAP_REACHED, FEASIBLE)


class PipelineError(RuntimeError):
    pass


class SolveFailure(PipelineError):
    pass


@dataclass
class RunConfig:
    case: str = "case6"
    sample_count: int = 84  # UC solves used for data generation (one row per hour each)
    max_rows: int | None = 2000
    mix: dict = field(default_factory=lambda: {"T-SCUC": 0.25, "ERC-SCUC": 0.45, "LRC-SCUC": 0.3})
    deviation: float = 0.2
    limit_range: tuple = (0.3, 1.0)
    rocof_lim: float = 0.5
    constrained_hours: tuple = (9, 10, 11, 12)
    gap: float = 1e-3
    data_gap: float = 1e-2
    time_limit_s: float = 600.0
    data_time_limit_s: float = 60.0
    max_skip_rate: float = 0.2
    lrc_max_rounds: int = 10
    threshold: float = 0.5
    penalty_weight: float = 0.0
    verify_tolerance: float = 0.1
    hidden_layers: tuple = (10, 10, 10)
    epochs: int = 400
    learning_rate: float = 3e-3
    batch_size: int = 64
    split_fraction: float = 0.8
    step_s: float = dynamics.DEFAULT_STEP_S
    horizon_s: float = dynamics.DEFAULT_HORIZON_S
    window_s: float = dynamics.DEFAULT_WINDOW_S
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        self.limit_range = tuple(self.limit_range)
        self.constrained_hours = tuple(int(h) for h in self.constrained_hours)
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")
        if abs(sum(self.mix.values()) - 1.0) > 1e-9 or any(v < 0 for v in self.mix.values()):
            raise ValueError("variant mix must be non-negative and sum to 1")
        unknown = set(self.mix) - {"T-SCUC", "ERC-SCUC", "LRC-SCUC"}
        if unknown:
            raise ValueError(f"unknown data-generation variants {sorted(unknown)}")
        if self.rocof_lim <= 0:
            raise ValueError("rocof_lim must be positive")

    @property
    def label_config(self) -> dynamics.LabelConfig:
        return dynamics.LabelConfig(self.horizon_s, self.step_s, self.window_s)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(self.hidden_layers, self.epochs, self.learning_rate, self.batch_size, self.seed,
                           self.split_fraction)

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def check_horizon(self, case: GridCase) -> None:
        bad = [h for h in self.constrained_hours if not 0 <= h < case.horizon]
        if bad:
            raise ValueError(f"constrained hours {bad} outside the {case.horizon}-period horizon")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("limit_range", "constrained_hours", "hidden_layers"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def parse_hours(text: str) -> tuple:
    """``"9-12"`` -> (9, 10, 11, 12); ``"3,5"`` -> (3, 5)."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("no hours given")
    return tuple(out)


# ---------------------------------------------------------------------------
# data generation


def _solve_variant(case: GridCase, variant: str, lim: float, gap: float, time_limit_s: float,
                   max_rounds: int, label_config) -> uc.UcSchedule:
    if variant == "T-SCUC":
        return uc.solve_uc(uc.build_tscuc(case), gap, time_limit_s)
    if variant == "ERC-SCUC":
        return uc.solve_uc(uc.build_ercuc(case, lim), gap, time_limit_s)
    if variant == "LRC-SCUC":
        return uc.build_lrcuc(case, lim, max_rounds, gap, time_limit_s, label_config)
    raise ValueError(f"unknown variant {variant}")


def generate_dataset(config: RunConfig, case: GridCase | None = None) -> Dataset:
    """Solve perturbed UC instances and label every hourly snapshot by simulation."""
    base = case if case is not None else load_case(config.case)
    names = sorted(config.mix)
    probs = np.array([config.mix[n] for n in names])
    rng = np.random.default_rng(config.seed)
    X, y, prov = [], [], []
    skipped = 0
    for i in range(config.sample_count):
        sample_seed = int(rng.integers(0, 2**31 - 1))
        variant = names[int(rng.choice(len(names), p=probs))]
        lim = float(rng.uniform(*config.limit_range))
        inst = perturb_profiles(base, config.deviation, sample_seed)
        try:
            sched = _solve_variant(inst, variant, lim, config.data_gap, config.data_time_limit_s,
                                   config.lrc_max_rounds, config.label_config)
        except Exception as exc:  # solver trouble on one perturbation is not fatal
            log.warning("sample %d (%s, seed %d) failed: %s", i, variant, sample_seed, exc)
            sched = None
        if sched is None or sched.status not in SOLVED:
            skipped += 1
            if skipped > config.max_skip_rate * config.sample_count:
                raise PipelineError(f"{skipped} of {i + 1} samples failed; aborting data generation")
            continue
        for t in range(inst.horizon):
            u, p = sched.commitment[:, t], sched.dispatch[:, t]
            p = np.where(u > 0, np.maximum(p, 0.0), 0.0)
            if not np.any(p > 0):
                continue
            label = dynamics.label_sample(inst, u, p, config.label_config)
            if not math.isfinite(label) or label <= 0:
                continue
            fv = build_features(u, p)
            fv.check()
            X.append(fv.x)
            y.append(label)
            prov.append({"variant": variant, "seed": sample_seed, "hour": t,
                         "limit": None if variant == "T-SCUC" else round(lim, 6)})
        log.info("sample %d/%d %s done (%d rows)", i + 1, config.sample_count, variant, len(y))
    if not y:
        raise PipelineError("no labelled rows were produced")
    n = len(y) if config.max_rows is None else min(len(y), config.max_rows)
    meta = {"case": base.name, "seed": config.seed, "sample_count": config.sample_count, "rows": n,
            "features": "u,omega,p", "skipped": skipped}
    return Dataset(np.array(X[:n]), np.array(y[:n]), prov[:n], meta)


# ---------------------------------------------------------------------------
# NN-constrained UC


@dataclass
class NnModel:
    ucm: uc.UcModel
    encodings: list
    bounds: dict  # hour -> NeuronBounds
    selected: frozenset


def build_nn_rcuc(case: GridCase, params: MlpParams, selected, rocof_lim: float, hours,
                  penalty_weight: float = 0.0, variant: str = "SLNN-RCUC",
                  options: uc.UcOptions | None = None, bound_method: str = "milp") -> NnModel:
    """T-SCUC plus one embedded predictor per constrained hour bounded by ``rocof_lim``.

    ``bound_method`` picks the neuron bounds behind big-M values and triangles:
    "interval" (box propagation), "lp" (LP over the feature polytope with
    relaxed earlier layers) or "milp" (exact earlier layers, binary u).
    """
    if bound_method not in BOUND_METHODS:
        raise ValueError(f"unknown bound method {bound_method!r}")
    params = params.folded() if (np.any(params.offset != 0) or np.any(params.scale != 1)) else params
    if params.layer_sizes[0] != 3 * case.n_gen:
        raise ValueError("predictor input size does not match 3 x number of generators")
    ucm = uc.build_tscuc(case, options)
    ucm.variant = variant
    ucm.rocof_lim = rocof_lim
    ucm.model.name = f"{case.name}-{variant.lower()}"
    lo, hi = encoding.input_box(case)
    box = encoding.compute_bounds(params, lo, hi)
    encs = []
    bounds = {}
    for t in hours:
        bounds[t] = neuron_bounds(case, params, t, bound_method, box)
        enc = encoding.encode(params, bounds[t], selected, ucm.model, ucm.feature_vars(t), penalty_weight,
                              tag=f"t{t}")
        encoding.attach_rocof_constraint(enc, rocof_lim, ucm.model)
        encs.append(enc)
    ucm.extras["encodings"] = encs
    return NnModel(ucm, encs, bounds, frozenset(selected))


def nn_warm_start(case: GridCase, nn: NnModel, params: MlpParams, config: RunConfig) -> dict | None:
    """Complete MILP start for an NN model built from an ERC-SCUC solution.

    The UC part of the NN model has the same variables as T-SCUC, so the ERC
    solution carries over; every network variable is filled in by a forward
    pass on that hour's features. Returns None when ERC-SCUC finds nothing.
    The start is only useful when the network accepts the ERC schedule; the
    solver discards it otherwise.
    """
    seed = uc.build_tscuc(case)
    uc.add_inertia_floor(seed, config.rocof_lim, config.constrained_hours)
    sol = solve_milp(seed.model, gap=config.gap, time_limit_s=config.time_limit_s)
    if sol.values is None:
        log.info("no ERC-SCUC start for %s", nn.ucm.variant)
        return None
    x = sol.values.copy()
    binary = [v.binary for v in seed.model.variables]
    x[binary] = np.round(x[binary])
    start = dict(enumerate(x.tolist()))
    folded = params.folded()
    for t, enc in zip(config.constrained_hours, nn.encodings):
        feats = x[nn.ucm.feature_vars(t)]
        pre = preactivations(folded, feats[None, :])
        bounds = nn.bounds[t]
        for q, layer in enumerate(pre):
            for l, val in enumerate(np.clip(layer[0], bounds.lower[q], bounds.upper[q])):
                start[enc.zhat[q][l]] = float(val)
                if enc.z[q][l] is not None and enc.z[q][l] != enc.zhat[q][l]:
                    start[enc.z[q][l]] = max(float(val), 0.0)
                if enc.a[q][l] is not None:
                    start[enc.a[q][l]] = float(val > 0)
        start[enc.output] = float(forward(folded, feats))
    return start


def _feature_builder(case: GridCase, hour: int):
    """Adds UC feature variables for one hour: binary u, one-hot largest unit, side rows."""
    pmax = case.gen_array("p_max_mw")
    G = case.n_gen
    M = float(pmax.max())

    def build(model):
        u = [model.add_var(None, binary=True) for _ in range(G)]
        w = [model.add_var(None, 0.0, pmax[g]) for g in range(G)]
        p = [model.add_var(None, 0.0, pmax[g]) for g in range(G)]
        eta = [model.add_var(None, binary=True) for _ in range(G)]
        x = u + w + p
        for coeffs, sense, rhs in encoding.input_rows(case, hour):
            model.add_constraint({x[i]: c for i, c in coeffs.items()}, sense, rhs)
        model.add_constraint({e: 1.0 for e in eta}, "=", 1.0)
        for g in range(G):
            model.add_constraint({w[g]: 1.0, eta[g]: -M}, "<=", 0.0)
            model.add_constraint({w[g]: 1.0, p[g]: -1.0, eta[g]: -M}, ">=", -M)
        return x

    return build


def neuron_bounds(case: GridCase, params: MlpParams, hour: int, method: str = "milp", box=None):
    lo, hi = encoding.input_box(case)
    box = box if box is not None else encoding.compute_bounds(params, lo, hi)
    if method == "interval":
        return box
    lp = encoding.tighten_bounds(params, box, lo, hi, encoding.input_rows(case, hour))
    if method == "lp":
        return lp
    return encoding.tighten_bounds_milp(params, lp, _feature_builder(case, hour), layers=range(1, params.n_hidden))


def selection_for(variant: str, params: MlpParams, stats: encoding.NeuronStats | None, threshold: float):
    if variant == "DNN-RCUC":
        return frozenset()
    if variant == "RLNN-RCUC":
        return encoding.all_neurons(params)
    if stats is None:
        raise ValueError("SLNN selection needs activation statistics")
    return encoding.select_neurons(stats, threshold)


# ---------------------------------------------------------------------------
# verification


def verify_schedule(case: GridCase, sched: uc.UcSchedule, rocof_lim: float, hours,
                    label_config: dynamics.LabelConfig = dynamics.LabelConfig(), tolerance: float = 0.0,
                    traces_dir=None) -> list[dict]:
    """Simulate the loss of the largest unit at every hour and compare with the limit.

    The measured RoCoF uses the labelling settings (no governor). When
    ``traces_dir`` is given, a governor-enabled trajectory per hour is written
    there as ``hour<k>.csv``.
    """
    out = []
    for t in hours:
        u, p = sched.commitment[:, t], sched.dispatch[:, t]
        p = np.where(u > 0, np.maximum(p, 0.0), 0.0)
        row = {"hour": int(t), "rocof": math.nan, "passed": False, "lost_generator": None, "flag": ""}
        if not np.any(u) or not np.any(p > 0):
            row["flag"] = "no online unit"
            out.append(row)
            continue
        row["lost_generator"] = case.generators[dynamics.largest_unit(p)].id
        try:
            _, meas = dynamics.simulate_schedule_hour(case, u, p, label_config)
            row["rocof"] = meas.max
        except dynamics.DynamicsError as exc:
            row["rocof"] = math.inf
            row["flag"] = str(exc)
        row["passed"] = bool(row["rocof"] <= rocof_lim * (1.0 + tolerance))
        if traces_dir is not None and math.isfinite(row["rocof"]):
            gov = dynamics.LabelConfig(label_config.horizon_s, label_config.step_s, label_config.window_s,
                                       dynamics.GovernorConfig())
            traj, _ = dynamics.simulate_schedule_hour(case, u, p, gov)
            Path(traces_dir).mkdir(parents=True, exist_ok=True)
            traj.to_csv(Path(traces_dir) / f"hour{t}.csv")
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class ModelResult:
    variant: str
    schedule: uc.UcSchedule
    solve_time_s: float
    n_binaries: int
    verification: list
    audit: list
    extra: dict = field(default_factory=dict)

    @property
    def highest_rocof(self) -> float:
        vals = [r["rocof"] for r in self.verification if not math.isnan(r["rocof"])]
        return float(max(vals)) if vals else math.nan

    @property
    def all_passed(self) -> bool:
        return all(r["passed"] for r in self.verification)


@dataclass
class BenchmarkReport:
    results: dict  # variant -> ModelResult
    config: dict
    hours: tuple

    def rows(self) -> list[dict]:
        out = []
        for name in VARIANTS:
            if name not in self.results:
                continue
            r = self.results[name]
            s = r.schedule
            out.append({
                "model": name,
                "status": s.status,
                "total_cost": round(s.total_cost, 2),
                "gap": round(s.gap, 6),
                "highest_rocof_hz_s": round(r.highest_rocof, 4),
                "all_hours_pass": r.all_passed,
                "binaries": r.n_binaries,
                "shed_mw": round(float(s.shed.sum()), 4),
                "audit_ok": not r.audit,
                "committed": " ".join(str(int(c)) for c in s.committed_count),
            })
        return out

    def to_csv(self, path) -> None:
        rows = self.rows()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)

    def to_markdown(self) -> str:
        return _markdown(self.to_json())

    def timings(self) -> list[dict]:
        return [{"model": n, "solve_time_s": round(self.results[n].solve_time_s, 3)}
                for n in VARIANTS if n in self.results]

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "hours": list(self.hours),
            "rows": self.rows(),
            "verification": {n: r.verification for n, r in self.results.items()},
        }


def _table(cols, rows) -> list[str]:
    text = [[str(c) for c in cols]] + [[str(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in text) for i in range(len(cols))]
    fmt = lambda r: "| " + " | ".join(v.ljust(w) for v, w in zip(r, widths)) + " |"  # noqa: E731
    return [fmt(text[0]), "|" + "|".join("-" * (w + 2) for w in widths) + "|"] + [fmt(r) for r in text[1:]]


def _stats_rows(dataset: Dataset, config: RunConfig) -> np.ndarray:
    """Held-out rows (the validation split) used for activation statistics."""
    from .predictor import split_indices

    _, va = split_indices(len(dataset), config.split_fraction, config.seed)
    return dataset.X[va]


def solve_model(variant: str, case: GridCase, config: RunConfig, params: MlpParams | None = None,
                stats: encoding.NeuronStats | None = None):
    """Solve one benchmark model; returns (schedule, wall-clock seconds, n_binaries, extra).

    A model that ends without any feasible schedule raises :class:`SolveFailure`.
    """
    try:
        return _solve_model(variant, case, config, params, stats)
    except uc.UcError as exc:
        raise SolveFailure(f"{variant}: {exc}") from exc


def _solve_model(variant, case, config, params, stats):
    hours = config.constrained_hours
    lim = config.rocof_lim
    extra = {}
    t0 = time.perf_counter()
    if variant == "T-SCUC":
        ucm = uc.build_tscuc(case)
        sched = uc.solve_uc(ucm, config.gap, config.time_limit_s)
        nb = ucm.model.n_binaries
    elif variant == "ERC-SCUC":
        ucm = uc.build_tscuc(case)
        uc.add_inertia_floor(ucm, lim, hours)
        ucm.variant = variant
        sched = uc.solve_uc(ucm, config.gap, config.time_limit_s)
        nb = ucm.model.n_binaries
    elif variant == "LRC-SCUC":
        sched = uc.build_lrcuc(case, lim, config.lrc_max_rounds, config.gap, config.time_limit_s,
                               config.label_config, hours=hours)
        nb = uc.build_tscuc(case).model.n_binaries
    elif variant in NN_VARIANTS:
        if params is None:
            raise ValueError(f"{variant} needs trained predictor weights")
        selected = selection_for(variant, params, stats, config.threshold)
        nn = build_nn_rcuc(case, params, selected, lim, hours, config.penalty_weight, variant)
        t0 = time.perf_counter()
        # seed the solver with the ERC-SCUC schedule; its solve time counts towards this model
        start = nn_warm_start(case, nn, params, config)
        remaining = max(config.time_limit_s - (time.perf_counter() - t0), 1.0)
        sched = uc.solve_uc(nn.ucm, config.gap, remaining, start=start)
        nb = nn.ucm.model.n_binaries
        extra["selection_report"] = "\n".join(f"hour {t}\n" + encoding.selection_report(stats, b, selected)
                                               for t, b in nn.bounds.items())
        extra["nn_binaries"] = sum(e.n_binaries for e in nn.encodings)
        extra["selected"] = len(selected)
        if sched.status in SOLVED:
            extra["predicted"] = [float(forward(params, build_features(sched.commitment[:, t],
                                                                       sched.dispatch[:, t]).x)) for t in hours]
    else:
        raise ValueError(f"unknown model {variant}")
    elapsed = time.perf_counter() - t0
    if sched.status not in SOLVED:
        raise SolveFailure(f"{variant} returned status {sched.status}")
    sched.variant = variant
    return sched, elapsed, nb, extra


def run_benchmark(config: RunConfig, params: MlpParams, stats_X=None, case: GridCase | None = None,
                  variants=VARIANTS, traces_dir=None) -> BenchmarkReport:
    case = case if case is not None else load_case(config.case)
    config.check_horizon(case)
    stats = encoding.activation_stats(params, stats_X) if stats_X is not None and len(stats_X) else None
    results = {}
    for variant in variants:
        sched, elapsed, nb, extra = solve_model(variant, case, config, params, stats)
        ver = verify_schedule(case, sched, config.rocof_lim, config.constrained_hours, config.label_config,
                              config.verify_tolerance, traces_dir if variant == "SLNN-RCUC" else None)
        audit = uc.audit_schedule(case, sched)
        log.info("%s: cost %.1f, %.2f s, highest RoCoF %.4f", variant, sched.total_cost, elapsed,
                 max(r["rocof"] for r in ver))
        results[variant] = ModelResult(variant, sched, elapsed, nb, ver, audit, extra)
    return BenchmarkReport(results, config.to_dict(), config.constrained_hours)


_REPORT_COLS = ["model", "status", "total_cost", "gap", "highest_rocof_hz_s", "all_hours_pass", "binaries",
                "shed_mw", "audit_ok"]


def _markdown(doc: dict) -> str:
    rows = doc["rows"]
    hours = doc["hours"]
    cfg = doc["config"]
    lines = [f"# Benchmark on {cfg.get('case')}", "",
             f"RoCoF limit {cfg.get('rocof_lim')} Hz/s at hours {', '.join(str(h) for h in hours)}; "
             f"seed {cfg.get('seed')}.", ""]
    lines += _table(_REPORT_COLS, [[r[c] for c in _REPORT_COLS] for r in rows])
    lines += ["", "## Committed units per hour", ""]
    T = len(rows[0]["committed"].split())
    lines += _table(["model"] + [str(t) for t in range(T)], [[r["model"]] + r["committed"].split() for r in rows])
    lines += ["", "## Simulated RoCoF per constrained hour [Hz/s]", ""]
    lines += _table(["model"] + [str(h) for h in hours],
                    [[r["model"]] + [f"{v['rocof']:.4f}" for v in doc["verification"][r["model"]]] for r in rows])
    return "\n".join(lines) + "\n"


def render_report(out_dir) -> str:
    """Write report.md and report.csv from the stored benchmark.json."""
    out = Path(out_dir)
    doc = json.loads((out / "benchmark.json").read_text())
    text = _markdown(doc)
    (out / "report.md").write_text(text)
    rows = doc["rows"]
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return text


def write_report(report: BenchmarkReport, out_dir) -> None:
    """benchmark.json, report.md, report.csv, timings.csv and one schedule file per model.

    Wall-clock times live only in timings.csv so that the report files are
    identical across repeated runs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "benchmark.json").write_text(json.dumps(report.to_json(), indent=1))
    render_report(out)
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["model", "solve_time_s"], lineterminator="\n")
        w.writeheader()
        w.writerows(report.timings())
    for name, r in report.results.items():
        r.schedule.save(out / f"schedule_{name.lower()}.json")
        if "selection_report" in r.extra:
            (out / f"selection_{name.lower()}.txt").write_text(r.extra["selection_report"])


# ---------------------------------------------------------------------------
# end-to-end helpers


def train_from_dataset(dataset: Dataset, config: RunConfig):
    return train(dataset, config.train_config)


def run_all(config: RunConfig, traces: bool = True) -> BenchmarkReport:
    """gen-data -> train -> benchmark, reusing files already in the output directory."""
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / "dataset.csv"
    weights_path = out / "weights.json"
    if data_path.exists():
        dataset = Dataset.load(data_path)
    else:
        dataset = generate_dataset(config)
        dataset.save(data_path)
    if weights_path.exists():
        params = MlpParams.load(weights_path)
    else:
        params = train_from_dataset(dataset, config).params
        params.save(weights_path)
    report = run_benchmark(config, params, _stats_rows(dataset, config),
                           traces_dir=out / "traces" if traces else None)
    write_report(report, out)
    return report
