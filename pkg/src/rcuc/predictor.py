"""Feature construction and a small ReLU regression network trained with numpy."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class PredictorError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# features


@dataclass(frozen=True)
class FeatureVector:
    u: np.ndarray
    omega: np.ndarray
    p: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.u, self.omega, self.p])

    def check(self, tol: float = 1e-9) -> None:
        nz = np.flatnonzero(self.omega > tol)
        if nz.size > 1:
            raise PredictorError("disturbance vector has more than one nonzero entry")
        if nz.size == 1 and nz[0] != int(np.argmax(self.p)):
            raise PredictorError("disturbance entry is not at the largest unit")
        if np.any((self.u < 0.5) & (self.p > tol)):
            raise PredictorError("offline unit with positive output")


def build_features(commitment, dispatch, tol: float = 1e-6) -> FeatureVector:
    """``x = [u, omega, P]`` where omega holds the largest output at its unit.

    Ties in the largest output go to the lowest index.
    """
    u = np.asarray(commitment, dtype=float).round()
    p = np.asarray(dispatch, dtype=float)
    if u.shape != p.shape or u.ndim != 1:
        raise PredictorError("commitment and dispatch must be 1-d of equal length")
    if np.any((u < 0.5) & (p > tol)):
        raise PredictorError("dispatch > 0 for an offline unit")
    p = np.where(u < 0.5, 0.0, np.maximum(p, 0.0))
    omega = np.zeros_like(p)
    if np.any(p > 0):
        k = int(np.argmax(p))
        omega[k] = p[k]
    return FeatureVector(u, omega, p)


# ---------------------------------------------------------------------------
# network


@dataclass
class MlpParams:
    """ReLU hidden layers and a linear output; ``weights[q]`` has shape (n_in, n_out).

    Inputs are mapped by ``(x - offset) * scale`` before the first layer and
    the raw network output by ``out * y_scale + y_offset``.
    """

    weights: list
    biases: list
    offset: np.ndarray | None = None
    scale: np.ndarray | None = None
    y_offset: float = 0.0
    y_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        n_in = self.weights[0].shape[0]
        if self.offset is None:
            self.offset = np.zeros(n_in)
        if self.scale is None:
            self.scale = np.ones(n_in)
        self.offset = np.asarray(self.offset, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        self.validate()

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_hidden(self) -> int:
        return len(self.weights) - 1

    def validate(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise PredictorError("need one bias vector per weight matrix")
        for q, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise PredictorError(f"layer {q} has inconsistent shapes")
            if q and w.shape[0] != self.weights[q - 1].shape[1]:
                raise PredictorError(f"layer {q} input does not match previous layer")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise PredictorError(f"layer {q} has non-finite parameters")
        if self.weights[-1].shape[1] != 1:
            raise PredictorError("output layer must have a single unit")
        n_in = self.weights[0].shape[0]
        if self.offset.shape != (n_in,) or self.scale.shape != (n_in,):
            raise PredictorError("input scaling does not match the input layer")

    def folded(self) -> "MlpParams":
        """Equivalent parameters acting on raw inputs with identity scaling."""
        W = [w.copy() for w in self.weights]
        b = [v.copy() for v in self.biases]
        b[0] = b[0] - (self.offset * self.scale) @ W[0]
        W[0] = self.scale[:, None] * W[0]
        W[-1] = W[-1] * self.y_scale
        b[-1] = b[-1] * self.y_scale + self.y_offset
        return MlpParams(W, b, meta=dict(self.meta))

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [v.copy() for v in self.biases], self.offset.copy(),
                         self.scale.copy(), self.y_offset, self.y_scale, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "activation": "relu",
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "input_scaling": {"offset": self.offset.tolist(), "scale": self.scale.tolist()},
            "output_scaling": {"offset": self.y_offset, "scale": self.y_scale},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        sc = d.get("input_scaling", {})
        out = d.get("output_scaling", {})
        p = cls(d["weights"], d["biases"], sc.get("offset"), sc.get("scale"), float(out.get("offset", 0.0)),
                float(out.get("scale", 1.0)), d.get("meta", {}))
        if "layer_sizes" in d and list(d["layer_sizes"]) != p.layer_sizes:
            raise PredictorError("layer_sizes does not match the weight matrices")
        return p

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "MlpParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_params(layer_sizes, seed: int = 0) -> MlpParams:
    """He-initialised weights and zero biases."""
    rng = np.random.default_rng(seed)
    W, b = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        W.append(rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out)))
        b.append(np.zeros(n_out))
    return MlpParams(W, b)


def _forward_cache(params: MlpParams, X: np.ndarray):
    a = (X - params.offset) * params.scale
    acts = [a]
    pre = []
    for q, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if q < len(params.weights) - 1 else z
        acts.append(a)
    return pre, acts


def forward(params: MlpParams, x) -> np.ndarray | float:
    """Predicted RoCoF for one input vector (float) or a batch of rows (array)."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.layer_sizes[0]:
        raise PredictorError(f"input has {X.shape[1]} features, network expects {params.layer_sizes[0]}")
    _, acts = _forward_cache(params, X)
    y = acts[-1][:, 0] * params.y_scale + params.y_offset
    return float(y[0]) if single else y


def preactivations(params: MlpParams, X) -> list[np.ndarray]:
    """Hidden-layer pre-activations for a batch, one (N, width) array per layer."""
    pre, _ = _forward_cache(params, np.atleast_2d(np.asarray(X, dtype=float)))
    return pre[:-1]


def mse_loss(params: MlpParams, X, y) -> float:
    pred = forward(params, np.atleast_2d(X))
    return float(np.mean((pred - np.asarray(y, dtype=float)) ** 2))


def gradients(params: MlpParams, X, y):
    """Gradients of the MSE (in output units) w.r.t. weights and biases."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    pre, acts = _forward_cache(params, X)
    n = X.shape[0]
    out = acts[-1][:, 0] * params.y_scale + params.y_offset
    delta = (2.0 / n) * (out - y)[:, None] * params.y_scale
    gW = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for q in range(len(params.weights) - 1, -1, -1):
        gW[q] = acts[q].T @ delta
        gb[q] = delta.sum(axis=0)
        if q:
            delta = (delta @ params.weights[q].T) * (pre[q - 1] > 0)
    return gW, gb


# ---------------------------------------------------------------------------
# metrics


def metrics(predictions, labels) -> dict:
    pred = np.asarray(predictions, dtype=float)
    lab = np.asarray(labels, dtype=float)
    if pred.shape != lab.shape:
        raise PredictorError("predictions and labels differ in length")
    if pred.size < 2:
        raise PredictorError("need at least two samples")
    err = np.abs(pred - lab)
    sst = float(np.sum((lab - lab.mean()) ** 2))
    sse = float(np.sum((pred - lab) ** 2))
    r2 = 0.0 if sst <= 1e-15 * max(1.0, float(np.sum(lab**2))) else 1.0 - sse / sst
    return {"r2": r2, "median_abs_err": float(np.median(err)), "mean_abs_err": float(np.mean(err))}


# ---------------------------------------------------------------------------
# dataset


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    provenance: list = field(default_factory=list)  # one dict per row
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.y.size:
            raise PredictorError("feature rows and labels differ in count")
        if not self.provenance:
            self.provenance = [{} for _ in range(self.y.size)]
        if len(self.provenance) != self.y.size:
            raise PredictorError("provenance must have one entry per row")

    def __len__(self) -> int:
        return self.y.size

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.y[idx], [self.provenance[i] for i in idx], dict(self.meta))

    def save(self, path) -> None:
        n_g = self.X.shape[1] // 3
        header = [f"u{g}" for g in range(n_g)] + [f"omega{g}" for g in range(n_g)] + [f"p{g}" for g in range(n_g)]
        header += ["label", "variant", "seed", "hour", "limit"]
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(self.meta, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for x, y, prov in zip(self.X, self.y, self.provenance):
                lim = prov.get("limit")
                w.writerow([repr(float(v)) for v in x] + [repr(float(y)), prov.get("variant", ""), prov.get("seed", ""),
                            prov.get("hour", ""), "" if lim is None else repr(float(lim))])

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            first = fh.readline()
            meta = json.loads(first[1:]) if first.startswith("#") else {}
            if not first.startswith("#"):
                fh.seek(0)
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        n_feat = header.index("label")
        X = np.array([[float(v) for v in r[:n_feat]] for r in body]).reshape(len(body), n_feat)
        y = np.array([float(r[n_feat]) for r in body])
        prov = []
        for r in body:
            prov.append({
                "variant": r[n_feat + 1],
                "seed": int(r[n_feat + 2]) if r[n_feat + 2] else None,
                "hour": int(r[n_feat + 3]) if r[n_feat + 3] else None,
                "limit": float(r[n_feat + 4]) if r[n_feat + 4] else None,
            })
        return cls(X, y, prov, meta)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    hidden_layers: tuple = (10, 10, 10)
    epochs: int = 400
    learning_rate: float = 3e-3
    batch_size: int = 64
    seed: int = 0
    split_fraction: float = 0.8
    beta1: float = 0.9
    beta2: float = 0.999
    min_learning_rate: float = 1e-7

    def fingerprint(self) -> str:
        d = asdict(self)
        d["hidden_layers"] = list(d["hidden_layers"])
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TrainResult:
    params: MlpParams  # folded: acts on raw features, identity scaling
    metrics: dict
    train_metrics: dict
    history: list  # full-batch training MSE after every epoch
    train_idx: np.ndarray
    val_idx: np.ndarray


def split_indices(n: int, split_fraction: float, seed: int):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    k = int(round(split_fraction * n))
    k = min(max(k, 1), n - 1)
    return np.sort(perm[:k]), np.sort(perm[k:])


def standardization(X: np.ndarray):
    """Per-feature (offset, scale); constant features get scale 1.

    The spread is floored at range / sqrt(12), the std of a uniform spread over
    the observed range. Rarely nonzero features (the disturbance entry of a
    unit that is seldom the largest) would otherwise get huge scales, which
    widen the neuron bounds seen by the MILP encoding.
    """
    mu = X.mean(axis=0)
    sd = np.maximum(X.std(axis=0), np.ptp(X, axis=0) / math.sqrt(12.0))
    return mu, np.where(sd > 1e-12, 1.0 / np.where(sd > 1e-12, sd, 1.0), 1.0)


def train(dataset: Dataset, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Adam on minibatches with a full-batch monotonicity guard.

    After every epoch the full training loss is evaluated; if it went up the
    epoch is undone and the learning rate halved, so the recorded history is
    non-increasing.
    """
    if len(dataset) < 50:
        raise PredictorError("training needs at least 50 samples")
    if not 0.0 < config.split_fraction < 1.0:
        raise PredictorError("split_fraction must lie in (0, 1)")
    tr, va = split_indices(len(dataset), config.split_fraction, config.seed)
    X, y = dataset.X[tr], dataset.y[tr]
    offset, scale = standardization(X)
    y_off = float(y.mean())
    # constant labels: a zero output scale makes the network exactly that constant
    y_sc = float(y.std()) if y.std() > 1e-12 else 0.0

    sizes = [X.shape[1], *config.hidden_layers, 1]
    params = init_params(sizes, config.seed)
    params.offset, params.scale, params.y_offset, params.y_scale = offset, scale, y_off, y_sc
    rng = np.random.default_rng(config.seed + 1)

    mW = [np.zeros_like(w) for w in params.weights]
    vW = [np.zeros_like(w) for w in params.weights]
    mb = [np.zeros_like(b) for b in params.biases]
    vb = [np.zeros_like(b) for b in params.biases]
    step = 0
    lr = config.learning_rate
    loss = mse_loss(params, X, y)
    history = []
    for epoch in range(config.epochs):
        saved = (params.copy(), [a.copy() for a in mW], [a.copy() for a in vW], [a.copy() for a in mb],
                 [a.copy() for a in vb], step)
        perm = rng.permutation(len(y))
        for start in range(0, len(y), config.batch_size):
            idx = perm[start : start + config.batch_size]
            gW, gb = gradients(params, X[idx], y[idx])
            step += 1
            c1 = 1.0 - config.beta1**step
            c2 = 1.0 - config.beta2**step
            for q in range(len(params.weights)):
                mW[q] = config.beta1 * mW[q] + (1 - config.beta1) * gW[q]
                vW[q] = config.beta2 * vW[q] + (1 - config.beta2) * gW[q] ** 2
                mb[q] = config.beta1 * mb[q] + (1 - config.beta1) * gb[q]
                vb[q] = config.beta2 * vb[q] + (1 - config.beta2) * gb[q] ** 2
                params.weights[q] -= lr * (mW[q] / c1) / (np.sqrt(vW[q] / c2) + 1e-8)
                params.biases[q] -= lr * (mb[q] / c1) / (np.sqrt(vb[q] / c2) + 1e-8)
        new_loss = mse_loss(params, X, y)
        if not math.isfinite(new_loss):
            raise DivergenceError(f"training loss became non-finite at epoch {epoch + 1}")
        if new_loss > loss:
            params, mW, vW, mb, vb, step = saved
            lr *= 0.5
            if lr < config.min_learning_rate:
                history.append(loss)
                break
        else:
            loss = new_loss
        history.append(loss)

    folded = params.folded()
    folded.meta = {"config": {**asdict(config), "hidden_layers": list(config.hidden_layers)},
                   "fingerprint": config.fingerprint(), "n_train": int(tr.size), "n_val": int(va.size)}
    m_val = metrics(forward(folded, dataset.X[va]), dataset.y[va]) if va.size >= 2 else {}
    m_tr = metrics(forward(folded, X), y)
    folded.meta["validation"] = m_val
    log.info("trained %s: train r2 %.4f, validation r2 %.4f", sizes, m_tr["r2"], m_val.get("r2", float("nan")))
    return TrainResult(folded, m_val, m_tr, history, tr, va)
