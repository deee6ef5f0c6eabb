"""Alternating drift-matching trainer.

One outer iteration: (a) draw pinned tuples from the current coupling
(initially the independent product of the training marginals), (b) settle
their snapshot velocities with forward/backward bridge sweeps, (c) freeze
the conditional Gaussian path and regress the network onto closed-form
bridge accelerations at uniformly sampled times, (d) refresh the coupling by
simulating the learned drift from data-resampled starts.  The log records
the mean matching loss and the transport distance of each refreshed
marginal to its training data.
"""

from __future__ import annotations

import base64
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .bridge import EPS_PIN, acceleration_at_times, lambda_mixes
from .errors import ConfigError, TrainingError
from .gaussian_path import DEFAULT_GRID_H, GaussianPath, build_gaussian_path
from .metrics import wasserstein
from .net import AdamW, DriftNet
from .sde import DEFAULT_STEPS_TRAIN, refine_velocities, refresh_coupling

LOSS_ABORT = 1e6
PLATEAU_RTOL = 1e-3


@dataclass
class TrainConfig:
    """Knobs of the alternating trainer; all counts strictly positive."""

    sigma: float = 0.3
    batch_size: int = 64
    learning_rate: float = 1e-4
    outer_iterations: int = 10
    inner_steps: int = 500
    refinement_rounds: int = 4
    truncation_k: int = None            # None = use every future pin
    seed: int = 0
    # architecture and auxiliary knobs
    width: int = 128
    depth: int = 3
    time_freqs: int = 8
    weight_decay: float = 1e-4
    ema_decay: float = 0.999
    steps_per_segment: int = DEFAULT_STEPS_TRAIN
    grid_h: float = DEFAULT_GRID_H
    anchored_refresh: bool = False
    pool_cap: int = 1000

    def validate(self):
        positive = ["sigma", "batch_size", "learning_rate", "outer_iterations",
                    "inner_steps", "refinement_rounds", "width", "depth",
                    "time_freqs", "steps_per_segment", "grid_h", "pool_cap"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"train.{name}: must be positive")
        if self.truncation_k is not None and self.truncation_k < 1:
            raise ConfigError("train.truncation_k: must be >= 1 or null")
        if not 0 <= self.ema_decay < 1:
            raise ConfigError("train.ema_decay: must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("train.weight_decay: must be >= 0")
        return self


@dataclass
class TrainingLog:
    """Per-outer-iteration records plus the plateau diagnosis."""

    rows: list = field(default_factory=list)
    plateau_iteration: int = None
    final_coupling: np.ndarray = None        # (P, N+1, d) after the last refresh
    start_x0: np.ndarray = None              # (P, d) simulation starts
    start_v0: np.ndarray = None              # (P, d) final refined velocities

    def append(self, **kw):
        self.rows.append(kw)

    @property
    def losses(self):
        return [r["loss"] for r in self.rows]

    def to_csv(self, path, header_comment: str = ""):
        n_marg = len(self.rows[0]["w2"]) if self.rows else 0
        cols = ["outer", "loss", "plateau"] + [f"w2_t{n}" for n in range(n_marg)]
        lines = []
        if header_comment:
            lines.append(f"# {header_comment}")
        lines.append(",".join(cols))
        for r in self.rows:
            vals = [str(r["outer"]), f"{r['loss']:.10g}", str(int(r["plateau"]))]
            vals += [f"{w:.10g}" for w in r["w2"]]
            lines.append(",".join(vals))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def matching_loss(net: DriftNet, t, X, V, targets, shadow: bool = False) -> float:
    """(1/B) sum ||target - a_theta(t, x, v)||^2 over the batch."""
    pred = net.forward(t, X, V, shadow=shadow)
    resid = pred - np.asarray(targets, dtype=float)
    if not np.all(np.isfinite(resid)):
        raise TrainingError("non-finite matching loss")
    return float(np.sum(resid ** 2) / resid.shape[0])


def _sample_times(rng, n_segments: int, size: int) -> np.ndarray:
    """Uniform times over the span, clamped off each segment's right pin."""
    t = rng.uniform(0.0, n_segments - EPS_PIN, size)
    seg = np.floor(t)
    return np.minimum(t, seg + 1.0 - EPS_PIN)


def net_drift(net: DriftNet, shadow: bool = False):
    """Adapt a DriftNet to the simulator's (t, X, V) -> accel interface."""

    def drift(t, X, V):
        return net.forward(t, X, V, shadow=shadow)

    return drift


def _coupling_w2(points: np.ndarray, marginals) -> list:
    """Transport distance of each refreshed marginal to its training data."""
    out = []
    for n, data in enumerate(marginals):
        data = np.asarray(data, dtype=float)
        k = min(len(data), points.shape[0])
        out.append(wasserstein(points[:k, n], data[:k], order=2))
    return out


def train(marginals, config: TrainConfig):
    """Run the alternating matching loop on per-marginal sample arrays.

    marginals: sequence of (n_i, d) arrays, one per training snapshot, in
    schedule order (unit spacing assumed; normalize the schedule first).
    Returns (net, TrainingLog).
    """
    config.validate()
    marginals = [np.atleast_2d(np.asarray(m, dtype=float)) for m in marginals]
    d = marginals[0].shape[1]
    if any(m.shape[1] != d for m in marginals):
        raise ConfigError("data: marginals disagree on dimension")
    if any(len(m) < config.batch_size for m in marginals):
        raise ConfigError("train.batch_size: exceeds the smallest marginal")
    n_seg = len(marginals) - 1
    if n_seg < 1:
        raise ConfigError("data: need at least two marginals")

    rng = np.random.default_rng(config.seed)
    pool = min(max(len(m) for m in marginals), config.pool_cap)

    # independent product coupling: uniform random pairing across marginals;
    # the start positions stay fixed per pool entry (they are data samples)
    x0 = marginals[0][rng.integers(0, len(marginals[0]), pool)]
    points = np.stack(
        [x0] + [m[rng.integers(0, len(m), pool)] for m in marginals[1:]], axis=1)
    v0 = rng.standard_normal((pool, d))

    net = DriftNet(dim=d, width=config.width, depth=config.depth,
                   n_freqs=config.time_freqs, span=float(n_seg),
                   seed=config.seed, ema_decay=config.ema_decay)
    opt = AdamW(net.params, lr=config.learning_rate,
                weight_decay=config.weight_decay)
    log = TrainingLog()

    for outer in range(1, config.outer_iterations + 1):
        t_start = time.time()
        v0, _ = refine_velocities(points, v0, config.refinement_rounds,
                                  config.sigma, rng,
                                  steps_per_segment=config.steps_per_segment,
                                  truncation_k=config.truncation_k)
        path = build_gaussian_path(points, v0, config.sigma,
                                   truncation_k=config.truncation_k,
                                   h=config.grid_h)
        mixes = lambda_mixes(points, config.truncation_k)

        loss_sum = 0.0
        for _ in range(config.inner_steps):
            idx = rng.integers(0, pool, config.batch_size)
            t = _sample_times(rng, n_seg, config.batch_size)
            X, V = path.sample_at(t, rng, sets=idx)
            targets = acceleration_at_times(t, X, V, points[idx],
                                            config.truncation_k,
                                            mixes=mixes[:, idx])
            loss, grads = net.loss_and_grad(t, X, V, targets)
            if not np.isfinite(loss) or loss > LOSS_ABORT:
                err = TrainingError(
                    f"matching loss diverged at outer {outer}: {loss!r}")
                err.log = log          # partial log, flushed by the caller
                raise err
            opt.step(net.params, grads)
            net.ema_update()
            loss_sum += loss
        mean_loss = loss_sum / config.inner_steps

        # coupling refresh: simulate the learned drift from the data starts
        points = refresh_coupling(net_drift(net), x0, v0, n_seg, config.sigma,
                                  rng, steps_per_segment=config.steps_per_segment,
                                  anchored=config.anchored_refresh,
                                  marginals=marginals)
        w2 = _coupling_w2(points, marginals)

        losses = log.losses + [mean_loss]
        plateau = (len(losses) >= 3
                   and abs(losses[-1] - losses[-3]) <= PLATEAU_RTOL * abs(losses[-3]))
        if plateau and log.plateau_iteration is None:
            log.plateau_iteration = outer
        log.append(outer=outer, loss=mean_loss, w2=w2, plateau=plateau,
                   seconds=time.time() - t_start)
    log.final_coupling = points
    log.start_x0 = x0
    log.start_v0 = v0
    return net, log


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "mmsbm-checkpoint"
CHECKPOINT_VERSION = 1


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape),
            "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).copy()


def config_hash(doc: dict) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode()).hexdigest()[:12]


def save_checkpoint(path, net: DriftNet, config: TrainConfig, outer_iteration: int,
                    start_ensemble: np.ndarray = None, coupling: np.ndarray = None,
                    extra: dict = None):
    """Versioned JSON dump: config, weights, EMA shadow, iteration counter.

    ``start_ensemble`` carries the final refined (x0, v0) pairs used to seed
    evaluation-time simulation.
    """
    state = net.state_dict()
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "config_hash": config_hash(asdict(config)),
        "outer_iteration": int(outer_iteration),
        "net": {
            "dim": state["dim"], "width": state["width"], "depth": state["depth"],
            "n_freqs": state["n_freqs"], "span": state["span"],
            "ema_decay": state["ema_decay"],
            "params": {k: _encode_array(v) for k, v in state["params"].items()},
            "shadow": {k: _encode_array(v) for k, v in state["shadow"].items()},
        },
    }
    if start_ensemble is not None:
        doc["start_ensemble"] = _encode_array(start_ensemble)
    if coupling is not None:
        doc["coupling"] = _encode_array(coupling)
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns (net, doc)."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a recognized checkpoint")
    if doc.get("version", 0) > CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: checkpoint version {doc['version']} too new")
    nd = doc["net"]
    state = {
        "dim": nd["dim"], "width": nd["width"], "depth": nd["depth"],
        "n_freqs": nd["n_freqs"], "span": nd["span"], "ema_decay": nd["ema_decay"],
        "params": {k: _decode_array(v) for k, v in nd["params"].items()},
        "shadow": {k: _decode_array(v) for k, v in nd["shadow"].items()},
    }
    net = DriftNet.from_state_dict(state)
    for key in ("start_ensemble", "coupling"):
        if key in doc:
            doc[key] = _decode_array(doc[key])
    return net, doc
