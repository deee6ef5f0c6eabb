"""Synthetic snapshot generators and CSV ingestion.

Every generator returns a :class:`SnapshotDataset`: an ordered schedule, one
empirical measure per snapshot, and a train/heldout role per time (even
indices train, odd heldout, matching the imputation protocol the evaluation
commands assume).  All generators are deterministic under a fixed generator.

On disk a dataset is a CSV with columns ``time_index, sample_id,
x_0 .. x_{d-1}`` (17 significant digits, lossless for float64) plus a JSON
sidecar manifest ``<stem>.manifest.json`` carrying {"times", "roles",
"dimension"}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .bridge import SnapshotSchedule, normalize_schedule
from .errors import ConfigError, ParseError
from .metrics import EmpiricalMeasure


@dataclass
class SnapshotDataset:
    """Schedule + per-time empirical measures + train/heldout tags."""

    schedule: SnapshotSchedule
    marginals: list                      # of EmpiricalMeasure
    roles: list                          # of "train" | "heldout"

    def __post_init__(self):
        if len(self.marginals) != self.schedule.N + 1:
            raise ValueError("one marginal per schedule time required")
        if len(self.roles) != len(self.marginals):
            raise ValueError("one role per marginal required")
        bad = [r for r in self.roles if r not in ("train", "heldout")]
        if bad:
            raise ValueError(f"unknown roles {bad}")
        dims = {m.dim for m in self.marginals}
        if len(dims) != 1:
            raise ValueError("marginals disagree on dimension")

    @property
    def dim(self) -> int:
        return self.marginals[0].dim

    def indices(self, role: str) -> list:
        return [i for i, r in enumerate(self.roles) if r == role]

    def points(self, i: int) -> np.ndarray:
        return self.marginals[i].points

    def train_schedule(self) -> SnapshotSchedule:
        """Schedule over the training times only (rank-normalized)."""
        idx = self.indices("train")
        return normalize_schedule([self.schedule.raw_times[i] for i in idx])

    def train_points(self) -> list:
        return [self.points(i) for i in self.indices("train")]


def _default_roles(n_times: int) -> list:
    return ["train" if i % 2 == 0 else "heldout" for i in range(n_times)]


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def lv_invariant(states: np.ndarray) -> np.ndarray:
    """Conserved quantity x - ln x + y - ln y of the unit-rate system."""
    x, y = states[..., 0], states[..., 1]
    return x - np.log(x) + y - np.log(y)


LV_DEFAULT_TIMES = tuple(0.6 * k for k in range(9))


def generate_lotka_volterra(rates=(1.0, 1.0, 1.0, 1.0), ic=(2.0, 0.5),
                            ic_jitter: float = 0.1, n_samples: int = 50,
                            times=None, obs_noise: float = 0.01,
                            rng=None) -> SnapshotDataset:
    """Predator-prey snapshots: dx = ax - bxy, dy = dxy - gy.

    Initial conditions jitter multiplicatively around ``ic``; states are
    recorded at ``times`` with additive observation noise.  The all-ones
    rates give a neutral center at (1, 1) whose conserved quantity
    :func:`lv_invariant` the tests use as an oracle.

    The default 9 snapshots span 0..4.8, about two thirds of the orbit at
    the default start: with every second snapshot used for training, each
    training gap then subtends a small enough arc that minimum-energy
    interpolation can track the flow (unit spacing sweeps ~30% of the orbit
    per gap, more curvature than any smooth interpolant recovers).  By the
    time-rescaling symmetry of the system this equals running rate-0.6
    dynamics on integer times.
    """
    a, b, dd, g = rates
    if min(a, b, dd, g) <= 0:
        raise ConfigError("data.params.rates: all rates must be positive")
    if min(ic) <= 0:
        raise ConfigError("data.params.ic: initial state must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    times = np.asarray(list(range(9)) if times is None else times, dtype=float)

    starts = np.asarray(ic) * (1.0 + ic_jitter * rng.uniform(-1, 1, (n_samples, 2)))

    def rhs(_t, z):
        x, y = z[:n_samples], z[n_samples:]
        return np.concatenate([a * x - b * x * y, dd * x * y - g * y])

    sol = solve_ivp(rhs, (times[0], times[-1]), starts.T.reshape(-1),
                    t_eval=times, rtol=1e-9, atol=1e-11, method="RK45")
    if not sol.success:
        raise ConfigError(f"data.params: predator-prey integration failed: {sol.message}")
    states = sol.y.reshape(2, n_samples, len(times)).transpose(2, 1, 0)
    states = states + obs_noise * rng.standard_normal(states.shape)
    marginals = [EmpiricalMeasure(states[i]) for i in range(len(times))]
    return SnapshotDataset(normalize_schedule(times), marginals,
                           _default_roles(len(times)))


def generate_vortex_2d(n_samples: int = 300, times=None,
                       angular_speed: float = np.pi / 4, noise: float = 0.05,
                       arc: float = 2 * np.pi / 3, radius=(0.8, 1.2),
                       rng=None) -> SnapshotDataset:
    """Rotating arc-shaped point cloud, a vortex-current stand-in.

    A base cloud (radii uniform in ``radius``, angles uniform over a lobe of
    width ``arc``) rotates by ``angular_speed`` per unit raw time with fresh
    radial jitter per snapshot.  The lobe keeps the cloud anisotropic so the
    rotation actually moves the marginals.  Sample ids align across times.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    times = np.asarray(list(range(9)) if times is None else times, dtype=float)
    r0 = rng.uniform(radius[0], radius[1], n_samples)
    th0 = rng.uniform(-arc / 2, arc / 2, n_samples)
    marginals = []
    for t in times:
        th = th0 + angular_speed * (t - times[0])
        r = r0 + noise * rng.standard_normal(n_samples)
        marginals.append(EmpiricalMeasure(
            np.stack([r * np.cos(th), r * np.sin(th)], axis=1)))
    return SnapshotDataset(normalize_schedule(times), marginals,
                           _default_roles(len(times)))


def generate_gaussian_mixture_sequence(spec: dict, rng=None) -> SnapshotDataset:
    """Labeled Gaussian blobs per time, for matching smoke tests.

    spec = {"dimension": d, "n_samples": m, "times": [...],
            "marginals": [[{"mean": [...], "std": s, "weight": w}, ...], ...]}
    """
    if rng is None:
        rng = np.random.default_rng(0)
    try:
        d = int(spec["dimension"])
        m = int(spec["n_samples"])
        times = [float(t) for t in spec["times"]]
        comp_lists = spec["marginals"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"data.params.spec: malformed mixture spec ({exc})")
    if len(comp_lists) != len(times):
        raise ConfigError("data.params.spec: one component list per time required")
    marginals = []
    for comps in comp_lists:
        if not comps:
            raise ConfigError("data.params.spec: empty component list")
        w = np.array([float(c.get("weight", 1.0)) for c in comps])
        w = w / w.sum()
        means = np.array([np.broadcast_to(np.asarray(c["mean"], dtype=float), (d,))
                          for c in comps])
        stds = np.array([float(c.get("std", 0.0)) for c in comps])
        pick = rng.choice(len(comps), size=m, p=w)
        pts = means[pick] + stds[pick, None] * rng.standard_normal((m, d))
        marginals.append(EmpiricalMeasure(pts))
    return SnapshotDataset(normalize_schedule(times), marginals,
                           _default_roles(len(times)))


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def _manifest_path(path) -> Path:
    return Path(path).with_suffix(".manifest.json")


def write_csv(dataset: SnapshotDataset, path):
    """Lossless dump: CSV of samples plus the JSON sidecar manifest."""
    path = Path(path)
    d = dataset.dim
    header = "time_index,sample_id," + ",".join(f"x_{j}" for j in range(d))
    lines = [header]
    for n, meas in enumerate(dataset.marginals):
        for i, row in enumerate(meas.points):
            vals = ",".join(f"{v:.17g}" for v in row)
            lines.append(f"{n},{i},{vals}")
    path.write_text("\n".join(lines) + "\n")
    manifest = {"times": list(dataset.schedule.raw_times),
                "roles": list(dataset.roles),
                "dimension": d}
    _manifest_path(path).write_text(json.dumps(manifest, indent=1) + "\n")


def read_csv(path) -> SnapshotDataset:
    """Parse a snapshot CSV (+ manifest when present) back into a dataset.

    Without a manifest, times default to the integer time indices and every
    snapshot is tagged train.  Raises ParseError naming the offending line.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ParseError(f"{path}:1: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    if header[:2] != ["time_index", "sample_id"] or len(header) < 3:
        raise ParseError(f"{path}:1: expected header 'time_index,sample_id,x_0,...'")
    d = len(header) - 2
    expected_x = [f"x_{j}" for j in range(d)]
    if header[2:] != expected_x:
        raise ParseError(f"{path}:1: coordinate columns must be {expected_x}")

    by_time: dict = {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != d + 2:
            raise ParseError(f"{path}:{ln}: expected {d + 2} cells, got {len(cells)}")
        try:
            n = int(cells[0])
            i = int(cells[1])
            xs = [float(c) for c in cells[2:]]
        except ValueError as exc:
            raise ParseError(f"{path}:{ln}: non-numeric cell ({exc})")
        by_time.setdefault(n, []).append((i, xs))

    if not by_time:
        raise ParseError(f"{path}:2: no data rows")
    time_keys = sorted(by_time)
    if time_keys != list(range(len(time_keys))):
        raise ParseError(f"{path}: time_index values must cover 0..{len(time_keys) - 1}, "
                         f"got {time_keys}")

    manifest = _manifest_path(path)
    if manifest.exists():
        meta = json.loads(manifest.read_text())
        times = [float(t) for t in meta["times"]]
        roles = list(meta["roles"])
        if len(times) != len(time_keys):
            raise ParseError(f"{manifest}: {len(times)} times for {len(time_keys)} "
                             "snapshots in the CSV")
        if int(meta.get("dimension", d)) != d:
            raise ParseError(f"{manifest}: dimension {meta['dimension']} does not "
                             f"match the CSV ({d})")
    else:
        times = [float(n) for n in time_keys]
        roles = ["train"] * len(time_keys)

    marginals = []
    for n in time_keys:
        rows = sorted(by_time[n])
        marginals.append(EmpiricalMeasure(np.array([xs for _, xs in rows])))
    return SnapshotDataset(normalize_schedule(times), marginals, roles)
