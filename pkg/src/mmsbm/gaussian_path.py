"""Gaussian marginal path of the pinned bridge, sampled without SDE runs.

Conditioned on a pinned tuple, the bridge is a linear SDE, so its law at any
time is Gaussian with mean following the deterministic bridge dynamics and a
2x2 per-dimension covariance obeying a Lyapunov system:

    d(mu_x)/dt = mu_v
    d(mu_v)/dt = C1 (mu_x - xbar_{n+1}) + C2 mu_v + C3 * mix_n
    d(S_xx)/dt = 2 S_xv
    d(S_xv)/dt = C1 S_xx + C2 S_xv + S_vv
    d(S_vv)/dt = 2 C1 S_xv + 2 C2 S_vv + sigma^2

The covariance never reads the pinned values (it depends on the schedule and
sigma only), so it is integrated once per schedule and cached together with
its Cholesky factors.  Means are integrated per pinned tuple; states are then
drawn as

    x = mu_x + L_xx e0,   v = mu_v + L_xv e0 + L_vv e1,

with independent standard normals e0, e1.

The gains blow up like C1 ~ -3/tau^2, C2 ~ 3/tau at each segment's right
endpoint, which makes fixed-step explicit integration through a pin either
unstable or badly biased (a frozen-gain guard window relaxes S_vv toward the
wrong equilibrium).  The walk therefore uses classical RK4 with steps shrunk
proportionally to the remaining distance inside a window around the pin, and
crosses the pin itself with the exact degenerate limit: positions pin, so
(S_xx, S_xv) -> (0, 0) while S_vv stays finite, and the mean continues with
its integrated state.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .bridge import PhaseState, _as_points, c_kernel, lambda_mixes
from .errors import NumericalError

DEFAULT_GRID_H = 1e-3

# pin-approach controls: substep inside |tau| <= _WINDOW, step ~ |tau|/_RATIO,
# stop integrating at |tau| = _TAU_STOP and cross with the degenerate limit
_WINDOW = 0.05
_RATIO = 20.0
_TAU_STOP = 1e-4

_cov_cache: dict = {}
_cov_lock = threading.Lock()


def make_grid(n_segments: int, h: float = DEFAULT_GRID_H):
    """Uniform grid over [0, N] whose nodes hit every pinned time exactly."""
    per_seg = max(1, round(1.0 / h))
    k_total = n_segments * per_seg
    return np.arange(k_total + 1) / per_seg, per_seg


def _walk_segment(rhs, y, per_seg: int, store):
    """March one unit segment node-to-node, substepping near the pin.

    rhs(tau, y) -> dy/dt for tuple-of-arrays state y; store(k, y) is called
    for nodes k = 1 .. per_seg, the last one holding the state at tau =
    -_TAU_STOP (the caller applies the pin-crossing limit).
    """
    hh = 1.0 / per_seg

    def rk4(tau, y, h):
        k1 = rhs(tau, y)
        k2 = rhs(tau + h / 2, tuple(a + h / 2 * b for a, b in zip(y, k1)))
        k3 = rhs(tau + h / 2, tuple(a + h / 2 * b for a, b in zip(y, k2)))
        k4 = rhs(tau + h, tuple(a + h * b for a, b in zip(y, k3)))
        return tuple(a + h / 6 * (b + 2 * c + 2 * d + e)
                     for a, b, c, d, e in zip(y, k1, k2, k3, k4))

    for k in range(per_seg):
        tau0 = (k - per_seg) * hh
        tau1 = tau0 + hh
        target = min(tau1, -_TAU_STOP)
        if tau1 <= -_WINDOW:
            y = rk4(tau0, y, hh)
        else:
            tau = tau0
            while tau < target - 1e-15:
                h = min(max(-tau / _RATIO, 1e-7), target - tau)
                y = rk4(tau, y, h)
                tau += h
        store(k + 1, y)
    return y


def mean_paths(points: np.ndarray, v0: np.ndarray, truncation_k=None,
               h: float = DEFAULT_GRID_H):
    """Integrate the deterministic bridge dynamics for a batch of pins.

    points: (B, N+1, d); v0: (B, d).  Returns (grid, MX, MV) with state
    arrays of shape (K+1, B, d); mu_x hits each pinned position to
    O(h + guard width).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 2:
        points = points[None]
    v0 = np.asarray(v0, dtype=float)
    if v0.ndim == 1:
        v0 = v0[None]
    B, n_marg, d = points.shape
    n_seg = n_marg - 1
    grid, per_seg = make_grid(n_seg, h)

    mixes = lambda_mixes(points, truncation_k)      # (N, B, d)
    MX = np.empty((len(grid), B, d))
    MV = np.empty_like(MX)
    MX[0], MV[0] = points[:, 0], v0
    state = (points[:, 0].copy(), v0.copy())
    for n in range(n_seg):
        nf = n_seg - n if truncation_k is None else min(n_seg - n, int(truncation_k))
        target = points[:, n + 1]
        mix = mixes[n]
        base = n * per_seg

        def rhs(tau, y, nf=nf, target=target, mix=mix):
            x, v = y
            c1, c2, c3 = c_kernel(nf, tau)
            return v, c1 * (x - target) + c2 * v + c3 * mix

        def store(k, y, base=base):
            MX[base + k], MV[base + k] = y

        state = _walk_segment(rhs, state, per_seg, store)
    return grid, MX, MV


def mean_path(pinned, v0, truncation_k=None, h: float = DEFAULT_GRID_H):
    """Single-tuple convenience wrapper; returns (grid, mu_x, mu_v) of (K+1, d)."""
    points = _as_points(pinned)
    grid, MX, MV = mean_paths(points[None], np.atleast_1d(v0)[None],
                              truncation_k=truncation_k, h=h)
    return grid, MX[:, 0], MV[:, 0]


def covariance_path(n_segments: int, sigma: float, h: float = DEFAULT_GRID_H):
    """Integrate the shared covariance system from Sigma(0) = 0.

    Returns (grid, cov, chol); cov rows hold (S_xx, S_xv, S_vv), chol rows
    the lower-triangular factors (L_xx, L_xv, L_vv).  Positions pin at each
    snapshot, so the pin nodes carry exactly (0, 0, S_vv).  Cached per
    (n_segments, sigma, h); safe for concurrent reads once built.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    key = (int(n_segments), float(sigma), float(h))
    hit = _cov_cache.get(key)
    if hit is not None:
        return hit
    with _cov_lock:
        hit = _cov_cache.get(key)
        if hit is not None:
            return hit
        grid, per_seg = make_grid(n_segments, h)
        cov = np.zeros((len(grid), 3))
        s2 = sigma ** 2
        state = (np.zeros(1), np.zeros(1), np.zeros(1))
        for n in range(n_segments):
            nf = n_segments - n
            base = n * per_seg

            def rhs(tau, y, nf=nf):
                sxx, sxv, svv = y
                c1, c2, _ = c_kernel(nf, tau)
                return (2 * sxv,
                        c1 * sxx + c2 * sxv + svv,
                        2 * c1 * sxv + 2 * c2 * svv + s2)

            def store(k, y, base=base):
                cov[base + k] = [y[0][0], y[1][0], y[2][0]]

            state = _walk_segment(rhs, state, per_seg, store)
            # cross the pin: positions are pinned there in the hard limit
            state = (np.zeros(1), np.zeros(1), state[2].copy())
            cov[base + per_seg, 0:2] = 0.0
        _validate_cov(cov)
        chol = _cholesky_2x2(cov)
        _cov_cache[key] = (grid, cov, chol)
        return _cov_cache[key]


def _validate_cov(cov: np.ndarray):
    if np.any(cov[:, 0] < -1e-8) or np.any(cov[:, 2] < -1e-8):
        raise NumericalError("covariance integration produced a negative variance")
    det = cov[:, 0] * cov[:, 2] - cov[:, 1] ** 2
    if np.any(det < -1e-8 * np.maximum(cov[:, 0] * cov[:, 2], 1.0)):
        raise NumericalError("covariance integration lost positive semi-definiteness")


def _cholesky_2x2(cov: np.ndarray) -> np.ndarray:
    """Row-wise factors of [[S_xx, S_xv], [S_xv, S_vv]] with PSD clamping."""
    sxx = np.maximum(cov[:, 0], 0.0)
    lxx = np.sqrt(sxx)
    lxv = np.divide(cov[:, 1], lxx, out=np.zeros_like(lxx), where=lxx > 1e-150)
    lvv = np.sqrt(np.maximum(cov[:, 2] - lxv ** 2, 0.0))
    return np.stack([lxx, lxv, lvv], axis=1)


@dataclass
class GaussianPath:
    """Frozen mean/covariance trajectory of a batch of conditioned bridges.

    All arrays live on one uniform grid; immutable after construction, so
    concurrent sampling with independent generators is safe.
    """

    grid: np.ndarray                 # (K+1,)
    mu_x: np.ndarray                 # (K+1, B, d)
    mu_v: np.ndarray                 # (K+1, B, d)
    cov: np.ndarray                  # (K+1, 3)
    chol: np.ndarray                 # (K+1, 3)
    sigma: float
    n_segments: int = field(default=0)

    def __post_init__(self):
        if self.n_segments == 0:
            self.n_segments = int(round(self.grid[-1]))

    @property
    def batch(self) -> int:
        return self.mu_x.shape[1]

    @property
    def dim(self) -> int:
        return self.mu_x.shape[2]

    def _locate(self, times):
        h = self.grid[1] - self.grid[0]
        pos = np.clip(np.asarray(times, dtype=float), 0.0, self.grid[-1]) / h
        k = np.minimum(pos.astype(int), len(self.grid) - 2)
        return k, pos - k

    def mean_at(self, times, sets=None):
        """Linear interpolation of the mean; times (M,), sets (M,) indices."""
        times = np.atleast_1d(times)
        k, w = self._locate(times)
        if sets is None:
            sets = np.zeros(len(times), dtype=int)
        w = w[:, None]
        mx = (1 - w) * self.mu_x[k, sets] + w * self.mu_x[k + 1, sets]
        mv = (1 - w) * self.mu_v[k, sets] + w * self.mu_v[k + 1, sets]
        return mx, mv

    def chol_at(self, times):
        times = np.atleast_1d(times)
        k, w = self._locate(times)
        w = w[:, None]
        return (1 - w) * self.chol[k] + w * self.chol[k + 1]

    def sample_at(self, times, rng, sets=None):
        """Draw (X, V) of shape (M, d) at per-element times/tuple indices."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        mx, mv = self.mean_at(times, sets)
        L = self.chol_at(times)
        e0 = rng.standard_normal(mx.shape)
        e1 = rng.standard_normal(mx.shape)
        X = mx + L[:, 0:1] * e0
        V = mv + L[:, 1:2] * e0 + L[:, 2:3] * e1
        return X, V


def build_gaussian_path(pinned, v0, sigma: float, truncation_k=None,
                        h: float = DEFAULT_GRID_H) -> GaussianPath:
    """Assemble the conditional Gaussian path for one tuple or a batch."""
    points = _as_points(pinned)
    if points.ndim == 2:
        points = points[None]
    v0 = np.asarray(v0, dtype=float)
    if v0.ndim == 1:
        v0 = v0[None]
    grid, MX, MV = mean_paths(points, v0, truncation_k=truncation_k, h=h)
    _, cov, chol = covariance_path(points.shape[1] - 1, sigma, h=h)
    return GaussianPath(grid=grid, mu_x=MX, mu_v=MV, cov=cov, chol=chol,
                        sigma=float(sigma), n_segments=points.shape[1] - 1)


def sample_state(t: float, path: GaussianPath, rng) -> PhaseState:
    """Draw one phase state from the path at time t (first tuple of the batch)."""
    X, V = path.sample_at(np.array([t]), rng)
    return PhaseState(X[0], V[0])
