"""Soft-constraint bridge oracle via backward value-function ODEs.

The pinned bridge is the vanishing-cost limit of a linear-quadratic control
problem whose quadratic value-function term P_t and linear term r_t obey

    dP/dt = A P + P A^T - g g^T          (backward, per segment)
    dr/dt = A r

with jump conditions at each pinned time t_n,

    P_n = (P_{n+}^{-1} + R)^{-1},   r_n = P_n (P_{n+}^{-1} r_{n+} - R mbar_n),

terminal data P_N = R^{-1}, r_N = -mbar_N, and soft-cost matrix
R = diag(1/c, c).  The optimal acceleration is the velocity row of
-g g^T P_t^{-1} (m + r_t).

At small c this reproduces the closed forms of :mod:`mmsbm.bridge` (the
relative gap near a pin scales like 3c / (sigma^2 |t - t_pin|^3)), and it
remains exact for schedules with genuinely non-uniform segment lengths,
which the closed forms do not cover.

Both ODEs have polynomial solutions of degree <= 3 per segment (A is
nilpotent), so the fixed-step classical Runge-Kutta integrator used here is
exact up to roundoff; the step count only controls where the walk can stop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bridge import EPS_PIN, PhaseState, PinnedSet, SnapshotSchedule, _as_points
from .errors import NumericalError

_A = np.array([[0.0, 1.0], [0.0, 0.0]])


@dataclass(frozen=True)
class SoftConstraintConfig:
    """Parameters of the soft-constraint relaxation.

    c: pin softness (closed forms are the c -> 0 limit); sigma: diffusion
    scale of the underlying process; ode_steps: fixed RK4 steps per segment.
    """

    c: float = 1e-6
    sigma: float = 1.0
    ode_steps: int = 10_000

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.ode_steps < 1:
            raise ValueError("ode_steps must be >= 1")


def _check_spd(P: np.ndarray, where: str):
    tr, det = P[0, 0] + P[1, 1], P[0, 0] * P[1, 1] - P[0, 1] * P[1, 0]
    disc = math.sqrt(max(tr * tr / 4 - det, 0.0))
    eig_min, eig_max = tr / 2 - disc, tr / 2 + disc
    if eig_min < -1e-9 * max(eig_max, 1.0):
        raise NumericalError(f"P lost positive-definiteness at {where}: eig_min={eig_min:.3e}")
    if det <= 0 or eig_max / max(eig_min, 1e-300) > 1e15:
        raise NumericalError(f"P ill-conditioned at {where}: eig=({eig_min:.3e}, {eig_max:.3e})")


def _rk4_walk(P, r, gg, t_from, t_to, h_nominal):
    """Advance (P, r) backward from t_from to t_to (t_to < t_from)."""
    span = t_from - t_to
    if span <= 0:
        return P, r
    k = max(1, int(math.ceil(span / h_nominal - 1e-12)))
    h = -span / k

    def pdot(P):
        return _A @ P + P @ _A.T - gg

    def rdot(r):
        return _A @ r

    for _ in range(k):
        k1 = pdot(P); k2 = pdot(P + h / 2 * k1); k3 = pdot(P + h / 2 * k2); k4 = pdot(P + h * k3)
        P = P + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        j1 = rdot(r); j2 = rdot(r + h / 2 * j1); j3 = rdot(r + h / 2 * j2); j4 = rdot(r + h * j3)
        r = r + h / 6 * (j1 + 2 * j2 + 2 * j3 + j4)
    return P, r


class FiniteCOracle:
    """Callable acceleration field of the soft-constraint bridge.

    ``pinned`` may be one tuple (N+1, d) or a stack (S, N+1, d); the linear
    term r is integrated for all columns at once while P is shared.
    """

    def __init__(self, schedule: SnapshotSchedule, pinned, config: SoftConstraintConfig,
                 time_axis: str = "normalized"):
        points = _as_points(pinned)
        if points.ndim == 2:
            points = points[None]
        self.points = points                          # (S, N+1, d)
        self.config = config
        if time_axis == "normalized":
            self.times = np.asarray(schedule.normalized_times, dtype=float)
        elif time_axis == "raw":
            self.times = np.asarray(schedule.raw_times, dtype=float)
        else:
            raise ValueError(f"unknown time_axis {time_axis!r}")
        self.n_segments = len(self.times) - 1
        if points.shape[1] != self.n_segments + 1:
            raise ValueError("pinned tuple length does not match the schedule")

        c, sigma = config.c, config.sigma
        self._gg = np.array([[0.0, 0.0], [0.0, sigma ** 2]])
        self._R = np.array([[1.0 / c, 0.0], [0.0, c]])
        S, _, d = points.shape
        self._ncol = S * d
        # columns: pinned positions per (set, dim), velocity rows start at 0
        pin_cols = points.transpose(1, 0, 2).reshape(self.n_segments + 1, self._ncol)

        # backward sweep storing the terminal data of every segment
        P = np.array([[c, 0.0], [0.0, 1.0 / c]])     # R^{-1}
        r = np.stack([-pin_cols[-1], np.zeros(self._ncol)])
        self._P_term = [None] * self.n_segments
        self._r_term = [None] * self.n_segments
        for n in range(self.n_segments - 1, -1, -1):
            self._P_term[n] = P.copy()
            self._r_term[n] = r.copy()
            h_nom = (self.times[n + 1] - self.times[n]) / config.ode_steps
            P, r = _rk4_walk(P, r, self._gg, self.times[n + 1], self.times[n], h_nom)
            if n > 0:
                _check_spd(P, f"t={self.times[n]}")
                P_inv = np.linalg.inv(P)
                P = np.linalg.inv(P_inv + self._R)
                r = P @ (P_inv @ r - self._R @ np.stack(
                    [pin_cols[n], np.zeros(self._ncol)]))
        self._P0, self._r0 = P, r                     # values at the start time

    # -- queries ---------------------------------------------------------

    def _segment_of(self, t: float) -> int:
        n = int(np.searchsorted(self.times, t, side="right") - 1)
        return min(max(n, 0), self.n_segments - 1)

    def _state_at(self, t: float):
        n = self._segment_of(t)
        seg_len = self.times[n + 1] - self.times[n]
        t_eval = min(t, self.times[n + 1] - EPS_PIN * seg_len)
        h_nom = seg_len / self.config.ode_steps
        return _rk4_walk(self._P_term[n].copy(), self._r_term[n].copy(),
                         self._gg, self.times[n + 1], t_eval, h_nom)

    def _accel_from(self, P, r, X, V):
        """X, V: (S, d) -> acceleration (S, d)."""
        m = np.stack([X.reshape(self._ncol), V.reshape(self._ncol)])
        z = np.linalg.solve(P, m + r)
        return (-self.config.sigma ** 2 * z[1]).reshape(self.points.shape[0],
                                                        self.points.shape[2])

    def __call__(self, t: float, m: PhaseState) -> np.ndarray:
        """Acceleration at one phase state, broadcast over pinned tuples.

        Returns (d,) when one pinned tuple was given, else (S, d).
        """
        P, r = self._state_at(t)
        X = np.broadcast_to(m.x, (self.points.shape[0], self.points.shape[2]))
        V = np.broadcast_to(m.v, X.shape)
        a = self._accel_from(P, r, X, V)
        return a[0] if self.points.shape[0] == 1 else a

    def acceleration_at(self, times, X, V) -> np.ndarray:
        """Vectorized profile: times (T,), X, V (T, S, d) -> (T, S, d).

        One backward walk per segment visits the query times in descending
        order, so the cost is one full sweep regardless of T.
        """
        times = np.asarray(times, dtype=float)
        X = np.asarray(X, dtype=float)
        V = np.asarray(V, dtype=float)
        out = np.empty_like(X)
        order = np.argsort(-times)
        segs = np.array([self._segment_of(t) for t in times])
        for n in np.unique(segs):
            idx = order[segs[order] == n]
            seg_len = self.times[n + 1] - self.times[n]
            h_nom = seg_len / self.config.ode_steps
            P, r = self._P_term[n].copy(), self._r_term[n].copy()
            t_cur = self.times[n + 1]
            for i in idx:
                t_eval = min(times[i], self.times[n + 1] - EPS_PIN * seg_len)
                P, r = _rk4_walk(P, r, self._gg, t_cur, t_eval, h_nom)
                t_cur = t_eval
                out[i] = self._accel_from(P, r, X[i], V[i])
        return out

    def r_terminal(self, n: int) -> np.ndarray:
        """Linear term at segment n's right endpoint, columns per (set, dim)."""
        return self._r_term[n].copy()


def finite_c_oracle(schedule: SnapshotSchedule, pinned, config: SoftConstraintConfig,
                    time_axis: str = "normalized") -> FiniteCOracle:
    """Build the soft-constraint acceleration field for the given pins."""
    return FiniteCOracle(schedule, pinned, config, time_axis=time_axis)


def probe_lambda(num_future: int, c: float = 1e-8, sigma: float = 1.0,
                 ode_steps: int = 10_000) -> np.ndarray:
    """Extract the future-pin weights numerically from the oracle.

    The linear term is linear in the pinned positions and its velocity row
    is constant within a segment, so pinning a unit vector at one future
    time (zeros elsewhere) and reading that row at the segment's right
    endpoint yields the corresponding weight.  Converges to the exact
    rational weights as c -> 0; used to cross-check
    :func:`mmsbm.bridge.lambda_vector`.
    """
    from .bridge import normalize_schedule

    if num_future < 1:
        raise ValueError("num_future must be >= 1")
    sched = normalize_schedule(list(range(num_future + 1)))
    pins = np.zeros((num_future, num_future + 1, 1))
    for j in range(num_future):
        pins[j, j + 1, 0] = 1.0
    oracle = FiniteCOracle(sched, pins, SoftConstraintConfig(c=c, sigma=sigma,
                                                             ode_steps=ode_steps))
    # The consistent backward propagation carries the weights negated in the
    # linear term's velocity row (the acceleration assembly flips them back).
    lam = -oracle.r_terminal(0)[1]
    if not np.all(np.isfinite(lam)):
        raise NumericalError("lambda probe diverged; soften c or reduce the horizon")
    return lam
