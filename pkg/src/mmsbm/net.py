"""Residual feedforward drift network with manual reverse-mode gradients.

The learned acceleration a(t, x, v) takes a sinusoidal time embedding
concatenated with the phase state, runs it through residual tanh blocks, and
projects to R^d.  Everything is plain numpy float64: at this scale a
framework buys nothing, and the hand-written backward pass is what the
finite-difference gradient checks exercise.

An exponential-moving-average shadow of all weights is maintained after
every optimizer step; evaluation-time forwards should pass shadow=True.
"""

from __future__ import annotations

import hashlib

import numpy as np


def time_features(t, span: float, n_freqs: int) -> np.ndarray:
    """Embed times as [s, sin(2 pi k s), cos(2 pi k s)], s = t / span."""
    s = np.atleast_1d(np.asarray(t, dtype=float)) / span
    cols = [s[:, None]]
    for k in range(1, n_freqs + 1):
        cols.append(np.sin(2 * np.pi * k * s)[:, None])
        cols.append(np.cos(2 * np.pi * k * s)[:, None])
    return np.concatenate(cols, axis=1)


class DriftNet:
    """a_theta(t, x, v) -> acceleration in R^d."""

    def __init__(self, dim: int, width: int = 128, depth: int = 3,
                 n_freqs: int = 8, span: float = 1.0, seed: int = 0,
                 ema_decay: float = 0.999):
        self.dim = int(dim)
        self.width = int(width)
        self.depth = int(depth)
        self.n_freqs = int(n_freqs)
        self.span = float(span)
        self.ema_decay = float(ema_decay)
        self.in_dim = (1 + 2 * n_freqs) + 2 * dim

        rng = np.random.default_rng(seed)
        p = {}
        p["w_in"] = rng.standard_normal((self.width, self.in_dim)) / np.sqrt(self.in_dim)
        p["b_in"] = np.zeros(self.width)
        for i in range(depth):
            p[f"blk{i}_w1"] = rng.standard_normal((self.width, self.width)) / np.sqrt(self.width)
            p[f"blk{i}_b1"] = np.zeros(self.width)
            p[f"blk{i}_w2"] = rng.standard_normal((self.width, self.width)) * (0.5 / np.sqrt(self.width))
            p[f"blk{i}_b2"] = np.zeros(self.width)
        # zero-init head: the untrained drift is identically zero
        p["w_out"] = np.zeros((self.dim, self.width))
        p["b_out"] = np.zeros(self.dim)
        self.params = p
        self.shadow = {k: v.copy() for k, v in p.items()}

    # -- forward / backward ------------------------------------------------

    def _features(self, t, X, V) -> np.ndarray:
        B = X.shape[0]
        ft = time_features(t, self.span, self.n_freqs)
        if ft.shape[0] == 1 and B > 1:
            ft = np.broadcast_to(ft, (B, ft.shape[1]))
        return np.concatenate([ft, X, V], axis=1)

    def _forward(self, f: np.ndarray, p: dict, keep: bool = False):
        cache = {"f": f} if keep else None
        h = f @ p["w_in"].T + p["b_in"]
        if keep:
            cache["h0"] = h
        for i in range(self.depth):
            u = np.tanh(h @ p[f"blk{i}_w1"].T + p[f"blk{i}_b1"])
            h_new = h + u @ p[f"blk{i}_w2"].T + p[f"blk{i}_b2"]
            if keep:
                cache[f"u{i}"] = u
                cache[f"h{i + 1}"] = h_new
            h = h_new
        y = h @ p["w_out"].T + p["b_out"]
        return (y, cache) if keep else y

    def forward(self, t, X, V, shadow: bool = False, params: dict = None) -> np.ndarray:
        """Deterministic forward pass; t scalar or (B,), X, V (B, d)."""
        p = params if params is not None else (self.shadow if shadow else self.params)
        return self._forward(self._features(t, X, V), p)

    def loss_and_grad(self, t, X, V, targets, params: dict = None):
        """Mean squared acceleration gap and its parameter gradients.

        loss = (1/B) sum_b ||target_b - a(t_b, x_b, v_b)||^2; targets are
        constants (no gradient flows into them).
        """
        p = params if params is not None else self.params
        f = self._features(t, X, V)
        y, cache = self._forward(f, p, keep=True)
        resid = y - np.asarray(targets, dtype=float)
        B = f.shape[0]
        loss = float(np.sum(resid ** 2) / B)

        g = {}
        dy = 2.0 * resid / B
        g["w_out"] = dy.T @ cache[f"h{self.depth}"]
        g["b_out"] = dy.sum(axis=0)
        dh = dy @ p["w_out"]
        for i in range(self.depth - 1, -1, -1):
            u = cache[f"u{i}"]
            h_prev = cache[f"h{i}"] if i > 0 else cache["h0"]
            g[f"blk{i}_w2"] = dh.T @ u
            g[f"blk{i}_b2"] = dh.sum(axis=0)
            du = dh @ p[f"blk{i}_w2"]
            dz = du * (1.0 - u ** 2)
            g[f"blk{i}_w1"] = dz.T @ h_prev
            g[f"blk{i}_b1"] = dz.sum(axis=0)
            dh = dh + dz @ p[f"blk{i}_w1"]
        g["w_in"] = dh.T @ cache["f"]
        g["b_in"] = dh.sum(axis=0)
        return loss, g

    # -- EMA shadow ---------------------------------------------------------

    def ema_update(self):
        """shadow <- decay * shadow + (1 - decay) * weights."""
        d = self.ema_decay
        for k, w in self.params.items():
            if d == 0.0:
                self.shadow[k][...] = w
            else:
                self.shadow[k] *= d
                self.shadow[k] += (1.0 - d) * w

    # -- (de)serialization ----------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "dim": self.dim, "width": self.width, "depth": self.depth,
            "n_freqs": self.n_freqs, "span": self.span, "ema_decay": self.ema_decay,
            "params": {k: v.copy() for k, v in self.params.items()},
            "shadow": {k: v.copy() for k, v in self.shadow.items()},
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "DriftNet":
        net = cls(dim=state["dim"], width=state["width"], depth=state["depth"],
                  n_freqs=state["n_freqs"], span=state["span"],
                  ema_decay=state["ema_decay"])
        for k, v in state["params"].items():
            net.params[k] = np.asarray(v, dtype=float).reshape(net.params[k].shape)
        for k, v in state["shadow"].items():
            net.shadow[k] = np.asarray(v, dtype=float).reshape(net.shadow[k].shape)
        return net

    def param_hash(self) -> str:
        """Digest of the live weights; used to assert no-update invariants."""
        h = hashlib.sha256()
        for k in sorted(self.params):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.params[k]).tobytes())
        return h.hexdigest()


class AdamW:
    """Adaptive moment estimation with decoupled weight decay."""

    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 1e-4):
        self.lr = float(lr)
        self.b1, self.b2 = betas
        self.eps = float(eps)
        self.wd = float(weight_decay)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            params[k] -= self.lr * ((m / bc1) / (np.sqrt(v / bc2) + self.eps)
                                    + self.wd * params[k])
