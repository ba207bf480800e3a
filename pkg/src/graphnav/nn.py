"""Dense-matrix neural layers with exact analytic backprop, Adam, and the action loss.

Everything runs in float64 numpy. Dense layers take (B, n_in) batches; the
graph layer takes a (B, N, N) adjacency with (B, N, n_in) node features.
Backward methods return parameter gradients summed over the batch.
"""

from __future__ import annotations

import math

import numpy as np

RELU = "relu"
TANH = "tanh"
IDENTITY = "identity"
_ACTIVATIONS = (RELU, TANH, IDENTITY)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def he_uniform(rng, n_in: int, n_out: int) -> np.ndarray:
    """Fan-in scaled uniform init for ReLU layers."""
    limit = math.sqrt(6.0 / n_in)
    return rng.uniform(-limit, limit, size=(n_in, n_out))


def glorot_uniform(rng, n_in: int, n_out: int) -> np.ndarray:
    """Fan-average scaled uniform init for tanh/linear layers."""
    limit = math.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_in, n_out))


class DenseLayer:
    """Affine map plus an elementwise activation."""

    def __init__(self, w: np.ndarray, b: np.ndarray, activation: str) -> None:
        _require(activation in _ACTIVATIONS, f"unknown activation {activation!r}")
        w = np.asarray(w, dtype=float)
        b = np.asarray(b, dtype=float)
        _require(w.ndim == 2, f"dense weight must be 2-d, got shape {w.shape}")
        _require(b.shape == (w.shape[1],), f"bias shape {b.shape} does not fit weight {w.shape}")
        self.w = w
        self.b = b
        self.activation = activation

    @classmethod
    def create(cls, rng, n_in: int, n_out: int, activation: str) -> "DenseLayer":
        init = he_uniform if activation == RELU else glorot_uniform
        return cls(init(rng, n_in, n_out), np.zeros(n_out), activation)

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        _require(x.ndim == 2 and x.shape[1] == self.w.shape[0],
                 f"dense layer expects (B, {self.w.shape[0]}), got {x.shape}")
        pre = x @ self.w + self.b
        if self.activation == RELU:
            out = np.maximum(pre, 0.0)
        elif self.activation == TANH:
            out = np.tanh(pre)
        else:
            out = pre
        return out, (x, pre, out)

    def backward(self, cache, upstream: np.ndarray):
        x, pre, out = cache
        up = np.asarray(upstream, dtype=float)
        _require(up.shape == pre.shape, f"upstream shape {up.shape} does not match {pre.shape}")
        if self.activation == RELU:
            dpre = up * (pre > 0.0)
        elif self.activation == TANH:
            dpre = up * (1.0 - out * out)
        else:
            dpre = up
        dw = x.T @ dpre
        db = dpre.sum(axis=0)
        dx = dpre @ self.w.T
        return dx, dw, db

    def kink_margin(self, cache) -> float:
        """Distance of the closest pre-activation to the ReLU kink (inf if smooth)."""
        if self.activation != RELU:
            return np.inf
        pre = cache[1]
        return float(np.abs(pre).min()) if pre.size else np.inf


class GcnLayer:
    """Graph convolution relu(A @ H @ W); no bias, adjacency is a constant."""

    def __init__(self, w: np.ndarray) -> None:
        w = np.asarray(w, dtype=float)
        _require(w.ndim == 2, f"gcn weight must be 2-d, got shape {w.shape}")
        self.w = w

    @classmethod
    def create(cls, rng, n_in: int, n_out: int) -> "GcnLayer":
        return cls(he_uniform(rng, n_in, n_out))

    def forward(self, adj: np.ndarray, h: np.ndarray):
        adj = np.asarray(adj, dtype=float)
        h = np.asarray(h, dtype=float)
        _require(adj.ndim == 3 and adj.shape[1] == adj.shape[2],
                 f"adjacency must be (B, N, N), got {adj.shape}")
        _require(h.ndim == 3 and h.shape[:2] == adj.shape[:2] and h.shape[2] == self.w.shape[0],
                 f"node features must be (B, {adj.shape[1]}, {self.w.shape[0]}), got {h.shape}")
        ah = adj @ h
        pre = ah @ self.w
        return np.maximum(pre, 0.0), (adj, ah, pre)

    def backward(self, cache, upstream: np.ndarray):
        adj, ah, pre = cache
        up = np.asarray(upstream, dtype=float)
        _require(up.shape == pre.shape, f"upstream shape {up.shape} does not match {pre.shape}")
        dpre = up * (pre > 0.0)
        dw = np.tensordot(ah, dpre, axes=([0, 1], [0, 1]))
        dh = np.swapaxes(adj, 1, 2) @ (dpre @ self.w.T)
        return dh, dw

    def kink_margin(self, cache) -> float:
        pre = cache[2]
        return float(np.abs(pre).min()) if pre.size else np.inf


class Mlp:
    """A stack of dense layers applied in order."""

    def __init__(self, layers) -> None:
        self.layers = list(layers)

    @classmethod
    def create(cls, rng, widths, activations) -> "Mlp":
        _require(len(widths) == len(activations) + 1, "widths must be one longer than activations")
        layers = [DenseLayer.create(rng, widths[i], widths[i + 1], act)
                  for i, act in enumerate(activations)]
        return cls(layers)

    def forward(self, x: np.ndarray):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches, upstream: np.ndarray):
        grads = []
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            upstream, dw, db = layer.backward(cache, upstream)
            grads.append((dw, db))
        return upstream, list(reversed(grads))

    def kink_margin(self, caches) -> float:
        return min(layer.kink_margin(cache) for layer, cache in zip(self.layers, caches))


class Adam:
    """Bias-corrected Adam over a named parameter dict, updated in place."""

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        _require(set(grads) == set(self.m), "gradient keys do not match optimizer state")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            _require(g.shape == p.shape, f"gradient shape mismatch for {name}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "m": {k: v.tolist() for k, v in self.m.items()},
            "v": {k: v.tolist() for k, v in self.v.items()},
        }

    @classmethod
    def from_state_dict(cls, state: dict, params: dict) -> "Adam":
        opt = cls(params, lr=state["lr"], beta1=state["beta1"],
                  beta2=state["beta2"], eps=state["eps"])
        opt.t = int(state["t"])
        for field_name, target in (("m", opt.m), ("v", opt.v)):
            saved = state[field_name]
            _require(set(saved) == set(target), f"optimizer {field_name} keys do not match parameters")
            for k in target:
                arr = np.asarray(saved[k], dtype=float)
                _require(arr.shape == target[k].shape,
                         f"optimizer {field_name}[{k}] shape {arr.shape} does not match {target[k].shape}")
                target[k] = arr
        return opt


def action_loss(u: np.ndarray, u_star: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-sample loss (d_steer^2 + d_throttle^2) and its gradient in u."""
    u = np.asarray(u, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    _require(u.shape == u_star.shape == (2,), f"actions must be 2-vectors, got {u.shape} and {u_star.shape}")
    _require(bool(np.all(np.isfinite(u)) and np.all(np.isfinite(u_star))), "non-finite action in loss")
    d = u - u_star
    return float(d @ d), 2.0 * d


def batch_action_loss(u: np.ndarray, targets: np.ndarray, denom: int | None = None):
    """Per-sample losses and the gradient of their mean.

    `denom` overrides the batch size when this slice is part of a larger
    minibatch whose mean is taken over the full batch.
    """
    u = np.asarray(u, dtype=float)
    targets = np.asarray(targets, dtype=float)
    _require(u.shape == targets.shape and u.ndim == 2 and u.shape[1] == 2,
             f"batch actions must be (B, 2), got {u.shape} and {targets.shape}")
    diff = u - targets
    per_sample = (diff * diff).sum(axis=1)
    n = denom if denom is not None else u.shape[0]
    return per_sample, (2.0 / n) * diff
