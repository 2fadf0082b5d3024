"""Small fully-connected networks with hand-written backprop.

Everything the actor-critic learner needs: an MLP with a smooth saturating
activation, Adam, and the squashed-Gaussian policy head. Gradients are coded
by hand and checked against central finite differences in the test suite,
which is why every nonlinearity here is smooth (the hidden activation is
x / sqrt(1 + x^2); the log-std bound is tanh-shaped) rather than clipped or
rectified.

Parameters of one network live in a single flat vector with per-layer views,
so optimizer and target-averaging updates are a handful of large vector ops.
The training dtype is configurable: float32 for the hot loop, float64 where
finite-difference comparisons need the headroom.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["MLP", "TwinMLP", "Adam", "SquashedGaussianHead", "ema_update"]

LOG_2PI = math.log(2.0 * math.pi)


class MLP:
    """Feed-forward net: smooth saturating hidden units, linear output.

    ``params`` is the flat list [W0, b0, W1, b1, ...] of views into ``flat``;
    weights initialize uniformly in +-1/sqrt(fan_in).
    """

    def __init__(self, sizes, rng: np.random.Generator | None = None, dtype=np.float64):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.dtype = np.dtype(dtype)
        total = sum((i + 1) * o for i, o in zip(self.sizes[:-1], self.sizes[1:]))
        self.flat = np.zeros(total, dtype=self.dtype)
        self.params: list[np.ndarray] = self._views(self.flat)
        if rng is not None:
            for fan_in, (w, b) in zip(self.sizes[:-1], zip(self.params[0::2], self.params[1::2])):
                bound = 1.0 / math.sqrt(fan_in)
                w[...] = rng.uniform(-bound, bound, size=w.shape)
                b[...] = rng.uniform(-bound, bound, size=b.shape)

    def _views(self, flat: np.ndarray) -> list[np.ndarray]:
        views = []
        off = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            views.append(flat[off : off + fan_in * fan_out].reshape(fan_in, fan_out))
            off += fan_in * fan_out
            views.append(flat[off : off + fan_out])
            off += fan_out
        return views

    def unflatten(self, flat_grad: np.ndarray) -> list[np.ndarray]:
        """Per-parameter views of a flat gradient, aligned with ``params``."""
        return self._views(flat_grad)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray):
        """Returns (output, cache) for a (batch, in)-shaped input."""
        acts = [x]
        h = x
        last = self.n_layers - 1
        for layer in range(self.n_layers):
            z = h @ self.params[2 * layer] + self.params[2 * layer + 1]
            if layer != last:
                r = 1.0 / np.sqrt(1.0 + z * z)  # activation x/sqrt(1+x^2); slope r^3
                h = z * r
                acts.append((h, r))
            else:
                h = z
                acts.append(h)
        return h, acts

    def backward(self, cache, dout: np.ndarray):
        """Gradient of a scalar loss given d(loss)/d(output).

        Returns (flat_grad, dx); ``unflatten`` maps the flat gradient back to
        per-parameter arrays. Each call allocates a fresh gradient buffer.
        """
        flat_grad = np.zeros_like(self.flat)
        grads = self._views(flat_grad)
        delta = dout
        for layer in range(self.n_layers - 1, -1, -1):
            a_in = cache[layer] if layer == 0 else cache[layer][0]
            np.matmul(a_in.T, delta, out=grads[2 * layer])
            delta.sum(axis=0, out=grads[2 * layer + 1])
            delta = delta @ self.params[2 * layer].T
            if layer != 0:
                r = cache[layer][1]
                delta = delta * (r * r * r)
        return flat_grad, delta

    def copy_from(self, other: "MLP") -> None:
        self.flat[...] = other.flat


class TwinMLP:
    """Two same-shaped MLPs evaluated together on a shared input batch.

    Layer parameters are stacked along a leading axis of 2, so one batched
    matmul per layer advances both networks. Used for the twin critics and
    their targets; ``net_params(i)`` exposes each member's parameter views
    individually (e.g. for checkpoints).
    """

    def __init__(self, sizes, rng: np.random.Generator | None = None, dtype=np.float64):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.dtype = np.dtype(dtype)
        total = sum(2 * (i + 1) * o for i, o in zip(self.sizes[:-1], self.sizes[1:]))
        self.flat = np.zeros(total, dtype=self.dtype)
        self.params = self._views(self.flat)  # [(2,in,out), (2,1,out), ...]
        if rng is not None:
            for fan_in, (w, b) in zip(self.sizes[:-1], zip(self.params[0::2], self.params[1::2])):
                bound = 1.0 / math.sqrt(fan_in)
                w[...] = rng.uniform(-bound, bound, size=w.shape)
                b[...] = rng.uniform(-bound, bound, size=b.shape)

    def _views(self, flat: np.ndarray) -> list[np.ndarray]:
        views = []
        off = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            views.append(flat[off : off + 2 * fan_in * fan_out].reshape(2, fan_in, fan_out))
            off += 2 * fan_in * fan_out
            views.append(flat[off : off + 2 * fan_out].reshape(2, 1, fan_out))
            off += 2 * fan_out
        return views

    def net_params(self, i: int, flat: np.ndarray | None = None) -> list[np.ndarray]:
        """Per-parameter views of member ``i`` (weights (in,out), biases (out,))."""
        views = self.params if flat is None else self._views(flat)
        out = []
        for w, b in zip(views[0::2], views[1::2]):
            out.append(w[i])
            out.append(b[i, 0])
        return out

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray):
        """Input (batch, in); returns (output (2, batch, out), cache)."""
        acts = [x]
        h = x  # (batch, in) broadcasts against (2, in, out) on the first layer
        last = self.n_layers - 1
        for layer in range(self.n_layers):
            z = np.matmul(h, self.params[2 * layer]) + self.params[2 * layer + 1]
            if layer != last:
                r = 1.0 / np.sqrt(1.0 + z * z)
                h = z * r
                acts.append((h, r))
            else:
                h = z
                acts.append(h)
        return h, acts

    def backward(self, cache, dout: np.ndarray):
        """Gradients for both members given d(loss)/d(output) of shape (2, batch, out).

        Returns (flat_grad, dx) with dx of shape (2, batch, in): the input
        gradient contributed through each member separately.
        """
        flat_grad = np.zeros_like(self.flat)
        grads = self._views(flat_grad)
        delta = dout
        for layer in range(self.n_layers - 1, -1, -1):
            a_in = cache[layer] if layer == 0 else cache[layer][0]
            if a_in.ndim == 2:  # shared input batch on the first layer
                np.matmul(a_in.T, delta, out=grads[2 * layer])
            else:
                np.matmul(a_in.transpose(0, 2, 1), delta, out=grads[2 * layer])
            np.sum(delta, axis=1, keepdims=True, out=grads[2 * layer + 1])
            delta = np.matmul(delta, self.params[2 * layer].transpose(0, 2, 1))
            if layer != 0:
                r = cache[layer][1]
                delta = delta * (r * r * r)
        return flat_grad, delta

    def copy_from(self, other: "TwinMLP") -> None:
        self.flat[...] = other.flat


class Adam:
    """Standard Adam with bias correction over a network's flat parameters."""

    def __init__(self, net: MLP, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros_like(net.flat)
        self.v = np.zeros_like(net.flat)
        self.t = 0

    def step(self, flat_grad: np.ndarray) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1.0 - b1) * flat_grad
        self.v *= b2
        self.v += (1.0 - b2) * (flat_grad * flat_grad)
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        self.net.flat -= self.lr * (self.m / c1) / (np.sqrt(self.v / c2) + self.eps)


def ema_update(target, source, tau: float) -> None:
    """Polyak averaging over flat parameters: target <- (1-tau)*target + tau*source."""
    target.flat *= 1.0 - tau
    target.flat += tau * source.flat


class SquashedGaussianHead:
    """Maps raw net output [mu | raw] to a tanh-squashed Gaussian action.

    The log standard deviation is bounded smoothly:
        log_std = lo + 0.5 * (hi - lo) * (tanh(raw) + 1)
    and actions are a = a_max * tanh(mu + std * xi) for unit normal xi.
    """

    def __init__(self, act_dim: int, a_max: float, log_std_min: float, log_std_max: float):
        self.act_dim = act_dim
        self.a_max = a_max
        self.lo = log_std_min
        self.half_span = 0.5 * (log_std_max - log_std_min)

    def split(self, out: np.ndarray):
        return out[:, : self.act_dim], out[:, self.act_dim :]

    def log_std(self, raw: np.ndarray) -> np.ndarray:
        return self.lo + self.half_span * (np.tanh(raw) + 1.0)

    def sample(self, out: np.ndarray, xi: np.ndarray):
        """Reparameterized draw. Returns (action, log_prob, cache)."""
        mu, raw = self.split(out)
        t_raw = np.tanh(raw)
        log_std = self.lo + self.half_span * (t_raw + 1.0)
        std = np.exp(log_std)
        u = mu + std * xi
        t_u = np.tanh(u)
        a = self.a_max * t_u
        # log pi(a) = log N(u; mu, std) - sum log |da/du|, with
        # log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)) for stability.
        log_det = 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u)) + math.log(self.a_max)
        log_prob = np.sum(-0.5 * xi**2 - log_std - 0.5 * LOG_2PI - log_det, axis=1)
        cache = (xi, std, u, t_u, t_raw)
        return a, log_prob, cache

    def backward(self, cache, d_action: np.ndarray, d_log_prob: np.ndarray) -> np.ndarray:
        """Gradient wrt the raw net output given gradients at (action, log_prob)."""
        xi, std, u, t_u, t_raw = cache
        dlp = d_log_prob[:, None]
        # d log_prob / du = 2 tanh(u); d a / du = a_max (1 - tanh(u)^2)
        du = d_action * self.a_max * (1.0 - t_u**2) + dlp * (2.0 * t_u)
        d_mu = du
        # u = mu + std * xi, and log_prob carries an explicit -log_std term.
        d_log_std = du * (std * xi) - dlp
        d_raw = d_log_std * self.half_span * (1.0 - t_raw**2)
        return np.concatenate([d_mu, d_raw], axis=1)

    def mean_action(self, out: np.ndarray) -> np.ndarray:
        mu, _ = self.split(out)
        return self.a_max * np.tanh(mu)
