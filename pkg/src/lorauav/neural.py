"""Numpy MLPs with hand-written backprop, Adam, and the factorised policy.

Row-major batches throughout: inputs are ``(batch, features)`` and a layer
computes ``x @ W + b``.
"""
from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def pack(arrays: list[np.ndarray]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Copy arrays into one flat buffer; returns the buffer and views shaped like the inputs."""
    flat = np.concatenate([a.ravel() for a in arrays])
    views, off = [], 0
    for a in arrays:
        views.append(flat[off:off + a.size].reshape(a.shape))
        off += a.size
    return flat, views


def flatten(grads: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([g.ravel() for g in grads])


class Mlp:
    """input -> hidden -> hidden -> output, ReLU on the hidden layers."""

    def __init__(self, n_in: int, n_out: int, hidden: int = 128, rng: np.random.Generator | None = None,
                 out_gain: float = 1.0):
        self.sizes = (n_in, hidden, hidden, n_out)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            gain = out_gain if i == 2 else math.sqrt(2.0)
            self.params += [orthogonal(rng, (a, b), gain), np.zeros(b)]
        self.flat, self.params = pack(self.params)
        self.grad_flat, self.grads = pack([np.zeros_like(p) for p in self.params])
        self._cache = None

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"expected {self.sizes[0]} input features, got {x.shape[1]}")
        w1, b1, w2, b2, w3, b3 = self.params
        z1 = x @ w1 + b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ w2 + b2
        a2 = np.maximum(z2, 0.0)
        self._cache = (x, z1, a1, z2, a2)
        return a2 @ w3 + b3

    def backward(self, grad_out: np.ndarray, out: list[np.ndarray] | None = None) -> list[np.ndarray]:
        """Gradients of ``sum(output * grad_out)`` for the last forward batch.

        Results are written into ``out`` (default: the network's own gradient
        buffer, overwritten by the next call).
        """
        if self._cache is None:
            raise RuntimeError("backward() needs a preceding forward()")
        x, z1, a1, z2, a2 = self._cache
        w1, b1, w2, b2, w3, b3 = self.params
        grads = self.grads if out is None else out
        dw1, db1, dw2, db2, dw3, db3 = grads
        g = np.atleast_2d(grad_out)
        np.matmul(a2.T, g, out=dw3)
        np.sum(g, axis=0, out=db3)
        g = (g @ w3.T) * (z2 > 0)
        np.matmul(a1.T, g, out=dw2)
        np.sum(g, axis=0, out=db2)
        g = (g @ w2.T) * (z1 > 0)
        np.matmul(x.T, g, out=dw1)
        np.sum(g, axis=0, out=db1)
        return grads


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def tanh_log_jacobian(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2), stable for large |u|."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def sample_categorical(logits: np.ndarray, rng: np.random.Generator, normalized: bool = False) -> np.ndarray:
    """One draw per row of a ``(..., k)`` logit array by inverse CDF.

    ``normalized`` skips the softmax when ``logits`` already are log-probabilities.
    """
    p = np.exp(logits if normalized else log_softmax(logits))
    cdf = np.cumsum(p, axis=-1)
    draw = rng.random(logits.shape[:-1] + (1,))
    return np.minimum((draw > cdf).sum(axis=-1), logits.shape[-1] - 1)


def sample_squashed_gaussian(mu: np.ndarray, log_std: np.ndarray, rng: np.random.Generator):
    """Returns the pre-squash sample and its squashed value in (-1, 1)."""
    u = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
    return u, np.tanh(u)


def squashed_gaussian_log_prob(u, mu, log_std):
    z = (u - mu) * np.exp(-log_std)
    return (-0.5 * z**2 - log_std - _HALF_LOG_2PI - tanh_log_jacobian(u)).sum(axis=-1)


class Actor:
    """Per-agent policy: squashed Gaussian movement plus per-device SF and power categoricals."""

    def __init__(self, obs_dim: int, n_devices: int, n_sf: int, n_power: int, hidden: int = 128,
                 rng: np.random.Generator | None = None, log_std_init: float = -0.5):
        self.n_devices, self.n_sf, self.n_power = n_devices, n_sf, n_power
        self.net = Mlp(obs_dim, 3 + n_devices * (n_sf + n_power), hidden, rng, out_gain=0.01)
        self.flat, views = pack(self.net.params + [np.full(3, float(log_std_init))])
        self.net.params, self.log_std = views[:-1], views[-1]
        self.grad_flat, self.grads = pack([np.zeros_like(p) for p in views])
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params + [self.log_std]

    def heads(self, obs: np.ndarray):
        out = self.net.forward(obs)
        b, n = out.shape[0], self.n_devices
        mu = out[:, :3]
        sf_logits = out[:, 3:3 + n * self.n_sf].reshape(b, n, self.n_sf)
        pw_logits = out[:, 3 + n * self.n_sf:].reshape(b, n, self.n_power)
        return mu, sf_logits, pw_logits

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Draw one joint action for a single observation.

        Returns ``(raw_move, sf_choice, power_choice, log_prob, entropy)``;
        the applied movement is ``tanh(raw_move)``.
        """
        mu, sf_logits, pw_logits = self.heads(obs)
        sf_lp, pw_lp = log_softmax(sf_logits), log_softmax(pw_logits)
        u, _ = sample_squashed_gaussian(mu[0], self.log_std, rng)
        sf = sample_categorical(sf_lp[0], rng, normalized=True)
        pw = sample_categorical(pw_lp[0], rng, normalized=True)
        logp, ent = self._score(mu, sf_lp, pw_lp, u[None], sf[None], pw[None], keep=False)
        return u, sf, pw, float(logp[0]), float(ent[0])

    def greedy(self, obs: np.ndarray):
        mu, sf_logits, pw_logits = self.heads(obs)
        return np.tanh(mu[0]), sf_logits[0].argmax(-1), pw_logits[0].argmax(-1)

    def evaluate(self, obs, raw_move, sf, pw, keep: bool = True):
        """Log-probabilities and entropies of given actions, batched over rows."""
        mu, sf_logits, pw_logits = self.heads(obs)
        return self._score(mu, log_softmax(sf_logits), log_softmax(pw_logits), raw_move, np.atleast_2d(sf),
                           np.atleast_2d(pw), keep)

    def _score(self, mu, sf_lp, pw_lp, raw_move, sf, pw, keep):
        raw_move = np.atleast_2d(raw_move)
        rows = np.arange(sf.shape[0])[:, None]
        cols = np.arange(sf.shape[1])[None, :]
        sf_sel = sf_lp[rows, cols, sf]
        pw_sel = pw_lp[rows, cols, pw]
        logp = squashed_gaussian_log_prob(raw_move, mu, self.log_std) + sf_sel.sum(1) + pw_sel.sum(1)
        sf_p, pw_p = np.exp(sf_lp), np.exp(pw_lp)
        sf_h = -(sf_p * sf_lp).sum(-1)
        pw_h = -(pw_p * pw_lp).sum(-1)
        gauss_h = (self.log_std + 0.5 + _HALF_LOG_2PI).sum()
        entropy = gauss_h + sf_h.sum(1) + pw_h.sum(1)
        if keep:
            self._cache = (raw_move, mu, sf, pw, sf_lp, pw_lp, sf_h, pw_h)
        return logp, entropy

    def backward(self, dlogp: np.ndarray, dentropy: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients of ``sum(dlogp*logp + dentropy*entropy)`` for the last evaluate()."""
        if self._cache is None:
            raise RuntimeError("backward() needs a preceding evaluate()")
        raw_move, mu, sf, pw, sf_lp, pw_lp, sf_h, pw_h = self._cache
        dlogp = np.asarray(dlogp, float)[:, None]
        dent = np.asarray(dentropy, float)[:, None]
        var_inv = np.exp(-2.0 * self.log_std)
        diff = raw_move - mu
        d_mu = dlogp * diff * var_inv
        d_log_std = (dlogp * (diff**2 * var_inv - 1.0)).sum(0) + dent.sum()

        b = mu.shape[0]
        rows = np.arange(b)[:, None]
        cols = np.arange(self.n_devices)[None, :]

        def cat_grad(lp, choice, h):
            # d logp = onehot - p ; d entropy = -p (lp + H)
            p = np.exp(lp)
            g = (-dlogp[..., None]) * p - dent[..., None] * p * (lp + h[..., None])
            g[rows, cols, choice] += dlogp
            return g.reshape(b, -1)

        d_sf = cat_grad(sf_lp, sf, sf_h)
        d_pw = cat_grad(pw_lp, pw, pw_h)
        self.net.backward(np.concatenate([d_mu, d_sf, d_pw], axis=1), out=self.grads[:-1])
        self.grads[-1][...] = d_log_std
        return self.grads

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)


class ValueNet:
    """Scalar state-value MLP."""

    def __init__(self, n_in: int, hidden: int = 128, rng: np.random.Generator | None = None):
        self.net = Mlp(n_in, 1, hidden, rng, out_gain=1.0)

    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params

    @property
    def flat(self) -> np.ndarray:
        return self.net.flat

    @property
    def grad_flat(self) -> np.ndarray:
        return self.net.grad_flat

    def value(self, states: np.ndarray) -> np.ndarray:
        return self.net.forward(states)[:, 0]

    def backward(self, dvalue: np.ndarray) -> list[np.ndarray]:
        return self.net.backward(np.asarray(dvalue, float)[:, None])


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._tmp = [np.empty_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        """In-place update of ``params``."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v, tmp in zip(self.params, grads, self.m, self.v, self._tmp):
            np.multiply(g, 1.0 - self.beta1, out=tmp)
            m *= self.beta1
            m += tmp
            np.square(g, out=tmp)
            tmp *= 1.0 - self.beta2
            v *= self.beta2
            v += tmp
            np.sqrt(v, out=tmp)
            tmp *= 1.0 / math.sqrt(c2)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= self.lr / c1
            p -= tmp


def adam_step(params, grads, state: Adam | None = None, lr: float = 3e-4) -> Adam:
    """Functional wrapper: one Adam step, creating the optimizer state on first use."""
    if state is None:
        state = Adam(params, lr)
    state.lr = lr
    state.step(grads)
    return state


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    norm = math.sqrt(sum(float(np.dot(g.ravel(), g.ravel())) for g in grads))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = [g * scale for g in grads]
    return grads, norm


# checkpoint file ------------------------------------------------------------
#
#   b"LUAVCKPT" | u32 version=1 | u32 n_arrays
#   per array: u32 name_len | name (utf-8) | u32 ndim | u64 dims[ndim] | f64 data (C order)
#
# all integers and floats little-endian.

_MAGIC = b"LUAVCKPT"


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<II", 1, len(arrays)))
        for name, arr in arrays.items():
            arr = np.array(arr, dtype="<f8", order="C")
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<II", data, 8)
    if version != 1:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 16
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + n].decode()
        off += n
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).copy()
        off += 8 * size
    return out
