"""Dense field kernels: strided convolution, transposed convolution, activations, ADAM.

All math runs in double precision. A field is a numpy array of shape
(rows, cols, channels); kernels also accept a leading batch axis internally.
Gradients are hand-derived per kernel and validated against central finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError

ACTIVATIONS = ("identity", "leaky_relu", "sigmoid", "tanh", "softmax_channels")


def activation(x, kind: str, slope: float = 0.3):
    """Apply an activation elementwise (softmax normalizes across the last axis)."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "identity":
        return x.copy()
    if kind == "leaky_relu":
        return np.where(x > 0, x, slope * x)
    if kind == "sigmoid":
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    if kind == "tanh":
        return np.tanh(x)
    if kind == "softmax_channels":
        shifted = x - x.max(axis=-1, keepdims=True)
        ex = np.exp(shifted)
        return ex / ex.sum(axis=-1, keepdims=True)
    raise ConfigurationError(f"unknown activation kind: {kind!r}")


def activation_grad(z, y, upstream, kind: str, slope: float = 0.3):
    """Gradient of the loss w.r.t. pre-activation z, given y = activation(z)."""
    if kind == "identity":
        return upstream.copy()
    if kind == "leaky_relu":
        return upstream * np.where(z > 0, 1.0, slope)
    if kind == "sigmoid":
        return upstream * y * (1.0 - y)
    if kind == "tanh":
        return upstream * (1.0 - y * y)
    if kind == "softmax_channels":
        inner = (upstream * y).sum(axis=-1, keepdims=True)
        return y * (upstream - inner)
    raise ConfigurationError(f"unknown activation kind: {kind!r}")


@dataclass
class FilterBank:
    """A stack of square filters: weights (k, k, in_channels, out_channels), biases (out_channels,)."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 4 or self.weights.shape[0] != self.weights.shape[1]:
            raise ConfigurationError(f"filter weights must be (k, k, c_in, c_out), got {self.weights.shape}")
        if self.biases.shape != (self.weights.shape[3],):
            raise ConfigurationError(
                f"bias length {self.biases.shape} does not match out-channels {self.weights.shape[3]}"
            )

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[2]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[3]

    def copy(self) -> "FilterBank":
        return FilterBank(self.weights.copy(), self.biases.copy())


def init_filter_bank(k: int, c_in: int, c_out: int, rng: np.random.Generator) -> FilterBank:
    """Fan-based uniform init on +-sqrt(6 / (k*k*(c_in + c_out))); biases start at zero."""
    bound = np.sqrt(6.0 / (k * k * (c_in + c_out)))
    w = rng.uniform(-bound, bound, size=(k, k, c_in, c_out))
    return FilterBank(w, np.zeros(c_out))


def _check_field(x, filters: FilterBank):
    if x.ndim != 4:
        raise ConfigurationError(f"expected (batch, rows, cols, channels), got shape {x.shape}")
    if x.shape[3] != filters.in_channels:
        raise ConfigurationError(
            f"input has {x.shape[3]} channels but filters expect {filters.in_channels}"
        )
    if not np.isfinite(x).all():
        raise NumericError("non-finite values in convolution input")


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    return x, False


def _im2col(x_pad, out_m, out_n, k, stride):
    b, _, _, c = x_pad.shape
    cols = np.empty((b, out_m, out_n, k * k * c), dtype=np.float64)
    for a in range(k):
        for bb in range(k):
            block = x_pad[:, a :: stride, bb :: stride, :][:, :out_m, :out_n, :]
            cols[..., (a * k + bb) * c : (a * k + bb + 1) * c] = block
    return cols


def _col2im(dcols, pad_shape, out_m, out_n, k, stride):
    b, pm, pn, c = pad_shape
    dx_pad = np.zeros(pad_shape, dtype=np.float64)
    for a in range(k):
        for bb in range(k):
            view = dx_pad[:, a :: stride, bb :: stride, :][:, :out_m, :out_n, :]
            view += dcols[..., (a * k + bb) * c : (a * k + bb + 1) * c]
    return dx_pad


def conv_forward_batch(x, filters: FilterBank, stride: int, act: str, slope: float = 0.3,
                       want_cache: bool = False):
    """Strided convolution over a batch. Output dims are ceil(m/stride) x ceil(n/stride).

    Entry (i, j, f) of the output is act(sum over (a, b, c) of
    x[stride*i + a, stride*j + b, c] * w[a, b, c, f] + bias[f]), with indices
    past the input boundary contributing zero.
    """
    _check_field(x, filters)
    b, m, n, c = x.shape
    k = filters.k
    out_m = -(-m // stride)
    out_n = -(-n // stride)
    # large strides can leave trailing rows unread; the pad buffer still must hold them
    pm = max((out_m - 1) * stride + k, m)
    pn = max((out_n - 1) * stride + k, n)
    x_pad = np.zeros((b, pm, pn, c), dtype=np.float64)
    x_pad[:, :m, :n, :] = x
    cols = _im2col(x_pad, out_m, out_n, k, stride)
    w_mat = filters.weights.reshape(k * k * c, filters.out_channels)
    z = cols.reshape(-1, k * k * c) @ w_mat
    z += filters.biases
    z = z.reshape(b, out_m, out_n, filters.out_channels)
    y = activation(z, act, slope)
    if want_cache:
        return y, (cols, z, y, (b, m, n, c), (pm, pn))
    return y


def conv_backward_batch(filters: FilterBank, stride: int, act: str, slope: float,
                        upstream, cache):
    """Gradients of a strided convolution w.r.t. its input, weights, and biases."""
    cols, z, y, (b, m, n, c), (pm, pn) = cache
    if upstream.shape != z.shape:
        raise ConfigurationError(f"upstream gradient shape {upstream.shape} != output shape {z.shape}")
    k = filters.k
    out_m, out_n = z.shape[1], z.shape[2]
    dz = activation_grad(z, y, upstream, act, slope)
    dz_mat = dz.reshape(-1, filters.out_channels)
    w_mat = filters.weights.reshape(k * k * c, filters.out_channels)
    d_bias = dz_mat.sum(axis=0)
    d_w = (cols.reshape(-1, k * k * c).T @ dz_mat).reshape(filters.weights.shape)
    dcols = (dz_mat @ w_mat.T).reshape(b, out_m, out_n, k * k * c)
    dx_pad = _col2im(dcols, (b, pm, pn, c), out_m, out_n, k, stride)
    dx = dx_pad[:, :m, :n, :]
    return dx, d_w, d_bias


def deconv_forward_batch(x, filters: FilterBank, stride: int, act: str, slope: float = 0.3,
                         want_cache: bool = False):
    """Transposed convolution over a batch. Output dims are (stride*m, stride*n).

    Entry (i, j, f) is act(sum over (a, b, c) of
    x[floor(i/stride) + a, floor(j/stride) + b, c] * w[a, b, c, f] + bias[f]),
    out-of-bounds indices contributing zero. Equivalent to a stride-1
    convolution at input resolution followed by stride-fold upsampling.
    """
    _check_field(x, filters)
    b, m, n, c = x.shape
    k = filters.k
    pm, pn = m + k - 1, n + k - 1
    x_pad = np.zeros((b, pm, pn, c), dtype=np.float64)
    x_pad[:, :m, :n, :] = x
    cols = _im2col(x_pad, m, n, k, 1)
    w_mat = filters.weights.reshape(k * k * c, filters.out_channels)
    u = cols.reshape(-1, k * k * c) @ w_mat
    u += filters.biases
    u = u.reshape(b, m, n, filters.out_channels)
    z = np.repeat(np.repeat(u, stride, axis=1), stride, axis=2)
    y = activation(z, act, slope)
    if want_cache:
        return y, (cols, z, y, (b, m, n, c), (pm, pn))
    return y


def deconv_backward_batch(filters: FilterBank, stride: int, act: str, slope: float,
                          upstream, cache):
    """Gradients of a transposed convolution w.r.t. its input, weights, and biases."""
    cols, z, y, (b, m, n, c), (pm, pn) = cache
    if upstream.shape != z.shape:
        raise ConfigurationError(f"upstream gradient shape {upstream.shape} != output shape {z.shape}")
    k = filters.k
    f_out = filters.out_channels
    dz = activation_grad(z, y, upstream, act, slope)
    du = dz.reshape(b, m, stride, n, stride, f_out).sum(axis=(2, 4))
    du_mat = du.reshape(-1, f_out)
    w_mat = filters.weights.reshape(k * k * c, f_out)
    d_bias = du_mat.sum(axis=0)
    d_w = (cols.reshape(-1, k * k * c).T @ du_mat).reshape(filters.weights.shape)
    dcols = (du_mat @ w_mat.T).reshape(b, m, n, k * k * c)
    dx_pad = _col2im(dcols, (b, pm, pn, c), m, n, k, 1)
    dx = dx_pad[:, :m, :n, :]
    return dx, d_w, d_bias


def conv2d_forward(x, filters: FilterBank, stride: int, act: str, slope: float = 0.3):
    """Single-field strided convolution; see conv_forward_batch for the index contract."""
    xb, single = _as_batch(x)
    y = conv_forward_batch(xb, filters, stride, act, slope)
    return y[0] if single else y


def conv2d_backward(x, filters: FilterBank, stride: int, act: str, upstream,
                    slope: float = 0.3):
    """Exact gradients of conv2d_forward. Returns (d_input, d_weights, d_biases)."""
    xb, single = _as_batch(x)
    ub, _ = _as_batch(upstream)
    _, cache = conv_forward_batch(xb, filters, stride, act, slope, want_cache=True)
    dx, dw, db = conv_backward_batch(filters, stride, act, slope, ub, cache)
    return (dx[0] if single else dx), dw, db


def deconv2d_forward(x, filters: FilterBank, stride: int, act: str, slope: float = 0.3):
    """Single-field transposed convolution; see deconv_forward_batch for the contract."""
    xb, single = _as_batch(x)
    y = deconv_forward_batch(xb, filters, stride, act, slope)
    return y[0] if single else y


def deconv2d_backward(x, filters: FilterBank, stride: int, act: str, upstream,
                      slope: float = 0.3):
    """Exact gradients of deconv2d_forward. Returns (d_input, d_weights, d_biases)."""
    xb, single = _as_batch(x)
    ub, _ = _as_batch(upstream)
    _, cache = deconv_forward_batch(xb, filters, stride, act, slope, want_cache=True)
    dx, dw, db = deconv_backward_batch(filters, stride, act, slope, ub, cache)
    return (dx[0] if single else dx), dw, db


@dataclass
class AdamState:
    """Moment accumulators for one parameter list."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                   m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState):
    """One bias-corrected ADAM update. Returns new parameter arrays; mutates state."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ConfigurationError("parameter, gradient, and state lengths differ")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ConfigurationError(f"shape mismatch at parameter {i}: {p.shape} vs {g.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out
