"""Hand-written forward/backward kernels for the Siamese 1-D CNN.

Activations are numpy arrays laid out ``(batch, time, channels)``; a 2-D
``(time, channels)`` array is accepted wherever a single series makes sense.
Every ``*_forward`` returns ``(output, cache)`` and the matching
``*_backward`` consumes that cache.  Learnable arrays live in :class:`Param`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BCE_EPS = 1e-7
BN_MOMENTUM = 0.9
BN_EPS = 1e-5


class ShapeError(ValueError):
    """Raised when operand shapes are inconsistent."""


class MissingCacheError(RuntimeError):
    """Raised when a backward pass is attempted without its forward cache."""


class MissingGradError(RuntimeError):
    """Raised by the optimizer when a parameter has no gradient."""


@dataclass
class Param:
    """A named learnable array together with its accumulated gradient."""

    name: str
    value: np.ndarray
    grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def accumulate(self, g):
        if g.shape != self.value.shape:
            raise ShapeError(f"gradient for {self.name} has shape {g.shape}, expected {self.value.shape}")
        if self.grad is None:
            self.grad = g.astype(self.value.dtype, copy=True)
        else:
            self.grad += g


def _batched(x):
    x = np.asarray(x)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError(f"expected (time, channels) or (batch, time, channels), got shape {x.shape}")
    return x, False


def same_padding(k: int) -> tuple[int, int]:
    """Zero padding (left, right) that keeps the time extent; odd deficits go right."""
    left = (k - 1) // 2
    return left, k - 1 - left


def _im2col(x, k):
    # (B, T, C) -> (B*T, k*C), window index major
    B, T, C = x.shape
    left, right = same_padding(k)
    xp = np.pad(x, ((0, 0), (left, right), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # (B, T, C, k)
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(B * T, k * C)


def _check_conv(x, filters, bias):
    B, T, C = x.shape
    if filters.ndim != 3:
        raise ShapeError(f"filters must be (k, in_channels, out_channels), got {filters.shape}")
    k, fc, O = filters.shape
    if fc != C:
        raise ShapeError(f"input has {C} channels (shape {x.shape}) but filters expect {fc} (shape {filters.shape})")
    if bias.shape != (O,):
        raise ShapeError(f"bias shape {bias.shape} does not match {O} output channels")
    if k > T:
        raise ShapeError(f"filter length {k} exceeds series length {T}")
    return B, T, C, k, O


def conv1d_forward(x, filters, bias):
    """'Same' zero-padded 1-D convolution (cross-correlation).

    ``out[t, o] = bias[o] + sum_{j, c} x[t + j - left, c] * filters[j, c, o]``
    with ``left = (k - 1) // 2`` and out-of-range samples read as zero.
    """
    x, squeeze = _batched(x)
    B, T, C, k, O = _check_conv(x, filters, bias)
    out = (_im2col(x, k) @ filters.reshape(k * C, O)).reshape(B, T, O) + bias
    return out[0] if squeeze else out


def conv1d_backward(grad_out, cached_input, filters):
    """Return ``(grad_input, grad_filters, grad_bias)`` for :func:`conv1d_forward`."""
    if cached_input is None:
        raise MissingCacheError("conv1d_backward called without the cached forward input")
    x, squeeze = _batched(cached_input)
    g, _ = _batched(grad_out)
    B, T, C, k, O = _check_conv(x, filters, np.zeros(filters.shape[-1], filters.dtype))
    if g.shape != (B, T, O):
        raise ShapeError(f"grad_out shape {g.shape} does not match forward output {(B, T, O)}")
    g2 = g.reshape(B * T, O)
    grad_filters = (_im2col(x, k).T @ g2).reshape(k, C, O)
    grad_bias = g2.sum(axis=0)
    gcols = (g2 @ filters.reshape(k * C, O).T).reshape(B, T, k, C)
    left, _ = same_padding(k)
    gpad = np.zeros((B, T + k - 1, C), dtype=gcols.dtype)
    for j in range(k):
        gpad[:, j:j + T] += gcols[:, :, j]
    grad_input = gpad[:, left:left + T]
    if squeeze:
        grad_input = grad_input[0]
    return np.ascontiguousarray(grad_input), grad_filters, grad_bias


def batchnorm1d_forward(x, gamma, beta, running_mean, running_var, train,
                        momentum=BN_MOMENTUM, eps=BN_EPS):
    """Per-channel batch norm with statistics pooled over batch and time.

    In training mode ``running_mean``/``running_var`` are updated in place as
    ``r = momentum * r + (1 - momentum) * batch_stat``.
    """
    x, squeeze = _batched(x)
    C = x.shape[-1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"gamma/beta shapes {gamma.shape}/{beta.shape} do not match {C} channels")
    if train:
        mean = x.mean(axis=(0, 1))
        var = x.var(axis=(0, 1))
        running_mean *= momentum
        running_mean += (1 - momentum) * mean
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(np.maximum(var, 0) + eps)
    xhat = (x - mean) * inv_std
    out = gamma * xhat + beta
    out = out.astype(x.dtype, copy=False)
    cache = (xhat, inv_std, bool(train), squeeze)
    return (out[0] if squeeze else out), cache


def batchnorm1d_backward(grad_out, cache, gamma):
    if cache is None:
        raise MissingCacheError("batchnorm1d_backward called without a forward cache")
    xhat, inv_std, train, squeeze = cache
    g, _ = _batched(grad_out)
    grad_gamma = (g * xhat).sum(axis=(0, 1))
    grad_beta = g.sum(axis=(0, 1))
    gx = g * gamma
    if train:
        m = g.shape[0] * g.shape[1]
        gx = inv_std / m * (m * gx - gx.sum(axis=(0, 1)) - xhat * (gx * xhat).sum(axis=(0, 1)))
    else:
        gx = gx * inv_std
    return (gx[0] if squeeze else gx), grad_gamma, grad_beta


def maxpool1d_forward(x, size: int):
    """Non-overlapping max pooling; trailing ``time % size`` steps are dropped."""
    x, squeeze = _batched(x)
    B, T, C = x.shape
    if size < 1:
        raise ValueError(f"pool size must be >= 1, got {size}")
    if size > T:
        raise ShapeError(f"pool size {size} exceeds series length {T}")
    To = T // size
    win = x[:, :To * size].reshape(B, To, size, C)
    idx = win.argmax(axis=2)
    out = np.take_along_axis(win, idx[:, :, None, :], axis=2)[:, :, 0]
    cache = (idx, T, size, squeeze)
    return (out[0] if squeeze else out), cache


def maxpool1d_backward(grad_out, cache):
    if cache is None:
        raise MissingCacheError("maxpool1d_backward called without a forward cache")
    idx, T, size, squeeze = cache
    g, _ = _batched(grad_out)
    B, To, C = g.shape
    gwin = np.zeros((B, To, size, C), dtype=g.dtype)
    np.put_along_axis(gwin, idx[:, :, None, :], g[:, :, None, :], axis=2)
    gx = np.zeros((B, T, C), dtype=g.dtype)
    gx[:, :To * size] = gwin.reshape(B, To * size, C)
    return gx[0] if squeeze else gx


def dropout_forward(x, rate: float, train: bool, rng: np.random.Generator | None = None):
    """Inverted dropout.  Identity (and ``mask=None``) outside training or at rate 0."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train or rate == 0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / np.asarray(1 - rate, dtype=x.dtype)
    return x * mask, mask


def dropout_backward(grad_out, mask):
    return grad_out if mask is None else grad_out * mask


def relu_forward(x):
    return np.maximum(x, 0), x


def relu_backward(grad_out, cached_input):
    # subgradient at exactly 0 is 0
    return grad_out * (cached_input > 0)


def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(grad_out, out):
    return grad_out * out * (1 - out)


def abs_diff_forward(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"abs_diff operands differ in shape: {a.shape} vs {b.shape}")
    d = a - b
    return np.abs(d), np.sign(d)


def abs_diff_backward(grad_out, sign):
    """Gradients with respect to ``a`` and ``b``."""
    ga = grad_out * sign
    return ga, -ga


def dense_forward(x, weight, bias):
    """``x @ weight + bias`` for ``x`` of shape ``(batch, in)``."""
    if x.shape[-1] != weight.shape[0] or bias.shape != weight.shape[1:]:
        raise ShapeError(f"dense: input {x.shape}, weight {weight.shape}, bias {bias.shape} are inconsistent")
    return x @ weight + bias, x


def dense_backward(grad_out, cached_input, weight):
    """Return ``(grad_input, grad_weight, grad_bias)``."""
    if cached_input is None:
        raise MissingCacheError("dense_backward called without the cached forward input")
    return grad_out @ weight.T, cached_input.T @ grad_out, grad_out.sum(axis=0)


def bce_loss(predicted, target, eps: float = BCE_EPS):
    """Mean binary cross-entropy and its gradient with respect to ``predicted``.

    Predictions are clamped to ``[eps, 1 - eps]``; the gradient is zero where
    the clamp is active.
    """
    p = np.atleast_1d(np.asarray(predicted, dtype=np.float64))
    y = np.atleast_1d(np.asarray(target))
    if p.shape != y.shape:
        raise ShapeError(f"predictions {p.shape} and targets {y.shape} differ in shape")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("bce targets must be 0 or 1")
    pc = np.clip(p, eps, 1 - eps)
    losses = -(y * np.log(pc) + (1 - y) * np.log(1 - pc))
    grad = np.where(p == pc, (pc - y) / (pc * (1 - pc)), 0.0) / p.size
    return float(losses.mean()), grad.reshape(np.shape(predicted))


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def adam_step(params, state: AdamState):
    """One bias-corrected Adam update, in place.  Gradients are left untouched."""
    for p in params:
        if p.grad is None:
            raise MissingGradError(f"parameter {p.name!r} has no gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    lr_t = state.learning_rate * np.sqrt(1 - b2 ** t) / (1 - b1 ** t)
    eps_t = state.epsilon * np.sqrt(1 - b2 ** t)
    for p in params:
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        v = state.v[p.name]
        m *= b1
        m += (1 - b1) * p.grad
        v *= b2
        v += (1 - b2) * (p.grad * p.grad)
        # equivalent to lr * m_hat / (sqrt(v_hat) + eps)
        p.value -= (lr_t * m / (np.sqrt(v) + eps_t)).astype(p.value.dtype, copy=False)
    return params, state
