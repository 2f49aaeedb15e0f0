"""Minimal reverse-mode differentiation over dense numpy arrays.

Provides exactly the operations the burst regressors need: 1-D convolution,
ReLU, adaptive average pooling, fully connected layers, the dB-domain power
loss, and the AdamW optimizer. Parameters and activations default to 32-bit;
reductions accumulate in 64-bit. The whole graph also runs in 64-bit when fed
float64 tensors, which is how the gradient-check suite operates.
"""

from __future__ import annotations

import math

import numpy as np

LOG10 = math.log(10.0)
POWER_DB_FLOOR_MW = 1e-12


class TrainingError(RuntimeError):
    """Raised when optimization encounters non-finite numbers."""


_grad_enabled = True


class no_grad:
    """Context manager disabling graph construction for inference."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_values(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == np.float64:
        return arr
    return arr.astype(np.float32)


class Tensor:
    """Dense real array with a gradient slot and a backward closure."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        self.values = _as_values(values)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += grad.astype(self.values.dtype, copy=False)

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Backpropagate from this node; defaults to a unit seed on scalars."""
        if seed is None:
            if self.values.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            seed = np.ones_like(self.values)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self._accumulate(np.asarray(seed, dtype=self.values.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _make_node(values: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(values)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def relu(x: Tensor) -> Tensor:
    """max(0, x); the subgradient at 0 is taken as 0."""
    mask = x.values > 0

    def backward(grad):
        x._accumulate(grad * mask)

    return _make_node(np.where(mask, x.values, 0), (x,), backward)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor, padding: int) -> Tensor:
    """Stride-1 cross-correlation with symmetric zero padding.

    ``x`` is [C_in, T] or [B, C_in, T]; ``weight`` [C_out, C_in, K] with odd K
    and padding (K-1)/2, so the output time length equals the input's.
    """
    c_out, c_in, k = weight.values.shape
    if k % 2 == 0:
        raise ValueError("kernel size must be odd")
    if padding != (k - 1) // 2:
        raise ValueError("padding must be (K-1)/2 to preserve time length")
    if bias.values.shape != (c_out,):
        raise ValueError("bias shape must be (C_out,)")
    batched = x.values.ndim == 3
    xv = x.values if batched else x.values[None]
    if xv.ndim != 3 or xv.shape[1] != c_in:
        raise ValueError("input must be [C_in, T] or [B, C_in, T] matching the weight")
    b, _, t = xv.shape
    padded = np.pad(xv, ((0, 0), (0, 0), (padding, padding)))
    # windows: [B, C_in, T, K] -> columns [B*T, C_in*K]
    windows = np.lib.stride_tricks.sliding_window_view(padded, k, axis=2)
    cols = windows.transpose(0, 2, 1, 3).reshape(b * t, c_in * k)
    w_mat = weight.values.reshape(c_out, c_in * k)
    out = cols @ w_mat.T + bias.values
    out = out.reshape(b, t, c_out).transpose(0, 2, 1)

    def backward(grad):
        gv = grad if batched else grad[None]
        g_mat = gv.transpose(0, 2, 1).reshape(b * t, c_out)
        if bias.requires_grad:
            bias._accumulate(g_mat.sum(axis=0, dtype=np.float64).astype(bias.values.dtype))
        if weight.requires_grad:
            gw = (g_mat.T @ cols).reshape(c_out, c_in, k)
            weight._accumulate(gw)
        if x.requires_grad:
            gcols = (g_mat @ w_mat).reshape(b, t, c_in, k).transpose(0, 2, 1, 3)
            gpad = np.zeros_like(padded)
            for kk in range(k):
                gpad[:, :, kk : kk + t] += gcols[:, :, :, kk]
            gx = gpad[:, :, padding : padding + t]
            x._accumulate(gx if batched else gx[0])

    values = out if batched else out[0]
    return _make_node(values, (x, weight, bias), backward)


def adaptive_avg_pool(x: Tensor, out_t: int) -> Tensor:
    """Average pooling onto ``out_t`` bins; bin b spans [floor(bT/o), ceil((b+1)T/o))."""
    t = x.values.shape[-1]
    if out_t < 1:
        raise ValueError("out_t must be >= 1")
    if out_t > t:
        raise ValueError("out_t must not exceed the input time length")
    edges = [((b * t) // out_t, -((-(b + 1) * t) // out_t)) for b in range(out_t)]
    pieces = [
        x.values[..., lo:hi].mean(axis=-1, dtype=np.float64).astype(x.values.dtype)
        for lo, hi in edges
    ]
    out = np.stack(pieces, axis=-1)

    def backward(grad):
        gx = np.zeros_like(x.values)
        for b, (lo, hi) in enumerate(edges):
            gx[..., lo:hi] += grad[..., b : b + 1] / (hi - lo)
        x._accumulate(gx)

    return _make_node(out, (x,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map weight @ x + bias for [F_in] or [B, F_in] inputs."""
    f_out, f_in = weight.values.shape
    if x.values.shape[-1] != f_in or bias.values.shape != (f_out,):
        raise ValueError("linear shapes inconsistent")
    out = x.values @ weight.values.T + bias.values

    def backward(grad):
        g2 = grad if grad.ndim == 2 else grad[None]
        x2 = x.values if x.values.ndim == 2 else x.values[None]
        if bias.requires_grad:
            bias._accumulate(g2.sum(axis=0, dtype=np.float64).astype(bias.values.dtype))
        if weight.requires_grad:
            weight._accumulate(g2.T @ x2)
        if x.requires_grad:
            gx = g2 @ weight.values
            x._accumulate(gx if x.values.ndim == 2 else gx[0])

    return _make_node(out, (x, weight, bias), backward)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    out = x.values.reshape(shape)

    def backward(grad):
        x._accumulate(grad.reshape(x.values.shape))

    return _make_node(out, (x,), backward)


def column(x: Tensor, index: int) -> Tensor:
    """Select one entry along the last axis."""
    out = x.values[..., index]

    def backward(grad):
        gx = np.zeros_like(x.values)
        gx[..., index] = grad
        x._accumulate(gx)

    return _make_node(out, (x,), backward)


def power_db(re: Tensor, im: Tensor, floor: float = POWER_DB_FLOOR_MW) -> Tensor:
    """10*log10(max(re^2 + im^2, floor)); zero gradient where clamped."""
    if re.values.shape != im.values.shape:
        raise ValueError("re/im shapes must match")
    p = re.values.astype(np.float64) ** 2 + im.values.astype(np.float64) ** 2
    active = p >= floor
    out = (10.0 * np.log10(np.maximum(p, floor))).astype(re.values.dtype)

    def backward(grad):
        scale = np.where(active, (20.0 / LOG10) / np.maximum(p, floor), 0.0)
        g = grad.astype(np.float64) * scale
        if re.requires_grad:
            re._accumulate((g * re.values).astype(re.values.dtype))
        if im.requires_grad:
            im._accumulate((g * im.values).astype(im.values.dtype))

    return _make_node(out, (re, im), backward)


def _mean_squared_error(x: Tensor, target: np.ndarray) -> Tensor:
    t = np.asarray(target, dtype=np.float64).reshape(x.values.shape)
    diff = x.values.astype(np.float64) - t
    n = max(diff.size, 1)
    out = np.asarray(np.mean(diff**2), dtype=x.values.dtype)

    def backward(grad):
        x._accumulate((float(grad) * (2.0 / n) * diff).astype(x.values.dtype))

    return _make_node(out, (x,), backward)


def mse_db_loss(pred: Tensor, true_powers_dbm, floor: float = POWER_DB_FLOOR_MW) -> Tensor:
    """Mean squared dB-power error of predicted (re, im) gain pairs.

    ``pred`` holds [..., 2] with the real part in column 0 and the imaginary
    part in column 1; the result carries units of dB^2.
    """
    if pred.values.shape[-1] != 2:
        raise ValueError("predictions must have a trailing (re, im) axis of size 2")
    targets = np.asarray(true_powers_dbm, dtype=np.float64)
    if targets.size == 0:
        raise ValueError("loss needs a non-empty batch")
    if targets.size != pred.values.size // 2:
        raise ValueError("batch sizes of predictions and targets differ")
    db = power_db(column(pred, 0), column(pred, 1), floor)
    return _mean_squared_error(db, targets)


def clip_gradient_norm(params: list, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Keeps occasional near-zero-gain loss spikes from poisoning the
    optimizer's second-moment estimates. Returns the pre-clip norm.
    """
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class AdamW:
    """Decoupled-weight-decay Adam with bias-corrected moments."""

    def __init__(
        self,
        params: list,
        lr: float = 2e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 1e-2,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        corr1 = 1.0 - self.beta1**t
        corr2 = 1.0 - self.beta2**t
        for i, p in enumerate(self.params):
            grad = p.grad
            if grad is None:
                grad = np.zeros_like(p.values)
            if not np.all(np.isfinite(grad)):
                raise TrainingError(f"non-finite gradient in parameter {i} at step {t}")
            if self.weight_decay:
                p.values *= 1.0 - self.lr * self.weight_decay
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[i] / corr1
            v_hat = self.v[i] / corr2
            p.values -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.values.dtype)
