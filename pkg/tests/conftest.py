"""Shared test helpers: finite-difference oracles and reference forwards."""

import numpy as np
import pytest

from cwpower import autograd as ag


def finite_difference_check(build_loss, tensors, h=1e-6, floor=1e-8):
    """Worst relative deviation between backprop and central differences.

    ``build_loss`` must rebuild the graph from the tensors' current values on
    every call; the tensors are perturbed in place.
    """
    loss = build_loss()
    for t in tensors:
        t.zero_grad()
    loss.backward()
    worst = 0.0
    for t in tensors:
        grad = t.grad if t.grad is not None else np.zeros_like(t.values)
        flat = t.values.reshape(-1)
        grad_flat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            step = h * max(1.0, abs(orig))
            flat[i] = orig + step
            up = float(build_loss().values)
            flat[i] = orig - step
            down = float(build_loss().values)
            flat[i] = orig
            fd = (up - down) / (2.0 * step)
            rel = abs(fd - grad_flat[i]) / max(floor, abs(fd) + abs(grad_flat[i]))
            worst = max(worst, rel)
    return worst


def projection_loss(out: ag.Tensor, direction: np.ndarray) -> ag.Tensor:
    """Smooth scalar functional of an op output: mean squared error against a
    fixed offset, which exercises the backward pass without extra ops."""
    return ag._mean_squared_error(ag.reshape(out, (-1,)), direction.reshape(-1))


def ref_conv1d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Direct k-sum convolution oracle, independent of the im2col path."""
    c_out, c_in, k = weight.shape
    pad = (k - 1) // 2
    t = x.shape[-1]
    xp = np.pad(x, ((0, 0), (pad, pad)))
    out = np.tile(bias[:, None].astype(np.float64), (1, t))
    for kk in range(k):
        out += weight[:, :, kk].astype(np.float64) @ xp[:, kk : kk + t].astype(np.float64)
    return out


def ref_forward(params: dict, x: np.ndarray) -> np.ndarray:
    """Reference model forward for a single [2, T] input, plain numpy."""
    h = x.astype(np.float64)
    i = 1
    while f"conv{i}.weight" in params:
        h = ref_conv1d(h, params[f"conv{i}.weight"].values, params[f"conv{i}.bias"].values)
        h = np.maximum(h, 0.0)
        i += 1
    emb = h.mean(axis=1)
    h = params["fc1.weight"].values.astype(np.float64) @ emb + params["fc1.bias"].values
    h = np.maximum(h, 0.0)
    return params["fc2.weight"].values.astype(np.float64) @ h + params["fc2.bias"].values


def ref_power_db(re: float, im: float, floor: float = 1e-12) -> float:
    return 10.0 * np.log10(max(re * re + im * im, floor))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260810)
