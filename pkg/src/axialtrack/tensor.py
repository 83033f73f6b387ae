"""Deterministic dense-array primitives on float64 numpy arrays.

Every operation is a pure function with a fixed reduction order, so two
calls on identical inputs are bitwise identical regardless of thread
count. Reductions that feed attention normalizations sum their terms in
ascending value order (`sorted_sum`), which additionally makes them
bitwise-invariant under permutations of the reduced axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

UNIFORM = "uniform"
GAUSSIAN = "gaussian"


def as_array(x) -> np.ndarray:
    """Coerce to a float64 ndarray (no copy when already one)."""
    return np.asarray(x, dtype=np.float64)


def require_finite(x: np.ndarray, what: str = "input") -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{what} contains non-finite values")


def sorted_sum(x: np.ndarray, axis: int = -1, keepdims: bool = False) -> np.ndarray:
    """Sum along `axis` in ascending value order.

    The summand order depends only on the multiset of values, so the
    result is unchanged, bit for bit, when the reduced axis is permuted.
    The memory layout is canonicalized first; summation blocking would
    otherwise depend on the strides of the operand.
    """
    ordered = np.sort(np.ascontiguousarray(x), axis=axis)
    return ordered.sum(axis=axis, keepdims=keepdims)


def matmul(a, b) -> np.ndarray:
    """2-D matrix product accumulated left-to-right over the inner axis.

    c[i, j] is built as ((a[i,0]*b[0,j]) + a[i,1]*b[1,j]) + ... in index
    order, which matches a scalar triple loop ulp for ulp.
    """
    a = as_array(a)
    b = as_array(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    require_finite(a, "matmul lhs")
    require_finite(b, "matmul rhs")
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k, None] * b[k]
    return out


def softmax_last(x) -> np.ndarray:
    """Softmax over the trailing axis, max-shifted for stability.

    Each trailing slice of the result is a probability vector; the
    denominator is a `sorted_sum`, so the op is equivariant under
    permutations of the trailing axis.
    """
    x = as_array(x)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise DimensionError(f"softmax needs a non-empty trailing axis, got shape {x.shape}")
    require_finite(x, "softmax input")
    shifted = x - np.max(x, axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / sorted_sum(ex, axis=-1, keepdims=True)


def layer_norm(x, gamma, beta, eps: float) -> np.ndarray:
    """Normalize the trailing axis (population variance), then scale/shift."""
    x = as_array(x)
    gamma = as_array(gamma)
    beta = as_array(beta)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise DimensionError(f"layer_norm needs a non-empty trailing axis, got shape {x.shape}")
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"gamma/beta must have shape ({d},), got {gamma.shape} and {beta.shape}"
        )
    mean = x.mean(axis=-1, keepdims=True)
    var = np.square(x - mean).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gamma + beta


def atrous_conv1d(x, kernel, rate: int) -> np.ndarray:
    """Dilated 1-D convolution over a (length, channels) sequence.

    `kernel` has shape (taps, out_channels, in_channels) with an odd tap
    count; the input is zero padded so the output keeps its length, and
    taps are accumulated in index order.
    """
    x = as_array(x)
    kernel = as_array(kernel)
    if x.ndim != 2:
        raise DimensionError(f"atrous_conv1d expects a (length, channels) input, got {x.shape}")
    if kernel.ndim != 3:
        raise DimensionError(f"kernel must be (taps, out, in), got {kernel.shape}")
    taps, dout, din = kernel.shape
    if taps % 2 == 0:
        raise ConfigError(f"kernel tap count must be odd, got {taps}")
    if rate < 1:
        raise ConfigError(f"dilation rate must be >= 1, got {rate}")
    if din != x.shape[1]:
        raise DimensionError(f"kernel input channels {din} != sequence channels {x.shape[1]}")
    length = x.shape[0]
    pad = (taps - 1) // 2 * rate
    padded = np.zeros((length + 2 * pad, din))
    padded[pad:pad + length] = x
    out = np.zeros((length, dout))
    for j in range(taps):
        out += np.einsum("le,de->ld", padded[j * rate:j * rate + length], kernel[j], optimize=False)
    return out


def bilinear_sample(feature, points) -> np.ndarray:
    """Sample a (channels, H, W) map at continuous (y, x) points.

    Four-corner interpolation; corners outside the grid contribute zero,
    so the function is total in the coordinates. Returns (points, channels).
    """
    feature = as_array(feature)
    if feature.ndim != 3:
        raise DimensionError(f"bilinear_sample expects (channels, H, W), got {feature.shape}")
    pts = as_array(points).reshape(-1, 2)
    _, h, w = feature.shape
    y = pts[:, 0]
    x = pts[:, 1]
    y0 = np.floor(y).astype(np.int64)
    x0 = np.floor(x).astype(np.int64)
    fy = y - y0
    fx = x - x0
    out = np.zeros((pts.shape[0], feature.shape[0]))
    corners = (
        (0, 0, (1.0 - fy) * (1.0 - fx)),
        (0, 1, (1.0 - fy) * fx),
        (1, 0, fy * (1.0 - fx)),
        (1, 1, fy * fx),
    )
    for oy, ox, wt in corners:
        yi = y0 + oy
        xi = x0 + ox
        inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        yc = np.clip(yi, 0, h - 1)
        xc = np.clip(xi, 0, w - 1)
        vals = feature[:, yc, xc].T
        out += np.where(inside[:, None], wt[:, None] * vals, 0.0)
    return out


def logistic(x) -> np.ndarray:
    """Numerically safe elementwise logistic function."""
    x = as_array(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class MacCounter:
    """Accumulates multiply-accumulate counts keyed by term name."""

    def __init__(self) -> None:
        self.counts: dict[str, int] = {}

    def add(self, key: str, n: int) -> None:
        self.counts[key] = self.counts.get(key, 0) + int(n)

    def get(self, key: str) -> int:
        return self.counts.get(key, 0)

    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class RngSpec:
    """Seeded random stream: same seed and distribution give the same draws.

    `kind` selects uniform(-param, param) or gaussian(0, param).
    """

    seed: int
    kind: str = GAUSSIAN
    param: float = 0.02

    def __post_init__(self) -> None:
        if self.kind not in (UNIFORM, GAUSSIAN):
            raise ConfigError(f"unknown distribution {self.kind!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if not self.param > 0:
            raise ConfigError(f"distribution parameter must be positive, got {self.param}")

    def stream(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))

    def draw(self, shape, stream: np.random.Generator | None = None) -> np.ndarray:
        rng = self.stream() if stream is None else stream
        if self.kind == UNIFORM:
            return rng.uniform(-self.param, self.param, size=shape)
        return rng.normal(0.0, self.param, size=shape)
