"""Axial-trajectory attention.

The core pass runs two attention stages over a (B, T, S, D) sequence:

* stage one attends along the S axis of every target frame separately,
  pooling values into one "trajectory point" per (reference position,
  target frame);
* stage two re-projects the trajectory points and pools them over the
  frame axis, taking the query from the same-frame point.

Axial wrappers run the pass along the height or width axis of a
(T, D, H, W) feature volume, with the other spatial axis acting as a
pure batch axis, inside a pre-norm residual: out = x + pass(norm(x)).

Attention reductions (softmax denominators and weighted sums) run in
ascending value order, so outputs are bitwise-equivariant under
permutations of the attended axis, the batch axis, and the frame axis.
There are no positional encodings anywhere in this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ResourceGuardError
from .tensor import MacCounter, as_array, layer_norm, require_finite, softmax_last, sorted_sum

LN_EPS = 1e-5

# Default size guard for the undecomposed reference pass, expressed as a
# bound on T*H*W (its weight tensor grows with the square of that).
DEFAULT_REFERENCE_CAP = 4096


@dataclass
class ProjectionWeights:
    """Square query/key/value projections with optional biases."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    b_q: np.ndarray | None = None
    b_k: np.ndarray | None = None
    b_v: np.ndarray | None = None

    def validate(self, d: int) -> None:
        for name in ("w_q", "w_k", "w_v"):
            w = getattr(self, name)
            if w.shape != (d, d):
                raise DimensionError(f"{name} must be ({d}, {d}), got {w.shape}")
        for name in ("b_q", "b_k", "b_v"):
            b = getattr(self, name)
            if b is not None and b.shape != (d,):
                raise DimensionError(f"{name} must have shape ({d},), got {b.shape}")


@dataclass
class AttentionParams:
    """Both projection stages plus the score scale and head count."""

    stage1: ProjectionWeights
    stage2: ProjectionWeights
    scale: float
    heads: int = 1

    def validate(self, d: int) -> None:
        if self.heads < 1 or d % self.heads != 0:
            raise DimensionError(f"heads must divide the channel count, got {self.heads} for D={d}")
        self.stage1.validate(d)
        self.stage2.validate(d)


@dataclass
class TrajectoryField:
    """Exported attention state of one pass.

    values: (B, T, T, S, D) pooled trajectory points, indexed by
        (reference frame, target frame, position).
    stage1: (B, T, S, T, S) positional weights, softmax over the last axis.
    stage2: (B, T, S, T) frame-pooling weights, softmax over the last axis.

    With several heads the weights are head averages; values concatenate
    the per-head results back to D channels.
    """

    values: np.ndarray
    stage1: np.ndarray
    stage2: np.ndarray


def _project(x: np.ndarray, w: np.ndarray, b: np.ndarray | None) -> np.ndarray:
    out = np.einsum("...e,de->...d", x, w, optimize=False)
    if b is not None:
        out = out + b
    return out


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    return x.reshape(x.shape[:-1] + (heads, x.shape[-1] // heads))


def _pass_forward(x: np.ndarray, params: AttentionParams, counter: MacCounter | None) -> dict:
    """Run both stages, returning all intermediates for field export and backprop."""
    b, t, s, d = x.shape
    g = params.heads
    c = d // g
    s1, s2, scale = params.stage1, params.stage2, params.scale

    q = _project(x, s1.w_q, s1.b_q)
    k = _project(x, s1.w_k, s1.b_k)
    v = _project(x, s1.w_v, s1.b_v)
    qh = _split_heads(q, g)  # (B,T,S,G,C)
    kh = _split_heads(k, g)
    vh = _split_heads(v, g)

    # Stage one: per target frame u, attend over positions r.
    e1 = scale * np.einsum("btsgc,burgc->bgtsur", qh, kh, optimize=False)
    w1 = softmax_last(e1)  # (B,G,T,S,U,R)
    vh_t = vh.transpose(0, 3, 1, 2, 4)  # (B,G,U,R,C)
    prod1 = w1[..., None] * vh_t[:, :, None, None, :, :, :]
    yt = sorted_sum(prod1, axis=-2)  # (B,G,T,S,U,C)
    ytil = yt.transpose(0, 2, 4, 3, 1, 5).reshape(b, t, t, s, d)  # (B,T,U,S,D)

    # Stage two: re-project, query from the same-frame point, pool over frames.
    idx = np.arange(t)
    ydiag = ytil[:, idx, idx]  # (B,T,S,D)
    qt = _project(ydiag, s2.w_q, s2.b_q)
    kt = _project(ytil, s2.w_k, s2.b_k)
    vt = _project(ytil, s2.w_v, s2.b_v)
    qth = _split_heads(qt, g)  # (B,T,S,G,C)
    kth = _split_heads(kt, g)  # (B,T,U,S,G,C)
    vth = _split_heads(vt, g)
    e2 = scale * np.einsum("btsgc,btusgc->bgtsu", qth, kth, optimize=False)
    w2 = softmax_last(e2)  # (B,G,T,S,U)
    vth_t = vth.transpose(0, 4, 1, 3, 2, 5)  # (B,G,T,S,U,C)
    prod2 = w2[..., None] * vth_t
    yh = sorted_sum(prod2, axis=-2)  # (B,G,T,S,C)
    out = yh.transpose(0, 2, 3, 1, 4).reshape(b, t, s, d)

    if counter is not None:
        counter.add("stage1_scores", e1.size * c)
        counter.add("stage1_values", e1.size * c)
        counter.add("stage2_scores", e2.size * c)
        counter.add("stage2_values", e2.size * c)
        counter.add("proj_stage1", (q.size + k.size + v.size) * d)
        counter.add("proj_stage2", (qt.size + kt.size + vt.size) * d)

    return {
        "x": x, "q": q, "k": k, "v": v, "qh": qh, "kh": kh, "vh": vh,
        "w1": w1, "ytil": ytil, "ydiag": ydiag,
        "qth": qth, "kth": kth, "vth": vth, "w2": w2, "out": out,
    }


def trajectory_pass_1d(
    seq, params: AttentionParams, counter: MacCounter | None = None
) -> tuple[np.ndarray, TrajectoryField]:
    """Two-stage trajectory attention over a (B, T, S, D) sequence.

    Returns the updated sequence (same shape) and the attention field
    carrying both stages' weights and the pooled trajectory points.
    """
    seq = as_array(seq)
    if seq.ndim != 4:
        raise DimensionError(f"expected a (B, T, S, D) sequence, got shape {seq.shape}")
    require_finite(seq, "trajectory attention input")
    params.validate(seq.shape[-1])
    cache = _pass_forward(seq, params, counter)
    field = TrajectoryField(
        values=cache["ytil"],
        stage1=cache["w1"].mean(axis=1),
        stage2=cache["w2"].mean(axis=1),
    )
    return cache["out"], field


def _validate_clip(f: np.ndarray) -> None:
    if f.ndim != 4:
        raise DimensionError(f"expected (T, D, H, W) clip features, got shape {f.shape}")
    if min(f.shape) < 1:
        raise DimensionError(f"all clip extents must be >= 1, got {f.shape}")


def to_height_sequence(f) -> np.ndarray:
    """Reshape (T, D, H, W) into the (W, T, H, D) height-axis sequence."""
    f = as_array(f)
    _validate_clip(f)
    return np.ascontiguousarray(f.transpose(3, 0, 2, 1))


def from_height_sequence(x) -> np.ndarray:
    """Inverse of `to_height_sequence` (lossless round trip)."""
    return np.ascontiguousarray(as_array(x).transpose(1, 3, 2, 0))


def prenorm(x) -> np.ndarray:
    """Parameter-free layer norm over the channel axis (the residual pre-norm)."""
    d = x.shape[-1]
    return layer_norm(x, np.ones(d), np.zeros(d), LN_EPS)


def axial_trajectory_h(
    f, params: AttentionParams, *, counter: MacCounter | None = None, return_field: bool = False
):
    """Trajectory pass along the height axis with width as batch, pre-norm residual."""
    f = as_array(f)
    _validate_clip(f)
    x = to_height_sequence(f)
    y, fld = trajectory_pass_1d(prenorm(x), params, counter=counter)
    out = f + from_height_sequence(y)
    return (out, fld) if return_field else out


def axial_trajectory_w(
    f, params: AttentionParams, *, counter: MacCounter | None = None, return_field: bool = False
):
    """Trajectory pass along the width axis; the H<->W transpose image of the height pass."""
    f = as_array(f)
    _validate_clip(f)
    ft = np.ascontiguousarray(np.swapaxes(f, 2, 3))
    res = axial_trajectory_h(ft, params, counter=counter, return_field=return_field)
    if return_field:
        out_t, fld = res
        return np.ascontiguousarray(np.swapaxes(out_t, 2, 3)), fld
    return np.ascontiguousarray(np.swapaxes(res, 2, 3))


def full_trajectory_reference(
    f,
    params: AttentionParams,
    *,
    cap: int = DEFAULT_REFERENCE_CAP,
    counter: MacCounter | None = None,
    return_field: bool = False,
):
    """Undecomposed trajectory attention over the joint H*W axis.

    Stage one attends over all H*W positions of each target frame, so the
    cost grows with (T*H*W)^2; inputs with T*H*W above `cap` are refused.
    """
    f = as_array(f)
    _validate_clip(f)
    t, d, h, w = f.shape
    if t * h * w > cap:
        raise ResourceGuardError(
            f"reference pass refused: T*H*W = {t * h * w} exceeds cap {cap}"
        )
    x = np.ascontiguousarray(f.transpose(0, 2, 3, 1).reshape(1, t, h * w, d))
    y, fld = trajectory_pass_1d(prenorm(x), params, counter=counter)
    out = f + y.reshape(t, h, w, d).transpose(0, 3, 1, 2)
    return (out, fld) if return_field else out


def projection_weights(
    d: int, rng: np.random.Generator, std: float = 0.02, bias: bool = False
) -> ProjectionWeights:
    """Gaussian-initialized projections (bias vectors optional)."""
    def mat() -> np.ndarray:
        return rng.normal(0.0, std, size=(d, d))

    def vec() -> np.ndarray | None:
        return rng.normal(0.0, std, size=d) if bias else None

    return ProjectionWeights(mat(), mat(), mat(), vec(), vec(), vec())


def attention_params(
    d: int,
    rng: np.random.Generator,
    heads: int = 1,
    scale: float | None = None,
    std: float = 0.02,
    bias: bool = False,
) -> AttentionParams:
    """Random attention parameters; scale defaults to 1/sqrt(D)."""
    if scale is None:
        scale = 1.0 / np.sqrt(d)
    return AttentionParams(
        stage1=projection_weights(d, rng, std, bias),
        stage2=projection_weights(d, rng, std, bias),
        scale=float(scale),
        heads=heads,
    )


def passthrough_attention_params(d: int, scale: float | None = None) -> AttentionParams:
    """Identity stage-one projections with a zero stage-two value projection.

    The residual pass then returns its input unchanged while still
    producing informative stage-one weights, which is what the oracle
    pipeline and the heatmap dumps rely on.
    """
    if scale is None:
        scale = 1.0 / np.sqrt(d)
    eye = np.eye(d)
    return AttentionParams(
        stage1=ProjectionWeights(eye.copy(), eye.copy(), eye.copy()),
        stage2=ProjectionWeights(eye.copy(), eye.copy(), np.zeros((d, d))),
        scale=float(scale),
        heads=1,
    )
