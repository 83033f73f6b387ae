"""Cross-clip tracking over aligned clip queries.

The (K, N, D) query tensor is refined by blocks of trajectory attention
(clip index as the frame axis, query index as the attended axis) and a
temporal pyramid of dilated convolutions; a temporally smoothed class
head and whole-video mask multiplication produce the offline prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import LN_EPS, AttentionParams, attention_params, prenorm, trajectory_pass_1d
from .errors import ConfigError, DimensionError
from .segmenter import PipelineParams, Tube, link_video
from .tensor import (
    MacCounter,
    as_array,
    atrous_conv1d,
    layer_norm,
    logistic,
    require_finite,
    softmax_last,
)


def _validate_query_tensor(z: np.ndarray) -> None:
    if z.ndim != 3:
        raise DimensionError(f"expected an aligned (K, N, D) query tensor, got {z.shape}")
    require_finite(z, "query tensor")


@dataclass
class AsppParams:
    """Three dilated temporal branches, a fusing projection, and a layer norm."""

    kernels: list[np.ndarray]      # three (taps, D, D) stacks
    rates: tuple[int, int, int]
    fuse: np.ndarray               # (D, D)
    ln_gamma: np.ndarray           # (D,)
    ln_beta: np.ndarray            # (D,)

    def validate(self, d: int) -> None:
        if len(self.kernels) != 3 or len(self.rates) != 3:
            raise ConfigError("temporal pyramid needs exactly three branches")
        if not (0 < self.rates[0] < self.rates[1] < self.rates[2]):
            raise ConfigError(f"rates must be strictly increasing positive, got {self.rates}")
        for kern in self.kernels:
            if kern.ndim != 3 or kern.shape[1:] != (d, d):
                raise DimensionError(f"branch kernels must be (taps, {d}, {d}), got {kern.shape}")
        if self.fuse.shape != (d, d):
            raise DimensionError(f"fusion projection must be ({d}, {d}), got {self.fuse.shape}")
        if self.ln_gamma.shape != (d,) or self.ln_beta.shape != (d,):
            raise DimensionError("layer-norm parameters must have length D")


@dataclass
class CrossClipBlock:
    attn: AttentionParams
    aspp: AsppParams


def query_trajectory_attention(
    z, params: AttentionParams, *, counter: MacCounter | None = None, return_field: bool = False
):
    """Trajectory attention over clips (frame axis = clip index, attended
    axis = query index), pre-norm residual; shape preserved."""
    z = as_array(z)
    _validate_query_tensor(z)
    y, fld = trajectory_pass_1d(prenorm(z[None]), params, counter=counter)
    out = z + y[0]
    return (out, fld) if return_field else out


def temporal_aspp(z, params: AsppParams) -> np.ndarray:
    """Per track: sum the three dilated convolutions over the clip axis,
    fuse with a 1x1 projection, layer-norm, and add the input."""
    z = as_array(z)
    _validate_query_tensor(z)
    d = z.shape[2]
    params.validate(d)
    n = z.shape[1]
    branch_sum = np.empty_like(z)
    for track in range(n):
        seq = z[:, track, :]
        acc = atrous_conv1d(seq, params.kernels[0], params.rates[0])
        acc += atrous_conv1d(seq, params.kernels[1], params.rates[1])
        acc += atrous_conv1d(seq, params.kernels[2], params.rates[2])
        branch_sum[:, track, :] = acc
    fused = np.einsum("kne,de->knd", branch_sum, params.fuse, optimize=False)
    return z + layer_norm(fused, params.ln_gamma, params.ln_beta, LN_EPS)


def cross_clip_forward(
    z, blocks: list[CrossClipBlock], counter: MacCounter | None = None
) -> np.ndarray:
    """Stack attention and temporal pyramid blocks; zero blocks is the identity."""
    z = as_array(z)
    _validate_query_tensor(z)
    for blk in blocks:
        z = query_trajectory_attention(z, blk.attn, counter=counter)
        z = temporal_aspp(z, blk.aspp)
    return z


def temporal_class_head(z, class_head, kernel) -> np.ndarray:
    """Per-clip class logits smoothed over the clip axis (zero padded),
    averaged across clips, and softmaxed per track. Returns (N, C)."""
    z = as_array(z)
    class_head = as_array(class_head)
    kernel = as_array(kernel)
    _validate_query_tensor(z)
    if class_head.shape[0] != z.shape[2]:
        raise DimensionError(
            f"class head rows {class_head.shape[0]} != query channels {z.shape[2]}"
        )
    if kernel.shape != (3,):
        raise DimensionError(f"smoothing kernel must have 3 taps, got {kernel.shape}")
    logits = np.einsum("knd,dc->knc", z, class_head, optimize=False)
    k = logits.shape[0]
    padded = np.zeros((k + 2,) + logits.shape[1:])
    padded[1:k + 1] = logits
    smoothed = (
        kernel[0] * padded[0:k] + kernel[1] * padded[1:k + 1] + kernel[2] * padded[2:k + 2]
    )
    return softmax_last(smoothed.mean(axis=0))


def offline_inference(video, params: PipelineParams) -> list[Tube]:
    """Whole-video inference from cross-clip-refined queries.

    The near-online chain supplies aligned queries and per-clip features;
    after refinement, each clip's queries multiply that clip's features,
    and the per-clip masks concatenate into span-L tubes (padding frames
    drop off). Classes come from the temporally smoothed head.
    """
    linked = link_video(video, params)
    z = cross_clip_forward(linked.aligned_queries, params.cross_blocks)
    probs = temporal_class_head(z, params.class_head, params.class_kernel)
    n = z.shape[1]
    tubes = []
    for i in range(n):
        per_clip = [
            logistic(np.einsum("d,tdhw->thw", z[k, i], linked.clip_features[k], optimize=False))
            for k in range(z.shape[0])
        ]
        masks = np.concatenate(per_clip, axis=0)[: linked.length]
        tubes.append(Tube(masks, probs[i], track_id=i))
    return tubes


def aspp_params(
    d: int,
    rng: np.random.Generator,
    rates: tuple[int, int, int] = (1, 2, 3),
    taps: int = 3,
    std: float = 0.02,
) -> AsppParams:
    return AsppParams(
        kernels=[rng.normal(0.0, std, size=(taps, d, d)) for _ in range(3)],
        rates=rates,
        fuse=rng.normal(0.0, std, size=(d, d)),
        ln_gamma=np.ones(d),
        ln_beta=np.zeros(d),
    )


def identity_aspp_params(d: int, rates: tuple[int, int, int] = (1, 2, 3)) -> AsppParams:
    """Zero fusion and zero shift make the block an exact identity."""
    return AsppParams(
        kernels=[np.zeros((3, d, d)) for _ in range(3)],
        rates=rates,
        fuse=np.zeros((d, d)),
        ln_gamma=np.ones(d),
        ln_beta=np.zeros(d),
    )


def cross_clip_blocks(
    d: int,
    n_blocks: int,
    rng: np.random.Generator,
    rates: tuple[int, int, int] = (1, 2, 3),
    heads: int = 1,
    scale: float | None = None,
) -> list[CrossClipBlock]:
    return [
        CrossClipBlock(
            attn=attention_params(d, rng, heads=heads, scale=scale),
            aspp=aspp_params(d, rng, rates),
        )
        for _ in range(n_blocks)
    ]
