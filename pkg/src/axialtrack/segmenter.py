"""Clip-level segmentation: query decoding, tube prediction, and the
near-online (clip-by-clip) inference chain.

A toy transformer decoder refines per-clip object queries against the
finest pyramid level; each refined query produces one mask tube and one
class distribution. Consecutive clips are linked by minimum-cost
assignment on query cosine similarity, which keeps track ids stable
across the video.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import Assignment, hungarian
from .attention import ProjectionWeights, prenorm, projection_weights
from .deform import WithinClipBlock, build_pyramid, within_clip_forward
from .errors import ConfigError, DimensionError
from .tensor import as_array, logistic, require_finite, softmax_last


@dataclass
class ClipQuerySet:
    """N object queries of one clip."""

    queries: np.ndarray  # (N, D)
    clip_index: int = 0

    def validate(self) -> None:
        if self.queries.ndim != 2 or self.queries.shape[0] < 1:
            raise DimensionError(f"queries must be (N, D) with N >= 1, got {self.queries.shape}")
        require_finite(self.queries, "clip queries")


@dataclass
class Tube:
    """Per-object mask sequence plus a class distribution."""

    masks: np.ndarray       # (span, H, W), values in [0, 1]
    class_probs: np.ndarray  # (C,), sums to 1
    track_id: int

    def validate(self) -> None:
        if self.masks.ndim != 3:
            raise DimensionError(f"tube masks must be (span, H, W), got {self.masks.shape}")
        if np.any(self.masks < 0) or np.any(self.masks > 1):
            raise DimensionError("tube mask values must lie in [0, 1]")
        if abs(float(self.class_probs.sum()) - 1.0) > 1e-9:
            raise DimensionError("class probabilities must sum to 1")

    def binarized(self, threshold: float = 0.5) -> np.ndarray:
        return self.masks > threshold


def split_into_clips(video, t: int) -> list[np.ndarray]:
    """Split (L, D, H, W) frames into ceil(L / t) non-overlapping clips.

    When t does not divide L the last frame is duplicated to fill the
    final clip. Clip length must be at least 2.
    """
    video = as_array(video)
    if video.ndim != 4:
        raise DimensionError(f"video must be (L, D, H, W), got {video.shape}")
    if t < 2:
        raise ConfigError(f"clip length must be >= 2, got {t}")
    length = video.shape[0]
    n_clips = -(-length // t)
    padded = video
    if n_clips * t != length:
        tail = np.repeat(video[-1:], n_clips * t - length, axis=0)
        padded = np.concatenate([video, tail], axis=0)
    return [padded[i * t:(i + 1) * t] for i in range(n_clips)]


@dataclass
class DecoderLayerParams:
    cross: ProjectionWeights
    self_attn: ProjectionWeights
    ffn_w1: np.ndarray  # (hidden, D)
    ffn_w2: np.ndarray  # (D, hidden)
    scale: float


@dataclass
class DecoderParams:
    layers: list[DecoderLayerParams]


def _attend(q: np.ndarray, keys: np.ndarray, proj: ProjectionWeights, scale: float) -> np.ndarray:
    qq = np.einsum("ne,de->nd", q, proj.w_q, optimize=False)
    kk = np.einsum("pe,de->pd", keys, proj.w_k, optimize=False)
    vv = np.einsum("pe,de->pd", keys, proj.w_v, optimize=False)
    if proj.b_q is not None:
        qq = qq + proj.b_q
    if proj.b_k is not None:
        kk = kk + proj.b_k
    if proj.b_v is not None:
        vv = vv + proj.b_v
    weights = softmax_last(scale * np.einsum("nd,pd->np", qq, kk, optimize=False))
    return np.einsum("np,pd->nd", weights, vv, optimize=False)


def decode_clip_queries(f, init: ClipQuerySet, decoder: DecoderParams) -> ClipQuerySet:
    """Refine queries with pre-norm cross-attention, self-attention, and a
    two-layer feed-forward per decoder layer; zero layers return the input."""
    f = as_array(f)
    if f.ndim != 4:
        raise DimensionError(f"clip features must be (T, D, H, W), got {f.shape}")
    init.validate()
    d = init.queries.shape[1]
    if f.shape[1] != d:
        raise DimensionError(f"feature channels {f.shape[1]} != query channels {d}")
    feats = f.transpose(0, 2, 3, 1).reshape(-1, d)
    q = init.queries
    for layer in decoder.layers:
        q = q + _attend(prenorm(q), feats, layer.cross, layer.scale)
        qn = prenorm(q)
        q = q + _attend(qn, qn, layer.self_attn, layer.scale)
        hidden = np.maximum(0.0, np.einsum("ne,he->nh", prenorm(q), layer.ffn_w1, optimize=False))
        q = q + np.einsum("nh,dh->nd", hidden, layer.ffn_w2, optimize=False)
    return ClipQuerySet(q, init.clip_index)


def predict_clip_tubes(queries: ClipQuerySet, f, class_head) -> list[Tube]:
    """One tube per query: per-pixel dot-product mask logits through a
    logistic, class logits through the (D, C) head and a softmax."""
    f = as_array(f)
    class_head = as_array(class_head)
    queries.validate()
    q = queries.queries
    if f.shape[1] != q.shape[1] or class_head.shape[0] != q.shape[1]:
        raise DimensionError(
            f"channel mismatch: queries {q.shape}, features {f.shape}, head {class_head.shape}"
        )
    logits = np.einsum("nd,tdhw->nthw", q, f, optimize=False)
    masks = logistic(logits)
    probs = softmax_last(np.einsum("nd,dc->nc", q, class_head, optimize=False))
    return [Tube(masks[i], probs[i], track_id=i) for i in range(q.shape[0])]


def associate_clips(prev: ClipQuerySet, nxt: ClipQuerySet) -> Assignment:
    """Match queries of consecutive clips by maximal cosine similarity.

    A zero-norm query is treated as orthogonal to everything (cosine 0).
    """
    prev.validate()
    nxt.validate()
    a, b = prev.queries, nxt.queries
    if a.shape != b.shape:
        raise DimensionError(f"query sets must match, got {a.shape} and {b.shape}")
    dots = np.einsum("nd,md->nm", a, b, optimize=False)
    na = np.sqrt(np.einsum("nd,nd->n", a, a, optimize=False))
    nb = np.sqrt(np.einsum("md,md->m", b, b, optimize=False))
    denom = na[:, None] * nb[None, :]
    cos = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
    return hungarian(-cos)


@dataclass
class PipelineParams:
    """Everything inference needs besides the video itself."""

    clip_len: int
    init_queries: np.ndarray    # (N, D)
    class_head: np.ndarray      # (D, C)
    decoder: DecoderParams
    within_blocks: list[WithinClipBlock]
    cross_blocks: list = field(default_factory=list)
    class_kernel: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))


@dataclass
class ClipResult:
    queries: ClipQuerySet
    features: np.ndarray  # finest-level (T, D, H, W) after within-clip mixing
    tubes: list[Tube]


@dataclass
class LinkedVideo:
    """Clip results re-indexed so row n is track n everywhere."""

    aligned_queries: np.ndarray   # (K, N, D)
    clip_features: list[np.ndarray]
    clip_tubes: list[list[Tube]]
    length: int                   # original frame count, before padding


def run_clip(clip, params: PipelineParams, clip_index: int) -> ClipResult:
    """Within-clip mixing, query decoding, and tube prediction for one clip."""
    pyr = build_pyramid(clip)
    pyr = within_clip_forward(pyr, params.within_blocks)
    feats = pyr.levels[-1]
    qs = decode_clip_queries(feats, ClipQuerySet(params.init_queries, clip_index), params.decoder)
    tubes = predict_clip_tubes(qs, feats, params.class_head)
    return ClipResult(qs, feats, tubes)


def link_clip_results(results: list[ClipResult], length: int) -> LinkedVideo:
    """Chain assignments left to right, remapping every clip to track order."""
    n = results[0].queries.queries.shape[0]
    aligned_q = []
    clip_tubes = []
    clip_feats = []
    prev: ClipQuerySet | None = None
    for k, res in enumerate(results):
        if prev is None:
            order = np.arange(n)
        else:
            assign = associate_clips(prev, res.queries)
            mapping = assign.col_of_row()
            order = np.array([mapping[i] for i in range(n)])
        q = res.queries.queries[order]
        tubes = [
            Tube(res.tubes[j].masks, res.tubes[j].class_probs, track_id=i)
            for i, j in enumerate(order)
        ]
        aligned_q.append(q)
        clip_tubes.append(tubes)
        clip_feats.append(res.features)
        prev = ClipQuerySet(q, k)
    return LinkedVideo(np.stack(aligned_q), clip_feats, clip_tubes, length)


def _shuffle_results(
    results: list[ClipResult], rng: np.random.Generator
) -> list[ClipResult]:
    # Re-index every clip after the first; linking must undo the shuffle.
    out = [results[0]]
    for res in results[1:]:
        n = res.queries.queries.shape[0]
        perm = rng.permutation(n)
        out.append(
            ClipResult(
                queries=ClipQuerySet(res.queries.queries[perm], res.queries.clip_index),
                features=res.features,
                tubes=[res.tubes[j] for j in perm],
            )
        )
    return out


def link_video(video, params: PipelineParams, *, shuffle_rng=None) -> LinkedVideo:
    """Run every clip and chain the results; optionally shuffle each clip's
    query order first to exercise association invariance."""
    video = as_array(video)
    clips = split_into_clips(video, params.clip_len)
    results = [run_clip(clip, params, k) for k, clip in enumerate(clips)]
    if shuffle_rng is not None:
        results = _shuffle_results(results, shuffle_rng)
    return link_clip_results(results, video.shape[0])


def video_tubes_from_clips(linked: LinkedVideo) -> list[Tube]:
    """Concatenate per-clip masks into span-L tubes; padding frames drop off.

    The video-level class distribution is the mean of the per-clip ones.
    """
    n = linked.aligned_queries.shape[1]
    tubes = []
    for i in range(n):
        masks = np.concatenate([ct[i].masks for ct in linked.clip_tubes], axis=0)
        probs = np.mean([ct[i].class_probs for ct in linked.clip_tubes], axis=0)
        tubes.append(Tube(masks[: linked.length], probs, track_id=i))
    return tubes


def near_online_inference(video, params: PipelineParams, *, shuffle_rng=None) -> list[Tube]:
    """Clip-by-clip inference chained by query association."""
    return video_tubes_from_clips(link_video(video, params, shuffle_rng=shuffle_rng))


def decoder_params(
    d: int,
    rng: np.random.Generator,
    n_layers: int = 3,
    hidden: int | None = None,
    scale: float | None = None,
    std: float = 0.02,
) -> DecoderParams:
    """Randomly initialized decoder stack (hidden defaults to 4 * D)."""
    if hidden is None:
        hidden = 4 * d
    if scale is None:
        scale = 1.0 / np.sqrt(d)
    layers = [
        DecoderLayerParams(
            cross=projection_weights(d, rng, std),
            self_attn=projection_weights(d, rng, std),
            ffn_w1=rng.normal(0.0, std, size=(hidden, d)),
            ffn_w2=rng.normal(0.0, std, size=(d, hidden)),
            scale=float(scale),
        )
        for _ in range(n_layers)
    ]
    return DecoderParams(layers)


def identity_decoder_params(d: int, n_layers: int = 3, scale: float | None = None) -> DecoderParams:
    """Layers whose value/output paths are zero: queries pass through unchanged."""
    if scale is None:
        scale = 1.0 / np.sqrt(d)
    eye = np.eye(d)
    layers = [
        DecoderLayerParams(
            cross=ProjectionWeights(eye.copy(), eye.copy(), np.zeros((d, d))),
            self_attn=ProjectionWeights(eye.copy(), eye.copy(), np.zeros((d, d))),
            ffn_w1=np.zeros((4 * d, d)),
            ffn_w2=np.zeros((d, 4 * d)),
            scale=float(scale),
        )
        for _ in range(n_layers)
    ]
    return DecoderParams(layers)
