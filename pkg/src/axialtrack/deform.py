"""Within-clip feature mixing over a three-level pyramid.

Each block applies per-frame multi-scale deformable sampling (spatial
mixing, no temporal exchange) followed by axial-trajectory attention
along the height and then the width axis of every level (temporal
mixing, no cross-level exchange).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionParams, attention_params, axial_trajectory_h, axial_trajectory_w
from .errors import DimensionError
from .tensor import MacCounter, as_array, bilinear_sample, softmax_last


@dataclass
class FeaturePyramid:
    """Three (T, D, H, W) levels ordered coarse to fine; extents double level to level."""

    levels: list[np.ndarray]

    def validate(self) -> None:
        if len(self.levels) != 3:
            raise DimensionError(f"pyramid must have exactly 3 levels, got {len(self.levels)}")
        t, d = self.levels[0].shape[:2]
        for lvl in self.levels:
            if lvl.ndim != 4:
                raise DimensionError(f"each level must be (T, D, H, W), got {lvl.shape}")
            if lvl.shape[0] != t or lvl.shape[1] != d:
                raise DimensionError("pyramid levels must share T and D")
        for coarse, fine in zip(self.levels, self.levels[1:]):
            if fine.shape[2] != 2 * coarse.shape[2] or fine.shape[3] != 2 * coarse.shape[3]:
                raise DimensionError(
                    f"spatial extents must double level to level, got {coarse.shape} -> {fine.shape}"
                )


@dataclass
class LevelDeformParams:
    """Per query level: query projection, offset and weight predictors, output projection.

    The offset predictor maps a query feature to `points` (dy, dx) pairs,
    reused at every sampled level in that level's own pixel units; the
    weight predictor scores all 3 * points samples (level-major order).
    """

    w_query: np.ndarray   # (D, D)
    w_offset: np.ndarray  # (2K, D)
    w_weight: np.ndarray  # (3K, D)
    w_out: np.ndarray     # (D, D)


@dataclass
class DeformParams:
    levels: list[LevelDeformParams]
    points: int

    def validate(self, d: int) -> None:
        if len(self.levels) != 3:
            raise DimensionError(f"deform params must cover 3 levels, got {len(self.levels)}")
        k = self.points
        for lp in self.levels:
            if lp.w_query.shape != (d, d) or lp.w_out.shape != (d, d):
                raise DimensionError("query/output projections must be (D, D)")
            if lp.w_offset.shape != (2 * k, d):
                raise DimensionError(f"offset predictor must be ({2 * k}, {d}), got {lp.w_offset.shape}")
            if lp.w_weight.shape != (3 * k, d):
                raise DimensionError(f"weight predictor must be ({3 * k}, {d}), got {lp.w_weight.shape}")


def _axis_refs(n_from: int, n_to: int) -> np.ndarray:
    # Proportional (corner-aligned) index mapping; pixel centers of the
    # query grid land inside [0, n_to - 1], so zero-offset sampling never
    # reads outside the target level.
    if n_from == 1:
        return np.full(1, (n_to - 1) / 2.0)
    return np.arange(n_from) * ((n_to - 1) / (n_from - 1))


def msdeform_simplified(pyr: FeaturePyramid, params: DeformParams) -> FeaturePyramid:
    """Per-frame deformable sampling across all three levels, with residual.

    For every query pixel: predict K offsets and 3K softmax weights from
    the projected query feature, bilinear-sample each level at the mapped
    reference plus offset, blend, project, and add to the input. Frames
    never mix.
    """
    pyr.validate()
    d = pyr.levels[0].shape[1]
    params.validate(d)
    t = pyr.levels[0].shape[0]
    k = params.points

    out_levels = []
    for lp, lvl in zip(params.levels, pyr.levels):
        hq, wq = lvl.shape[2:]
        base = []
        for tgt in pyr.levels:
            ys = _axis_refs(hq, tgt.shape[2])
            xs = _axis_refs(wq, tgt.shape[3])
            grid = np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1).reshape(-1, 2)
            base.append(grid)  # (H*W, 2)
        frames = []
        for ti in range(t):
            pix = lvl[ti].transpose(1, 2, 0).reshape(-1, d)  # (P, D)
            q = np.einsum("pe,de->pd", pix, lp.w_query, optimize=False)
            off = np.einsum("pe,oe->po", q, lp.w_offset, optimize=False).reshape(-1, k, 2)
            wts = softmax_last(np.einsum("pe,oe->po", q, lp.w_weight, optimize=False))
            agg = np.zeros_like(pix)
            for m, tgt in enumerate(pyr.levels):
                pts = base[m][:, None, :] + off  # (P, K, 2)
                smp = bilinear_sample(tgt[ti], pts.reshape(-1, 2)).reshape(-1, k, d)
                for kk in range(k):
                    agg += wts[:, m * k + kk, None] * smp[:, kk]
            outp = pix + np.einsum("pe,de->pd", agg, lp.w_out, optimize=False)
            frames.append(outp.reshape(hq, wq, d).transpose(2, 0, 1))
        out_levels.append(np.stack(frames))
    return FeaturePyramid(out_levels)


@dataclass
class WithinClipBlock:
    deform: DeformParams
    attn_h: AttentionParams
    attn_w: AttentionParams


def within_clip_forward(
    pyr: FeaturePyramid, blocks: list[WithinClipBlock], counter: MacCounter | None = None
) -> FeaturePyramid:
    """Stack deformable sampling and per-level H/W axial passes; shapes preserved."""
    pyr.validate()
    for blk in blocks:
        pyr = msdeform_simplified(pyr, blk.deform)
        levels = []
        for lvl in pyr.levels:
            lvl = axial_trajectory_h(lvl, blk.attn_h, counter=counter)
            lvl = axial_trajectory_w(lvl, blk.attn_w, counter=counter)
            levels.append(lvl)
        pyr = FeaturePyramid(levels)
    return pyr


def _pool2(f: np.ndarray) -> np.ndarray:
    t, d, h, w = f.shape
    if h % 2 or w % 2:
        raise DimensionError(f"pooling needs even spatial extents, got {f.shape}")
    return f.reshape(t, d, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def build_pyramid(f) -> FeaturePyramid:
    """Average-pool (T, D, H, W) features into the coarse-to-fine pyramid.

    The input acts as the finest level; H and W must be divisible by 4.
    """
    f = as_array(f)
    if f.ndim != 4:
        raise DimensionError(f"expected (T, D, H, W) features, got {f.shape}")
    half = _pool2(f)
    quarter = _pool2(half)
    return FeaturePyramid([quarter, half, f])


def deform_params(d: int, k: int, rng: np.random.Generator, std: float = 0.02) -> DeformParams:
    """Random query/output projections; offset and weight predictors start at
    zero, so the untrained module is a well-defined local average."""
    levels = [
        LevelDeformParams(
            w_query=rng.normal(0.0, std, size=(d, d)),
            w_offset=np.zeros((2 * k, d)),
            w_weight=np.zeros((3 * k, d)),
            w_out=rng.normal(0.0, std, size=(d, d)),
        )
        for _ in range(3)
    ]
    return DeformParams(levels=levels, points=k)


def identity_deform_params(d: int, k: int) -> DeformParams:
    """All-zero predictors and output projection: the block is an exact identity."""
    levels = [
        LevelDeformParams(
            w_query=np.zeros((d, d)),
            w_offset=np.zeros((2 * k, d)),
            w_weight=np.zeros((3 * k, d)),
            w_out=np.zeros((d, d)),
        )
        for _ in range(3)
    ]
    return DeformParams(levels=levels, points=k)


def within_clip_blocks(
    d: int, k: int, n_blocks: int, rng: np.random.Generator,
    heads: int = 1, scale: float | None = None,
) -> list[WithinClipBlock]:
    """Randomly initialized stack with unshared per-block parameters."""
    return [
        WithinClipBlock(
            deform=deform_params(d, k, rng),
            attn_h=attention_params(d, rng, heads=heads, scale=scale),
            attn_w=attention_params(d, rng, heads=heads, scale=scale),
        )
        for _ in range(n_blocks)
    ]
