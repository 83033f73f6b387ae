"""Trajectory heatmaps: the height and width stage-one attention rows of a
reference pixel, multiplied into one map per target frame.

A reference point (t, h, w) selects the height-pass weight row at batch
index w and the width-pass row at batch index h; their outer product at
each target frame is the per-frame trajectory map that the dumps and the
tracking check use.
"""

from __future__ import annotations

import os

import numpy as np

from .attention import AttentionParams, TrajectoryField, axial_trajectory_h, axial_trajectory_w
from .pgm import write_pgm
from .segmenter import split_into_clips
from .tensor import as_array


def axial_fields(
    f, params_h: AttentionParams, params_w: AttentionParams
) -> tuple[TrajectoryField, TrajectoryField]:
    """Height-pass field on the features, width-pass field on the height output."""
    mid, field_h = axial_trajectory_h(f, params_h, return_field=True)
    _, field_w = axial_trajectory_w(mid, params_w, return_field=True)
    return field_h, field_w


def heatmap_frames(
    field_h: TrajectoryField, field_w: TrajectoryField, reference: tuple[int, int, int]
) -> list[np.ndarray]:
    """One (H, W) outer-product map per target frame for the reference pixel."""
    t, h, w = reference
    n_frames = field_h.stage1.shape[1]
    n_h = field_h.stage1.shape[2]
    n_w = field_w.stage1.shape[2]
    if not (0 <= t < n_frames and 0 <= h < n_h and 0 <= w < n_w):
        raise IndexError(f"reference {reference} outside (T={n_frames}, H={n_h}, W={n_w})")
    rows_h = field_h.stage1[w, t, h]  # (T, H)
    rows_w = field_w.stage1[h, t, w]  # (T, W)
    return [np.outer(rows_h[u], rows_w[u]) for u in range(n_frames)]


def normalize_heatmap(frame: np.ndarray) -> np.ndarray:
    """Min-max normalize to 8 bit; a constant map keeps its absolute level."""
    lo = float(frame.min())
    hi = float(frame.max())
    if hi > lo:
        return np.round((frame - lo) / (hi - lo) * 255.0).astype(np.uint8)
    level = int(round(255.0 * min(max(lo, 0.0), 1.0)))
    return np.full(frame.shape, level, dtype=np.uint8)


def dump_attention_heatmaps(
    field_h: TrajectoryField,
    field_w: TrajectoryField,
    reference: tuple[int, int, int],
    out_dir,
) -> list[str]:
    """Write one normalized P5 PGM per target frame; returns the paths."""
    frames = heatmap_frames(field_h, field_w, reference)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for u, frame in enumerate(frames):
        path = os.path.join(out_dir, f"t{u:04d}.pgm")
        write_pgm(path, normalize_heatmap(frame))
        paths.append(path)
    return paths


def trajectory_hit_rate(
    video,
    gt_masks: list[np.ndarray],
    moving: list[bool],
    clip_len: int,
    params_h: AttentionParams,
    params_w: AttentionParams,
) -> float:
    """Fraction of (reference, target frame) pairs whose multiplied-map
    argmax lands inside the reference object's mask at the target frame.

    References are every on-mask pixel of every moving object at every
    frame; targets are all frames of the reference's clip.
    """
    video = as_array(video)
    clips = split_into_clips(video, clip_len)
    length = video.shape[0]
    hits = 0
    total = 0
    for k, clip in enumerate(clips):
        field_h, field_w = axial_fields(clip, params_h, params_w)
        t_extent = clip.shape[0]
        for mask, is_moving in zip(gt_masks, moving):
            if not is_moving:
                continue
            for t_local in range(t_extent):
                t_global = min(k * clip_len + t_local, length - 1)
                ys, xs = np.nonzero(mask[t_global])
                for y, x in zip(ys, xs):
                    rows_h = field_h.stage1[x, t_local, y]  # (T, H)
                    rows_w = field_w.stage1[y, t_local, x]  # (T, W)
                    for u in range(t_extent):
                        u_global = min(k * clip_len + u, length - 1)
                        frame = np.outer(rows_h[u], rows_w[u])
                        best = int(np.argmax(frame))
                        by, bx = divmod(best, frame.shape[1])
                        hits += bool(mask[u_global, by, bx])
                        total += 1
    return hits / total if total else 1.0
