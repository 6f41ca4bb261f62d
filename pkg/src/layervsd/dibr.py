"""Depth-image-based rendering: forward warp, competition, blending, inpainting.

Warping never crosses rows, so every stage here is row-independent and the
row-parallel path is bit-identical to the sequential one.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .geometry import WARP_SIGN, round_half_away, view_disparity
from .media_io import CameraRig, StereoFrame

NONE = -1
INPAINT_FALLBACK = 128


@dataclass
class WarpedView:
    """A reference view forward-warped to the virtual viewpoint.

    ``source_col`` is the origin column in the reference view, or ``NONE``
    (-1) for holes; ``texture`` and ``depth`` are 0 at holes.
    """

    texture: np.ndarray
    depth: np.ndarray
    source_col: np.ndarray

    @property
    def holes(self) -> np.ndarray:
        return self.source_col == NONE


def forward_warp(texture, depth, disparity, direction: str) -> WarpedView:
    """Warp each pixel to column ``j + sign * disparity`` of its row.

    When several sources land on one target the larger depth sample (the
    nearer surface) wins; equal depths resolve to the lower source column.
    Targets outside the frame are dropped.
    """
    texture = np.asarray(texture)
    depth = np.asarray(depth)
    disparity = np.asarray(disparity)
    if not (texture.shape == depth.shape == disparity.shape) or texture.ndim != 2:
        raise DimensionMismatch(
            f"warp inputs differ in shape: {texture.shape}, {depth.shape}, {disparity.shape}"
        )
    h, w = texture.shape
    sign = WARP_SIGN[direction]
    cols = np.broadcast_to(np.arange(w, dtype=np.int64), (h, w))
    rows = np.broadcast_to(np.arange(h, dtype=np.int64)[:, None], (h, w))
    target = cols + sign * disparity.astype(np.int64)
    ok = (target >= 0) & (target < w)

    src_r, src_c, tgt = rows[ok], cols[ok], target[ok]
    d = depth[ok].astype(np.int64)
    flat = src_r * w + tgt
    # ascending by target, then depth, then descending column: last of each group wins
    order = np.lexsort((-src_c, d, flat))
    flat_sorted = flat[order]
    last = np.ones(flat_sorted.size, dtype=bool)
    last[:-1] = flat_sorted[1:] != flat_sorted[:-1]
    win = order[last]

    out_tex = np.zeros((h, w), dtype=np.uint8)
    out_depth = np.zeros((h, w), dtype=np.uint8)
    out_src = np.full((h, w), NONE, dtype=np.int32)
    wr, wt, wc = src_r[win], tgt[win], src_c[win]
    out_tex[wr, wt] = texture[wr, wc]
    out_depth[wr, wt] = depth[wr, wc]
    out_src[wr, wt] = wc
    return WarpedView(out_tex, out_depth, out_src)


def inpaint(values, holes, depths) -> np.ndarray:
    """Background-biased horizontal fill of a 2-D plane.

    Each hole copies whichever nearest non-hole neighbour (left or right in
    its row) has the smaller depth sample; ties go left. Rows without any
    non-hole sample become ``INPAINT_FALLBACK``.
    """
    values = np.asarray(values)
    holes = np.asarray(holes, dtype=bool)
    depths = np.asarray(depths)
    h, w = values.shape
    idx = np.broadcast_to(np.arange(w), (h, w))
    prev = np.maximum.accumulate(np.where(holes, -1, idx), axis=1)
    nxt = np.minimum.accumulate(np.where(holes, w, idx)[:, ::-1], axis=1)[:, ::-1]
    rows = np.arange(h)[:, None]
    has_prev = prev >= 0
    has_next = nxt < w
    prev_c = np.clip(prev, 0, w - 1)
    next_c = np.clip(nxt, 0, w - 1)
    take_next = has_next & (~has_prev | (depths[rows, next_c] < depths[rows, prev_c]))
    fill = np.where(take_next, values[rows, next_c], values[rows, prev_c])
    fill = np.where(has_prev | has_next, fill, INPAINT_FALLBACK)
    return np.where(holes, fill, values).astype(values.dtype)


def inpaint_row(values, depths) -> np.ndarray:
    """Fill one row; ``values`` may hold ``None`` (or be a masked array) at holes."""
    if np.ma.isMaskedArray(values):
        holes = np.ma.getmaskarray(values)
        vals = np.ma.getdata(values)
    else:
        holes = np.array([v is None for v in values], dtype=bool)
        vals = np.array([0 if v is None else v for v in values])
    deps = np.array([0 if d is None else d for d in depths])
    return inpaint(vals[None, :].astype(np.int64), holes[None, :], deps[None, :])[0]


def blend(left: WarpedView, right: WarpedView, u0: float, u1: float) -> np.ndarray:
    """Merge two warped views into the virtual view (uint8).

    Visible in both: ``u0*T0 + u1*T1`` rounded half away from zero; visible
    in one: that sample; visible in neither: ``inpaint``. Weights are taken
    as given so single-view tests may use ``u0=1, u1=0``.
    """
    if left.texture.shape != right.texture.shape:
        raise DimensionMismatch("warped views differ in shape")
    lh, rh = left.holes, right.holes
    t0 = left.texture.astype(np.float64)
    t1 = right.texture.astype(np.float64)
    both = round_half_away(u0 * t0 + u1 * t1)
    out = np.where(~lh & ~rh, both, np.where(~lh, t0, t1))
    depth = np.where(~lh & ~rh, np.maximum(left.depth, right.depth), np.where(~lh, left.depth, right.depth))
    out = inpaint(out, lh & rh, depth)
    return np.clip(out, 0, 255).astype(np.uint8)


def _synthesize_rows(frame: StereoFrame, rig: CameraRig, rows: slice, u0: float, u1: float) -> np.ndarray:
    warps = []
    for view in ("left", "right"):
        depth = frame.depth(view)[rows]
        disp = view_disparity(depth, rig, view)
        warps.append(forward_warp(frame.texture(view)[rows], depth, disp, view))
    return blend(warps[0], warps[1], u0, u1)


def synthesize(frame: StereoFrame, rig: CameraRig, threads: int = 1, weights=None) -> np.ndarray:
    """Virtual view from a stereo frame.

    Args:
        frame: left/right texture and depth of one instant.
        rig: camera rig (disparity constants and blend weights).
        threads: split rows into this many chunks processed concurrently.
        weights: optional ``(u0, u1)`` override of the rig's blend weights.
    """
    u0, u1 = (rig.u0, rig.u1) if weights is None else weights
    h = frame.shape[0]
    if threads <= 1 or h < 2:
        return _synthesize_rows(frame, rig, slice(0, h), u0, u1)
    bounds = np.linspace(0, h, min(threads, h) + 1).astype(int)
    chunks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda s: _synthesize_rows(frame, rig, s, u0, u1), chunks))
    return np.vstack(parts)


def frame_mse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"planes differ in shape: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(mse: float) -> float:
    """8-bit PSNR in dB; infinite for a zero MSE."""
    if mse <= 0:
        return float("inf")
    return float(10.0 * np.log10(255.0**2 / mse))
