"""Layer-based representation of sub view synthesis distortions (S-VSDs).

Pixels of one reference view are grouped by their disparity shift level.
Each layer yields paired coordinates ``(row, col_original, col_decoded)``:
the original-view pixel and the decoded-view pixel that land on the same
virtual-view position. Two routes build the layers:

* ``full_pipeline`` forward-warps each layer in both the original and the
  decoded view, unions the warped sets and warps the union back;
* ``fast_pipeline`` replaces all of that with a directional extension of
  the layer mask by ``|level|`` pixels.

Both produce identical ``LayerSet`` objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoordOutOfBounds, DimensionMismatch
from .geometry import VIEWS, WARP_SIGN, level_range

DEFAULT_RMAX = 6

RIGHT, LEFT = 1, -1

# Extension direction of the original-view set, per view and sign of the level.
EXTENSION_RULES = {
    ("left", -1): RIGHT,
    ("left", 1): LEFT,
    ("right", -1): LEFT,
    ("right", 1): RIGHT,
}


@dataclass
class Layer:
    view: str
    level: int
    base_rows: np.ndarray
    base_cols: np.ndarray
    rows: np.ndarray
    cols_original: np.ndarray
    cols_decoded: np.ndarray

    @property
    def cardinality(self) -> int:
        return int(self.rows.size)

    @property
    def base_cardinality(self) -> int:
        return int(self.base_rows.size)

    def coords_original(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols_original.tolist()))

    def coords_decoded(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols_decoded.tolist()))

    def same_as(self, other: "Layer") -> bool:
        return (
            self.view == other.view
            and self.level == other.level
            and np.array_equal(self.base_rows, other.base_rows)
            and np.array_equal(self.base_cols, other.base_cols)
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols_original, other.cols_original)
            and np.array_equal(self.cols_decoded, other.cols_decoded)
        )


@dataclass
class LayerSet:
    shape: tuple[int, int]
    layers: dict[tuple[str, int], Layer] = field(default_factory=dict)
    bounds: dict[str, int] = field(default_factory=dict)

    def view_layers(self, view: str) -> list[Layer]:
        return [self.layers[k] for k in sorted(self.layers) if k[0] == view]

    def merged(self, other: "LayerSet") -> "LayerSet":
        if self.shape != other.shape:
            raise DimensionMismatch("layer sets differ in frame size")
        return LayerSet(self.shape, {**self.layers, **other.layers}, {**self.bounds, **other.bounds})

    def differences(self, other: "LayerSet") -> list[str]:
        """Human-readable list of mismatches (empty when identical)."""
        out = []
        if self.shape != other.shape:
            out.append(f"shape {self.shape} != {other.shape}")
        for key in sorted(set(self.layers) | set(other.layers)):
            a, b = self.layers.get(key), other.layers.get(key)
            if a is None or b is None:
                out.append(f"layer {key} present in only one set")
            elif not a.same_as(b):
                out.append(f"layer {key} differs ({a.cardinality} vs {b.cardinality} pairs)")
        return out

    def __eq__(self, other):
        if not isinstance(other, LayerSet):
            return NotImplemented
        return not self.differences(other)


def layered_representation(delta, rmax: int | None = DEFAULT_RMAX):
    """Label every pixel with its (clamped) level.

    Returns ``(levels, bound)``: an int32 map of levels in ``[-bound, bound]``
    where ``bound = min(level_range(delta), rmax)``.
    """
    delta = np.asarray(delta, dtype=np.int32)
    bound = level_range(delta)
    if rmax is not None:
        bound = min(bound, rmax)
    return np.clip(delta, -bound, bound), bound


def level_sets(delta, rmax: int | None = DEFAULT_RMAX) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Base coordinate sets per level, ``{level: (rows, cols)}``."""
    levels, _ = layered_representation(delta, rmax)
    return {int(v): np.nonzero(levels == v) for v in np.unique(levels)}


def _shift_cols(mask: np.ndarray, k: int) -> np.ndarray:
    """Mask moved ``k`` columns to the right (negative: left), zero filled."""
    out = np.zeros_like(mask)
    w = mask.shape[1]
    if abs(k) >= w:
        return out
    if k > 0:
        out[:, k:] = mask[:, :-k]
    elif k < 0:
        out[:, :k] = mask[:, -k:]
    else:
        out[:] = mask
    return out


def fast_pipeline(delta, view: str = "left", rmax: int | None = DEFAULT_RMAX) -> LayerSet:
    """Layers by directional extension.

    The original-view set of a level grows by ``|level|`` pixels on the side
    given by ``EXTENSION_RULES``; its decoded-view partner is the same set
    moved ``|level|`` pixels the other way, so the decoded set is extended on
    the opposite side. Pairs leaving the frame are dropped.
    """
    levels, bound = layered_representation(delta, rmax)
    h, w = levels.shape
    result = LayerSet((h, w), bounds={view: bound})
    for level in np.unique(levels).tolist():
        base = levels == level
        base_rows, base_cols = np.nonzero(base)
        if level == 0:
            ext, to_decoded = base, 0
        else:
            direction = EXTENSION_RULES[(view, 1 if level > 0 else -1)]
            ext = base | _shift_cols(base, direction * abs(level))
            to_decoded = -direction * abs(level)
        # keep x with x + to_decoded inside the frame
        if to_decoded > 0:
            ext[:, max(w - to_decoded, 0):] = False
        elif to_decoded < 0:
            ext[:, : min(-to_decoded, w)] = False
        rows, cols = np.nonzero(ext)
        result.layers[(view, level)] = Layer(
            view, level, base_rows, base_cols, rows, cols, cols + to_decoded
        )
    return result


def full_pipeline(delta, original_disparity, decoded_disparity, view: str = "left",
                  rmax: int | None = DEFAULT_RMAX) -> LayerSet:
    """Layers by forward warp, union and inverse warp.

    Each layer pixel is warped with its original disparity into the
    original warped view and with its decoded disparity into the decoded
    warped view; the union of both warped sets is then warped back into the
    two reference views. A warped element has a source in only one view; its
    position in the other view uses the disparity of the same reference
    pixel in that view (the element's neighbour within the layer).

    Pixels whose shift lies outside the level range are warped in the
    decoded view with ``original + clamped level``. Warped coordinates are
    not clipped; pairs are clipped to the frame after inverse warping.
    """
    delta = np.asarray(delta, dtype=np.int32)
    phi = np.asarray(original_disparity, dtype=np.int64)
    phi_dec = np.asarray(decoded_disparity, dtype=np.int64)
    if not (delta.shape == phi.shape == phi_dec.shape):
        raise DimensionMismatch("delta and disparity maps differ in shape")
    if not np.array_equal(phi_dec - phi, delta):
        raise DimensionMismatch("delta is not decoded minus original disparity")
    levels, bound = layered_representation(delta, rmax)
    phi_dec_eff = phi + levels
    sign = WARP_SIGN[view]
    h, w = delta.shape
    result = LayerSet((h, w), bounds={view: bound})

    for level in np.unique(levels).tolist():
        r, c = np.nonzero(levels == level)
        # forward warp into both warped views
        w_orig = c + sign * phi[r, c]
        w_dec = c + sign * phi_dec_eff[r, c]
        # union of warped elements: (row, warped col, source col, which view it came from)
        S_row = np.concatenate([r, r])
        S_pos = np.concatenate([w_orig, w_dec])
        S_src = np.concatenate([c, c])
        S_from_dec = np.concatenate([np.zeros(r.size, bool), np.ones(r.size, bool)])
        # inverse warp every element into both reference views
        back_orig = np.where(S_from_dec, S_pos - sign * phi[S_row, S_src], S_src)
        back_dec = np.where(S_from_dec, S_src, S_pos - sign * phi_dec_eff[S_row, S_src])
        inside = (back_orig >= 0) & (back_orig < w) & (back_dec >= 0) & (back_dec < w)
        # dedupe on a packed key; its order is lexicographic in (row, col_orig, col_dec)
        key = np.unique((S_row[inside] * w + back_orig[inside]) * w + back_dec[inside])
        rows_k, rem = np.divmod(key, w * w)
        col_o, col_d = np.divmod(rem, w)
        result.layers[(view, level)] = Layer(view, level, r, c, rows_k, col_o, col_d)
    return result


def extract_layers(deltas, disparities=None, method: str = "fast", rmax: int | None = DEFAULT_RMAX) -> LayerSet:
    """Layers of both views.

    Args:
        deltas: ``{"left": delta, "right": delta}``.
        disparities: ``{view: (original, decoded)}``; required for ``method="full"``.
        method: ``"fast"`` or ``"full"``.
    """
    out = None
    for view in VIEWS:
        if method == "fast":
            ls = fast_pipeline(deltas[view], view, rmax)
        elif method == "full":
            orig, dec = disparities[view]
            ls = full_pipeline(deltas[view], orig, dec, view, rmax)
        else:
            raise ValueError(f"unknown method {method!r}")
        out = ls if out is None else out.merged(ls)
    return out


@dataclass
class SvsdVector:
    """Fixed-order S-VSD features: left levels -rmax..rmax, then right.

    With ``with_cardinality`` the normalised pair counts ``C / (W*H)`` follow
    in the same order.
    """

    values: np.ndarray
    rmax: int = DEFAULT_RMAX
    with_cardinality: bool = False

    def __len__(self):
        return int(self.values.size)

    @staticmethod
    def length(rmax: int, with_cardinality: bool = False) -> int:
        n = 2 * (2 * rmax + 1)
        return 2 * n if with_cardinality else n

    @staticmethod
    def names(rmax: int = DEFAULT_RMAX, with_cardinality: bool = False) -> list[str]:
        names = [f"L_{v}_{lvl:+d}" if lvl else f"L_{v}_0" for v in VIEWS for lvl in range(-rmax, rmax + 1)]
        if with_cardinality:
            names += ["C" + n[1:] for n in names]
        return names


def layer_mse(layer: Layer, original, decoded) -> float:
    """Mean squared texture difference over the layer's paired pixels."""
    h, w = original.shape
    if layer.cardinality == 0:
        return 0.0
    if (
        layer.rows.min() < 0 or layer.rows.max() >= h
        or min(layer.cols_original.min(), layer.cols_decoded.min()) < 0
        or max(layer.cols_original.max(), layer.cols_decoded.max()) >= w
    ):
        raise CoordOutOfBounds(f"layer {layer.view}/{layer.level} has pairs outside the {w}x{h} frame")
    a = original[layer.rows, layer.cols_original].astype(np.float64)
    b = decoded[layer.rows, layer.cols_decoded].astype(np.float64)
    return float(np.mean((a - b) ** 2))


def svsd(layers: LayerSet, tex_original_left, tex_original_right, tex_decoded_left, tex_decoded_right,
         rmax: int = DEFAULT_RMAX, with_cardinality: bool = False) -> SvsdVector:
    """Assemble the S-VSD vector; levels beyond ``rmax`` fold into the end slots."""
    textures = {
        "left": (np.asarray(tex_original_left), np.asarray(tex_decoded_left)),
        "right": (np.asarray(tex_original_right), np.asarray(tex_decoded_right)),
    }
    for orig, dec in textures.values():
        if orig.shape != tuple(layers.shape) or dec.shape != tuple(layers.shape):
            raise DimensionMismatch("texture planes do not match the layer frame size")
    n = 2 * rmax + 1
    sq = np.zeros(2 * n)
    count = np.zeros(2 * n)
    for (view, level), layer in layers.layers.items():
        slot = VIEWS.index(view) * n + int(np.clip(level, -rmax, rmax)) + rmax
        orig, dec = textures[view]
        sq[slot] += layer_mse(layer, orig, dec) * layer.cardinality
        count[slot] += layer.cardinality
    values = np.divide(sq, count, out=np.zeros_like(sq), where=count > 0)
    if with_cardinality:
        h, w = layers.shape
        values = np.concatenate([values, count / (h * w)])
    return SvsdVector(values, rmax, with_cardinality)
