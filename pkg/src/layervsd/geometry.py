"""Depth to disparity conversion, disparity differences and level range."""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, InvariantViolation

# Horizontal warp direction per reference view: target column = source + sign * disparity.
# The virtual camera sits to the right of the left reference and to the left of the right one.
WARP_SIGN = {"left": -1, "right": 1}
VIEWS = ("left", "right")


def round_half_away(x):
    """Round to the nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _check_rig_params(fB, z_near, z_far):
    if not (math.isfinite(fB) and fB > 0):
        raise InvariantViolation(f"fB must be positive, got {fB}")
    if not (0 < z_near < z_far and math.isfinite(z_far)):
        raise InvariantViolation(f"need 0 < z_near < z_far, got {z_near}, {z_far}")


@lru_cache(maxsize=64)
def disparity_table(fB: float, z_near: float, z_far: float) -> np.ndarray:
    """Disparity for every 8-bit depth value, evaluated in exact rational arithmetic.

    Exactness keeps the half-away tie rule honest: the float inputs are
    converted to their exact binary values, so no tie is lost to rounding
    of intermediate products.
    """
    _check_rig_params(fB, z_near, z_far)
    f = Fraction(fB)
    slope = f * (1 / Fraction(z_near) - 1 / Fraction(z_far)) / 255
    offset = f / Fraction(z_far)
    table = np.empty(256, dtype=np.int32)
    for d in range(256):
        v = slope * d + offset
        table[d] = math.floor(v + Fraction(1, 2)) if v >= 0 else -math.floor(-v + Fraction(1, 2))
    table.setflags(write=False)
    return table


def depth_to_disparity(depth, fB: float, z_near: float, z_far: float) -> np.ndarray:
    """Integer disparity map (int32) of an 8-bit depth plane."""
    depth = np.asarray(depth)
    if depth.dtype != np.uint8:
        if depth.size and (depth.min() < 0 or depth.max() > 255):
            raise InvariantViolation("depth samples must be 8-bit")
        depth = depth.astype(np.uint8)
    return disparity_table(float(fB), float(z_near), float(z_far))[depth]


def view_disparity(depth, rig, view: str) -> np.ndarray:
    return depth_to_disparity(depth, rig.fB(view), rig.z_near, rig.z_far)


def delta_map(original, decoded) -> np.ndarray:
    """Disparity shift: decoded minus original, element-wise."""
    original = np.asarray(original)
    decoded = np.asarray(decoded)
    if original.shape != decoded.shape:
        raise DimensionMismatch(f"disparity maps differ in shape: {original.shape} vs {decoded.shape}")
    return decoded.astype(np.int32) - original.astype(np.int32)


def level_range(delta) -> int:
    """Bound R of the usable level interval [-R, R].

    R is ceil(3 * population std) clamped to the largest observed |shift|,
    so empty extreme levels are never produced.
    """
    delta = np.asarray(delta)
    if delta.size == 0:
        return 0
    peak = int(np.abs(delta).max())
    if peak == 0:
        return 0
    sigma = float(np.std(delta.astype(np.float64)))
    return min(math.ceil(3.0 * sigma), peak)
