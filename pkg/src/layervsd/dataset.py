"""Dataset construction: synthetic scenes, degradation, records and splits."""

from __future__ import annotations

import csv
import io
import math
import zlib
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .dibr import frame_mse, synthesize
from .errors import DimensionMismatch, EmptyDataset, InvariantViolation, TooFewRecords
from .geometry import VIEWS, delta_map, view_disparity
from .layers import DEFAULT_RMAX, SvsdVector, extract_layers, svsd
from .media_io import DEFAULT_RIG, CameraRig, SequencePair, StereoFrame, write_atomic

LEVELS = tuple(range(1, 8))
# depth noise std (8-bit depth units) per degradation level
DEPTH_SIGMA = {1: 0.5, 2: 1.0, 3: 1.5, 4: 2.0, 5: 3.0, 6: 4.0, 7: 5.0}
# 3-tap smoothing passes applied around depth boundaries
EDGE_BLUR_PASSES = {1: 1, 2: 1, 3: 2, 4: 2, 5: 3, 6: 3, 7: 4}
TEXTURE_SIGMA = {1: 1.0, 2: 1.5, 3: 2.0, 4: 2.5, 5: 3.0, 6: 4.0, 7: 5.0}
TEXTURE_BLUR = {1: 0.05, 2: 0.1, 3: 0.15, 4: 0.2, 5: 0.25, 6: 0.3, 7: 0.35}


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``seed`` and a path of int/str keys."""
    words = [int(seed) & 0xFFFFFFFF]
    for key in keys:
        words.append(zlib.crc32(key.encode()) if isinstance(key, str) else int(key) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(words))


# ---------------------------------------------------------------- scenes


@dataclass
class _Object:
    shape: str
    cx: float
    cy: float
    rx: float
    ry: float
    vx: float
    vy: float
    depth: int
    pattern: np.ndarray  # texture parameters


def _smooth_field(rng, h, w, n_waves=6):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.zeros((h, w))
    for _ in range(n_waves):
        fx, fy = rng.uniform(-0.15, 0.15, 2)
        out += rng.uniform(5, 25) * np.sin(fx * xx + fy * yy + rng.uniform(0, 2 * np.pi))
    return out


def _scene_layout(seed: int, width: int, height: int, margin: int):
    rng = derive_rng(seed, "layout")
    bg_depth = int(rng.integers(10, 60))
    n_obj = int(rng.integers(1, 5))
    depths = np.sort(rng.choice(np.arange(bg_depth + 30, 256), size=n_obj, replace=False))
    objects = []
    for d in depths:
        objects.append(_Object(
            shape=str(rng.choice(["rect", "ellipse"])),
            cx=rng.uniform(0.15, 0.85) * width,
            cy=rng.uniform(0.15, 0.85) * height,
            rx=rng.uniform(0.08, 0.25) * width,
            ry=rng.uniform(0.1, 0.3) * height,
            vx=rng.uniform(-1.5, 1.5),
            vy=rng.uniform(-0.5, 0.5),
            depth=int(d),
            pattern=rng.uniform(0, 1, 6),
        ))
    bg = 120 + _smooth_field(rng, height, width + 2 * margin)
    bg += rng.normal(0, 6, bg.shape)
    return bg_depth, bg, margin, objects


def _object_texture(obj: _Object, yy, xx):
    a = obj.pattern
    base = 40 + 170 * a[0]
    stripes = 30 * np.sin((0.2 + 0.6 * a[1]) * xx + (0.1 + 0.4 * a[2]) * yy)
    checker = 20 * np.sign(np.sin((0.3 + a[3]) * xx) * np.sin((0.3 + a[4]) * yy))
    return base + stripes + checker * a[5]


def synth_scene(seed: int, width: int, height: int, frame_index: int = 0,
                rig: CameraRig = DEFAULT_RIG) -> StereoFrame:
    """Procedural stereo frame: textured background plus 1-4 nearer objects.

    Depth is piecewise constant (background and one value per object, all
    objects nearer than the background). Each reference view is rendered by
    shifting every depth layer by its own disparity, far to near, so that
    warping the references back reproduces a consistent virtual view.
    Objects drift by a seeded velocity with ``frame_index``.
    """
    if width < 16 or height < 16:
        raise InvariantViolation("synthetic scenes need at least 16x16 pixels")
    margin = int(max(view_disparity(np.uint8(255), rig, v) for v in VIEWS)) + 1
    bg_depth, bg, margin, objects = _scene_layout(seed, width, height, margin)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    views = {}
    for view in VIEWS:
        sign = 1 if view == "left" else -1
        # reference column c shows virtual column c - sign * disparity
        disp = lambda d: int(view_disparity(np.uint8(d), rig, view))  # noqa: E731
        shift = disp(bg_depth)
        tex = bg[:, margin - sign * shift: margin - sign * shift + width].copy()
        dep = np.full((height, width), bg_depth, dtype=np.uint8)
        for obj in objects:
            vx = xx - sign * disp(obj.depth)
            cx = obj.cx + obj.vx * frame_index
            cy = obj.cy + obj.vy * frame_index
            u, v = (vx - cx) / obj.rx, (yy - cy) / obj.ry
            inside = (np.abs(u) <= 1) & (np.abs(v) <= 1) if obj.shape == "rect" else (u**2 + v**2 <= 1)
            tex = np.where(inside, _object_texture(obj, yy - cy, vx - cx), tex)
            dep[inside] = obj.depth
        views[view] = (np.clip(np.rint(tex), 0, 255).astype(np.uint8), dep)
    return StereoFrame(views["left"][0], views["left"][1], views["right"][0], views["right"][1])


def synth_sequence(seed: int, width: int, height: int, frames: int,
                   rig: CameraRig = DEFAULT_RIG) -> list[StereoFrame]:
    return [synth_scene(seed, width, height, t, rig) for t in range(frames)]


# ---------------------------------------------------------------- degradation


def _blur3_h(a: np.ndarray) -> np.ndarray:
    p = np.pad(a, ((0, 0), (1, 1)), mode="edge")
    return (p[:, :-2] + 2 * p[:, 1:-1] + p[:, 2:]) / 4.0


def _box3(a: np.ndarray) -> np.ndarray:
    p = np.pad(a, 1, mode="edge")
    h, w = a.shape
    return sum(p[i:i + h, j:j + w] for i in range(3) for j in range(3)) / 9.0


def degrade_depth(depth, sigma: float, blur_passes: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean integer noise plus 3-tap smoothing near depth boundaries."""
    d = np.asarray(depth, dtype=np.float64)
    if blur_passes:
        edge = np.zeros(d.shape, dtype=bool)
        edge[:, 1:] |= d[:, 1:] != d[:, :-1]
        edge[:, :-1] |= d[:, 1:] != d[:, :-1]
        for _ in range(blur_passes):
            edge[:, 1:] |= edge[:, :-1].copy()
            edge[:, :-1] |= edge[:, 1:].copy()
        for _ in range(blur_passes):
            d = np.where(edge, _blur3_h(d), d)
    if sigma > 0:
        d = d + np.rint(rng.normal(0.0, sigma, d.shape))
    return np.clip(np.rint(d), 0, 255).astype(np.uint8)


def degrade_texture(texture, sigma: float, blur: float, rng: np.random.Generator) -> np.ndarray:
    """Mild 3x3 blur mixed in by ``blur`` plus zero-mean Gaussian noise."""
    t = np.asarray(texture, dtype=np.float64)
    if blur > 0:
        t = (1 - blur) * t + blur * _box3(t)
    if sigma > 0:
        t = t + rng.normal(0.0, sigma, t.shape)
    return np.clip(np.rint(t), 0, 255).astype(np.uint8)


def degrade(frame: StereoFrame, level: int, seed: int) -> StereoFrame:
    """Decoded-like copy of a frame; distortion grows with ``level`` (1..7)."""
    if level not in DEPTH_SIGMA:
        raise InvariantViolation(f"degradation level must be one of {LEVELS}, got {level}")
    planes = {}
    for view in VIEWS:
        planes[f"{view}_depth"] = degrade_depth(
            frame.depth(view), DEPTH_SIGMA[level], EDGE_BLUR_PASSES[level], derive_rng(seed, level, view, "depth"))
        planes[f"{view}_texture"] = degrade_texture(
            frame.texture(view), TEXTURE_SIGMA[level], TEXTURE_BLUR[level], derive_rng(seed, level, view, "texture"))
    return StereoFrame(**planes)


# ---------------------------------------------------------------- records


@dataclass
class DatasetRecord:
    sequence_id: str
    frame_index: int
    tag: str
    features: np.ndarray
    target_vsd: float

    def __post_init__(self):
        if not self.target_vsd >= 0:
            raise InvariantViolation(f"target VSD must be >= 0, got {self.target_vsd}")


def frame_features(original: StereoFrame, decoded: StereoFrame, rig: CameraRig,
                   rmax: int = DEFAULT_RMAX, with_cardinality: bool = False,
                   method: str = "fast") -> SvsdVector:
    """S-VSD vector of one original/decoded frame pair."""
    deltas, disparities = {}, {}
    for view in VIEWS:
        phi = view_disparity(original.depth(view), rig, view)
        phi_dec = view_disparity(decoded.depth(view), rig, view)
        deltas[view] = delta_map(phi, phi_dec)
        disparities[view] = (phi, phi_dec)
    layers = extract_layers(deltas, disparities, method=method, rmax=rmax)
    return svsd(layers, original.left_texture, original.right_texture,
                decoded.left_texture, decoded.right_texture, rmax, with_cardinality)


def build_records(pair: SequencePair, sequence_id: str = "seq", tag: str = "",
                  rmax: int = DEFAULT_RMAX, with_cardinality: bool = False,
                  original_views: list[np.ndarray] | None = None) -> list[DatasetRecord]:
    """One record per frame: ground-truth VSD and fast-pipeline S-VSD features.

    ``original_views`` may carry already synthesized original virtual views
    (they do not depend on the degradation).
    """
    records = []
    for i, (orig, dec) in enumerate(zip(pair.original, pair.decoded)):
        v_orig = original_views[i] if original_views is not None else synthesize(orig, pair.rig)
        v_dec = synthesize(dec, pair.rig)
        feats = frame_features(orig, dec, pair.rig, rmax, with_cardinality)
        records.append(DatasetRecord(sequence_id, i, tag, feats.values, frame_mse(v_orig, v_dec)))
    return records


def build_synthetic_dataset(scenes: int = 30, frames: int = 5, levels=LEVELS, width: int = 128,
                            height: int = 96, seed: int = 0, rig: CameraRig = DEFAULT_RIG,
                            rmax: int = DEFAULT_RMAX, with_cardinality: bool = False) -> list[DatasetRecord]:
    """Records for ``scenes x levels x frames`` synthetic frame pairs, sorted."""
    records = []
    for s in range(scenes):
        scene_seed = int(derive_rng(seed, "scene", s).integers(0, 2**31))
        originals = synth_sequence(scene_seed, width, height, frames, rig)
        views = [synthesize(f, rig) for f in originals]
        for level in levels:
            decoded = [degrade(f, level, scene_seed * 131 + t) for t, f in enumerate(originals)]
            pair = SequencePair(originals, decoded, rig)
            records += build_records(pair, f"scene{s:03d}", f"L{level}", rmax, with_cardinality, views)
    return sort_records(records)


def sort_records(records):
    return sorted(records, key=lambda r: (r.sequence_id, r.frame_index, r.tag))


def to_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        raise EmptyDataset("no records")
    dims = {r.features.size for r in records}
    if len(dims) != 1:
        raise DimensionMismatch(f"records have inconsistent feature lengths {sorted(dims)}")
    return np.stack([r.features for r in records]), np.array([r.target_vsd for r in records])


# ---------------------------------------------------------------- splits


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 2 / 3
    repetitions: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise InvariantViolation("train_fraction must lie in (0, 1)")
        if self.repetitions < 1:
            raise InvariantViolation("repetitions must be >= 1")


def split(records, spec: SplitSpec = SplitSpec(), stratify=None):
    """Seeded random train/test partitions, one per repetition.

    Within each stratum (all records when ``stratify`` is None) the first
    ``floor(n * train_fraction)`` shuffled records train and the rest test.
    """
    records = list(records)
    if len(records) < 3:
        raise TooFewRecords(f"need at least 3 records to split, got {len(records)}")
    frac = Fraction(spec.train_fraction).limit_denominator(10_000)
    groups: dict = {}
    for i, r in enumerate(records):
        groups.setdefault(stratify(r) if stratify else None, []).append(i)
    out = []
    for rep in range(spec.repetitions):
        train_idx, test_idx = [], []
        for key in sorted(groups, key=repr):
            idx = np.array(groups[key])
            perm = derive_rng(spec.seed, "split", rep, repr(key)).permutation(idx.size)
            n_train = math.floor(idx.size * frac)
            train_idx += idx[perm[:n_train]].tolist()
            test_idx += idx[perm[n_train:]].tolist()
        out.append(([records[i] for i in sorted(train_idx)], [records[i] for i in sorted(test_idx)]))
    return out


# ---------------------------------------------------------------- CSV


def feature_names(n_features: int) -> list[str]:
    """Column names for a feature length produced by some ``rmax`` / cardinality flag."""
    for with_card in (False, True):
        per = 4 if with_card else 2
        if n_features % per == 0 and (n_features // per) % 2 == 1:
            return SvsdVector.names((n_features // per - 1) // 2, with_card)
    return [f"f{i}" for i in range(n_features)]


def dataset_to_csv(records) -> str:
    n = records[0].features.size if records else 2 * (2 * DEFAULT_RMAX + 1)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sequence_id", "frame", "tag", *feature_names(n), "target"])
    for r in records:
        w.writerow([r.sequence_id, r.frame_index, r.tag, *map(repr, r.features.tolist()), repr(float(r.target_vsd))])
    return buf.getvalue()


def save_dataset(path, records) -> None:
    write_atomic(path, dataset_to_csv(records))


def load_dataset(path) -> list[DatasetRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: empty file") from None
        if header[:3] != ["sequence_id", "frame", "tag"] or header[-1] != "target":
            raise InvariantViolation(f"{path}: unexpected dataset header")
        records = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DimensionMismatch(f"{path}:{line_no}: expected {len(header)} columns, got {len(row)}")
            feats = np.array([float(v) for v in row[3:-1]])
            records.append(DatasetRecord(row[0], int(row[1]), row[2], feats, float(row[-1])))
    return records


def svsd_row_csv(frame_id, vector: SvsdVector, header: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(["frame_id", *SvsdVector.names(vector.rmax, vector.with_cardinality)])
    w.writerow([frame_id, *map(repr, vector.values.tolist())])
    return buf.getvalue()


def read_csv_rows(path: Path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))
