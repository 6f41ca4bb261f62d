"""Raw plane, rig and sequence-pair I/O.

Planes are ``numpy.uint8`` arrays of shape ``(height, width)``. Texture
files are 8-bit planar 4:2:0 and only the luma plane is read; depth
files are single 8-bit planes.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, FileTooShort, InvariantViolation, MissingField

TEXTURE = "texture"
DEPTH = "depth"

RIG_FIELDS = ("fB_left", "fB_right", "z_near", "z_far", "u0", "u1")

# file names inside a sequence directory
SEQUENCE_FILES = {
    "left_texture": ("left_texture.yuv", TEXTURE),
    "left_depth": ("left_depth.yuv", DEPTH),
    "right_texture": ("right_texture.yuv", TEXTURE),
    "right_depth": ("right_depth.yuv", DEPTH),
}


def frame_stride(width: int, height: int, kind: str = DEPTH) -> int:
    """Bytes per frame for the given layout."""
    if width < 1 or height < 1:
        raise DimensionMismatch(f"invalid plane size {width}x{height}")
    if kind == DEPTH:
        return width * height
    if kind == TEXTURE:
        chroma = ((width + 1) // 2) * ((height + 1) // 2)
        return width * height + 2 * chroma
    raise ValueError(f"unknown plane kind {kind!r}")


def load_plane(path, width: int, height: int, frame_index: int = 0, kind: str = DEPTH) -> np.ndarray:
    """Read one luma/depth plane from a raw file.

    Raises:
        FileTooShort: the file does not contain frame ``frame_index``.
        DimensionMismatch: non-positive dimensions.
    """
    stride = frame_stride(width, height, kind)
    size = os.path.getsize(path)
    if frame_index < 0 or size < (frame_index + 1) * stride:
        raise FileTooShort(
            f"{path}: {size} bytes, need {(frame_index + 1) * stride} for frame {frame_index} "
            f"of a {width}x{height} {kind} file"
        )
    with open(path, "rb") as fh:
        fh.seek(frame_index * stride)
        buf = fh.read(width * height)
    return np.frombuffer(buf, dtype=np.uint8).reshape(height, width).copy()


def count_frames(path, width: int, height: int, kind: str = DEPTH) -> int:
    return os.path.getsize(path) // frame_stride(width, height, kind)


def load_planes(path, width: int, height: int, kind: str = DEPTH, frames: int | None = None) -> list[np.ndarray]:
    n = count_frames(path, width, height, kind) if frames is None else frames
    return [load_plane(path, width, height, i, kind) for i in range(n)]


def plane_bytes(plane: np.ndarray, kind: str) -> bytes:
    plane = check_plane(plane)
    if kind == DEPTH:
        return plane.tobytes()
    h, w = plane.shape
    chroma = np.full(2 * ((w + 1) // 2) * ((h + 1) // 2), 128, dtype=np.uint8)
    return plane.tobytes() + chroma.tobytes()


def save_planes(path, planes, kind: str = DEPTH) -> None:
    """Write planes back to back; texture frames get neutral (128) chroma."""
    write_atomic(path, b"".join(plane_bytes(p, kind) for p in planes))


def save_plane(path, plane: np.ndarray, kind: str = DEPTH) -> None:
    save_planes(path, [plane], kind)


def check_plane(plane) -> np.ndarray:
    arr = np.asarray(plane)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"plane must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise InvariantViolation("plane samples must be 8-bit")
        arr = arr.astype(np.uint8)
    return arr


def write_atomic(path, data: bytes | str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class CameraRig:
    """1-D parallel camera rig.

    ``fB_*`` is the focal length times baseline product of each reference
    view; ``u0``/``u1`` are the blending weights of the left/right warps.
    """

    fB_left: float
    fB_right: float
    z_near: float
    z_far: float
    u0: float = 0.5
    u1: float = 0.5

    def __post_init__(self):
        for name in RIG_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvariantViolation(f"rig field {name} must be a finite number, got {value!r}")
        if not (self.fB_left > 0 and self.fB_right > 0):
            raise InvariantViolation("fB_left and fB_right must be positive")
        if not (0 < self.z_near < self.z_far):
            raise InvariantViolation(f"need 0 < z_near < z_far, got {self.z_near}, {self.z_far}")
        if not (0 < self.u0 < 1 and 0 < self.u1 < 1):
            raise InvariantViolation("blend weights must lie in (0, 1)")
        if not math.isclose(self.u0 + self.u1, 1.0, rel_tol=0, abs_tol=1e-9):
            raise InvariantViolation(f"blend weights must sum to 1, got {self.u0} + {self.u1}")

    def fB(self, view: str) -> float:
        return self.fB_left if view == "left" else self.fB_right

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "CameraRig":
        missing = [k for k in RIG_FIELDS if k not in doc]
        if missing:
            raise MissingField(f"rig is missing field(s): {', '.join(missing)}")
        return cls(**{k: doc[k] for k in RIG_FIELDS})


# desk-scale default: disparities of roughly 2..20 px over the 8-bit depth range
DEFAULT_RIG = CameraRig(fB_left=200.0, fB_right=200.0, z_near=10.0, z_far=100.0, u0=0.5, u1=0.5)


def load_rig(path) -> CameraRig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MissingField(f"{path}: not a JSON document ({exc})") from exc
    if not isinstance(doc, dict):
        raise MissingField(f"{path}: expected a key/value document")
    return CameraRig.from_dict(doc)


def save_rig(path, rig: CameraRig) -> None:
    write_atomic(path, json.dumps(rig.to_dict(), indent=2) + "\n")


@dataclass
class StereoFrame:
    """Left/right texture luma and depth planes of one time instant."""

    left_texture: np.ndarray
    left_depth: np.ndarray
    right_texture: np.ndarray
    right_depth: np.ndarray

    def __post_init__(self):
        planes = [check_plane(getattr(self, k)) for k in SEQUENCE_FILES]
        shapes = {p.shape for p in planes}
        if len(shapes) != 1:
            raise DimensionMismatch(f"stereo frame planes differ in size: {sorted(shapes)}")
        for key, plane in zip(SEQUENCE_FILES, planes):
            setattr(self, key, plane)

    @property
    def shape(self) -> tuple[int, int]:
        return self.left_texture.shape

    def texture(self, view: str) -> np.ndarray:
        return self.left_texture if view == "left" else self.right_texture

    def depth(self, view: str) -> np.ndarray:
        return self.left_depth if view == "left" else self.right_depth


@dataclass
class SequencePair:
    """Original and decoded stereo sequences sharing one rig."""

    original: list[StereoFrame]
    decoded: list[StereoFrame]
    rig: CameraRig = field(default=DEFAULT_RIG)

    def __post_init__(self):
        if len(self.original) != len(self.decoded):
            raise DimensionMismatch(
                f"original has {len(self.original)} frames, decoded has {len(self.decoded)}"
            )
        shapes = {f.shape for f in self.original} | {f.shape for f in self.decoded}
        if len(shapes) > 1:
            raise DimensionMismatch(f"frames differ in size: {sorted(shapes)}")

    def __len__(self):
        return len(self.original)


def load_sequence_dir(directory, width: int, height: int, frames: int | None = None) -> list[StereoFrame]:
    """Load ``left_texture.yuv``, ``left_depth.yuv``, ... from a directory."""
    directory = Path(directory)
    paths = {}
    for key, (name, kind) in SEQUENCE_FILES.items():
        p = directory / name
        if not p.exists():
            raise MissingField(f"{directory}: missing {name}")
        paths[key] = (p, kind)
    n = frames
    if n is None:
        n = min(count_frames(p, width, height, kind) for p, kind in paths.values())
    return [
        StereoFrame(**{key: load_plane(p, width, height, i, kind) for key, (p, kind) in paths.items()})
        for i in range(n)
    ]


def save_sequence_dir(directory, frames: list[StereoFrame]) -> None:
    directory = Path(directory)
    for key, (name, kind) in SEQUENCE_FILES.items():
        save_planes(directory / name, [getattr(f, key) for f in frames], kind)
