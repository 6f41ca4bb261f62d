import numpy as np
import pytest

from layervsd.geometry import VIEWS, delta_map, view_disparity
from layervsd.media_io import CameraRig, StereoFrame


def random_disparity_pair(rng, h, w, max_phi=12, max_shift=5):
    """Original disparity map plus a decoded map offset by a random shift field."""
    phi = rng.integers(0, max_phi + 1, size=(h, w))
    shift = rng.integers(-max_shift, max_shift + 1, size=(h, w))
    # bursts of zero shift keep large level-0 regions, as real data has
    shift[rng.random((h, w)) < 0.5] = 0
    return phi, phi + shift


def stereo_frame(rng, h, w, depth_values=None):
    depth_values = np.arange(256) if depth_values is None else np.asarray(depth_values)
    planes = {
        "left_texture": rng.integers(0, 256, (h, w)),
        "right_texture": rng.integers(0, 256, (h, w)),
        "left_depth": rng.choice(depth_values, (h, w)),
        "right_depth": rng.choice(depth_values, (h, w)),
    }
    return StereoFrame(**{k: v.astype(np.uint8) for k, v in planes.items()})


def frame_deltas(orig, dec, rig):
    deltas, disps = {}, {}
    for v in VIEWS:
        a = view_disparity(orig.depth(v), rig, v)
        b = view_disparity(dec.depth(v), rig, v)
        deltas[v] = delta_map(a, b)
        disps[v] = (a, b)
    return deltas, disps


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def rig1000():
    return CameraRig(1000, 1000, 10, 100, 0.5, 0.5)


ACCEPTANCE_LINES: dict[str, str] = {}


class _Criterion:
    def __init__(self, name):
        self.name = name
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        extra = self.detail if exc is None else f"{self.detail} {exc}".strip()
        line = f"{self.name}: {status}" + (f" ({extra})" if extra else "")
        ACCEPTANCE_LINES[self.name] = line.replace("\n", " ")[:300]
        print(line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
