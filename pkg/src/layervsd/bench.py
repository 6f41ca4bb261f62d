"""Per-frame timing of S-VSD extraction routes and full view synthesis."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import degrade, derive_rng, synth_scene
from .dibr import synthesize
from .geometry import VIEWS, delta_map, view_disparity
from .layers import DEFAULT_RMAX, fast_pipeline, full_pipeline
from .media_io import DEFAULT_RIG, CameraRig

STAGES = ("fast_pipeline", "full_pipeline", "synthesis")


@dataclass
class BenchRow:
    stage: str
    mode: str  # "single" or "parallel"
    frames: int
    mean_seconds: float
    work: int  # layer pairs produced, or pixels synthesized

    def as_list(self):
        return [self.stage, self.mode, self.frames, f"{self.mean_seconds:.6f}", self.work]


def _layers(route, deltas, disp, rmax, pool):
    def one(view):
        if route == "fast_pipeline":
            return fast_pipeline(deltas[view], view, rmax)
        return full_pipeline(deltas[view], *disp[view], view, rmax)

    sets = list(pool.map(one, VIEWS)) if pool else [one(v) for v in VIEWS]
    return sum(layer.cardinality for ls in sets for layer in ls.layers.values())


def bench_frames(width: int, height: int, frames: int, seed: int = 0, level: int = 4,
                 rig: CameraRig = DEFAULT_RIG):
    """Synthetic original/decoded frame pairs used for timing."""
    out = []
    for t in range(frames):
        scene_seed = int(derive_rng(seed, "bench", t).integers(0, 2**31))
        orig = synth_scene(scene_seed, width, height, 0, rig)
        out.append((orig, degrade(orig, level, scene_seed)))
    return out


def run_bench(pairs, rig: CameraRig = DEFAULT_RIG, threads: int = 1, rmax: int = DEFAULT_RMAX,
              stages=STAGES) -> list[BenchRow]:
    """Mean seconds per frame for every stage, single-threaded and with ``threads`` workers."""
    prepared = []
    for orig, dec in pairs:
        disp = {v: (view_disparity(orig.depth(v), rig, v), view_disparity(dec.depth(v), rig, v)) for v in VIEWS}
        deltas = {v: delta_map(*disp[v]) for v in VIEWS}
        prepared.append((orig, dec, disp, deltas))

    modes = [("single", 1), ("parallel", max(2, threads))]
    rows = []
    for stage in stages:
        for mode, n_threads in modes:
            pool = ThreadPoolExecutor(max_workers=n_threads) if mode == "parallel" else None
            times, work = [], 0
            try:
                for orig, dec, disp, deltas in prepared:
                    t0 = time.perf_counter()
                    if stage == "synthesis":
                        synthesize(orig, rig, threads=n_threads)
                        synthesize(dec, rig, threads=n_threads)
                        work += 2 * int(np.prod(orig.shape))
                    else:
                        work += _layers(stage, deltas, disp, rmax, pool)
                    times.append(time.perf_counter() - t0)
            finally:
                if pool:
                    pool.shutdown()
            rows.append(BenchRow(stage, mode, len(prepared), float(np.mean(times)) if times else 0.0, work))
    return rows
