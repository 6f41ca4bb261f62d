"""Command-line entry point.

Exit codes: 0 success, 1 internal invariant violation, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .dataset import (
    LEVELS,
    SplitSpec,
    build_records,
    build_synthetic_dataset,
    dataset_to_csv,
    degrade,
    derive_rng,
    load_dataset,
    save_dataset,
    sort_records,
    split,
    svsd_row_csv,
    synth_scene,
    synth_sequence,
    to_arrays,
)
from .dibr import frame_mse, psnr, synthesize
from .errors import InputError, InternalError, PipelineMismatch
from .geometry import VIEWS, delta_map, view_disparity
from .layers import DEFAULT_RMAX, extract_layers, layer_mse, svsd
from .media_io import (
    DEFAULT_RIG,
    TEXTURE,
    SequencePair,
    load_planes,
    load_rig,
    load_sequence_dir,
    save_rig,
    save_sequence_dir,
    write_atomic,
    plane_bytes,
)
from .regressor import HyperParams, load_model, save_model, train, train_linear
from .report import EvalReport, report_svg, svg_from_report_csv

log = logging.getLogger("layervsd")


class UsageError(InputError):
    pass


# ---------------------------------------------------------------- helpers


def _rig(args, required: bool = False):
    if args.rig is None:
        if required:
            raise UsageError("--rig is required for this command")
        return DEFAULT_RIG
    if not Path(args.rig).is_file():
        raise UsageError(f"--rig: file not found: {args.rig}")
    return load_rig(args.rig)


def _need_size(args):
    if args.width is None or args.height is None:
        raise UsageError("--width and --height are required when reading raw planes")
    return args.width, args.height


def _synthetic_frames(args, n: int, tag: str):
    """``n`` independent synthetic original/decoded frame pairs with random levels."""
    rig = _rig(args)
    w, h = args.width or 64, args.height or 48
    out = []
    for t in range(n):
        rng = derive_rng(args.seed, tag, t)
        scene_seed = int(rng.integers(0, 2**31))
        level = int(rng.integers(1, len(LEVELS) + 1))
        orig = synth_scene(scene_seed, w, h, 0, rig)
        out.append((f"synth{t:04d}", orig, degrade(orig, level, scene_seed)))
    return rig, out


def _dir_frames(args, need_dec: bool = True):
    rig = _rig(args)
    w, h = _need_size(args)
    orig = load_sequence_dir(args.orig, w, h, args.frames)
    if args.dec is None:
        if need_dec:
            raise UsageError("--dec is required unless --synthetic is given")
        return rig, [(str(i), f, None) for i, f in enumerate(orig)]
    dec = load_sequence_dir(args.dec, w, h, len(orig))
    pair = SequencePair(orig, dec, rig)
    return rig, [(str(i), o, d) for i, (o, d) in enumerate(zip(pair.original, pair.decoded))]


def _layers_of(orig, dec, rig, rmax, method):
    deltas, disparities = {}, {}
    for view in VIEWS:
        phi = view_disparity(orig.depth(view), rig, view)
        phi_dec = view_disparity(dec.depth(view), rig, view)
        deltas[view] = delta_map(phi, phi_dec)
        disparities[view] = (phi, phi_dec)
    return extract_layers(deltas, disparities, method=method, rmax=rmax)


def _planes_bytes(planes) -> bytes:
    return b"".join(plane_bytes(p, TEXTURE) for p in planes)


def _hyper(args) -> HyperParams:
    return HyperParams(
        rounds=args.rounds, eta=args.eta, max_depth=args.max_depth, reg_lambda=args.reg_lambda,
        gamma=args.gamma, subsample=args.subsample, colsample=args.colsample,
        min_child_weight=args.min_child_weight, seed=args.seed,
        early_stopping=args.early_stopping, validation_fraction=args.validation_fraction,
    )


def _load_features(path):
    """Feature rows from a dataset CSV or an svsd CSV: (ids, X, y or None)."""
    text = Path(path).read_text()
    first = text.split("\n", 1)[0]
    if first.startswith("frame_id"):
        rows = list(csv.reader(io.StringIO(text)))[1:]
        return [r[0] for r in rows], np.array([[float(v) for v in r[1:]] for r in rows]), None
    records = load_dataset(path)
    X, y = to_arrays(records)
    ids = [f"{r.sequence_id}/{r.frame_index}/{r.tag}" for r in records]
    return ids, X, y


def _parse_levels(text: str):
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out += range(int(lo), int(hi) + 1)
        else:
            out.append(int(part))
    bad = [lv for lv in out if lv not in LEVELS]
    if bad:
        raise UsageError(f"--levels: unknown degradation levels {bad}; valid are {LEVELS[0]}-{LEVELS[-1]}")
    return tuple(out)


# ---------------------------------------------------------------- commands


def cmd_gen_scene(args):
    rig = _rig(args)
    w, h = args.width or 128, args.height or 96
    frames = args.frames or 1
    orig = synth_sequence(args.seed, w, h, frames, rig)
    dec = [degrade(f, args.level, args.seed * 131 + t) for t, f in enumerate(orig)]
    out = Path(args.out)
    save_sequence_dir(out / "orig", orig)
    save_sequence_dir(out / "dec", dec)
    save_rig(out / "rig.json", rig)
    print(f"wrote {frames} frame(s) of {w}x{h} to {out}/orig and {out}/dec")
    return 0


def cmd_synthesize(args):
    rig = _rig(args, required=True)
    w, h = _need_size(args)
    threads = max(args.threads, 2) if args.rows_parallel else args.threads
    orig = load_sequence_dir(args.orig, w, h, args.frames)
    views = [synthesize(f, rig, threads=threads) for f in orig]
    write_atomic(args.out, _planes_bytes(views))
    other, label = None, None
    if args.dec is not None:
        dec = load_sequence_dir(args.dec, w, h, len(orig))
        SequencePair(orig, dec, rig)
        other = [synthesize(f, rig, threads=threads) for f in dec]
        if args.out_dec:
            write_atomic(args.out_dec, _planes_bytes(other))
        label = "vsd_mse"
    elif args.reference is not None:
        other = load_planes(args.reference, w, h, TEXTURE, len(orig))
        label = "mse"
    if other is not None:
        print(f"frame\t{label}\tpsnr_db")
        for i, (a, b) in enumerate(zip(views, other)):
            mse = frame_mse(a, b)
            print(f"{i}\t{mse:.6f}\t{psnr(mse):.4f}")
    return 0


def cmd_svsd(args):
    if args.synthetic is not None:
        rig, frames = _synthetic_frames(args, args.synthetic, "svsd")
    elif args.orig is not None:
        rig, frames = _dir_frames(args)
    else:
        raise UsageError("svsd needs --orig/--dec or --synthetic N")
    rows, debug, mismatches = [], [], 0
    for i, (frame_id, orig, dec) in enumerate(frames):
        layers = _layers_of(orig, dec, rig, args.rmax, "fast")
        if args.check:
            full = _layers_of(orig, dec, rig, args.rmax, "full")
            if layers != full:
                mismatches += 1
                for line in layers.differences(full)[:10]:
                    log.error("frame %s: %s", frame_id, line)
        vec = svsd(layers, orig.left_texture, orig.right_texture, dec.left_texture, dec.right_texture,
                   args.rmax, args.with_cardinality)
        rows.append(svsd_row_csv(frame_id, vec, header=(i == 0)))
        if args.debug_layers:
            for (view, level), layer in sorted(layers.layers.items()):
                L = layer_mse(layer, orig.texture(view), dec.texture(view))
                debug.append([frame_id, view, level, layer.base_cardinality, layer.cardinality, repr(L)])
    text = "".join(rows)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    if args.debug_layers:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame_id", "view", "level", "base_cardinality", "cardinality", "L"])
        w.writerows(debug)
        write_atomic(args.debug_layers, buf.getvalue())
    if mismatches:
        raise PipelineMismatch(f"fast and full layer extraction disagree on {mismatches} frame(s)")
    if args.check:
        log.info("check passed on %d frame(s)", len(frames))
    return 0


def cmd_dataset_build(args):
    t0 = time.perf_counter()
    if args.orig is not None:
        rig, frames = _dir_frames(args)
        pair = SequencePair([f[1] for f in frames], [f[2] for f in frames], rig)
        records = build_records(pair, args.sequence_id, args.tag, args.rmax, args.with_cardinality)
        records = sort_records(records)
    else:
        records = build_synthetic_dataset(
            scenes=args.scenes, frames=args.frames or 5, levels=_parse_levels(args.levels),
            width=args.width or 128, height=args.height or 96, seed=args.seed, rig=_rig(args),
            rmax=args.rmax, with_cardinality=args.with_cardinality,
        )
    save_dataset(args.out, records)
    log.info("built %d records in %.2f s", len(records), time.perf_counter() - t0)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


_STRATA = {
    "none": None,
    "tag": lambda r: r.tag,
    "sequence": lambda r: r.sequence_id,
}


def cmd_split(args):
    records = load_dataset(args.dataset)
    spec = SplitSpec(args.train_fraction, args.repetitions, args.seed)
    out = Path(args.out)
    for k, (tr, te) in enumerate(split(records, spec, _STRATA[args.stratify])):
        write_atomic(out / f"rep{k}_train.csv", dataset_to_csv(tr))
        write_atomic(out / f"rep{k}_test.csv", dataset_to_csv(te))
        print(f"rep{k}: {len(tr)} train, {len(te)} test")
    return 0


def cmd_train(args):
    X, y = to_arrays(load_dataset(args.dataset))
    t0 = time.perf_counter()
    model = train(X, y, _hyper(args))
    log.info("trained %d trees in %.2f s", len(model.trees), time.perf_counter() - t0)
    save_model(args.out, model)
    print(f"wrote model with {len(model.trees)} trees to {args.out}")
    if args.linear_out:
        save_model(args.linear_out, train_linear(X, y))
        print(f"wrote linear baseline to {args.linear_out}")
    return 0


def cmd_predict(args):
    model = load_model(args.model)
    ids, X, _ = _load_features(args.dataset)
    pred = model.predict(X)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "pred_mse", "pred_psnr"])
    for i, p in zip(ids, pred):
        w.writerow([i, repr(float(p)), repr(float(psnr(p)))])
    if args.out:
        write_atomic(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _evaluate(gbt, linear, X, y, ids, name_out: Path, svg_out: Path | None, title: str):
    preds = {"gbt": gbt.predict(X)}
    if linear is not None:
        preds["linear"] = linear.predict(X)
    report = EvalReport(ids, y, preds)
    write_atomic(name_out, report.rows_csv())
    if svg_out is not None:
        write_atomic(svg_out, report_svg(report, title))
    return report


def cmd_eval(args):
    if args.protocol:
        return _eval_protocol(args)
    if args.model is None:
        raise UsageError("--model is required unless --protocol is given")
    gbt = load_model(args.model)
    linear = load_model(args.linear) if args.linear else None
    ids, X, y = _load_features(args.dataset)
    if y is None:
        raise UsageError("--dataset must carry targets for eval")
    svg = Path(args.svg) if args.svg else None
    report = _evaluate(gbt, linear, X, y, ids, Path(args.out), svg, Path(args.dataset).name)
    sys.stdout.write(report.summary_text())
    return 0


def _eval_protocol(args):
    records = load_dataset(args.dataset)
    spec = SplitSpec(args.train_fraction, args.repetitions, args.seed)
    out = Path(args.out)
    summary = []
    hyper = _hyper(args)
    for k, (tr, te) in enumerate(split(records, spec, _STRATA[args.stratify])):
        Xtr, ytr = to_arrays(tr)
        Xte, yte = to_arrays(te)
        t0 = time.perf_counter()
        gbt = train(Xtr, ytr, hyper)
        t1 = time.perf_counter()
        linear = train_linear(Xtr, ytr)
        ids = [f"{r.sequence_id}/{r.frame_index}/{r.tag}" for r in te]
        report = _evaluate(gbt, linear, Xte, yte, ids, out / f"report_rep{k}.csv",
                           out / f"report_rep{k}.svg", f"repetition {k}")
        agg = report.aggregates()
        summary.append({"repetition": k, "train": len(tr), "test": len(te), "trees": len(gbt.trees), **agg})
        log.info("rep %d: gbt trained in %.2f s", k, t1 - t0)
        print(f"rep{k}: gbt median rel err {agg['gbt_median_rel_err']:.4f}, "
              f"mean dMSE gbt {agg['gbt_mean_dmse']:.4f} vs linear {agg['linear_mean_dmse']:.4f}")
    write_atomic(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_bench(args):
    rig = _rig(args)
    pairs = bench_mod.bench_frames(args.width or 1024, args.height or 768, args.frames or 25, args.seed, rig=rig)
    rows = bench_mod.run_bench(pairs, rig, threads=args.threads, rmax=args.rmax)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "mode", "frames", "mean_seconds", "work"])
    w.writerows(r.as_list() for r in rows)
    if args.out:
        write_atomic(args.out, buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_plot(args):
    text = Path(args.report).read_text()
    write_atomic(args.out, svg_from_report_csv(text, args.title or Path(args.report).name))
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------- parser


def _common(p, *, size=True, frames=True, rmax=False, threads=False):
    p.add_argument("--rig", help="camera rig JSON (fB_left, fB_right, z_near, z_far, u0, u1)")
    p.add_argument("--seed", type=int, default=0)
    if size:
        p.add_argument("--width", type=int)
        p.add_argument("--height", type=int)
    if frames:
        p.add_argument("--frames", type=int, help="number of frames to read or generate")
    if rmax:
        p.add_argument("--rmax", type=int, default=DEFAULT_RMAX, help="largest |level| kept as its own feature")
        p.add_argument("--with-cardinality", action="store_true", help="append normalised layer sizes")
    if threads:
        p.add_argument("--threads", type=int, default=1)


def _pair_inputs(p):
    p.add_argument("--orig", help="directory with the original sequence planes")
    p.add_argument("--dec", help="directory with the decoded sequence planes")


def _hyper_flags(p, seed_default=1000):
    d = HyperParams()
    p.add_argument("--rounds", type=int, default=d.rounds)
    p.add_argument("--eta", type=float, default=d.eta)
    p.add_argument("--max-depth", type=int, default=d.max_depth)
    p.add_argument("--reg-lambda", type=float, default=d.reg_lambda)
    p.add_argument("--gamma", type=float, default=d.gamma)
    p.add_argument("--subsample", type=float, default=d.subsample)
    p.add_argument("--colsample", type=float, default=d.colsample)
    p.add_argument("--min-child-weight", type=float, default=d.min_child_weight)
    p.add_argument("--early-stopping", type=int, default=d.early_stopping, help="patience in rounds, 0 disables")
    p.add_argument("--validation-fraction", type=float, default=d.validation_fraction)
    p.set_defaults(seed=seed_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layervsd", description="Layer-based view synthesis distortion toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="write a synthetic original/decoded sequence pair and rig")
    _common(p)
    p.add_argument("--level", type=int, default=4, choices=LEVELS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("synthesize", help="render the virtual view and report VSD / PSNR")
    _common(p, threads=True)
    _pair_inputs(p)
    p.add_argument("--reference", help="texture YUV file to compare the virtual view against")
    p.add_argument("--rows-parallel", action="store_true", help="split rows across worker threads")
    p.add_argument("--out", required=True, help="virtual view of --orig (YUV 4:2:0, neutral chroma)")
    p.add_argument("--out-dec", help="virtual view of --dec")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("svsd", help="S-VSD feature rows per frame")
    _common(p, rmax=True)
    _pair_inputs(p)
    p.add_argument("--synthetic", type=int, metavar="N", help="use N seeded synthetic frame pairs")
    p.add_argument("--check", action="store_true", help="also run the element-wise pipeline and compare")
    p.add_argument("--debug-layers", metavar="CSV", help="dump per-layer cardinalities and S-VSD")
    p.add_argument("--out")
    p.set_defaults(func=cmd_svsd)

    p = sub.add_parser("dataset-build", help="build a feature/target CSV")
    _common(p, rmax=True)
    _pair_inputs(p)
    p.add_argument("--scenes", type=int, default=30)
    p.add_argument("--levels", default=f"{LEVELS[0]}-{LEVELS[-1]}")
    p.add_argument("--sequence-id", default="seq")
    p.add_argument("--tag", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset_build)

    p = sub.add_parser("split", help="seeded train/test partitions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--train-fraction", type=float, default=2 / 3)
    p.add_argument("--stratify", choices=sorted(_STRATA), default="tag")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="fit the boosted-tree regressor")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--linear-out", help="also fit and save the linear baseline")
    p.add_argument("--seed", type=int)
    _hyper_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict VSD from feature rows")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True, help="dataset CSV or svsd CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="per-frame report and chart")
    p.add_argument("--model")
    p.add_argument("--linear", help="linear baseline model for a second prediction column")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="report CSV, or output directory with --protocol")
    p.add_argument("--svg")
    p.add_argument("--protocol", action="store_true", help="split, train and evaluate per repetition")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--train-fraction", type=float, default=2 / 3)
    p.add_argument("--stratify", choices=sorted(_STRATA), default="tag")
    p.add_argument("--seed", type=int)
    _hyper_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time layer extraction routes and synthesis")
    _common(p, rmax=True, threads=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench, threads=4)

    p = sub.add_parser("plot", help="SVG chart from a report CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
