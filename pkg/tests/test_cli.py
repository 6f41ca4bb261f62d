import csv
import io

import numpy as np
import pytest

from layervsd import cli
from layervsd.dataset import load_dataset
from layervsd.layers import LayerSet


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def scene(tmp_path, capsys):
    code, _, _ = run(capsys, "gen-scene", "--out", tmp_path / "sc", "--width", 64, "--height", 48,
                     "--frames", 2, "--seed", 3)
    assert code == 0
    return tmp_path / "sc"


def size(w=64, h=48):
    return ["--width", w, "--height", h]


def test_identical_inputs_report_zero_vsd(scene, tmp_path, capsys):
    code, out, _ = run(capsys, "synthesize", "--orig", scene / "orig", "--dec", scene / "orig",
                       "--rig", scene / "rig.json", *size(), "--out", tmp_path / "v.yuv")
    assert code == 0
    rows = [line.split("\t") for line in out.strip().splitlines()[1:]]
    assert len(rows) == 2
    assert all(float(r[1]) == 0.0 and r[2] == "inf" for r in rows)


def test_missing_rig_names_the_flag(scene, tmp_path, capsys):
    code, _, err = run(capsys, "synthesize", "--orig", scene / "orig", "--rig", tmp_path / "none.json",
                       *size(), "--out", tmp_path / "v.yuv")
    assert code == 2
    assert "--rig" in err
    code, _, err = run(capsys, "synthesize", "--orig", scene / "orig", *size(), "--out", tmp_path / "v.yuv")
    assert code == 2 and "--rig" in err


def test_rows_parallel_output_identical(scene, tmp_path, capsys):
    common = ["synthesize", "--orig", scene / "orig", "--dec", scene / "dec", "--rig", scene / "rig.json", *size()]
    assert run(capsys, *common, "--out", tmp_path / "a.yuv")[0] == 0
    assert run(capsys, *common, "--out", tmp_path / "b.yuv", "--rows-parallel", "--threads", 4)[0] == 0
    assert (tmp_path / "a.yuv").read_bytes() == (tmp_path / "b.yuv").read_bytes()
    assert (tmp_path / "a.yuv").stat().st_size == 2 * (64 * 48 * 3 // 2)


def test_svsd_check_on_fifty_frames(tmp_path, capsys):
    code, _, _ = run(capsys, "svsd", "--synthetic", 50, "--check", "--seed", 9, "--out", tmp_path / "s.csv")
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert len(rows) == 51 and len(rows[0]) == 27


def test_svsd_zero_distortion_row(scene, capsys):
    code, out, _ = run(capsys, "svsd", "--orig", scene / "orig", "--dec", scene / "orig", *size(),
                       "--rig", scene / "rig.json", "--with-cardinality")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert len(rows[0]) == 1 + 52
    for row in rows[1:]:
        values = [float(v) for v in row[1:]]
        assert not any(values[:26])
        # the level-0 layers cover every pixel when nothing moved
        assert values[26 + 6] == values[26 + 19] == 1.0


def test_debug_layers_partition(scene, tmp_path, capsys):
    code, _, _ = run(capsys, "svsd", "--orig", scene / "orig", "--dec", scene / "dec", *size(),
                     "--rig", scene / "rig.json", "--debug-layers", tmp_path / "dbg.csv", "--out", tmp_path / "s.csv")
    assert code == 0
    totals = {}
    for row in csv.DictReader(open(tmp_path / "dbg.csv")):
        key = (row["frame_id"], row["view"])
        totals[key] = totals.get(key, 0) + int(row["base_cardinality"])
    assert len(totals) == 4
    assert set(totals.values()) == {64 * 48}


def test_check_mismatch_exits_one(monkeypatch, capsys):
    real = cli._layers_of

    def broken(orig, dec, rig, rmax, method):
        ls = real(orig, dec, rig, rmax, method)
        if method == "full":
            return LayerSet(ls.shape, dict(list(ls.layers.items())[1:]), ls.bounds)
        return ls

    monkeypatch.setattr(cli, "_layers_of", broken)
    code, _, err = run(capsys, "svsd", "--synthetic", 2, "--check")
    assert code == 1
    assert "disagree" in err


def test_usage_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code == 2
    code, _, err = run(capsys, "svsd")
    assert code == 2
    code, _, _ = run(capsys, "dataset-build", "--levels", "0-9", "--out", "x.csv")
    assert code == 2


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    d = tmp_path_factory.mktemp("ds")
    assert cli.main(["dataset-build", "--scenes", "4", "--frames", "3", "--width", "64", "--height", "48",
                     "--seed", "2", "--out", str(d / "all.csv")]) == 0
    assert cli.main(["split", "--dataset", str(d / "all.csv"), "--out", str(d / "split")]) == 0
    assert cli.main(["train", "--dataset", str(d / "split/rep0_train.csv"), "--out", str(d / "m.json"),
                     "--linear-out", str(d / "lin.json"), "--rounds", "120"]) == 0
    return d


def test_dataset_build_is_reproducible(built, tmp_path, capsys):
    code, _, _ = run(capsys, "dataset-build", "--scenes", 4, "--frames", 3, *size(), "--seed", 2,
                     "--out", tmp_path / "again.csv")
    assert code == 0
    assert (tmp_path / "again.csv").read_bytes() == (built / "all.csv").read_bytes()
    assert len(load_dataset(built / "all.csv")) == 4 * 3 * 7


def median_rel(report_path):
    rows = list(csv.DictReader(open(report_path)))
    gt = np.array([float(r["gt_mse"]) for r in rows])
    pred = np.array([float(r["gbt_pred_mse"]) for r in rows])
    keep = gt > 0
    return float(np.median(np.abs(pred[keep] - gt[keep]) / gt[keep]))


def test_eval_train_beats_test(built, tmp_path, capsys):
    for part in ("train", "test"):
        code, _, _ = run(capsys, "eval", "--model", built / "m.json", "--dataset", built / f"split/rep0_{part}.csv",
                         "--out", tmp_path / f"{part}.csv")
        assert code == 0
    assert median_rel(tmp_path / "train.csv") < median_rel(tmp_path / "test.csv")


def test_eval_with_linear_has_two_prediction_columns(built, tmp_path, capsys):
    code, out, _ = run(capsys, "eval", "--model", built / "m.json", "--linear", built / "lin.json",
                       "--dataset", built / "split/rep0_test.csv", "--out", tmp_path / "r.csv", "--svg", tmp_path / "r.svg")
    assert code == 0
    header = (tmp_path / "r.csv").read_text().splitlines()[0].split(",")
    assert [h for h in header if h.endswith("_pred_mse")] == ["gbt_pred_mse", "linear_pred_mse"]
    assert "linear_mean_dmse" in out
    assert (tmp_path / "r.svg").read_text().startswith("<svg")


def test_protocol_emits_three_reports(built, tmp_path, capsys):
    args = ["eval", "--protocol", "--dataset", built / "all.csv", "--rounds", 40]
    assert run(capsys, *args, "--out", tmp_path / "p1")[0] == 0
    assert run(capsys, *args, "--out", tmp_path / "p2")[0] == 0
    reports = sorted(p.name for p in (tmp_path / "p1").glob("report_rep*.csv"))
    assert reports == ["report_rep0.csv", "report_rep1.csv", "report_rep2.csv"]
    for name in reports + ["summary.json"]:
        assert (tmp_path / "p1" / name).read_bytes() == (tmp_path / "p2" / name).read_bytes()


def test_predict_from_svsd_rows(built, tmp_path, capsys):
    run(capsys, "svsd", "--synthetic", 3, "--out", tmp_path / "s.csv")
    code, out, _ = run(capsys, "predict", "--model", built / "m.json", "--dataset", tmp_path / "s.csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["id"] for r in rows] == ["synth0000", "synth0001", "synth0002"]
    assert all(float(r["pred_mse"]) >= 0 for r in rows)


def test_predict_dimension_mismatch(built, tmp_path, capsys):
    run(capsys, "svsd", "--synthetic", 2, "--rmax", 2, "--out", tmp_path / "s.csv")
    code, _, err = run(capsys, "predict", "--model", built / "m.json", "--dataset", tmp_path / "s.csv")
    assert code == 2 and "features" in err


def test_missing_model(built, tmp_path, capsys):
    code, _, _ = run(capsys, "eval", "--model", tmp_path / "nope.json", "--dataset", built / "all.csv",
                     "--out", tmp_path / "r.csv")
    assert code == 2


def test_plot_from_report(built, tmp_path, capsys):
    run(capsys, "eval", "--model", built / "m.json", "--dataset", built / "split/rep0_test.csv",
        "--out", tmp_path / "r.csv")
    assert run(capsys, "plot", "--report", tmp_path / "r.csv", "--out", tmp_path / "p.svg")[0] == 0
    svg = (tmp_path / "p.svg").read_text()
    assert svg.count("<polyline") == 4  # ground truth and gbt, for MSE and PSNR


def test_bench_rows_and_counters(tmp_path, capsys):
    args = ["bench", *size(48, 32), "--frames", 2, "--threads", 2]
    code, out1, _ = run(capsys, *args, "--out", tmp_path / "b.csv")
    assert code == 0
    _, out2, _ = run(capsys, *args)
    rows1 = list(csv.DictReader(io.StringIO(out1)))
    rows2 = list(csv.DictReader(io.StringIO(out2)))
    assert [(r["stage"], r["mode"]) for r in rows1] == [
        (s, m) for s in ("fast_pipeline", "full_pipeline", "synthesis") for m in ("single", "parallel")]
    assert [r["work"] for r in rows1] == [r["work"] for r in rows2]
