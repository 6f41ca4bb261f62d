"""Evaluation reports (per-frame MSE/PSNR rows plus aggregates) and SVG charts."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .dibr import psnr


@dataclass
class EvalReport:
    frames: list[str]
    gt_mse: np.ndarray
    pred_mse: dict[str, np.ndarray]  # method name -> predictions
    timings: dict[str, float] = field(default_factory=dict)

    def psnr(self, values) -> np.ndarray:
        return np.array([psnr(v) for v in values])

    def aggregates(self) -> dict[str, float]:
        out = {}
        gt_psnr = self.psnr(self.gt_mse)
        for name, pred in self.pred_mse.items():
            out[f"{name}_mean_dmse"] = float(np.mean(np.abs(self.gt_mse - pred)))
            dpsnr = np.abs(gt_psnr - self.psnr(pred))
            dpsnr = dpsnr[np.isfinite(dpsnr)]
            out[f"{name}_mean_dpsnr"] = float(np.mean(dpsnr)) if dpsnr.size else 0.0
            pos = self.gt_mse > 0
            rel = np.abs(pred[pos] - self.gt_mse[pos]) / self.gt_mse[pos]
            out[f"{name}_median_rel_err"] = float(np.median(rel)) if rel.size else 0.0
        out["gt_mean_mse"] = float(np.mean(self.gt_mse))
        for stage, seconds in self.timings.items():
            out[f"time_{stage}_s"] = seconds
        return out

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.pred_mse)
        header = ["frame", "gt_mse", "gt_psnr"]
        for n in names:
            header += [f"{n}_pred_mse", f"{n}_pred_psnr"]
        w.writerow(header)
        gt_psnr = self.psnr(self.gt_mse)
        preds = {n: (p, self.psnr(p)) for n, p in self.pred_mse.items()}
        for i, frame in enumerate(self.frames):
            row = [frame, repr(float(self.gt_mse[i])), repr(float(gt_psnr[i]))]
            for n in names:
                row += [repr(float(preds[n][0][i])), repr(float(preds[n][1][i]))]
            w.writerow(row)
        return buf.getvalue()

    def summary_text(self) -> str:
        return "".join(f"{k}\t{v:.6g}\n" for k, v in self.aggregates().items())


def read_report_csv(text: str) -> tuple[list[str], dict[str, list[float]]]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    cols = {h: [float(r[i]) for r in body] for i, h in enumerate(header) if h != "frame"}
    return [r[0] for r in body], cols


_COLORS = ["#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd"]


def _panel(series: dict[str, list[float]], x0, y0, w, h, title) -> list[str]:
    finite = [v for vals in series.values() for v in vals if math.isfinite(v)]
    lo, hi = (min(finite), max(finite)) if finite else (0.0, 1.0)
    if hi <= lo:
        hi = lo + 1.0
    n = max(len(v) for v in series.values()) if series else 1
    out = [
        f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#888"/>',
        f'<text x="{x0 + 4}" y="{y0 - 6}" font-size="12">{escape(title)} [{lo:.4g}, {hi:.4g}]</text>',
    ]
    for k, (name, vals) in enumerate(series.items()):
        pts = []
        for i, v in enumerate(vals):
            if not math.isfinite(v):
                continue
            px = x0 + (w * i / max(n - 1, 1))
            py = y0 + h - h * (v - lo) / (hi - lo)
            pts.append(f"{px:.2f},{py:.2f}")
        color = _COLORS[k % len(_COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{" ".join(pts)}"/>')
        out.append(f'<text x="{x0 + w - 150}" y="{y0 + 14 + 14 * k}" font-size="11" fill="{color}">{escape(name)}</text>')
    return out


def svg_chart(mse_series: dict[str, list[float]], psnr_series: dict[str, list[float]], title: str = "") -> str:
    """Two stacked line charts: MSE and PSNR per frame for each series."""
    width, height = 900, 560
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="20" y="20" font-size="14">{escape(title)}</text>',
    ]
    parts += _panel(mse_series, 50, 50, 820, 210, "MSE")
    parts += _panel(psnr_series, 50, 310, 820, 210, "PSNR (dB)")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def report_svg(report: EvalReport, title: str = "") -> str:
    mse = {"ground truth": report.gt_mse.tolist()}
    ps = {"ground truth": report.psnr(report.gt_mse).tolist()}
    for name, pred in report.pred_mse.items():
        mse[name] = pred.tolist()
        ps[name] = report.psnr(pred).tolist()
    return svg_chart(mse, ps, title)


def svg_from_report_csv(text: str, title: str = "") -> str:
    _, cols = read_report_csv(text)
    mse = {"ground truth": cols["gt_mse"]}
    ps = {"ground truth": cols["gt_psnr"]}
    for key in cols:
        if key.endswith("_pred_mse"):
            name = key[: -len("_pred_mse")]
            mse[name] = cols[key]
            ps[name] = cols[f"{name}_pred_psnr"]
    return svg_chart(mse, ps, title)
