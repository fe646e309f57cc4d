"""Depth-completion error metrics and the sweep CSV report."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .depthmap import DepthMap
from .errors import ComputeError, InputError

CSV_COLUMNS = ("density", "mode", "rmse_mm", "mae_mm", "irmse_per_km", "imae_per_km",
               "rel", "delta1", "delta2", "delta3", "n_pixels")
_DECIMALS = {"rmse_mm": 2, "mae_mm": 2, "irmse_per_km": 2, "imae_per_km": 2,
             "rel": 4, "delta1": 2, "delta2": 2, "delta3": 2}
_MODE_ORDER = {"full": 0, "uniform": 1, "horizontal": 2, "vertical": 3, "random_n": 4, "mde": 5}


@dataclass(frozen=True)
class MetricReport:
    rmse: float    # mm
    mae: float     # mm
    irmse: float   # 1/km
    imae: float    # 1/km
    rel: float
    delta1: float  # percent
    delta2: float
    delta3: float
    n_evaluated: int

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def evaluate(pred: DepthMap, gt: DepthMap) -> MetricReport:
    """Errors of ``pred`` over the valid pixels of ``gt``."""
    if pred.shape != gt.shape:
        raise InputError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    mask = gt.valid
    if not mask.any():
        raise InputError("ground truth has no valid pixels")
    missing = mask & ~pred.valid
    if missing.any():
        v, u = np.argwhere(missing)[0]
        raise InputError(f"prediction has no positive depth at evaluated pixel (u={u}, v={v})")
    p = pred.values[mask]
    g = gt.values[mask]
    err = p - g
    inv_err = 1000.0 / p - 1000.0 / g
    ratio = np.maximum(p / g, g / p)
    report = MetricReport(
        rmse=1000.0 * math.sqrt(np.mean(err ** 2)),
        mae=1000.0 * float(np.mean(np.abs(err))),
        irmse=math.sqrt(np.mean(inv_err ** 2)),
        imae=float(np.mean(np.abs(inv_err))),
        rel=float(np.mean(np.abs(err) / g)),
        delta1=100.0 * float(np.mean(ratio < 1.25)),
        delta2=100.0 * float(np.mean(ratio < 1.25 ** 2)),
        delta3=100.0 * float(np.mean(ratio < 1.25 ** 3)),
        n_evaluated=int(mask.sum()),
    )
    values = astuple(report)
    if not all(math.isfinite(x) for x in values):
        raise ComputeError(f"non-finite metric: {report}")
    # power-mean inequality, up to rounding
    if report.rmse < report.mae * (1 - 1e-12):
        raise ComputeError(f"rmse {report.rmse} < mae {report.mae}")
    return report


def _row_label(spec):
    if spec is None:
        return 0.0, "mde"
    if spec.mode == "random_n":
        return float(spec.n_points), "random_n"
    if spec.ratio == 1.0:
        return 1.0, "full"
    return float(spec.ratio), spec.mode


def sweep_report(results) -> str:
    """CSV with one row per ``(SamplingSpec | None, MetricReport | None)`` entry.

    ``None`` as the spec marks the dense-only baseline (density 0, mode
    ``mde``); ``None`` as the report marks a failed cell (metrics ``nan``,
    ``n_pixels`` 0). Rows are ordered by density, descending. ``density`` is
    the sampling ratio, or the point count for ``random_n``.
    """
    rows = []
    for spec, report in results:
        density, mode = _row_label(spec)
        rows.append((density, mode, report))
    rows.sort(key=lambda r: (-r[0], _MODE_ORDER.get(r[1], 9)))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for density, mode, report in rows:
        if report is None:
            cells = ["nan"] * len(_DECIMALS) + ["0"]
        else:
            cells = [f"{getattr(report, _field(col)):.{k}f}" for col, k in _DECIMALS.items()]
            cells.append(str(report.n_evaluated))
        writer.writerow([repr(density), mode, *cells])
    return buf.getvalue()


def _field(column):
    return {"rmse_mm": "rmse", "mae_mm": "mae", "irmse_per_km": "irmse",
            "imae_per_km": "imae"}.get(column, column)


def parse_sweep_report(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise InputError(f"unexpected sweep CSV header {reader.fieldnames}")
    out = []
    for row in reader:
        parsed = {"density": float(row["density"]), "mode": row["mode"], "n_pixels": int(row["n_pixels"])}
        for col in _DECIMALS:
            parsed[col] = float(row[col])
        out.append(parsed)
    return out
