"""No-reference image statistics and their deviation from a ground truth.

All metrics use the luma plane on the 0-255 scale.

* MG  (mean gradient): mean over interior pixels of
  ``sqrt((dx**2 + dy**2) / 2)`` with forward differences.
* EI  (edge intensity): mean over all pixels of the 3x3 Sobel magnitude,
  mirrored borders.
* IE  (information entropy): Shannon entropy, in bits, of the 256-bin
  histogram of the 8-bit luma.
* MGA (mean gray): mean of the 8-bit luma.

Relative values are absolute differences against the ground truth.
"""

import csv
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ShapeError
from .image_core import luma_plane, to_uint8

FORMULAS = {
    "mg": "mean_interior(sqrt((dx^2 + dy^2) / 2)), forward differences, luma 0-255",
    "ei": "mean(sqrt(Sx^2 + Sy^2)), 3x3 Sobel, mirrored borders, luma 0-255",
    "ie": "-sum(p * log2 p) over the 256-bin histogram of 8-bit luma",
    "mga": "mean of 8-bit luma",
}


def _luma255(img):
    return 255.0 * luma_plane(img)


def _luma8(img):
    return to_uint8(luma_plane(img))


def mean_gradient(img):
    p = _luma255(img)
    if p.shape[0] < 2 or p.shape[1] < 2:
        return 0.0
    dx = p[:-1, 1:] - p[:-1, :-1]
    dy = p[1:, :-1] - p[:-1, :-1]
    return float(np.mean(np.sqrt((dx ** 2 + dy ** 2) / 2.0)))


def edge_intensity(img):
    p = _luma255(img)
    sx = ndimage.sobel(p, axis=1, mode="mirror")
    sy = ndimage.sobel(p, axis=0, mode="mirror")
    return float(np.mean(np.hypot(sx, sy)))


def info_entropy(img):
    hist = np.bincount(_luma8(img).ravel(), minlength=256).astype(np.float64)
    prob = hist[hist > 0] / hist.sum()
    return float(max(0.0, -np.sum(prob * np.log2(prob))))


def mean_gray(img):
    return float(np.mean(_luma8(img), dtype=np.float64))


def relative_metric(gt_value, test_value):
    return abs(float(gt_value) - float(test_value))


@dataclass
class MetricReport:
    id: str
    mg: float
    ei: float
    ie: float
    mga: float
    mg_r: float
    ei_r: float
    ie_r: float
    mga_r: float
    # edge-coherence scores are not computed; kept so the schema is stable
    eco: Optional[float] = None
    eco_r: Optional[float] = None


CSV_COLUMNS = ("id", "mg", "ei", "ie", "mga", "mg_r", "ei_r", "ie_r", "mga_r")
_METRICS = (("mg", mean_gradient), ("ei", edge_intensity), ("ie", info_entropy), ("mga", mean_gray))


def evaluate_report(gt, test, ident=""):
    gt = np.asarray(gt, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if gt.shape[:2] != test.shape[:2]:
        raise ShapeError(f"ground truth {gt.shape[:2]} and test {test.shape[:2]} differ in size")
    values = {}
    for name, fn in _METRICS:
        g, t = fn(gt), fn(test)
        values[name] = t
        values[name + "_r"] = relative_metric(g, t)
    return MetricReport(id=ident, **values)


def mean_report(reports, ident="mean"):
    numeric = [f.name for f in fields(MetricReport) if f.name in CSV_COLUMNS[1:]]
    return MetricReport(id=ident, **{k: float(np.mean([getattr(r, k) for r in reports])) for k in numeric})


def write_report_csv(path, reports):
    """One row per report, then a ``mean`` row."""
    reports = list(reports)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key in ("mg", "ei", "ie", "mga"):
            fh.write(f"# {key}: {FORMULAS[key]}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        rows = reports + ([mean_report(reports)] if reports else [])
        for r in rows:
            writer.writerow([r.id] + [f"{getattr(r, k):.6f}" for k in CSV_COLUMNS[1:]])
