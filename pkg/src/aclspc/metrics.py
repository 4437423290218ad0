"""Completion quality metrics: precision/coverage Chamfer split, UCD and UHD."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import as_cloud
from .loss import nearest
from .model import ModelParams, forward_complete


@dataclass
class MetricsReport:
    """Metrics of one sample, or the unweighted mean over a dataset.

    ``scale`` multiplies every stored distance (100 reproduces the "x100"
    convention of published completion tables). Fields without ground truth are None.
    """
    ucd: float
    uhd: float
    precision: float | None = None
    coverage: float | None = None
    cd: float | None = None
    n_samples: int = 1
    n_with_gt: int = 0
    scale: float = 1.0
    id: str = ""

    def scaled(self, scale: float) -> "MetricsReport":
        f = scale / self.scale

        def mul(x):
            return None if x is None else x * f

        return MetricsReport(self.ucd * f, self.uhd * f, mul(self.precision), mul(self.coverage),
                             mul(self.cd), self.n_samples, self.n_with_gt, scale, self.id)


def chamfer_eval(completion, gt) -> tuple[float, float, float]:
    """``(precision, coverage, cd)`` of a completion against ground truth."""
    c = as_cloud(completion)
    g = as_cloud(gt)
    precision = float(nearest(c, g)[1].mean())
    coverage = float(nearest(g, c)[1].mean())
    return precision, coverage, precision + coverage


def ucd(partial, completion) -> float:
    """Mean distance from each input point to the completion."""
    return float(nearest(as_cloud(partial), as_cloud(completion))[1].mean())


def uhd(partial, completion) -> float:
    """Largest distance from an input point to the completion."""
    return float(nearest(as_cloud(partial), as_cloud(completion))[1].max())


def sample_metrics(partial, completion, gt=None, id: str = "") -> MetricsReport:
    d = nearest(as_cloud(partial), as_cloud(completion))[1]
    rep = MetricsReport(float(d.mean()), float(d.max()), id=id)
    if gt is not None:
        rep.precision, rep.coverage, rep.cd = chamfer_eval(completion, gt)
        rep.n_with_gt = 1
    return rep


def aggregate(reports: list[MetricsReport], id: str = "mean") -> MetricsReport:
    if not reports:
        raise ValueError("no reports to aggregate")
    with_gt = [r for r in reports if r.cd is not None]
    agg = MetricsReport(float(np.mean([r.ucd for r in reports])),
                        float(np.mean([r.uhd for r in reports])),
                        n_samples=len(reports), n_with_gt=len(with_gt),
                        scale=reports[0].scale, id=id)
    if with_gt:
        agg.precision = float(np.mean([r.precision for r in with_gt]))
        agg.coverage = float(np.mean([r.coverage for r in with_gt]))
        agg.cd = float(np.mean([r.cd for r in with_gt]))
    return agg


def evaluate_dataset(params: ModelParams, dataset, scale: float = 1.0):
    """Complete every sample and score it.

    ``dataset`` yields objects with ``partial``, ``gt`` (may be None) and
    ``id`` attributes, or ``(partial, gt)`` pairs. Returns
    ``(aggregate, per_sample_reports)``.
    """
    reports = []
    for k, item in enumerate(dataset):
        if isinstance(item, tuple):
            partial, gt = item
            sid = str(k)
        else:
            partial, gt, sid = item.partial, item.gt, item.id or str(k)
        completion = forward_complete(params, partial)
        reports.append(sample_metrics(partial, completion, gt, sid).scaled(scale))
    if not reports:
        raise ValueError("empty dataset")
    return aggregate(reports), reports


CSV_FIELDS = ["id", "precision", "coverage", "cd", "ucd", "uhd", "scale"]


def write_report_csv(path, per_sample: list[MetricsReport], agg: MetricsReport) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_FIELDS)
        for r in [*per_sample, agg]:
            writer.writerow(["" if getattr(r, k) is None else
                             (repr(getattr(r, k)) if isinstance(getattr(r, k), float) else getattr(r, k))
                             for k in CSV_FIELDS])


def write_report_json(path, per_sample: list[MetricsReport], agg: MetricsReport) -> None:
    def clean(r):
        return {k: v for k, v in asdict(r).items() if v is not None}

    with open(path, "w") as f:
        json.dump({"aggregate": clean(agg), "samples": [clean(r) for r in per_sample]}, f, indent=1)
