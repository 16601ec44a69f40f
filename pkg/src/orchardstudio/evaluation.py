"""Detection evaluation: greedy matching, interpolated AP, multi-run reports.

A prediction counts as a true positive when its IoU with an unmated ground
truth reaches the threshold; predictions are ranked by confidence and AP is
the mean of the interpolated precision over evenly spaced recall levels.
All images are pooled into one global ranking (single-category datasets).
"""

from __future__ import annotations

import bisect
import json
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from orchardstudio.geometry import BoundingBox, ScoredBox, iou

DEFAULT_RECALL_LEVELS: tuple[float, ...] = tuple(i / 100 for i in range(101))
RANGE_IOU_THRESHOLDS: tuple[float, ...] = tuple(i / 100 for i in range(50, 100, 5))

# Table-1 column order.
METRIC_KEYS: tuple[str, ...] = ("ap_at_50", "ap_range_50_95", "ap_at_75")
METRIC_LABELS: dict[str, str] = {
    "ap_at_50": "AP@0.50",
    "ap_range_50_95": "AP@0.5:0.05:0.95",
    "ap_at_75": "AP@0.75",
}


class ZeroGroundTruthWarning(UserWarning):
    """AP requested for a dataset with no ground-truth boxes; defined as 0."""


@dataclass(frozen=True)
class ApConfig:
    iou_thresholds: tuple[float, ...] = RANGE_IOU_THRESHOLDS
    recall_levels: tuple[float, ...] = DEFAULT_RECALL_LEVELS

    def __post_init__(self) -> None:
        if not self.iou_thresholds:
            raise ValueError("iou_thresholds must be non-empty")
        if any(not (0.0 < t <= 1.0) for t in self.iou_thresholds):
            raise ValueError("iou_thresholds must lie in (0,1]")
        if list(self.iou_thresholds) != sorted(set(self.iou_thresholds)):
            raise ValueError("iou_thresholds must be strictly increasing")
        levels = self.recall_levels
        if list(levels) != sorted(set(levels)) or levels[0] != 0.0 or levels[-1] != 1.0:
            raise ValueError("recall_levels must be strictly increasing and span [0,1]")


@dataclass(frozen=True)
class PredictionOutcome:
    confidence: float
    box: BoundingBox
    is_tp: bool


@dataclass(frozen=True)
class MatchResult:
    """Per-prediction TP/FP flags (descending confidence) plus unmatched GT count."""

    outcomes: tuple[PredictionOutcome, ...]
    unmatched_gt: int

    @property
    def tp(self) -> int:
        return sum(1 for o in self.outcomes if o.is_tp)

    @property
    def fp(self) -> int:
        return sum(1 for o in self.outcomes if not o.is_tp)

    @property
    def fn(self) -> int:
        return self.unmatched_gt


def match_predictions(
    preds: Sequence[ScoredBox], gts: Sequence[BoundingBox], iou_threshold: float
) -> MatchResult:
    """Greedy matching in descending confidence order.

    Each prediction takes the unmatched ground truth of highest IoU, provided
    that IoU reaches the threshold; otherwise it is a false positive.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold must be in (0,1], got {iou_threshold}")
    ordered = sorted(preds, key=lambda p: (-p.confidence, p.box))
    taken = [False] * len(gts)
    outcomes = []
    for p in ordered:
        best_iou = 0.0
        best_idx = -1
        for i, g in enumerate(gts):
            if taken[i]:
                continue
            ov = iou(p.box, g)
            if ov > best_iou:
                best_iou = ov
                best_idx = i
        is_tp = best_idx >= 0 and best_iou >= iou_threshold
        if is_tp:
            taken[best_idx] = True
        outcomes.append(PredictionOutcome(p.confidence, p.box, is_tp))
    return MatchResult(tuple(outcomes), unmatched_gt=taken.count(False))


def pool_outcomes(results: Iterable[MatchResult]) -> list[PredictionOutcome]:
    """Merge per-image match results into one globally ranked list."""
    merged = [o for r in results for o in r.outcomes]
    merged.sort(key=lambda o: (-o.confidence, o.box))
    return merged


def interpolated_ap(
    outcomes: Sequence[PredictionOutcome],
    total_gt: int,
    recall_levels: Sequence[float] = DEFAULT_RECALL_LEVELS,
) -> float:
    """AP = mean over recall levels of the interpolated maximum precision.

    The interpolated precision at recall r is the maximum precision among
    measured points with recall >= r (0 when no point reaches r).
    """
    if total_gt < 0:
        raise ValueError("total_gt must be non-negative")
    if total_gt == 0:
        warnings.warn(
            "AP over zero ground-truth boxes is undefined; reporting 0",
            ZeroGroundTruthWarning,
            stacklevel=2,
        )
        return 0.0
    ranked = sorted(outcomes, key=lambda o: (-o.confidence, o.box))
    recalls: list[float] = []
    precisions: list[float] = []
    tp = 0
    for k, o in enumerate(ranked, start=1):
        if o.is_tp:
            tp += 1
        recalls.append(tp / total_gt)
        precisions.append(tp / k)
    # Suffix max of precision: since recall is non-decreasing in rank, the
    # points with recall >= r form a suffix.
    envelope = list(precisions)
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    total = 0.0
    for r in recall_levels:
        idx = bisect.bisect_left(recalls, r)
        if idx < len(envelope):
            total += envelope[idx]
    return total / len(recall_levels)


def ap_at(
    preds_by_image: Mapping[str, Sequence[ScoredBox]],
    gts_by_image: Mapping[str, Sequence[BoundingBox]],
    iou_threshold: float,
    cfg: ApConfig = ApConfig(),
) -> float:
    """AP at one IoU threshold with all images pooled into a single ranking."""
    image_ids = set(preds_by_image) | set(gts_by_image)
    results = [
        match_predictions(
            preds_by_image.get(img, ()), gts_by_image.get(img, ()), iou_threshold
        )
        for img in sorted(image_ids)
    ]
    total_gt = sum(len(g) for g in gts_by_image.values())
    return interpolated_ap(pool_outcomes(results), total_gt, cfg.recall_levels)


def ap_range(
    preds_by_image: Mapping[str, Sequence[ScoredBox]],
    gts_by_image: Mapping[str, Sequence[BoundingBox]],
    cfg: ApConfig = ApConfig(),
) -> float:
    """Arithmetic mean of ap_at over the configured threshold ladder."""
    values = [ap_at(preds_by_image, gts_by_image, t, cfg) for t in cfg.iou_thresholds]
    return sum(values) / len(values)


def evaluate_run(
    preds_by_image: Mapping[str, Sequence[ScoredBox]],
    gts_by_image: Mapping[str, Sequence[BoundingBox]],
    cfg: ApConfig = ApConfig(),
) -> dict[str, float]:
    """The three headline metrics for a single run."""
    return {
        "ap_at_50": ap_at(preds_by_image, gts_by_image, 0.50, cfg),
        "ap_range_50_95": ap_range(preds_by_image, gts_by_image, cfg),
        "ap_at_75": ap_at(preds_by_image, gts_by_image, 0.75, cfg),
    }


@dataclass(frozen=True)
class MetricSummary:
    per_run: tuple[float, ...]
    mean: float
    sd: float | None
    difference: float | None = None


@dataclass(frozen=True)
class EvalReport:
    metrics: dict[str, MetricSummary]
    baseline_name: str | None = None
    baseline_means: dict[str, float] | None = None

    @property
    def ap_at_50(self) -> float:
        return self.metrics["ap_at_50"].mean

    @property
    def ap_at_75(self) -> float:
        return self.metrics["ap_at_75"].mean

    @property
    def ap_range_50_95(self) -> float:
        return self.metrics["ap_range_50_95"].mean


def single_run_report(values: Mapping[str, float]) -> EvalReport:
    return EvalReport(
        metrics={k: MetricSummary((float(v),), float(v), None) for k, v in values.items()}
    )


def _sample_sd(values: Sequence[float]) -> float:
    n = len(values)
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


def aggregate_runs(per_run_reports: Sequence[EvalReport]) -> EvalReport:
    """Per-metric arithmetic mean and sample (n-1) standard deviation."""
    if not per_run_reports:
        raise ValueError("cannot aggregate an empty list of reports")
    keys = list(per_run_reports[0].metrics)
    for r in per_run_reports[1:]:
        if list(r.metrics) != keys:
            raise ValueError("reports carry different metric sets")
    metrics = {}
    for k in keys:
        values = tuple(v for r in per_run_reports for v in r.metrics[k].per_run)
        mean = sum(values) / len(values)
        sd = _sample_sd(values) if len(values) >= 2 else None
        metrics[k] = MetricSummary(values, mean, sd)
    return EvalReport(metrics=metrics)


def diff_report(
    candidate: EvalReport, baseline: EvalReport, baseline_name: str = "Baseline"
) -> EvalReport:
    """Attach a difference row: baseline mean minus candidate mean, per metric."""
    if set(candidate.metrics) != set(baseline.metrics):
        raise ValueError(
            f"metric mismatch: {sorted(candidate.metrics)} vs {sorted(baseline.metrics)}"
        )
    metrics = {
        k: MetricSummary(
            s.per_run, s.mean, s.sd, difference=baseline.metrics[k].mean - s.mean
        )
        for k, s in candidate.metrics.items()
    }
    return EvalReport(
        metrics=metrics,
        baseline_name=baseline_name,
        baseline_means={k: baseline.metrics[k].mean for k in baseline.metrics},
    )


def report_to_json(report: EvalReport, baseline: EvalReport | None = None) -> str:
    doc: dict = {
        "rows": [
            {
                "metric": k,
                "per_run": list(s.per_run),
                "mean": s.mean,
                "sd": s.sd,
                **({"difference": s.difference} if s.difference is not None else {}),
            }
            for k, s in report.metrics.items()
        ]
    }
    if report.baseline_name is not None:
        doc["baseline_name"] = report.baseline_name
    if baseline is not None:
        doc["baseline_rows"] = [
            {
                "metric": k,
                "per_run": list(s.per_run),
                "mean": s.mean,
                "sd": s.sd,
            }
            for k, s in baseline.metrics.items()
        ]
    return json.dumps(doc, indent=2)


def report_from_json(text: str) -> EvalReport:
    doc = json.loads(text)
    metrics = {
        row["metric"]: MetricSummary(
            tuple(row["per_run"]),
            row["mean"],
            row.get("sd"),
            row.get("difference"),
        )
        for row in doc["rows"]
    }
    return EvalReport(metrics=metrics, baseline_name=doc.get("baseline_name"))


def _format_cell(mean: float, sd: float | None) -> str:
    if sd is None:
        return f"{mean:.2f}"
    return f"{mean:.2f} ± {sd:.3f}"


def render_table(
    candidate: EvalReport,
    baseline: EvalReport | None = None,
    candidate_label: str = "Generated",
    baseline_label: str = "Baseline",
) -> str:
    """Human-readable table: one row per dataset, difference row at the bottom."""
    keys = [k for k in METRIC_KEYS if k in candidate.metrics]
    keys += [k for k in candidate.metrics if k not in keys]
    header = ["Dataset"] + [METRIC_LABELS.get(k, k) for k in keys]
    rows = []
    if baseline is not None:
        rows.append(
            [baseline_label]
            + [_format_cell(baseline.metrics[k].mean, baseline.metrics[k].sd) for k in keys]
        )
    rows.append(
        [candidate_label]
        + [_format_cell(candidate.metrics[k].mean, candidate.metrics[k].sd) for k in keys]
    )
    if any(candidate.metrics[k].difference is not None for k in keys):
        rows.append(
            ["Difference"]
            + [
                f"{candidate.metrics[k].difference:.2f}"
                if candidate.metrics[k].difference is not None
                else ""
                for k in keys
            ]
        )
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)
