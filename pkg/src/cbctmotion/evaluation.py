"""Precision-recall evaluation at slice and volume level, grouped per motion type.

AUC-PR is computed as average precision with step interpolation: tied scores
enter a threshold together, and AP = sum_k (R_k - R_{k-1}) * P_k over the
distinct thresholds. No linear interpolation happens in PR space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "LabeledScore",
    "pr_curve",
    "auc_pr",
    "evaluate_run",
    "report_to_json",
    "render_report",
]


@dataclass(frozen=True)
class LabeledScore:
    """One scored unit (slice or volume) with its ground-truth label and the
    motion-type tag of the scan it came from ("none" for clean scans)."""

    score: float
    label: int
    unit_id: str = ""
    motion_type: str = "none"

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValidationError(f"label must be 0 or 1, got {self.label}")
        if not np.isfinite(self.score):
            raise ValidationError(f"score must be finite, got {self.score}")


def _scores_labels(items: list[LabeledScore]) -> tuple[np.ndarray, np.ndarray]:
    if not items:
        raise ValidationError("no items to evaluate")
    scores = np.array([it.score for it in items], dtype=np.float64)
    labels = np.array([it.label for it in items], dtype=np.int64)
    if labels.min() == labels.max():
        raise ValidationError("evaluation needs at least one positive and one negative")
    return scores, labels


def pr_curve(items: list[LabeledScore]) -> list[tuple[float, float]]:
    """(recall, precision) points, one per distinct threshold, highest score
    first, preceded by the (0, 1) anchor. Tied scores are grouped."""
    scores, labels = _scores_labels(items)
    order = np.argsort(-scores, kind="stable")
    scores = scores[order]
    labels = labels[order]
    n_pos = int(labels.sum())

    points = [(0.0, 1.0)]
    tp = 0
    seen = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and scores[j] == scores[i]:
            j += 1
        tp += int(labels[i:j].sum())
        seen += j - i
        points.append((tp / n_pos, tp / seen))
        i = j
    return points


def auc_pr(items: list[LabeledScore]) -> float:
    """Average precision: sum over thresholds of (R_k - R_{k-1}) * P_k."""
    points = pr_curve(items)
    ap = 0.0
    prev_recall = 0.0
    for recall, precision in points[1:]:
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


@dataclass(frozen=True)
class MotionTypeResult:
    motion_type: str
    slice_auc_pr: float
    volume_auc_pr: float
    n_volumes: int
    n_positive_volumes: int


@dataclass(frozen=True)
class EvalReport:
    per_type: tuple[MotionTypeResult, ...]
    average_slice_auc_pr: float
    average_volume_auc_pr: float
    overall_volume_auc_pr: float
    overall_slice_auc_pr: float


def evaluate_run(
    slice_items: list[LabeledScore],
    volume_items: list[LabeledScore],
) -> EvalReport:
    """Per-motion-type slice and volume AUC-PR plus the overall average row.

    Each motion type is evaluated on its own items plus any items tagged
    "none" (clean scans act as shared negatives). The average row is the
    arithmetic mean over types; the overall values pool every item.
    """
    tags = sorted({it.motion_type for it in volume_items} - {"none"})
    if not tags:
        raise ValidationError("no motion-type tags present")
    shared_s = [it for it in slice_items if it.motion_type == "none"]
    shared_v = [it for it in volume_items if it.motion_type == "none"]
    results = []
    for tag in tags:
        s_items = [it for it in slice_items if it.motion_type == tag] + shared_s
        v_items = [it for it in volume_items if it.motion_type == tag] + shared_v
        results.append(
            MotionTypeResult(
                motion_type=tag,
                slice_auc_pr=auc_pr(s_items),
                volume_auc_pr=auc_pr(v_items),
                n_volumes=len(v_items),
                n_positive_volumes=sum(it.label for it in v_items),
            )
        )
    return EvalReport(
        per_type=tuple(results),
        average_slice_auc_pr=float(np.mean([r.slice_auc_pr for r in results])),
        average_volume_auc_pr=float(np.mean([r.volume_auc_pr for r in results])),
        overall_slice_auc_pr=auc_pr(slice_items),
        overall_volume_auc_pr=auc_pr(volume_items),
    )


def report_to_json(report: EvalReport) -> str:
    doc = {
        "per_type": {
            r.motion_type: {
                "slices": r.slice_auc_pr,
                "volume": r.volume_auc_pr,
                "n_volumes": r.n_volumes,
                "n_positive_volumes": r.n_positive_volumes,
            }
            for r in report.per_type
        },
        "average": {
            "slices": report.average_slice_auc_pr,
            "volume": report.average_volume_auc_pr,
        },
        "overall": {
            "slices": report.overall_slice_auc_pr,
            "volume": report.overall_volume_auc_pr,
        },
    }
    return json.dumps(doc, indent=1)


def render_report(report: EvalReport) -> str:
    """Aligned text table: one row per motion type plus the average row."""
    header = f"{'Motion Type':<12} {'Slices':>8} {'Volume':>8} {'Volumes':>8} {'Pos':>5}"
    rule = "-" * len(header)
    lines = [header, rule]
    for r in report.per_type:
        lines.append(
            f"{r.motion_type:<12} {r.slice_auc_pr:>8.3f} {r.volume_auc_pr:>8.3f} "
            f"{r.n_volumes:>8d} {r.n_positive_volumes:>5d}"
        )
    lines.append(rule)
    lines.append(
        f"{'Average':<12} {report.average_slice_auc_pr:>8.3f} {report.average_volume_auc_pr:>8.3f}"
    )
    lines.append(
        f"{'Overall':<12} {report.overall_slice_auc_pr:>8.3f} {report.overall_volume_auc_pr:>8.3f}"
    )
    return "\n".join(lines)
