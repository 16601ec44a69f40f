"""Independent brute-force AP oracle used to cross-check the evaluation module.

Deliberately naive: materializes every (recall, precision) point and scans
all of them for every recall level. Kept free of any code under test.
"""

from __future__ import annotations

from typing import Sequence


def brute_force_ap(
    flags: Sequence[bool],
    total_gt: int,
    recall_levels: Sequence[float] = tuple(i / 100 for i in range(101)),
) -> float:
    """flags: TP/FP per prediction, already in rank order."""
    if total_gt == 0:
        return 0.0
    points = []
    tp = 0
    for k, f in enumerate(flags, start=1):
        if f:
            tp += 1
        points.append((tp / total_gt, tp / k))
    total = 0.0
    for r in recall_levels:
        best = 0.0
        for rec, prec in points:
            if rec >= r and prec > best:
                best = prec
        total += best
    return total / len(recall_levels)


def greedy_match_flags(pred_boxes, pred_confs, gt_boxes, threshold, iou_fn):
    """Reference greedy matcher returning flags in rank order."""
    order = sorted(range(len(pred_boxes)), key=lambda i: (-pred_confs[i], pred_boxes[i]))
    taken = [False] * len(gt_boxes)
    flags = []
    for i in order:
        best, best_j = 0.0, -1
        for j, g in enumerate(gt_boxes):
            if taken[j]:
                continue
            ov = iou_fn(pred_boxes[i], g)
            if ov > best:
                best, best_j = ov, j
        if best_j >= 0 and best >= threshold:
            taken[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags
