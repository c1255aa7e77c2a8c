"""Segmentation metrics and per-corpus reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError


def binary_metrics(pred_prob, mask, threshold=0.5):
    """(dice, iou, recall) for one image.

    The prediction is binarized at the threshold. Empty-against-empty
    scores 1.0 across the board; an empty ground truth with a nonempty
    prediction keeps recall at 1.0 while dice/iou fall to 0 by formula;
    a missed nonempty ground truth scores 0 everywhere.
    """
    if pred_prob.shape != mask.shape:
        raise DimensionError(
            f"prediction/mask shape mismatch: {pred_prob.shape} vs {mask.shape}")
    if not np.all((mask == 0) | (mask == 1)):
        raise DataError("mask must be strictly binary")
    p = pred_prob >= threshold
    g = mask.astype(bool)
    np_, ng = int(p.sum()), int(g.sum())
    inter = int(np.logical_and(p, g).sum())
    if np_ == 0 and ng == 0:
        return 1.0, 1.0, 1.0
    dice = 2.0 * inter / (np_ + ng)
    union = np_ + ng - inter
    iou = inter / union if union else 1.0
    recall = inter / ng if ng else 1.0
    return dice, iou, recall


@dataclass
class MetricReport:
    threshold: float
    sample_ids: list = field(default_factory=list)
    dice: list = field(default_factory=list)
    iou: list = field(default_factory=list)
    recall: list = field(default_factory=list)

    def add(self, sample_id, dice, iou, recall):
        self.sample_ids.append(sample_id)
        self.dice.append(dice)
        self.iou.append(iou)
        self.recall.append(recall)

    @property
    def count(self):
        return len(self.dice)

    @property
    def mean_dice(self):
        return float(np.mean(self.dice)) if self.dice else 0.0

    @property
    def mean_iou(self):
        return float(np.mean(self.iou)) if self.iou else 0.0

    @property
    def mean_recall(self):
        return float(np.mean(self.recall)) if self.recall else 0.0

    def summary(self):
        return {
            "count": self.count,
            "threshold": self.threshold,
            "dice": self.mean_dice,
            "iou": self.mean_iou,
            "recall": self.mean_recall,
        }


def score_predictions(pred_probs, masks, threshold=0.5, sample_ids=None):
    """Per-image metrics averaged into a MetricReport."""
    if len(pred_probs) != len(masks):
        raise DimensionError(
            f"{len(pred_probs)} predictions vs {len(masks)} masks")
    report = MetricReport(threshold=threshold)
    for i, (p, m) in enumerate(zip(pred_probs, masks)):
        sid = sample_ids[i] if sample_ids else f"{i:05d}"
        report.add(sid, *binary_metrics(p, m, threshold))
    return report


CSV_HEADER = ("sample_id", "dice", "iou", "recall")


def write_report(base_path, report):
    """Write <base>.csv (per sample + mean row) and a <base>.jsonl mirror."""
    csv_path = f"{base_path}.csv"
    jsonl_path = f"{base_path}.jsonl"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for sid, d, i, r in zip(report.sample_ids, report.dice, report.iou,
                                report.recall):
            writer.writerow([sid, f"{d:.6f}", f"{i:.6f}", f"{r:.6f}"])
        writer.writerow(["mean", f"{report.mean_dice:.6f}",
                         f"{report.mean_iou:.6f}", f"{report.mean_recall:.6f}"])
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for sid, d, i, r in zip(report.sample_ids, report.dice, report.iou,
                                report.recall):
            fh.write(json.dumps(
                {"sample_id": sid, "dice": d, "iou": i, "recall": r}) + "\n")
        fh.write(json.dumps({"sample_id": "mean", **report.summary()}) + "\n")
    return csv_path, jsonl_path
