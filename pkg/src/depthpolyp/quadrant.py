"""Four-quadrant robustness protocol.

Two models (clean-trained, noisy-trained) are each evaluated on a clean
and a materialized noisy test set. The two robustness deltas read off the
mean Dice of the quadrants:

  delta_r = Dice(noisy->noisy) - Dice(clean->noisy)
      gain on degraded inputs from having trained on degradations
  delta_h = Dice(noisy->clean) - Dice(clean->clean)
      cost on pristine inputs of having trained on degradations
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

from .errors import DataError

QUADRANTS = (
    ("clean", "clean"),
    ("clean", "noisy"),
    ("noisy", "clean"),
    ("noisy", "noisy"),
)


def quadrant_deltas(cc, cn, nc, nn):
    """(delta_r, delta_h) from the four Dice means.

    Arguments are Dice for (train->test): clean->clean, clean->noisy,
    noisy->clean, noisy->noisy.
    """
    return nn - cn, nc - cc


@dataclass
class QuadrantReport:
    reports: dict  # (train_cond, test_cond) -> MetricReport

    def __post_init__(self):
        missing = [q for q in QUADRANTS if q not in self.reports]
        if missing:
            raise DataError(f"quadrant report incomplete, missing {missing}")

    def dice(self, train_cond, test_cond):
        return self.reports[(train_cond, test_cond)].mean_dice

    @property
    def delta_r(self):
        return self.dice("noisy", "noisy") - self.dice("clean", "noisy")

    @property
    def delta_h(self):
        return self.dice("noisy", "clean") - self.dice("clean", "clean")

    def summary(self):
        out = {f"{tr}_to_{te}": self.dice(tr, te) for tr, te in QUADRANTS}
        out["delta_r"] = self.delta_r
        out["delta_h"] = self.delta_h
        return out


def quadrant_eval(clean_net, noisy_net, clean_set, noisy_set, threshold=0.5,
                  batch_size=16):
    """Run all four pairings and assemble the report."""
    from .train import evaluate  # local import, avoids a cycle

    nets = {"clean": clean_net, "noisy": noisy_net}
    testsets = {"clean": clean_set, "noisy": noisy_set}
    reports = {
        (tr, te): evaluate(nets[tr], testsets[te], threshold=threshold,
                           batch_size=batch_size)
        for tr, te in QUADRANTS
    }
    return QuadrantReport(reports)


def write_quadrant_report(base_path, report):
    """<base>.csv with one row per quadrant plus the deltas; .jsonl mirror."""
    summary = report.summary()
    csv_path = f"{base_path}.csv"
    jsonl_path = f"{base_path}.jsonl"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("train", "test", "dice", "iou", "recall"))
        for tr, te in QUADRANTS:
            rep = report.reports[(tr, te)]
            writer.writerow([tr, te, f"{rep.mean_dice:.6f}",
                             f"{rep.mean_iou:.6f}", f"{rep.mean_recall:.6f}"])
        writer.writerow(["delta_r", "", f"{summary['delta_r']:.6f}", "", ""])
        writer.writerow(["delta_h", "", f"{summary['delta_h']:.6f}", "", ""])
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(summary) + "\n")
    return csv_path, jsonl_path
