"""Scoring a selected measurement subset against ground-truth labels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np


@dataclass
class EvalReport:
    tpr: float
    fpr: float
    selected_set_chi2: Optional[float]
    clique_size: int
    times: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tpr": self.tpr, "fpr": self.fpr, "chi2": self.selected_set_chi2,
                "clique_size": self.clique_size, "times": dict(self.times)}


def evaluate_selection(selected: Iterable[int], labels, ground_truth: Optional[dict] = None,
                       metric: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                       times: Optional[dict] = None) -> EvalReport:
    """TPR/FPR of ``selected`` plus the mean normalized residual of the selected set.

    ``metric`` maps selected indices to per-measurement normalized squared
    residuals against the truth; by default ``ground_truth["chi2"]`` holds them.
    """
    labels = np.asarray(labels, dtype=bool)
    sel = np.array(sorted(set(int(s) for s in selected)), dtype=int)
    if len(sel) and (sel[0] < 0 or sel[-1] >= len(labels)):
        raise IndexError(f"selected index out of range [0, {len(labels)})")
    mask = np.zeros(len(labels), dtype=bool)
    mask[sel] = True
    tp = int(np.sum(mask & labels))
    fp = int(np.sum(mask & ~labels))
    fn = int(np.sum(~mask & labels))
    tn = int(np.sum(~mask & ~labels))
    tpr = tp / (tp + fn) if tp + fn else 0.0
    fpr = fp / (fp + tn) if fp + tn else 0.0
    chi2 = None
    if len(sel):
        if metric is not None:
            chi2 = float(np.mean(metric(sel)))
        elif ground_truth is not None and "chi2" in ground_truth:
            chi2 = float(np.mean(np.asarray(ground_truth["chi2"])[sel]))
    return EvalReport(tpr, fpr, chi2, len(sel), dict(times or {}))
