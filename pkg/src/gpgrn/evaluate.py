"""Ranked-link scoring (AUROC / AUPR) and chain diagnostics.

Self-regulation (the diagonal) is always excluded from scoring, matching
the benchmark convention for directed network inference.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from gpgrn.errors import UndefinedScoreError


@dataclass(frozen=True)
class ConfidenceMatrix:
    """Posterior link probabilities; entry (i, j) scores the link j -> i."""

    matrix: np.ndarray
    genes: list[str] | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("confidence matrix must be square")
        if np.any(m < 0) or np.any(m > 1):
            raise ValueError("confidences must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _off_diagonal(scores: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth)
    if scores.shape != truth.shape or scores.ndim != 2:
        raise UndefinedScoreError("prediction and truth must be square matrices of equal shape")
    mask = ~np.eye(scores.shape[0], dtype=bool)
    s = scores[mask]
    t = truth[mask].astype(bool)
    if t.all() or not t.any():
        raise UndefinedScoreError("ground truth must contain both classes off the diagonal")
    return s, t


def auroc(scores: np.ndarray, truth: np.ndarray) -> float:
    """Rank-based AUROC with midranks for ties, diagonal excluded."""
    s, t = _off_diagonal(scores, truth)
    ranks = rankdata(s)
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    u = float(ranks[t].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def aupr(scores: np.ndarray, truth: np.ndarray) -> float:
    """Step-interpolated area under the precision-recall curve, diagonal excluded."""
    s, t = _off_diagonal(scores, truth)
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    n_pos = int(t.sum())
    tp = np.cumsum(t)
    fp = np.cumsum(~t)
    # keep only the last index of each tied score block
    last = np.flatnonzero(np.append(np.diff(s) != 0, True))
    precision = tp[last] / (tp[last] + fp[last])
    recall = tp[last] / n_pos
    area = 0.0
    prev_recall = 0.0
    for p, r in zip(precision, recall):
        area += (r - prev_recall) * p
        prev_recall = r
    return float(area)


def roc_pr_points(scores: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ROC (fpr, tpr) and PR (recall, precision) point lists over all thresholds."""
    s, t = _off_diagonal(scores, truth)
    order = np.argsort(-s, kind="stable")
    t = t[order]
    s = s[order]
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    tp = np.cumsum(t)
    fp = np.cumsum(~t)
    last = np.flatnonzero(np.append(np.diff(s) != 0, True))
    roc = np.column_stack([
        np.append(0.0, fp[last] / n_neg),
        np.append(0.0, tp[last] / n_pos),
    ])
    pr = np.column_stack([
        tp[last] / n_pos,
        tp[last] / (tp[last] + fp[last]),
    ])
    return roc, pr


def combine_scores(cm1: np.ndarray, cm2: np.ndarray) -> np.ndarray:
    """Elementwise product of two confidence matrices (consensus of methods)."""
    a = np.asarray(cm1, dtype=float)
    b = np.asarray(cm2, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def diagnostics(outputs) -> dict:
    """Across-chain summary: acceptance rates, link disagreement, convergence curve."""
    if not outputs:
        raise ValueError("need at least one chain output")
    means = np.stack([o.S_sum / max(o.n_collected, 1) for o in outputs])
    across_sd = means.std(axis=0, ddof=0)
    report = {
        "n_chains": len(outputs),
        "acceptance_rates": [o.acceptance_rates() for o in outputs],
        "across_chain_sd": across_sd,
        "max_link_disagreement": float(across_sd.max()),
        "cumulative_means": [o.cumulative_mean_curve() for o in outputs],
    }
    return report


def write_plot_data(scores: np.ndarray, truth: np.ndarray, path: str | Path) -> None:
    """Emit ROC and PR point lists as a plot-ready CSV."""
    roc, pr = roc_pr_points(scores, truth)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve", "x", "y"])
        for x, y in roc:
            w.writerow(["roc", f"{x:.10g}", f"{y:.10g}"])
        for x, y in pr:
            w.writerow(["pr", f"{x:.10g}", f"{y:.10g}"])
