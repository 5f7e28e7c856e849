"""Correspondence error and accuracy-at-tolerance."""

from __future__ import annotations

import numpy as np

from ..geometry import pairwise_sq_dists

EPS_GRID = tuple(round(0.01 * i, 2) for i in range(11))


def _errors(pred, pair):
    """Per-point errors and the target diameter, from one distance table.

    Sharing the table keeps ``error <= diameter`` exact in floating point.
    """
    if pair.ground_truth is None:
        raise ValueError("metrics need a pair with ground truth")
    pred = np.asarray(pred, dtype=int)
    if pred.shape != pair.ground_truth.shape:
        raise ValueError(f"prediction length {pred.size} != {pair.ground_truth.size}")
    d2 = pairwise_sq_dists(pair.target, pair.target)
    return np.sqrt(d2[pred, pair.ground_truth]), float(np.sqrt(d2.max()))


def metric_err(pred, pair):
    """Mean distance between predicted and true target points."""
    return float(_errors(pred, pair)[0].mean())


def metric_acc(pred, pair, eps):
    """Fraction of source points whose error is within ``eps`` x the target diameter."""
    if not 0 <= eps <= 1:
        raise ValueError(f"tolerance must lie in [0, 1], got {eps}")
    err, d = _errors(pred, pair)
    return float(np.mean(err <= eps * d))


def evaluate(items, predict, eps_grid=EPS_GRID):
    """Per-pair and aggregate err / acc(eps) for ``[(id, pair)]``.

    ``predict(pair) -> indices``. Aggregates are plain means over pairs.
    """
    per_pair = []
    for pid, pair in items:
        pred = predict(pair)
        per_pair.append({"id": pid, "err": metric_err(pred, pair),
                         "acc": [metric_acc(pred, pair, e) for e in eps_grid]})
    agg_err = float(np.mean([p["err"] for p in per_pair]))
    agg_acc = np.mean([p["acc"] for p in per_pair], axis=0).tolist()
    return {"eps": list(eps_grid), "err": agg_err, "acc": agg_acc, "pairs": per_pair}
