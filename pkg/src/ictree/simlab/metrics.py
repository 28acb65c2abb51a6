"""Evaluation metrics for simulated fits."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import integrate, stats

from ..ctree import SurvivalTree, TreeNode, UnroutableLevelError
from ..estimator import SurvivalCurve
from .designs import GroundTruthTree, TruthSplit
from .distributions import EventDistribution

__all__ = [
    "integrated_l2",
    "curve_l2",
    "structure_match",
    "uniformity_test",
    "signed_rank_test",
]

QUAD_TOL = 1e-8


def curve_l2(curve: SurvivalCurve, truth: EventDistribution, upper: float) -> float:
    """``int_0^upper (S_hat(t) - S(t))**2 dt`` for a step curve and a smooth truth.

    The step curve is constant between its jump points, so the integral is
    split there and every piece is mapped onto ``[0, 1]``; one vectorized
    adaptive quadrature then handles all pieces together.
    """
    if upper <= 0:
        return 0.0
    jumps = curve.breakpoints()
    cuts = np.concatenate(([0.0], jumps[(jumps > 0) & (jumps < upper)], [upper]))
    start, width = cuts[:-1], np.diff(cuts)
    level = np.asarray(curve.survival(start), dtype=float)

    def integrand(u):
        t = start + u * width
        return (level - truth.sf(t)) ** 2 * width

    value, _ = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL)
    return math.fsum(np.atleast_1d(value))


def integrated_l2(
    curves: Sequence[SurvivalCurve],
    truths: Sequence[EventDistribution],
    test_times,
) -> float:
    """Average over subjects of ``(1/M) int_0^M (S_hat_i - S_i)**2 dt``.

    ``M`` is the largest event time in the test set.  Pairs of identical
    curve and truth are integrated once.
    """
    if len(curves) == 0:
        raise ValueError("empty test set")
    if len(curves) != len(truths):
        raise ValueError("one predicted curve per true distribution is required")
    upper = float(np.max(test_times))
    cache: dict = {}
    total = []
    for curve, truth in zip(curves, truths):
        key = (id(curve), truth)
        if key not in cache:
            cache[key] = curve_l2(curve, truth, upper)
        total.append(cache[key])
    return math.fsum(total) / (len(total) * upper)


def structure_match(fitted, truth: GroundTruthTree) -> bool:
    """Whether a fitted tree has the truth's topology and split variables.

    A fitted split must also put the centroids of the two true child
    regions on opposite sides; children are matched in whichever
    orientation that implies.
    """
    node = fitted.root if isinstance(fitted, SurvivalTree) else fitted
    return _match(node, truth.root, truth, {})


def _match(node: TreeNode, spec, truth: GroundTruthTree, bounds: dict) -> bool:
    if isinstance(spec, int):
        return node.is_terminal
    if node.is_terminal or node.split.variable != spec.variable:
        return False
    low, high = bounds.get(spec.variable, (-math.inf, math.inf))
    c_left = truth.centroid(spec.variable, low, spec.threshold)
    c_right = truth.centroid(spec.variable, spec.threshold, high)
    try:
        sides = node.split.goes_left(np.array([c_left, c_right]))
    except (UnroutableLevelError, TypeError, ValueError):
        return False
    if sides[0] == sides[1]:
        return False
    left_bounds = {**bounds, spec.variable: (low, spec.threshold)}
    right_bounds = {**bounds, spec.variable: (spec.threshold, high)}
    near, far = (node.left, node.right) if sides[0] else (node.right, node.left)
    return _match(near, spec.left, truth, left_bounds) and _match(far, spec.right, truth, right_bounds)


def uniformity_test(counts) -> float:
    """Pearson chi-square p-value for equal cell probabilities."""
    counts = np.asarray(counts, dtype=float)
    if counts.sum() == 0:
        return math.nan
    return float(stats.chisquare(counts).pvalue)


def signed_rank_test(x, y, alternative: str = "two-sided") -> float:
    """Wilcoxon signed-rank p-value for paired samples; 1 when all pairs tie."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if np.all(d == 0):
        return 1.0
    return float(stats.wilcoxon(d, alternative=alternative, zero_method="wilcox").pvalue)
