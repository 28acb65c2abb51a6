"""Interval-censored log-rank scores.

For an interval ``(L, R]`` the score is the derivative of ``S log S``
averaged over the interval,

    U = (S(L) log S(L) - S(R) log S(R)) / (S(L) - S(R)),

with ``0 log 0 = 0``, so a right-censored ``(L, inf]`` gets ``log S(L)``.
Exact observations use the derivative form: ``1 + log S(t)`` for an event
and ``log S(t)`` for a censoring.  Whenever the data contain exact
observations, ``S`` in those two formulas is ``exp(-Lambda)`` with
``Lambda`` the cumulative hazard of the fitted point masses, which gives the
classical ``delta - Lambda`` log-rank scores and makes the weighted scores
sum to zero.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .estimator import IntervalData, ObservationsLike, SurvivalCurve, as_interval_data

__all__ = ["logrank_scores", "nelson_aalen", "ScoreError"]

logger = logging.getLogger(__name__)


class ScoreError(ValueError):
    """An observation lies beyond all fitted mass (``S(L) = 0``)."""


def _xlogx(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = s[pos] * np.log(s[pos])
    return out


def nelson_aalen(time, event, weight=None):
    """Cumulative hazard at each ``time`` (jumps at ``s <= time`` included).

    Returns
    -------
    ndarray
        ``sum_{s <= t} d_s / n_s`` evaluated at every input time, where
        ``n_s`` counts the weight still under observation at ``s``.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    weight = np.ones(time.shape) if weight is None else np.asarray(weight, dtype=float)
    uniq, inv = np.unique(time, return_inverse=True)
    d = np.bincount(inv, weights=np.where(event, weight, 0.0), minlength=uniq.size)
    leaving = np.bincount(inv, weights=weight, minlength=uniq.size)
    at_risk = np.cumsum(leaving[::-1])[::-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        hazard = np.where(d > 0, d / np.where(at_risk > 0, at_risk, 1.0), 0.0)
    return np.cumsum(hazard)[inv]


def logrank_scores(
    observations: ObservationsLike,
    curve: SurvivalCurve | None = None,
    eps: float = 1e-12,
) -> np.ndarray:
    """Log-rank score of every observation, aligned with the input order.

    Parameters
    ----------
    observations : IntervalData or sequence of CensoredObservation
    curve : SurvivalCurve, optional
        NPMLE fitted to (a superset of) the observations.  Not needed for
        exact-time data (events and right-censorings only), where the
        cumulative hazard is computed directly by counting.
    eps : float
        A non-degenerate interval with ``S(L) - S(R) < eps`` falls back to
        the derivative form ``1 + log S(L)``.

    Returns
    -------
    ndarray of float
    """
    data = as_interval_data(observations)
    if data.is_exact_time and (curve is None or data.exact.any()):
        cumhaz = nelson_aalen(data.left, data.exact, data.weight)
        return np.where(data.exact, 1.0, 0.0) - cumhaz
    if curve is None:
        raise ValueError("a fitted curve is required for interval-censored data")
    return _interval_scores(data, curve, eps)


def _interval_scores(data: IntervalData, curve: SurvivalCurve, eps: float) -> np.ndarray:
    s_left = curve.survival(data.left)
    s_right = curve.survival(data.right)
    ordinary = ~data.exact
    if np.any(ordinary & (s_left <= 0) & (data.weight > 0)):
        bad = np.flatnonzero(ordinary & (s_left <= 0))[0]
        raise ScoreError(
            f"observation {bad} starts at {data.left[bad]!r}, after all estimated mass"
        )

    scores = np.empty(len(data))
    gap = s_left - s_right
    flat = ordinary & (gap < eps)
    regular = ordinary & ~flat
    scores[regular] = (_xlogx(s_left[regular]) - _xlogx(s_right[regular])) / gap[regular]
    if np.any(flat):
        logger.warning(
            "%d interval(s) with S(L) - S(R) < %g scored by the derivative form",
            int(flat.sum()), eps,
        )
        with np.errstate(divide="ignore"):
            scores[flat] = 1.0 + np.log(s_left[flat])

    if np.any(data.exact):
        # cumulative-hazard convention for events and right-censorings alike,
        # matching the exact-time path
        cumhaz = curve.cumulative_hazard(data.left)
        scores[data.exact] = 1.0 - cumhaz[data.exact]
        rc = data.right_censored
        scores[rc] = -cumhaz[rc]
    return scores


def score_sum(observations: ObservationsLike, scores: np.ndarray) -> float:
    data = as_interval_data(observations)
    return math.fsum(data.weight * scores)
