"""Imputation baselines: collapse each interval to one time, then fit the same tree."""

from __future__ import annotations

import enum
import logging
from typing import Sequence

import numpy as np

from .ctree import Covariate, SurvivalTree, TreeConfig, grow_tree
from .estimator import IntervalData, ObservationsLike, as_interval_data

__all__ = ["ImputationMode", "impute", "fit_imputed_tree", "ZERO_TIME_CLAMP"]

logger = logging.getLogger(__name__)

ZERO_TIME_CLAMP = 1e-9


class ImputationMode(str, enum.Enum):
    LEFT = "left"
    MID = "mid"
    RIGHT = "right"


def impute(observations: ObservationsLike, mode) -> IntervalData:
    """Replace each finite interval ``(L, R]`` by an exact event.

    The event goes to ``L``, ``(L + R) / 2`` or ``R`` depending on ``mode``.
    Right-censored observations stay censored at ``L`` and exact
    observations pass through.  A left-imputed event at time 0 is moved to
    ``ZERO_TIME_CLAMP``.
    """
    mode = ImputationMode(mode)
    data = as_interval_data(observations)
    finite = ~data.exact & ~data.right_censored
    if mode is ImputationMode.LEFT:
        t = data.left.copy()
    elif mode is ImputationMode.MID:
        t = np.where(finite, 0.5 * (data.left + np.where(finite, data.right, 0.0)), data.left)
    else:
        t = np.where(finite, data.right, data.left)
    zero = finite & (t <= 0.0)
    if np.any(zero):
        logger.warning("%d left-imputed event time(s) at 0 clamped to %g", int(zero.sum()), ZERO_TIME_CLAMP)
        t = np.where(zero, data.left + ZERO_TIME_CLAMP, t)
    event = data.exact | finite
    return IntervalData.from_exact_times(t, event, data.weight)


def fit_imputed_tree(
    observations: ObservationsLike,
    covariates: Sequence[Covariate],
    mode,
    config: TreeConfig = TreeConfig(),
) -> SurvivalTree:
    """Tree on imputed data: log-rank scores and Kaplan-Meier terminal curves."""
    return grow_tree(impute(observations, mode), covariates, config)
