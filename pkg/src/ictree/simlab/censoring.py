"""Examination-schedule censoring and its calibration to a right-censoring rate.

A subject is examined at ``0 = t_0 < t_1 < ... < t_k``; the reported
interval is the ``(t_{j-1}, t_j]`` containing the event time, or
``(t_k, inf)`` when the event happens after the last examination.  The
schedule is drawn independently of the event time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from ..estimator import CensoredObservation, IntervalData
from .distributions import EventDistribution

__all__ = [
    "FixedGap",
    "UniformGap",
    "CensoringMechanism",
    "CalibrationError",
    "censor_observation",
    "censor_times",
    "calibrate_censoring",
    "right_censoring_fraction",
]

ZERO_TARGET = 0.005
TOLERANCE = 0.02


@dataclass(frozen=True)
class FixedGap:
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("gap must be > 0")

    def draw(self, rng, shape):
        return np.full(shape, float(self.delta))

    def scaled(self, factor: float) -> "FixedGap":
        return FixedGap(self.delta * factor)


@dataclass(frozen=True)
class UniformGap:
    low: float
    high: float

    def __post_init__(self):
        if not 0 < self.low <= self.high:
            raise ValueError("uniform gaps need 0 < low <= high")

    def draw(self, rng, shape):
        return rng.uniform(self.low, self.high, shape)

    def scaled(self, factor: float) -> "UniformGap":
        return UniformGap(self.low * factor, self.high * factor)


Gap = Union[FixedGap, UniformGap]


@dataclass(frozen=True)
class CensoringMechanism:
    """``k`` interior examinations separated by i.i.d. gaps.

    With ``extra > 0`` each subject independently receives one more
    examination with that probability, which interpolates the
    right-censoring rate between ``k`` and ``k + 1`` examinations.
    """

    k: int
    gap: Gap
    extra: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.extra <= 1.0:
            raise ValueError("extra must lie in [0, 1]")

    @property
    def max_exams(self) -> int:
        return self.k + (1 if self.extra > 0 else 0)

    def schedules(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Examination times, one row per subject; missing exams are ``inf``."""
        sched = np.cumsum(self.gap.draw(rng, (n, self.max_exams)), axis=1)
        if self.extra > 0:
            sched[rng.random(n) >= self.extra, self.k] = np.inf
        return sched


class CalibrationError(ValueError):
    pass


def censor_times(times, mech: CensoringMechanism, rng: np.random.Generator) -> IntervalData:
    """Censoring interval of every event time under independent schedules."""
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise ValueError("event times must be > 0")
    n = times.shape[0]
    sched = mech.schedules(rng, n)
    kmax = sched.shape[1]
    j = np.sum(sched < times[:, None], axis=1)  # exams strictly before T
    rows = np.arange(n)
    left = np.where(j == 0, 0.0, sched[rows, np.maximum(j - 1, 0)])
    right = np.where(j == kmax, np.inf, sched[rows, np.minimum(j, kmax - 1)])
    return IntervalData(left, right, np.zeros(n, dtype=bool), np.ones(n))


def censor_observation(T: float, mech: CensoringMechanism, rng: np.random.Generator) -> CensoredObservation:
    return censor_times(np.array([T]), mech, rng)[0]


Sampler = Callable[[np.random.Generator, int], np.ndarray]


def _as_sampler(dist) -> Sampler:
    if isinstance(dist, EventDistribution):
        return lambda rng, size: np.asarray(dist.sample(rng, size), dtype=float)
    return dist


def right_censoring_fraction(dist, mech: CensoringMechanism, rng, n_draws: int = 100_000) -> float:
    times = _as_sampler(dist)(rng, n_draws)
    last = np.max(np.where(np.isfinite(s := mech.schedules(rng, n_draws)), s, -np.inf), axis=1)
    return float(np.mean(times > last))


def calibrate_censoring(
    dist,
    target: float,
    gap: Gap,
    search: str = "k",
    k: int = 5,
    rng: np.random.Generator | None = None,
    n_draws: int = 100_000,
    k_max: int = 10_000,
) -> CensoringMechanism:
    """Choose the schedule giving a target right-censoring fraction.

    Parameters
    ----------
    dist : EventDistribution or callable ``(rng, size) -> times``
        Marginal event-time distribution of the data to be censored.
    target : float
        Right-censoring fraction in ``[0, 1)``; 0 asks for less than 0.5%.
    gap : FixedGap or UniformGap
        Gap distribution; with ``search="scale"`` it is a template whose
        scale is calibrated.
    search : {"k", "scale"}
        Calibrate the number of examinations for fixed gaps, or the gap
        scale for a fixed ``k``.  When no whole ``k`` lands within two
        points of the target, the ``k`` search adds an extra examination
        with the probability that interpolates the rate linearly.

    Returns
    -------
    CensoringMechanism
        Its Monte-Carlo right-censoring fraction is within two points of
        ``target`` on the calibration draws.

    Raises
    ------
    CalibrationError
        If the target cannot be reached; the message gives the achievable
        range.
    """
    if not 0 <= target < 1:
        raise ValueError("target must lie in [0, 1)")
    rng = np.random.default_rng(0) if rng is None else rng
    times = _as_sampler(dist)(rng, n_draws)
    goal = ZERO_TARGET / 2 if target == 0 else target

    if search == "scale":
        # censored iff T > s * G, so the fraction is exactly hit by a quantile of T / G
        totals = gap.draw(rng, (n_draws, k)).sum(axis=1)
        factor = float(np.quantile(times / totals, 1.0 - goal))
        mech = CensoringMechanism(k, gap.scaled(factor))
        achieved = float(np.mean(times > factor * totals))
    elif search == "k":
        # common random numbers: the fraction is monotone in k
        end = np.zeros(n_draws)
        fractions = []
        for kk in range(1, k_max + 1):
            end += gap.draw(rng, n_draws)
            fractions.append(float(np.mean(times > end)))
            if fractions[-1] <= goal:
                break
        else:
            raise CalibrationError(
                f"target {target:g} unattainable within k <= {k_max}; "
                f"achievable range [{fractions[-1]:.4f}, {fractions[0]:.4f}]"
            )
        if target > fractions[0] + TOLERANCE:
            raise CalibrationError(
                f"target {target:g} unattainable: with k >= 1 the right-censoring fraction "
                f"is at most {fractions[0]:.4f}; achievable range [0, {fractions[0]:.4f}]"
            )
        best = len(fractions) - 1
        if target > 0 and best > 0 and abs(fractions[best - 1] - target) < abs(fractions[best] - target):
            best -= 1
        mech = CensoringMechanism(best + 1, gap)
        achieved = fractions[best]
        if target > 0 and abs(achieved - target) > TOLERANCE and len(fractions) > 1:
            # the last two rates bracket the target; an extra exam given with
            # probability pi mixes them
            hi, lo = fractions[-2], fractions[-1]
            pi = (hi - target) / (hi - lo)
            mech = CensoringMechanism(len(fractions) - 1, gap, float(pi))
            achieved = (1 - pi) * hi + pi * lo
    else:
        raise ValueError(f"unknown search {search!r}")

    if target == 0:
        ok = achieved < ZERO_TARGET
    else:
        ok = abs(achieved - target) <= TOLERANCE
    if not ok:
        raise CalibrationError(f"could not bring right censoring within two points of {target:g} (got {achieved:.4f})")
    return mech
