"""Nonparametric survival estimation for interval-censored data.

Observations are half-open intervals ``(L, R]`` with ``R = inf`` for right
censoring; an exactly observed event is the closed point ``{t}``.  The
NPMLE places its mass on the Turnbull intervals (maximal intersections) and
is computed with the self-consistency EM iteration.  Within an interval all
mass is placed at the right endpoint, so every fitted curve is a
right-continuous step function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from . import _em

__all__ = [
    "CensoredObservation",
    "IntervalData",
    "TurnbullInterval",
    "SurvivalCurve",
    "NPMLEConvergenceError",
    "as_interval_data",
    "turnbull_intervals",
    "fit_npmle",
    "product_limit",
    "estimate_curve",
    "survival_at",
    "log_likelihood",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class CensoredObservation:
    """One subject's censoring interval ``(left, right]``."""

    left: float
    right: float = math.inf
    exact: bool = False
    weight: float = 1.0

    def __post_init__(self):
        left, right = float(self.left), float(self.right)
        if not left >= 0.0 or math.isinf(left):
            raise ValueError(f"left endpoint must be finite and >= 0, got {self.left!r}")
        if not right >= left:
            raise ValueError(f"right endpoint {self.right!r} is below left endpoint {self.left!r}")
        if self.exact and (left != right or math.isinf(right)):
            raise ValueError("an exact observation needs left == right < inf")
        if not self.exact and left == right:
            raise ValueError("an empty interval (L, L] is only allowed for exact observations")
        if not self.weight >= 0.0:
            raise ValueError(f"weight must be >= 0, got {self.weight!r}")

    @classmethod
    def event(cls, time: float, weight: float = 1.0) -> "CensoredObservation":
        return cls(time, time, True, weight)

    @classmethod
    def censored(cls, time: float, weight: float = 1.0) -> "CensoredObservation":
        return cls(time, math.inf, False, weight)

    @property
    def right_censored(self) -> bool:
        return math.isinf(self.right)


@dataclass(frozen=True, eq=False)
class IntervalData:
    """Column-oriented view of a sequence of censored observations.

    Parameters
    ----------
    left, right : ndarray
        Interval endpoints; ``right`` may contain ``inf``.
    exact : ndarray of bool
        True where the event time is observed exactly (``left == right``).
    weight : ndarray
        Nonnegative case weights.
    """

    left: np.ndarray
    right: np.ndarray
    exact: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        left = np.asarray(self.left, dtype=float).ravel()
        right = np.asarray(self.right, dtype=float).ravel()
        exact = np.asarray(self.exact, dtype=bool).ravel()
        weight = np.asarray(self.weight, dtype=float).ravel()
        if not (left.shape == right.shape == exact.shape == weight.shape):
            raise ValueError("left, right, exact and weight must have the same length")
        if np.any(~(left >= 0)) or np.any(np.isinf(left)):
            raise ValueError("left endpoints must be finite and >= 0")
        if np.any(~(right >= left)):
            raise ValueError("right endpoints must be >= left endpoints")
        if np.any(exact & ((left != right) | np.isinf(right))):
            raise ValueError("exact observations need left == right < inf")
        if np.any(~exact & (left == right)):
            raise ValueError("an empty interval (L, L] is only allowed for exact observations")
        if np.any(~(weight >= 0)):
            raise ValueError("weights must be >= 0")
        for name, arr in (("left", left), ("right", right), ("exact", exact), ("weight", weight)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_observations(cls, observations: Iterable[CensoredObservation]) -> "IntervalData":
        obs = list(observations)
        return cls(
            np.array([o.left for o in obs], dtype=float),
            np.array([o.right for o in obs], dtype=float),
            np.array([o.exact for o in obs], dtype=bool),
            np.array([o.weight for o in obs], dtype=float),
        )

    @classmethod
    def from_intervals(cls, left, right, weight=None) -> "IntervalData":
        """Build from endpoint arrays; ``left == right`` marks an exact event."""
        left = np.asarray(left, dtype=float)
        right = np.asarray(right, dtype=float)
        if weight is None:
            weight = np.ones(left.shape)
        return cls(left, right, left == right, weight)

    @classmethod
    def from_exact_times(cls, time, event, weight=None) -> "IntervalData":
        """Build from right-censored data: events are exact, censorings are ``(t, inf]``."""
        time = np.asarray(time, dtype=float)
        event = np.asarray(event, dtype=bool)
        if weight is None:
            weight = np.ones(time.shape)
        right = np.where(event, time, np.inf)
        return cls(time, right, event, weight)

    def __len__(self) -> int:
        return self.left.shape[0]

    def __iter__(self) -> Iterator[CensoredObservation]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> CensoredObservation:
        return CensoredObservation(
            float(self.left[i]), float(self.right[i]), bool(self.exact[i]), float(self.weight[i])
        )

    def subset(self, index) -> "IntervalData":
        return IntervalData(self.left[index], self.right[index], self.exact[index], self.weight[index])

    def with_weights(self, weight) -> "IntervalData":
        return IntervalData(self.left, self.right, self.exact, weight)

    @property
    def right_censored(self) -> np.ndarray:
        return np.isinf(self.right)

    @property
    def is_exact_time(self) -> bool:
        """True when every observation is an exact event or right-censored."""
        return bool(np.all(self.exact | self.right_censored))


ObservationsLike = Union[IntervalData, Sequence[CensoredObservation]]


def as_interval_data(observations: ObservationsLike) -> IntervalData:
    if isinstance(observations, IntervalData):
        return observations
    return IntervalData.from_observations(observations)


@dataclass(frozen=True)
class TurnbullInterval:
    """Equivalence set ``(q, p]``; ``q == p`` denotes the point ``{p}``."""

    q: float
    p: float

    @property
    def is_point(self) -> bool:
        return self.q == self.p


class NPMLEConvergenceError(RuntimeError):
    """The EM iteration hit ``max_iter``; ``curve`` holds the last iterate."""

    def __init__(self, message: str, curve: "SurvivalCurve"):
        super().__init__(message)
        self.curve = curve


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Discrete survival distribution with mass on Turnbull intervals.

    All mass of interval ``(q_j, p_j]`` is placed at ``p_j``, so
    ``S(t) = sum(masses[p > t])``.

    Attributes
    ----------
    q, p : ndarray
        Left and right endpoints of the support intervals, sorted.
    masses : ndarray
        Probability of each interval; sums to one.
    loglik : float
        Log-likelihood of the data the curve was fitted to.
    iterations : int
        EM sweeps used (0 for closed-form estimates).
    converged : bool
        False only for a curve recovered from a non-converged fit.
    """

    q: np.ndarray
    p: np.ndarray
    masses: np.ndarray
    loglik: float = math.nan
    iterations: int = 0
    converged: bool = True
    _tail: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).copy()
        p = np.asarray(self.p, dtype=float).copy()
        masses = np.asarray(self.masses, dtype=float).copy()
        if not (q.shape == p.shape == masses.shape) or q.ndim != 1:
            raise ValueError("q, p and masses must be 1-d arrays of equal length")
        if q.size == 0:
            raise ValueError("a survival curve needs at least one support interval")
        if np.any(q > p) or np.any(np.diff(p) <= 0):
            raise ValueError("support intervals must satisfy q <= p with strictly increasing p")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        # tail[k] = sum of masses[k:], tail[m] = 0
        tail = np.concatenate((np.cumsum(masses[::-1])[::-1], [0.0]))
        if abs(tail[0] - 1.0) <= 1e-9:
            tail[0] = 1.0  # no rounding residue before the first support point
        for name, arr in (("q", q), ("p", p), ("masses", masses), ("_tail", tail)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def intervals(self) -> list[TurnbullInterval]:
        return [TurnbullInterval(float(a), float(b)) for a, b in zip(self.q, self.p)]

    def __len__(self) -> int:
        return self.masses.shape[0]

    def survival(self, t):
        """Right-continuous ``S(t) = P(T > t)``; accepts scalars or arrays."""
        idx = np.searchsorted(self.p, t, side="right")
        out = np.minimum(self._tail[idx], 1.0)
        return float(out) if np.ndim(out) == 0 else out

    __call__ = survival

    def survival_left(self, t):
        """Left limit ``S(t-) = P(T >= t)``."""
        idx = np.searchsorted(self.p, t, side="left")
        out = np.minimum(self._tail[idx], 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def hazards(self) -> np.ndarray:
        """Discrete hazard of each support point, ``mass / S(p-)``."""
        before = self._tail[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(before > 0, self.masses / np.where(before > 0, before, 1.0), 0.0)

    def cumulative_hazard(self, t):
        """Cumulative hazard of the discrete distribution, summed over jumps ``p <= t``."""
        cum = np.concatenate(([0.0], np.cumsum(self.hazards())))
        out = cum[np.searchsorted(self.p, t, side="right")]
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, prob: float) -> float:
        """Smallest jump time ``t`` with ``S(t) <= 1 - prob``; ``nan`` if never reached."""
        level = 1.0 - prob
        after = self._tail[1:]
        hits = np.flatnonzero((after <= level + 1e-12) & np.isfinite(self.p))
        return float(self.p[hits[0]]) if hits.size else math.nan

    def breakpoints(self) -> np.ndarray:
        """Finite times at which ``S`` jumps."""
        return self.p[(self.masses > 0) & np.isfinite(self.p)]


def _turnbull_arrays(data: IntervalData) -> tuple[np.ndarray, np.ndarray]:
    # endpoint kinds: an exact point sorts as an L just before t, then Rs at t,
    # then ordinary (open) Ls at t
    n = len(data)
    if n == 0:
        raise ValueError("no observations")
    times = np.concatenate((data.left, data.right))
    kind = np.concatenate((np.where(data.exact, 0, 2), np.ones(n, dtype=int)))
    order = np.lexsort((kind, times))
    times, kind = times[order], kind[order]
    is_left = kind != 1
    pair = is_left[:-1] & ~is_left[1:]
    return times[:-1][pair], times[1:][pair]


def turnbull_intervals(observations: ObservationsLike) -> list[TurnbullInterval]:
    """Maximal intersections of the observation intervals, sorted and disjoint."""
    q, p = _turnbull_arrays(as_interval_data(observations))
    return [TurnbullInterval(float(a), float(b)) for a, b in zip(q, p)]


def _coverage(data: IntervalData, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and last support index inside each observation."""
    a = np.searchsorted(p, data.left, side="right")
    b = np.searchsorted(p, data.right, side="right") - 1
    point = np.searchsorted(p, data.left, side="left")
    a = np.where(data.exact, point, a)
    return a.astype(np.int64), b.astype(np.int64)


def _collapse(a, b, w):
    # canonical order makes the fit independent of input order, bit for bit
    order = np.lexsort((w, b, a))
    a, b, w = a[order], b[order], w[order]
    start = np.flatnonzero(np.concatenate(([True], (np.diff(a) != 0) | (np.diff(b) != 0))))
    return (
        np.ascontiguousarray(a[start]),
        np.ascontiguousarray(b[start]),
        np.ascontiguousarray(np.add.reduceat(w, start)),
    )


def fit_npmle(
    observations: ObservationsLike,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    check_monotone: bool = False,
) -> SurvivalCurve:
    """Turnbull's self-consistency estimate of the survival function.

    Parameters
    ----------
    observations : IntervalData or sequence of CensoredObservation
    tol : float
        Stop once the largest per-interval mass change in a sweep is below
        ``tol``.
    max_iter : int
        Sweep budget; exceeding it raises :class:`NPMLEConvergenceError`
        carrying the last iterate.
    check_monotone : bool
        Verify after every sweep that the log-likelihood did not decrease.

    Returns
    -------
    SurvivalCurve
    """
    data = as_interval_data(observations)
    q, p = _turnbull_arrays(data)
    if not np.sum(data.weight) > 0:
        raise ValueError("all weights are zero")
    a, b = _coverage(data, p)
    if np.any(a > b):
        raise AssertionError("observation without a Turnbull interval")
    a, b, w = _collapse(a, b, data.weight)
    masses = np.full(p.shape[0], 1.0 / p.shape[0])
    iterations, converged, violation = _em.em_iterate(
        a, b, w, masses, float(tol), int(max_iter), bool(check_monotone)
    )
    if violation >= 0:
        raise AssertionError(f"log-likelihood decreased at EM sweep {violation}")
    curve = SurvivalCurve(q, p, masses, _em.loglik(a, b, w, masses), int(iterations), bool(converged))
    if not converged:
        raise NPMLEConvergenceError(
            f"EM did not reach tol={tol:g} within {max_iter} sweeps", curve
        )
    return curve


def product_limit(time, event, weight=None) -> SurvivalCurve:
    """Kaplan-Meier estimate as a :class:`SurvivalCurve`.

    Events become point masses; mass left over after the last event sits on
    ``(c, inf]`` where ``c`` is the largest censoring time.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    weight = np.ones(time.shape) if weight is None else np.asarray(weight, dtype=float)
    if time.size == 0:
        raise ValueError("no observations")
    total = weight.sum()
    if not total > 0:
        raise ValueError("all weights are zero")

    ev_times, inv = np.unique(time[event], return_inverse=True)
    d = np.bincount(inv, weights=weight[event], minlength=ev_times.size)
    # at risk at s: weight with time >= s (censorings at s count as at risk)
    order = np.argsort(time, kind="mergesort")
    sorted_t = time[order]
    cum_w = np.concatenate(([0.0], np.cumsum(weight[order])))
    at_risk = total - cum_w[np.searchsorted(sorted_t, ev_times, side="left")]

    keep = d > 0
    ev_times, d, at_risk = ev_times[keep], d[keep], at_risk[keep]
    surv = np.cumprod(1.0 - d / at_risk)
    prev = np.concatenate(([1.0], surv[:-1]))
    masses = prev - surv
    q, p = ev_times.copy(), ev_times.copy()
    remaining = surv[-1] if surv.size else 1.0
    if not np.any(~event):
        # no censoring: the last event takes everything (guards rounding in d / at_risk)
        masses[-1] += remaining
        remaining = 0.0
    if remaining > 0:
        c = time[~event].max()
        q = np.append(q, c)
        p = np.append(p, np.inf)
        masses = np.append(masses, remaining)

    data = IntervalData.from_exact_times(time, event, weight)
    curve = SurvivalCurve(q, p, masses)
    return SurvivalCurve(q, p, masses, log_likelihood(data, curve), 0, True)


def estimate_curve(
    observations: ObservationsLike,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SurvivalCurve:
    """NPMLE, in closed product-limit form when the data allow it."""
    data = as_interval_data(observations)
    if data.is_exact_time:
        return product_limit(data.left, data.exact, data.weight)
    return fit_npmle(data, tol=tol, max_iter=max_iter)


def survival_at(curve: SurvivalCurve, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    return curve.survival(t)


def observation_probabilities(observations: ObservationsLike, curve: SurvivalCurve) -> np.ndarray:
    """Probability the curve assigns to each observation's interval."""
    data = as_interval_data(observations)
    upper = np.where(data.exact, curve.survival_left(data.left), curve.survival(data.left))
    lower = curve.survival(data.right)
    return np.maximum(upper - lower, 0.0)


def log_likelihood(observations: ObservationsLike, curve: SurvivalCurve) -> float:
    """Weighted log-likelihood; ``-inf`` if some weighted observation gets zero probability."""
    data = as_interval_data(observations)
    prob = observation_probabilities(data, curve)
    pos = data.weight > 0
    if np.any(prob[pos] <= 0):
        return -math.inf
    return float(np.sum(data.weight[pos] * np.log(prob[pos])))
