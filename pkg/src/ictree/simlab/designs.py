"""Data-generating designs: the null design, a tree-structured design and two smooth designs.

Every design draws covariates, draws one event time per subject from a
subject-specific distribution, and censors it with an examination
schedule.  The true distribution of each subject is returned alongside the
data so prediction error can be measured exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..ctree import NUMERIC, ORDINAL, Covariate
from ..estimator import IntervalData
from .censoring import CensoringMechanism, censor_times
from .distributions import Bathtub, EventDistribution, Exponential, LogNormal, Weibull, sample_from

__all__ = [
    "TruthSplit",
    "GroundTruthTree",
    "CANONICAL_TREE",
    "Design",
    "SimulatedDataset",
    "get_design",
    "DESIGNS",
    "FAMILIES",
    "gen_dataset",
]

GRID = tuple(round(i / 10, 1) for i in range(11))


# ----------------------------------------------------------------- truth tree

@dataclass(frozen=True)
class TruthSplit:
    """``variable <= threshold`` goes left; children are splits or leaf indices."""

    variable: str
    threshold: float
    left: "TruthSplit | int"
    right: "TruthSplit | int"


@dataclass(frozen=True)
class GroundTruthTree:
    """Tree-structured truth with leaves indexing a family's parameter settings.

    ``support`` describes each covariate's marginal law, either
    ``("discrete", levels)`` or ``("uniform", low, high)``; it is used to
    find the centroid of every region when matching fitted trees.
    """

    root: TruthSplit
    support: dict = field(hash=False)

    def leaf_of(self, table: dict) -> np.ndarray:
        n = len(next(iter(table.values())))
        out = np.empty(n, dtype=int)

        def route(node, index):
            if isinstance(node, int):
                out[index] = node
                return
            left = np.asarray(table[node.variable], dtype=float)[index] <= node.threshold
            route(node.left, index[left])
            route(node.right, index[~left])

        route(self.root, np.arange(n))
        return out

    @property
    def n_leaves(self) -> int:
        def count(node):
            return 1 if isinstance(node, int) else count(node.left) + count(node.right)

        return count(self.root)

    def centroid(self, variable: str, low: float, high: float) -> float:
        """Mean of ``variable`` restricted to ``(low, high]``."""
        law = self.support[variable]
        if law[0] == "discrete":
            vals = [v for v in law[1] if low < v <= high]
            return float(np.mean(vals))
        lo, hi = max(law[1], low), min(law[2], high)
        return 0.5 * (lo + hi)


CANONICAL_TREE = GroundTruthTree(
    TruthSplit("X1", 2.5, TruthSplit("X2", 1.5, 0, 1), TruthSplit("X3", 1.0, 2, 3)),
    {
        "X1": ("discrete", (1, 2, 3, 4, 5)),
        "X2": ("discrete", (1, 2)),
        "X3": ("uniform", 0.0, 2.0),
        "X4": ("discrete", (1, 2, 3, 4, 5)),
        "X5": ("discrete", (1, 2)),
        "X6": ("uniform", 0.0, 2.0),
    },
)

# leaf parameter settings, listed left to right
FAMILIES: dict[str, tuple[EventDistribution, ...]] = {
    "exponential": tuple(Exponential(r) for r in (0.1, 0.23, 0.4, 0.9)),
    "weibull_d": tuple(Weibull(0.9, s) for s in (7.0, 3.0, 2.5, 1.0)),
    "weibull_i": tuple(Weibull(3.0, s) for s in (2.0, 4.3, 6.2, 10.0)),
    "lognormal": tuple(LogNormal(m, s) for m, s in ((2.0, 0.3), (1.7, 0.2), (1.3, 0.3), (0.5, 0.5))),
    "bathtub": tuple(Bathtub(a) for a in (0.01, 0.15, 0.20, 0.90)),
}

NULL_FAMILIES: dict[str, EventDistribution] = {
    "exponential": Exponential(1 / 3.2),
    "weibull": Weibull(0.8, 3.0),
    "lognormal": LogNormal(0.8, 1.0),
}


def _theta_linear(x1, x2):
    return -x1 - x2


def _theta_cosine(x1, x2):
    s = x1 + x2
    return -(np.cos(s * np.pi) + np.sqrt(s))


THETA_FAMILIES: dict[str, Callable[[float], EventDistribution]] = {
    "exponential": lambda th: Exponential(math.exp(th)),
    "weibull_i": lambda th: Weibull(2.0, 10.0 * math.exp(th)),
    "weibull_d": lambda th: Weibull(0.5, 5.0 * math.exp(th)),
}


# -------------------------------------------------------------------- designs

@dataclass(frozen=True)
class SimulatedDataset:
    data: IntervalData
    covariates: list
    times: np.ndarray
    truth: list

    @property
    def table(self) -> dict:
        return {c.name: c.values for c in self.covariates}

    @property
    def right_censored_fraction(self) -> float:
        return float(np.mean(self.data.right_censored))


@dataclass(frozen=True)
class Design:
    """Covariate law plus the map from covariates to subject distributions."""

    name: str
    family: str
    draw_covariates: Callable[[np.random.Generator, int], list]
    distributions: Callable[[list], list]
    truth_tree: GroundTruthTree | None = None

    def sample_times(self, covariates, rng) -> tuple[np.ndarray, list]:
        dists = self.distributions(covariates)
        return sample_from(dists, rng), dists

    def marginal_sampler(self):
        """``(rng, size) -> times`` drawing covariates afresh; used for calibration."""

        def sampler(rng, size):
            return self.sample_times(self.draw_covariates(rng, size), rng)[0]

        return sampler


def _null_covariates(rng, n):
    return [
        Covariate("X1", rng.uniform(1.0, 2.0, n)),
        Covariate("X2", rng.uniform(1.0, 2.0, n)),
        Covariate("X3", np.asarray(GRID)[rng.integers(0, len(GRID), n)], ORDINAL, GRID),
        Covariate("X4", rng.integers(0, 2, n).astype(float)),
        Covariate("X5", rng.integers(0, 2, n).astype(float)),
    ]


def _tree_covariates(rng, n):
    return [
        Covariate("X1", rng.integers(1, 6, n).astype(float)),
        Covariate("X2", rng.integers(1, 3, n).astype(float)),
        Covariate("X3", rng.uniform(0.0, 2.0, n)),
        Covariate("X4", rng.integers(1, 6, n).astype(float)),
        Covariate("X5", rng.integers(1, 3, n).astype(float)),
        Covariate("X6", rng.uniform(0.0, 2.0, n)),
    ]


def _smooth_covariates(rng, n):
    return [
        Covariate("X1", rng.uniform(0.0, 1.0, n)),
        Covariate("X2", rng.integers(0, 2, n).astype(float)),
        Covariate("X3", rng.integers(0, 2, n).astype(float)),
        Covariate("X4", rng.uniform(0.0, 1.0, n)),
        Covariate("X5", rng.uniform(0.0, 1.0, n)),
        Covariate("X6", rng.integers(0, 2, n).astype(float)),
    ]


def _cached(factory):
    cache: dict = {}

    def make(theta):
        if theta not in cache:
            cache[theta] = factory(theta)
        return cache[theta]

    return make


DESIGNS = ("null", "setup1", "setup2", "setup3")


def get_design(name: str, family: str, tree: GroundTruthTree = CANONICAL_TREE) -> Design:
    """Look up a design by name (``null``, ``setup1``, ``setup2``, ``setup3``) and family."""
    if name == "null":
        if family not in NULL_FAMILIES:
            raise ValueError(f"null design families: {sorted(NULL_FAMILIES)}")
        dist = NULL_FAMILIES[family]
        return Design(name, family, _null_covariates, lambda covs: [dist] * len(covs[0]))

    if name == "setup1":
        if family not in FAMILIES:
            raise ValueError(f"setup1 families: {sorted(FAMILIES)}")
        params = FAMILIES[family]

        def tree_dists(covs):
            leaves = tree.leaf_of({c.name: c.values for c in covs})
            return [params[j] for j in leaves]

        return Design(name, family, _tree_covariates, tree_dists, tree)

    if name in ("setup2", "setup3"):
        if family not in THETA_FAMILIES:
            raise ValueError(f"{name} families: {sorted(THETA_FAMILIES)}")
        theta_fn = _theta_linear if name == "setup2" else _theta_cosine
        make = _cached(THETA_FAMILIES[family])

        def theta_dists(covs):
            theta = theta_fn(covs[0].values, covs[1].values)
            return [make(float(th)) for th in theta]

        return Design(name, family, _smooth_covariates, theta_dists)

    raise ValueError(f"unknown design {name!r}; choose from {DESIGNS}")


def gen_dataset(
    design: Design,
    n: int,
    mech: CensoringMechanism | None,
    rng: np.random.Generator,
) -> SimulatedDataset:
    """Draw ``n`` subjects; ``mech=None`` leaves event times uncensored (test sets)."""
    covs = design.draw_covariates(rng, n)
    times, dists = design.sample_times(covs, rng)
    if mech is None:
        data = IntervalData.from_exact_times(times, np.ones(n, dtype=bool))
    else:
        data = censor_times(times, mech, rng)
    return SimulatedDataset(data, covs, times, dists)


def true_survival(dists: Sequence[EventDistribution], t) -> np.ndarray:
    """``S_i(t)`` for every subject, one row each."""
    return np.vstack([np.atleast_1d(d.sf(t)) for d in dists])
