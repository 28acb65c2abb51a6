"""Conditional inference survival trees for interval-censored responses.

Each node is split in two steps.  First the association between every
covariate and the node's log-rank scores is tested with a linear statistic
standardized by its permutation mean and covariance; the covariate with the
smallest (Bonferroni-adjusted) p-value is chosen if that p-value is at most
``alpha``.  Then the binary split of the chosen covariate maximizing the
standardized two-sample statistic is taken.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, Sequence

import numpy as np
from scipy import stats

from .estimator import (
    IntervalData,
    NPMLEConvergenceError,
    ObservationsLike,
    SurvivalCurve,
    as_interval_data,
    estimate_curve,
)
from .scores import logrank_scores

__all__ = [
    "NUMERIC",
    "ORDINAL",
    "NOMINAL",
    "Covariate",
    "CovariateSpec",
    "LinearStatisticMoments",
    "TreeConfig",
    "Split",
    "Selection",
    "TreeNode",
    "SurvivalTree",
    "UnroutableLevelError",
    "covariate_transform",
    "linear_statistic_moments",
    "node_scores",
    "select_variable",
    "best_split",
    "grow_tree",
    "predict_curve",
]

logger = logging.getLogger(__name__)

NUMERIC, ORDINAL, NOMINAL = "num", "ord", "nom"
_KINDS = (NUMERIC, ORDINAL, NOMINAL)
MAX_NOMINAL_LEVELS = 12
_RANK_TOL = 1e-8


class UnroutableLevelError(KeyError):
    """A nominal value was not seen at the node that splits on it."""


@dataclass(frozen=True)
class CovariateSpec:
    """Name, kind and levels of a covariate, without data."""

    name: str
    kind: str = NUMERIC
    levels: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown covariate kind {self.kind!r}")
        if self.kind == ORDINAL and self.levels:
            scores = np.asarray(self.levels, dtype=float)
            if np.any(np.diff(scores) <= 0):
                raise ValueError(f"ordinal scores of {self.name!r} must be strictly increasing")
        if self.kind == NOMINAL:
            if len(self.levels) < 2:
                raise ValueError(f"nominal covariate {self.name!r} needs at least two levels")
            if len(set(self.levels)) != len(self.levels):
                raise ValueError(f"duplicate levels in nominal covariate {self.name!r}")


@dataclass(frozen=True, eq=False)
class Covariate:
    """One covariate column.

    Numeric and ordinal values are stored as floats (ordinal values are the
    level scores); nominal values are labels drawn from ``levels``.
    """

    name: str
    values: np.ndarray
    kind: str = NUMERIC
    levels: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown covariate kind {self.kind!r}")
        if self.kind == NOMINAL:
            values = np.asarray(self.values, dtype=object).ravel()
            levels = tuple(self.levels) if self.levels else tuple(sorted(set(values.tolist())))
            unknown = set(values.tolist()) - set(levels)
            if unknown:
                raise ValueError(f"{self.name!r}: values {sorted(map(str, unknown))} not among declared levels")
        else:
            values = np.asarray(self.values, dtype=float).ravel()
            if np.any(np.isnan(values)):
                raise ValueError(f"{self.name!r}: missing values are not supported")
            levels = tuple(float(v) for v in self.levels)
            if self.kind == ORDINAL and levels and not np.all(np.isin(values, levels)):
                raise ValueError(f"{self.name!r}: ordinal values must be among the declared scores")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "levels", levels)
        CovariateSpec(self.name, self.kind, levels)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def spec(self) -> CovariateSpec:
        return CovariateSpec(self.name, self.kind, self.levels)

    def subset(self, index) -> "Covariate":
        return Covariate(self.name, self.values[index], self.kind, self.levels)


def covariate_transform(cov: Covariate) -> np.ndarray:
    """Design columns ``g(X)``: the raw values, or one indicator per nominal level."""
    if cov.kind == NOMINAL:
        return np.column_stack([(cov.values == lev).astype(float) for lev in cov.levels])
    return cov.values.astype(float)[:, None]


def is_splittable(cov: Covariate, weight=None) -> bool:
    """At least two distinct values among observations with positive weight."""
    values = cov.values if weight is None else cov.values[np.asarray(weight) > 0]
    return len(set(values.tolist())) >= 2


def _score_variance(h, w, e_h, w_tot) -> float:
    v_h = float(np.sum(w * (h - e_h) ** 2) / w_tot)
    # rounding noise in mathematically constant scores is not a signal
    if v_h <= (1e-13 * max(1.0, float(np.max(np.abs(h))))) ** 2:
        return 0.0
    return v_h


@dataclass(frozen=True, eq=False)
class LinearStatisticMoments:
    """Linear statistic, its permutation moments and the resulting test.

    ``statistic`` is ``|T - mu| / sqrt(sigma)`` for one column and the
    quadratic form ``(T - mu)' sigma^+ (T - mu)`` otherwise.
    """

    T: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    statistic: float
    p_value: float
    log_p_value: float
    df: int


def linear_statistic_moments(g, scores, weights=None) -> LinearStatisticMoments:
    """Permutation moments of ``T = sum_i w_i g_i h_i`` and the standardized test.

    Parameters
    ----------
    g : array_like, shape (n,) or (n, p)
        Transformed covariate.
    scores : array_like, shape (n,)
        Influence values ``h``.
    weights : array_like, shape (n,), optional
        Case weights; their sum must be at least 2.

    Returns
    -------
    LinearStatisticMoments
    """
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    h = np.asarray(scores, dtype=float)
    w = np.ones(h.shape) if weights is None else np.asarray(weights, dtype=float)
    w_tot = w.sum()
    if not w_tot >= 2:
        raise ValueError("the sum of weights must be at least 2")

    e_h = np.sum(w * h) / w_tot
    v_h = _score_variance(h, w, e_h, w_tot)
    gw = w @ g
    T = (w * h) @ g
    mu = e_h * gw

    # centered forms avoid cancellation; constant columns are exactly zero
    gc = g - gw / w_tot
    gc[:, np.ptp(g, axis=0) == 0] = 0.0
    sigma = (w_tot / (w_tot - 1.0)) * v_h * (gc.T * w) @ gc
    sigma = 0.5 * (sigma + sigma.T)
    dev = (w * (h - e_h)) @ gc

    p = g.shape[1]
    if p == 1:
        var = float(sigma[0, 0])
        if not var > 0:
            return LinearStatisticMoments(T, mu, sigma, 0.0, 1.0, 0.0, 0)
        c = abs(float(dev[0])) / math.sqrt(var)
        log_p = math.log(2.0) + float(stats.norm.logsf(c))
        return LinearStatisticMoments(T, mu, sigma, c, min(1.0, math.exp(log_p)), min(0.0, log_p), 1)

    evals, evecs = np.linalg.eigh(sigma)
    top = evals.max()
    if not top > 0:
        return LinearStatisticMoments(T, mu, sigma, 0.0, 1.0, 0.0, 0)
    keep = evals > _RANK_TOL * top
    df = int(keep.sum())
    proj = evecs[:, keep].T @ dev
    c = float(np.sum(proj**2 / evals[keep]))
    log_p = float(stats.chi2.logsf(c, df))
    return LinearStatisticMoments(T, mu, sigma, c, math.exp(log_p), log_p, df)


@dataclass(frozen=True)
class TreeConfig:
    """Growth controls.

    ``alpha`` gates splitting on the adjusted p-value, ``minsplit`` and
    ``minbucket`` are weight sums, ``maxdepth = 0`` means unlimited.
    """

    alpha: float = 0.05
    minsplit: float = 20
    minbucket: float = 7
    maxdepth: int = 0
    multiplicity: str = "bonferroni"
    em_tol: float = 1e-10
    em_max_iter: int = 1_000_000
    score_eps: float = 1e-12

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not self.minbucket >= 1:
            raise ValueError("minbucket must be >= 1")
        if not 2 * self.minbucket <= self.minsplit:
            raise ValueError("minsplit must be at least 2 * minbucket")
        if self.maxdepth < 0:
            raise ValueError("maxdepth must be >= 0")
        if self.multiplicity not in ("bonferroni", "none"):
            raise ValueError("multiplicity must be 'bonferroni' or 'none'")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class Split:
    """Binary rule; numeric/ordinal send ``x <= threshold`` left."""

    variable: str
    kind: str
    threshold: float | None = None
    left_levels: tuple = ()
    right_levels: tuple = ()
    statistic: float = math.nan

    def goes_left(self, values) -> np.ndarray:
        if self.kind == NOMINAL:
            values = np.asarray(values, dtype=object)
            left = np.isin(values, self.left_levels)
            right = np.isin(values, self.right_levels)
            if not np.all(left | right):
                bad = values[~(left | right)][0]
                raise UnroutableLevelError(f"unroutable level {bad!r} for split on {self.variable!r}")
            return left
        return np.asarray(values, dtype=float) <= self.threshold

    def describe(self, side: str) -> str:
        if self.kind == NOMINAL:
            levels = self.left_levels if side == "left" else self.right_levels
            return f"{self.variable} in {{{', '.join(map(str, levels))}}}"
        op = "<=" if side == "left" else ">"
        return f"{self.variable} {op} {self.threshold:.6g}"


@dataclass(frozen=True)
class Selection:
    index: int
    variable: str
    p_value: float
    raw_p_values: tuple
    adjusted_p_values: tuple


@dataclass(frozen=True, eq=False)
class TreeNode:
    id: int
    n: int
    weight: float
    depth: int
    split: Split | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    curve: SurvivalCurve | None = None
    p_values: tuple = ()
    diagnostics: tuple = ()

    @property
    def is_terminal(self) -> bool:
        return self.split is None

    def walk(self) -> Iterator["TreeNode"]:
        yield self
        if not self.is_terminal:
            yield from self.left.walk()
            yield from self.right.walk()


def _as_mapping(covariates) -> dict:
    if isinstance(covariates, Mapping):
        return dict(covariates)
    return {c.name: c.values for c in covariates}


@dataclass(frozen=True, eq=False)
class SurvivalTree:
    """Fitted tree: root node plus the covariate schema and configuration."""

    root: TreeNode
    schema: tuple
    config: TreeConfig = field(default_factory=TreeConfig)

    def nodes(self) -> list[TreeNode]:
        return list(self.root.walk())

    def terminals(self) -> list[TreeNode]:
        return [nd for nd in self.root.walk() if nd.is_terminal]

    def node(self, node_id: int) -> TreeNode:
        for nd in self.root.walk():
            if nd.id == node_id:
                return nd
        raise KeyError(node_id)

    @property
    def n_splits(self) -> int:
        return sum(not nd.is_terminal for nd in self.root.walk())

    @property
    def depth(self) -> int:
        return max(nd.depth for nd in self.root.walk())

    def apply(self, covariates) -> np.ndarray:
        """Terminal node id for every row of a covariate table."""
        table = _as_mapping(covariates)
        n = len(next(iter(table.values()))) if table else 0
        out = np.empty(n, dtype=int)

        def route(node, index):
            if node.is_terminal:
                out[index] = node.id
                return
            if node.split.variable not in table:
                raise KeyError(f"covariate {node.split.variable!r} is required for prediction")
            column = np.asarray(table[node.split.variable], dtype=object if node.split.kind == NOMINAL else float)
            left = node.split.goes_left(column[index])
            route(node.left, index[left])
            route(node.right, index[~left])

        route(self.root, np.arange(n))
        return out

    def predict_curves(self, covariates) -> list[SurvivalCurve]:
        curves = {nd.id: nd.curve for nd in self.terminals()}
        return [curves[i] for i in self.apply(covariates)]

    def predict_curve(self, row: Mapping[str, Any]) -> SurvivalCurve:
        return self.predict_curves({k: [v] for k, v in row.items()})[0]

    def predict_survival(self, covariates, times) -> np.ndarray:
        """Matrix of ``S(t)``, one row per input row and one column per time."""
        times = np.asarray(times, dtype=float)
        return np.vstack([c.survival(times) for c in self.predict_curves(covariates)])

    def render(self) -> str:
        lines = []

        def summary(curve):
            if curve is None:
                return ""
            qs = [curve.quantile(p) for p in (0.25, 0.5, 0.75)]
            txt = ", ".join("NA" if math.isnan(v) else f"{v:.4g}" for v in qs)
            return f" quartiles=({txt})"

        def visit(node, indent, label):
            head = "  " * indent + (f"{label}: " if label else "")
            if node.is_terminal:
                lines.append(f"{head}[{node.id}] n={node.n}{summary(node.curve)}")
                return
            lines.append(f"{head}[{node.id}] n={node.n} split on {node.split.variable}")
            visit(node.left, indent + 1, node.split.describe("left"))
            visit(node.right, indent + 1, node.split.describe("right"))

        visit(self.root, 0, "")
        return "\n".join(lines)


def predict_curve(tree: SurvivalTree, row: Mapping[str, Any]) -> SurvivalCurve:
    return tree.predict_curve(row)


def node_scores(data: IntervalData, config: TreeConfig) -> tuple[np.ndarray, SurvivalCurve, tuple]:
    """Node-local curve and log-rank scores, plus any diagnostics."""
    diagnostics = ()
    try:
        curve = estimate_curve(data, tol=config.em_tol, max_iter=config.em_max_iter)
    except NPMLEConvergenceError as err:
        logger.warning("node NPMLE did not converge: %s", err)
        return None, err.curve, ("npmle_not_converged",)
    scores = logrank_scores(data, curve, eps=config.score_eps)
    return scores, curve, diagnostics


def _check_covariates(n: int, covariates: Sequence[Covariate]) -> None:
    names = [c.name for c in covariates]
    if len(set(names)) != len(names):
        raise ValueError("covariate names must be unique")
    for c in covariates:
        if len(c) != n:
            raise ValueError(f"covariate {c.name!r} has {len(c)} values, expected {n}")
        if c.kind == NOMINAL and len(c.levels) > MAX_NOMINAL_LEVELS:
            raise ValueError(
                f"nominal covariate {c.name!r} has {len(c.levels)} levels; at most "
                f"{MAX_NOMINAL_LEVELS} are searched exhaustively, recode it first"
            )


def _rank_covariates(data: IntervalData, covariates, scores, config) -> Selection | None:
    w = data.weight
    splittable = [is_splittable(c, w) for c in covariates]
    m = sum(splittable)
    if m == 0:
        return None
    raw_log = np.array([
        linear_statistic_moments(covariate_transform(c), scores, w).log_p_value if ok else 0.0
        for c, ok in zip(covariates, splittable)
    ])
    if config.multiplicity == "bonferroni":
        adj_log = np.minimum(0.0, raw_log + math.log(m))
    else:
        adj_log = raw_log
    # raw p orders like adjusted p but keeps ties below the cap apart;
    # argmin returns the first declared covariate on exact ties
    best = int(np.argmin(np.where(splittable, raw_log, np.inf)))
    raw_p = tuple(float(math.exp(v)) for v in raw_log)
    adj_p = tuple(float(math.exp(v)) for v in adj_log)
    return Selection(best, covariates[best].name, adj_p[best], raw_p, adj_p)


def select_variable(
    observations: ObservationsLike,
    covariates: Sequence[Covariate],
    config: TreeConfig = TreeConfig(),
    scores=None,
    force: bool = False,
) -> Selection | None:
    """Covariate most associated with the node's scores, or None.

    The node-local NPMLE and scores are computed unless ``scores`` is
    given.  With ``force`` the argmin is returned even when it is not
    significant (forced root splits); the ``minsplit`` gate still applies.
    """
    data = as_interval_data(observations)
    _check_covariates(len(data), covariates)
    if data.weight.sum() < config.minsplit:
        return None
    if scores is None:
        scores, _, _ = node_scores(data, config)
        if scores is None:
            return None
    sel = _rank_covariates(data, covariates, scores, config)
    if sel is None or force:
        return sel
    return sel if sel.p_value <= config.alpha else None


def _two_sample_stats(wl, dev, w_tot, v_h):
    var = v_h * wl * (w_tot - wl) / (w_tot - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(var > 0, np.abs(dev) / np.sqrt(np.where(var > 0, var, 1.0)), 0.0)
    return stat


def best_split(
    observations: ObservationsLike,
    covariate: Covariate,
    scores,
    config: TreeConfig = TreeConfig(),
) -> Split | None:
    """Binary split of ``covariate`` maximizing ``|T - mu| / sqrt(sigma)``.

    Candidates failing ``minbucket`` on either side are skipped; ties go to
    the first candidate (smallest threshold, or first subset in level order).
    """
    data = as_interval_data(observations)
    w = data.weight
    h = np.asarray(scores, dtype=float)
    pos = w > 0
    w, h = w[pos], h[pos]
    values = covariate.values[pos]
    w_tot = w.sum()
    if w_tot < 2:
        return None
    e_h = np.sum(w * h) / w_tot
    v_h = _score_variance(h, w, e_h, w_tot)
    resid = w * (h - e_h)

    if covariate.kind == NOMINAL:
        return _best_nominal_split(covariate, values, w, resid, w_tot, v_h, config)

    x = values.astype(float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    cut = np.flatnonzero(xs[1:] != xs[:-1])
    if cut.size == 0:
        return None
    wl = np.cumsum(w[order])[cut]
    dev = np.cumsum(resid[order])[cut]
    stat = _two_sample_stats(wl, dev, w_tot, v_h)
    feasible = (wl >= config.minbucket) & (w_tot - wl >= config.minbucket)
    if not feasible.any():
        return None
    stat = np.where(feasible, stat, -np.inf)
    k = int(np.argmax(stat))
    threshold = 0.5 * (xs[cut[k]] + xs[cut[k] + 1])
    if not xs[cut[k]] <= threshold < xs[cut[k] + 1]:
        threshold = float(xs[cut[k]])
    return Split(covariate.name, covariate.kind, float(threshold), statistic=float(stat[k]))


def nominal_candidates(levels: Sequence) -> list[tuple[tuple, tuple]]:
    """All ``2**(k-1) - 1`` binary partitions of ``levels``, first level always left."""
    k = len(levels)
    out = []
    for mask in range(2 ** (k - 1) - 1):
        left = [levels[0]] + [levels[j] for j in range(1, k) if mask >> (j - 1) & 1]
        right = [lev for lev in levels if lev not in left]
        out.append((tuple(left), tuple(right)))
    return out


def _best_nominal_split(covariate, values, w, resid, w_tot, v_h, config):
    observed = [lev for lev in covariate.levels if np.any(values == lev)]
    if len(observed) < 2:
        return None
    lev_w = {lev: w[values == lev].sum() for lev in observed}
    lev_dev = {lev: resid[values == lev].sum() for lev in observed}
    best, best_stat = None, -np.inf
    for left, right in nominal_candidates(observed):
        wl = sum(lev_w[lev] for lev in left)
        if wl < config.minbucket or w_tot - wl < config.minbucket:
            continue
        dev = sum(lev_dev[lev] for lev in left)
        stat = float(_two_sample_stats(np.array(wl), np.array(dev), w_tot, v_h))
        if stat > best_stat:
            best, best_stat = (left, right), stat
    if best is None:
        return None
    return Split(covariate.name, NOMINAL, None, best[0], best[1], best_stat)


def grow_tree(
    observations: ObservationsLike,
    covariates: Sequence[Covariate],
    config: TreeConfig = TreeConfig(),
) -> SurvivalTree:
    """Recursively partition the data; every terminal node stores its NPMLE."""
    data = as_interval_data(observations)
    covariates = list(covariates)
    if len(data) == 0:
        raise ValueError("no observations")
    _check_covariates(len(data), covariates)
    next_id = iter(range(1, 10**9))

    def build(index: np.ndarray, depth: int) -> TreeNode:
        node_id = next(next_id)
        sub = data.subset(index)
        covs = [c.subset(index) for c in covariates]
        weight = float(sub.weight.sum())
        terminal = dict(id=node_id, n=int(index.size), weight=weight, depth=depth)

        if weight < config.minsplit or (config.maxdepth and depth >= config.maxdepth):
            curve, diag = _terminal_curve(sub, config)
            return TreeNode(**terminal, curve=curve, diagnostics=diag)

        scores, curve, diag = node_scores(sub, config)
        if scores is None:
            return TreeNode(**terminal, curve=curve, diagnostics=diag)
        sel = _rank_covariates(sub, covs, scores, config)
        trace = () if sel is None else tuple(zip((c.name for c in covs), sel.adjusted_p_values))
        if sel is None or sel.p_value > config.alpha:
            return TreeNode(**terminal, curve=curve, p_values=trace, diagnostics=diag)
        split = best_split(sub, covs[sel.index], scores, config)
        if split is None:
            return TreeNode(**terminal, curve=curve, p_values=trace, diagnostics=diag + ("no_feasible_split",))
        left = split.goes_left(covs[sel.index].values)
        left_node = build(index[left], depth + 1)
        right_node = build(index[~left], depth + 1)
        return TreeNode(**terminal, split=split, left=left_node, right=right_node, p_values=trace, diagnostics=diag)

    root = build(np.arange(len(data)), 0)
    return SurvivalTree(root, tuple(c.spec for c in covariates), config)


def _terminal_curve(data: IntervalData, config: TreeConfig) -> tuple[SurvivalCurve, tuple]:
    try:
        return estimate_curve(data, tol=config.em_tol, max_iter=config.em_max_iter), ()
    except NPMLEConvergenceError as err:
        logger.warning("terminal NPMLE did not converge: %s", err)
        return err.curve, ("npmle_not_converged",)
