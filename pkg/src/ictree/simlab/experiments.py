"""Monte-Carlo experiments: split-variable unbiasedness, structure recovery, prediction error.

Every trial draws from its own generator seeded by ``(seed, 0, trial)``, and
calibration uses ``(seed, 1)``, so results do not depend on the order or
process in which trials run.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache

import numpy as np

from ..baselines import impute
from ..ctree import TreeConfig, best_split, grow_tree, node_scores, select_variable
from ..estimator import IntervalData
from .censoring import CensoringMechanism, FixedGap, UniformGap, calibrate_censoring
from .designs import gen_dataset, get_design
from .metrics import integrated_l2, signed_rank_test, structure_match, uniformity_test

__all__ = ["ExperimentConfig", "ExperimentResult", "run_experiment", "calibrate", "CENSORING_LEVELS", "METHODS"]

logger = logging.getLogger(__name__)

CENSORING_LEVELS = {"none": 0.0, "light": 0.2, "heavy": 0.4}
METHODS = ("oracle", "ic", "left", "mid", "right")
KINDS = ("unbiasedness", "recovery", "prediction")

_DEFAULT_DESIGN = {"unbiasedness": "null", "recovery": "setup1", "prediction": "setup1"}
_DEFAULT_FAMILY = {"null": "exponential", "setup1": "exponential", "setup2": "exponential", "setup3": "exponential"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one Monte-Carlo study.

    ``gap`` is ``"fixed"`` or ``"uniform"`` with bounds ``gap_low`` and
    ``gap_high`` (``gap_low`` is the fixed gap).  With ``search="k"`` the
    number of examinations is calibrated for the given gaps; with
    ``search="scale"`` the ``k`` examinations are kept and the gap law is
    rescaled.  ``censoring`` is a level name or a target fraction.
    """

    kind: str = "recovery"
    design: str | None = None
    family: str | None = None
    censoring: str | float = "light"
    n: int = 200
    trials: int = 200
    seed: int = 2024
    methods: tuple = ("ic",)
    gap: str = "uniform"
    gap_low: float = 0.3
    gap_high: float = 0.7
    search: str = "k"
    k: int = 5
    calibration_draws: int = 100_000
    alpha: float = 0.05
    minsplit: int = 20
    minbucket: int = 7
    maxdepth: int = 0
    multiplicity: str = "bonferroni"
    em_tol: float = 1e-10

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment {self.kind!r}; choose from {KINDS}")
        design = self.design or _DEFAULT_DESIGN[self.kind]
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "family", self.family or _DEFAULT_FAMILY.get(design, "exponential"))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.trials < 1 or self.n < 2:
            raise ValueError("trials must be >= 1 and n >= 2")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")
        if self.gap not in ("fixed", "uniform"):
            raise ValueError("gap must be 'fixed' or 'uniform'")
        if self.kind != "unbiasedness" and self.design == "null":
            raise ValueError("the null design only supports the unbiasedness experiment")
        if self.kind == "recovery" and self.design != "setup1":
            raise ValueError("structure recovery needs the tree-structured design setup1")
        self.target_fraction  # validates censoring
        self.tree_config  # validates tree settings
        get_design(self.design, self.family)

    @property
    def target_fraction(self) -> float:
        if isinstance(self.censoring, str):
            if self.censoring not in CENSORING_LEVELS:
                raise ValueError(f"censoring must be one of {sorted(CENSORING_LEVELS)} or a fraction")
            return CENSORING_LEVELS[self.censoring]
        return float(self.censoring)

    @property
    def tree_config(self) -> TreeConfig:
        return TreeConfig(
            alpha=self.alpha, minsplit=self.minsplit, minbucket=self.minbucket,
            maxdepth=self.maxdepth, multiplicity=self.multiplicity, em_tol=self.em_tol,
        )

    @property
    def gap_law(self):
        if self.gap == "fixed":
            return FixedGap(self.gap_low)
        return UniformGap(self.gap_low, self.gap_high)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown experiment settings: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    mechanism: CensoringMechanism
    records: list
    aggregates: dict
    failures: int = 0

    def columns(self) -> list[str]:
        cols = ["trial", "status", "right_censored"]
        for m in self.config.methods:
            if self.config.kind == "unbiasedness":
                cols += [f"{m}_selected", f"{m}_p_value", f"{m}_split"]
            elif self.config.kind == "recovery":
                cols += [f"{m}_recovered", f"{m}_splits"]
            else:
                cols += [f"{m}_l2", f"{m}_splits"]
        return cols + ["error"]

    def to_csv(self) -> str:
        """Per-trial records followed by a ``#``-prefixed summary block."""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.columns(), lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for rec in self.records:
            writer.writerow({k: _fmt(v) for k, v in rec.items()})
        for line in self.summary().splitlines():
            buf.write(f"# {line}\n" if line else "#\n")
        return buf.getvalue()

    def summary(self) -> str:
        cfg, agg = self.config, self.aggregates
        mech = self.mechanism
        head = [
            f"experiment={cfg.kind} design={cfg.design} family={cfg.family} censoring={cfg.censoring} "
            f"n={cfg.n} trials={cfg.trials} seed={cfg.seed}",
            f"schedule: k={mech.k} extra={mech.extra:.6g} gap={mech.gap}",
            f"completed={cfg.trials - self.failures} failed={self.failures} "
            f"mean_right_censored={_fmt(agg.get('mean_right_censored'))}",
        ]
        body = []
        if cfg.kind == "unbiasedness":
            names = agg["covariates"]
            body.append("method " + " ".join(f"{n:>6}" for n in names) + "  chisq_p  split_rate")
            for m in cfg.methods:
                a = agg[m]
                body.append(
                    f"{m:<6} " + " ".join(f"{c:>6d}" for c in a["counts"])
                    + f"  {a['chisq_p']:.3f}  {a['split_rate']:.4f}"
                )
        elif cfg.kind == "recovery":
            body.append(" ".join(f"{m:>7}" for m in cfg.methods))
            body.append(" ".join(f"{agg[m]['recovery_pct']:>7.1f}" for m in cfg.methods))
        else:
            body.append("method  mean_l2      median_l2")
            for m in cfg.methods:
                body.append(f"{m:<7} {agg[m]['mean_l2']:.6g}  {agg[m]['median_l2']:.6g}")
            for pair, p in agg["signed_rank"].items():
                body.append(f"signed-rank {pair}: p={p:.4g}")
        return "\n".join(head + body)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def calibrate(config: ExperimentConfig) -> CensoringMechanism:
    """Censoring schedule reaching the configured right-censoring level."""
    design = get_design(config.design, config.family)
    return calibrate_censoring(
        design.marginal_sampler(), config.target_fraction, config.gap_law,
        search=config.search, k=config.k, rng=np.random.default_rng([config.seed, 1]),
        n_draws=config.calibration_draws,
    )


def _method_data(method: str, sim) -> IntervalData:
    if method == "oracle":
        return IntervalData.from_exact_times(sim.times, np.ones(len(sim.times), dtype=bool))
    if method == "ic":
        return sim.data
    return impute(sim.data, method)


@lru_cache(maxsize=8)
def _design(name, family):
    return get_design(name, family)


def run_trial(config: ExperimentConfig, mech: CensoringMechanism, trial: int) -> dict:
    """One trial; exceptions are caught and recorded in the returned record."""
    rec: dict = {"trial": trial, "status": "ok"}
    try:
        rng = np.random.default_rng([config.seed, 0, trial])
        design = _design(config.design, config.family)
        sim = gen_dataset(design, config.n, mech, rng)
        rec["right_censored"] = sim.right_censored_fraction
        tcfg = config.tree_config
        if config.kind == "unbiasedness":
            for m in config.methods:
                data = _method_data(m, sim)
                scores, _, _ = node_scores(data, tcfg)
                if scores is None:
                    raise RuntimeError("root NPMLE did not converge")
                sel = select_variable(data, sim.covariates, tcfg, scores=scores, force=True)
                rec[f"{m}_selected"] = sel.variable
                rec[f"{m}_p_value"] = sel.p_value
                split = sel.p_value <= tcfg.alpha and best_split(data, sim.covariates[sel.index], scores, tcfg) is not None
                rec[f"{m}_split"] = bool(split)
        elif config.kind == "recovery":
            for m in config.methods:
                tree = grow_tree(_method_data(m, sim), sim.covariates, tcfg)
                rec[f"{m}_recovered"] = structure_match(tree, design.truth_tree)
                rec[f"{m}_splits"] = tree.n_splits
        else:
            test = gen_dataset(design, config.n, None, rng)
            for m in config.methods:
                tree = grow_tree(_method_data(m, sim), sim.covariates, tcfg)
                curves = tree.predict_curves(test.table)
                rec[f"{m}_l2"] = integrated_l2(curves, test.truth, test.times)
                rec[f"{m}_splits"] = tree.n_splits
    except Exception as err:  # recorded, excluded from aggregates
        logger.warning("trial %d failed: %s", trial, err)
        rec = {"trial": trial, "status": "failed", "error": f"{type(err).__name__}: {err}"}
    return rec


def _run_trial_star(args):
    return run_trial(*args)


def aggregate(config: ExperimentConfig, records: list) -> dict:
    ok = [r for r in records if r["status"] == "ok"]
    agg: dict = {
        "completed": len(ok),
        "mean_right_censored": float(np.mean([r["right_censored"] for r in ok])) if ok else None,
    }
    if config.kind == "unbiasedness":
        names = [c.name for c in _design(config.design, config.family).draw_covariates(np.random.default_rng(0), 1)]
        agg["covariates"] = names
        for m in config.methods:
            chosen = [r[f"{m}_selected"] for r in ok]
            counts = [chosen.count(n) for n in names]
            agg[m] = {
                "counts": counts,
                "proportions": [c / len(ok) if ok else math.nan for c in counts],
                "chisq_p": uniformity_test(counts),
                "split_rate": float(np.mean([r[f"{m}_split"] for r in ok])) if ok else math.nan,
            }
    elif config.kind == "recovery":
        for m in config.methods:
            hits = [r[f"{m}_recovered"] for r in ok]
            agg[m] = {"recovery_pct": 100.0 * float(np.mean(hits)) if hits else math.nan}
    else:
        for m in config.methods:
            l2 = np.array([r[f"{m}_l2"] for r in ok])
            agg[m] = {
                "mean_l2": float(np.mean(l2)) if l2.size else math.nan,
                "median_l2": float(np.median(l2)) if l2.size else math.nan,
            }
        agg["signed_rank"] = {
            f"{a}-{b}": signed_rank_test([r[f"{a}_l2"] for r in ok], [r[f"{b}_l2"] for r in ok]) if ok else math.nan
            for a, b in itertools.combinations(config.methods, 2)
        }
    return agg


def run_experiment(config: ExperimentConfig, jobs: int = 1, mechanism: CensoringMechanism | None = None) -> ExperimentResult:
    """Calibrate censoring, run every trial and aggregate.

    Parameters
    ----------
    config : ExperimentConfig
    jobs : int
        Worker processes; results are identical for any value.
    mechanism : CensoringMechanism, optional
        Skip calibration and use this schedule.
    """
    mech = mechanism if mechanism is not None else calibrate(config)
    tasks = [(config, mech, i) for i in range(config.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_trial_star, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        records = [run_trial(*t) for t in tasks]
    failures = sum(r["status"] != "ok" for r in records)
    return ExperimentResult(config, mech, records, aggregate(config, records), failures)
