import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ictree.ctree import (
    MAX_NOMINAL_LEVELS,
    NOMINAL,
    NUMERIC,
    ORDINAL,
    Covariate,
    TreeConfig,
    UnroutableLevelError,
    best_split,
    covariate_transform,
    grow_tree,
    linear_statistic_moments,
    nominal_candidates,
    predict_curve,
    select_variable,
)
from ictree.estimator import IntervalData, estimate_curve
from oracles import exhaustive_best_threshold, permutation_moments

SMALL = TreeConfig(minsplit=2, minbucket=1)


def grouped_data(rng, n, shift):
    """Interval data whose event times grow with ``shift`` (one value per row)."""
    t = rng.exponential(1.0, n) * np.exp(shift)
    exams = rng.uniform(0.3, 0.7, (n, 10)).cumsum(axis=1)
    j = (exams < t[:, None]).sum(axis=1)
    rows = np.arange(n)
    left = np.where(j == 0, 0.0, exams[rows, np.maximum(j - 1, 0)])
    right = np.where(j == 10, np.inf, exams[rows, np.minimum(j, 9)])
    return IntervalData.from_intervals(left, right)


# ------------------------------------------------------------- transforms

def test_transform_examples():
    np.testing.assert_array_equal(covariate_transform(Covariate("x", [1.2, 3.4])), [[1.2], [3.4]])
    nom = Covariate("z", ["a", "b", "a"], NOMINAL, ("a", "b"))
    np.testing.assert_array_equal(covariate_transform(nom), [[1, 0], [0, 1], [1, 0]])
    grid = tuple(np.round(np.linspace(0, 1, 11), 1))
    ordi = Covariate("x3", [0.0, 0.5, 1.0], ORDINAL, grid)
    np.testing.assert_array_equal(covariate_transform(ordi), [[0.0], [0.5], [1.0]])


def test_covariate_validation():
    with pytest.raises(ValueError):
        Covariate("z", ["a"], NOMINAL, ("a",))
    with pytest.raises(ValueError):
        Covariate("o", [1.0], ORDINAL, (2.0, 1.0))
    with pytest.raises(ValueError):
        Covariate("x", [1.0, np.nan])
    with pytest.raises(ValueError):
        Covariate("z", ["a", "c"], NOMINAL, ("a", "b"))


# ----------------------------------------------------------------- moments

def test_moments_small_example():
    mom = linear_statistic_moments([1, 1, 0, 0], [2, 0, 1, 1])
    assert mom.mu[0] == pytest.approx(2.0)
    mu, cov = permutation_moments([1, 1, 0, 0], [2, 0, 1, 1])
    assert mu[0] == pytest.approx(2.0)
    assert mom.sigma[0, 0] == pytest.approx(cov[0, 0], abs=1e-10)


def test_constant_scores():
    mom = linear_statistic_moments([1.0, 2.0, 3.0], [5, 5, 5])
    np.testing.assert_allclose(mom.T, mom.mu)
    assert np.all(mom.sigma == 0)
    assert mom.p_value == 1.0 and mom.statistic == 0.0


def test_moments_need_two_units_of_weight():
    with pytest.raises(ValueError):
        linear_statistic_moments([1.0], [1.0])


def test_moments_match_full_enumeration_n7():
    rng = np.random.default_rng(0)
    g, h = rng.normal(size=7), rng.normal(size=7)
    mom = linear_statistic_moments(g, h)
    mu, cov = permutation_moments(g, h)
    np.testing.assert_allclose(mom.mu, mu, atol=1e-10)
    np.testing.assert_allclose(mom.sigma, cov, atol=1e-10)


@given(
    st.integers(2, 6).flatmap(lambda n: st.tuples(
        st.lists(st.sampled_from("abc"), min_size=n, max_size=n),
        st.lists(st.integers(-3, 3), min_size=n, max_size=n),
        st.lists(st.integers(1, 2), min_size=n, max_size=n),
    ))
)
@settings(max_examples=40, deadline=None)
def test_weighted_nominal_moments_match_enumeration(case):
    labels, h, w = case
    if sum(w) > 8:
        return
    g = covariate_transform(Covariate("z", labels, NOMINAL, ("a", "b", "c")))
    mom = linear_statistic_moments(g, h, w)
    mu, cov = permutation_moments(g, h, w)
    np.testing.assert_allclose(mom.mu, mu, atol=1e-10)
    np.testing.assert_allclose(mom.sigma, cov, atol=1e-10)
    assert np.all(np.linalg.eigvalsh(mom.sigma) >= -1e-10)


def test_quadratic_form_uses_rank_of_sigma():
    rng = np.random.default_rng(2)
    labels = rng.choice(["a", "b", "c"], 50)
    g = covariate_transform(Covariate("z", labels, NOMINAL, ("a", "b", "c")))
    mom = linear_statistic_moments(g, rng.normal(size=50))
    # indicator columns sum to one, so one direction has no variance
    assert mom.df == 2
    assert 0 < mom.p_value <= 1


# --------------------------------------------------------------- selection

def separated_pair(n=40):
    half = n // 2
    lo = np.concatenate((np.linspace(0, 1, half), np.linspace(10, 11, half)))
    data = IntervalData.from_intervals(lo, lo + 0.5)
    x = Covariate("x", np.repeat([0.0, 1.0], half))
    noise = Covariate("noise", np.tile([0.0, 1.0], half))
    return data, [noise, x]


def test_perfect_separation_is_selected():
    data, covs = separated_pair()
    sel = select_variable(data, covs)
    assert sel.variable == "x"
    assert sel.p_value < 1e-3


def test_node_below_minsplit_is_not_split():
    data, covs = separated_pair(10)
    assert select_variable(data, covs, TreeConfig(minsplit=20)) is None


def test_bonferroni_adjustment():
    data, covs = separated_pair()
    sel = select_variable(data, covs, force=True)
    assert sel.adjusted_p_values[0] == pytest.approx(min(1.0, 2 * sel.raw_p_values[0]))
    none = select_variable(data, covs, TreeConfig(multiplicity="none"), force=True)
    assert none.adjusted_p_values == none.raw_p_values


def test_exact_ties_go_to_the_first_declared_covariate():
    data, covs = separated_pair()
    twin = Covariate("twin", covs[1].values)
    assert select_variable(data, [covs[1], twin]).variable == "x"
    assert select_variable(data, [twin, covs[1]]).variable == "twin"


def test_nothing_splittable():
    data, _ = separated_pair()
    assert select_variable(data, [Covariate("c", np.zeros(40))]) is None


# ------------------------------------------------------------------ splits

def test_best_split_examples():
    data = IntervalData.from_intervals([0, 0, 0, 0], [1, 1, 1, 1])
    split = best_split(data, Covariate("x", [1, 1, 2, 2]), [1, 1, -1, -1], SMALL)
    assert split.threshold == 1.5
    assert len(nominal_candidates(("a", "b", "c"))) == 3
    assert len(nominal_candidates(tuple("abcdef"))) == 31


def test_best_split_matches_exhaustive_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        x = rng.integers(0, 6, 10).astype(float)
        h = rng.normal(size=10)
        data = IntervalData.from_intervals(np.zeros(10), np.ones(10))
        split = best_split(data, Covariate("x", x), h, TreeConfig(minsplit=4, minbucket=2))
        want, stat = exhaustive_best_threshold(x, h, minbucket=2)
        if want is None:
            assert split is None
        else:
            assert split.threshold == pytest.approx(want)
            assert split.statistic == pytest.approx(stat)


def test_no_feasible_split():
    data = IntervalData.from_intervals(np.zeros(6), np.ones(6))
    x = Covariate("x", [0, 1, 1, 1, 1, 1])
    assert best_split(data, x, np.arange(6.0), TreeConfig(minsplit=4, minbucket=2)) is None


def test_nominal_split_picks_best_subset():
    h = np.array([3, 3, -1, -1, 2, 2, -3, -3], dtype=float)
    z = Covariate("z", list("aabbccdd"), NOMINAL, tuple("abcd"))
    data = IntervalData.from_intervals(np.zeros(8), np.ones(8))
    split = best_split(data, z, h, SMALL)
    assert {frozenset(split.left_levels), frozenset(split.right_levels)} == {frozenset("ac"), frozenset("bd")}


def test_too_many_nominal_levels():
    levels = tuple(f"l{i}" for i in range(MAX_NOMINAL_LEVELS + 1))
    z = Covariate("z", list(levels) * 2, NOMINAL, levels)
    data = IntervalData.from_intervals(np.zeros(len(z)), np.ones(len(z)))
    with pytest.raises(ValueError, match="recode"):
        grow_tree(data, [z])


# ---------------------------------------------------------------- growing

def two_group_sample(seed=1, n=160):
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(0, 1, n)
    x2 = rng.integers(0, 3, n).astype(float)
    z = rng.choice(list("pqrs"), n)
    shift = 1.5 * (x1 > 0.5) + 1.0 * np.isin(z, ["p", "q"])
    data = grouped_data(rng, n, shift)
    covs = [Covariate("x1", x1), Covariate("x2", x2, ORDINAL, (0.0, 1.0, 2.0)), Covariate("z", z, NOMINAL, tuple("pqrs"))]
    return data, covs


def test_tree_finds_the_signal_and_partitions_the_sample():
    data, covs = two_group_sample()
    tree = grow_tree(data, covs)
    assert tree.root.split.variable in ("x1", "z")
    assert {nd.split.variable for nd in tree.nodes() if not nd.is_terminal} >= {"x1", "z"}
    table = {c.name: c.values for c in covs}
    ids = tree.apply(table)
    terms = tree.terminals()
    assert sorted(set(ids)) == sorted(nd.id for nd in terms)
    assert sum(nd.n for nd in terms) == len(data)
    for nd in terms:
        assert nd.weight >= tree.config.minbucket
        assert np.sum(ids == nd.id) == nd.n
    for nd in tree.nodes():
        if not nd.is_terminal:
            assert nd.weight >= tree.config.minsplit


def test_prediction_equals_refit_of_terminal_members():
    data, covs = two_group_sample()
    tree = grow_tree(data, covs)
    table = {c.name: c.values for c in covs}
    ids = tree.apply(table)
    rng = np.random.default_rng(8)
    for i in rng.integers(0, len(data), 100):
        row = {name: col[i] for name, col in table.items()}
        curve = predict_curve(tree, row)
        refit = estimate_curve(data.subset(ids == ids[i]))
        np.testing.assert_array_equal(curve.masses, refit.masses)
        np.testing.assert_array_equal(curve.p, refit.p)


def test_single_node_tree_predicts_root_curve():
    data, covs = two_group_sample()
    tree = grow_tree(data, covs, TreeConfig(alpha=1e-300))
    assert tree.n_splits == 0
    assert predict_curve(tree, {"x1": 0.1, "x2": 1.0, "z": "p"}) is tree.root.curve


def test_routing_follows_threshold():
    data, covs = two_group_sample()
    tree = grow_tree(data, covs, TreeConfig(maxdepth=1))
    assert tree.n_splits <= 1
    split = tree.root.split
    if split.kind == NUMERIC:
        row = {"x1": split.threshold, "x2": 0.0, "z": "p"}
        assert predict_curve(tree, row) is tree.root.left.curve


def test_maxdepth_one_caps_splits():
    data, covs = two_group_sample()
    assert grow_tree(data, covs, TreeConfig(maxdepth=1)).n_splits == 1


def test_unroutable_level():
    data, _ = two_group_sample()
    rng = np.random.default_rng(3)
    z = rng.choice(["p", "q"], len(data))
    covs = [Covariate("z", z, NOMINAL, ("p", "q", "r"))]
    y = np.where(z == "p", 0.0, 8.0)
    sep = IntervalData.from_intervals(y, y + 1)
    tree = grow_tree(sep, covs)
    assert tree.root.split.variable == "z"
    with pytest.raises(UnroutableLevelError, match="unroutable level"):
        predict_curve(tree, {"z": "r"})


def test_missing_covariate_for_prediction():
    data, covs = two_group_sample()
    tree = grow_tree(data, covs)
    with pytest.raises(KeyError):
        tree.apply({"x2": [1.0]})


def split_set(tree):
    out = set()

    def visit(node, path):
        if node.is_terminal:
            return
        out.add((path, node.split))
        visit(node.left, path + "L")
        visit(node.right, path + "R")

    visit(tree.root, "")
    return out


def test_raising_alpha_never_removes_splits():
    data, covs = two_group_sample(seed=5, n=200)
    trees = [grow_tree(data, covs, TreeConfig(alpha=a)) for a in (1e-6, 1e-3, 0.05, 0.5)]
    for small, large in zip(trees, trees[1:]):
        assert split_set(small) <= split_set(large)


def test_level_order_does_not_change_the_partition():
    data, covs = two_group_sample(seed=2)
    z = covs[2]
    shuffled = Covariate("z", z.values, NOMINAL, tuple(reversed(z.levels)))
    a = grow_tree(data, covs)
    b = grow_tree(data, covs[:2] + [shuffled])
    assert [nd.split.variable if nd.split else None for nd in a.nodes()] == \
        [nd.split.variable if nd.split else None for nd in b.nodes()]
    table = {c.name: c.values for c in covs}
    ia, ib = a.apply(table), b.apply(table)
    parts_a = {frozenset(np.flatnonzero(ia == k)) for k in set(ia)}
    parts_b = {frozenset(np.flatnonzero(ib == k)) for k in set(ib)}
    assert parts_a == parts_b


def test_growth_is_deterministic():
    data, covs = two_group_sample()
    assert grow_tree(data, covs).render() == grow_tree(data, covs).render()


@given(st.integers(0, 10_000), st.sampled_from([0.01, 0.05, 0.2]))
@settings(max_examples=15, deadline=None)
def test_partition_property_random_inputs(seed, alpha):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 90))
    x = rng.uniform(0, 1, n)
    z = rng.choice(list("uvw"), n)
    data = grouped_data(rng, n, 2.0 * (x > 0.4))
    covs = [Covariate("x", x), Covariate("z", z, NOMINAL, tuple("uvw"))]
    tree = grow_tree(data, covs, TreeConfig(alpha=alpha))
    ids = tree.apply({"x": x, "z": z})
    assert sum(nd.n for nd in tree.terminals()) == n
    for nd in tree.terminals():
        assert np.sum(ids == nd.id) == nd.n
        assert math.fsum(nd.curve.masses) == pytest.approx(1.0, abs=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        TreeConfig(alpha=0)
    with pytest.raises(ValueError):
        TreeConfig(minsplit=10, minbucket=6)
    with pytest.raises(ValueError):
        TreeConfig(multiplicity="holm")
