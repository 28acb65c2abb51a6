import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ictree.estimator import CensoredObservation, IntervalData, SurvivalCurve, fit_npmle
from ictree.scores import ScoreError, logrank_scores, nelson_aalen, score_sum


def random_interval_data(rng, n):
    t = rng.exponential(2.0, n)
    gaps = rng.uniform(0.3, 0.7, (n, 8)).cumsum(axis=1)
    j = (gaps < t[:, None]).sum(axis=1)
    left = np.where(j == 0, 0.0, gaps[np.arange(n), np.maximum(j - 1, 0)])
    right = np.where(j == 8, np.inf, gaps[np.arange(n), np.minimum(j, 7)])
    return IntervalData.from_intervals(left, right)


def test_single_interval_example():
    curve = SurvivalCurve([0.0, 1.0], [1.0, 2.0], [0.5, 0.5])
    data = IntervalData.from_intervals([0.0], [1.0])
    assert logrank_scores(data, curve)[0] == pytest.approx(-math.log(0.5), abs=1e-12)


def test_first_event_and_early_censoring():
    data = IntervalData.from_observations([CensoredObservation.event(1.0), CensoredObservation(0.5)])
    # no one has an event before 0.5, so the censoring has zero cumulative hazard
    u = logrank_scores(data)
    assert u[1] == 0.0
    assert u[0] == pytest.approx(1.0 - 1.0 / 1.0)


def test_right_censored_interval_scores_log_survival():
    curve = SurvivalCurve([0.0, 1.0], [1.0, 2.0], [0.25, 0.75])
    data = IntervalData.from_intervals([0.0, 1.0], [np.inf, np.inf])
    u = logrank_scores(data, curve)
    assert u[0] == 0.0
    assert u[1] == pytest.approx(math.log(0.75))


def test_overlapping_pair_scores_zero():
    data = IntervalData.from_intervals([0, 1], [2, 3])
    curve = fit_npmle(data)
    u = logrank_scores(data, curve)
    assert u.tolist() == [0.0, 0.0]
    assert score_sum(data, u) == 0.0


def test_observation_after_all_mass():
    curve = SurvivalCurve([0.0], [1.0], [1.0])
    with pytest.raises(ScoreError):
        logrank_scores(IntervalData.from_intervals([2.0], [3.0]), curve)


def test_flat_interval_falls_back(caplog):
    curve = SurvivalCurve([0.0, 3.0], [1.0, 4.0], [0.5, 0.5])
    u = logrank_scores(IntervalData.from_intervals([1.5], [2.5]), curve)
    assert u[0] == pytest.approx(1.0 + math.log(0.5))
    assert "derivative form" in caplog.text


def test_curve_required_for_intervals():
    with pytest.raises(ValueError):
        logrank_scores(IntervalData.from_intervals([0.0], [1.0]))


def test_score_sum_identity_interval_data():
    rng = np.random.default_rng(11)
    for _ in range(100):
        data = random_interval_data(rng, int(rng.integers(10, 80)))
        u = logrank_scores(data, fit_npmle(data))
        assert abs(score_sum(data, u)) <= 1e-6 * data.weight.sum()


@given(
    st.lists(st.tuples(st.integers(1, 15), st.booleans(), st.integers(1, 3)), min_size=1, max_size=40)
)
@settings(max_examples=100, deadline=None)
def test_score_sum_identity_exact_data(rows):
    time, event, weight = map(np.array, zip(*rows))
    data = IntervalData.from_exact_times(time.astype(float), event, weight.astype(float))
    assert abs(score_sum(data, logrank_scores(data))) <= 1e-12 * max(1.0, weight.sum())


def test_nelson_aalen_counts():
    # at risk 3, 2, 1; events at 1 and 3
    np.testing.assert_allclose(nelson_aalen([1, 2, 3], [1, 0, 1]), [1 / 3, 1 / 3, 1 / 3 + 1])


def test_monotone_separation():
    rng = np.random.default_rng(5)
    lo_a = rng.uniform(0, 4, 30)
    lo_b = rng.uniform(10, 14, 30)
    data = IntervalData.from_intervals(
        np.concatenate((lo_a, lo_b)), np.concatenate((lo_a + 1, lo_b + 1))
    )
    u = logrank_scores(data, fit_npmle(data))
    assert u[:30].mean() > u[30:].mean()


def test_scores_depend_on_ranks_only():
    rng = np.random.default_rng(9)
    data = random_interval_data(rng, 60)
    u = logrank_scores(data, fit_npmle(data))
    warped = IntervalData.from_intervals(3 * np.exp(data.left) - 1, 3 * np.exp(data.right) - 1)
    v = logrank_scores(warped, fit_npmle(warped))
    np.testing.assert_allclose(u, v, atol=1e-7)
