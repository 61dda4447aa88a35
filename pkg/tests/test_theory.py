import itertools
import math

import numpy as np
import pytest

from alignment.credible import PredictionSet
from errors import ContractError, RegimeError, SingularityError
from theory.bounds import (
    BoundParams,
    bound_grid,
    contraction_factor,
    contraction_grid,
    one_shot_grid,
    series_converges,
    theorem1_bound,
    theorem2_bound,
)
from theory.wasserstein import (
    BOTTLENECK_CAP,
    distribution_shift,
    wasserstein_inf_1d,
    wasserstein_inf_bottleneck,
)


def _brute_force_bottleneck(X, Y):
    cost = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
    size = X.shape[0]
    return min(max(cost[i, p[i]] for i in range(size)) for p in itertools.permutations(range(size)))


def test_one_shot_bound_examples():
    assert theorem1_bound(0.0, 3.0, source_loss=0.2, alpha_star=0.1, n=4, c_order=1.0) == pytest.approx(
        2 * 0.2 + 0.1 + 0.5
    )
    assert theorem1_bound(0.3, 1.0, 0.0, 0.0, n=1) == 0.0
    assert theorem1_bound(0.5, 1.0, source_loss=1.0, alpha_star=0.0, n=1) == pytest.approx(4.0)


def test_one_shot_bound_outside_its_regime():
    with pytest.raises(RegimeError):
        theorem1_bound(1.0, 1.0, 1.0, 0.0, n=1)
    with pytest.raises(RegimeError):
        theorem1_bound(2.0, 1.0, 1.0, 0.0, n=1)


def test_step_wise_bound_examples():
    single = BoundParams(tau_m=4.0, R=1.0, E=0, alpha0=1.0, n=1)
    assert theorem2_bound(single) == pytest.approx(2 / 3)

    three = BoundParams(tau_m=4.0, R=1.0, E=2, alpha0=1.0, n=1)
    assert theorem2_bound(three) == pytest.approx(8 / 27, abs=1e-12)

    for E in (0, 5, 50):
        assert theorem2_bound(BoundParams(4.0, 1.0, E, alpha0=0.0, n=10)) == 0.0


def test_step_wise_bound_sample_term():
    params = BoundParams(tau_m=2.0, R=2.0, E=1, alpha0=0.5, n=4, c_order=1.0)
    # factor |2 / (1 - 4)| = 2/3, squared
    assert theorem2_bound(params) == pytest.approx((2 / 3) ** 2 * (0.5 + 0.5))


def test_step_wise_bound_singularity():
    with pytest.raises(SingularityError):
        theorem2_bound(BoundParams(tau_m=0.5, R=2.0, E=3, alpha0=1.0, n=1))


def test_step_wise_bound_vanishes_with_many_steps_when_contracting():
    assert theorem2_bound(BoundParams(4.0, 1.0, E=40, alpha0=1.0, n=1)) < 1e-6
    bounds = [theorem2_bound(BoundParams(5.0, 1.0, E, 1.0, 1)) for E in range(10)]
    assert all(later < earlier for earlier, later in itertools.pairwise(bounds))


def test_bound_params_are_validated():
    with pytest.raises(ContractError):
        BoundParams(tau_m=1.0, R=1.0, E=-1, alpha0=1.0, n=1)
    with pytest.raises(ContractError):
        BoundParams(tau_m=1.0, R=1.0, E=1, alpha0=1.0, n=0)
    with pytest.raises(ContractError):
        BoundParams(tau_m=math.nan, R=1.0, E=1, alpha0=1.0, n=1)


def test_contraction_factor_examples():
    assert contraction_factor(5.0, 1.0, 0.0) == pytest.approx(1 / 3)
    assert contraction_factor(4.0, 1.0, math.pi) == pytest.approx(2.0)
    with pytest.raises(SingularityError):
        contraction_factor(-1.0, 1.0, 0.0)


@pytest.mark.parametrize("product", [1.5, 2.0, 2.9, 3.0, 3.1, 4.0, 10.0, 100.0])
def test_convergence_holds_exactly_above_three(product):
    for omega in (0.0, 0.7, math.pi):
        assert series_converges(product, 1.0, omega) == (product > 3)


def test_bound_grid_layout():
    grid = bound_grid([1.0, 2.0, 4.0], [0, 2])
    assert list(grid.columns) == ["tau_m_R", "E", "bound", "contraction", "converges"]
    assert len(grid) == 6
    assert grid.loc[grid["tau_m_R"] == 1.0, "bound"].isna().all()

    row = grid[(grid["tau_m_R"] == 4.0) & (grid["E"] == 2)].iloc[0]
    assert row["bound"] == pytest.approx(8 / 27)
    assert row["contraction"] == pytest.approx(2 / 3)
    assert bool(row["converges"])
    assert not grid.loc[grid["tau_m_R"] == 2.0, "converges"].any()


def test_one_shot_grid_values():
    grid = one_shot_grid([0.0, 0.5], source_loss=1.0, alpha_star=0.1, n=4, c_order=1.0)
    assert list(grid.columns) == ["tau_R", "bound"]
    assert grid["bound"].tolist() == pytest.approx([2.0 + 0.1 + 0.5, 4.0 + 0.1 + 0.5])
    with pytest.raises(RegimeError):
        one_shot_grid([0.5, 1.0], source_loss=1.0)


def test_contraction_grid_marks_singular_points():
    grid = contraction_grid([3.0, 5.0], [0.0, math.pi])
    assert list(grid.columns) == ["tau_m_R", "omega", "contraction"]
    assert len(grid) == 4
    singular = grid[(grid["tau_m_R"] == 3.0) & (grid["omega"] == math.pi)]
    assert singular["contraction"].isna().all()
    row = grid[(grid["tau_m_R"] == 5.0) & (grid["omega"] == 0.0)].iloc[0]
    assert row["contraction"] == pytest.approx(1 / 3)


def test_one_dimensional_examples():
    assert wasserstein_inf_1d([0, 1, 2], [0.5, 1.5, 2.5]) == pytest.approx(0.5)
    assert wasserstein_inf_1d([3, 1, 2], [1, 2, 3]) == 0.0
    assert wasserstein_inf_1d([0, 10], [1, 2]) == pytest.approx(8.0)
    with pytest.raises(ContractError):
        wasserstein_inf_1d([0, 1], [0])


def test_bottleneck_of_identical_sets_is_zero():
    X = np.random.default_rng(0).normal(size=(7, 3))
    assert wasserstein_inf_bottleneck(X, X) == 0.0
    assert wasserstein_inf_bottleneck(X, X[::-1]) == 0.0
    assert wasserstein_inf_bottleneck(np.abs(X) + 0.1, np.abs(X) + 0.1, metric="cosine") == pytest.approx(0.0, abs=1e-12)


def test_bottleneck_matches_exhaustive_enumeration():
    rng = np.random.default_rng(42)
    for _ in range(500):
        X = rng.normal(size=(5, 2))
        Y = rng.normal(size=(5, 2))
        assert wasserstein_inf_bottleneck(X, Y) == pytest.approx(_brute_force_bottleneck(X, Y), abs=1e-12)


def test_bottleneck_is_symmetric():
    rng = np.random.default_rng(5)
    for _ in range(300):
        X = rng.normal(size=(5, 2))
        Y = rng.normal(size=(5, 2))
        assert wasserstein_inf_bottleneck(X, Y) == pytest.approx(wasserstein_inf_bottleneck(Y, X), abs=1e-12)


def test_bottleneck_satisfies_the_triangle_inequality():
    rng = np.random.default_rng(13)
    for _ in range(300):
        X, Y, Z = (rng.normal(size=(5, 2)) for _ in range(3))
        direct = wasserstein_inf_bottleneck(X, Z)
        assert direct <= wasserstein_inf_bottleneck(X, Y) + wasserstein_inf_bottleneck(Y, Z) + 1e-9


def test_bottleneck_agrees_with_sorted_coupling_on_the_line():
    rng = np.random.default_rng(7)
    for _ in range(50):
        xs = rng.uniform(-5, 5, size=9)
        ys = rng.uniform(-5, 5, size=9)
        assert wasserstein_inf_bottleneck(xs, ys) == pytest.approx(wasserstein_inf_1d(xs, ys))


def test_bottleneck_argument_checks():
    with pytest.raises(ContractError, match="equal size"):
        wasserstein_inf_bottleneck(np.zeros((2, 2)), np.zeros((3, 2)))
    with pytest.raises(ContractError, match="capped"):
        big = np.zeros((BOTTLENECK_CAP + 1, 2))
        wasserstein_inf_bottleneck(big, big)
    with pytest.raises(ContractError, match="metric"):
        wasserstein_inf_bottleneck(np.zeros((2, 2)), np.zeros((2, 2)), metric="manhattan")


def test_shift_between_identical_steps_is_zero():
    predictions = np.random.default_rng(3).dirichlet(np.ones(3), size=12)
    report = distribution_shift(PredictionSet(predictions), PredictionSet(predictions))
    assert report.distance == 0.0


def test_shift_of_one_translated_class():
    prev = np.array(
        [
            [0.80, 0.10, 0.10],
            [0.70, 0.20, 0.10],
            [0.10, 0.80, 0.10],
            [0.20, 0.70, 0.10],
            [0.10, 0.10, 0.80],
            [0.15, 0.15, 0.70],
        ]
    )
    offset = np.array([-0.1, 0.05, 0.05])
    curr = prev.copy()
    curr[:2] += offset

    report = distribution_shift(PredictionSet(prev), PredictionSet(curr))
    assert report.per_class[0] == pytest.approx(np.linalg.norm(offset))
    assert report.per_class[1] == 0.0
    assert report.per_class[2] == 0.0
    assert report.distance == pytest.approx(np.linalg.norm(offset))


def test_shift_is_symmetric_and_skips_empty_classes():
    rng = np.random.default_rng(9)
    prev = PredictionSet(rng.dirichlet(np.ones(4), size=15))
    curr = PredictionSet(rng.dirichlet(np.ones(4), size=15))
    assert distribution_shift(prev, curr).distance == pytest.approx(distribution_shift(curr, prev).distance)

    only_first = PredictionSet(np.tile([0.7, 0.1, 0.1, 0.1], (5, 1)))
    report = distribution_shift(only_first, only_first)
    assert report.skipped == (1, 2, 3)
    assert report.distance == 0.0
