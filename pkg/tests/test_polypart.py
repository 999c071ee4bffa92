import math

import numpy as np
import pytest

from app.config import BisectionError, ConfigError
from app.curve_tiles import Tube
from app.fields import Field
from app.geometry import Box
from app.polypart import (
    MassDistribution, Polynomial2, bisect, check_balance, crossing_gradients, imbalance, label_cells,
    min_degree_for, monomials, partition, partition_from_polynomial, perturb, sign_pattern, tube_cell_incidence,
    wall,
)

UNIT = Box(-1.0, 1.0, -1.0, 1.0)
X = Polynomial2.from_terms({(1, 0): 1.0})
Y = Polynomial2.from_terms({(0, 1): 1.0})


def _uniform(rng, n):
    return MassDistribution.uniform_points(rng.uniform(-1, 1, size=(n, 2)))


def _random_axis(rng) -> Tube:
    angle = rng.uniform(0, math.pi)
    center = tuple(rng.uniform(-0.9, 0.9, 2))
    return Tube(center, (math.cos(angle), math.sin(angle)), 4.0, 0.01)


def test_monomial_counts():
    assert len(monomials(3)) == 10
    assert [min_degree_for(m) for m in (1, 2, 4, 8)] == [1, 1, 2, 3]


def test_polynomial_algebra():
    xy = X.product(Y)
    assert xy.degree == 2
    assert xy(1.0, 1.0) > 0
    assert xy(1.0, -1.0) < 0
    s = X.plus(Y)
    assert s(1.0, -1.0) == pytest.approx(0.0)
    back = Polynomial2.from_dict(xy.to_dict())
    np.testing.assert_allclose(back.coefficients, xy.coefficients)


def test_gradient_of_circle():
    circle = Polynomial2.from_terms({(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0})
    gx, gy = circle.gradient(1.0, 0.0)
    assert gy == pytest.approx(0.0)
    assert gx > 0


def test_mass_validation():
    with pytest.raises(ConfigError):
        MassDistribution([[0.0, 0.0]], [-1.0])
    with pytest.raises(ConfigError):
        MassDistribution([[0.0, 0.0], [1.0, 1.0]], [1.0])


def test_mass_from_field():
    f = Field(np.full((4, 4), 2.0), (0.0, 0.0), 0.5)
    mass = MassDistribution.from_field(f, p=2)
    assert mass.total == pytest.approx(16 * 4 * 0.25)
    inner = MassDistribution.from_field(f, p=2, domain=Box(0, 0.75, 0, 0.75))
    assert len(inner.weights) == 4


def test_imbalance_of_symmetric_points():
    pts = np.array([[-0.5, 0.1], [0.5, 0.1], [-0.2, -0.3], [0.2, -0.3]])
    assert imbalance(X, MassDistribution.uniform_points(pts)) == 0


def test_bisect_one_mass(rng):
    mass = _uniform(rng, 2000)
    P = bisect([mass], 1, seed=0)
    assert imbalance(P, mass) <= 0.02


def test_bisect_two_masses_with_a_line(rng):
    left = MassDistribution.uniform_points(rng.uniform(-1, 0, size=(1000, 2)))
    right = MassDistribution.uniform_points(rng.uniform(0, 1, size=(1000, 2)))
    P = bisect([left, right], 1, seed=1)
    assert imbalance(P, left) <= 0.02
    assert imbalance(P, right) <= 0.02


def test_bisect_rejects_too_many_masses(rng):
    masses = [_uniform(rng, 10) for _ in range(3)]
    with pytest.raises(ConfigError, match="cannot bisect"):
        bisect(masses, 1)


def test_bisect_failure_reports_best_imbalance():
    single = MassDistribution.uniform_points([[0.3, 0.2]])
    with pytest.raises(BisectionError) as info:
        bisect([single], 1, tolerance=0.5, restarts=2)
    assert info.value.best_imbalance == pytest.approx(1.0)


def test_label_cells_of_a_cross():
    labels, codes = label_cells([X.product(Y)], UNIT, 64)
    assert set(np.unique(labels)) == {1, 2, 3, 4}
    assert codes.tolist() == [-1, 0, 0, 1, 1]


def test_label_cells_by_factor_pattern():
    labels, codes = label_cells([X, Y], UNIT, 64)
    assert codes.tolist() == [-1, 0, 1, 2, 3]
    assert labels[0, 0] != labels[-1, -1]
    assert codes[labels[-1, -1]] == 3


def test_partition_from_line():
    part = partition_from_polynomial(X, UNIT, 256)
    assert part.n_cells == 2
    right, left = part.cell_of([0.5, -0.5], [0.0, 0.0])
    assert right > 0 and left > 0 and right != left
    assert part.cell_of(5.0, 0.0)[0] == -1
    area = wall(part, 0.1).area
    assert area == pytest.approx(0.4, abs=0.04)


def test_wall_and_pruned_cells():
    part = partition_from_polynomial(X, UNIT, 128)
    mask = wall(part, 0.25)
    pruned = part.pruned_labels(mask.mask)
    assert np.all(pruned[mask.mask] == 0)
    assert mask.contains(0.0, 0.0)
    assert not mask.contains(0.9, 0.0)


def test_tube_axis_cell_counts():
    part = partition_from_polynomial(X, UNIT, 256)
    across = Tube((0.0, 0.0), (1.0, 0.0), 4.0, 0.01)
    along = Tube((0.5, 0.0), (0.0, 1.0), 4.0, 0.01)
    assert tube_cell_incidence(part, across) == 2
    assert tube_cell_incidence(part, along) == 1


def test_axis_sample_on_the_zero_set_separates_cells():
    part = partition_from_polynomial(X, UNIT, 256)
    across = Tube((0.0, 0.0), (1.0, 0.0), 1.0, 0.01)
    samples = across.axis_points(min(part.steps) / 4)
    assert np.any(X(samples[:, 0], samples[:, 1]) == 0)
    assert tube_cell_incidence(part, across) == 2

    cross = partition_from_polynomial(X.product(Y), UNIT, 256, factors=[X, Y])
    diagonal = Tube((0.0, 0.0), (math.sqrt(0.5), math.sqrt(0.5)), 1.0, 0.01)
    assert tube_cell_incidence(cross, diagonal) == 2


def test_crossing_factors_keep_four_cells():
    part = partition_from_polynomial(X.product(Y), UNIT, 128, factors=[X, Y])
    assert part.n_cells == 4
    labels = part.cell_of([0.5, -0.5, -0.5, 0.5], [0.5, 0.5, -0.5, -0.5])
    assert len(set(labels.tolist())) == 4
    assert np.all(labels > 0)


def test_balance_is_measured_on_connected_cells(rng):
    # both sign classes of xy hold half the mass, but one class is split 9:1 between its quadrants
    quadrants = [((0, 1), (0, 1), 900), ((-1, 0), (-1, 0), 100), ((-1, 0), (0, 1), 500), ((0, 1), (-1, 0), 500)]
    points = np.vstack([np.column_stack([rng.uniform(*xs, size=n), rng.uniform(*ys, size=n)])
                        for xs, ys, n in quadrants])
    mass = MassDistribution.uniform_points(points)
    part = partition_from_polynomial(X.product(Y), UNIT, 128, mass=mass)
    assert sorted(part.class_masses().values()) == [1000.0, 1000.0]
    assert sorted(part.cell_masses().values()) == [100.0, 500.0, 500.0, 900.0]
    assert not check_balance(part)


def test_bisect_skips_rejected_candidates(rng):
    mass = _uniform(rng, 2000)
    seen = []

    def second_only(candidate):
        seen.append(candidate)
        return len(seen) > 1

    P = bisect([mass], 1, seed=0, accept=second_only)
    assert P is seen[1]
    with pytest.raises(BisectionError, match="unbalanced cells"):
        bisect([mass], 1, seed=0, restarts=3, accept=lambda candidate: False)


def test_sign_pattern_codes():
    codes = sign_pattern([X, Y], np.array([1.0, -1.0, 1.0, -1.0]), np.array([1.0, 1.0, -1.0, -1.0]))
    assert codes.tolist() == [3, 2, 1, 0]


def test_perturbation_keeps_the_degree(rng):
    P, eps = perturb(X.product(Y), 2, UNIT, 256, rng)
    assert P.degree == 2
    assert eps >= 1e-9


def test_degree_two_partition_has_four_quarters():
    rng = np.random.default_rng(3)
    mass = _uniform(rng, 10_000)
    part = partition(mass, 2, UNIT, seed=3, grid=512)
    masses = part.cell_masses()
    assert len(masses) == 4
    for m in masses.values():
        assert m / mass.total == pytest.approx(0.25, abs=0.015)
    for factor in part.factors:
        low, top = crossing_gradients(factor, UNIT, 512)
        assert low >= 1e-6 * top


@pytest.mark.parametrize("D", [2, 4, pytest.param(8, marks=pytest.mark.slow)])
@pytest.mark.parametrize("seed", range(5))
def test_partition_contract(D, seed):
    rng = np.random.default_rng(seed)
    mass = _uniform(rng, 10_000)
    part = partition(mass, D, UNIT, seed=seed, grid=512)
    masses = np.array(list(part.cell_masses().values()))
    median = np.median(masses)
    assert np.all(masses >= median / 2) and np.all(masses <= 2 * median)
    assert check_balance(part)
    assert 2 <= part.n_cells <= D * D + D + 2
    for _ in range(100):
        assert tube_cell_incidence(part, _random_axis(rng)) <= D + 1


def test_partition_rejects_bad_input(rng):
    with pytest.raises(ConfigError):
        partition(_uniform(rng, 10), 0, UNIT)
    with pytest.raises(ConfigError):
        partition(MassDistribution(np.zeros((0, 2)), np.zeros(0)), 2, UNIT)
