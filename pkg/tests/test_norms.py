import numpy as np
import pytest

from app.config import BudgetError, ConfigError, GeometryError
from app.fields import Field
from app.geometry import Ball, Box
from app.norms import (
    MeanValueProblem, exp_sum_lp_torus, fit_exponent, lp_norm, read_coefficients, vinogradov_count,
)


def test_lp_norm_of_constant_on_box():
    f = Field(np.full((20, 20), 3.0), (0.0, 0.0), 0.5)
    assert lp_norm(f, 4, Box(-1, 20, -1, 20)) == pytest.approx(3.0 * 100 ** 0.25)
    assert lp_norm(f, 2) == pytest.approx(f.l2_norm())


def test_lp_norm_large_p_stays_finite():
    f = Field(np.full((4, 4), 1e40), (0.0, 0.0), 1.0)
    assert lp_norm(f, 64) == pytest.approx(1e40 * 16 ** (1 / 64))


def test_lp_norm_errors():
    f = Field(np.ones((4, 4)), (0.0, 0.0), 1.0)
    with pytest.raises(ConfigError):
        lp_norm(f, 0.5)
    with pytest.raises(GeometryError):
        lp_norm(f, 2, Ball((100.0, 100.0), 1.0))


@pytest.mark.parametrize("d", [3, 4])
@pytest.mark.parametrize("s", [2, 3])
def test_mean_value_matches_counting_oracle(d, s):
    for N in range(2, 13):
        value = exp_sum_lp_torus(MeanValueProblem(N, d, s))
        count = vinogradov_count(N, s, d)
        assert value == pytest.approx(count, rel=1e-6)


def test_diagonal_count_for_two_variables():
    for N in (1, 5, 17, 32):
        assert exp_sum_lp_torus(MeanValueProblem(N, 3, 2)) == pytest.approx(2 * N * N - N, rel=1e-6)


def test_single_term_mean_value_is_one():
    assert exp_sum_lp_torus(MeanValueProblem(1, 3, 3)) == pytest.approx(1.0)


def test_mean_value_with_coefficients_is_homogeneous():
    base = exp_sum_lp_torus(MeanValueProblem(4, 3, 2, np.ones(4)))
    doubled = exp_sum_lp_torus(MeanValueProblem(4, 3, 2, 2 * np.ones(4)))
    assert doubled == pytest.approx(16 * base, rel=1e-12)


@pytest.mark.parametrize("s", [2, 3])
def test_weighted_mean_value_matches_weighted_count(s):
    rng = np.random.default_rng(11)
    for N in (3, 6, 9):
        a = rng.normal(size=N) + 1j * rng.normal(size=N)
        value = exp_sum_lp_torus(MeanValueProblem(N, 3, s, a))
        assert value == pytest.approx(vinogradov_count(N, s, 3, coefficients=a), rel=1e-6)


def test_unit_weights_reproduce_the_count():
    assert vinogradov_count(7, 2, 3, coefficients=np.ones(7)) == pytest.approx(vinogradov_count(7, 2, 3))
    with pytest.raises(ConfigError, match="coefficients"):
        vinogradov_count(7, 2, 3, coefficients=np.ones(6))


def test_read_coefficients(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("re,im\n1,0\n0.5,-2\n3\n")
    assert read_coefficients(path, 3) == pytest.approx(np.array([1, 0.5 - 2j, 3]))
    with pytest.raises(ConfigError, match="expected N=4"):
        read_coefficients(path, 4)
    path.write_text("1\nx\n")
    with pytest.raises(ConfigError, match="not numeric"):
        read_coefficients(path, 2)
    with pytest.raises(ConfigError, match="Could not read"):
        read_coefficients(tmp_path / "missing.csv", 2)


def test_odd_exponent_is_rejected():
    with pytest.raises(ConfigError, match="even p"):
        MeanValueProblem.for_exponent(4, 3, 7)
    assert MeanValueProblem.for_exponent(4, 3, 8).s == 4


def test_bad_problems_are_rejected():
    with pytest.raises(ConfigError):
        MeanValueProblem(0, 3, 2)
    with pytest.raises(ConfigError):
        MeanValueProblem(4, 2, 2)
    with pytest.raises(ConfigError):
        MeanValueProblem(4, 3, 2, np.ones(3))


def test_grid_below_exact_size_is_rejected():
    prob = MeanValueProblem(4, 3, 2)
    m1, m2 = prob.exact_grid()
    with pytest.raises(ConfigError, match="below the exact"):
        exp_sum_lp_torus(prob, grid=(m1 - 1, m2))


def test_larger_grid_gives_the_same_value():
    prob = MeanValueProblem(5, 3, 2)
    m1, m2 = prob.exact_grid()
    assert exp_sum_lp_torus(prob, grid=(m1 + 3, m2 + 10)) == pytest.approx(exp_sum_lp_torus(prob), rel=1e-9)


def test_torus_budget():
    with pytest.raises(BudgetError):
        exp_sum_lp_torus(MeanValueProblem(16, 4, 3), budget_bytes=1024)


def test_count_budget_reports_largest_feasible():
    with pytest.raises(BudgetError) as info:
        vinogradov_count(50, 4, 3, budget=10_000)
    assert info.value.largest_feasible == 10


def test_fit_recovers_power_law():
    fit = fit_exponent([(n, 3.0 * n ** -1.5) for n in (4, 8, 16)])
    assert fit.slope == pytest.approx(-1.5)
    assert fit.fitted(32) == pytest.approx(3.0 * 32 ** -1.5)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)
    assert len(fit.rows()) == 3


def test_fit_errors():
    with pytest.raises(ConfigError):
        fit_exponent([(4, 1.0)])
    with pytest.raises(ConfigError):
        fit_exponent([(4, 1.0), (4, 2.0)])
    with pytest.raises(ConfigError):
        fit_exponent([(4, 1.0), (8, -2.0)])
