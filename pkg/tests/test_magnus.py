import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecat.errors import QuadratureError
from mecat.magnus import (
    DEFAULT_QUADRATURE,
    MagnusCoefficients,
    QuadratureSpec,
    kernel_prefactor,
    read_sigma_table,
    sigma,
    sigma_reference,
    sigma_truncated,
    theta_kernel,
    volterra_residual,
    write_sigma_table,
)

# Reference numbers below were evaluated from the defining formulas with
# 50-digit arithmetic (independent code path, no shared helpers).
R_ORACLE = {0.5: -0.85914091422952262, 2.0: -0.65048489194635498,
            0.0009: -0.99970008998919838, 0.0011: -0.99963346775805565}
THETA_ORACLE = {(1.0, 0.3): 0.56318751787961973,
                (0.8, 0.8): 1.2559407020437066,
                (2.0, 1.0): 0.36650481355667869}
SIGMA_SIN_ORACLE = {0.5: 0.14210832102086163, 1.0: 0.59120022927174889,
                    2.0: 1.8360747452770103, 3.0: 1.5334545717337194}
SIGMA2_SIN_T03 = 0.049102977459391325


@pytest.mark.parametrize("t,want", sorted(R_ORACLE.items()))
def test_kernel_prefactor_matches_high_precision_values(t, want):
    # 0.0009 sits below the series guard, 0.0011 above: both branches hit
    assert kernel_prefactor(t) == pytest.approx(want, rel=1e-12)


def test_kernel_prefactor_is_continuous_across_series_guard():
    lo = kernel_prefactor(1e-3 - 1e-9)
    hi = kernel_prefactor(1e-3 + 1e-9)
    assert abs(lo - hi) < 1e-8


@pytest.mark.parametrize("tx,want", sorted(THETA_ORACLE.items()))
def test_resummation_kernel_values(tx, want):
    t, x = tx
    assert theta_kernel(t, x) == pytest.approx(want, rel=1e-10)


def test_kernel_domain_is_validated():
    with pytest.raises(ValueError):
        theta_kernel(1.0, 2.0)
    with pytest.raises(ValueError):
        theta_kernel(1.0, -0.1)
    with pytest.raises(ValueError):
        theta_kernel(float("nan"), 0.0)


@given(st.tuples(st.floats(0.05, 3.0), st.floats(0.0, 1.0)))
@settings(max_examples=25, deadline=None)
def test_volterra_relation_holds_pointwise(tx):
    t, frac = tx
    x = frac * t
    assert abs(volterra_residual(t, x)) < 1e-8


def test_sigma_of_constant_drive_is_linear_in_time():
    for c in (-0.8, 0.0, 0.3, 1.0):
        for t in (0.2, 1.0, 2.5):
            assert sigma(c, t).sigma == pytest.approx(c * t, abs=1e-12)
            assert sigma_reference(c, t).sigma == pytest.approx(c * t, abs=1e-9)


@pytest.mark.parametrize("t,want", sorted(SIGMA_SIN_ORACLE.items()))
def test_sigma_full_matches_high_precision_reference(t, want):
    got = sigma(math.sin, t)
    assert got.sigma == pytest.approx(want, abs=1e-9)
    assert got.method == "full_2_12"
    assert got.est_error >= 0


@pytest.mark.parametrize("t,want", sorted(SIGMA_SIN_ORACLE.items()))
def test_sigma_reference_matches_its_closed_form(t, want):
    got = sigma_reference(math.sin, t)
    assert got.sigma == pytest.approx(want, rel=1e-11)


def test_sigma_full_and_reference_agree_along_a_time_grid():
    worst = max(abs(sigma(math.sin, t).sigma - sigma_reference(math.sin, t).sigma)
                for t in np.linspace(0.05, 3.0, 25))
    assert worst <= 1e-6


def test_sigma_at_time_zero_is_zero():
    for fn in (sigma, sigma_reference):
        got = fn(math.sin, 0.0)
        assert got.sigma == 0.0 and got.est_error == 0.0
    for order in (1, 2):
        assert sigma_truncated(math.sin, 0.0, order=order).sigma == 0.0


def test_sigma_rejects_negative_times():
    with pytest.raises(ValueError):
        sigma(math.sin, -0.5)
    with pytest.raises(ValueError):
        sigma_truncated(math.sin, -1.0, order=1)


def test_truncations_are_the_leading_integrals():
    t = 0.3
    assert sigma_truncated(math.sin, t, order=1).sigma == pytest.approx(
        1 - math.cos(t), rel=1e-12)
    assert sigma_truncated(math.sin, t, order=2).sigma == pytest.approx(
        SIGMA2_SIN_T03, rel=1e-12)
    with pytest.raises(ValueError):
        sigma_truncated(math.sin, t, order=3)


def test_order2_truncation_error_decays_superlinearly():
    ts = np.logspace(-3, -1, 7)
    errs = [abs(sigma_truncated(math.sin, t, order=2).sigma
                - sigma_reference(math.sin, t).sigma) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(np.maximum(errs, 1e-300)), 1)[0]
    assert slope >= 3.0


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(abs_tol=-1e-9)
    with pytest.raises(ValueError):
        QuadratureSpec(max_subdivisions=0)
    with pytest.raises(ValueError):
        QuadratureSpec(series_guard=0.5)


def test_overflowing_integrand_reports_numeric_failure():
    with pytest.raises(QuadratureError):
        sigma_reference(1.0, 400.0)


def test_sigma_table_round_trip(tmp_path):
    rows = [sigma(math.sin, t) for t in (0.5, 1.0)]
    rows += [sigma_truncated(math.sin, 0.5, order=2)]
    p = tmp_path / "sigma.csv"
    write_sigma_table(p, rows)
    back = read_sigma_table(p)
    assert [r.method for r in back] == ["full_2_12", "full_2_12", "order2"]
    assert all(a.sigma == b.sigma and a.t == b.t for a, b in zip(rows, back))


def test_sigma_table_rejects_foreign_headers(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_sigma_table(p)


@given(st.floats(0.01, 2.5), st.floats(-1, 1))
@settings(max_examples=30, deadline=None)
def test_estimated_error_bounds_actual_reference_gap_for_constants(t, c):
    got = sigma(c, t)
    assert abs(got.sigma - c * t) <= max(got.est_error, 1e-10)


def test_coefficients_are_immutable():
    row = MagnusCoefficients(t=1.0, sigma=0.5, method="order1", est_error=0.0)
    with pytest.raises(AttributeError):
        row.sigma = 2.0
