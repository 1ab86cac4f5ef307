import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smallball.bounds import (
    BoundParams,
    azuma_tail,
    build_certificate,
    check_exp_approx,
    compute_beta,
    compute_beta_sequence,
    compute_k0,
    compute_s,
    compute_s_sequence,
    corridor_bound,
    corridor_indicator,
    largeball_bound,
    magnitude_bounds,
    smallball_bound,
)
from smallball.errors import (
    BoundOverflowError,
    DomainError,
    IndexOutOfRangeError,
    RadiusOutOfRangeError,
)
from smallball.martingale import MartingaleSpec, Tangential, VarianceSchedule, simulate_path


# ---------------------------------------------------------------------------
# k0


def _ceil_30_pow85(base: int) -> int:
    """Exact-rational oracle for ceil(30 * base^(8/5)) at integer base."""
    target = Fraction(base) ** 8
    k = 1
    while Fraction(k, 30) ** 5 < target:
        k += 1
    return k


def test_k0_base_case():
    assert compute_k0(1.0, 1.0) == 30


def test_k0_lambda_two():
    assert compute_k0(1.0, 2.0) == 91
    assert _ceil_30_pow85(2) == 91


def test_k0_lambda_three_matches_exact_oracle():
    assert compute_k0(1.0, 3.0) == _ceil_30_pow85(3) == 174


def test_k0_override_path():
    params = BoundParams(L=1.0, lam=1.0, n=10, k0_override=3)
    assert params.k0() == 3
    assert build_certificate(params).k0_overridden


def test_k0_overflow():
    with pytest.raises(BoundOverflowError):
        compute_k0(1e12, 1.0)


# ---------------------------------------------------------------------------
# s_k


def test_s_unit_case_equals_k():
    sched = VarianceSchedule.constant(1.0, 50)
    assert compute_s(sched, 1.0, 30, 50, 35) == 35.0
    assert compute_s(sched, 1.0, 30, 50, 12) == 12.0


def test_s_weighted_case():
    sched = VarianceSchedule.constant(1.0, 10)
    # L=2, k0=3, k=5: 4*3 + (v + v) = 14
    assert compute_s(sched, 2.0, 3, 10, 5) == 14.0


def test_s_index_errors():
    sched = VarianceSchedule.constant(1.0, 10)
    with pytest.raises(IndexOutOfRangeError):
        compute_s(sched, 1.0, 3, 10, 0)
    with pytest.raises(IndexOutOfRangeError):
        compute_s(sched, 1.0, 3, 10, 11)


@given(
    n=st.integers(5, 60),
    k0=st.integers(1, 40),
    L=st.floats(1.0, 3.0),
    bump=st.floats(0.0, 1.0),
)
@settings(max_examples=60)
def test_s_sequence_properties(n, k0, L, bump):
    values = np.minimum(1.0 + bump * (np.arange(n) % 4), L * L)
    sched = VarianceSchedule(values)
    s = compute_s_sequence(sched, L, k0, n)
    for k in range(1, n + 1):
        assert abs(s[k] - compute_s(sched, L, k0, n, k)) <= 1e-9 * max(1.0, abs(s[k]))
        assert s[k] >= k - 1e-12  # s_k >= k (since L >= 1 and v >= 1)
    diffs = np.diff(s[max(1, k0):])
    assert np.all(diffs >= 1.0 - 1e-12)  # strictly increasing past k0


# ---------------------------------------------------------------------------
# beta_k


E2 = math.exp(2.0)
BETA_31_ORACLE = 19.217948464756228  # e^2 * (1 - 1/62 + 77 * 31^(-9/8)), 50-digit eval
BETA_32_ORACLE = 48.902666005654102


def test_beta_base_case_is_e_squared():
    s = np.arange(51, dtype=np.float64)
    for k in (1, 15, 30):
        assert compute_beta(s, 1.0, 30, k) == E2


def test_beta_first_factor():
    s = np.arange(51, dtype=np.float64)
    got = compute_beta(s, 1.0, 30, 31)
    assert abs(got - BETA_31_ORACLE) <= 1e-6 * BETA_31_ORACLE


def test_beta_recursion_consistency():
    s = np.arange(51, dtype=np.float64)
    b31 = compute_beta(s, 1.0, 30, 31)
    b32 = compute_beta(s, 1.0, 30, 32)
    factor = 1.0 - 1.0 / 64.0 + 77.0 * 32.0 ** -1.125
    assert abs(b32 / b31 - factor) <= 1e-12 * factor
    assert abs(b32 - BETA_32_ORACLE) <= 1e-6 * BETA_32_ORACLE


def test_beta_sequence_matches_pointwise():
    n, k0, L = 40, 5, 1.0
    sched = VarianceSchedule.constant(1.0, n)
    s = compute_s_sequence(sched, L, k0, n)
    beta = compute_beta_sequence(s, L, k0, n)
    for k in range(1, n + 1):
        ref = compute_beta(s, L, k0, k)
        assert abs(beta[k] - ref) <= 1e-12 * ref


# ---------------------------------------------------------------------------
# bound formulas


def test_corridor_bound_values():
    assert corridor_bound(BoundParams(L=1, lam=1, n=100)) == pytest.approx(0.1, abs=1e-15)
    got = corridor_bound(BoundParams(L=1, lam=1, n=100, x0_norm=10.0))
    assert got == pytest.approx(0.06065306597126334, rel=1e-12)


def test_vacuous_at_n_one():
    cert = build_certificate(BoundParams(L=1, lam=1, n=1, k0_override=30))
    assert cert.corridor_bound == 1.0
    assert cert.vacuous and all(cert.vacuous_flags.values())


def test_smallball_and_largeball_values():
    assert smallball_bound(BoundParams(L=1, lam=1, n=100)) == pytest.approx(0.1, abs=1e-15)
    assert largeball_bound(BoundParams(L=1, lam=1, n=100, R=2.0)) == pytest.approx(0.2, abs=1e-15)
    got = largeball_bound(BoundParams(L=1, lam=1, n=100, R=2.0, x0_norm=10.0))
    assert got == pytest.approx(0.16929634497812281, rel=1e-12)


def test_largeball_radius_validation():
    with pytest.raises(RadiusOutOfRangeError):
        BoundParams(L=1, lam=1, n=100, R=11.0)
    with pytest.raises(RadiusOutOfRangeError):
        BoundParams(L=1, lam=1, n=100, R=0.5)


def test_largeball_monotone_in_R_and_n():
    values = [largeball_bound(BoundParams(L=1, lam=1, n=100, R=r)) for r in (1, 2, 5, 10)]
    assert values == sorted(values)
    at_n = [smallball_bound(BoundParams(L=1, lam=1, n=n)) for n in (4, 16, 64, 256)]
    assert at_n == sorted(at_n, reverse=True)


def test_azuma_values():
    assert azuma_tail(2.0, 2, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert azuma_tail(0.0, 5, 1.0) == 1.0
    assert azuma_tail(256.0**0.625, 256, 1.0) == pytest.approx(math.exp(-2.0), rel=1e-12)
    with pytest.raises(DomainError):
        azuma_tail(-1.0, 5, 1.0)


def test_magnitude_bounds_k100():
    mb = magnitude_bounds(100, 1.0, 1.0)
    assert mb.quadratic == pytest.approx(0.005050505050505051, rel=1e-12)
    assert mb.cross == pytest.approx(0.18972519293322452, rel=1e-12)
    assert mb.drift == pytest.approx(0.017817846172606888, rel=1e-12)
    assert mb.cap == pytest.approx(1.0 / 3.0, rel=1e-15)
    assert mb.passed


def test_magnitude_bounds_boundary_and_small_k():
    assert magnitude_bounds(30, 1.0, 1.0).passed
    assert not magnitude_bounds(2, 1.0, 1.0).passed  # below k0: claim not made
    with pytest.raises(DomainError):
        magnitude_bounds(1, 1.0, 1.0)


def test_exp_approx_values():
    assert check_exp_approx(0.0) == 0.0
    assert check_exp_approx(1.0) == pytest.approx(0.7817181715409548, rel=1e-12)
    assert check_exp_approx(-3.0) == pytest.approx(29.450212931632136, rel=1e-12)
    with pytest.raises(DomainError):
        check_exp_approx(1.5)


@given(st.floats(-20.0, 1.0, allow_nan=False))
@settings(max_examples=300)
def test_exp_approx_margin_nonnegative(y):
    assert check_exp_approx(y) >= -1e-12


# ---------------------------------------------------------------------------
# corridor indicator


def test_corridor_constant_origin_path():
    points = np.zeros((11, 2))
    assert corridor_indicator(points, 1.0)


def test_corridor_terminal_violation():
    points = np.zeros((5, 2))
    points[-1, 0] = 2.0
    assert not corridor_indicator(points, 100.0)


def test_corridor_spiral_fails():
    spec = MartingaleSpec.unit(Tangential(), 100, dim=2)
    path = simulate_path(spec, 100, seed=4)
    # terminal norm is 10 > 1, so the corridor event fails at t = 0
    assert not corridor_indicator(path, 1.0)


def test_corridor_matches_bruteforce_rule():
    spec = MartingaleSpec.unit(Tangential(), 20, dim=2)
    for seed in range(5):
        path = simulate_path(spec, 20, seed=seed)
        norms = path.norms()
        n = 20
        expected = norms[n] <= 1.0 and all(
            norms[n - t] <= t**0.625 + 3.0 for t in range(n + 1)
        )
        assert corridor_indicator(path, 3.0) == expected


# ---------------------------------------------------------------------------
# certificates


def test_certificate_shapes_and_flags():
    params = BoundParams(L=1.0, lam=1.0, n=200, R=2.0)
    cert = build_certificate(params)
    assert cert.k0 == 30
    assert cert.s[35] == 35.0
    assert cert.beta[30] == E2
    assert not cert.vacuous
    data = cert.to_dict()
    assert data["k0"] == 30 and not data["off_theorem"]
    full = cert.to_dict(full_sequences=True)
    assert len(full["s"]) == 200


def test_certificate_large_L_collapses_to_base_case():
    # k0 is astronomically large, so every desk-scale k stays in the base case
    params = BoundParams(L=2.0, lam=1.0, n=50, R=1.0,
                         schedule=VarianceSchedule.constant(1.0, 50))
    cert = build_certificate(params)
    assert cert.k0 == 30 * 2**24
    assert np.all(cert.beta[1:] == E2)
    assert np.allclose(cert.s[1:], 4.0 * np.arange(1, 51))
