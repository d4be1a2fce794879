import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qdftlab.model import (
    CoefficientFamily,
    InnovationDistribution,
    centered_future_parts,
    coef,
    coefficients,
    cond_exp_X,
    mix_seed,
    past_conditional_means,
    projection_coef,
    sample_past,
    simulate_future,
    splitmix64,
    sq_norm,
    tail_sq_sum,
    transfer_function,
    transfer_partial,
    transfer_tail_bound,
)

from oracles import X_direct, coef_direct, cond_exp_direct, record

NORMAL = InnovationDistribution()

families = st.one_of(
    st.floats(0.05, 0.95).map(CoefficientFamily.geometric),
    st.just(CoefficientFamily.harmonic()),
    st.floats(0.55, 2.5).map(CoefficientFamily.power),
    st.lists(st.floats(-2, 2), min_size=0, max_size=6).map(CoefficientFamily.finite),
)
innovations = st.sampled_from([InnovationDistribution(k) for k in
                               ("standard_normal", "rademacher", "centered_uniform")])


def oracle_coef(family):
    return lambda j: coef_direct(family.kind, j, family.rho, family.alpha, family.values)


# --- coefficients -------------------------------------------------------------

def test_harmonic_third_coefficient():
    assert coef(CoefficientFamily.harmonic(), 3) == pytest.approx(1 / 3, abs=1e-15)


def test_empty_finite_family_is_zero():
    assert coef(CoefficientFamily.finite([]), 1) == 0.0


def test_geometric_fourth_coefficient():
    assert coef(CoefficientFamily.geometric(0.5), 4) == 0.0625


def test_rejects_bad_parameters():
    with pytest.raises(ValueError, match=r"geometric ratio must be in \(0,1\)"):
        CoefficientFamily.geometric(1.0)
    with pytest.raises(ValueError, match="power exponent"):
        CoefficientFamily.power(0.5)


@given(families, st.integers(0, 200))
def test_coefficients_array_matches_scalar(family, n):
    arr = coefficients(family, n)
    assert arr.shape == (n,)
    assert not arr.flags.writeable
    assert all(arr[j] == coef(family, j) for j in range(n))
    if n:
        assert arr[0] == 0.0


@given(families, st.integers(1, 300))
def test_tail_sq_sum_nonincreasing_and_consistent(family, n):
    t0, t1 = tail_sq_sum(family, n), tail_sq_sum(family, n + 1)
    assert t1 <= t0 + 1e-15
    assert t0 - t1 == pytest.approx(coef(family, n) ** 2, rel=1e-9, abs=1e-14)


def test_tail_sq_sums_against_series():
    assert sq_norm(CoefficientFamily.harmonic()) == pytest.approx(math.pi ** 2 / 6, rel=1e-14)
    assert sq_norm(CoefficientFamily.geometric(0.5)) == pytest.approx(1 / 3, rel=1e-14)
    p = CoefficientFamily.power(1.5)
    direct = math.fsum(j ** -3.0 for j in range(10, 200000)) + 0.5 / 199999.5 ** 2
    assert tail_sq_sum(p, 10) == pytest.approx(direct, rel=1e-9)


# --- seeds --------------------------------------------------------------------

def test_splitmix_reference_value():
    # first outputs of the reference splitmix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_mix_seed_separates_streams_and_indices():
    seeds = {mix_seed(7, i, s) for i in range(200) for s in range(4)}
    assert len(seeds) == 800


# --- past sampling ------------------------------------------------------------

@given(families, innovations, st.integers(0, 2 ** 63))
def test_sample_past_deterministic(family, innov, seed):
    a = sample_past(family, innov, 8, seed)
    b = sample_past(family, innov, 8, seed)
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == (9,)


def test_truncation_bound_geometric_depth_one():
    past = sample_past(CoefficientFamily.geometric(0.5), NORMAL, 1, 3)
    assert past.truncation_error_bound == pytest.approx(math.sqrt(1 / 12), rel=1e-14)
    assert past.truncation_error_bound == pytest.approx(0.28868, abs=5e-6)


def test_truncation_bound_zero_without_tail():
    past = sample_past(CoefficientFamily.finite([1.0]), NORMAL, 4, 3)
    assert past.truncation_error_bound == 0.0


def test_innovations_unit_variance():
    rng = np.random.Generator(np.random.PCG64(1))
    for kind in ("standard_normal", "rademacher", "centered_uniform"):
        x = InnovationDistribution(kind).draw(rng, 200000)
        assert abs(x.mean()) < 0.01
        assert x.var() == pytest.approx(1.0, abs=0.02)


# --- simulate_future ----------------------------------------------------------

def test_zero_coefficients_give_zero_process():
    fam = CoefficientFamily.finite([])
    past = sample_past(fam, NORMAL, 5, 0)
    assert not simulate_future(past, fam, NORMAL, 50, 0).X.any()


def test_one_lag_copy():
    fam = CoefficientFamily.finite([1.0])
    past = sample_past(fam, NORMAL, 4, 0)
    b = simulate_future(past, fam, NORMAL, 10, 0)
    assert b.X[3] == pytest.approx(b.future[1], abs=1e-14)  # X_3 = x_2
    assert b.X[1] == pytest.approx(past.x0, abs=1e-14)


@given(families, st.integers(1, 12), st.integers(1, 40), st.integers(0, 2 ** 32))
def test_simulate_future_matches_direct_sum(family, L, n, seed):
    past = sample_past(family, NORMAL, L, seed)
    b = simulate_future(past, family, NORMAL, n, 1)
    rec = record(past.values, b.future)
    a = oracle_coef(family)
    for k in range(n):
        assert b.X[k] == pytest.approx(X_direct(a, rec, k), rel=1e-10, abs=1e-11)


def test_replicates_share_past_contribution():
    fam = CoefficientFamily.geometric(0.7)
    past = sample_past(fam, NORMAL, 16, 11)
    b1 = simulate_future(past, fam, NORMAL, 30, 0)
    b2 = simulate_future(past, fam, NORMAL, 30, 1)
    assert not np.array_equal(b1.future, b2.future)
    a = oracle_coef(fam)
    for b in (b1, b2):
        rec = record(past.values, b.future)
        future_part = [sum(a(k - l) * rec[l] for l in range(1, k)) for k in range(30)]
        past_part = b.X - np.array(future_part)
        expected = [cond_exp_direct(a, rec, k, 0) for k in range(30)]
        np.testing.assert_allclose(past_part, expected, rtol=1e-10, atol=1e-12)


@given(families, st.integers(1, 8), st.integers(1, 30), st.integers(0, 2 ** 32))
def test_simulate_future_pure(family, L, n, seed):
    past = sample_past(family, NORMAL, L, seed)
    b1 = simulate_future(past, family, NORMAL, n, 5)
    b2 = simulate_future(past, family, NORMAL, n, 5)
    assert np.array_equal(b1.X, b2.X)


# --- conditional expectations ----------------------------------------------------

def test_e0_of_x0_is_x0():
    fam = CoefficientFamily.geometric(0.5)
    past = sample_past(fam, NORMAL, 12, 4)
    b = simulate_future(past, fam, NORMAL, 5, 0)
    assert cond_exp_X(past, fam, 0, 0) == pytest.approx(b.X[0], rel=1e-13)


def test_cond_exp_unit_impulse():
    fam = CoefficientFamily.geometric(0.5)
    past = sample_past(fam, NORMAL, 6, 0)
    impulse = type(past)(6, np.array([1.0, 0, 0, 0, 0, 0, 0]), 0, past.truncation_error_bound)
    assert cond_exp_X(impulse, fam, 1, 0) == 0.5


@given(families, st.integers(1, 16), st.integers(1, 40), st.integers(0, 2 ** 32))
def test_projection_identity(family, L, k, seed):
    past = sample_past(family, NORMAL, L, seed)
    lhs = cond_exp_X(past, family, k, -1) + projection_coef(family, k) * past.x0
    assert lhs == pytest.approx(cond_exp_X(past, family, k, 0), rel=1e-12, abs=1e-12)


@given(families, st.integers(1, 16), st.integers(1, 50), st.integers(0, 2 ** 32),
       st.sampled_from([0, -1]))
def test_past_conditional_means_match_direct(family, L, n, seed, base):
    past = sample_past(family, NORMAL, L, seed)
    vec = past_conditional_means(past, family, n, base)
    direct = [cond_exp_X(past, family, k, base) for k in range(n)]
    np.testing.assert_allclose(vec, direct, rtol=1e-9, atol=1e-11)


def test_projection_coefficients():
    assert projection_coef(CoefficientFamily.harmonic(), 0) == 0.0
    assert projection_coef(CoefficientFamily.harmonic(), 5) == pytest.approx(0.2, abs=1e-16)
    assert projection_coef(CoefficientFamily.geometric(0.5), 2) == 0.25


@pytest.mark.parametrize("family", [CoefficientFamily.geometric(0.5), CoefficientFamily.harmonic(),
                                    CoefficientFamily.power(0.8)], ids=lambda f: f.kind)
def test_projection_norm_monte_carlo(family):
    """Second moment of (E_0 - E_{-1}) X_k from explicit records, 10^5 samples."""
    rng = np.random.Generator(np.random.PCG64(2024))
    samples, L = 100000, 6
    recs = rng.standard_normal((samples, L + 1))  # column i is x_{-i}
    a = oracle_coef(family)
    for k in (1, 2, 5):
        e0 = sum(a(j) * recs[:, j - k] for j in range(max(1, k), k + L + 1))
        em1 = sum(a(j) * recs[:, j - k] for j in range(k + 1, k + L + 1))
        sq = (e0 - em1) ** 2
        se = sq.std(ddof=1) / math.sqrt(samples)
        assert abs(sq.mean() - coef(family, k) ** 2) < 3 * se


@given(families, st.integers(2, 40), st.integers(0, 3), st.integers(0, 2 ** 32))
def test_centered_parts_match_subtraction(family, n, shift, seed):
    past = sample_past(family, NORMAL, 10, seed)
    b = simulate_future(past, family, NORMAL, n, 2)
    x, F = centered_future_parts(family, NORMAL, n, [b.replicate_seed], lag_shift=shift)
    np.testing.assert_array_equal(x[0, 1:], b.future)
    assert x[0, 0] == 0.0
    if shift == 0:
        e0 = past_conditional_means(past, family, n)
        np.testing.assert_allclose(F[0], b.X - e0, rtol=1e-9, atol=1e-11)
    else:
        a = oracle_coef(family)
        expect = [sum(a(k - l + shift) * x[0, l] for l in range(1, k)) for k in range(n)]
        np.testing.assert_allclose(F[0], expect, rtol=1e-9, atol=1e-11)


# --- transfer function --------------------------------------------------------

@given(st.floats(0.05, 0.95), st.floats(0.0, 2 * math.pi, exclude_max=True))
def test_geometric_transfer_closed_form(rho, theta):
    fam = CoefficientFamily.geometric(rho)
    A = transfer_function(fam, theta)
    assert abs(A) ** 2 == pytest.approx(rho ** 2 / (1 + rho ** 2 - 2 * rho * math.cos(theta)),
                                        rel=1e-12)


def test_harmonic_transfer_at_pi():
    assert transfer_function(CoefficientFamily.harmonic(), math.pi) == pytest.approx(-math.log(2))


def test_harmonic_transfer_diverges_at_zero():
    with pytest.raises(ValueError, match="Hannan series divergent"):
        transfer_function(CoefficientFamily.harmonic(), 0.0)


@pytest.mark.parametrize("family", [CoefficientFamily.harmonic(), CoefficientFamily.power(0.75),
                                    CoefficientFamily.power(1.5), CoefficientFamily.geometric(0.9)],
                         ids=lambda f: f.label)
@pytest.mark.parametrize("theta", [math.pi / 3, math.pi / 2, 2.5])
def test_partial_transfer_within_tail_bound(family, theta):
    for r in (10, 100, 1000):
        gap = abs(transfer_function(family, theta) - transfer_partial(family, theta, r))
        assert gap <= transfer_tail_bound(family, theta, r) * (1 + 1e-9) + 1e-13
