import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetmeasure.cdf import KernelSpec, fit_cdf
from hetmeasure.dataset import Dataset
from hetmeasure.measures import (
    McConfig,
    estimate_cace,
    estimate_cace_parts,
    estimate_cpice,
    estimate_cpice_parts,
    estimate_n_cace,
    estimate_n_cpice,
    estimate_p_cace,
    estimate_p_cpice,
)
from hetmeasure.policies import dirac, normal, single_shift, uniform
from hetmeasure.scm import get_scm, sample_observational


class StubModel:
    """CDF model with a prescribed F(y; x) on [0, 1]."""

    y_range = (0.0, 1.0)

    def __init__(self, f):
        self.f = f

    def cdf_grid(self, ys, xs, w):
        return np.stack([self.f(np.asarray(ys), x) for x in np.ravel(xs)])


SQUARES = StubModel(lambda y, x: y if x == 0 else y**2)
SAME = StubModel(lambda y, x: y)


@pytest.fixture(scope="module")
def appc_model(appc_10k):
    return fit_cdf(appc_10k, KernelSpec("epanechnikov", 1.0))


@pytest.fixture(scope="module")
def ex2_model():
    return fit_cdf(sample_observational(get_scm("ex2_multiplicative"), 3000, seed=4), KernelSpec("epanechnikov", 0.5))


def test_closed_form_integral_of_y_minus_y_squared():
    exact = 1.0 / 6.0
    mid = estimate_p_cace(SQUARES, 0.5, McConfig(n2=10_000, y_design="midpoint"))
    assert mid == pytest.approx(exact, abs=1e-8)
    draws = np.random.default_rng([3, 0]).random(100_000)
    se = np.std(draws - draws**2) / np.sqrt(draws.size)
    rnd = estimate_p_cace(SQUARES, 0.5, McConfig(n2=100_000, seed=3))
    assert abs(rnd - exact) < 4 * se
    assert estimate_n_cace(SQUARES, 0.5, McConfig(n2=1000)) == 0.0


def test_identical_arms_give_zero():
    cfg = McConfig(n2=500)
    assert estimate_cace_parts(SAME, 0.5, cfg) == (0.0, 0.0, 0.0)
    assert estimate_cpice_parts(SAME, 0.5, uniform(0, 1), single_shift(0.0), cfg) == (0.0, 0.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), w=st.floats(0.2, 0.8), n2=st.integers(1, 300), n1=st.integers(1, 20))
def test_decomposition_and_nonnegativity(appc_model, seed, w, n2, n1):
    cfg = McConfig(n1=n1, n2=n2, seed=seed)
    c, p, n = estimate_cace_parts(appc_model, w, cfg, 0.0, 2.0)
    assert p >= 0 and n >= 0
    assert abs(p - n - c) <= 1e-12
    c, p, n = estimate_cpice_parts(appc_model, w, uniform(0, 0.1), single_shift(1.9), cfg)
    assert p >= 0 and n >= 0
    assert abs(p - n - c) <= 1e-12


def test_single_value_wrappers_agree(appc_model):
    cfg = McConfig(seed=5)
    parts = estimate_cace_parts(appc_model, 0.5, cfg, 0.0, 2.0)
    assert parts == (estimate_cace(appc_model, 0.5, cfg, 0.0, 2.0),
                     estimate_p_cace(appc_model, 0.5, cfg, 0.0, 2.0),
                     estimate_n_cace(appc_model, 0.5, cfg, 0.0, 2.0))
    pi0, pi1 = uniform(0, 0.1), single_shift(1.9)
    parts = estimate_cpice_parts(appc_model, 0.5, pi0, pi1, cfg)
    assert parts == (estimate_cpice(appc_model, 0.5, pi0, pi1, cfg),
                     estimate_p_cpice(appc_model, 0.5, pi0, pi1, cfg),
                     estimate_n_cpice(appc_model, 0.5, pi0, pi1, cfg))


def test_dirac_policies_reduce_bit_for_bit(appc_model):
    for seed in range(5):
        cfg = McConfig(seed=seed)
        assert estimate_cpice_parts(appc_model, 0.5, dirac(0.0), dirac(2.0), cfg) == \
            estimate_cace_parts(appc_model, 0.5, cfg, 0.0, 2.0)


def test_swapping_policies_swaps_parts(appc_model):
    cfg = McConfig(seed=2)
    _, p, n = estimate_cpice_parts(appc_model, 0.5, uniform(0, 0.1), single_shift(1.9), cfg)
    _, p2, n2 = estimate_cpice_parts(appc_model, 0.5, single_shift(1.9), uniform(0, 0.1), cfg)
    assert (p, n) == (n2, p2)


def test_relabelled_treatment_swaps_parts(ex2_model):
    d = sample_observational(get_scm("ex2_multiplicative"), 3000, seed=4)
    flipped = fit_cdf(Dataset(x=1 - d.x, y=d.y, w=d.w), KernelSpec("epanechnikov", 0.5))
    cfg = McConfig(seed=8)
    assert estimate_n_cace(ex2_model, 0.5, cfg) == pytest.approx(estimate_p_cace(flipped, 0.5, cfg), abs=1e-12)


def test_mc_variance_scales_inversely_with_n2(appc_model):
    sizes = np.array([100, 1_000, 10_000])
    var = [np.var([estimate_p_cace(appc_model, 0.5, McConfig(n2=int(n2), seed=s), 0.0, 2.0) for s in range(150)])
           for n2 in sizes]
    slope = np.polyfit(np.log(sizes), np.log(var), 1)[0]
    assert -1.3 <= slope <= -0.7


@settings(max_examples=15, deadline=None)
@given(alpha=st.floats(0.2, 20.0), beta=st.floats(-50, 50), seed=st.integers(0, 1000))
def test_scale_equivariance(alpha, beta, seed):
    d = sample_observational(get_scm("appc_main"), 400, seed=seed)
    a, b = d.y.min(), d.y.max()
    m = fit_cdf(d, KernelSpec("epanechnikov", 1.0))
    t = fit_cdf(Dataset(x=d.x, y=alpha * d.y + beta, w=d.w), KernelSpec("epanechnikov", 1.0))
    base = estimate_cace_parts(m, 0.5, McConfig(y_bounds=(a, b), seed=seed), 0.0, 2.0)
    moved = estimate_cace_parts(t, 0.5, McConfig(y_bounds=(alpha * a + beta, alpha * b + beta), seed=seed), 0.0, 2.0)
    np.testing.assert_allclose(moved, alpha * np.array(base), rtol=1e-8, atol=1e-10)


def test_single_sample_near_truth(appc_model):
    cfg = McConfig(seed=1)
    _, p, n = estimate_cace_parts(appc_model, 0.5, cfg, 0.0, 2.0)
    assert p == pytest.approx(0.125, abs=0.07) and n == pytest.approx(0.125, abs=0.07)
    _, p, n = estimate_cpice_parts(appc_model, 0.5, uniform(0, 0.1), single_shift(1.9), cfg)
    assert p == pytest.approx(0.119, abs=0.07) and n == pytest.approx(0.119, abs=0.07)


def test_example1_policy_estimate_positive():
    d = sample_observational(get_scm("ex1_additive"), 2000, seed=0)
    m = fit_cdf(d, KernelSpec("epanechnikov", 1.0))
    _, p, n = estimate_cpice_parts(m, 0.5, normal(0, 0.1), single_shift(1.0), McConfig())
    assert p > 0.5 and n < 0.1


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(n1=0)
    with pytest.raises(ValueError):
        McConfig(y_bounds=(1, 1))
    with pytest.raises(ValueError):
        McConfig(y_design="sobol")


def test_seed_determinism(appc_model):
    cfg = McConfig(seed=42)
    assert estimate_p_cpice(appc_model, 0.5, uniform(0, 0.1), single_shift(1.9), cfg) == \
        estimate_p_cpice(appc_model, 0.5, uniform(0, 0.1), single_shift(1.9), cfg)
