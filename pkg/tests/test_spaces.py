import numpy as np
import pytest
from scipy.special import gamma as gamma_fn
from scipy.stats import chisquare

from dcl import spaces as sp
from dcl.rng import Rng


def test_box_simple_marginal_mean():
    space = sp.LatentSpaceSpec(n=2)
    s = sp.sample_marginal(space, 1_000_000, Rng(1))
    se = 1.0 / np.sqrt(12.0 * 1_000_000)
    assert np.all(np.abs(s.mean(axis=0) - 0.5) < 3 * se)


def test_hollow_ball_norms_in_range():
    space = sp.LatentSpaceSpec(n=3, scenario=sp.HOLLOW_BALL, r_inner=0.5, r_outer=1.0)
    s = sp.sample_marginal(space, 100_000, Rng(2))
    norms = np.linalg.norm(s, axis=1)
    assert norms.min() > 0.5
    assert norms.max() < 1.0


def test_cube_grid_respects_gap():
    space = sp.LatentSpaceSpec(n=2, scenario=sp.CUBE_GRID, gap=0.3)
    s = sp.sample_marginal(space, 1_000_000, Rng(3))
    assert np.abs(s).min() > 0.3
    assert np.abs(s).max() <= 1.0


def test_box_complex_stays_in_box_and_correlates():
    space = sp.LatentSpaceSpec(n=4, scenario=sp.BOX_COMPLEX)
    s = sp.sample_marginal(space, 200_000, Rng(4))
    assert np.all((s >= 0) & (s <= 1))
    corr = np.corrcoef(s.T)
    # rejection to the box shrinks the raw 0.8; it must stay strongly positive
    assert corr[0, 1] > 0.5
    assert abs(corr[0, 2]) < 0.05


def test_support_closure_all_scenarios():
    for spec in (sp.LatentSpaceSpec(n=3),
                 sp.LatentSpaceSpec(n=3, scenario=sp.BOX_COMPLEX),
                 sp.LatentSpaceSpec(n=3, scenario=sp.HOLLOW_BALL),
                 sp.LatentSpaceSpec(n=3, scenario=sp.CUBE_GRID)):
        s = sp.sample_marginal(spec, 20_000, Rng(5))
        assert np.all(spec.contains(s))
        cond = sp.default_conditional(spec, beta=1.0)
        st = sp.sample_conditional(spec, cond, s[:2000], Rng(6))
        assert np.all(spec.contains(st))


def test_laplace_median_absolute_increment():
    # unbounded proposal at beta=1, sigma=1: median |delta| = ln 2
    cond = sp.ConditionalSpec(beta=1.0, sigma=(1.0,))
    delta = sp.sample_generalized_normal(cond, 1_000_000, 1, Rng(7))[:, 0]
    med = np.median(np.abs(delta))
    # SE of the median: 1 / (2 f(m) sqrt(N)) with f(ln 2) = 1/4 for |Laplace|
    se = 1.0 / (2.0 * 0.5 * np.sqrt(1_000_000))
    assert abs(med - np.log(2)) < 3 * se


def test_truncation_acceptance_rate_box_center():
    # beta=1, sigma=1, s=(0.5,0.5): per-dim acceptance 1 - e^{-1/2}
    space = sp.LatentSpaceSpec(n=2)
    cond = sp.ConditionalSpec(beta=1.0, sigma=(1.0,))
    s = np.tile([0.5, 0.5], (200_000, 1))
    stats = {}
    sp.sample_conditional(space, cond, s, Rng(8), stats=stats)
    rate = stats["accepted"] / stats["proposals"]
    expected = (1.0 - np.exp(-0.5)) ** 2
    se = np.sqrt(expected * (1 - expected) / stats["proposals"])
    assert abs(rate - expected) < 3 * se


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 3.0, 5.0])
def test_generalized_normal_mean_abs(beta):
    cond = sp.ConditionalSpec(beta=beta, sigma=(1.0,))
    delta = sp.sample_generalized_normal(cond, 1_000_000, 1, Rng(int(beta * 10)))[:, 0]
    absd = np.abs(delta)
    expected = gamma_fn(2.0 / beta) / gamma_fn(1.0 / beta)
    se = absd.std(ddof=1) / 1000.0
    assert abs(absd.mean() - expected) < 3 * se


def test_generalized_normal_variance_beta2():
    # beta=2, sigma=sqrt(2): var = sigma^2 Gamma(3/2)/Gamma(1/2) = 1
    cond = sp.ConditionalSpec(beta=2.0, sigma=(np.sqrt(2.0),))
    delta = sp.sample_generalized_normal(cond, 1_000_000, 1, Rng(9))[:, 0]
    d2 = delta**2
    se = d2.std(ddof=1) / 1000.0
    assert abs(d2.mean() - 1.0) < 3 * se


def test_conditional_histogram_matches_truncated_laplace():
    anchor, sigma, n_samples, bins = 0.3, 0.25, 200_000, 200
    space = sp.LatentSpaceSpec(n=1)
    cond = sp.ConditionalSpec(beta=1.0, sigma=(sigma,))
    draws = sp.sample_conditional(space, cond, np.full((n_samples, 1), anchor),
                                  Rng(10))[:, 0]
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(draws, bins=edges)

    def cdf_num(t):
        t = np.asarray(t, dtype=np.float64)
        below = sigma * (np.exp(-(anchor - np.minimum(t, anchor)) / sigma)
                         - np.exp(-anchor / sigma))
        above = np.where(t > anchor,
                         sigma * (1.0 - np.exp(-(t - anchor) / sigma)), 0.0)
        return below + above

    z1 = sigma * (2.0 - np.exp(-anchor / sigma) - np.exp(-(1 - anchor) / sigma))
    masses = np.diff(cdf_num(edges)) / z1
    _, p = chisquare(counts, f_exp=n_samples * masses)
    assert p > 0.001


def test_log_unnormalized_conditional_values():
    cond = sp.ConditionalSpec(beta=1.0, sigma=(1.0,))
    s = np.array([[0.0, 0.0]])
    assert sp.log_unnormalized_conditional(cond, s, s)[0] == 0.0
    st = np.array([[1.0, 1.0]])
    assert abs(sp.log_unnormalized_conditional(cond, s, st)[0] + 2.0) < 1e-12


def test_log_unnormalized_checkerboard_black_cell():
    cond = sp.ConditionalSpec(beta=1.0, sigma=(1.0,), q="checkerboard", q_low=0.1)
    s = np.array([[0.6, 0.2]])  # floor(2s) = (1, 0): odd parity, black
    val = sp.log_unnormalized_conditional(cond, s, s)[0]
    assert abs(val - np.log(0.1)) < 1e-12


def test_log_unnormalized_outside_support_is_minus_inf():
    space = sp.LatentSpaceSpec(n=2)
    cond = sp.ConditionalSpec(beta=1.0, sigma=(1.0,))
    s = np.array([[0.5, 0.5]])
    st = np.array([[1.5, 0.5]])
    assert sp.log_unnormalized_conditional(cond, s, st, space)[0] == -np.inf


def test_log_marginal_density_box_and_grid():
    assert sp.log_marginal_density(sp.LatentSpaceSpec(n=3),
                                   np.array([[0.2, 0.5, 0.9]]))[0] == 0.0
    grid = sp.LatentSpaceSpec(n=1, scenario=sp.CUBE_GRID, gap=0.5)
    assert abs(sp.log_marginal_density(grid, np.array([[0.7]]))[0]) < 1e-12


def test_log_marginal_density_hollow_ball_value_and_histogram():
    space = sp.LatentSpaceSpec(n=2, scenario=sp.HOLLOW_BALL, r_inner=0.5, r_outer=1.0)
    pt = np.array([[0.75, 0.0]])
    expected = np.log(1.0 / (0.5 * 2.0 * np.pi * 0.75))
    assert abs(sp.log_marginal_density(space, pt)[0] - expected) < 1e-12
    # Monte-Carlo check: mass in a thin annulus around r=0.75
    s = sp.sample_marginal(space, 1_000_000, Rng(11))
    r = np.linalg.norm(s, axis=1)
    in_shell = np.mean((r > 0.74) & (r < 0.76))
    density = in_shell / (np.pi * (0.76**2 - 0.74**2))
    assert abs(np.log(density) - expected) < 0.02


def test_log_marginal_density_outside_support_raises():
    with pytest.raises(sp.SupportError):
        sp.log_marginal_density(sp.LatentSpaceSpec(n=2), np.array([[1.5, 0.5]]))


def test_distance_is_symmetric():
    rng = Rng(12)
    cond = sp.ConditionalSpec(beta=2.7, sigma=(0.3, 0.7, 1.1))
    a = rng.normal(300).reshape(100, 3)
    b = rng.normal(300).reshape(100, 3)
    np.testing.assert_array_equal(sp.distance(cond, a, b), sp.distance(cond, b, a))


def test_sampler_inefficiency_error():
    # an anchor far outside the box never produces acceptable proposals
    space = sp.LatentSpaceSpec(n=2)
    cond = sp.ConditionalSpec(beta=1.0, sigma=(1e-4,))
    s = np.array([[5.0, 5.0]])
    with pytest.raises(sp.SamplerError, match="acceptance"):
        sp.sample_conditional(space, cond, s, Rng(13))


def test_spec_validation():
    with pytest.raises(ValueError):
        sp.LatentSpaceSpec(n=0)
    with pytest.raises(ValueError):
        sp.LatentSpaceSpec(n=2, scenario="torus")
    with pytest.raises(ValueError):
        sp.LatentSpaceSpec(n=2, scenario=sp.HOLLOW_BALL, r_inner=1.0, r_outer=0.5)
    with pytest.raises(ValueError):
        sp.ConditionalSpec(beta=0.0, sigma=(1.0,))
    with pytest.raises(ValueError):
        sp.ConditionalSpec(beta=1.0, sigma=(-1.0,))
    with pytest.raises(ValueError):
        sp.ConditionalSpec(beta=1.0, sigma=(1.0,), q="checkerboard", q_low=0.0)
