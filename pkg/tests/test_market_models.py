import math

import numpy as np
import pytest
from scipy import integrate, stats

from pfl import GBM, ConfigurationError, ShortRate1F, TimeGrid, business_days, conditional_value_quantile, generate_paths
from pfl.market_models import PATH_BLOCK, conditional_sample


def test_business_days():
    assert business_days(10) == 10 / 252
    assert business_days(252) == 1.0


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        TimeGrid([])
    with pytest.raises(ConfigurationError):
        TimeGrid([0.0, 0.5, 0.5])
    with pytest.raises(ConfigurationError):
        TimeGrid([-0.1, 0.5])
    with pytest.raises(ConfigurationError):
        TimeGrid([0.0, float("nan")])


def test_uniform_grid_appends_end():
    g = TimeGrid.uniform(1.0, 0.3)
    np.testing.assert_allclose(g.points, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert len(TimeGrid.uniform(1.0, 0.25)) == 5


def test_grid_merge_and_lookup():
    g = TimeGrid.uniform(1.0, 0.25).merged([0.5 + 1e-12, 0.6, -1.0])
    assert len(g) == 6
    assert g.find(0.6) == 3
    assert g.find(0.61) is None
    assert g.index_at_or_before(0.61) == 3
    assert g.index_at_or_before(-0.5) == -1
    with pytest.raises(ConfigurationError):
        g.index(0.7)


def test_zero_vol_gbm_is_constant():
    grid = TimeGrid.uniform(2.0, 0.1)
    p = generate_paths(GBM(100.0, 0.0, 0.0), grid, 50, 3)
    assert np.all(p.states == 100.0)


def test_gbm_mean_1m_paths():
    grid = TimeGrid([1.0])
    m = GBM(100.0, 0.01, 0.20)
    s = generate_paths(m, grid, 1_000_000, 11).states[:, 0]
    se = s.std(ddof=1) / math.sqrt(s.size)
    assert abs(s.mean() - 100.0 * math.exp(0.01)) < 3 * se


def test_gbm_martingale_each_date():
    grid = TimeGrid.uniform(2.0, 0.25)
    p = generate_paths(GBM(100.0, 0.0, 0.3), grid, 100_000, 5)
    mean = p.states.mean(axis=0)
    se = p.states.std(axis=0, ddof=1) / math.sqrt(p.n_paths)
    assert np.all(np.abs(mean - 100.0) <= 4 * np.maximum(se, 1e-12))


def test_ou_mean():
    m = ShortRate1F(0.1, 0.01, 0.02)
    x = generate_paths(m, TimeGrid([2.5, 5.0]), 200_000, 8).states[:, 1]
    expected = 0.02 * math.exp(-0.5) + 0.02 * (1 - math.exp(-0.5))
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - expected) < 3 * se
    assert m.mean(5.0) == pytest.approx(expected)


def test_ou_std_matches_sample():
    m = ShortRate1F(0.1, 0.01, 0.02)
    x = generate_paths(m, TimeGrid([0.7, 5.0]), 200_000, 9).states[:, 1]
    exact = 0.01 * math.sqrt((1 - math.exp(-2 * 0.1 * 5.0)) / (2 * 0.1))
    assert float(m.std(5.0)) == pytest.approx(exact, rel=1e-12)
    assert x.std() == pytest.approx(exact, rel=0.01)


def _zcb_quadrature(m, tau, r):
    # log P is Gaussian: mean -int E[r_s] ds, variance int int Cov(r_s, r_u)
    a, s = m.mean_reversion, m.vol
    mean_r = lambda u: m.r0 + (r - m.r0) * math.exp(-a * u)  # noqa: E731
    cov = lambda u, v: s * s / (2 * a) * math.exp(-a * (u + v)) * (math.exp(2 * a * min(u, v)) - 1)  # noqa: E731
    mu = -integrate.quad(mean_r, 0, tau)[0]
    var = integrate.dblquad(lambda v, u: cov(u, v), 0, tau, 0, tau, epsabs=1e-13)[0]
    return math.exp(mu + 0.5 * var)


@pytest.mark.parametrize("tau,r", [(0.5, 0.03), (5.0, 0.01), (10.0, 0.05)])
def test_zcb_against_quadrature(tau, r):
    m = ShortRate1F(0.05, 0.008, 0.03)
    assert float(m.zcb(tau, r)) == pytest.approx(_zcb_quadrature(m, tau, r), rel=1e-9)


def test_zcb_at_zero_tenor():
    m = ShortRate1F(0.05, 0.008, 0.03)
    assert float(m.zcb(0.0, 0.07)) == 1.0


def test_seed_determinism_and_threads():
    grid = TimeGrid.uniform(1.0, 0.1)
    m = GBM(100.0, 0.01, 0.2)
    n = PATH_BLOCK * 2 + 17
    a = generate_paths(m, grid, n, 42, threads=1)
    b = generate_paths(m, grid, n, 42, threads=4)
    c = generate_paths(m, grid, n, 43, threads=1)
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)


def test_path_prefix_property():
    grid = TimeGrid.uniform(1.0, 0.1)
    m = ShortRate1F(0.05, 0.01, 0.03)
    small = generate_paths(m, grid, 100, 1)
    big = generate_paths(m, grid, PATH_BLOCK + 100, 1)
    assert np.array_equal(small.states, big.states[:100])


def test_antithetic_pairs():
    m = ShortRate1F(0.05, 0.01, 0.03)
    p = generate_paths(m, TimeGrid([1.0]), 1000, 1, antithetic=True)
    z = p.standardized_driver()[:, 0]
    np.testing.assert_allclose(z[0::2], -z[1::2], atol=1e-9)


def test_state_at_zero_off_grid():
    p = generate_paths(GBM(50.0, 0.0, 0.1), TimeGrid([0.5, 1.0]), 10, 1)
    assert np.all(p.state_at(0.0) == 50.0)
    with pytest.raises(ConfigurationError):
        p.state_at(0.25)


def test_conditional_median_and_quantile():
    h = 10 / 252
    m = GBM(100.0, 0.01, 0.2)
    med = conditional_value_quantile(m, 100.0, h, 0.5)
    assert float(med) == pytest.approx(100.0 * math.exp((0.01 - 0.02) * h), rel=1e-14)
    m0 = GBM(100.0, 0.0, 0.2)
    q99 = conditional_value_quantile(m0, 100.0, h, 0.99)
    z = stats.norm.ppf(0.99)
    assert float(q99) == pytest.approx(100.0 * math.exp(-0.02 * h + 0.2 * math.sqrt(h) * z), rel=1e-14)
    assert z == pytest.approx(2.3263, abs=1e-4)


def test_no_stress_identity():
    h = 0.1
    for m in (GBM(100.0, 0.01, 0.2), ShortRate1F(0.05, 0.01, 0.03)):
        a = conditional_value_quantile(m, m.initial_state, h, 0.9, 1.0)
        b = conditional_value_quantile(m.scaled(1.0), m.initial_state, h, 0.9)
        assert a == b


def test_conditional_sample_matches_quantile():
    m = ShortRate1F(0.05, 0.01, 0.03)
    z = stats.norm.ppf(0.975)
    assert float(conditional_sample(m, 0.04, 0.5, z, 1.3)) == pytest.approx(
        float(conditional_value_quantile(m, 0.04, 0.5, 0.975, 1.3)), rel=1e-12
    )


def test_conditional_quantile_argument_checks():
    m = GBM(100.0, 0.0, 0.2)
    with pytest.raises(ConfigurationError):
        conditional_value_quantile(m, 100.0, 0.0, 0.5)
    with pytest.raises(ConfigurationError):
        conditional_value_quantile(m, 100.0, 0.1, 1.0)
    with pytest.raises(ConfigurationError):
        conditional_value_quantile(m, 100.0, 0.1, 0.5, 0.9)


def test_model_validation():
    with pytest.raises(ConfigurationError):
        GBM(0.0, 0.0, 0.2)
    with pytest.raises(ConfigurationError):
        GBM(100.0, 0.0, -0.1)
    with pytest.raises(ConfigurationError):
        ShortRate1F(0.0, 0.01, 0.03)
