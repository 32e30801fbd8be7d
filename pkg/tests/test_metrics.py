import math

import numpy as np
import pytest

from pfl import (
    ConfigurationError,
    ConstantLGD,
    CorrelatedLGD,
    CreditCurve,
    ExposureCube,
    IncurredCVA,
    InputError,
    Profile,
    ProtectionProfile,
    TermStructureLGD,
    TimeGrid,
    apfl_profile,
    empirical_quantile,
    expected_shortfall,
    forward_cva_profile,
    incurred_cva,
    papfl_profile,
    pfe_profile,
    pfl_pfe_ratio,
    pfl_profile,
    protection_profile,
)
from pfl.metrics import MeasureConfig, quantile_rank, tail_size


def cube_of(rows, grid=None):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    return ExposureCube(grid or TimeGrid(np.arange(rows.shape[0], dtype=float)), rows)


def test_ranks_are_exact():
    assert quantile_rank(0.95, 100) == 95
    assert tail_size(0.95, 100) == 5
    assert quantile_rank(0.99, 10**6) == 990_000
    assert tail_size(0.5, 3) == 2


def test_quantile_examples():
    s = np.arange(1, 101)
    assert empirical_quantile(s, 0.95) == 95
    assert empirical_quantile([1, 2, 3], 0.5) == 2
    assert empirical_quantile(np.full(17, 4.25), 0.37) == 4.25


def test_es_examples():
    assert expected_shortfall(np.arange(1, 101), 0.95) == 98
    assert expected_shortfall(np.full(9, 3.5), 0.9) == 3.5
    assert expected_shortfall([1.0, 2.0, 3.0], 0.5) == 2.5


def test_sample_checks():
    with pytest.raises(InputError):
        empirical_quantile([], 0.5)
    with pytest.raises(InputError):
        expected_shortfall([1.0], 1.0)
    with pytest.raises(InputError):
        expected_shortfall([1.0, np.nan], 0.5)


def test_deterministic_cube_profiles():
    cube = cube_of(np.full((3, 10), 7.0))
    assert np.all(pfe_profile(cube, 0.95).values == 7.0)
    assert np.all(pfl_profile(cube, ConstantLGD(1.0), 0.95).values == 7.0)


def test_unit_lgd_pfl_is_es_of_floored():
    rng = np.random.default_rng(1)
    raw = rng.standard_normal((4, 101))
    cube = cube_of(raw)
    pfl = pfl_profile(cube, ConstantLGD(1.0), 0.9)
    for i in range(4):
        assert pfl.values[i] == expected_shortfall(np.maximum(raw[i], 0), 0.9)


def test_constant_lgd_factorisation():
    rng = np.random.default_rng(2)
    cube = cube_of(rng.lognormal(size=(5, 1000)) - 1.0)
    unit = pfl_profile(cube, ConstantLGD(1.0), 0.95).values
    scaled = pfl_profile(cube, ConstantLGD(0.6), 0.95).values
    assert np.all(np.abs(scaled - 0.6 * unit) <= np.spacing(scaled))


def test_apfl_toy_examples():
    g = TimeGrid([0.0])
    one = ConstantLGD(1.0)
    assert apfl_profile(cube_of([[10.0, 0.0]], g), one, 4.0, 0.5).values[0] == 6.0
    assert apfl_profile(cube_of([[10.0, 2.0]], g), one, 4.0, 0.5).values[0] == 6.0
    assert apfl_profile(cube_of([[10.0, -2.0]], g), one, 4.0, 0.5).values[0] == 6.0
    assert pfl_profile(cube_of([[10.0, -2.0]], g), one, 0.5).values[0] == 10.0
    # tail block straddling the shift: ES{8, 3} = 5.5 vs ES{3, 0} = 1.5 moves by 4 < 5
    c = cube_of([[8.0, 3.0, 1.0, 0.0]], g)
    assert pfl_profile(c, one, 0.5).values[0] - apfl_profile(c, one, 5.0, 0.5).values[0] == 4.0


def test_apfl_reductions():
    rng = np.random.default_rng(3)
    cube = cube_of(rng.standard_normal((3, 50)) * 10)
    lgd = ConstantLGD(0.6)
    pfl = pfl_profile(cube, lgd, 0.9).values
    assert np.array_equal(apfl_profile(cube, lgd, 0.0, 0.9).values, pfl)
    assert np.array_equal(apfl_profile(cube, lgd, IncurredCVA(0.0), 0.9).values, pfl)
    big = 0.6 * cube.raw.max()
    assert np.all(apfl_profile(cube, lgd, big, 0.9).values == 0.0)
    y0 = ProtectionProfile.none(cube.grid)
    ap = apfl_profile(cube, lgd, 1.5, 0.9).values
    assert np.array_equal(papfl_profile(cube, lgd, 1.5, y0, 0.9).values, ap)
    full = ProtectionProfile(cube.grid, np.full(3, big))
    assert np.all(papfl_profile(cube, lgd, 0.0, full, 0.9).values == 0.0)


def test_negative_shift_rejected():
    cube = cube_of([[1.0, 2.0]])
    with pytest.raises(ConfigurationError):
        apfl_profile(cube, ConstantLGD(1.0), -1.0, 0.5)


def test_term_structure_lgd():
    lgd = TermStructureLGD(((0.0, 0.4), (2.0, 0.6)))
    np.testing.assert_array_equal(lgd.at([0.0, 1.9, 2.0, 5.0]), [0.4, 0.4, 0.6, 0.6])
    cube = cube_of(np.ones((3, 4)), TimeGrid([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(pfl_profile(cube, lgd, 0.5).values, [0.4, 0.6, 0.6])
    with pytest.raises(ConfigurationError):
        TermStructureLGD(((1.0, 0.4), (0.5, 0.6)))


def test_correlated_lgd_comonotone_tail_dominates():
    # with positive beta the LGD rises with the exposure driver, so the tail
    # mean of lgd * V beats the constant-base case; checked by enumeration
    rng = np.random.default_rng(4)
    z = rng.standard_normal((1, 8))
    raw = 5.0 + 3.0 * z
    cube = cube_of(raw)
    corr = CorrelatedLGD(0.5, 0.2, z)
    losses = np.sort(np.maximum(np.clip(0.5 + 0.2 * z, 0, 1) * raw, 0))[0]
    k = tail_size(0.75, 8)
    assert pfl_profile(cube, corr, 0.75).values[0] == pytest.approx(math.fsum(losses[-k:]) / k, rel=1e-15)
    assert pfl_profile(cube, corr, 0.75).values[0] >= pfl_profile(cube, ConstantLGD(0.5), 0.75).values[0]


def test_correlated_lgd_shape_check():
    with pytest.raises(ConfigurationError):
        pfl_profile(cube_of(np.ones((2, 3))), CorrelatedLGD(0.5, 0.1, np.zeros((2, 4))), 0.5)


def test_credit_curve_hazard():
    c = CreditCurve.from_bps(1500, 0.6)
    assert c.hazard == pytest.approx(0.25, rel=1e-15)
    assert float(c.survival(4.0)) == pytest.approx(math.exp(-1.0))


def test_incurred_cva_closed_form():
    grid = TimeGrid.uniform(10.0, 0.01)
    cube = cube_of(np.full((len(grid), 3), 2e6), grid)
    curve = CreditCurve.from_bps(1500, 0.6)
    x = incurred_cva(cube, curve, ConstantLGD(0.6))
    assert float(x) == pytest.approx(0.6 * 2e6 * (1 - math.exp(-2.5)), rel=1e-12)
    assert float(incurred_cva(cube, CreditCurve(0.0, 0.6), ConstantLGD(0.6))) == 0.0


def test_incurred_cva_grid_without_zero():
    grid = TimeGrid([0.5, 1.0])
    cube = cube_of(np.full((2, 2), 1.0), grid)
    x = incurred_cva(cube, CreditCurve(0.1, 1.0), ConstantLGD(1.0))
    assert float(x) == pytest.approx(1 - math.exp(-0.1), rel=1e-14)


def test_forward_cva_profile():
    grid = TimeGrid.uniform(5.0, 0.5)
    cube = cube_of(np.full((len(grid), 2), 1e6), grid)
    curve = CreditCurve.from_bps(1500, 0.6)
    x = float(incurred_cva(cube, curve, ConstantLGD(0.6)))
    fwd = forward_cva_profile(cube, curve, ConstantLGD(0.6))
    assert fwd[0] == pytest.approx(x, rel=1e-14) and fwd[-1] == 0.0
    assert np.all(np.diff(fwd) <= 0)


def test_inverse_discount_needs_short_rate():
    cube = cube_of(np.ones((2, 2)))
    with pytest.raises(ConfigurationError):
        incurred_cva(cube, CreditCurve(0.01, 0.6), ConstantLGD(0.6), MeasureConfig("inverse_discount"), None)


def test_protection_profile_examples():
    grid = TimeGrid([0.0, 2.5, 5.0, 5.5, 10.0])
    y = protection_profile(10e6, 5.0, 0.6, grid)
    np.testing.assert_array_equal(y.y, [6e6, 6e6, 6e6, 0.0, 0.0])
    assert np.all(protection_profile(0.0, 5.0, 0.6, grid).y == 0.0)
    two = protection_profile(1.0, 2.5, 1.0, grid) + protection_profile(2.0, 5.5, 1.0, grid)
    np.testing.assert_array_equal(two.y, [3.0, 3.0, 2.0, 2.0, 0.0])


def test_ratio_nan_where_pfe_zero():
    g = TimeGrid([0.0, 1.0])
    pfe = Profile(g, [0.0, 2.0], "PFE", 0.95)
    pfl = Profile(g, [0.0, 3.0], "PFL", 0.95)
    r = pfl_pfe_ratio(pfl, pfe)
    assert math.isnan(r[0]) and r[1] == 0.5


def test_profile_files(tmp_path):
    p = Profile(TimeGrid([0.0, 0.1]), [1.0, 1 / 3], "aPFL", 0.95, "constant 0.6", 12.5)
    p.to_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text() == "t_years,value\n0.0,1.0\n0.1,0.3333333333333333\n"
    p.to_json(tmp_path / "p.json")
    back = Profile.from_json(tmp_path / "p.json")
    assert np.array_equal(back.values, p.values) and back.kind == "aPFL" and back.incurred_cva == 12.5
    assert p.stem == "apfl_q0.95"
