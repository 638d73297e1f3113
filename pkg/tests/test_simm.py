import math

import numpy as np
import pytest

from xva_engine.collateral import CsaTerms
from xva_engine.engine import _PathBlock, grid_for, simulation_times
from xva_engine.g2pp import simulate
from xva_engine.marketdata import ZeroCurve, curve_jacobian
from xva_engine.pricing import swap_price_curves
from xva_engine.simm import (
    CURVATURE_Q,
    TENOR_DAYS,
    TENOR_YEARS,
    ForwardSimm,
    SimmParams,
    allocation_matrix,
    apply_threshold,
    curvature_margin,
    delta_margin,
    scaling_function,
    vega_margin,
)

TABLE_SF_PCT = [50.0, 23.0, 7.7, 3.8, 1.9, 1.0, 0.6, 0.4, 0.2, 0.1, 0.1, 0.1]


def _unit(j, n=12):
    e = np.zeros(n)
    e[j] = 1.0
    return e


def test_params_file(simm_params):
    assert simm_params.risk_weights[7] == 51
    assert simm_params.correlation[7, 8] == 0.95
    assert np.array_equal(simm_params.correlation, simm_params.correlation.T)
    assert simm_params.delta_correlation.shape == (24, 24)
    assert simm_params.delta_correlation[7, 12 + 7] == pytest.approx(0.98)


def test_scaling_function_row(simm_params):
    sf = scaling_function(TENOR_DAYS)
    assert [round(100 * s, 1) for s in sf] == TABLE_SF_PCT
    assert np.array_equal(np.round(100 * sf, 1), np.round(100 * simm_params.scaling_table, 1))
    assert sf[0] == 0.5
    assert round(100 * sf[1], 1) == 23.0


@pytest.mark.parametrize("j", range(12))
def test_single_sensitivity_margins(simm_params, j):
    rw = simm_params.risk_weights[j]
    assert delta_margin(-3.5 * _unit(j), np.zeros(12), simm_params) == rw * 3.5
    assert delta_margin(np.zeros(12), 2.0 * _unit(j), simm_params) == rw * 2.0
    assert vega_margin(-1e5 * _unit(j), simm_params) == simm_params.vrw * 1e5


def test_two_tenor_hand_example(simm_params):
    dd = _unit(7) + _unit(8)
    expected = math.sqrt(51**2 + 51**2 + 2 * 0.95 * 51 * 51)
    assert delta_margin(dd, np.zeros(12), simm_params) == pytest.approx(expected, rel=1e-12, abs=0)
    assert expected == pytest.approx(51 * math.sqrt(3.9), rel=1e-15)


def test_two_entry_vega_and_cross_curve(simm_params):
    vr = 1e6 * (_unit(4) - 2 * _unit(9))
    rho = simm_params.correlation[4, 9]
    w1, w2 = 0.16e6, -0.32e6
    assert vega_margin(vr, simm_params) == pytest.approx(math.sqrt(w1 * w1 + w2 * w2 + 2 * rho * w1 * w2), rel=1e-12)
    m = delta_margin(_unit(8), _unit(8), simm_params)
    assert m == pytest.approx(51 * math.sqrt(2 + 2 * 0.98), rel=1e-12)


def test_zero_inputs_give_zero_margin(simm_params):
    z = np.zeros(12)
    assert delta_margin(z, z, simm_params) == 0.0
    assert vega_margin(z, simm_params) == 0.0
    assert curvature_margin(z, simm_params) == 0.0


def test_curvature_lambda(simm_params):
    assert CURVATURE_Q == pytest.approx(2.5758293035489**2 - 1, rel=1e-12)
    assert CURVATURE_Q == pytest.approx(5.6348, abs=1e-4)
    vr = 1e6 * _unit(5)
    cvr = scaling_function(TENOR_DAYS[5]) * 1e6
    # single positive CVR: theta = 0, K = |CVR|
    expected = (cvr + CURVATURE_Q * cvr) / simm_params.hvr**2
    assert curvature_margin(vr, simm_params) == pytest.approx(expected, rel=1e-12)
    # all negative: theta = -1, lambda = 1, floor at zero
    assert curvature_margin(-vr, simm_params) == 0.0


def test_concentration_factor(simm_params):
    t_b = simm_params.delta_threshold
    big = 4 * t_b * _unit(8)
    assert delta_margin(big, np.zeros(12), simm_params) == pytest.approx(51 * 4 * t_b * 2.0, rel=1e-12)
    vt = simm_params.vega_threshold
    assert vega_margin(9 * vt * _unit(3), simm_params) == pytest.approx(0.16 * 9 * vt * 3.0, rel=1e-12)


def test_positive_homogeneity_and_bounds(simm_params, rng):
    dd, dx = rng.normal(0, 1e4, (2, 12))
    vr = rng.normal(0, 1e5, 12)
    for c in (0.5, 3.0):
        assert delta_margin(c * dd, c * dx, simm_params) == pytest.approx(c * delta_margin(dd, dx, simm_params),
                                                                          rel=1e-12)
        assert vega_margin(c * vr, simm_params) == pytest.approx(c * vega_margin(vr, simm_params), rel=1e-12)
        assert curvature_margin(c * vr, simm_params) == pytest.approx(c * curvature_margin(vr, simm_params),
                                                                      rel=1e-12)
    ws = np.abs(np.concatenate((dd, dx)) * np.tile(simm_params.risk_weights, 2))
    m = delta_margin(dd, dx, simm_params)
    assert ws.max() <= m * (1 + 1e-12)
    assert m <= ws.sum() * (1 + 1e-12)


def test_allocation_weights():
    w = allocation_matrix([7.0])[0]
    assert w[7] == pytest.approx(3 / 5) and w[8] == pytest.approx(2 / 5)
    assert w.sum() == pytest.approx(1.0)
    raw = np.array([0.01, 0.6, 4.0, 7.0, 12.5, 50.0])
    amounts = np.array([1.0, -2.0, 3.0, 4.0, 5.0, -6.0])
    assert (amounts @ allocation_matrix(raw)).sum() == pytest.approx(amounts.sum(), rel=1e-14)
    assert np.allclose(allocation_matrix(TENOR_YEARS), np.eye(12))


def test_threshold_on_posted_im():
    assert apply_threshold(3e6, 5e6) == 0.0
    assert apply_threshold(8e6, 5e6, 1e6) == 3e6


def test_swap_delta_matches_parallel_dv01(fsimm, market, menu):
    sw = menu["swap_15Y_ATM"]
    d, x = market.discount, market.forward
    zd, zx, v = fsimm.swap_zero_deltas(sw, 0.0, np.zeros(1), np.zeros(1))
    dd, dx = fsimm.to_simm(zd, zx)
    total = dd.sum() + dx.sum()

    def shifted(c, h):
        return ZeroCurve(c.curve_id, c.days, c.dfs * np.exp(-h * c.days / 365.0))

    h = 1e-4
    dv01 = 0.5 * (swap_price_curves(sw, shifted(d, h), shifted(x, h))
                  - swap_price_curves(sw, shifted(d, -h), shifted(x, -h)))
    assert dv01 > 0
    assert total == pytest.approx(dv01, rel=0.05)
    # allocation conserves the raw totals
    assert dd.sum() == pytest.approx(zd.sum(), rel=1e-12)
    assert dx.sum() == pytest.approx(zx.sum(), rel=1e-12)


def test_swap_delta_is_exact_one_sided_bump(fsimm, market, menu):
    """The swap deltas equal full revaluations with a +1bp bump on one zero pillar."""
    sw = menu["swap_15Y_ITM"]
    d, x = market.discount, market.forward
    zd, zx, v = fsimm.swap_zero_deltas(sw, 0.0, np.zeros(1), np.zeros(1))
    for k in (3, 9, 14):
        tk = d.pillar_times[k + 1]
        dfs = d.dfs.copy()
        dfs[k + 1] *= math.exp(-1e-4 * tk)
        bumped = swap_price_curves(sw, ZeroCurve("d", d.days, dfs), x)
        assert zd[0, k] == pytest.approx(bumped - v[0], rel=1e-8, abs=1e-6)


def test_unrelated_pillar_has_no_delta(fsimm, market, menu):
    sw = menu["swap_15Y_ATM"]
    zd, zx, _ = fsimm.swap_zero_deltas(sw, 0.0, np.zeros(1), np.zeros(1))
    far = fsimm.tau_d > 16.5
    assert not zd[0, far].any()


def test_swaption_reprice_delta_is_full_revaluation(model, market, simm_params, menu):
    from xva_engine.g2pp import G2ppModel
    from xva_engine.pricing import swaption_price_g2pp

    opt = menu["swaption_5x10_ATM"]
    rep = ForwardSimm(model, simm_params, curve_jacobian(market.discount, market.forward), n_nodes=256,
                      delta_method="reprice")
    z = np.zeros(1)
    _, zx, v0 = rep.swaption_zero_deltas(opt, 0.0, z, z)
    x = market.forward
    for k in (31, 36, 41):
        dfs = x.dfs.copy()
        dfs[k + 1] *= math.exp(-1e-4 * x.pillar_times[k + 1])
        bumped = G2ppModel(model.params, market.discount, ZeroCurve("x", x.days, dfs))
        assert zx[0, k] == pytest.approx(swaption_price_g2pp(opt, bumped) - v0[0], rel=1e-8)


def test_swaption_linear_delta_margin_close_to_reprice(model, market, simm_params, menu):
    """The gradient shortcut drops the second-order part of each one-sided bump."""
    opt = menu["swaption_5x10_ATM"]
    jac = curve_jacobian(market.discount, market.forward)
    lin = ForwardSimm(model, simm_params, jac, n_nodes=128)
    rep = ForwardSimm(model, simm_params, jac, n_nodes=128, delta_method="reprice")
    xs, ys = np.array([0.0, 0.004]), np.array([0.0, -0.002])
    a = lin.swaption_zero_deltas(opt, 1.0, xs, ys)
    b = rep.swaption_zero_deltas(opt, 1.0, xs, ys)
    assert np.allclose(a[0], b[0], rtol=1e-4, atol=1e-2)
    ma = delta_margin(*lin.to_simm(a[0], a[1]), simm_params)
    mb = delta_margin(*rep.to_simm(b[0], b[1]), simm_params)
    assert np.allclose(ma, mb, rtol=0.01)


def test_vega_needs_a_shock(model, market, simm_params, menu):
    f = ForwardSimm(model, simm_params, curve_jacobian(market.discount, market.forward), eps_sigma=0.0, eps_eta=0.0)
    with pytest.raises(ValueError):
        f.swaption_vega(menu["swaption_5x10_ATM"], 0.0, np.zeros(1), np.zeros(1))


def test_swap_with_zero_delta_has_zero_im(fsimm, menu):
    sw = menu["swap_15Y_ATM"]
    im = fsimm.swap_im(sw, sw.maturity, np.zeros(2), np.zeros(2))
    assert not im.any()


def test_swaption_after_expiry_is_delta_only(model, fsimm, menu):
    opt = menu["swaption_5x10_ATM"]
    g = grid_for(opt, "12M", "standard")
    times = simulation_times(opt, g)
    x, y = simulate(model.params, times, opt.underlying.maturity, 64, seed=1)
    blk = _PathBlock(model, opt, times, x, y, 64)
    t = g.primary[7]
    assert t > opt.expiry
    im, failed = blk.im(t, fsimm)
    xs, ys = blk.state(t)
    zd, zx, _ = fsimm.swap_zero_deltas(opt.underlying, t, xs, ys, blk.fixings)
    dd, dx = fsimm.to_simm(zd, zx)
    expected = delta_margin(dd, dx, fsimm.params) * blk.exercised
    assert np.allclose(im, expected, rtol=1e-12)
    assert not failed.any()
    assert np.all(im[~blk.exercised] == 0)
    assert CsaTerms.scheme("vm_im").im


def test_params_validation():
    p = SimmParams.from_csv()
    with pytest.raises(ValueError):
        SimmParams(p.risk_weights, p.correlation[:11, :11], p.scaling_table)
    with pytest.raises(ValueError):
        SimmParams(-p.risk_weights, p.correlation, p.scaling_table)
