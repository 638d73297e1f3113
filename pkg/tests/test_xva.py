import csv
from pathlib import Path

import numpy as np
import pytest

from xva_engine.collateral import CsaTerms, ExposureCube, build_grids
from xva_engine.engine import grid_for, simulate_exposure
from xva_engine.marketdata import ZeroCurve, bootstrap_cds
from xva_engine.xva import (
    FrameworkFamily,
    analytical_swap_xva,
    bound_width_slope,
    convergence_study,
    credit_weights,
    cva_dva,
    epe_ene,
    mori_ava,
)

FLAT = ZeroCurve("d", np.array([0, 36500]), np.array([1.0, 1.0]))


def load_family(name):
    rows = [r for r in csv.DictReader(open(Path(__file__).parent / "data" / "ava_families.csv")) if r["family"] == name]
    labels = [r["label"] for r in rows]
    values = np.array([float(r["xva"]) for r in rows])
    marks = {r["mark"]: i for i, r in enumerate(rows) if r["mark"]}
    return FrameworkFamily(labels, values, marks["target"]), marks["prudent"]


class _Credit:
    """Deterministic survival / default-increment stub."""

    def __init__(self, surv, incr):
        self._s, self._q = np.asarray(surv, float), np.asarray(incr, float)

    def survival(self, t):
        return self._s.copy()

    def default_increments(self, t):
        return self._q.copy()


def _cube(h, days=(0, 30, 60)):
    g = build_grids(days[-1], "1M", "standard")
    h = np.asarray(h, float)
    z = np.zeros_like(h)
    return ExposureCube(g, h, z, z, h, None, np.arange(h.shape[0]))


def test_epe_ene_examples():
    p = epe_ene(_cube([[0, 10, 0], [0, -10, 0]]), FLAT)
    assert p.epe[1] == 5.0 and p.ene[1] == -5.0
    assert epe_ene(_cube(np.zeros((4, 3))), FLAT).epe.sum() == 0.0
    single = epe_ene(_cube([[0, 3.0, -2.0]]), FLAT)
    assert list(single.epe) == [0, 3.0, 0] and list(single.ene) == [0, 0, -2.0]


def test_epe_uses_path_deflators():
    cube = _cube([[0, 10, 0], [0, 20, 0]])
    cube.deflator = np.array([[1, 0.5, 1], [1, 0.25, 1]])
    assert epe_ene(cube).epe[1] == pytest.approx((5 + 5) / 2)
    cube.deflator = None
    with pytest.raises(ValueError):
        epe_ene(cube)


def test_cva_single_term():
    p = epe_ene(_cube([[0, 10, 0], [0, 30, -8]]), FLAT)
    q = np.array([0.0, 0.0, 0.02])
    bank, cpty = _Credit([1, 1, 1], q), _Credit([1, 1, 1], [0, 0.01, 0])
    r = cva_dva(p, bank, cpty, lgd_bank=0.6, lgd_cpty=0.5)
    assert r.cva == pytest.approx(-0.5 * 20 * 0.01)
    assert r.dva == pytest.approx(-0.6 * (-4) * 0.02)
    zero = cva_dva(p, bank, cpty, 0.0, 0.0)
    assert zero.cva == 0 and zero.dva == 0


def test_bounds_bracket_the_estimate(rng):
    p = epe_ene(_cube(rng.normal(0, 5, (200, 3))), FLAT)
    ep_lb, ep_ub, en_lb, en_ub = p.bounds()
    assert np.all(ep_lb <= p.epe) and np.all(p.epe <= ep_ub)
    assert np.all(en_lb <= p.ene) and np.all(p.ene <= en_ub)
    c = _Credit([1, 0.99, 0.98], [0, 0.01, 0.01])
    r = cva_dva(p, c, c)
    assert r.cva_lb <= r.cva <= r.cva_ub
    assert r.dva_lb <= r.dva <= r.dva_ub
    assert r.cva <= 0 <= r.dva


def test_credit_weights_skip_t0(market):
    t = np.array([0.0, 0.5, 1.0])
    w = credit_weights(t, market.credit["B"], market.credit["C"])
    assert w[0] == 0.0 and np.all(w[1:] > 0)


def test_mc_signs_on_menu_swap(market, model, menu):
    sw = menu["swap_15Y_OTM"]
    cube = simulate_exposure(sw, model, grid_for(sw, "6M", "joint"), CsaTerms.scheme("none"), 500, seed=3)
    r = cva_dva(epe_ene(cube), market.credit["B"], market.credit["C"])
    assert r.cva < 0 < r.dva
    assert r.cva_lb < r.cva < r.cva_ub


def test_analytical_rejects_swaption_and_collateral(market, model, menu):
    t = np.array([0.0, 1.0])
    b, c = market.credit["B"], market.credit["C"]
    with pytest.raises(TypeError):
        analytical_swap_xva(menu["swaption_5x10_ATM"], model, t, b, c)
    with pytest.raises(TypeError):
        analytical_swap_xva(menu["swap_15Y_ATM"], model, t, b, c, csa=CsaTerms.scheme("vm"))
    with pytest.raises(ValueError):
        analytical_swap_xva(menu["swap_15Y_ATM"], model, t, b, c, method="black")


def test_analytical_zero_default_gives_zero(market, model, menu):
    sw = menu["swap_15Y_ATM"]
    g = grid_for(sw, "12M", "standard")
    safe = bootstrap_cds("Z", [365, 3650, 7300], [0.0, 0.0, 0.0], market.discount)
    r = analytical_swap_xva(sw, model, g.primary, market.credit["B"], safe)
    assert r.cva == 0.0
    assert r.dva > 0


def test_coterminal_strip_at_last_date_is_zero(model, menu):
    from xva_engine.xva import coterminal_strip

    sw = menu["swap_15Y_ATM"]
    v = coterminal_strip(sw, model, [0.0, sw.maturity], 1)
    assert list(v) == [0.0, 0.0]


def test_convergence_ladder_shares_paths(market, model, menu):
    sw = menu["swap_15Y_ATM"]
    csa = CsaTerms.scheme("none")
    b, c = market.credit["B"], market.credit["C"]
    g = grid_for(sw, "6M", "joint")
    big = simulate_exposure(sw, model, g, csa, 1000, seed=42)
    small = simulate_exposure(sw, model, g, csa, 250, seed=42)
    assert np.array_equal(big.head(250).h, small.h)

    def run(n, step, kind):
        return cva_dva(epe_ene(big.head(n)), b, c)

    rows = convergence_study(run, (125, 250, 500, 1000), (("6M", "joint"),))
    assert rows[-1].cva_diff_pct == 0.0
    assert all(r.result.seconds >= 0 for r in rows)
    assert -0.9 < bound_width_slope(rows) < -0.1


@pytest.mark.parametrize("name,expected", [("swap", 2849.0), ("swaption", 4135.0)])
def test_mori_ava_on_published_families(name, expected):
    fam, prudent_row = load_family(name)
    assert fam.values.size == {"swap": 38, "swaption": 28}[name]
    assert mori_ava(fam) == expected
    assert fam.prudent() == fam.values[prudent_row]


def test_mori_ava_degenerate_cases():
    assert mori_ava(FrameworkFamily(["M"], [-5.0], 0)) == 0.0
    with pytest.raises(ValueError):
        FrameworkFamily([], [], 0)
    with pytest.raises(ValueError):
        FrameworkFamily(["a", "b"], [1.0, 2.0], 5)


def test_prudent_rank():
    for n, k in ((1, 1), (9, 1), (10, 1), (20, 2), (28, 2), (38, 3), (100, 10)):
        fam = FrameworkFamily([str(i) for i in range(n)], np.arange(n, dtype=float), 0)
        assert fam.prudent_index() == k - 1
    fam = FrameworkFamily(list("abcdefghijklmnopqrst"), np.linspace(-10, 9, 20), 15)
    assert mori_ava(fam) >= 0
