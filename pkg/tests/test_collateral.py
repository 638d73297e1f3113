import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xva_engine.collateral import (
    CsaTerms,
    assemble_exposure,
    build_grids,
    im_posted,
    vm_path,
    vm_update,
)
from xva_engine.engine import coupon_days, grid_for, simulate_exposure

amounts = st.floats(-1e7, 1e7, allow_nan=False)
nonneg = st.floats(0, 1e7, allow_nan=False)


def test_standard_annual_grid_count(menu):
    g = grid_for(menu["swap_15Y_ATM"], "12M", "standard")
    assert len(g) == 16
    assert g.primary_days[0] == 0
    assert np.all(np.diff(g.primary_days) > 0)


def test_joint_grid_adds_a_point_after_each_coupon(menu):
    sw = menu["swap_15Y_ATM"]
    std = grid_for(sw, "1M", "standard")
    joint = grid_for(sw, "1M", "joint")
    assert set(std.primary_days) <= set(joint.primary_days)
    cd = coupon_days(sw)
    assert len(cd) == 30
    for c in cd[:-1]:
        assert np.any((joint.primary_days > c) & (joint.primary_days <= c + joint.lag_days))
    expected = np.union1d(std.primary_days, cd[:-1] + 1)
    assert np.array_equal(joint.primary_days, expected)


def test_daily_joint_equals_standard(menu):
    sw = menu["swap_15Y_ATM"]
    a = grid_for(sw, "1D", "joint")
    b = grid_for(sw, "1D", "standard")
    assert np.array_equal(a.primary_days, b.primary_days)


def test_lookback_grid():
    g = build_grids(400, "1M", "standard", lag_days=2)
    assert np.all(g.lookback_days[1:] < g.primary_days[1:])
    assert np.array_equal(g.lookback_days, np.maximum(g.primary_days - 2, 0))
    assert not g.margin_active[0] and not g.margin_active[-1]
    assert g.primary_days[-1] == 400


def test_grid_argument_validation():
    with pytest.raises(ValueError):
        build_grids(100, "2W")
    with pytest.raises(ValueError):
        build_grids(100, "1M", "weekly")
    with pytest.raises(ValueError):
        build_grids(100, "1M", lag_days=-1)


def test_csa_terms():
    assert CsaTerms.scheme("vm_im").name == "vm_im"
    assert CsaTerms.scheme("none").name == "none"
    with pytest.raises(ValueError):
        CsaTerms.scheme("full")
    with pytest.raises(ValueError):
        CsaTerms(k_vm=-1.0)


def test_vm_threshold_example():
    assert vm_update(0.0, 7e6, 5e6, 0.0) == pytest.approx(2e6)


def test_vm_full_tracking_without_threshold():
    assert vm_update(3.0, 4.5, 0.0, 0.0) == 4.5
    assert vm_update(-3.0, -4.5, 0.0, 0.0) == -4.5
    assert vm_update(3.0, -1.0, 0.0, 0.0) == -1.0


def test_vm_no_transfer_below_mta():
    assert vm_update(10.0, 10.5, 0.0, 1.0) == 10.0
    assert vm_update(-10.0, -10.5, 0.0, 1.0) == -10.0


def test_vm_infinite_mta_stays_zero():
    v = np.random.default_rng(0).normal(0, 1e6, (5, 12))
    active = np.ones(12, bool)
    active[[0, -1]] = False
    assert not vm_path(v, active, 0.0, np.inf, np.ones((5, 12))).any()


def test_vm_accrual_rolls_collateral():
    # no new call when the rolled balance already matches
    assert vm_update(0.99, 1.0, 0.0, 0.0, accrual=0.99) == pytest.approx(1.0)


def test_exposure_examples():
    assert assemble_exposure(10.0, 9.0, 0.5) == 0.5
    assert assemble_exposure(10.0, 9.0, 2.0) == 0.0
    assert assemble_exposure(-10.0, -9.0, 0.5) == -0.5
    assert assemble_exposure(5.0, 0.0, 0.0) == 5.0
    assert assemble_exposure(0.0, 3.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        assemble_exposure(1.0, 0.0, -1.0)


def test_im_threshold():
    assert im_posted(3e6, 5e6, 0.0) == 0.0
    assert im_posted(7e6, 5e6, 0.0) == 2e6
    assert im_posted(7e6, 5e6, 3e6) == 0.0


@given(v=amounts, vm=amounts, im=nonneg)
def test_exposure_sign_and_im_never_increase(v, vm, im):
    h = assemble_exposure(v, vm, im)
    h0 = assemble_exposure(v, vm, 0.0)
    assert abs(h) <= abs(h0)
    assert h == 0 or np.sign(h) == np.sign(v)
    assert assemble_exposure(v, v, im) == 0.0


@given(prev=amounts, v=amounts, k=nonneg, mta=nonneg)
def test_vm_update_properties(prev, v, k, mta):
    out = vm_update(prev, v, k, mta)
    # zero threshold and MTA means the collateral tracks the look-back value
    assert vm_update(prev, v, 0.0, 0.0) == pytest.approx(v, abs=1e-6)
    # with a threshold the collateral never exceeds the uncollateralised part
    if prev == 0.0:
        assert abs(out) <= max(abs(v) - k, 0.0) + 1e-6


@settings(max_examples=50, deadline=None)
@given(st.lists(amounts, min_size=3, max_size=20))
def test_vm_path_inactive_endpoints(vals):
    v = np.array(vals)[None, :]
    n = v.shape[1]
    active = np.ones(n, bool)
    active[[0, -1]] = False
    out = vm_path(v, active, 0.0, 0.0, np.ones_like(v))
    assert out[0, 0] == 0.0 and out[0, -1] == 0.0
    assert np.allclose(out[0, 1:-1], v[0, 1:-1])


def test_perfect_collateral_limit(model, menu):
    sw = menu["swap_15Y_ATM"]
    g = grid_for(sw, "3M", "standard", lag_days=0)
    cube = simulate_exposure(sw, model, g, CsaTerms(lag_days=0), 200, seed=5)
    assert not cube.h[:, 1:-1].any()
    assert np.array_equal(cube.h[:, 0], cube.v0[:, 0])


def test_cube_invariants_and_prefix(model, menu):
    sw = menu["swap_15Y_ATM"]
    g = grid_for(sw, "6M", "joint")
    cube = simulate_exposure(sw, model, g, CsaTerms.scheme("vm"), 300, seed=9, chunk=128)
    assert np.all(cube.im >= 0)
    assert np.all((cube.h == 0) | (np.sign(cube.h) == np.sign(cube.v0)))
    small = simulate_exposure(sw, model, g, CsaTerms.scheme("vm"), 100, seed=9)
    head = cube.head(100)
    assert np.array_equal(head.h, small.h)
    assert np.array_equal(head.deflator, small.deflator)
    with pytest.raises(ValueError):
        cube.head(0)


def test_threads_do_not_change_results(model, menu):
    sw = menu["swap_15Y_OTM"]
    g = grid_for(sw, "6M", "joint")
    a = simulate_exposure(sw, model, g, CsaTerms.scheme("vm"), 400, seed=2, chunk=100, threads=1)
    b = simulate_exposure(sw, model, g, CsaTerms.scheme("vm"), 400, seed=2, chunk=100, threads=4)
    assert np.array_equal(a.h, b.h)
