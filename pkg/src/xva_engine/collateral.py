"""Valuation and margin-period-of-risk grids, variation margin and collateralised exposure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dates as dt

GRID_STEPS = {"1D": 0, "1M": 1, "3M": 3, "6M": 6, "12M": 12}
GRID_KINDS = ("standard", "joint", "daily")


@dataclass(frozen=True)
class TimeGridPair:
    """Primary valuation days and their look-back (collateral) days, both from t0."""

    primary_days: np.ndarray
    lookback_days: np.ndarray
    step: str
    kind: str
    lag_days: int

    @property
    def primary(self) -> np.ndarray:
        return self.primary_days / dt.DAYS_PER_YEAR

    @property
    def lookback(self) -> np.ndarray:
        return self.lookback_days / dt.DAYS_PER_YEAR

    @property
    def margin_active(self) -> np.ndarray:
        """Steps where collateral exists: not t0, not maturity, and look-back after t0."""
        act = (self.primary_days - self.lag_days) > 0
        act[0] = False
        act[-1] = False
        return act

    def __len__(self) -> int:
        return len(self.primary_days)


def build_grids(maturity_days: int, step: str = "1M", kind: str = "joint", coupon_days=(), lag_days: int = 2,
                valuation=dt.VALUATION_DATE) -> TimeGridPair:
    """Evenly spaced calendar grid up to maturity, optionally augmented with coupon+1d points."""
    if step not in GRID_STEPS:
        raise ValueError(f"grid step must be one of {sorted(GRID_STEPS)}")
    if kind not in GRID_KINDS:
        raise ValueError(f"grid kind must be one of {GRID_KINDS}")
    if lag_days < 0:
        raise ValueError("margin period of risk must be non-negative")
    maturity_days = int(round(maturity_days))
    months = GRID_STEPS[step]
    if kind == "daily" or months == 0:
        pts = np.arange(0, maturity_days + 1)
        step = "1D"
    else:
        pts, k = [], 0
        while True:
            d = dt.day_offset(dt.add_months(valuation, k * months), valuation)
            if d >= maturity_days:
                break
            pts.append(d)
            k += 1
        pts = np.array(pts + [maturity_days])
    if kind == "joint":
        extra = np.asarray(coupon_days, dtype=np.int64) + 1
        pts = np.concatenate((pts, extra[(extra > 0) & (extra < maturity_days)]))
    primary = np.unique(pts.astype(np.int64))
    lookback = np.maximum(primary - lag_days, 0)
    return TimeGridPair(primary, lookback, step, "daily" if step == "1D" else kind, int(lag_days))


@dataclass(frozen=True)
class CsaTerms:
    k_vm: float = 0.0
    mta_vm: float = 0.0
    k_im: float = 0.0
    mta_im: float = 0.0
    lag_days: int = 2
    vm: bool = True
    im: bool = False

    def __post_init__(self):
        if min(self.k_vm, self.mta_vm, self.k_im, self.mta_im) < 0 or self.lag_days < 0:
            raise ValueError("CSA amounts and lag must be non-negative")

    @classmethod
    def scheme(cls, name: str, **kw) -> "CsaTerms":
        if name == "none":
            return cls(vm=False, im=False, **kw)
        if name == "vm":
            return cls(vm=True, im=False, **kw)
        if name == "vm_im":
            return cls(vm=True, im=True, **kw)
        raise ValueError("collateral scheme must be none, vm or vm_im")

    @property
    def name(self) -> str:
        return "vm_im" if self.im else ("vm" if self.vm else "none")


def _pos(a):
    return np.maximum(a, 0.0)


def _neg(a):
    return np.minimum(a, 0.0)


def vm_update(prev_vm, v_lookback, k_vm: float, mta_vm: float, accrual=1.0):
    """One step of the variation-margin recursion.

    ``accrual`` is the discount factor over the previous look-back interval;
    dividing by it rolls the posted collateral forward.
    """
    hat = np.asarray(prev_vm, float) / accrual
    tgt_up, tgt_dn = _pos(v_lookback - k_vm), _neg(v_lookback + k_vm)
    up = tgt_up - _pos(hat)
    dn = tgt_dn - _neg(hat)
    # a transfer replaces the branch outright, which keeps full tracking exact in floating point
    return (np.where(np.abs(up) > mta_vm, tgt_up, _pos(hat))
            + np.where(np.abs(dn) > mta_vm, tgt_dn, _neg(hat)))


def vm_path(v_lookback: np.ndarray, active: np.ndarray, k_vm: float, mta_vm: float, accrual: np.ndarray):
    """Run the recursion along steps (last axis); inactive steps hold zero VM."""
    v = np.asarray(v_lookback, float)
    out = np.zeros_like(v)
    prev = np.zeros(v.shape[:-1])
    for i in range(v.shape[-1]):
        if not active[i]:
            prev = np.zeros(v.shape[:-1])
            continue
        prev = vm_update(prev, v[..., i], k_vm, mta_vm, accrual[..., i])
        out[..., i] = prev
    return out


def im_posted(im, k_im: float, mta_im: float):
    excess = _pos(np.asarray(im, float) - k_im)
    return np.where(excess > mta_im, excess, 0.0)


def assemble_exposure(v0, vm, im):
    """Collateralised exposure: positive branch [V-VM-IM]^+, negative branch [V-VM+IM]^-."""
    v0, vm, im = (np.asarray(a, float) for a in (v0, vm, im))
    if np.any(im < 0):
        raise ValueError("initial margin must be non-negative")
    return np.where(v0 > 0, _pos(v0 - vm - im), np.where(v0 < 0, _neg(v0 - vm + im), 0.0))


@dataclass
class ExposureCube:
    """Per (path, primary step) values, collateral and exposure, plus path deflators."""

    grid: TimeGridPair
    v0: np.ndarray
    vm: np.ndarray
    im: np.ndarray
    h: np.ndarray
    deflator: np.ndarray
    path_ids: np.ndarray
    failed_vega: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.v0.shape[0]

    def head(self, n: int) -> "ExposureCube":
        """First ``n`` paths; identical to a fresh run with ``n`` paths and the same seed."""
        if not 0 < n <= self.n_paths:
            raise ValueError("prefix length out of range")
        fv = None if self.failed_vega is None else self.failed_vega[:n]
        return ExposureCube(self.grid, self.v0[:n], self.vm[:n], self.im[:n], self.h[:n], self.deflator[:n],
                            self.path_ids[:n], fv)
