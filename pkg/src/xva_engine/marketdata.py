"""Market snapshot: zero curves, CDS-implied credit curves, swaption quotes, curve Jacobians."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .dates import DAYS_PER_YEAR

DATA_ENV_VAR = "XVA_ENGINE_DATA"


class ExtrapolationError(ValueError):
    """Requested a discount factor beyond the last curve pillar."""


class BootstrapError(RuntimeError):
    pass


# --------------------------------------------------------------------------- zero curves


@dataclass(frozen=True)
class ZeroCurve:
    """Discount factors on integer day pillars, log-linear in ln P between pillars.

    Times passed to :meth:`discount` are ACT/365F year fractions from the
    valuation date.
    """

    curve_id: str
    days: np.ndarray
    dfs: np.ndarray

    def __post_init__(self):
        days = np.asarray(self.days, dtype=np.int64)
        dfs = np.asarray(self.dfs, dtype=float)
        if days.ndim != 1 or days.shape != dfs.shape or days.size < 2:
            raise ValueError("pillars must be two equal-length 1-D sequences")
        if days[0] != 0 or dfs[0] != 1.0:
            raise ValueError("first pillar must be (0, 1.0)")
        if np.any(np.diff(days) <= 0):
            raise ValueError("day offsets must be strictly increasing")
        if np.any(dfs <= 0):
            raise ValueError("discount factors must be positive")
        days.setflags(write=False)
        dfs.setflags(write=False)
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "dfs", dfs)
        object.__setattr__(self, "_t", days / DAYS_PER_YEAR)
        object.__setattr__(self, "_lnp", np.log(dfs))

    @property
    def pillar_times(self) -> np.ndarray:
        return self._t

    @property
    def horizon(self) -> float:
        return float(self._t[-1])

    def log_discount(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self._t[-1] + 1e-9):
            raise ExtrapolationError(
                f"curve {self.curve_id}: t outside [0, {self._t[-1]:.4f}]y (max requested {np.max(t):.4f})"
            )
        return np.interp(t, self._t, self._lnp)

    def discount(self, t):
        return np.exp(self.log_discount(t))

    def discount_days(self, days):
        return self.discount(np.asarray(days, dtype=float) / DAYS_PER_YEAR)

    def zero_rates(self) -> np.ndarray:
        """Continuously compounded pillar zero rates (pillar 0 carries the next one's value)."""
        z = np.empty_like(self._lnp)
        z[1:] = -self._lnp[1:] / self._t[1:]
        z[0] = z[1]
        return z

    @classmethod
    def from_zero_rates(cls, curve_id: str, days, zero_rates) -> "ZeroCurve":
        days = np.asarray(days, dtype=np.int64)
        dfs = np.exp(-np.asarray(zero_rates, dtype=float) * days / DAYS_PER_YEAR)
        dfs[0] = 1.0
        return cls(curve_id, days, dfs)

    @classmethod
    def from_csv(cls, path, curve_id: str | None = None) -> "ZeroCurve":
        path = Path(path)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        days = [int(r["day_offset"]) for r in rows]
        dfs = [float(r["discount_factor"]) for r in rows]
        return cls(curve_id or path.stem, np.array(days), np.array(dfs))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write("day_offset,discount_factor\n")
            for d, p in zip(self.days, self.dfs):
                fh.write(f"{int(d)},{float(p)!r}\n")


def simple_forward_rate(curve: ZeroCurve, t1, t2, tau):
    """(P(0,t1)/P(0,t2) - 1) / tau."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t1 >= t2):
        raise ValueError("forward rate needs t1 < t2")
    return (np.exp(curve.log_discount(t1) - curve.log_discount(t2)) - 1.0) / tau


# --------------------------------------------------------------------------- credit


@dataclass(frozen=True)
class CreditCurve:
    """Piecewise-constant hazard curve bootstrapped from par CDS spreads.

    ``knots`` holds the segment end times in years; the last hazard is
    extrapolated flat.
    """

    party_id: str
    pillar_days: np.ndarray
    spreads_bps: np.ndarray
    recovery: float
    knots: np.ndarray
    hazards: np.ndarray

    def _cum_hazard(self, t):
        t = np.asarray(t, dtype=float)
        edges = np.concatenate(([0.0], self.knots))
        seg = np.clip(t[..., None], edges[:-1], np.concatenate((edges[1:-1], [np.inf])))
        widths = seg - edges[:-1]
        return np.sum(np.maximum(widths, 0.0) * self.hazards, axis=-1)

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("survival requested at negative time")
        return np.exp(-self._cum_hazard(t))

    def default_increments(self, times) -> np.ndarray:
        """Q(t_{i-1} < tau <= t_i) for consecutive grid points; first entry is 0."""
        s = self.survival(times)
        return np.concatenate(([0.0], s[:-1] - s[1:]))

    @property
    def lgd(self) -> float:
        return 1.0 - self.recovery


def _cds_legs(t_end, spread, hazard_fn, ois: ZeroCurve, steps_per_quarter=13):
    """Premium (per unit spread) and protection PVs of a CDS from 0 to t_end."""
    n_q = max(1, int(np.ceil(t_end * 4 - 1e-9)))
    pay = np.linspace(0.0, t_end, n_q + 1)
    fine = np.linspace(0.0, t_end, n_q * steps_per_quarter + 1)
    s_fine = np.exp(-hazard_fn(fine))
    mids = 0.5 * (fine[1:] + fine[:-1])
    p_mid = ois.discount(mids)
    dq = s_fine[:-1] - s_fine[1:]
    protection = np.sum(p_mid * dq)
    s_pay = np.exp(-hazard_fn(pay[1:]))
    tau = np.diff(pay) * DAYS_PER_YEAR / 360.0
    annuity = np.sum(tau * ois.discount(pay[1:]) * s_pay)
    period_start = pay[np.searchsorted(pay, mids, side="right") - 1]
    accrued = np.sum((mids - period_start) * DAYS_PER_YEAR / 360.0 * p_mid * dq)
    return annuity + accrued, protection


def bootstrap_cds(
    party_id: str,
    pillar_days,
    spreads_bps,
    ois: ZeroCurve,
    recovery: float = 0.4,
) -> CreditCurve:
    """Sequential piecewise-constant hazard bootstrap with a quarterly premium leg."""
    days = np.asarray(pillar_days, dtype=np.int64)
    spreads = np.asarray(spreads_bps, dtype=float)
    if np.any(np.diff(days) <= 0):
        raise ValueError("CDS pillars must be increasing")
    if np.any(spreads < 0):
        raise ValueError("negative CDS spread")
    if not 0.0 <= recovery < 1.0:
        raise ValueError("recovery must lie in [0, 1)")
    knots = days / DAYS_PER_YEAR
    hazards = np.zeros(len(days))
    lgd = 1.0 - recovery

    def cum(t, hz):
        edges = np.concatenate(([0.0], knots))
        t = np.asarray(t, dtype=float)
        seg = np.clip(t[..., None], edges[:-1], np.concatenate((edges[1:-1], [np.inf])))
        return np.sum((seg - edges[:-1]) * hz, axis=-1)

    for k, (t_end, s) in enumerate(zip(knots, spreads / 1e4)):
        if s == 0.0:
            hazards[k] = 0.0
            continue

        def value(h):
            hz = hazards.copy()
            hz[k:] = h
            prem, prot = _cds_legs(t_end, s, lambda t: cum(t, hz), ois)
            return s * prem - lgd * prot

        lo, hi = 0.0, 5.0
        if value(lo) * value(hi) > 0:
            raise BootstrapError(f"{party_id}: no hazard rate reprices the {days[k]}d CDS")
        hazards[k] = brentq(value, lo, hi, xtol=1e-15, rtol=1e-13)
        hazards[k + 1 :] = hazards[k]
        if hazards[k] < 0:
            raise BootstrapError(f"{party_id}: negative hazard at the {days[k]}d pillar")
    return CreditCurve(party_id, days, spreads, recovery, knots, hazards)


# --------------------------------------------------------------------------- swaption quotes


@dataclass(frozen=True)
class SwaptionQuoteMatrix:
    expiries: np.ndarray
    tenors: np.ndarray
    straddles: np.ndarray  # EUR per 10 000 notional
    settlement: str = "physical"

    def __post_init__(self):
        if self.straddles.shape != (len(self.expiries), len(self.tenors)):
            raise ValueError("quote matrix shape does not match its axes")
        if np.any(self.straddles <= 0):
            raise ValueError("swaption quotes must be positive")

    def payer_prices(self, notional: float = 1e4) -> np.ndarray:
        """One-sided ATM price: half the straddle, rescaled to ``notional``."""
        return 0.5 * self.straddles * notional / 1e4

    @classmethod
    def from_csv(cls, path) -> "SwaptionQuoteMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [(float(r["expiry_y"]), float(r["tenor_y"]), float(r["straddle_per_10k"])) for r in csv.DictReader(fh)]
        exps = sorted({r[0] for r in rows})
        tens = sorted({r[1] for r in rows})
        mat = np.full((len(exps), len(tens)), np.nan)
        for e, t, v in rows:
            mat[exps.index(e), tens.index(t)] = v
        if np.isnan(mat).any():
            raise ValueError("incomplete swaption quote matrix")
        return cls(np.array(exps), np.array(tens), mat)


# --------------------------------------------------------------------------- bundle


@dataclass(frozen=True)
class MarketData:
    discount: ZeroCurve
    forward: ZeroCurve
    credit: dict = field(default_factory=dict)
    swaptions: SwaptionQuoteMatrix | None = None

    def curve(self, curve_id: str) -> ZeroCurve:
        return {"d": self.discount, "x": self.forward}[curve_id]


def default_data_dir() -> Path:
    env = os.environ.get(DATA_ENV_VAR)
    if env:
        return Path(env)
    return Path(str(resources.files("xva_engine") / "data"))


def load_cds(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([int(r["day_offset"]) for r in rows]), np.array([float(r["spread_bps"]) for r in rows])


def load_market(data_dir=None, recovery: dict | None = None) -> MarketData:
    """Read curves, CDS quotes and swaption straddles from a fixture directory."""
    root = Path(data_dir) if data_dir else default_data_dir()
    d = ZeroCurve.from_csv(root / "curves" / "d.csv", "d")
    x = ZeroCurve.from_csv(root / "curves" / "x.csv", "x")
    recovery = recovery or {}
    credit = {}
    for f in sorted((root / "cds").glob("*.csv")):
        days, spreads = load_cds(f)
        credit[f.stem] = bootstrap_cds(f.stem, days, spreads, d, recovery.get(f.stem, 0.4))
    quotes_path = root / "swaptions_atm.csv"
    quotes = SwaptionQuoteMatrix.from_csv(quotes_path) if quotes_path.exists() else None
    return MarketData(d, x, credit, quotes)


# --------------------------------------------------------------------------- Jacobian


@dataclass(frozen=True)
class CurveJacobian:
    """J[j, k] = dZ_k / dR_j for the discount (dd), forward (xx) and cross (xd) blocks.

    The cross block maps discount-curve quotes onto forward-curve zero rates.
    Rows and columns follow the curves' pillars excluding the day-0 pillar.
    """

    dd: np.ndarray
    xx: np.ndarray
    xd: np.ndarray
    mode: str

    @classmethod
    def identity(cls, d: ZeroCurve, x: ZeroCurve) -> "CurveJacobian":
        nd, nx = len(d.days) - 1, len(x.days) - 1
        return cls(np.eye(nd), np.eye(nx), np.zeros((nd, nx)), "identity")


def _stub_schedule(t_end: float, step: float) -> np.ndarray:
    """Dates 0 < ... < t_end spaced by ``step`` backwards from t_end (short front stub)."""
    n = int(np.floor(t_end / step + 1e-9))
    dates = t_end - step * np.arange(n, -1, -1)
    dates = dates[dates > 1e-9]
    return np.concatenate(([0.0], dates))


def _discount_quote(curve_t, curve_lnp, t_end):
    def disc(t):
        return np.exp(np.interp(t, curve_t, curve_lnp))

    if t_end <= 1.0 + 1e-9:
        return (1.0 / disc(t_end) - 1.0) / t_end
    s = _stub_schedule(t_end, 1.0)
    ann = np.sum(np.diff(s) * disc(s[1:]))
    return (1.0 - disc(t_end)) / ann


def _forward_quote(d_t, d_lnp, x_t, x_lnp, t_end):
    def pd(t):
        return np.exp(np.interp(t, d_t, d_lnp))

    def px(t):
        return np.exp(np.interp(t, x_t, x_lnp))

    if t_end <= 0.5 + 1e-9:
        return (1.0 / px(t_end) - 1.0) / t_end
    fl = _stub_schedule(t_end, 0.5)
    fx = _stub_schedule(t_end, 1.0)
    float_leg = np.sum(pd(fl[1:]) * (px(fl[:-1]) / px(fl[1:]) - 1.0))
    ann = np.sum(np.diff(fx) * pd(fx[1:]))
    return float_leg / ann


class SyntheticQuotes:
    """Par instruments derived from the zero curves and the matching bootstrap."""

    def __init__(self, d: ZeroCurve, x: ZeroCurve):
        self.d, self.x = d, x
        self.d_t, self.x_t = d.pillar_times, x.pillar_times

    def quotes(self, d_lnp, x_lnp):
        rd = np.array([_discount_quote(self.d_t, d_lnp, t) for t in self.d_t[1:]])
        rx = np.array([_forward_quote(self.d_t, d_lnp, self.x_t, x_lnp, t) for t in self.x_t[1:]])
        return rd, rx

    def _solve(self, times, quote_fn, target, lnp, start):
        lnp = lnp.copy()
        for k in range(start, len(times)):
            def err(v, k=k):
                trial = lnp.copy()
                trial[k:] = v  # flat beyond the solved pillar keeps later dates defined
                return quote_fn(trial, times[k]) - target[k - 1]

            guess = lnp[k]
            lo, hi = guess - 0.05, guess + 0.05
            try:
                lnp[k] = brentq(err, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
            except ValueError as exc:
                raise BootstrapError(f"synthetic bootstrap failed at pillar {k}") from exc
        return lnp

    def bootstrap(self, rd, rx, start_d=1, start_x=1, d_lnp0=None, x_lnp0=None):
        d_lnp0 = self.d._lnp if d_lnp0 is None else d_lnp0
        x_lnp0 = self.x._lnp if x_lnp0 is None else x_lnp0
        d_lnp = self._solve(self.d_t, lambda l, t: _discount_quote(self.d_t, l, t), rd, d_lnp0, start_d)
        x_lnp = self._solve(
            self.x_t, lambda l, t: _forward_quote(self.d_t, d_lnp, self.x_t, l, t), rx, x_lnp0, start_x
        )
        return d_lnp, x_lnp


def curve_jacobian(d: ZeroCurve, x: ZeroCurve, mode: str = "identity", bump: float = 0.5e-4) -> CurveJacobian:
    """Zero-rate sensitivities to par quotes, frozen at the valuation date.

    ``identity`` treats the zero pillars themselves as quotes. ``synthetic``
    derives par OIS and 6M swap quotes from the curves and re-bootstraps
    under symmetric quote bumps.
    """
    if mode == "identity":
        return CurveJacobian.identity(d, x)
    if mode != "synthetic":
        raise ValueError(f"unknown jacobian mode {mode!r}")
    sq = SyntheticQuotes(d, x)
    rd, rx = sq.quotes(d._lnp, x._lnp)
    zd = lambda l: -l[1:] / sq.d_t[1:]  # noqa: E731
    zx = lambda l: -l[1:] / sq.x_t[1:]  # noqa: E731
    nd, nx = len(rd), len(rx)
    dd, xx, xd = np.zeros((nd, nd)), np.zeros((nx, nx)), np.zeros((nd, nx))
    for j in range(nd):
        out = []
        for sgn in (1.0, -1.0):
            r = rd.copy()
            r[j] += sgn * bump
            out.append(sq.bootstrap(r, rx, start_d=j + 1))
        dd[j] = (zd(out[0][0]) - zd(out[1][0])) / (2 * bump)
        xd[j] = (zx(out[0][1]) - zx(out[1][1])) / (2 * bump)
    for j in range(nx):
        out = []
        for sgn in (1.0, -1.0):
            r = rx.copy()
            r[j] += sgn * bump
            out.append(sq.bootstrap(rd, r, start_d=len(sq.d_t), start_x=j + 1)[1])
        xx[j] = (zx(out[0]) - zx(out[1])) / (2 * bump)
    return CurveJacobian(dd, xx, xd, "synthetic")
