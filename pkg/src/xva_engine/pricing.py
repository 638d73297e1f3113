"""Swap and European swaption valuation: curve-based at t0, state-based on G2++ paths, shifted Black."""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from . import dates as dt
from .g2pp import B, G2ppModel, cholesky_2x2, transition_moments
from .marketdata import SwaptionQuoteMatrix, ZeroCurve, simple_forward_rate

# --------------------------------------------------------------------------- instruments


@dataclass(frozen=True)
class SwapSpec:
    """Fixed-vs-EURIBOR swap; ``omega`` = +1 pays fixed.

    Times are ACT/365F year fractions from the valuation date. The forward
    accrual used for projection equals the float accrual.
    """

    notional: float
    omega: int
    strike: float
    float_times: np.ndarray
    fixed_times: np.ndarray
    tau_float: np.ndarray
    tau_fixed: np.ndarray
    name: str = ""

    def __post_init__(self):
        for attr in ("float_times", "fixed_times", "tau_float", "tau_fixed"):
            arr = np.asarray(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        if self.omega not in (1, -1):
            raise ValueError("omega must be +1 or -1")
        T, S = self.float_times, self.fixed_times
        if np.any(np.diff(T) <= 0) or np.any(np.diff(S) <= 0):
            raise ValueError("schedules must be strictly increasing")
        if abs(T[0] - S[0]) > 1e-12 or abs(T[-1] - S[-1]) > 1e-12:
            raise ValueError("fixed and float legs must share start and end dates")
        if len(self.tau_float) != len(T) - 1 or len(self.tau_fixed) != len(S) - 1:
            raise ValueError("one accrual per period required")

    @property
    def start(self) -> float:
        return float(self.float_times[0])

    @property
    def maturity(self) -> float:
        return float(self.float_times[-1])

    @property
    def tau_forward(self) -> np.ndarray:
        return self.tau_float

    def with_strike(self, strike: float) -> "SwapSpec":
        return replace(self, strike=float(strike))

    def with_omega(self, omega: int) -> "SwapSpec":
        return replace(self, omega=int(omega))


@dataclass(frozen=True)
class SwaptionSpec:
    """Physically settled European option to enter ``underlying`` at ``expiry``."""

    underlying: SwapSpec
    expiry: float
    shift: float = 0.06
    name: str = ""

    def __post_init__(self):
        if self.expiry > self.underlying.start + 1e-12:
            raise ValueError("swaption expiry must not follow the swap start")

    @property
    def maturity(self) -> float:
        return self.underlying.maturity


def make_swap(
    tenor_months: int,
    strike: float,
    omega: int = 1,
    notional: float = 1e8,
    start_months: int = 0,
    valuation: date = dt.VALUATION_DATE,
    float_months: int = 6,
    fixed_months: int = 12,
    float_dc: str = "ACT/360",
    fixed_dc: str = "30/360",
    roll: str = "modifiedfollowing",
    name: str = "",
) -> SwapSpec:
    start = dt.adjust(dt.add_months(valuation, start_months), roll)
    fl = dt.schedule(dt.add_months(valuation, start_months), tenor_months, float_months, roll)
    fx = dt.schedule(dt.add_months(valuation, start_months), tenor_months, fixed_months, roll)
    assert fl[0] == start
    to_t = lambda ds: np.array([dt.day_offset(d, valuation) for d in ds]) / dt.DAYS_PER_YEAR  # noqa: E731
    return SwapSpec(
        notional=float(notional),
        omega=int(omega),
        strike=float(strike),
        float_times=to_t(fl),
        fixed_times=to_t(fx),
        tau_float=np.array([dt.accrual(a, b, float_dc) for a, b in zip(fl[:-1], fl[1:])]),
        tau_fixed=np.array([dt.accrual(a, b, fixed_dc) for a, b in zip(fx[:-1], fx[1:])]),
        name=name,
    )


def instrument_menu(notional: float = 1e8) -> dict:
    """The twelve trades studied: 15Y and 30Y swaps, 5x10 forward swaps and swaptions."""
    menu = {}
    for label, months, rows in (
        ("15Y", 180, ((1, 0.0167, "OTM"), (1, 0.0117, "ATM"), (1, 0.0067, "ITM"))),
        ("30Y", 360, ((1, 0.0188, "OTM"), (1, 0.0138, "ATM"), (1, 0.0088, "ITM"))),
    ):
        for omega, k, mny in rows:
            name = f"swap_{label}_{mny}"
            menu[name] = make_swap(months, k, omega, notional, name=name)
    fwd_rows = ((-1, 0.0120, "OTM_rec"), (1, 0.0170, "ATM"), (1, 0.0220, "OTM_pay"))
    for omega, k, mny in fwd_rows:
        name = f"fwdswap_5x10_{mny}"
        menu[name] = make_swap(120, k, omega, notional, start_months=60, name=name)
    for omega, k, mny in fwd_rows:
        name = f"swaption_5x10_{mny}"
        und = make_swap(120, k, omega, notional, start_months=60, name=name + "_underlying")
        menu[name] = SwaptionSpec(und, und.start, name=name)
    return menu


# --------------------------------------------------------------------------- curve-based pricing


def annuity_curves(spec: SwapSpec, d: ZeroCurve) -> float:
    return float(np.sum(spec.tau_fixed * d.discount(spec.fixed_times[1:])))


def float_leg_curves(spec: SwapSpec, d: ZeroCurve, x: ZeroCurve) -> float:
    T = spec.float_times
    fwd = simple_forward_rate(x, T[:-1], T[1:], spec.tau_forward)
    return float(np.sum(d.discount(T[1:]) * fwd * spec.tau_float))


def par_rate(spec: SwapSpec, d: ZeroCurve, x: ZeroCurve) -> float:
    return float_leg_curves(spec, d, x) / annuity_curves(spec, d)


def swap_price_curves(spec: SwapSpec, d: ZeroCurve, x: ZeroCurve) -> float:
    """Valuation-date swap price from the initial curves."""
    return spec.omega * spec.notional * (float_leg_curves(spec, d, x) - spec.strike * annuity_curves(spec, d))


# --------------------------------------------------------------------------- state-based swap


def fixing_from_state(model: G2ppModel, t_reset: float, t_pay: float, x, y):
    """Float coupon per unit notional, 1/P_x(T_{j-1}, T_j) - 1, fixed at ``t_reset``."""
    if t_reset <= 0.0:
        fwd = model.forward
        return np.full(np.shape(x), np.exp(fwd.log_discount(0.0) - fwd.log_discount(t_pay)) - 1.0)
    return 1.0 / model.zcb("x", t_reset, np.array([t_pay]), x, y)[..., 0] - 1.0


def swap_fixings(spec: SwapSpec, model: G2ppModel, state_at) -> np.ndarray:
    """Coupons of every float period from states at reset dates.

    ``state_at(t)`` returns the (x, y) arrays at time ``t``; resets in the past
    of the valuation date use the initial curve.
    """
    T = spec.float_times
    cols = []
    for j in range(1, len(T)):
        xs, ys = state_at(T[j - 1]) if T[j - 1] > 0 else state_at(0.0)
        cols.append(fixing_from_state(model, T[j - 1], T[j], xs, ys))
    return np.stack(cols, axis=-1)


@dataclass
class SwapState:
    """Decomposition of a swap price at time t into per-date present values.

    ``pay_times``/``pay_pv``: signed PVs (per unit notional, before omega) of
    each payment, i.e. the quantities scaled by a discount-curve bump.
    ``proj_start``/``proj_end``/``proj_pv``: psi * P_d(t, T_{j-1}) for projected
    float periods, the quantities scaled by a forward-curve bump.
    """

    t: float
    value: np.ndarray
    pay_times: np.ndarray
    pay_pv: np.ndarray
    proj_start: np.ndarray
    proj_end: np.ndarray
    proj_pv: np.ndarray
    scale: float


def swap_state(spec: SwapSpec, model: G2ppModel, t: float, x, y, fixings=None, eps: float = 1e-10) -> SwapState:
    """Mark-to-future of a swap on factor states at time ``t``.

    Payments falling exactly at ``t`` are still included; at or after the
    final payment the swap is worth zero.
    """
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    npath = x.shape[0]
    T, S = spec.float_times, spec.fixed_times
    scale = spec.omega * spec.notional
    empty = np.zeros((npath, 0))
    if t >= spec.maturity - eps:
        return SwapState(t, np.zeros(npath), np.zeros(0), empty, np.zeros(0), np.zeros(0), empty, scale)

    fut = np.nonzero(T[:-1] >= t - eps)[0]          # period j = idx + 1 not yet fixed
    inprog = np.nonzero((T[:-1] < t - eps) & (T[1:] >= t - eps))[0]
    fix_idx = np.nonzero(S[1:] >= t - eps)[0]

    need = np.unique(np.concatenate((T[fut], T[fut + 1], T[inprog + 1], S[fix_idx + 1])))
    need = np.maximum(need, t)
    pd = model.zcb("d", t, need, x, y)
    col = {v: i for i, v in enumerate(need)}
    lookup = lambda times: pd[:, [col[max(v, t)] for v in times]]  # noqa: E731

    psi = model.psi(T[fut], T[fut + 1]) if len(fut) else np.zeros(0)
    proj_pv = lookup(T[fut]) * psi if len(fut) else empty
    pay_fut = proj_pv - lookup(T[fut + 1]) if len(fut) else empty

    if len(inprog):
        if fixings is None:
            raise ValueError("in-progress float coupon needs its fixing")
        fx = np.asarray(fixings, float)
        fx = np.broadcast_to(fx, (npath, len(T) - 1))[:, inprog]
        pay_inprog = fx * lookup(T[inprog + 1])
    else:
        pay_inprog = empty
    pay_fixed = -spec.strike * spec.tau_fixed[fix_idx] * lookup(S[fix_idx + 1])

    pay_times = np.concatenate((T[fut + 1], T[inprog + 1], S[fix_idx + 1]))
    pay_pv = np.concatenate((pay_fut, pay_inprog, pay_fixed), axis=1)
    value = scale * pay_pv.sum(axis=1)
    return SwapState(t, value, pay_times, pay_pv, T[fut], T[fut + 1], proj_pv, scale)


def swap_price_state(spec: SwapSpec, model: G2ppModel, t: float = 0.0, x=0.0, y=0.0, fixings=None):
    v = swap_state(spec, model, t, x, y, fixings).value
    return float(v[0]) if np.ndim(x) == 0 else v


def forward_swap_rate_state(spec: SwapSpec, model: G2ppModel, t: float, x, y):
    """(forward swap rate, annuity) of a not-yet-started swap on factor states."""
    if spec.start < t - 1e-12:
        raise ValueError("forward swap rate needs an unstarted swap")
    T, S = spec.float_times, spec.fixed_times
    pdT = model.zcb("d", t, np.maximum(T, t), x, y)
    pdS = model.zcb("d", t, S[1:], x, y)
    psi = model.psi(T[:-1], T[1:])
    flt = np.sum(psi * pdT[..., :-1] - pdT[..., 1:], axis=-1)
    ann = np.sum(spec.tau_fixed * pdS, axis=-1)
    return flt / ann, ann


# --------------------------------------------------------------------------- G2++ swaption


@lru_cache(maxsize=16)
def _legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True)
class LinearPayoff:
    """Payoff omega * c0 * P_d(T_e, T_a) * [1 - sum_D chat_D P_d(T_e, D) / P_d(T_e, T_a)] at T_e.

    The anchor T_a defaults to the expiry, giving c0 * [1 - sum_D chat_D P_d(T_e, D)].
    """

    expiry: float
    c0: float
    times: np.ndarray
    chat: np.ndarray
    omega: int
    notional: float
    anchor: float | None = None
    sign: int = 1   # -1 when the leading coefficient was negative (c0 holds its magnitude)

    @property
    def anchor_time(self) -> float:
        return self.expiry if self.anchor is None else self.anchor


def _curve_factor(f, times):
    return np.ones(len(np.atleast_1d(times))) if f is None else np.asarray(f(np.atleast_1d(times)), float)


def underlying_payoff(swaption: SwaptionSpec, model: G2ppModel, fd=None, fx=None) -> LinearPayoff:
    """Multi-curve coefficients c0 and chat_D of the underlying swap at expiry.

    ``fd``/``fx`` are optional multiplicative factors applied to future
    discount / forwarding ZCBs (used for curve-bump sensitivities).
    """
    sw = swaption.underlying
    T, S = sw.float_times, sw.fixed_times
    Te = swaption.expiry
    psi = model.psi(T[:-1], T[1:])
    if fd is not None or fx is not None:
        gd, gx = _curve_factor(fd, T), _curve_factor(fx, T)
        psi = psi * gd[1:] / gd[:-1] * gx[:-1] / gx[1:]
    if abs(T[0] - Te) > 1e-12:
        raise ValueError("the swaption formula needs the underlying to start at expiry")
    times = np.unique(np.concatenate((T[1:], S[1:])))
    coef = np.zeros(len(times))
    idx_T = np.searchsorted(times, T[1:])
    idx_S = np.searchsorted(times, S[1:])
    coef[idx_T] += 1.0
    coef[idx_T[:-1]] -= psi[1:]
    coef[idx_S] += sw.strike * sw.tau_fixed
    c0 = psi[0]
    return LinearPayoff(Te, c0, times, coef / c0, sw.omega, sw.notional)


def residual_payoff(spec: SwapSpec, model: G2ppModel, u: float) -> LinearPayoff | None:
    """Linear payoff of the swap's remaining cash flows seen from time ``u``.

    A float coupon already running at ``u`` enters with its valuation-date
    forward rate, which is its expectation under the payment-date measure.
    """
    T, S = spec.float_times, spec.fixed_times
    eps = 1e-10
    if u >= spec.maturity - eps:
        return None
    fut = np.nonzero(T[:-1] >= u - eps)[0]
    inprog = np.nonzero((T[:-1] < u - eps) & (T[1:] >= u - eps))[0]
    fix_idx = np.nonzero(S[1:] >= u - eps)[0]
    terms: dict[float, float] = {}

    def add(time, v):
        key = float(max(time, u))
        terms[key] = terms.get(key, 0.0) + v

    psi = model.psi(T[:-1], T[1:])
    fwd = model.forward
    for j in fut:
        add(T[j], psi[j])
        add(T[j + 1], -1.0)
    for j in inprog:
        add(T[j + 1], np.exp(fwd.log_discount(T[j]) - fwd.log_discount(T[j + 1])) - 1.0)
    for i in fix_idx:
        add(S[i + 1], -spec.strike * spec.tau_fixed[i])
    anchor = float(u) if float(u) in terms else min(terms)
    c0 = terms.pop(anchor)
    if c0 == 0.0:
        raise ValueError("residual payoff has a zero leading cash flow")
    times = np.array(sorted(terms))
    chat = -np.array([terms[k] for k in times]) / c0
    return LinearPayoff(u, abs(c0), times, chat, spec.omega, spec.notional, None if anchor == u else anchor,
                        1 if c0 > 0 else -1)


def g2pp_linear_option(
    model: G2ppModel,
    payoff: LinearPayoff,
    t: float = 0.0,
    x=0.0,
    y=0.0,
    n_nodes: int = 256,
    fd=None,
    omega: int | None = None,
    chunk: int = 512,
    return_grad: bool = False,
    c0_paths=None,
):
    """Value at ``t`` of max(payoff, 0) via one-dimensional Gauss-Legendre quadrature.

    The inner expectation over y is closed form given the exercise boundary
    ybar(x), found per node by safeguarded Newton iteration.

    ``c0_paths`` optionally replaces the signed leading coefficient per path
    (the other cash flows keep their amounts).

    With ``return_grad`` also returns (g_c0, g_w): derivatives of the value with
    respect to c0 and to w_D = c0 * chat_D * A_d(T_e, D) / A_d(T_e, T_a), all
    other inputs held fixed. The boundary moves with the inputs but the
    integrand vanishes there, so no boundary term appears.
    """
    p = model.params
    omega = payoff.omega if omega is None else omega
    Te = payoff.expiry
    scalar = np.ndim(x) == 0 and c0_paths is None
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    if Te <= t + 1e-12:
        raise ValueError("option expiry must lie after the valuation time")
    c0s = payoff.sign * payoff.c0
    raw = -payoff.chat * c0s                                   # signed amounts at dates D
    if c0_paths is None:
        c0_paths = np.full(len(x), c0s)
    else:
        c0_paths = np.broadcast_to(np.asarray(c0_paths, float), x.shape)
    sgn = np.where(c0_paths >= 0, 1.0, -1.0)
    c0m = np.maximum(np.abs(c0_paths), 1e-300)
    om = omega * sgn                                           # effective option sign per path
    D = payoff.times
    Ta = payoff.anchor_time
    gd_a = _curve_factor(fd, [Ta])[0]
    p_a = model.zcb("d", t, np.array([Ta]), x, y)[:, 0] * gd_a
    if D.size == 0:
        # single known cash flow: no optionality left
        value = payoff.notional * np.maximum(om * c0m, 0.0) * p_a
        if return_grad:
            g = payoff.notional * om * p_a * (om > 0)
            return (float(value[0]), float(g[0]), np.zeros(0)) if scalar else (value, g, np.zeros((len(x), 0)))
        return float(value[0]) if scalar else value
    gd = _curve_factor(fd, D) / gd_a
    logA = model.log_A("d", Te, D) + np.log(gd)
    ba, bb = B(p.a, Te, D), B(p.b, Te, D)
    if Ta > Te:
        logA = logA - model.log_A("d", Te, np.array([Ta]))[0]
        ba, bb = ba - B(p.a, Te, Ta), bb - B(p.b, Te, Ta)
    w = -raw * np.exp(logA)                                    # c0 * chat_D * A ratio, per unit c0 sign
    k0 = w[None, :] / (sgn * c0m)[:, None]                     # (P, D)

    mux, muy, cov = transition_moments(p, t, Te, Ta, x, y)
    mux, muy = np.broadcast_to(mux, x.shape), np.broadcast_to(muy, x.shape)
    sx, sy = np.sqrt(cov[0, 0]), np.sqrt(cov[1, 1])
    rxy = np.clip(cov[0, 1] / (sx * sy), -1 + 1e-12, 1 - 1e-12)
    sq = np.sqrt(1.0 - rxy * rxy)

    nodes, weights = _legendre(n_nodes)
    half = 10.0 * sx
    out = np.empty(len(x))
    grad_w = np.empty((len(x), len(D))) if return_grad else None
    grad_c = np.empty(len(x)) if return_grad else None
    for lo in range(0, len(x), chunk):
        sl = slice(lo, lo + chunk)
        mx, my, o = mux[sl, None], muy[sl, None], om[sl, None]
        u = mx + half * nodes                                  # (P, Q)
        z = (u - mx) / sx
        lam = k0[sl, None, :] * np.exp(-ba * u[..., None])      # (P, Q, D)
        ybar = _exercise_boundary(lam, bb)
        h1 = (ybar - my) / (sy * sq) - rxy * z / sq
        h2 = h1[..., None] + bb * sy * sq
        kap = -bb * (my[..., None] - 0.5 * (1 - rxy * rxy) * sy * sy * bb + rxy * sy * z[..., None])
        first = ndtr(-o * h1)
        terms = np.exp(kap - ba * u[..., None]) * ndtr(-o[..., None] * h2)
        inner = first - np.sum(k0[sl, None, :] * terms, axis=-1)
        wq = half * weights * np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * sx)
        out[sl] = np.sum(wq * inner, axis=-1)
        if return_grad:
            grad_c[sl] = np.sum(wq * first, axis=-1)
            grad_w[sl] = -np.einsum("pq,pqd->pd", wq, terms)
    scale = payoff.notional * om * p_a
    value = np.maximum(scale * c0m * out, 0.0)
    if return_grad:
        g_c, g_w = scale * grad_c, scale[:, None] * grad_w
        if scalar:
            return float(value[0]), float(g_c[0]), g_w[0]
        return value, g_c, g_w
    return float(value[0]) if scalar else value


def residual_option(
    spec: SwapSpec,
    model: G2ppModel,
    u: float,
    omega: int | None = None,
    n_nodes: int = 128,
    n_outer: int = 16,
    coupon: str = "exact",
) -> float:
    """Valuation-date value of max(remaining swap value at u, 0) in G2++.

    A float coupon fixed before ``u`` is random as of today. With
    ``coupon="exact"`` the value is integrated over the factor state at that
    reset date (2-D Gauss-Hermite, forward measure of the first remaining
    payment) with the coupon known inside; ``coupon="forward"`` uses today's
    forward rate for it.
    """
    payoff = residual_payoff(spec, model, u)
    if payoff is None:
        return 0.0
    omega = spec.omega if omega is None else omega
    T = spec.float_times
    eps = 1e-10
    prog = np.nonzero((T[:-1] < u - eps) & (T[1:] >= u - eps))[0]
    if coupon == "forward" or not len(prog) or T[prog[0]] <= 0.0:
        return g2pp_linear_option(model, payoff, 0.0, 0.0, 0.0, n_nodes, omega=omega)
    if coupon != "exact":
        raise ValueError("coupon treatment must be exact or forward")
    j = prog[0]
    s_fix, t_pay = T[j], T[j + 1]
    ta = payoff.anchor_time
    fwd = model.forward
    c_fwd = np.exp(fwd.log_discount(s_fix) - fwd.log_discount(t_pay)) - 1.0
    mx, my, cov = transition_moments(model.params, 0.0, s_fix, ta)
    l11, l21, l22 = (float(v) for v in cholesky_2x2(cov))
    z, wz = np.polynomial.hermite_e.hermegauss(n_outer)
    wz = wz / wz.sum()
    z1, z2 = (a.ravel() for a in np.meshgrid(z, z, indexing="ij"))
    wt = np.outer(wz, wz).ravel()
    x1 = mx + l11 * z1
    y1 = my + l21 * z1 + l22 * z2
    coupon_paths = 1.0 / model.zcb("x", s_fix, np.array([t_pay]), x1, y1)[:, 0] - 1.0
    c0_paths = payoff.sign * payoff.c0 - c_fwd + coupon_paths
    inner = g2pp_linear_option(model, payoff, s_fix, x1, y1, n_nodes, omega=omega, c0_paths=c0_paths)
    p_sa = model.zcb("d", s_fix, np.array([ta]), x1, y1)[:, 0]
    return float(model.discount.discount(ta) * np.sum(wt * inner / p_sa))


def _exercise_boundary(lam, bb, tol=1e-12, max_iter=80):
    """Solve sum_D lam_D exp(-bb_D y) = 1 for y along the last axis."""
    shape = lam.shape[:-1]
    tot = lam.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(tot) * tot / (lam * bb).sum(axis=-1)   # one-term log-linear guess
    y = np.where(np.isfinite(y), np.clip(y, -49.0, 49.0), 0.0)
    lo = np.full(shape, -50.0)
    hi = np.full(shape, 50.0)
    for _ in range(max_iter):
        e = lam * np.exp(np.minimum(-bb * y[..., None], 700.0))
        g = e.sum(axis=-1) - 1.0
        dg = -(e * bb).sum(axis=-1)
        lo = np.where(g > 0, y, lo)
        hi = np.where(g <= 0, y, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = g / dg
        y_new = y - step
        done = (np.abs(step) < tol * (1.0 + np.abs(y))) | (np.abs(g) < 1e-15)
        bad = ~done & (~np.isfinite(y_new) | (y_new <= lo) | (y_new >= hi) | (dg >= 0))
        y = np.where(done, np.where(np.isfinite(y_new), y_new, y), np.where(bad, 0.5 * (lo + hi), y_new))
        if np.all(done):
            return y
        if np.all(hi - lo < tol):
            return y
    raise RuntimeError("exercise boundary solve did not converge")


def swaption_price_g2pp(
    swaption: SwaptionSpec,
    model: G2ppModel,
    t: float = 0.0,
    x=0.0,
    y=0.0,
    n_nodes: int = 256,
    fd=None,
    fx=None,
    adaptive: bool = False,
    rtol: float = 1e-10,
):
    """G2++ price of a physically settled European swaption on factor states at ``t``."""
    payoff = underlying_payoff(swaption, model, fd, fx)
    v = g2pp_linear_option(model, payoff, t, x, y, n_nodes, fd)
    if not adaptive:
        return v
    n = n_nodes
    while n < 4096:
        n *= 2
        v2 = g2pp_linear_option(model, payoff, t, x, y, n, fd)
        if np.all(np.abs(v2 - v) <= rtol * np.maximum(np.abs(v2), 1e-300)):
            return v2
        v = v2
    raise RuntimeError("swaption quadrature did not converge")


# --------------------------------------------------------------------------- shifted Black


def black_swaption_price(fwd, strike, annuity, shift, variance, omega, notional=1.0):
    """N * A * shifted-lognormal Black value with total variance ``variance``."""
    f = np.asarray(fwd, float) + shift
    k = np.asarray(strike, float) + shift
    if np.any(f <= 0) or np.any(k <= 0):
        raise ValueError("shifted forward and strike must be positive")
    v = np.asarray(variance, float)
    sd = np.sqrt(np.maximum(v, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.where(sd > 0, (np.log(f / k) + 0.5 * v) / np.where(sd > 0, sd, 1.0), np.sign(np.log(f / k)) * np.inf)
    d2 = d1 - sd
    intrinsic = np.where(sd > 0, omega * (f * ndtr(omega * d1) - k * ndtr(omega * d2)), np.maximum(omega * (f - k), 0.0))
    return notional * annuity * intrinsic


def black_vega(fwd, strike, annuity, shift, vol, expiry, notional=1.0):
    f, k = np.asarray(fwd) + shift, np.asarray(strike) + shift
    sd = vol * np.sqrt(expiry)
    d1 = (np.log(f / k) + 0.5 * sd * sd) / sd
    return notional * annuity * f * np.sqrt(expiry) * np.exp(-0.5 * d1 * d1) / np.sqrt(2 * np.pi)


class ImpliedVolError(ValueError):
    pass


def implied_vol(price, fwd, strike, annuity, shift, omega, notional, expiry, vol_max=5.0):
    """Shifted-Black implied volatility by Brent's method."""
    if fwd + shift <= 0 or strike + shift <= 0:
        raise ImpliedVolError("shift too small for a positive shifted forward")
    lower = float(black_swaption_price(fwd, strike, annuity, shift, 0.0, omega, notional))
    upper = float(black_swaption_price(fwd, strike, annuity, shift, vol_max**2 * expiry, omega, notional))
    tol = 1e-12 * notional
    if price < lower - tol or price > upper:
        raise ImpliedVolError("price outside shifted-Black bounds")
    if price <= lower + tol:
        return 0.0
    f = lambda s: float(black_swaption_price(fwd, strike, annuity, shift, s * s * expiry, omega, notional)) - price  # noqa: E731
    return brentq(f, 1e-12, vol_max, xtol=1e-15, rtol=1e-15, maxiter=500)


def implied_vol_vec(price, fwd, strike, annuity, shift, omega, notional, expiry, vol_max=5.0, iters=100):
    """Vectorised implied volatility (Newton with bisection safeguard); NaN where inversion fails."""
    price, fwd, annuity = np.broadcast_arrays(*(np.asarray(v, float) for v in (price, fwd, annuity)))
    strike = np.broadcast_to(np.asarray(strike, float), price.shape)
    ok = (fwd + shift > 0) & (strike + shift > 0)
    f = np.where(ok, fwd, 1.0 - shift + 1e-2)
    k = np.where(ok, strike, 1.0 - shift + 1e-2)
    lower = black_swaption_price(f, k, annuity, shift, 0.0, omega, notional)
    upper = black_swaption_price(f, k, annuity, shift, vol_max**2 * expiry, omega, notional)
    ok &= (price >= lower - 1e-12 * notional) & (price < upper)
    lo = np.zeros(price.shape)
    hi = np.full(price.shape, vol_max)
    vol = np.full(price.shape, 0.2)
    for _ in range(iters):
        pv = black_swaption_price(f, k, annuity, shift, vol * vol * expiry, omega, notional)
        diff = pv - price
        lo = np.where(diff < 0, vol, lo)
        hi = np.where(diff >= 0, vol, hi)
        vega = black_vega(f, k, annuity, shift, np.maximum(vol, 1e-8), expiry, notional)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            nv = vol - diff / vega
        bad = ~np.isfinite(nv) | (nv <= lo) | (nv >= hi)
        nv = np.where(bad, 0.5 * (lo + hi), nv)
        if np.all(np.abs(nv - vol) < 1e-14):
            vol = nv
            break
        vol = nv
    vol = np.where(price <= lower + 1e-12 * notional, 0.0, vol)
    return np.where(ok, vol, np.nan)


# --------------------------------------------------------------------------- market swaption grid


def calibration_swaption(expiry_y: float, tenor_y: float, d: ZeroCurve, x: ZeroCurve, notional=1e4, shift=0.01):
    """ATM payer swaption for an (expiry, tenor) quote; strike = forward par rate."""
    sw = make_swap(int(round(tenor_y * 12)), 0.0, 1, notional, start_months=int(round(expiry_y * 12)))
    sw = sw.with_strike(par_rate(sw, d, x))
    return SwaptionSpec(sw, sw.start, shift, name=f"{expiry_y:g}x{tenor_y:g}")


@dataclass
class AtmVolSurface:
    """Shifted-Black ATM implied vols on the quote grid, bilinear in (expiry, tenor)."""

    expiries: np.ndarray
    tenors: np.ndarray
    vols: np.ndarray
    shift: float

    @classmethod
    def from_quotes(cls, quotes: SwaptionQuoteMatrix, d: ZeroCurve, x: ZeroCurve, shift: float = 0.01):
        prices = quotes.payer_prices(1e4)
        vols = np.empty_like(prices)
        for i, e in enumerate(quotes.expiries):
            for j, ten in enumerate(quotes.tenors):
                sw = calibration_swaption(e, ten, d, x, 1e4, shift)
                und = sw.underlying
                vols[i, j] = implied_vol(
                    prices[i, j], und.strike, und.strike, annuity_curves(und, d), shift, 1, 1e4, sw.expiry
                )
        return cls(np.asarray(quotes.expiries, float), np.asarray(quotes.tenors, float), vols, shift)

    def __call__(self, expiry: float, tenor: float) -> float:
        e = np.clip(expiry, self.expiries[0], self.expiries[-1])
        t = np.clip(tenor, self.tenors[0], self.tenors[-1])
        by_tenor = np.array([np.interp(t, self.tenors, row) for row in self.vols])
        return float(np.interp(e, self.expiries, by_tenor))
