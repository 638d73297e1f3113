"""ISDA-SIMM v2.1 interest-rate margin and its forward (on-path) sensitivities."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .g2pp import G2ppModel
from .marketdata import CurveJacobian
from .pricing import (
    SwapSpec,
    SwaptionSpec,
    forward_swap_rate_state,
    g2pp_linear_option,
    implied_vol_vec,
    swap_state,
    underlying_payoff,
)

TENOR_LABELS = ("2w", "1m", "3m", "6m", "1y", "2y", "3y", "5y", "10y", "15y", "20y", "30y")
TENOR_DAYS = np.array([14.0, 365 / 12, 365 / 4, 365 / 2] + [365.0 * n for n in (1, 2, 3, 5, 10, 15, 20, 30)])
TENOR_YEARS = TENOR_DAYS / 365.0
BP = 1e-4


@dataclass(frozen=True)
class SimmParams:
    risk_weights: np.ndarray
    correlation: np.ndarray
    scaling_table: np.ndarray
    phi: float = 0.98
    vrw: float = 0.16
    hvr: float = 0.62
    delta_threshold_usd: float = 210e6
    vega_threshold_usd: float = 2200e6
    usd_per_eur: float = 1.0

    def __post_init__(self):
        c = self.correlation
        if c.shape != (12, 12) or not np.allclose(c, c.T) or not np.allclose(np.diag(c), 1.0):
            raise ValueError("tenor correlation must be a symmetric 12x12 matrix with unit diagonal")
        if np.any(self.risk_weights <= 0):
            raise ValueError("risk weights must be positive")

    @property
    def delta_threshold(self) -> float:
        """T_b in EUR per bp."""
        return self.delta_threshold_usd / self.usd_per_eur

    @property
    def vega_threshold(self) -> float:
        return self.vega_threshold_usd / self.usd_per_eur

    @property
    def delta_correlation(self) -> np.ndarray:
        """Joint (curve, tenor) correlation for the two sub-curves d and x."""
        return np.kron(np.array([[1.0, self.phi], [self.phi, 1.0]]), self.correlation)

    @classmethod
    def from_csv(cls, path=None, **overrides) -> "SimmParams":
        if path is None:
            path = resources.files("xva_engine") / "data" / "simm_v21.csv"
        rw, corr, sf = None, {}, None
        with open(Path(str(path)), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header[2:]) != TENOR_LABELS:
                raise ValueError("unexpected SIMM tenor header")
            for row in reader:
                vals = np.array([float(v) for v in row[2:]])
                if row[0] == "risk_weight":
                    rw = vals
                elif row[0] == "correlation_pct":
                    corr[row[1]] = vals / 100.0
                elif row[0] == "scaling_function_pct":
                    sf = vals / 100.0
        if rw is None or sf is None or set(corr) != set(TENOR_LABELS):
            raise ValueError("incomplete SIMM parameter file")
        return cls(rw, np.array([corr[k] for k in TENOR_LABELS]), sf, **overrides)


def scaling_function(days) -> np.ndarray:
    return 0.5 * np.minimum(1.0, 14.0 / np.asarray(days, float))


def allocation_matrix(times, tenors=TENOR_YEARS) -> np.ndarray:
    """Linear re-allocation weights (len(times) x 12); rows sum to one."""
    times = np.asarray(times, float)
    eye = np.eye(len(tenors))
    return np.stack([np.interp(times, tenors, eye[j]) for j in range(len(tenors))], axis=-1)


# --------------------------------------------------------------------------- margins


def _quadratic(ws, corr):
    return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", ws, corr, ws), 0.0))


def delta_margin(delta_d, delta_x, params: SimmParams) -> np.ndarray:
    """Delta margin from EUR/bp sensitivities on the SIMM tenors of both curves."""
    dd, dx = np.asarray(delta_d, float), np.asarray(delta_x, float)
    total = np.abs(dd.sum(axis=-1) + dx.sum(axis=-1))
    cr = np.maximum(1.0, np.sqrt(total / params.delta_threshold))
    ws = np.concatenate((dd, dx), axis=-1) * np.tile(params.risk_weights, 2) * cr[..., None]
    return _quadratic(ws, params.delta_correlation)


def vega_margin(vr, params: SimmParams) -> np.ndarray:
    vr = np.asarray(vr, float)
    vcr = np.maximum(1.0, np.sqrt(np.abs(vr.sum(axis=-1)) / params.vega_threshold))
    return _quadratic(params.vrw * vr * vcr[..., None], params.correlation)


CURVATURE_Q = norm.ppf(0.995) ** 2 - 1.0


def curvature_margin(vr, params: SimmParams, days=TENOR_DAYS) -> np.ndarray:
    cvr = scaling_function(days) * np.asarray(vr, float)
    k = _quadratic(cvr, params.correlation**2)
    s, a = cvr.sum(axis=-1), np.abs(cvr).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(a > 0, np.minimum(0.0, s / np.where(a > 0, a, 1.0)), 0.0)
    lam = CURVATURE_Q * (1.0 + theta) - theta
    return np.maximum(0.0, s + lam * k) / params.hvr**2


def apply_threshold(im, threshold: float = 0.0, mta: float = 0.0) -> np.ndarray:
    """Posted IM: (IM - K)^+ if it exceeds the MTA, else nothing."""
    excess = np.maximum(np.asarray(im, float) - threshold, 0.0)
    return np.where(excess > mta, excess, 0.0)


# --------------------------------------------------------------------------- forward sensitivities


def _hat_log_factors(pillar_tau: np.ndarray, residual) -> np.ndarray:
    """d ln P / d(pillar zero rate in bp) for log-linear interpolation on residual tenors.

    Returns shape (len(residual), K): -1bp * tau_k * hat_k(residual).
    """
    grid = np.concatenate(([0.0], pillar_tau))
    eye = np.eye(len(grid))[:, 1:]
    r = np.clip(np.asarray(residual, float), 0.0, grid[-1])
    hats = np.stack([np.interp(r, grid, eye[:, k]) for k in range(len(pillar_tau))], axis=-1)
    return -BP * pillar_tau * hats


@dataclass
class SensitivityResult:
    delta_d: np.ndarray
    delta_x: np.ndarray
    vega: np.ndarray | None = None
    vr: np.ndarray | None = None
    failed: np.ndarray | None = None


@dataclass
class ForwardSimm:
    """Forward SIMM sensitivities and margins on G2++ states.

    Zero-rate bumps are +1bp one-sided on the residual-tenor pillars of each
    curve; the raw sensitivities go through the t0 Jacobian and are linearly
    re-allocated onto the SIMM tenor ladder.
    """

    model: G2ppModel
    params: SimmParams
    jacobian: CurveJacobian
    shift: float = 0.06
    eps_sigma: float = 0.01
    eps_eta: float = 0.04
    n_nodes: int = 64
    shift_ladder: tuple = (0.06, 0.1, 0.2)
    delta_method: str = "linear"
    _alloc: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        d, x = self.model.discount, self.model.forward
        self.tau_d = d.pillar_times[1:]
        self.tau_x = x.pillar_times[1:]
        wd, wx = allocation_matrix(self.tau_d), allocation_matrix(self.tau_x)
        J = self.jacobian
        # zero deltas (rows) -> SIMM vectors: delta_R = delta_Z @ J^T, then allocate
        self._map_dd = J.dd.T @ wd
        self._map_xd = J.xd.T @ wd
        self._map_xx = J.xx.T @ wx

    def to_simm(self, zd: np.ndarray, zx: np.ndarray):
        """Raw zero-pillar deltas (EUR/bp) -> SIMM tenor deltas of d and x."""
        return zd @ self._map_dd + zx @ self._map_xd, zx @ self._map_xx

    # ---- swaps: the bumped value is linear in the bump factors, so this is exact
    def swap_zero_deltas(self, spec: SwapSpec, t: float, x, y, fixings=None, scale_paths=None):
        st = swap_state(spec, self.model, t, x, y, fixings)
        n = len(st.value)
        zd = np.zeros((n, len(self.tau_d)))
        zx = np.zeros((n, len(self.tau_x)))
        if st.pay_times.size:
            fd = np.expm1(_hat_log_factors(self.tau_d, st.pay_times - t))
            zd = st.scale * st.pay_pv @ fd
        if st.proj_start.size:
            lx = _hat_log_factors(self.tau_x, st.proj_start - t) - _hat_log_factors(self.tau_x, st.proj_end - t)
            zx = st.scale * st.proj_pv @ np.expm1(lx)
        if scale_paths is not None:
            zd, zx = zd * scale_paths[:, None], zx * scale_paths[:, None]
        return zd, zx, st.value

    # ---- swaptions
    def _bumped_payoff_terms(self, swaption: SwaptionSpec, t: float):
        """Path-independent changes of (log P_te, c0, w_D) under each pillar bump."""
        sw = swaption.underlying
        T = sw.float_times
        payoff = underlying_payoff(swaption, self.model)
        D, Te = payoff.times, payoff.expiry
        psi = self.model.psi(T[:-1], T[1:])
        coef = payoff.chat * payoff.c0
        A = np.exp(self.model.log_A("d", Te, D))
        # d coef_D / d psi_j : -1 at D = T_{j-1} for j >= 2
        dcoef = np.zeros((len(D), len(psi)))
        idx = np.searchsorted(D, T[1:-1])
        dcoef[idx, np.arange(1, len(psi))] = -1.0
        out = {}
        for cid, tau in (("d", self.tau_d), ("x", self.tau_x)):
            lT = _hat_log_factors(tau, T - t)                        # (n+1, K)
            if cid == "d":
                dlpsi = lT[1:] - lT[:-1]
                lD = _hat_log_factors(tau, D - t) - _hat_log_factors(tau, [Te - t])
                lte = _hat_log_factors(tau, [Te - t])[0]
            else:
                dlpsi = lT[:-1] - lT[1:]
                lD = np.zeros((len(D), len(tau)))
                lte = np.zeros(len(tau))
            psi_b = psi[:, None] * np.exp(dlpsi)                     # (n, K)
            dpsi = psi_b - psi[:, None]
            coef_b = coef[:, None] + dcoef @ dpsi
            w_b = coef_b * A[:, None] * np.exp(lD)
            out[cid] = (lte, dpsi[0], w_b - (coef * A)[:, None])
        return payoff, out

    def swaption_zero_deltas(self, swaption: SwaptionSpec, t: float, x, y):
        if self.delta_method == "reprice":
            return self._swaption_zero_deltas_reprice(swaption, t, x, y)
        payoff, terms = self._bumped_payoff_terms(swaption, t)
        v, gc, gw = g2pp_linear_option(self.model, payoff, t, x, y, self.n_nodes, return_grad=True)
        res = []
        for cid in ("d", "x"):
            lte, dc0, dw = terms[cid]
            lin = v[:, None] + gc[:, None] * dc0 + gw @ dw
            res.append(np.exp(lte) * lin - v[:, None])
        return res[0], res[1], v

    def _swaption_zero_deltas_reprice(self, swaption, t, x, y):
        sw = swaption.underlying
        base = g2pp_linear_option(self.model, underlying_payoff(swaption, self.model), t, x, y, self.n_nodes)
        lo, hi = swaption.expiry - t, sw.maturity - t
        res = []
        for cid, tau in (("d", self.tau_d), ("x", self.tau_x)):
            grid = np.concatenate(([0.0], tau))
            z = np.zeros((len(base), len(tau)))
            for k in range(len(tau)):
                if grid[k + 2 if k + 2 < len(grid) else k + 1] < lo or grid[k] > hi:
                    continue
                f = lambda T, k=k, tau=tau: np.exp(_hat_log_factors(tau, np.asarray(T) - t)[:, k])  # noqa: E731
                fd, fx = (f, None) if cid == "d" else (None, f)
                pay = underlying_payoff(swaption, self.model, fd, fx)
                z[:, k] = g2pp_linear_option(self.model, pay, t, x, y, self.n_nodes, fd=fd) - base
            res.append(z)
        return res[0], res[1], base

    def swaption_vega(self, swaption: SwaptionSpec, t: float, x, y, base=None):
        """Vega workaround: relative shocks on (sigma, eta), price change over implied-vol change.

        Returns (nu, VR on SIMM expiries, failed flag per path).
        """
        if self.eps_sigma == 0 and self.eps_eta == 0:
            raise ValueError("vega workaround needs a non-zero volatility shock")
        sw = swaption.underlying
        te = swaption.expiry - t
        payoff = underlying_payoff(swaption, self.model)
        if base is None:
            base = g2pp_linear_option(self.model, payoff, t, x, y, self.n_nodes)
        shocked = self.model.with_params(self.model.params.scaled_vols(self.eps_sigma, self.eps_eta))
        bumped = g2pp_linear_option(shocked, underlying_payoff(swaption, shocked), t, x, y, self.n_nodes)
        fwd, ann = forward_swap_rate_state(sw, self.model, t, x, y)
        nu = np.full(len(base), np.nan)
        vol0 = np.full(len(base), np.nan)
        todo = np.ones(len(base), bool)
        for shift in dict.fromkeys((self.shift,) + tuple(self.shift_ladder)):
            s0 = implied_vol_vec(base[todo], fwd[todo], sw.strike, ann[todo], shift, sw.omega, sw.notional, te)
            s1 = implied_vol_vec(bumped[todo], fwd[todo], sw.strike, ann[todo], shift, sw.omega, sw.notional, te)
            ok = np.isfinite(s0) & np.isfinite(s1)
            dv, ds = (bumped - base)[todo], s1 - s0
            with np.errstate(divide="ignore", invalid="ignore"):
                n_ = np.where(np.abs(ds) > 1e-12, dv / ds, 0.0)
            idx = np.nonzero(todo)[0]
            nu[idx[ok]], vol0[idx[ok]] = n_[ok], s0[ok]
            todo[idx[ok]] = False
            if not todo.any():
                break
        failed = todo.copy()
        vr_scalar = np.where(failed, 0.0, nu * vol0)
        vr = vr_scalar[:, None] * allocation_matrix([te])[0]
        return np.where(failed, np.nan, nu), vr, failed

    # ---- margins
    def swap_im(self, spec: SwapSpec, t: float, x, y, fixings=None, live=None):
        zd, zx, _ = self.swap_zero_deltas(spec, t, x, y, fixings, live)
        dd, dx = self.to_simm(zd, zx)
        return delta_margin(dd, dx, self.params)

    def swaption_im(self, swaption: SwaptionSpec, t: float, x, y):
        zd, zx, base = self.swaption_zero_deltas(swaption, t, x, y)
        dd, dx = self.to_simm(zd, zx)
        _, vr, failed = self.swaption_vega(swaption, t, x, y, base)
        total = delta_margin(dd, dx, self.params) + vega_margin(vr, self.params) + curvature_margin(vr, self.params)
        return total, failed
