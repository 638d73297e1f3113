"""Two-stage G2++ calibration to ATM swaption prices.

Stage 1 fits {a, b, sigma, eta, rho} with Gamma = 1 by bounded least squares on
relative price errors, from several starting points. Stage 2 sweeps the
expiries in increasing order and solves a 1-D problem for each Gamma_i with
the earlier values frozen; a swaption expiring at xi_i does not see Gamma
beyond xi_i, so each sweep step is exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .g2pp import G2ppModel, G2ppParams
from .marketdata import SwaptionQuoteMatrix, ZeroCurve
from .pricing import calibration_swaption, swaption_price_g2pp

log = logging.getLogger(__name__)

LOWER = np.array([1e-3, 1e-3, 1e-4, 1e-4, -1.0])
UPPER = np.array([5.0, 5.0, 0.5, 0.5, 1.0])
DEFAULT_STARTS = (
    (1.0, 0.03, 0.05, 0.008, -0.9),
    (0.5, 0.05, 0.02, 0.010, -0.5),
    (0.1, 0.01, 0.01, 0.008, 0.0),
    (2.0, 0.10, 0.08, 0.010, -0.99),
    (0.3, 0.02, 0.015, 0.006, 0.5),
)
GAMMA_BOUNDS = (0.2, 5.0)


@dataclass
class CalibrationResult:
    params: G2ppParams
    errors: np.ndarray  # model / market - 1 on the quote grid
    stage1_params: G2ppParams
    stage1_errors: np.ndarray
    converged: bool
    message: str = ""

    @property
    def rmse(self) -> float:
        return float(np.sqrt(np.mean(self.errors**2)))

    @property
    def objective(self) -> float:
        return float(np.sum(self.errors**2))

    @property
    def mean_abs_error(self) -> float:
        return float(np.mean(np.abs(self.errors)))


class SwaptionCalibrator:
    """Holds the calibration instruments and market prices for one quote matrix."""

    def __init__(self, quotes: SwaptionQuoteMatrix, discount: ZeroCurve, forward: ZeroCurve,
                 notional: float = 1e4, n_nodes: int = 64):
        self.quotes = quotes
        self.discount, self.forward = discount, forward
        self.n_nodes = n_nodes
        self.market = quotes.payer_prices(notional)
        self.instruments = [[calibration_swaption(e, t, discount, forward, notional) for t in quotes.tenors]
                            for e in quotes.expiries]

    def model(self, params: G2ppParams) -> G2ppModel:
        return G2ppModel(params, self.discount, self.forward)

    def prices(self, params: G2ppParams, rows=None) -> np.ndarray:
        m = self.model(params)
        rows = range(len(self.instruments)) if rows is None else rows
        return np.array([[swaption_price_g2pp(s, m, n_nodes=self.n_nodes) for s in self.instruments[i]] for i in rows])

    def errors(self, params: G2ppParams, rows=None) -> np.ndarray:
        rows = list(range(len(self.instruments))) if rows is None else list(rows)
        return self.prices(params, rows) / self.market[rows] - 1.0

    # stage 1 ---------------------------------------------------------------

    def _constant(self, theta, template: G2ppParams) -> G2ppParams:
        a, b, s, e, r = (float(v) for v in theta)
        return replace(template, a=a, b=b, sigma=s, eta=e, rho=min(1.0, max(-1.0, r)))

    def fit_constant(self, starts=DEFAULT_STARTS, max_nfev: int = 500, tol: float = 1e-10, template=None):
        template = template or G2ppParams(1.0, 0.1, 0.01, 0.01, 0.0)
        best = None
        for x0 in starts:
            x0 = np.clip(np.asarray(x0, float), LOWER, UPPER)
            try:
                sol = least_squares(lambda th: self.errors(self._constant(th, template)).ravel(), x0,
                                    bounds=(LOWER, UPPER), method="trf", x_scale="jac",
                                    ftol=tol, xtol=tol, gtol=tol, max_nfev=max_nfev)
            except (ValueError, RuntimeError) as exc:  # infeasible proposals from a poor start
                log.info("calibration start %s failed: %s", x0, exc)
                continue
            log.info("start %s -> cost %.3e (%s)", x0, 2 * sol.cost, sol.message)
            if best is None or sol.cost < best.cost:
                best = sol
        if best is None:
            raise RuntimeError("no calibration start produced a valid model")
        return self._constant(best.x, template), bool(best.success), str(best.message)

    # stage 2 ---------------------------------------------------------------

    def fit_gamma(self, base: G2ppParams, breaks=None, tol: float = 1e-10, max_iter: int = 500) -> G2ppParams:
        # by default the breaks sit on the actual expiry times, so no swaption sees a later segment
        expiries = [row[0].expiry for row in self.instruments]
        breaks = tuple(float(e) for e in (expiries if breaks is None else breaks))
        gamma = [1.0] * len(breaks)
        params = replace(base, gamma=tuple(gamma), breaks=breaks)
        for i, e in enumerate(expiries):
            k = min(int(np.searchsorted(breaks, e - 1e-9)), len(breaks) - 1)

            def obj(g, i=i, k=k):
                trial = list(gamma)
                trial[k:] = [g] * (len(gamma) - k)
                return float(np.sum(self.errors(replace(params, gamma=tuple(trial)), [i]) ** 2))

            sol = minimize_scalar(obj, bounds=GAMMA_BOUNDS, method="bounded",
                                  options={"xatol": tol, "maxiter": max_iter})
            gamma[k:] = [float(sol.x)] * (len(gamma) - k)
        return replace(params, gamma=tuple(gamma))


def calibrate(quotes: SwaptionQuoteMatrix, discount: ZeroCurve, forward: ZeroCurve, starts=DEFAULT_STARTS,
              time_dependent: bool = True, n_nodes: int = 64, max_nfev: int = 500) -> CalibrationResult:
    """Fit G2++ to the ATM payer prices implied by ``quotes`` (straddle / 2)."""
    cal = SwaptionCalibrator(quotes, discount, forward, n_nodes=n_nodes)
    p1, ok, msg = cal.fit_constant(starts, max_nfev=max_nfev)
    e1 = cal.errors(p1)
    if not time_dependent:
        return CalibrationResult(p1, e1, p1, e1, ok, msg)
    p2 = cal.fit_gamma(p1)
    return CalibrationResult(p2, cal.errors(p2), p1, e1, ok, msg)
