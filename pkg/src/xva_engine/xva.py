"""CVA/DVA from exposure profiles, analytical swap XVA, convergence ladders and MoRi AVA."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .collateral import CsaTerms, ExposureCube
from .g2pp import G2ppModel
from .marketdata import CreditCurve, ZeroCurve
from .pricing import (
    AtmVolSurface,
    SwapSpec,
    black_swaption_price,
    residual_option,
    residual_payoff,
)


@dataclass
class ExposureProfile:
    times: np.ndarray
    epe: np.ndarray
    ene: np.ndarray
    sd_epe: np.ndarray
    sd_ene: np.ndarray
    n_paths: int
    mean_vm: np.ndarray | None = None
    mean_im: np.ndarray | None = None

    def bounds(self, k: float = 3.0):
        """(epe_lb, epe_ub, ene_lb, ene_ub) at k standard errors."""
        se = k / math.sqrt(self.n_paths)
        return self.epe - se * self.sd_epe, self.epe + se * self.sd_epe, self.ene - se * self.sd_ene, self.ene + se * self.sd_ene


def epe_ene(cube: ExposureCube, discount: ZeroCurve | None = None) -> ExposureProfile:
    """Discounted mean clipped exposures per step.

    Paths are simulated under the forward measure of the instrument's last
    payment date, so each path is weighted by P(0,T*)/P(t_i,T*). Without
    path deflators the curve discount factor P(0,t_i) is used instead.
    """
    hp, hn = np.maximum(cube.h, 0.0), np.minimum(cube.h, 0.0)
    if cube.deflator is not None:
        wp, wn = cube.deflator * hp, cube.deflator * hn
    else:
        if discount is None:
            raise ValueError("need path deflators or a discount curve")
        p = discount.discount(cube.grid.primary)
        wp, wn = p * hp, p * hn
    n = cube.n_paths
    ddof = 1 if n > 1 else 0
    return ExposureProfile(
        cube.grid.primary, wp.mean(axis=0), wn.mean(axis=0), wp.std(axis=0, ddof=ddof), wn.std(axis=0, ddof=ddof), n,
        cube.vm.mean(axis=0), cube.im.mean(axis=0),
    )


def credit_weights(times, survivor: CreditCurve, defaulter: CreditCurve) -> np.ndarray:
    """S_survivor(t_i) * dQ_defaulter(t_{i-1}, t_i]; zero weight on t_0."""
    w = survivor.survival(times) * defaulter.default_increments(times)
    w[0] = 0.0
    return w


@dataclass
class XvaResult:
    cva: float
    dva: float
    cva_lb: float = float("nan")
    cva_ub: float = float("nan")
    dva_lb: float = float("nan")
    dva_ub: float = float("nan")
    profile: ExposureProfile | None = None
    descriptor: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def cva_halfwidth(self) -> float:
        return 0.5 * abs(self.cva_ub - self.cva_lb)

    @property
    def dva_halfwidth(self) -> float:
        return 0.5 * abs(self.dva_ub - self.dva_lb)


def cva_dva(profile: ExposureProfile, bank: CreditCurve, cpty: CreditCurve, lgd_bank: float = 0.6,
            lgd_cpty: float = 0.6, k: float = 3.0) -> XvaResult:
    t = profile.times
    wc = credit_weights(t, bank, cpty)
    wd = credit_weights(t, cpty, bank)
    ep_lb, ep_ub, en_lb, en_ub = profile.bounds(k)
    cva = lambda e: -lgd_cpty * float(np.sum(e * wc))  # noqa: E731
    dva = lambda e: -lgd_bank * float(np.sum(e * wd))  # noqa: E731
    # CVA is decreasing in EPE: the upper EPE bound gives the lower CVA bound
    return XvaResult(cva(profile.epe), dva(profile.ene), cva(ep_ub), cva(ep_lb), dva(en_ub), dva(en_lb), profile)


# --------------------------------------------------------------------------- analytical swap XVA


def _black_strip_value(spec: SwapSpec, model: G2ppModel, u: float, omega: int, vols: AtmVolSurface) -> float:
    payoff = residual_payoff(spec, model, u)
    if payoff is None:
        return 0.0
    d = model.discount
    c0 = payoff.sign * payoff.c0
    legs = c0 * (d.discount(payoff.anchor_time) - np.sum(payoff.chat * d.discount(payoff.times)))  # per unit notional
    S = spec.fixed_times
    live = S[1:] >= u - 1e-10
    ann = float(np.sum(spec.tau_fixed[live] * d.discount(np.maximum(S[1:][live], u))))
    fwd = spec.strike + legs / ann
    vol = vols(u, spec.maturity - u)
    return float(black_swaption_price(fwd, spec.strike, ann, vols.shift, vol * vol * u, omega, spec.notional))


def coterminal_strip(spec: SwapSpec, model: G2ppModel, times, omega: int, method: str = "g2pp",
                     vols: AtmVolSurface | None = None, n_nodes: int = 128, coupon: str = "exact") -> np.ndarray:
    """Values at t0 of options expiring at each t_i on the swap's remaining cash flows."""
    out = np.zeros(len(times))
    for i, u in enumerate(times):
        if u <= 0:
            continue
        if method == "g2pp":
            out[i] = residual_option(spec, model, u, omega, n_nodes, coupon=coupon)
        elif method == "black":
            if vols is None:
                raise ValueError("Black strip needs an ATM volatility surface")
            out[i] = _black_strip_value(spec, model, u, omega, vols)
        else:
            raise ValueError("strip pricer must be g2pp or black")
    return out


def analytical_swap_xva(spec, model: G2ppModel, times, bank: CreditCurve, cpty: CreditCurve, method: str = "g2pp",
                        vols: AtmVolSurface | None = None, lgd_bank=0.6, lgd_cpty=0.6,
                        csa: CsaTerms | None = None) -> XvaResult:
    """Uncollateralised swap CVA/DVA as credit-weighted sums over co-terminal option strips."""
    if not isinstance(spec, SwapSpec):
        raise TypeError("analytical XVA is only available for swaps")
    if csa is not None and (csa.vm or csa.im):
        raise TypeError("analytical XVA is only available without collateral")
    start = time.perf_counter()
    times = np.asarray(times, float)
    w = spec.omega
    pay = coterminal_strip(spec, model, times, w, method, vols)
    rec = coterminal_strip(spec, model, times, -w, method, vols)
    cva = -lgd_cpty * float(np.sum(pay * credit_weights(times, bank, cpty)))
    dva = lgd_bank * float(np.sum(rec * credit_weights(times, cpty, bank)))
    return XvaResult(cva, dva, cva, cva, dva, dva, descriptor={"model": f"analytical-{method}"},
                     seconds=time.perf_counter() - start)


# --------------------------------------------------------------------------- MoRi AVA


@dataclass
class FrameworkFamily:
    """Alternative valuation frameworks with their XVA values; ``target`` indexes the fair-value framework."""

    labels: list
    values: np.ndarray
    target: int
    confidence: float = 0.90

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.size == 0:
            raise ValueError("framework family is empty")
        if not 0 <= self.target < self.values.size or len(self.labels) != self.values.size:
            raise ValueError("target must be a member of the family")

    def prudent_index(self) -> int:
        """Position (in ascending order) of the prudent framework at 1 - confidence."""
        n = self.values.size
        k = max(1, int(math.floor((1.0 - self.confidence) * n + 1e-9)))
        return k - 1

    def prudent(self) -> float:
        return float(np.sort(self.values)[self.prudent_index()])


def mori_ava(family: FrameworkFamily) -> float:
    """Model-risk AVA: XVA(target) - XVA(prudent framework)."""
    if family.values.size == 1:
        return 0.0
    return float(family.values[family.target] - family.prudent())


# --------------------------------------------------------------------------- convergence


@dataclass
class ConvergenceRow:
    n_paths: int
    step: str
    kind: str
    result: XvaResult
    cva_diff_pct: float = float("nan")
    dva_diff_pct: float = float("nan")


def convergence_study(run, n_ladder=(1000, 2000, 4000, 8000, 16000), grids=(("1M", "joint"),)):
    """Evaluate ``run(n_paths, step, kind) -> XvaResult`` over ladders with the same seed.

    Percentage differences are relative to the largest-N row of each grid.
    """
    rows = []
    for step, kind in grids:
        block = []
        for n in n_ladder:
            t0 = time.perf_counter()
            res = run(n, step, kind)
            res.seconds = time.perf_counter() - t0
            block.append(ConvergenceRow(n, step, kind, res))
        ref = block[-1].result
        for r in block:
            if ref.cva:
                r.cva_diff_pct = 100.0 * abs(r.result.cva / ref.cva - 1.0)
            if ref.dva:
                r.dva_diff_pct = 100.0 * abs(r.result.dva / ref.dva - 1.0)
        rows.extend(block)
    return rows


def bound_width_slope(rows) -> float:
    """Least-squares slope of log(CVA bound width) on log(N)."""
    n = np.log([r.n_paths for r in rows])
    w = np.log([abs(r.result.cva_ub - r.result.cva_lb) for r in rows])
    return float(np.polyfit(n, w, 1)[0])
