"""Monte Carlo exposure simulation: paths, marks-to-future, margins and exposure cube."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dates as dt
from .collateral import CsaTerms, ExposureCube, TimeGridPair, assemble_exposure, build_grids, im_posted, vm_path
from .g2pp import G2ppModel, simulate
from .pricing import SwapSpec, SwaptionSpec, g2pp_linear_option, swap_fixings, swap_state, underlying_payoff
from .simm import ForwardSimm

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """A numerical step failed on some path/step; message carries the context."""


def underlying_of(instrument) -> SwapSpec:
    return instrument.underlying if isinstance(instrument, SwaptionSpec) else instrument


def coupon_days(instrument) -> np.ndarray:
    sw = underlying_of(instrument)
    return np.rint(sw.float_times[1:] * dt.DAYS_PER_YEAR).astype(np.int64)


def grid_for(instrument, step: str = "1M", kind: str = "joint", lag_days: int = 2) -> TimeGridPair:
    sw = underlying_of(instrument)
    return build_grids(int(round(sw.maturity * dt.DAYS_PER_YEAR)), step, kind, coupon_days(instrument), lag_days)


@dataclass
class _PathBlock:
    model: G2ppModel
    instrument: object
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    n_nodes: int

    def __post_init__(self):
        self._col = {round(float(t) * dt.DAYS_PER_YEAR): i for i, t in enumerate(self.times)}
        self.swap = underlying_of(self.instrument)
        self.fixings = swap_fixings(self.swap, self.model, self.state)
        self.is_option = isinstance(self.instrument, SwaptionSpec)
        if self.is_option:
            te = self.instrument.expiry
            self.exercised = swap_state(self.swap, self.model, te, *self.state(te), self.fixings).value > 0
            self.payoff = underlying_payoff(self.instrument, self.model)
        self._cache: dict[int, np.ndarray] = {}

    def state(self, t: float):
        i = self._col[round(float(t) * dt.DAYS_PER_YEAR)]
        return self.x[:, i], self.y[:, i]

    def value(self, t: float) -> np.ndarray:
        key = round(float(t) * dt.DAYS_PER_YEAR)
        if key not in self._cache:
            x, y = self.state(t)
            if self.is_option and t < self.instrument.expiry - 1e-12:
                v = g2pp_linear_option(self.model, self.payoff, t, x, y, self.n_nodes)
            else:
                v = swap_state(self.swap, self.model, t, x, y, self.fixings).value
                if self.is_option:
                    v = np.where(self.exercised, v, 0.0)
            self._cache[key] = v
        return self._cache[key]

    def im(self, t: float, simm: ForwardSimm):
        x, y = self.state(t)
        if self.is_option and t < self.instrument.expiry - 1e-12:
            return simm.swaption_im(self.instrument, t, x, y)
        live = self.exercised.astype(float) if self.is_option else None
        return simm.swap_im(self.swap, t, x, y, self.fixings, live), np.zeros(len(x), bool)


def simulation_times(instrument, grid: TimeGridPair) -> np.ndarray:
    sw = underlying_of(instrument)
    days = [grid.primary_days, grid.lookback_days, np.rint(sw.float_times * dt.DAYS_PER_YEAR)]
    if isinstance(instrument, SwaptionSpec):
        days.append([round(instrument.expiry * dt.DAYS_PER_YEAR)])
    d = np.unique(np.concatenate([np.asarray(a, float) for a in days]))
    return d[d >= 0] / dt.DAYS_PER_YEAR


def _run_block(model, instrument, grid, csa, first, n, seed, simm, n_nodes):
    sw = underlying_of(instrument)
    times = simulation_times(instrument, grid)
    t_star = sw.maturity
    x, y = simulate(model.params, times, t_star, n, seed, first_path=first)
    blk = _PathBlock(model, instrument, times, x, y, n_nodes)
    tp, tl = grid.primary, grid.lookback
    nt = len(tp)
    v0 = np.stack([blk.value(t) for t in tp], axis=1)
    p_star = model.discount.discount(t_star)
    defl = np.stack(
        [p_star / model.zcb("d", t, np.array([t_star]), *blk.state(t))[:, 0] if t < t_star else np.full(n, p_star)
         for t in tp], axis=1)
    active = grid.margin_active
    vm = np.zeros((n, nt))
    im = np.zeros((n, nt))
    failed = np.zeros((n, nt), bool)
    if csa.vm:
        vlb = np.stack([blk.value(t) if active[i] else np.zeros(n) for i, t in enumerate(tl)], axis=1)
        acc = np.ones((n, nt))
        for i in range(1, nt):
            a, b = tl[i - 1], tl[i]
            if active[i] and b > a:
                acc[:, i] = model.zcb("d", a, np.array([b]), *blk.state(a))[:, 0]
        vm = vm_path(vlb, active, csa.k_vm, csa.mta_vm, acc)
    if csa.im:
        if simm is None:
            raise ValueError("initial margin requested without a SIMM calculator")
        for i, t in enumerate(tl):
            if active[i]:
                raw, flag = blk.im(t, simm)
                im[:, i] = im_posted(raw, csa.k_im, csa.mta_im)
                failed[:, i] = flag
    h = assemble_exposure(v0, vm, im)
    return v0, vm, im, h, defl, failed


def simulate_exposure(
    instrument,
    model: G2ppModel,
    grid: TimeGridPair,
    csa: CsaTerms,
    n_paths: int,
    seed: int,
    simm: ForwardSimm | None = None,
    chunk: int = 1000,
    threads: int = 1,
    n_nodes: int = 64,
) -> ExposureCube:
    """Exposure cube on ``n_paths`` paths; blocks of paths are independent and deterministic.

    Each path draws from its own counter-based stream, so results do not
    depend on ``chunk`` or ``threads``.
    """
    if n_paths <= 0:
        raise ValueError("number of paths must be positive")
    starts = list(range(0, n_paths, chunk))
    args = [(model, instrument, grid, csa, s, min(chunk, n_paths - s), seed, simm, n_nodes) for s in starts]
    if threads > 1 and len(args) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda a: _run_block(*a), args))
    else:
        parts = [_run_block(*a) for a in args]
    v0, vm, im, h, defl, failed = (np.concatenate([p[k] for p in parts], axis=0) for k in range(6))
    if failed.any():
        log.warning("vega inversion failed on %d path-steps (vega risk set to zero there)", int(failed.sum()))
    return ExposureCube(grid, v0, vm, im, h, defl, np.arange(n_paths), failed)
