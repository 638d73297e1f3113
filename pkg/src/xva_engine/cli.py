"""Batch front end: ``xva-engine <subcommand> --config FILE [--seed N] [--threads N] [--out DIR]``.

Exit status 0 on success, 1 for configuration errors, 2 for numerical failures.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import calibrate
from .collateral import GRID_KINDS, GRID_STEPS, CsaTerms
from .engine import NumericalError, grid_for, simulate_exposure, underlying_of
from .g2pp import PUBLISHED_PARAMS, G2ppModel, G2ppParams
from .marketdata import BootstrapError, curve_jacobian, default_data_dir, load_market
from .pricing import (
    AtmVolSurface,
    ImpliedVolError,
    SwapSpec,
    SwaptionSpec,
    instrument_menu,
    make_swap,
    par_rate,
    swap_price_curves,
    swap_price_state,
    swaption_price_g2pp,
)
from .simm import TENOR_DAYS, TENOR_LABELS, ForwardSimm, SimmParams, curvature_margin, delta_margin, scaling_function, vega_margin
from .xva import FrameworkFamily, XvaResult, analytical_swap_xva, bound_width_slope, convergence_study, cva_dva, epe_ene, mori_ava

log = logging.getLogger("xva_engine")

SUBCOMMANDS = ("calibrate", "price", "exposure", "xva", "ava", "convergence", "simm-audit")
SCHEMES = ("none", "vm", "vm_im")
EXPOSURE_HEADER = ["t_days", "epe", "ene", "epe_lb", "epe_ub", "ene_lb", "ene_ub", "mean_vm", "mean_im"]
SUMMARY_HEADER = ["instrument", "scheme", "cva", "cva_lb", "cva_ub", "dva", "dva_lb", "dva_ub", "n_mc", "dt", "grid",
                  "seconds"]


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


# --------------------------------------------------------------------------- configuration


@dataclass
class InstrumentConfig:
    name: str
    spec: object


@dataclass
class RunConfig:
    data_dir: Path
    params: str
    instruments: list
    schemes: tuple
    csa: dict
    n_mc: int = 5000
    seed: int = 42
    dt: str = "1M"
    grid: str = "joint"
    threads: int = 1
    chunk: int = 1000
    eps_sigma: float = 0.01
    eps_eta: float = 0.04
    lambda_x: float = 0.06
    lgd_bank: float = 0.6
    lgd_cpty: float = 0.6
    jacobian: str = "identity"
    n_nodes: int = 64
    analytical: tuple = ()
    n_ladder: tuple = (1000, 2000, 4000, 8000, 16000)
    ladder_grids: tuple = (("1M", "joint"),)
    ava_n: tuple = (1000, 2000, 3000, 4000, 5000)
    ava_grids: tuple = (("1M", "standard"), ("3M", "joint"), ("6M", "joint"))
    ava_analytical: tuple = ("g2pp", "black")
    audit_paths: int = 0
    audit_steps: tuple = ()
    out_dir: Path = Path("out")
    timings: bool = True

    def csa_terms(self, scheme: str) -> CsaTerms:
        return CsaTerms.scheme(scheme, **self.csa)


def _get(section, key, conv, default, where):
    if key not in section:
        return default
    raw = section[key].strip()
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {key}: cannot parse {raw!r} ({exc})") from None


def _list(conv):
    return lambda s: tuple(conv(v.strip()) for v in s.replace("\n", ",").split(",") if v.strip())


def _grid_pair(s: str):
    step, _, kind = s.partition(":")
    step, kind = step.strip().upper(), (kind.strip() or "joint").lower()
    if step not in GRID_STEPS or kind not in GRID_KINDS:
        raise ValueError(f"grid must be STEP[:KIND] with STEP in {sorted(GRID_STEPS)} and KIND in {GRID_KINDS}")
    return step, kind


def _bool(s: str) -> bool:
    s = s.lower()
    if s in ("yes", "true", "on", "1"):
        return True
    if s in ("no", "false", "off", "0"):
        return False
    raise ValueError("expected yes or no")


def _omega(s: str) -> int:
    s = s.lower()
    if s in ("payer", "pay", "1", "+1"):
        return 1
    if s in ("receiver", "rec", "-1"):
        return -1
    raise ValueError("omega must be payer or receiver")


def _instrument(sec, where: str, menu: dict) -> InstrumentConfig:
    if "menu" in sec:
        key = sec["menu"].strip()
        if key not in menu:
            raise ConfigError(f"[{where}] menu: unknown instrument {key!r}; choose from {sorted(menu)}")
        return InstrumentConfig(sec.get("name", key).strip(), menu[key])
    kind = _get(sec, "type", str.lower, None, where)
    if kind not in ("swap", "swaption"):
        raise ConfigError(f"[{where}] type: expected swap or swaption (or give menu = <name>)")
    name = sec.get("name", where.split(".", 1)[1]).strip()
    tenor = _get(sec, "tenor_months", int, None, where)
    if tenor is None or tenor <= 0:
        raise ConfigError(f"[{where}] tenor_months: required positive integer")
    start = _get(sec, "start_months", int, 0, where)
    if start < 0:
        raise ConfigError(f"[{where}] start_months: must be non-negative")
    if kind == "swaption" and start <= 0:
        raise ConfigError(f"[{where}] start_months: a swaption needs a forward-starting underlying")
    omega = _get(sec, "omega", _omega, 1, where)
    notional = _get(sec, "notional", float, 1e8, where)
    if notional <= 0:
        raise ConfigError(f"[{where}] notional: must be positive")
    strike_raw = sec.get("strike", "atm").strip().lower()
    sw = make_swap(tenor, 0.0, omega, notional, start, name=name)
    return InstrumentConfig(name, (sw, strike_raw, kind, _get(sec, "shift", float, 0.06, where)))


def _finish_instrument(inst: InstrumentConfig, market, where: str) -> InstrumentConfig:
    if not isinstance(inst.spec, tuple):
        return inst
    sw, strike_raw, kind, shift = inst.spec
    if strike_raw == "atm":
        strike = par_rate(sw, market.discount, market.forward)
    else:
        try:
            strike = float(strike_raw)
        except ValueError:
            raise ConfigError(f"[{where}] strike: expected a number or 'atm'") from None
    sw = sw.with_strike(strike)
    spec = SwaptionSpec(sw, sw.start, shift, name=inst.name) if kind == "swaption" else sw
    return InstrumentConfig(inst.name, spec)


def load_config(path, seed=None, threads=None, out=None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    known = {"market", "csa", "calc", "output"}
    for s in cp.sections():
        if s not in known and not s.startswith("instrument."):
            raise ConfigError(f"[{s}]: unknown section")
    m = cp["market"] if cp.has_section("market") else {}
    data_dir = Path(m.get("data_dir", "").strip() or default_data_dir())
    if not data_dir.is_absolute() and m.get("data_dir", "").strip():
        data_dir = (path.parent / data_dir).resolve()
    for rel in ("curves/d.csv", "curves/x.csv", "cds/B.csv", "cds/C.csv"):
        if not (data_dir / rel).is_file():
            raise ConfigError(f"[market] data_dir: missing {rel} under {data_dir}")
    params = m.get("params", "published").strip()
    if params not in ("published", "calibrate"):
        p = Path(params)
        p = p if p.is_absolute() else (path.parent / p)
        if not p.is_file():
            raise ConfigError(f"[market] params: expected published, calibrate or a JSON file; {p} not found")
        params = str(p)

    menu = instrument_menu()
    insts = []
    for s in sorted((s for s in cp.sections() if s.startswith("instrument.")), key=lambda s: (len(s), s)):
        insts.append((s, _instrument(cp[s], s, menu)))
    names = [i.name for _, i in insts]
    if len(set(names)) != len(names):
        raise ConfigError("[instrument.N] name: instrument names must be unique")

    c = cp["csa"] if cp.has_section("csa") else {}
    schemes = _get(c, "schemes", _list(str.lower), ("none",), "csa")
    for s in schemes:
        if s not in SCHEMES:
            raise ConfigError(f"[csa] schemes: {s!r} is not one of {SCHEMES}")
    csa = {k: _get(c, k, float, 0.0, "csa") for k in ("k_vm", "mta_vm", "k_im", "mta_im")}
    csa["lag_days"] = _get(c, "lag_days", int, 2, "csa")
    if min(csa.values()) < 0:
        raise ConfigError("[csa]: thresholds, MTAs and lag_days must be non-negative")

    k = cp["calc"] if cp.has_section("calc") else {}
    cfg = RunConfig(data_dir, params, insts, schemes, csa)
    ints = ("n_mc", "seed", "threads", "chunk", "n_nodes", "audit_paths")
    floats = ("eps_sigma", "eps_eta", "lambda_x", "lgd_bank", "lgd_cpty")
    for key in ints:
        setattr(cfg, key, _get(k, key, int, getattr(cfg, key), "calc"))
    for key in floats:
        setattr(cfg, key, _get(k, key, float, getattr(cfg, key), "calc"))
    cfg.dt = _get(k, "dt", str.upper, cfg.dt, "calc")
    cfg.grid = _get(k, "grid", str.lower, cfg.grid, "calc")
    cfg.jacobian = _get(k, "jacobian", str.lower, cfg.jacobian, "calc")
    cfg.analytical = _get(k, "analytical", _list(str.lower), cfg.analytical, "calc")
    cfg.n_ladder = _get(k, "n_ladder", _list(int), cfg.n_ladder, "calc")
    cfg.ladder_grids = _get(k, "ladder_grids", _list(_grid_pair), cfg.ladder_grids, "calc")
    cfg.ava_n = _get(k, "ava_n", _list(int), cfg.ava_n, "calc")
    cfg.ava_grids = _get(k, "ava_grids", _list(_grid_pair), cfg.ava_grids, "calc")
    cfg.ava_analytical = _get(k, "ava_analytical", _list(str.lower), cfg.ava_analytical, "calc")
    cfg.audit_steps = _get(k, "audit_steps", _list(int), cfg.audit_steps, "calc")
    if seed is not None:
        cfg.seed = seed
    if threads is not None:
        cfg.threads = threads
    o = cp["output"] if cp.has_section("output") else {}
    cfg.out_dir = Path(out) if out else Path(o.get("dir", "out").strip())
    cfg.timings = _get(o, "timings", _bool, True, "output")
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.dt not in GRID_STEPS:
        raise ConfigError(f"[calc] dt: expected one of {sorted(GRID_STEPS)}")
    if cfg.grid not in GRID_KINDS:
        raise ConfigError(f"[calc] grid: expected one of {GRID_KINDS}")
    if cfg.jacobian not in ("identity", "synthetic"):
        raise ConfigError("[calc] jacobian: expected identity or synthetic")
    for key in ("n_mc", "threads", "chunk", "n_nodes"):
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"[calc] {key}: must be positive")
    if cfg.seed < 0:
        raise ConfigError("[calc] seed: must be non-negative")
    for key in ("lgd_bank", "lgd_cpty"):
        if not 0.0 <= getattr(cfg, key) < 1.0:
            raise ConfigError(f"[calc] {key}: must lie in [0, 1)")
    if cfg.lambda_x <= 0:
        raise ConfigError("[calc] lambda_x: must be positive")
    for key in ("analytical", "ava_analytical"):
        bad = [m for m in getattr(cfg, key) if m not in ("g2pp", "black")]
        if bad:
            raise ConfigError(f"[calc] {key}: unknown strip pricer {bad[0]!r}")
    for key in ("n_ladder", "ava_n"):
        if any(n <= 0 for n in getattr(cfg, key)):
            raise ConfigError(f"[calc] {key}: path counts must be positive")


# --------------------------------------------------------------------------- run context


class Run:
    """Market, model and helpers shared by the subcommands."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        recovery = {"B": 1.0 - cfg.lgd_bank, "C": 1.0 - cfg.lgd_cpty}
        self.market = load_market(cfg.data_dir, recovery)
        self.instruments = [_finish_instrument(i, self.market, where) for where, i in cfg.instruments]
        self._model = None
        self._simm = None
        self._vols = None

    @property
    def bank(self):
        return self.market.credit["B"]

    @property
    def cpty(self):
        return self.market.credit["C"]

    @property
    def model(self) -> G2ppModel:
        if self._model is None:
            p = self.cfg.params
            if p == "published":
                params = PUBLISHED_PARAMS
            elif p == "calibrate":
                params = self.calibrate().params
            else:
                params = params_from_json(p)
            self._model = G2ppModel(params, self.market.discount, self.market.forward)
        return self._model

    def calibrate(self):
        if self.market.swaptions is None:
            raise ConfigError("[market] data_dir: swaptions_atm.csv is required for calibration")
        return calibrate(self.market.swaptions, self.market.discount, self.market.forward, n_nodes=self.cfg.n_nodes)

    @property
    def simm(self) -> ForwardSimm:
        if self._simm is None:
            jac = curve_jacobian(self.market.discount, self.market.forward, self.cfg.jacobian)
            self._simm = ForwardSimm(self.model, SimmParams.from_csv(self.cfg.data_dir / "simm_v21.csv"
                                                                     if (self.cfg.data_dir / "simm_v21.csv").is_file()
                                                                     else None),
                                     jac, shift=self.cfg.lambda_x, eps_sigma=self.cfg.eps_sigma,
                                     eps_eta=self.cfg.eps_eta, n_nodes=self.cfg.n_nodes)
        return self._simm

    @property
    def vols(self) -> AtmVolSurface:
        if self._vols is None:
            if self.market.swaptions is None:
                raise ConfigError("[market] data_dir: swaptions_atm.csv is required for the Black strip")
            self._vols = AtmVolSurface.from_quotes(self.market.swaptions, self.market.discount, self.market.forward)
        return self._vols

    def cube(self, inst: InstrumentConfig, scheme: str, n_paths: int, step: str, kind: str):
        csa = self.cfg.csa_terms(scheme)
        grid = grid_for(inst.spec, step, kind, csa.lag_days)
        return simulate_exposure(inst.spec, self.model, grid, csa, n_paths, self.cfg.seed,
                                 self.simm if csa.im else None, self.cfg.chunk, self.cfg.threads, self.cfg.n_nodes)

    def mc_xva(self, cube, step: str, kind: str, scheme: str, seconds: float) -> XvaResult:
        res = cva_dva(epe_ene(cube), self.bank, self.cpty, self.cfg.lgd_bank, self.cfg.lgd_cpty)
        res.descriptor = {"model": "mc", "grid": cube.grid.kind, "dt": cube.grid.step, "n_mc": cube.n_paths,
                          "scheme": scheme}
        res.seconds = seconds
        return res

    def analytical_xva(self, inst: InstrumentConfig, method: str, step: str) -> XvaResult:
        grid = grid_for(inst.spec, step, "standard")
        res = analytical_swap_xva(inst.spec, self.model, grid.primary, self.bank, self.cpty, method,
                                  self.vols if method == "black" else None, self.cfg.lgd_bank, self.cfg.lgd_cpty)
        res.descriptor.update({"grid": "standard", "dt": grid.step, "n_mc": 0, "scheme": "none"})
        return res


def params_from_json(path) -> G2ppParams:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    try:
        return G2ppParams(d["a"], d["b"], d["sigma"], d["eta"], d["rho"], tuple(d.get("gamma", (1.0,))),
                          tuple(d.get("breaks", ())))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"[market] params: invalid parameter file {path} ({exc})") from None


# --------------------------------------------------------------------------- writers


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer, str)):
        return str(v)
    return format(float(v), ".10g")


def _write(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_exposure(out: Path, name: str, scheme: str, profile) -> Path:
    lb_p, ub_p, lb_n, ub_n = profile.bounds()
    days = np.rint(profile.times * 365.0).astype(int)
    rows = zip(days, profile.epe, profile.ene, lb_p, ub_p, lb_n, ub_n, profile.mean_vm, profile.mean_im)
    return _write(out / f"exposure_{name}_{scheme}.csv", EXPOSURE_HEADER, rows)


def summary_row(name: str, scheme: str, r: XvaResult, timings: bool = True):
    d = r.descriptor
    return [name, scheme, r.cva, r.cva_lb, r.cva_ub, r.dva, r.dva_lb, r.dva_ub, d.get("n_mc", 0), d.get("dt", ""),
            d.get("grid", "") if d.get("model", "mc") == "mc" else d["model"], round(r.seconds, 3) if timings else 0]


# --------------------------------------------------------------------------- subcommands


def cmd_calibrate(run: Run) -> None:
    res = run.calibrate()
    out = run.cfg.out_dir
    q = run.market.swaptions
    with open(out / "params.json", "w", encoding="utf-8") as fh:
        json.dump({**res.params.as_dict(), "rmse": res.rmse, "mean_abs_error": res.mean_abs_error,
                   "stage1_rmse": float(np.sqrt(np.mean(res.stage1_errors**2))), "converged": res.converged},
                  fh, indent=2)
    rows = []
    for i, e in enumerate(q.expiries):
        for j, t in enumerate(q.tenors):
            rows.append([e, t, q.payer_prices()[i, j], res.stage1_errors[i, j], res.errors[i, j]])
    _write(out / "calibration_errors.csv", ["expiry_y", "tenor_y", "market_payer", "error_constant", "error_final"], rows)
    print(f"calibrated: rmse {res.rmse:.4%}, mean |error| {res.mean_abs_error:.4%}")


def cmd_price(run: Run) -> None:
    rows = []
    d, x = run.market.discount, run.market.forward
    for inst in run.instruments:
        s = inst.spec
        if isinstance(s, SwapSpec):
            rows.append([inst.name, "swap", s.strike, par_rate(s, d, x), swap_price_curves(s, d, x),
                         float(swap_price_state(s, run.model))])
        else:
            u = s.underlying
            rows.append([inst.name, "swaption", u.strike, par_rate(u, d, x), float("nan"),
                         float(swaption_price_g2pp(s, run.model))])
    _write(run.cfg.out_dir / "prices.csv", ["instrument", "kind", "strike", "par_rate", "price_curves", "price_g2pp"], rows)


def _mc_rows(run: Run, write_profiles: bool):
    cfg = run.cfg
    rows = []
    for inst in run.instruments:
        for scheme in cfg.schemes:
            t0 = time.perf_counter()
            cube = run.cube(inst, scheme, cfg.n_mc, cfg.dt, cfg.grid)
            res = run.mc_xva(cube, cfg.dt, cfg.grid, scheme, time.perf_counter() - t0)
            if write_profiles:
                write_exposure(cfg.out_dir, inst.name, scheme, res.profile)
            rows.append(summary_row(inst.name, scheme, res, cfg.timings))
            log.info("%s %s: CVA %.0f DVA %.0f (%.1fs)", inst.name, scheme, res.cva, res.dva, res.seconds)
        if isinstance(inst.spec, SwapSpec) and "none" in cfg.schemes:
            for method in cfg.analytical:
                rows.append(summary_row(inst.name, "none", run.analytical_xva(inst, method, cfg.dt), cfg.timings))
    return rows


def cmd_exposure(run: Run) -> None:
    _mc_rows(run, True)


def cmd_xva(run: Run) -> None:
    rows = _mc_rows(run, True)
    _write(run.cfg.out_dir / "xva_summary.csv", SUMMARY_HEADER, rows)


def cmd_convergence(run: Run) -> None:
    cfg = run.cfg
    out_rows, slopes = [], []
    for inst in run.instruments:
        for scheme in cfg.schemes:
            def one(n, step, kind, inst=inst, scheme=scheme):
                t0 = time.perf_counter()
                cube = run.cube(inst, scheme, n, step, kind)
                return run.mc_xva(cube, step, kind, scheme, time.perf_counter() - t0)

            rows = convergence_study(one, cfg.n_ladder, cfg.ladder_grids)
            for r in rows:
                res = r.result
                out_rows.append([inst.name, scheme, r.n_paths, r.step, r.kind, res.cva, res.cva_lb, res.cva_ub,
                                 res.dva, res.dva_lb, res.dva_ub, r.cva_diff_pct, r.dva_diff_pct,
                                 round(res.seconds, 3) if cfg.timings else 0])
            for step, kind in cfg.ladder_grids:
                sub = [r for r in rows if (r.step, r.kind) == (step, kind)]
                if len(sub) > 1 and all(r.result.cva_ub > r.result.cva_lb for r in sub):
                    slopes.append([inst.name, scheme, step, kind, bound_width_slope(sub)])
    _write(cfg.out_dir / "convergence.csv",
           ["instrument", "scheme", "n_mc", "dt", "grid", "cva", "cva_lb", "cva_ub", "dva", "dva_lb", "dva_ub",
            "cva_diff_pct", "dva_diff_pct", "seconds"], out_rows)
    _write(cfg.out_dir / "convergence_slopes.csv", ["instrument", "scheme", "dt", "grid", "slope"], slopes)


def framework_family(run: Run, inst: InstrumentConfig, scheme: str):
    """MC frameworks over path counts and grids, plus analytical strips for uncollateralised swaps."""
    cfg = run.cfg
    labels, rows = [], []
    grids = [(cfg.dt, cfg.grid)] + [g for g in cfg.ava_grids if g != (cfg.dt, cfg.grid)]
    target = None
    for gi, (step, kind) in enumerate(grids):
        ns = sorted(set(cfg.ava_n) | {cfg.n_mc}) if gi == 0 else [cfg.n_mc]
        t0 = time.perf_counter()
        full = run.cube(inst, scheme, max(ns), step, kind)
        secs = time.perf_counter() - t0
        for n in ns:
            # counter-based streams: the first n paths of the large run are the n-path run
            res = run.mc_xva(full.head(n), step, kind, scheme, secs)
            labels.append(f"mc:{kind}:{step}:{n}")
            rows.append(res)
            if gi == 0 and n == cfg.n_mc:
                target = len(rows) - 1
    if isinstance(inst.spec, SwapSpec) and scheme == "none":
        for method in cfg.ava_analytical:
            for step in sorted({cfg.dt} | {g[0] for g in cfg.ava_grids}, key=lambda s: GRID_STEPS[s]):
                labels.append(f"analytical-{method}:standard:{step}")
                rows.append(run.analytical_xva(inst, method, step))
    values = [r.cva + r.dva for r in rows]
    return FrameworkFamily(labels, values, target), rows


def cmd_ava(run: Run) -> None:
    out = run.cfg.out_dir
    summary = []
    for inst in run.instruments:
        for scheme in run.cfg.schemes:
            fam, rows = framework_family(run, inst, scheme)
            order = np.argsort(fam.values, kind="stable")
            _write(out / f"ava_{inst.name}_{scheme}.csv", ["framework", "cva", "dva", "xva", "role"],
                   [[fam.labels[i], rows[i].cva, rows[i].dva, fam.values[i],
                     "target" if i == fam.target else ("prudent" if i == order[fam.prudent_index()] else "")]
                    for i in order])
            summary.append([inst.name, scheme, len(fam.labels), fam.values[fam.target], fam.prudent(),
                            fam.labels[order[fam.prudent_index()]], mori_ava(fam)])
    _write(out / "ava_summary.csv",
           ["instrument", "scheme", "n_frameworks", "target_xva", "prudent_xva", "prudent_framework", "ava"], summary)


def _audit_sensitivities(run: Run, spec, t, x, y, fixings=None, live=None):
    """SIMM delta vectors, vega risk and failure flags at one time step."""
    simm = run.simm
    if isinstance(spec, SwaptionSpec) and t < spec.expiry - 1e-12:
        zd, zx, base = simm.swaption_zero_deltas(spec, t, x, y)
        _, vr, failed = simm.swaption_vega(spec, t, x, y, base)
    else:
        zd, zx, _ = simm.swap_zero_deltas(underlying_of(spec), t, x, y, fixings, live)
        vr, failed = np.zeros((len(x), len(TENOR_LABELS))), np.zeros(len(x), bool)
    dd, dx = simm.to_simm(zd, zx)
    return dd, dx, vr, failed


def _audit_emit(run: Run, name, path_ids, step, t, sens, rows, margins):
    dd, dx, vr, failed = sens
    p = run.simm.params
    cvr = vr * scaling_function(TENOR_DAYS)
    dm, vm, cm = delta_margin(dd, dx, p), vega_margin(vr, p), curvature_margin(vr, p)
    for k, pid in enumerate(path_ids):
        for j, lab in enumerate(TENOR_LABELS):
            rows.append([name, pid, step, lab, "d", dd[k, j], 0.0, 0.0])
            rows.append([name, pid, step, lab, "x", dx[k, j], 0.0, 0.0])
            rows.append([name, pid, step, lab, "vol", 0.0, vr[k, j], cvr[k, j]])
        margins.append([name, pid, step, round(t * 365.0), dm[k], vm[k], cm[k], dm[k] + vm[k] + cm[k],
                        int(failed[k])])


def cmd_simm_audit(run: Run) -> None:
    """Dump SIMM inputs at t0 (path -1) and, optionally, on simulated paths at chosen grid steps."""
    from .engine import _PathBlock, simulation_times
    from .g2pp import simulate

    cfg = run.cfg
    rows, margins = [], []
    for inst in run.instruments:
        zero = np.zeros(1)
        _audit_emit(run, inst.name, [-1], 0, 0.0, _audit_sensitivities(run, inst.spec, 0.0, zero, zero),
                    rows, margins)
        if cfg.audit_paths <= 0 or not cfg.audit_steps:
            continue
        grid = grid_for(inst.spec, cfg.dt, cfg.grid)
        times = simulation_times(inst.spec, grid)
        xs, ys = simulate(run.model.params, times, underlying_of(inst.spec).maturity, cfg.audit_paths, cfg.seed)
        blk = _PathBlock(run.model, inst.spec, times, xs, ys, cfg.n_nodes)
        live = blk.exercised.astype(float) if blk.is_option else None
        for i in cfg.audit_steps:
            if not 0 < i < len(grid) - 1:
                raise ConfigError(f"[calc] audit_steps: step {i} outside 1..{len(grid) - 2}")
            t = float(grid.primary[i])
            x, y = blk.state(t)
            sens = _audit_sensitivities(run, inst.spec, t, x, y, blk.fixings, live)
            _audit_emit(run, inst.name, range(cfg.audit_paths), i, t, sens, rows, margins)
    _write(cfg.out_dir / "simm_audit.csv",
           ["instrument", "path", "step", "tenor", "curve", "delta_eur_bp", "vr_eur", "cvr_eur"], rows)
    _write(cfg.out_dir / "simm_audit_margins.csv",
           ["instrument", "path", "step", "t_days", "delta_margin", "vega_margin", "curvature_margin", "im",
            "vega_failed"], margins)


COMMANDS = {
    "calibrate": cmd_calibrate,
    "price": cmd_price,
    "exposure": cmd_exposure,
    "xva": cmd_xva,
    "ava": cmd_ava,
    "convergence": cmd_convergence,
    "simm-audit": cmd_simm_audit,
}


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xva-engine", description="G2++ exposure, SIMM initial margin, CVA/DVA and AVA.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="INI file with [market], [instrument.N], [csa], [calc], [output]")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.threads, args.out)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        run = Run(cfg)
        COMMANDS[args.subcommand](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, ImpliedVolError, BootstrapError, FloatingPointError, np.linalg.LinAlgError,
            RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
