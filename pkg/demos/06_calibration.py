# %% [markdown]
# # Calibrating G2++ to the ATM swaption matrix
# Stage 1 fits constant parameters by bounded least squares on relative price
# errors. Stage 2 adds a piecewise-constant volatility multiplier per expiry.
# Pass `--full` to fit the whole 14x13 matrix (a few minutes); the default
# fits a 4x4 sub-matrix.

# %%
import sys

import numpy as np

from xva_engine.calibration import SwaptionCalibrator, calibrate
from xva_engine.g2pp import PUBLISHED_PARAMS
from xva_engine.marketdata import SwaptionQuoteMatrix, load_market

mkt = load_market()
q = mkt.swaptions
if "--full" not in sys.argv:
    ei = [list(q.expiries).index(e) for e in (2.0, 5.0, 10.0, 20.0)]
    ti = [list(q.tenors).index(t) for t in (2.0, 5.0, 10.0, 20.0)]
    q = SwaptionQuoteMatrix(q.expiries[ei], q.tenors[ti], q.straddles[np.ix_(ei, ti)])

# %% [markdown]
# How well do the published parameters reproduce these quotes?

# %%
err = SwaptionCalibrator(q, mkt.discount, mkt.forward).errors(PUBLISHED_PARAMS)
print(f"published parameters: mean |error| {np.mean(np.abs(err)):.2%}, worst {err.flat[np.abs(err).argmax()]:+.2%}")

# %%
res = calibrate(q, mkt.discount, mkt.forward)
p = res.params
print(f"stage 1: a={res.stage1_params.a:.4f} b={res.stage1_params.b:.4f} sigma={res.stage1_params.sigma:.4f} "
      f"eta={res.stage1_params.eta:.4f} rho={res.stage1_params.rho:.4f}  "
      f"rmse {np.sqrt(np.mean(res.stage1_errors**2)):.2%}")
print(f"stage 2: gamma = {np.round(p.gamma, 3).tolist()}  rmse {res.rmse:.2%}, mean |error| {res.mean_abs_error:.2%}")
