# %% [markdown]
# # Market data at 2018-12-28
# Load the bundled OIS and 6M curves plus the two CDS curves, then look at
# what the interpolation and the hazard bootstrap produce.

# %%
import numpy as np

from xva_engine.marketdata import load_market, simple_forward_rate

mkt = load_market()
d, x = mkt.discount, mkt.forward
print(f"discount pillars: {len(d.days)}, last at {d.days[-1]} days ({d.horizon:.1f}y)")
print(f"forward pillars:  {len(x.days)}, last at {x.days[-1]} days")

# %% [markdown]
# Log-linear interpolation in ln P means piecewise-flat instantaneous
# forwards. The 6M forwards below are the projected Euribor fixings.

# %%
for t in (0.5, 2.0, 5.0, 10.0, 20.0, 30.0):
    print(f"t={t:5.1f}y  P_d={d.discount(t):.5f}  P_x={x.discount(t):.5f}  "
          f"F_6M={simple_forward_rate(x, t, t + 0.5, 0.5):+.4%}")

# %% [markdown]
# Going past the last pillar is an error rather than a silent extrapolation.

# %%
try:
    d.discount(d.horizon + 1.0)
except ValueError as exc:
    print("refused:", exc)

# %% [markdown]
# Credit: piecewise-constant hazards from par spreads with 40% recovery.

# %%
for party, c in mkt.credit.items():
    t = np.array([1.0, 5.0, 10.0, 15.0, 30.0])
    s = c.survival(t)
    print(party, "spreads (bp):", c.spreads_bps.round(1).tolist())
    print("   survival at", t.tolist(), "->", s.round(4).tolist())
