# %% [markdown]
# # G2++ swaption pricing and the shifted-Black view of it
# Price the 5x10 ATM payer swaption with the published parameters, then read
# the price back as shifted-Black implied volatilities.

# %%
from xva_engine.g2pp import PUBLISHED_PARAMS, G2ppModel
from xva_engine.marketdata import load_market
from xva_engine.pricing import (
    AtmVolSurface,
    SwaptionSpec,
    annuity_curves,
    black_swaption_price,
    implied_vol,
    instrument_menu,
    par_rate,
    swap_price_curves,
    swap_price_state,
    swaption_price_g2pp,
)

mkt = load_market()
model = G2ppModel(PUBLISHED_PARAMS, mkt.discount, mkt.forward)
menu = instrument_menu()
print(PUBLISHED_PARAMS)

# %% [markdown]
# Swaps first: the state formula at x = y = 0 must equal the curve formula.

# %%
for name, inst in menu.items():
    sw = getattr(inst, "underlying", inst)
    a = swap_price_curves(sw, mkt.discount, mkt.forward)
    b = float(swap_price_state(sw, model))
    print(f"{name:24s} curves {a:16,.2f}  state {b:16,.2f}")

# %% [markdown]
# The swaption: one-dimensional Gauss-Legendre integral over x, with the
# inner y-integral in closed form once the critical level is found.

# %%
opt = menu["swaption_5x10_ATM"]
und = opt.underlying
v = swaption_price_g2pp(opt, model)
fwd, ann = par_rate(und, mkt.discount, mkt.forward), annuity_curves(und, mkt.discount)
print(f"price {v:,.0f} EUR, forward swap rate {fwd:.4%}, annuity {ann:.4f}")
for shift in (0.01, 0.02, 0.06, 0.10):
    iv = implied_vol(v, fwd, und.strike, ann, shift, 1, und.notional, opt.expiry)
    print(f"  shift {shift:.2f}: implied vol {iv:.4f}")

# %% [markdown]
# Market quote for comparison, and put-call parity in the model.

# %%
vols = AtmVolSurface.from_quotes(mkt.swaptions, mkt.discount, mkt.forward, 0.01)
mv = vols(5.0, 10.0)
print(f"market ATM vol (shift 1%): {mv:.4f}; Black price "
      f"{black_swaption_price(fwd, und.strike, ann, 0.01, mv * mv * 5.0, 1, und.notional):,.0f}")
rec = SwaptionSpec(und.with_omega(-1), opt.expiry)
print(f"payer - receiver = {v - swaption_price_g2pp(rec, model):,.2f}; forward swap = {float(swap_price_state(und, model)):,.2f}")
