"""Multi-curve G2++ with a piecewise-constant volatility multiplier Gamma(t).

Short rate r_c(t) = x(t) + y(t) + phi_c(t) per curve c, with

    dx = -a x dt + sigma Gamma(t) dW1,   dy = -b y dt + eta Gamma(t) dW2,
    d<W1, W2> = rho dt.

Gamma_i applies on (T_{i-1}, T_i]; Gamma_1 also covers [0, T_1] and the
last value extends past the final breakpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .marketdata import ZeroCurve
from .rng import path_normals

CALIBRATION_EXPIRIES = (2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 12.0, 15.0, 20.0, 25.0, 30.0)


@dataclass(frozen=True)
class G2ppParams:
    a: float
    b: float
    sigma: float
    eta: float
    rho: float
    gamma: tuple = (1.0,)
    breaks: tuple = ()

    def __post_init__(self):
        gamma = tuple(float(g) for g in np.atleast_1d(self.gamma))
        breaks = tuple(float(t) for t in np.atleast_1d(self.breaks)) if len(np.atleast_1d(self.breaks)) else ()
        if len(gamma) == 1 and breaks:
            gamma = gamma * len(breaks)
        if breaks and len(gamma) != len(breaks):
            raise ValueError("need one Gamma value per breakpoint")
        if min(self.a, self.b, self.sigma, self.eta) <= 0:
            raise ValueError("a, b, sigma, eta must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if any(g <= 0 for g in gamma):
            raise ValueError("Gamma values must be positive")
        if any(t1 >= t2 for t1, t2 in zip(breaks, breaks[1:])):
            raise ValueError("Gamma breakpoints must be strictly increasing")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "breaks", breaks)

    @property
    def segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lower edges, upper edges, Gamma^2) of the volatility step function."""
        if not self.breaks:
            return np.array([0.0]), np.array([np.inf]), np.array([self.gamma[0] ** 2])
        edges = np.concatenate(([0.0], self.breaks))
        upper = np.concatenate((edges[1:], [np.inf]))
        g = np.array(self.gamma + (self.gamma[-1],))
        return edges, upper, g**2

    def gamma_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not self.breaks:
            return np.full_like(t, self.gamma[0])
        idx = np.minimum(np.searchsorted(self.breaks, t, side="left"), len(self.gamma) - 1)
        return np.asarray(self.gamma)[idx]

    def with_vols(self, sigma: float, eta: float) -> "G2ppParams":
        return replace(self, sigma=sigma, eta=eta)

    def scaled_vols(self, eps_sigma: float, eps_eta: float) -> "G2ppParams":
        return replace(self, sigma=self.sigma * (1 + eps_sigma), eta=self.eta * (1 + eps_eta))

    def as_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "sigma": self.sigma, "eta": self.eta, "rho": self.rho,
            "gamma": list(self.gamma), "breaks": list(self.breaks),
        }


PUBLISHED_PARAMS = G2ppParams(
    a=1.1664, b=0.0304, sigma=0.0501, eta=0.0084, rho=-1.0,
    gamma=(0.9530, 0.9781, 1.0895, 1.0709, 1.0032, 1.0776, 1.0488,
           1.0186, 1.1000, 0.9608, 1.0114, 0.9553, 0.9629, 0.9340),
    breaks=CALIBRATION_EXPIRIES,
)


def B(z: float, t, T):
    """(1 - exp(-z (T - t))) / z."""
    return -np.expm1(-z * (np.asarray(T, float) - np.asarray(t, float))) / z


def _gamma_integral(params: G2ppParams, c: float, ref, s, t):
    """Integral over [s, t] of Gamma(u)^2 exp(-c (ref - u)) du, broadcast over ref, s, t.

    Requires ref >= t. c = 0 gives the plain integral of Gamma^2.
    """
    lo_e, hi_e, g2 = params.segments
    ref = np.asarray(ref, float)[..., None]
    s = np.asarray(s, float)[..., None]
    t = np.asarray(t, float)[..., None]
    lo = np.clip(lo_e, s, t)
    hi = np.clip(hi_e, s, t)
    width = hi - lo
    if c == 0.0:
        return np.sum(g2 * width, axis=-1)
    term = np.exp(-c * (ref - hi)) * (-np.expm1(-c * width)) / c
    return np.sum(g2 * term, axis=-1)


def variance_V(params: G2ppParams, t, T):
    """Variance of the integral of x + y over [t, T] given information at t."""
    t = np.asarray(t, float)
    T = np.asarray(T, float)
    if np.any(t > T + 1e-14):
        raise ValueError("variance_V needs t <= T")
    a, b, s, e, r = params.a, params.b, params.sigma, params.eta, params.rho
    I = lambda c: _gamma_integral(params, c, T, t, T)  # noqa: E731
    i0 = I(0.0)
    ia, ib = I(a), I(b)
    vx = s * s / (a * a) * (i0 - 2.0 * ia + I(2 * a))
    vy = e * e / (b * b) * (i0 - 2.0 * ib + I(2 * b))
    vxy = 2.0 * r * s * e / (a * b) * (i0 - ia - ib + I(a + b))
    return vx + vy + vxy


def drift_M(params: G2ppParams, s, t, T_measure):
    """Forward-measure drift terms (M_x, M_y) accumulated over [s, t]."""
    a, b, sg, e, r = params.a, params.b, params.sigma, params.eta, params.rho
    I = lambda c: _gamma_integral(params, c, t, s, t)  # noqa: E731
    ia, ib, iab = I(a), I(b), I(a + b)
    da = np.exp(-a * (T_measure - np.asarray(t, float)))
    db = np.exp(-b * (T_measure - np.asarray(t, float)))
    mx = (sg * sg / a + r * sg * e / b) * ia - sg * sg / a * da * I(2 * a) - r * sg * e / b * db * iab
    my = (e * e / b + r * sg * e / a) * ib - e * e / b * db * I(2 * b) - r * sg * e / a * da * iab
    return mx, my


def transition_covariance(params: G2ppParams, s, t):
    a, b, sg, e, r = params.a, params.b, params.sigma, params.eta, params.rho
    I = lambda c: _gamma_integral(params, c, t, s, t)  # noqa: E731
    cov = np.empty(np.shape(np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))[0]) + (2, 2))
    cov[..., 0, 0] = sg * sg * I(2 * a)
    cov[..., 1, 1] = e * e * I(2 * b)
    cov[..., 0, 1] = cov[..., 1, 0] = r * sg * e * I(a + b)
    return cov


def transition_moments(params: G2ppParams, s, t, T_measure, x_s=0.0, y_s=0.0):
    """Conditional mean and covariance of (x(t), y(t)) given (x(s), y(s)) under the T-forward measure."""
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    if np.any(s > t + 1e-14):
        raise ValueError("transition needs s <= t")
    mx, my = drift_M(params, s, t, T_measure)
    mean_x = np.asarray(x_s) * np.exp(-params.a * (t - s)) - mx
    mean_y = np.asarray(y_s) * np.exp(-params.b * (t - s)) - my
    return mean_x, mean_y, transition_covariance(params, s, t)


def cholesky_2x2(cov, tol: float = 1e-12):
    """Lower factor of a 2x2 covariance with rank-1 repair (handles |corr| = 1)."""
    vxx = np.maximum(cov[..., 0, 0], 0.0)
    vyy = np.maximum(cov[..., 1, 1], 0.0)
    cxy = cov[..., 0, 1]
    l11 = np.sqrt(vxx)
    with np.errstate(divide="ignore", invalid="ignore"):
        l21 = np.where(l11 > 0, cxy / np.where(l11 > 0, l11, 1.0), 0.0)
    rem = vyy - l21 * l21
    if np.any(rem < -1e-8 * np.maximum(vyy, 1e-300)):
        raise ValueError("covariance is not positive semi-definite")
    rem = np.where(rem < tol * vyy, 0.0, rem)
    return l11, l21, np.sqrt(rem)


def shift_integral_phi(params: G2ppParams, curve: ZeroCurve, t, T):
    """exp(-int_t^T phi_c(u) du) from the market curve and the model variance."""
    return np.exp(
        curve.log_discount(T) - curve.log_discount(t) - 0.5 * (variance_V(params, 0.0, T) - variance_V(params, 0.0, t))
    )


@dataclass
class G2ppModel:
    """Parameters plus the two initial curves (discount ``d`` and forwarding ``x``)."""

    params: G2ppParams
    discount: ZeroCurve
    forward: ZeroCurve

    def curve(self, curve_id: str) -> ZeroCurve:
        return self.discount if curve_id == "d" else self.forward

    def with_params(self, params: G2ppParams) -> "G2ppModel":
        return G2ppModel(params, self.discount, self.forward)

    def log_A(self, curve_id: str, t, T):
        """ln A_c(t, T) so that P_c(t, T) = A_c exp(-B(a) x - B(b) y)."""
        c = self.curve(curve_id)
        p = self.params
        t = np.asarray(t, float)
        T = np.asarray(T, float)
        return (
            c.log_discount(T)
            - c.log_discount(t)
            + 0.5 * (variance_V(p, t, T) - variance_V(p, 0.0, T) + variance_V(p, 0.0, t))
        )

    def zcb(self, curve_id: str, t, T, x, y):
        """P_c(t, T) on states; t scalar, T array of maturities, x/y arrays of paths."""
        p = self.params
        la = self.log_A(curve_id, t, T)
        x = np.asarray(x, float)[..., None]
        y = np.asarray(y, float)[..., None]
        return np.exp(la - B(p.a, t, T) * x - B(p.b, t, T) * y)

    def psi(self, T1, T2):
        """Deterministic ratio linking forwarding and discounting ZCBs over [T1, T2]."""
        d, x = self.discount, self.forward
        return np.exp(d.log_discount(T2) - d.log_discount(T1) + x.log_discount(T1) - x.log_discount(T2))


def sample_transition(params: G2ppParams, x, y, s: float, t: float, T_measure: float, z1, z2):
    """Exact Gaussian step from s to t given standard normal draws."""
    mx, my, cov = transition_moments(params, s, t, T_measure, x, y)
    l11, l21, l22 = cholesky_2x2(cov)
    return mx + l11 * z1, my + l21 * z1 + l22 * z2


def simulate(params: G2ppParams, times, T_measure: float, n_paths: int, seed: int, first_path: int = 0):
    """Factor paths on ``times`` (years, starting at 0) under the T_measure-forward measure.

    Returns arrays of shape (n_paths, len(times)). Path m uses its own
    counter-based stream, so a path never depends on how many others are drawn.
    """
    times = np.asarray(times, float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("simulation times must start at 0 and increase")
    if times[-1] > T_measure + 1e-12:
        raise ValueError("simulation horizon beyond the measure maturity")
    n = len(times) - 1
    s, t = times[:-1], times[1:]
    mx, my = drift_M(params, s, t, T_measure)
    cov = transition_covariance(params, s, t)
    l11, l21, l22 = cholesky_2x2(cov)
    ea, eb = np.exp(-params.a * (t - s)), np.exp(-params.b * (t - s))
    z = path_normals(seed, first_path, n_paths, n)
    x = np.zeros((n_paths, n + 1))
    y = np.zeros((n_paths, n + 1))
    for k in range(n):
        z1, z2 = z[:, k, 0], z[:, k, 1]
        x[:, k + 1] = x[:, k] * ea[k] - mx[k] + l11[k] * z1
        y[:, k + 1] = y[:, k] * eb[k] - my[k] + l21[k] * z1 + l22[k] * z2
    return x, y
