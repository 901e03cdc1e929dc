"""Maximum-likelihood Weibull and Burr XII fits with 1/e peak widths.

Fidelities cluster just below one, so they are fitted as infidelities
``x = 1 - F`` on the positive half-line; the peak and its widths are then
mapped back (a left width in fidelity is a right width in infidelity).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from ..errors import LonrecError

MIN_SAMPLES = 20
HIST_BINS = 50


def weibull_pdf(x, k, lam):
    x = np.asarray(x, dtype=float)
    z = x / lam
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = (k / lam) * z ** (k - 1) * np.exp(-(z ** k))
    return np.where(x > 0, out, 0.0)


def burr12_pdf(x, c, k, s):
    x = np.asarray(x, dtype=float)
    # log space keeps z**c from overflowing into inf * 0 for large shapes
    with np.errstate(divide="ignore", invalid="ignore"):
        logz = np.log(np.where(x > 0, x, 1.0) / s)
        out = np.exp(np.log(c * k / s) + (c - 1) * logz - (k + 1) * np.logaddexp(0.0, c * logz))
    return np.where(x > 0, out, 0.0)


def weibull_mode(k, lam):
    return lam * ((k - 1) / k) ** (1 / k) if k > 1 else 0.0


def burr12_mode(c, k, s):
    return s * ((c - 1) / (c * k + 1)) ** (1 / c) if c > 1 else 0.0


@dataclass
class FitSummary:
    """Fitted family, its parameters and the peak of the density.

    ``mode``, ``width_left`` and ``width_right`` live in the fitted variable
    (infidelity, or the raw values when ``variable == "value"``).
    """

    family: str
    params: tuple
    stderr: tuple
    mode: float
    width_left: float
    width_right: float
    n: int
    variable: str = "infidelity"
    bins: int = HIST_BINS
    degenerate: bool = False
    interior_mode: bool = True
    histogram: np.ndarray = field(default=None, repr=False)

    @property
    def f_mode(self):
        return 1.0 - self.mode if self.variable == "infidelity" else self.mode

    @property
    def err_left(self):
        """Distance from the peak to the lower 1/e point on the reported axis."""
        return self.width_right if self.variable == "infidelity" else self.width_left

    @property
    def err_right(self):
        return self.width_left if self.variable == "infidelity" else self.width_right

    def pdf(self, x):
        if self.family == "weibull":
            return weibull_pdf(x, *self.params)
        if self.family == "burr12":
            return burr12_pdf(x, *self.params)
        raise LonrecError(f"no density for family {self.family!r}")


def histogram(values, bins=HIST_BINS):
    """Counts of ``values`` in ``bins`` equal bins spanning their range."""
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        hi = lo + 1e-12
    return np.histogram(values, bins=bins, range=(lo, hi))


def _weibull_nll(theta, x):
    k, lam = theta
    if k <= 0 or lam <= 0:
        return np.inf
    z = x / lam
    return -float(np.sum(np.log(k / lam) + (k - 1) * np.log(z) - z ** k))


def _burr12_nll(theta, x):
    c, k, s = theta
    if c <= 0 or k <= 0 or s <= 0:
        return np.inf
    lz = np.log(x / s)
    return -float(np.sum(np.log(c * k / s) + (c - 1) * lz - (k + 1) * np.logaddexp(0.0, c * lz)))


def _burr12_log_nll(t, y):
    """Burr XII negative log-likelihood and gradient in log-parameters."""
    c, k, s = np.exp(t)
    lz = np.log(y / s)
    u = c * lz
    sp = np.logaddexp(0.0, u)
    p = np.exp(u - sp)
    n = y.size
    nll = -(n * np.log(c * k / s) + (c - 1) * lz.sum() - (k + 1) * sp.sum())
    d_c = -(n / c + lz.sum() - (k + 1) * np.sum(p * lz))
    d_k = -(n / k - sp.sum())
    d_s = (n * c - (k + 1) * c * p.sum()) / s
    return float(nll), np.array([d_c * c, d_k * k, d_s * s])


def _stderr(nll, theta):
    """Standard errors from the inverse observed information (central differences)."""
    theta = np.asarray(theta, dtype=float)
    p = theta.size
    h = 1e-4 * np.abs(theta)
    H = np.empty((p, p))
    f0 = nll(theta)
    for a in range(p):
        for b in range(a, p):
            ea = np.zeros(p)
            eb = np.zeros(p)
            ea[a] = h[a]
            eb[b] = h[b]
            if a == b:
                val = (nll(theta + ea) - 2 * f0 + nll(theta - ea)) / h[a] ** 2
            else:
                val = (nll(theta + ea + eb) - nll(theta + ea - eb) - nll(theta - ea + eb) + nll(theta - ea - eb)) / (4 * h[a] * h[b])
            H[a, b] = H[b, a] = val
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return tuple([np.nan] * p)
    return tuple(np.sqrt(np.clip(np.diag(cov), 0, None)))


def _peak_widths(pdf, mode, scale):
    """Distances from ``mode`` to where ``pdf`` drops to ``pdf(mode)/e`` on either side."""
    peak = float(pdf(mode))
    level = peak / np.e
    g = lambda x: float(pdf(x)) - level
    xtol = 1e-8 * min(1.0, scale)
    left = 0.0
    if mode > 0 and g(0.0) < 0:
        left = mode - brentq(g, 0.0, mode, xtol=xtol)
    hi = mode + scale
    while g(hi) > 0:
        hi = mode + 2 * (hi - mode)
    right = brentq(g, mode, hi, xtol=xtol) - mode
    return left, right


def _prepare(values, variable, min_samples):
    values = np.asarray(values, dtype=float).reshape(-1)
    values = values[np.isfinite(values)]
    if values.size < min_samples:
        raise LonrecError(f"need at least {min_samples} samples, got {values.size}")
    x = 1.0 - values if variable == "infidelity" else values
    return np.maximum(x, 1e-300)


def _degenerate(family, x, variable, n_params):
    return FitSummary(family, (np.nan,) * n_params, (np.nan,) * n_params, float(x[0]), 0.0, 0.0,
                      x.size, variable, degenerate=True, interior_mode=False)


def fit_weibull(values, variable="infidelity", min_samples=MIN_SAMPLES):
    """Maximum-likelihood two-parameter Weibull fit.

    ``values`` are fidelities by default (fitted as ``1 - F``); pass
    ``variable="value"`` to fit positive values directly. The shape follows
    from the profile-likelihood equation, the scale in closed form.
    """
    x = _prepare(values, variable, min_samples)
    if np.ptp(x) <= 1e-15 * max(1.0, abs(x[0])):
        return _degenerate("weibull", x, variable, 2)
    g = np.exp(np.mean(np.log(x)))
    y = x / g
    ly = np.log(y)

    def score(logk):
        k = np.exp(logk)
        w = np.exp(k * ly - np.max(k * ly))
        return 1.0 / k + ly.mean() - np.sum(w * ly) / np.sum(w)

    lo, hi = -7.0, 7.0
    while score(hi) > 0 and hi < 50:
        hi += 5
    while score(lo) < 0 and lo > -50:
        lo -= 5
    k = float(np.exp(brentq(score, lo, hi, xtol=1e-14)))
    top = np.max(k * ly)
    lam = float(g * np.exp((top + np.log(np.mean(np.exp(k * ly - top)))) / k))
    se = _stderr(lambda t: _weibull_nll(t, x), (k, lam))
    return _finish("weibull", (k, lam), se, x, variable, weibull_mode(k, lam), lambda t: weibull_pdf(t, k, lam), k > 1)


def fit_burr12(values, variable="value", min_samples=MIN_SAMPLES):
    """Maximum-likelihood Burr XII fit ``f(x; c, k, s)``.

    For fixed ``c`` and ``s`` the optimal ``k`` is ``n / sum(log1p((x/s)**c))``,
    so only ``(log c, log s)`` are searched numerically.
    """
    x = _prepare(values, variable, min_samples)
    if np.ptp(x) <= 1e-15 * max(1.0, abs(x[0])):
        return _degenerate("burr12", x, variable, 3)
    g = np.exp(np.mean(np.log(x)))
    y = x / g
    n = y.size

    def k_of(c, s):
        return n / np.sum(np.logaddexp(0.0, c * np.log(y / s)))

    def profile(t):
        c, s = np.exp(t)
        return _burr12_nll((c, k_of(c, s), s), y)

    wb = fit_weibull(y, variable="value", min_samples=1)
    best = None
    for c0, s0 in ((wb.params[0], 1.0), (wb.params[0] * 1.5, 2.0), (max(wb.params[0], 1.1), 0.5)):
        sol = minimize(profile, np.log([c0, s0]), method="Nelder-Mead", options={"xatol": 1e-6, "fatol": 1e-9})
        if best is None or sol.fun < best.fun:
            best = sol
    c, s = np.exp(best.x)
    t0 = np.log([c, k_of(c, s), s])
    sol = minimize(_burr12_log_nll, t0, args=(y,), jac=True, method="BFGS", options={"gtol": 1e-10})
    c, k, s = np.exp(sol.x if sol.fun <= best.fun else t0)
    c, k, s = float(c), float(k), float(s * g)
    se = _stderr(lambda t: _burr12_nll(t, x), (c, k, s))
    return _finish("burr12", (c, k, s), se, x, variable, burr12_mode(c, k, s), lambda t: burr12_pdf(t, c, k, s), c > 1)


def _finish(family, params, se, x, variable, mode, pdf, interior):
    if not interior:
        mode = float(x.min())
    scale = float(np.std(x)) or float(abs(mode)) or 1.0
    left, right = _peak_widths(pdf, mode, scale)
    if not interior:
        left = 0.0
    counts, _ = histogram(1.0 - x if variable == "infidelity" else x)
    return FitSummary(family, params, se, float(mode), float(left), float(right), x.size, variable,
                      interior_mode=interior, histogram=counts)
