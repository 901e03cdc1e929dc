"""Unitary reconstruction from primary data.

Three strategies are implemented:

``brisbane``
    maps measured amplitudes and phases one to one onto a scattering
    matrix and projects it to the closest unitary.
``bristol``
    derives loss-insensitive amplitudes from single-photon count-rate
    ratios and phase magnitudes plus signs from two-photon visibilities,
    then projects to the closest unitary.
``vienna``
    fits the splitting angles and phases of a triangular mesh to a (possibly
    over-complete) set of visibilities by nonlinear least squares.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .circuit import MeshModel, model_visibilities, model_visibilities_jacobian
from .errors import (
    InsufficientDataError,
    LonrecError,
    UnderdeterminedError,
    UnphysicalGainError,
)
from .netcore import (
    ReckParameters,
    closest_unitary,
    compose_reck,
    decompose_reck,
    matrix_to_dict,
)
from .probes import DARK_TOL, bristol_magnitude_keys, bristol_sign_keys

WEIGHT_FLOOR = 1e-4


@dataclass
class ReconstructionResult:
    method: str
    U_hat: np.ndarray
    pre_polar: np.ndarray = None
    params: ReckParameters = None
    beta: np.ndarray = None
    residual: float = None
    start_residual: float = None
    iterations: int = 0
    converged: bool = True
    clamped_cosines: int = 0
    skipped_records: int = 0

    def to_dict(self):
        d = {
            "method": self.method,
            "U_hat": matrix_to_dict(self.U_hat),
            "params": None if self.params is None else self.params.to_dict(),
            "residual": self.residual,
            "diagnostics": {
                "iterations": self.iterations,
                "converged": self.converged,
                "clamped_cosines": self.clamped_cosines,
                "skipped_records": self.skipped_records,
            },
        }
        if self.beta is not None:
            d["beta"] = np.asarray(self.beta).tolist()
        return d


@dataclass(frozen=True)
class OptimizerSettings:
    """Stopping rules and options for the visibility fit.

    ``algorithm`` is ``"trf"`` (trust-region least squares with the
    analytic Jacobian), ``"lm"`` (MINPACK Levenberg-Marquardt; faster but its
    last bits depend on memory layout, so repeated runs may differ in the
    final digits) or ``"bfgs"`` (quasi-Newton on the scalar cost with central
    finite-difference gradients of step ``h``).
    ``weighting`` is ``"sigma"``, ``"unweighted"`` or ``"auto"`` (sigma
    weighting whenever a noise level is known).
    """

    h: float = 1e-7
    gtol: float = 1e-8
    ftol: float = 1e-12
    xtol: float = 1e-12
    max_iter: int = 10_000
    restarts: int = 1
    weighting: str = "auto"
    algorithm: str = "trf"
    seed: int = 0

    def __post_init__(self):
        if min(self.h, self.gtol, self.ftol, self.xtol) <= 0:
            raise LonrecError("optimizer tolerances must be positive")
        if self.max_iter < 1 or self.restarts < 1:
            raise LonrecError("max_iter and restarts must be >= 1")
        if self.weighting not in ("sigma", "unweighted", "auto"):
            raise LonrecError(f"unknown weighting {self.weighting!r}")
        if self.algorithm not in ("trf", "lm", "bfgs"):
            raise LonrecError(f"unknown algorithm {self.algorithm!r}")


# ---------------------------------------------------------------------------
# Brisbane
# ---------------------------------------------------------------------------

def reconstruct_brisbane(tau, theta):
    M = np.asarray(tau, dtype=float) * np.exp(1j * np.asarray(theta, dtype=float))
    return ReconstructionResult("brisbane", closest_unitary(M), pre_polar=M)


def estimate_input_loss(total_out, injected):
    """Input transmittivities ``sqrt(P_out / P_in)``; only valid without output loss."""
    total_out = np.asarray(total_out, dtype=float)
    injected = np.asarray(injected, dtype=float)
    if np.any(injected <= 0):
        raise LonrecError("injected powers must be positive")
    ratio = total_out / injected
    if np.any(ratio > 1 + 1e-6):
        raise UnphysicalGainError(f"output exceeds input power for input {int(np.argmax(ratio)) + 1}")
    return np.sqrt(np.clip(ratio, 0.0, 1.0))


def recover_io_loss(U_hat, intensities, tol=1e-12):
    """Input and output transmittivities from raw intensities and a reconstructed unitary.

    Solves ``log a_out[j] + log a_in[k] = log(I[j,k] / |U[j,k]|**2) / 2`` in the
    least-squares sense over all usable entries. The overall scale is not
    identifiable; it is fixed by ``max(a_out) == 1``. Returns ``(a_in, a_out)``.
    """
    U = np.asarray(U_hat)
    I = np.asarray(intensities, dtype=float)
    m = U.shape[0]
    p = np.abs(U) ** 2
    usable = (p > tol) & (I > 0)
    rows, cols = np.nonzero(usable)
    A = np.zeros((rows.size, 2 * m))
    A[np.arange(rows.size), rows] = 1.0
    A[np.arange(rows.size), m + cols] = 1.0
    if rows.size == 0 or np.linalg.matrix_rank(A) < 2 * m - 1:
        raise UnderdeterminedError("intensity data do not determine all 2m-1 loss parameters")
    rhs = 0.5 * np.log(I[rows, cols] / p[rows, cols])
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    log_out, log_in = sol[:m], sol[m:]
    shift = log_out.max()
    return np.exp(log_in + shift), np.exp(log_out - shift)


# ---------------------------------------------------------------------------
# Bristol
# ---------------------------------------------------------------------------

def sinkhorn(P, tol=1e-15, max_iter=100_000):
    """Scale a positive matrix to doubly stochastic by alternating normalisation."""
    P = np.array(P, dtype=float)
    for _ in range(max_iter):
        P /= P.sum(axis=0, keepdims=True)
        P /= P.sum(axis=1, keepdims=True)
        if np.max(np.abs(P.sum(axis=0) - 1.0)) < tol:
            break
    return P


def _observed_cos(vis, key, tau):
    """cos of the phase combination probed by ``key``, inferred from its visibility."""
    k, l, i, j = (x - 1 for x in key)
    a = tau[i, k] * tau[j, l]
    b = tau[i, l] * tau[j, k]
    return -vis.get(*key) * (a * a + b * b) / (2 * a * b)


def _phase_combo(key, theta):
    k, l, i, j = (x - 1 for x in key)
    return theta[i, k] + theta[j, l] - theta[i, l] - theta[j, k]


def reconstruct_bristol(rates, vis, tie_tol=1e-6):
    """Reconstruct from single-photon count rates and two-photon visibilities.

    Amplitudes: the rate ratios ``x_jk = sqrt(R_jk R_11 / (R_j1 R_1k))`` fix
    ``tau`` up to row and column scalings (so input and output losses drop
    out); those scalings follow from requiring ``tau**2`` to be doubly
    stochastic. Phase magnitudes come from the visibilities on outputs
    ``(1, j)`` and inputs ``(1, k)``, ``theta_22`` is taken positive and the
    remaining signs are chosen one at a time to best match the
    visibilities that couple each phase to already-known ones.
    """
    R = np.asarray(rates, dtype=float)
    m = R.shape[0]
    if R.shape != (m, m) or m < 2:
        raise LonrecError("rates must be a square matrix with m >= 2")
    if np.any(R <= 0):
        raise LonrecError("count rates must be strictly positive")
    mag_keys = bristol_magnitude_keys(m)
    sign_keys = bristol_sign_keys(m)
    absent = vis.missing(mag_keys + sign_keys)
    if absent:
        raise InsufficientDataError(
            f"bristol needs {len(mag_keys)} magnitude and {len(sign_keys)} sign visibilities; "
            f"{len(absent)} missing, e.g. {absent[0]}"
        )

    x = np.sqrt(R * R[0, 0] / (R[:, :1] * R[:1, :]))
    tau = np.sqrt(sinkhorn(x ** 2))

    clamped = 0
    mag = np.zeros((m, m))
    for key in mag_keys:
        c = _observed_cos(vis, key, tau)
        if abs(c) > 1:
            clamped += 1
        mag[key[3] - 1, key[1] - 1] = np.arccos(np.clip(c, -1.0, 1.0))

    theta = np.zeros((m, m))
    if m > 1:
        theta[1, 1] = mag[1, 1]
    for key in sign_keys:
        k, l, i, j = key
        # the unknown phase is the one at (output j, input l) in every sign key
        target = (j - 1, l - 1)
        if key[:2] == (1, 2):
            target = (j - 1, 1)
        c_obs = _observed_cos(vis, key, tau)
        if abs(c_obs) > 1:
            clamped += 1
        theta[target] = _choose_sign(key, theta, target, mag[target], np.clip(c_obs, -1, 1), tie_tol)

    M = tau * np.exp(1j * theta)
    U = closest_unitary(M)
    return ReconstructionResult("bristol", U, pre_polar=M, clamped_cosines=clamped)


def _choose_sign(key, theta, target, magnitude, c_obs, tie_tol):
    if abs(abs(np.cos(magnitude)) - 1.0) < tie_tol:
        return magnitude
    resid = []
    for s in (1.0, -1.0):
        trial = theta.copy()
        trial[target] = s * magnitude
        resid.append(abs(np.cos(_phase_combo(key, trial)) - c_obs))
    return magnitude if resid[0] <= resid[1] else -magnitude


# ---------------------------------------------------------------------------
# Vienna
# ---------------------------------------------------------------------------

def _weights(vis, sigma, weighting):
    if weighting == "auto":
        weighting = "sigma" if sigma > 0 else "unweighted"
    if weighting == "unweighted":
        return np.ones(len(vis))
    if sigma <= 0:
        raise LonrecError("sigma weighting needs sigma > 0")
    return sigma ** 2 * np.maximum(vis.values ** 2, WEIGHT_FLOOR)


class _VisibilityResiduals:
    """Weighted residuals ``(V_measured - V_model) / sqrt(w)`` with a one-entry cache."""

    def __init__(self, model, vis, sigma, weighting):
        self.model = model
        self.idx = vis.index()
        self.data = vis.values
        self.scale = 1.0 / np.sqrt(_weights(vis, sigma, weighting))
        self._key = None

    def _eval(self, x):
        key = np.asarray(x).tobytes()
        if key != self._key:
            M, dM = self.model.matrix_and_jacobian(x)
            v, c, dv = model_visibilities_jacobian(M, dM, self.idx)
            dark = c < DARK_TOL
            r = np.where(dark, 0.0, (self.data - v) * self.scale)
            J = np.where(dark[None, :], 0.0, -dv * self.scale[None, :]).T
            self._key, self._val = key, (r, J, int(dark.sum()))
        return self._val

    def residuals(self, x):
        return self._eval(x)[0]

    def jacobian(self, x):
        return self._eval(x)[1]

    def cost(self, x):
        r = self._eval(x)[0]
        return float(r @ r)

    def skipped(self, x):
        return self._eval(x)[2]


def chi_square_cost(params, vis, sigma=0.0, weighting="auto", return_skipped=False):
    """Weighted sum of squared visibility residuals of a lossless mesh.

    Records whose model visibility is undefined (both paths dark) are
    skipped; pass ``return_skipped=True`` to get their count as well.
    """
    M = compose_reck(params)
    v, c = model_visibilities(M, vis.index())
    w = _weights(vis, sigma, weighting)
    ok = c >= DARK_TOL
    cost = float(np.sum((vis.values[ok] - v[ok]) ** 2 / w[ok]))
    if return_skipped:
        return cost, int((~ok).sum())
    return cost


def _fd_gradient(f, x, h):
    g = np.empty_like(x)
    for p in range(x.size):
        e = np.zeros_like(x)
        e[p] = h
        g[p] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fit_visibilities(model, x0, vis, sigma, settings, bounds=None):
    """Minimise the visibility chi-square over a :class:`MeshModel` parameter vector.

    Returns ``(x, cost, start_cost, iterations, converged, skipped)``. The
    returned cost never exceeds the cost at ``x0``.
    """
    prob = _VisibilityResiduals(model, vis, sigma, settings.weighting)
    x0 = np.asarray(x0, dtype=float)
    start_cost = prob.cost(x0)
    starts = [x0]
    if settings.restarts > 1:
        rng = np.random.default_rng(settings.seed)
        starts += [x0 + rng.normal(0.0, 0.1, x0.size) for _ in range(settings.restarts - 1)]
        if bounds is not None:
            starts = [np.clip(s, bounds[0], bounds[1]) for s in starts]

    best = None
    for s in starts:
        if settings.algorithm in ("trf", "lm"):
            lm_ok = bounds is None and len(vis) >= x0.size
            method = "lm" if settings.algorithm == "lm" and lm_ok else "trf"
            kw = {} if bounds is None else {"bounds": bounds}
            sol = least_squares(
                prob.residuals, s, jac=prob.jacobian, method=method,
                ftol=settings.ftol, xtol=settings.xtol, gtol=settings.gtol,
                max_nfev=settings.max_iter, **kw,
            )
            x, iters, ok = sol.x, int(sol.nfev), sol.status > 0
        else:
            sol = minimize(
                prob.cost, s, jac=lambda y: _fd_gradient(prob.cost, y, settings.h),
                method="L-BFGS-B" if bounds is not None else "BFGS",
                bounds=None if bounds is None else list(zip(*bounds)),
                options={"gtol": settings.gtol, "maxiter": settings.max_iter},
            )
            x, iters, ok = sol.x, int(sol.nit), bool(sol.success)
        cost = prob.cost(x)
        if best is None or cost < best[1]:
            best = (x, cost, iters, ok)
    x, cost, iters, ok = best
    if cost > start_cost:
        x, cost = x0, start_cost
    return x, cost, start_cost, iters, ok, prob.skipped(x)


def reconstruct_vienna(vis, start, settings=None, sigma=0.0, method="vienna"):
    """Fit a triangular mesh to visibilities, starting from ``start`` parameters.

    The first cell's phase is gauge-fixed to zero. Splitting angles are
    optimised unconstrained; the optimum is mapped back into the canonical
    range ``[0, pi/2]`` by re-decomposing the fitted unitary, which leaves
    every visibility unchanged.
    """
    settings = settings or OptimizerSettings()
    if start.m != vis.m:
        raise LonrecError("start parameters and visibilities differ in mode count")
    model = MeshModel(vis.m, fix_gauge=True)
    x0 = model.pack(start.lam, start.phi)
    x, cost, start_cost, iters, ok, skipped = fit_visibilities(model, x0, vis, sigma, settings)
    params = decompose_reck(model.matrix(x), fix_gauge=True)
    return ReconstructionResult(
        method, compose_reck(params), params=params, residual=cost, start_residual=start_cost,
        iterations=iters, converged=ok, skipped_records=skipped,
    )


def vienna_start(tau, theta):
    """Starting parameters for a black-box network: decompose the Brisbane estimate."""
    return decompose_reck(reconstruct_brisbane(tau, theta).U_hat, fix_gauge=True)
