"""Synthetic primary data: two-photon visibilities, amplitudes and phases.

Visibility records are keyed by 1-based mode indices ``(k, l, i, j)``:
photons enter inputs ``k < l`` and coincidences are counted at outputs
``i < j``.
"""

import csv
from dataclasses import dataclass, field, replace
from math import comb

import numpy as np

from .circuit import model_visibilities
from .errors import (
    DegenerateColumnError,
    GaugeDegenerateError,
    InsufficientDataError,
    InsufficientModesError,
    InvalidDimensionError,
    LonrecError,
    UndefinedVisibilityError,
)
from .netcore import as_matrix, wrap_phase

DARK_TOL = 1e-30
SELECTIONS = ("full", "reduced", "bristol")


def visibility_keys(m, selection="full"):
    """1-based ``(k, l, i, j)`` keys of a visibility selection.

    ``full``: every input pair and output pair, ``C(m,2)**2`` records.
    ``reduced``: one photon always in input 1, ``(m-1)*C(m,2)`` records.
    ``bristol``: the ``(m-1)**2`` phase-magnitude records plus the
    ``(m-1)**2 - 1`` records fixing the phase signs.
    """
    if selection == "full":
        pairs = [(k, l) for k in range(1, m + 1) for l in range(k + 1, m + 1)]
        keys = [(k, l, i, j) for k, l in pairs for i, j in pairs]
    elif selection == "reduced":
        if m < 3:
            raise InsufficientModesError(f"the reduced set needs m >= 3, got {m}")
        outs = [(i, j) for i in range(1, m + 1) for j in range(i + 1, m + 1)]
        keys = [(1, l, i, j) for l in range(2, m + 1) for i, j in outs]
    elif selection == "bristol":
        keys = bristol_magnitude_keys(m) + bristol_sign_keys(m)
    else:
        raise LonrecError(f"unknown selection {selection!r}")
    return np.array(keys, dtype=int).reshape(-1, 4)


def bristol_magnitude_keys(m):
    # outputs (1, j), inputs (1, k) probe |theta_jk|
    return [(1, k, 1, j) for j in range(2, m + 1) for k in range(2, m + 1)]


def bristol_sign_keys(m):
    keys = [(2, k, 1, 2) for k in range(3, m + 1)]
    keys += [(1, 2, 2, j) for j in range(3, m + 1)]
    keys += [(2, k, 2, j) for j in range(3, m + 1) for k in range(3, m + 1)]
    return keys


@dataclass(frozen=True)
class VisibilitySet:
    m: int
    keys: np.ndarray
    values: np.ndarray
    selection: str = "full"
    _lookup: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        keys = np.asarray(self.keys, dtype=int).reshape(-1, 4)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if keys.shape[0] != values.size:
            raise LonrecError("keys and values differ in length")
        k, l, i, j = keys.T
        if keys.size and (np.any(k >= l) or np.any(i >= j) or keys.min() < 1 or keys.max() > self.m):
            raise LonrecError("visibility keys must satisfy 1 <= k < l <= m and 1 <= i < j <= m")
        lookup = {tuple(int(x) for x in key): n for n, key in enumerate(keys)}
        if len(lookup) != keys.shape[0]:
            raise LonrecError("duplicate visibility keys")
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_lookup", lookup)

    def __len__(self):
        return self.values.size

    def index(self):
        """0-based ``(k, l, i, j)`` index arrays for vectorised evaluation."""
        return tuple(self.keys[:, c] - 1 for c in range(4))

    def __contains__(self, key):
        return tuple(key) in self._lookup

    def get(self, k, l, i, j):
        return self.values[self._lookup[(k, l, i, j)]]

    def missing(self, keys):
        return [tuple(int(x) for x in key) for key in keys if tuple(int(x) for x in key) not in self._lookup]

    def subset(self, selection):
        """Restrict to a named selection; raises InsufficientDataError if records are absent."""
        wanted = visibility_keys(self.m, selection)
        absent = self.missing(wanted)
        if absent:
            raise InsufficientDataError(
                f"{len(absent)} of {len(wanted)} records of the {selection!r} selection are missing, "
                f"e.g. {absent[0]}"
            )
        rows = [self._lookup[tuple(int(x) for x in key)] for key in wanted]
        return VisibilitySet(self.m, wanted, self.values[rows], selection)

    def with_values(self, values):
        return VisibilitySet(self.m, self.keys, values, self.selection)

    def to_records(self):
        return [
            {"k": int(k), "l": int(l), "i": int(i), "j": int(j), "v": float(v)}
            for (k, l, i, j), v in zip(self.keys, self.values)
        ]

    @classmethod
    def from_records(cls, m, records, selection="full"):
        keys = [(r["k"], r["l"], r["i"], r["j"]) for r in records]
        return cls(m, np.array(keys, dtype=int).reshape(-1, 4), [r["v"] for r in records], selection)


def _check_indices(m, *idx):
    for x in idx:
        if not 1 <= x <= m:
            raise InvalidDimensionError(f"mode index {x} outside 1..{m}")


def two_photon_visibility(M, k, l, i, j):
    """Visibility ``(C - Q) / C`` of photons entering k, l and detected at i, j.

    ``Q = |M_ik M_jl + M_il M_jk|**2`` is the indistinguishable coincidence
    probability and ``C = |M_ik M_jl|**2 + |M_il M_jk|**2`` the
    distinguishable one. ``M`` need not be unitary.
    """
    M = as_matrix(M)
    _check_indices(M.shape[0], k, l, i, j)
    if k == l or i == j:
        raise LonrecError("input and output modes must be distinct")
    v, c = model_visibilities(M, (np.array([k - 1]), np.array([l - 1]), np.array([i - 1]), np.array([j - 1])))
    if c[0] < DARK_TOL:
        raise UndefinedVisibilityError(f"both two-photon paths dark for {(k, l, i, j)}")
    return float(v[0])


def visibility_set(M, selection="full"):
    M = as_matrix(M)
    m = M.shape[0]
    keys = visibility_keys(m, selection)
    v, c = model_visibilities(M, tuple(keys[:, n] - 1 for n in range(4)))
    dark = np.flatnonzero(c < DARK_TOL)
    if dark.size:
        raise UndefinedVisibilityError(f"both two-photon paths dark for {tuple(keys[dark[0]])}")
    return VisibilitySet(m, keys, v, selection)


def transition_amplitudes(M, normalization="column-l2"):
    """``tau[j, k] = |M[j, k]|``, optionally scaled so every input column has unit L2 norm."""
    tau = np.abs(as_matrix(M))
    if normalization == "raw":
        return tau
    if normalization != "column-l2":
        raise LonrecError(f"unknown normalization {normalization!r}")
    norms = np.linalg.norm(tau, axis=0)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise DegenerateColumnError(f"column {bad[0] + 1} is all zero")
    return tau / norms[None, :]


def relative_phases(M, tol=1e-300):
    """Phases relative to the first row and column, wrapped to (-pi, pi]."""
    M = as_matrix(M)
    for j in range(M.shape[0]):
        if abs(M[j, 0]) <= tol:
            raise GaugeDegenerateError((j, 0))
    for k in range(M.shape[1]):
        if abs(M[0, k]) <= tol:
            raise GaugeDegenerateError((0, k))
    ang = np.angle(M)
    theta = ang - ang[:, :1] - ang[:1, :] + ang[0, 0]
    theta = -wrap_phase(-theta)
    theta[0, :] = 0.0
    theta[:, 0] = 0.0
    return theta


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise LonrecError("sigma must be non-negative")


@dataclass(frozen=True)
class PrimaryData:
    m: int
    vis: VisibilitySet
    tau: np.ndarray
    theta: np.ndarray
    normalization: str = "column-l2"
    sigma: float = 0.0
    seed: int = None

    def rates(self):
        """Single-photon count rates implied by the amplitudes."""
        return self.tau ** 2

    def to_dict(self):
        return {
            "m": self.m,
            "visibilities": self.vis.to_records(),
            "tau": np.asarray(self.tau).tolist(),
            "theta": np.asarray(self.theta).tolist(),
            "selection": self.vis.selection,
            "normalization": self.normalization,
            "sigma": self.sigma,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        m = int(d["m"])
        vis = VisibilitySet.from_records(m, d["visibilities"], d.get("selection", "full"))
        tau = np.asarray(d["tau"], dtype=float)
        theta = np.asarray(d["theta"], dtype=float)
        if tau.shape != (m, m) or theta.shape != (m, m):
            raise LonrecError("tau and theta must be m x m")
        return cls(m, vis, tau, theta, d.get("normalization", "column-l2"),
                   float(d.get("sigma", 0.0)), d.get("seed"))


def primary_data(M, selection="full", normalization="column-l2"):
    M = as_matrix(M)
    return PrimaryData(
        M.shape[0],
        visibility_set(M, selection),
        transition_amplitudes(M, normalization),
        relative_phases(M),
        normalization,
    )


def perturb(data, noise, rng=None):
    """Apply the benchmark noise model to clean primary data.

    Visibilities and amplitudes are multiplied by ``1 + N(0, sigma**2)``;
    the ``(m-1)**2`` non-trivial phases get additive ``N(0, sigma**2)``
    noise in radians. The reference row and column of ``theta`` are gauge
    conventions, not measurements, and stay zero. Nothing is clipped or
    re-normalised.
    """
    if not isinstance(noise, NoiseModel):
        noise = NoiseModel(float(noise))
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    s = noise.sigma
    v = data.vis.values * (1.0 + rng.normal(0.0, s, len(data.vis)))
    tau = data.tau * (1.0 + rng.normal(0.0, s, data.tau.shape))
    theta = np.array(data.theta, dtype=float)
    theta[1:, 1:] += rng.normal(0.0, s, (data.m - 1, data.m - 1))
    return replace(data, vis=data.vis.with_values(v), tau=tau, theta=theta, sigma=s, seed=noise.seed)


def write_visibility_csv(vis, fp):
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["k", "l", "i", "j", "v"])
    for (k, l, i, j), v in zip(vis.keys, vis.values):
        w.writerow([k, l, i, j, repr(float(v))])


# ---------------------------------------------------------------------------
# Resource counts
# ---------------------------------------------------------------------------

METHODS = ("brisbane", "bristol", "vienna", "vienna-blackbox")


def _check_count_args(method, m, mode):
    if method not in METHODS:
        raise LonrecError(f"unknown method {method!r}")
    if mode not in ("minimal", "maximal"):
        raise LonrecError(f"unknown mode {mode!r}")
    lo = 3 if method.startswith("vienna") else 2
    if not lo <= m <= 32:
        raise InvalidDimensionError(f"{method} needs {lo} <= m <= 32, got {m}")


def dataset_size(method, m, mode="minimal"):
    """Number of primary data points a method consumes."""
    _check_count_args(method, m, mode)
    c = comb(m, 2)
    amps_phases = m ** 2 + (m - 1) ** 2
    if method == "brisbane":
        return amps_phases
    if method == "bristol":
        return m ** 2 + 2 * (m - 1) ** 2 - 1 if mode == "minimal" else m ** 2 + c ** 2
    vis = (m - 1) * c if mode == "minimal" else c ** 2
    return vis if method == "vienna" else amps_phases + vis


def measurement_runs(method, m, mode="minimal"):
    """Input configurations to align when every output has its own detector."""
    _check_count_args(method, m, mode)
    c = comb(m, 2)
    if method == "brisbane":
        return 2 * m - 1
    if method == "bristol":
        return 3 * m - 3 if mode == "minimal" else m + c
    if method == "vienna":
        return m - 1 if mode == "minimal" else c
    return 3 * m - 2 if mode == "minimal" else 2 * m - 1 + c
