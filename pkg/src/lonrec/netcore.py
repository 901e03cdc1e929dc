"""Complex matrix foundation for linear optical networks.

Haar sampling, Reck mesh composition and decomposition, polar projection
onto the closest unitary, input/output phase gauge fixing and the
fidelity / condition-number measures used throughout the package.

Mode indices are 0-based in this module's arrays; the public functions of
:mod:`lonrec.probes` take the 1-based indices used for visibility records.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegeneratePolarError,
    GaugeDegenerateError,
    InvalidDimensionError,
    LonrecError,
    NotUnitaryError,
    SingularMatrixError,
)

UNITARY_TOL = 1e-10
ROUNDTRIP_TOL = 1e-8
SINGULAR_TOL = 1e-12
MAX_MODES = 32


def as_matrix(M, square=True):
    """Validate and return ``M`` as a finite complex 2-D array."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise InvalidDimensionError(f"expected a 2-D matrix, got shape {M.shape}")
    if square and M.shape[0] != M.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise LonrecError("matrix contains non-finite entries")
    return M


def unitarity_error(U):
    U = np.asarray(U)
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[1]))))


def is_unitary(U, tol=UNITARY_TOL):
    U = np.asarray(U)
    return U.ndim == 2 and U.shape[0] == U.shape[1] and unitarity_error(U) <= tol


def check_unitary(U, tol=UNITARY_TOL):
    """Return ``U`` as a complex array, raising NotUnitaryError if it is not unitary."""
    U = as_matrix(U)
    err = unitarity_error(U)
    if err > tol:
        raise NotUnitaryError(f"||U^dag U - I||_max = {err:.3e} exceeds {tol:.1e}")
    return U


def haar_unitary(m, rng):
    """Sample an m x m unitary from the Haar measure.

    A complex Ginibre matrix is QR-factorised and the columns of Q are
    rotated by the conjugate phases of R's diagonal; without that correction
    plain QR output is not Haar distributed.
    """
    if m < 2:
        raise InvalidDimensionError(f"need at least 2 modes, got {m}")
    z = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))[None, :]


def fourier_matrix(m):
    """The m-mode discrete Fourier transform ``w**(jk) / sqrt(m)``."""
    jk = np.outer(np.arange(m), np.arange(m))
    return np.exp(2j * np.pi * jk / m) / np.sqrt(m)


def wrap_phase(phi):
    """Wrap angles into [-pi, pi)."""
    return (np.asarray(phi, dtype=float) + np.pi) % (2 * np.pi) - np.pi


# ---------------------------------------------------------------------------
# Reck mesh
# ---------------------------------------------------------------------------

def reck_layout(m):
    """Canonical cell order of the triangular mesh.

    Returns ``(a, row)`` arrays: cell ``n`` acts on modes ``(a[n], a[n]+1)``
    and belongs to the nulling sweep of matrix row ``row[n]``. Rows are swept
    from the bottom (m-1) upwards, each left to right, which is also the
    order in which light traverses the cells.
    """
    a, row = [], []
    for r in range(m - 1, 0, -1):
        for c in range(r):
            a.append(c)
            row.append(r)
    return np.array(a, dtype=int), np.array(row, dtype=int)


def cell_matrix(lam, phi):
    """2x2 cell: phase ``phi`` on the upper mode, then a real rotation by ``lam``."""
    c, s = np.cos(lam), np.sin(lam)
    e = np.exp(1j * phi)
    return np.array([[c * e, -s], [s * e, c]], dtype=complex)


@dataclass(frozen=True)
class ReckParameters:
    """Splitting angles and phases of a triangular mesh in canonical order.

    ``gauge_fixed`` records that the phase of the first cell has been folded
    into the (unobservable) input phases and pinned to zero, leaving
    ``C(m,2) - 1`` free phase shifters.
    """

    m: int
    lam: np.ndarray
    phi: np.ndarray
    gauge_fixed: bool = False
    a: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 2 or self.m > MAX_MODES:
            raise InvalidDimensionError(f"mode count {self.m} outside [2, {MAX_MODES}]")
        n = self.m * (self.m - 1) // 2
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        phi = np.asarray(self.phi, dtype=float).reshape(-1)
        if lam.size != n or phi.size != n:
            raise InvalidDimensionError(f"expected {n} cells, got {lam.size} / {phi.size}")
        if np.any(lam < -1e-12) or np.any(lam > np.pi / 2 + 1e-12):
            raise LonrecError("splitting angles must lie in [0, pi/2]")
        if np.any(phi < -np.pi - 1e-12) or np.any(phi >= np.pi + 1e-12):
            raise LonrecError("phases must lie in [-pi, pi)")
        if self.gauge_fixed and phi[0] != 0.0:
            raise LonrecError("gauge-fixed parameters need phi[0] == 0")
        lam.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "a", reck_layout(self.m)[0])

    @property
    def n_cells(self):
        return self.lam.size

    @property
    def free_phases(self):
        return self.n_cells - 1 if self.gauge_fixed else self.n_cells

    def with_fixed_gauge(self):
        """Gauge-equivalent parameters with the first phase pinned to zero."""
        phi = self.phi.copy()
        phi[0] = 0.0
        return ReckParameters(self.m, self.lam, phi, gauge_fixed=True)

    def to_dict(self):
        return {
            "m": self.m,
            "gauge_fixed": self.gauge_fixed,
            "cells": [
                {"a": int(a), "lambda": float(l), "phi": float(p)}
                for a, l, p in zip(self.a, self.lam, self.phi)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        m = int(d["m"])
        cells = d["cells"]
        expected = reck_layout(m)[0]
        got = np.array([int(c["a"]) for c in cells], dtype=int)
        if got.shape != expected.shape or np.any(got != expected):
            raise LonrecError("cells are not in canonical triangular order")
        return cls(
            m,
            [c["lambda"] for c in cells],
            [c["phi"] for c in cells],
            gauge_fixed=bool(d.get("gauge_fixed", False)),
        )


def mesh_unitary(m, lam, phi):
    """Compose a mesh from raw angle arrays (no range checks on ``lam``)."""
    a, _ = reck_layout(m)
    U = np.eye(m, dtype=complex)
    for k, lk, pk in zip(a, lam, phi):
        U[k:k + 2] = cell_matrix(lk, pk) @ U[k:k + 2]
    return U


def compose_reck(params):
    return mesh_unitary(params.m, params.lam, params.phi)


def decompose_reck(U, fix_gauge=False, tol=UNITARY_TOL):
    """Find mesh parameters realising ``U`` up to diagonal phase matrices.

    Entries are nulled row by row from the bottom by right-multiplying with
    inverse cells; the diagonal phases left over at the end are discarded.
    ``compose_reck`` of the result equals ``U @ inv(D)`` for that residual
    diagonal ``D`` (so it is exactly ``U`` when ``U`` came from a mesh).
    """
    U = check_unitary(U, tol)
    m = U.shape[0]
    if m < 2:
        raise InvalidDimensionError("need at least 2 modes")
    a, row = reck_layout(m)
    W = U.copy()
    lam = np.empty(a.size)
    phi = np.empty(a.size)
    for n, (c, r) in enumerate(zip(a, row)):
        x, y = W[r, c], W[r, c + 1]
        lam[n] = np.arctan2(abs(x), abs(y))
        phi[n] = np.angle(x) - np.angle(y) if abs(x) > 1e-14 and abs(y) > 1e-14 else 0.0
        phi[n] = wrap_phase(phi[n])
        W[:, c:c + 2] = W[:, c:c + 2] @ cell_matrix(lam[n], phi[n]).conj().T
    params = ReckParameters(m, lam, phi)
    return params.with_fixed_gauge() if fix_gauge else params


# ---------------------------------------------------------------------------
# Polar projection and norms
# ---------------------------------------------------------------------------

def closest_unitary(M):
    """Unitary polar factor ``W @ Vh`` of ``M = W S Vh``, the Frobenius-closest unitary."""
    M = as_matrix(M)
    w, s, vh = np.linalg.svd(M)
    if s[-1] < SINGULAR_TOL:
        raise DegeneratePolarError(f"smallest singular value {s[-1]:.3e} below {SINGULAR_TOL}")
    return w @ vh


def trace_norm(A):
    return float(np.linalg.svd(np.asarray(A), compute_uv=False).sum())


def condition_number(M):
    """Frobenius-norm condition number ``||M^-1||_F * ||M||_F``."""
    M = as_matrix(M)
    if np.linalg.svd(M, compute_uv=False)[-1] < SINGULAR_TOL:
        raise SingularMatrixError("matrix is numerically singular")
    return float(np.linalg.norm(np.linalg.inv(M)) * np.linalg.norm(M))


# ---------------------------------------------------------------------------
# Gauge fixing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaugeForm:
    """``canonical[j, k] = original[j, k] * exp(1j * (d_out[j] + d_in[k]))``."""

    canonical: np.ndarray
    d_out: np.ndarray
    d_in: np.ndarray

    def reassemble(self):
        return np.exp(-1j * self.d_out)[:, None] * self.canonical * np.exp(-1j * self.d_in)[None, :]


def gauge_fix(U, edges=None, tol=SINGULAR_TOL):
    """Remove input and output phases so reference entries become real and >= 0.

    By default the references are the first column and first row, with
    ``U[0, 0]``'s phase assigned to the input side. ``edges`` may instead give
    a spanning forest of (row, col) pairs (see :func:`spanning_gauge_edges`);
    each tree is rooted at its first column, whose input phase is zero.
    """
    U = as_matrix(U)
    m, n = U.shape
    if edges is None:
        for j in range(m):
            if abs(U[j, 0]) < tol:
                raise GaugeDegenerateError((j, 0))
        for k in range(n):
            if abs(U[0, k]) < tol:
                raise GaugeDegenerateError((0, k))
        d_out = -np.angle(U[:, 0])
        d_in = -np.angle(U[0, :]) + np.angle(U[0, 0])
    else:
        d_out, d_in = _tree_phases(U, edges)
    canonical = U * np.exp(1j * (d_out[:, None] + d_in[None, :]))
    return GaugeForm(canonical, d_out, d_in)


def spanning_gauge_edges(U):
    """Maximum-weight spanning forest of the bipartite row/column graph of ``|U|``.

    Used to fix the gauge of matrices whose first row or column has zero
    entries (e.g. embeddings with unused loss modes). When the first row and
    column are the strongest connections the result is not guaranteed to be
    the default star, so callers comparing two matrices should derive the
    edges from one of them and apply them to both.
    """
    A = np.abs(np.asarray(U))
    m, n = A.shape
    parent = list(range(m + n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    order = sorted(((-A[j, k], j, k) for j in range(m) for k in range(n) if A[j, k] > SINGULAR_TOL))
    edges = []
    for _, j, k in order:
        rj, rk = find(j), find(m + k)
        if rj != rk:
            parent[rj] = rk
            edges.append((j, k))
    return edges


def _tree_phases(U, edges):
    m, n = U.shape
    adj_rows = {j: [] for j in range(m)}
    adj_cols = {k: [] for k in range(n)}
    for j, k in edges:
        adj_rows[j].append(k)
        adj_cols[k].append(j)
    d_out = np.full(m, np.nan)
    d_in = np.full(n, np.nan)
    for root in range(n):
        if not np.isnan(d_in[root]):
            continue
        d_in[root] = 0.0
        stack = [("c", root)]
        while stack:
            kind, idx = stack.pop()
            if kind == "c":
                for j in adj_cols[idx]:
                    if np.isnan(d_out[j]):
                        d_out[j] = -np.angle(U[j, idx]) - d_in[idx]
                        stack.append(("r", j))
            else:
                for k in adj_rows[idx]:
                    if np.isnan(d_in[k]):
                        d_in[k] = -np.angle(U[idx, k]) - d_out[idx]
                        stack.append(("c", k))
    d_out[np.isnan(d_out)] = 0.0
    return d_out, d_in


# ---------------------------------------------------------------------------
# Figures of merit
# ---------------------------------------------------------------------------

def fidelity(H, U, edges=None):
    """``1 - ||H' - U'||_tr / (2m)`` between gauge-fixed ``H`` and ``U``."""
    H = as_matrix(H)
    U = as_matrix(U)
    if H.shape != U.shape:
        raise InvalidDimensionError(f"dimension mismatch {H.shape} vs {U.shape}")
    m = H.shape[0]
    diff = gauge_fix(H, edges).canonical - gauge_fix(U, edges).canonical
    return float(1.0 - trace_norm(diff) / (2 * m))


def fidelity_conj_max(H, U, edges=None):
    """Fidelity maximised over ``U`` and its complex conjugate."""
    return max(fidelity(H, U, edges), fidelity(H, np.conj(U), edges))


def tree_fidelity(H, U):
    """Fidelity with the gauge tree taken from ``H``; tolerates zero entries."""
    return fidelity(H, U, edges=spanning_gauge_edges(H))


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def matrix_to_dict(M):
    M = np.asarray(M, dtype=complex)
    d = {"m": int(M.shape[0]), "re": M.real.tolist(), "im": M.imag.tolist()}
    if M.shape[0] != M.shape[1]:
        d["n"] = int(M.shape[1])
    return d


def matrix_from_dict(d):
    re = np.asarray(d["re"], dtype=float)
    im = np.asarray(d["im"], dtype=float)
    if re.shape != im.shape or re.ndim != 2 or re.shape[0] != int(d["m"]):
        raise LonrecError("malformed matrix record")
    return as_matrix(re + 1j * im, square=False)
