"""Differentiable forward model of a triangular mesh.

The model maps a flat parameter vector ``x = [lam, phi_free, beta]`` to the
accessible m x m transfer matrix and its derivatives. In-circuit loss
couplers only ever leak amplitude into vacuum loss modes that are not
coupled back, so on the accessible modes each coupler acts as a plain
attenuation of its arm by ``beta``; the full (m + l)-mode unitary is built
by :mod:`lonrec.lossmodel`.
"""

import numpy as np

from .netcore import cell_matrix, reck_layout


def loss_arms(m):
    """Internal mesh arms carrying an in-circuit loss coupler.

    Returns a list of ``(cell, mode)`` pairs in canonical order: for every
    cell, its upper then lower output arm, skipping arms that leave the mesh
    as a final output. There are ``2*C(m,2) - m`` of them.
    """
    a, _ = reck_layout(m)
    last = {}
    for n, k in enumerate(a):
        last[k] = n
        last[k + 1] = n
    arms = []
    for n, k in enumerate(a):
        for q in (k, k + 1):
            if last[q] != n:
                arms.append((n, q))
    return arms


def _cell_derivatives(lam, phi):
    c, s = np.cos(lam), np.sin(lam)
    e = np.exp(1j * phi)
    d_lam = np.empty((lam.size, 2, 2), dtype=complex)
    d_lam[:, 0, 0] = -s * e
    d_lam[:, 0, 1] = -c
    d_lam[:, 1, 0] = c * e
    d_lam[:, 1, 1] = -s
    d_phi = np.zeros((lam.size, 2, 2), dtype=complex)
    d_phi[:, 0, 0] = 1j * c * e
    d_phi[:, 1, 0] = 1j * s * e
    return d_lam, d_phi


class MeshModel:
    """Accessible transfer matrix of a Reck mesh as a function of its parameters.

    Parameters
    ----------
    m : int
        Number of modes.
    lossy : bool
        Include one attenuation parameter per internal arm (see :func:`loss_arms`).
    fix_gauge : bool
        Pin the first cell's phase to zero and drop it from the parameter vector.
    """

    def __init__(self, m, lossy=False, fix_gauge=True):
        self.m = m
        self.a, _ = reck_layout(m)
        self.n_cells = self.a.size
        self.fix_gauge = fix_gauge
        self.arms = loss_arms(m) if lossy else []
        self.n_beta = len(self.arms)
        self._arms_after = [[] for _ in range(self.n_cells)]
        for b, (n, q) in enumerate(self.arms):
            self._arms_after[n].append((b, q))
        self.n_phi = self.n_cells - 1 if fix_gauge else self.n_cells
        self.n_params = self.n_cells + self.n_phi + self.n_beta

    def pack(self, lam, phi, beta=None):
        phi = np.asarray(phi, dtype=float)
        parts = [np.asarray(lam, dtype=float), phi[1:] if self.fix_gauge else phi]
        if self.n_beta:
            parts.append(np.ones(self.n_beta) if beta is None else np.asarray(beta, dtype=float))
        return np.concatenate(parts)

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        n = self.n_cells
        lam = x[:n]
        phi = x[n:n + self.n_phi]
        if self.fix_gauge:
            phi = np.concatenate([[0.0], phi])
        beta = x[n + self.n_phi:]
        return lam, phi, beta

    def matrix(self, x):
        lam, phi, beta = self.unpack(x)
        A = np.eye(self.m, dtype=complex)
        for n, k in enumerate(self.a):
            A[k:k + 2] = cell_matrix(lam[n], phi[n]) @ A[k:k + 2]
            for b, q in self._arms_after[n]:
                A[q] *= beta[b]
        return A

    def matrix_and_jacobian(self, x):
        """Return ``M`` and ``dM`` with ``dM[p] = dM/dx[p]`` (shape ``(P, m, m)``)."""
        lam, phi, beta = self.unpack(x)
        m, N = self.m, self.n_cells
        cells = [cell_matrix(l, p) for l, p in zip(lam, phi)]

        A = np.eye(m, dtype=complex)
        A_pair = np.empty((N, 2, m), dtype=complex)
        A_row = np.empty((self.n_beta, m), dtype=complex)
        for n, k in enumerate(self.a):
            A_pair[n] = A[k:k + 2]
            A[k:k + 2] = cells[n] @ A[k:k + 2]
            for b, q in self._arms_after[n]:
                A_row[b] = A[q]
                A[q] *= beta[b]

        S = np.eye(m, dtype=complex)
        S_pair = np.empty((N, m, 2), dtype=complex)
        S_col = np.empty((self.n_beta, m), dtype=complex)
        for n in range(N - 1, -1, -1):
            for b, q in reversed(self._arms_after[n]):
                S_col[b] = S[:, q]
                S[:, q] *= beta[b]
            k = self.a[n]
            S_pair[n] = S[:, k:k + 2]
            S[:, k:k + 2] = S[:, k:k + 2] @ cells[n]

        d_lam, d_phi = _cell_derivatives(lam, phi)
        dM_lam = np.einsum("nip,npq,nqj->nij", S_pair, d_lam, A_pair)
        dM_phi = np.einsum("nip,npq,nqj->nij", S_pair, d_phi, A_pair)
        if self.fix_gauge:
            dM_phi = dM_phi[1:]
        parts = [dM_lam, dM_phi]
        if self.n_beta:
            parts.append(S_col[:, :, None] * A_row[:, None, :])
        return A, np.concatenate(parts, axis=0)


def visibility_terms(M, idx):
    """Path amplitudes of the two collision-free two-photon routes.

    ``idx`` is a 4-tuple of 0-based index arrays ``(k, l, i, j)`` (inputs k, l;
    outputs i, j). Returns ``(a, b)`` with ``a = M[i,k] M[j,l]`` and
    ``b = M[i,l] M[j,k]``.
    """
    k, l, i, j = idx
    return M[i, k] * M[j, l], M[i, l] * M[j, k]


def model_visibilities(M, idx):
    a, b = visibility_terms(M, idx)
    c = np.abs(a) ** 2 + np.abs(b) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -2.0 * np.real(a * np.conj(b)) / c
    return v, c


def model_visibilities_jacobian(M, dM, idx):
    """Visibilities, distinguishable rates and ``dV/dx`` of shape ``(P, records)``."""
    k, l, i, j = idx
    a, b = visibility_terms(M, idx)
    da = dM[:, i, k] * M[j, l] + M[i, k] * dM[:, j, l]
    db = dM[:, i, l] * M[j, k] + M[i, l] * dM[:, j, k]
    c = np.abs(a) ** 2 + np.abs(b) ** 2
    x = np.real(a * np.conj(b))
    dx = np.real(da * np.conj(b) + a * np.conj(db))
    dc = 2.0 * np.real(np.conj(a) * da + np.conj(b) * db)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -2.0 * x / c
        dv = -2.0 * (dx * c - x * dc) / c ** 2
    return v, c, dv
