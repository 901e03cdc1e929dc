"""Loss embeddings and loss-aware quality measures.

Losses are modelled by virtual beam splitters that couple a network mode
to a dedicated vacuum loss mode. A coupler's value is its amplitude
transmission, so a value ``cos(eps)`` loses at most ``sin(eps)**2`` of the
power.

Mode ordering of the embeddings: the ``m`` accessible modes first, then the
``l = 2*C(m,2) - m`` in-circuit loss modes (only for :func:`embed_full_loss`),
then ``m`` input loss modes and ``m`` output loss modes.
"""

from dataclasses import dataclass

import numpy as np

from .circuit import MeshModel, loss_arms
from .errors import InvalidDimensionError, LonrecError
from .netcore import (
    ReckParameters,
    cell_matrix,
    check_unitary,
    reck_layout,
    wrap_phase,
)
from .probes import transition_amplitudes, visibility_set
from .recon import OptimizerSettings, ReconstructionResult, fit_visibilities


def n_loss_modes(m):
    return 2 * (m * (m - 1) // 2) - m


def _check_transmittivities(values, name):
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0) or np.any(values > 1):
        raise LonrecError(f"{name} must lie in (0, 1]")
    return values


def coupler(t):
    """Real 2x2 loss coupler with amplitude transmission ``t``."""
    s = np.sqrt(max(0.0, 1.0 - t * t))
    return np.array([[t, -s], [s, t]])


def loss_matrix(dim, modes, loss_modes, t):
    """``dim x dim`` product of couplers between ``modes[n]`` and ``loss_modes[n]``."""
    L = np.eye(dim)
    for p, q, tn in zip(modes, loss_modes, t):
        L[np.ix_([p, q], [p, q])] = coupler(tn)
    return L


def embed_io_loss(U, alpha_in, alpha_out):
    """``3m x 3m`` unitary ``L(alpha_out) @ blockdiag(U, I_2m) @ L(alpha_in)``.

    Input mode k couples to loss mode ``m + k``, output mode j to ``2m + j``;
    the accessible block equals ``diag(alpha_out) @ U @ diag(alpha_in)``.
    """
    U = check_unitary(U)
    m = U.shape[0]
    a_in = _check_transmittivities(alpha_in, "alpha_in")
    a_out = _check_transmittivities(alpha_out, "alpha_out")
    if a_in.size != m or a_out.size != m:
        raise InvalidDimensionError("need one input and one output transmittivity per mode")
    modes = np.arange(m)
    big = np.eye(3 * m, dtype=complex)
    big[:m, :m] = U
    return loss_matrix(3 * m, modes, 2 * m + modes, a_out) @ big @ loss_matrix(3 * m, modes, m + modes, a_in)


@dataclass(frozen=True)
class LossyNetwork:
    core: ReckParameters
    alpha_in: np.ndarray
    alpha_out: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        m = self.core.m
        object.__setattr__(self, "alpha_in", _check_transmittivities(self.alpha_in, "alpha_in"))
        object.__setattr__(self, "alpha_out", _check_transmittivities(self.alpha_out, "alpha_out"))
        object.__setattr__(self, "beta", _check_transmittivities(self.beta, "beta"))
        if self.alpha_in.size != m or self.alpha_out.size != m:
            raise InvalidDimensionError("need one input and one output transmittivity per mode")
        if self.beta.size != n_loss_modes(m):
            raise InvalidDimensionError(f"expected {n_loss_modes(m)} in-circuit couplers, got {self.beta.size}")

    @property
    def m(self):
        return self.core.m

    @property
    def l(self):
        return self.beta.size

    @classmethod
    def lossless(cls, core):
        m = core.m
        return cls(core, np.ones(m), np.ones(m), np.ones(n_loss_modes(m)))

    def accessible(self):
        """The m x m transfer matrix seen at the accessible ports."""
        return embed_full_loss(self)[: self.m, : self.m]

    def to_dict(self):
        d = self.core.to_dict()
        d.update(
            alpha_in=self.alpha_in.tolist(),
            alpha_out=self.alpha_out.tolist(),
            beta=self.beta.tolist(),
        )
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(ReckParameters.from_dict(d), d["alpha_in"], d["alpha_out"], d["beta"])


def embed_circuit_loss(core, beta):
    """``(m+l) x (m+l)`` unitary of the mesh with in-circuit loss couplers.

    After every cell, each output arm that continues into another cell
    passes a coupler to its own loss mode ``m + b`` (``b`` in the order of
    :func:`lonrec.circuit.loss_arms`).
    """
    m = core.m
    beta = _check_transmittivities(beta, "beta")
    arms = loss_arms(m)
    if beta.size != len(arms):
        raise InvalidDimensionError(f"expected {len(arms)} in-circuit couplers, got {beta.size}")
    dim = m + len(arms)
    a, _ = reck_layout(m)
    after = [[] for _ in a]
    for b, (n, q) in enumerate(arms):
        after[n].append((b, q))
    U = np.eye(dim, dtype=complex)
    for n, k in enumerate(a):
        U[k:k + 2] = cell_matrix(core.lam[n], core.phi[n]) @ U[k:k + 2]
        for b, q in after[n]:
            rows = [q, m + b]
            U[rows] = coupler(beta[b]) @ U[rows]
    return U


def embed_full_loss(net):
    """``r x r`` unitary, ``r = 3m + l``, with input, output and in-circuit loss."""
    m, l = net.m, net.l
    r = 3 * m + l
    big = np.eye(r, dtype=complex)
    big[: m + l, : m + l] = embed_circuit_loss(net.core, net.beta)
    modes = np.arange(m)
    L_out = loss_matrix(r, modes, m + l + m + modes, net.alpha_out)
    L_in = loss_matrix(r, modes, m + l + modes, net.alpha_in)
    return L_out @ big @ L_in


def sample_loss_params(epsilon, count, rng):
    """I.i.d. transmittivities uniform on ``[cos(epsilon), 1]``."""
    if not 0 <= epsilon < np.pi / 2:
        raise LonrecError("epsilon must lie in [0, pi/2)")
    return rng.uniform(np.cos(epsilon), 1.0, count)


# ---------------------------------------------------------------------------
# Quality scores
# ---------------------------------------------------------------------------

def tau_star(tau, convention="l2-columns"):
    """Normalise amplitudes for loss-agnostic comparison.

    ``l2-columns`` scales every input column to a unit vector;
    ``l1-rows`` divides each entry by the sum of its output row;
    ``none`` takes amplitudes that are already normalised as they are.
    """
    tau = np.abs(np.asarray(tau))
    if convention == "none":
        return tau
    if convention == "l2-columns":
        return transition_amplitudes(tau, "column-l2")
    if convention == "l1-rows":
        return tau / tau.sum(axis=1, keepdims=True)
    raise LonrecError(f"unknown convention {convention!r}")


def q_vis(true_vis, predicted_vis):
    """Mean absolute visibility deviation over the full ``C(m,2)**2`` set."""
    if true_vis.m != predicted_vis.m or len(true_vis) != len(predicted_vis) or np.any(true_vis.keys != predicted_vis.keys):
        raise LonrecError("visibility sets have different keys")
    return float(np.mean(np.abs(true_vis.values - predicted_vis.values)))


def q_t(true_tau, predicted_tau, convention="l2-columns"):
    """Mean absolute deviation of normalised amplitudes over all ``m**2`` entries."""
    a = np.asarray(true_tau)
    b = np.asarray(predicted_tau)
    if a.shape != b.shape or a.ndim != 2:
        raise InvalidDimensionError(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(tau_star(a, convention) - tau_star(b, convention))))


@dataclass(frozen=True)
class QualityScores:
    q_t: float
    q_vis: float


def quality_scores(true_M, predicted_M, convention="l2-columns"):
    """Score a predicted accessible matrix against the true one on amplitudes and visibilities."""
    return QualityScores(
        q_t(np.abs(true_M), np.abs(predicted_M), convention),
        q_vis(visibility_set(true_M), visibility_set(predicted_M)),
    )


# ---------------------------------------------------------------------------
# Lossy reconstruction
# ---------------------------------------------------------------------------

def reconstruct_vienna_lossy(vis, start, settings=None, sigma=0.0, beta_start=None):
    """Fit splitting angles, phases and in-circuit loss to accessible-port visibilities.

    ``start`` supplies the lossless mesh parameters; every coupler starts
    fully transmitting unless ``beta_start`` is given. Angles are bounded to
    ``[0, pi/2]`` and couplers to ``[0, 1]`` during the fit. The result's
    ``U_hat`` is the ``(m+l)``-mode unitary of the fitted network and
    ``beta`` the fitted couplers.
    """
    settings = settings or OptimizerSettings()
    m = vis.m
    model = MeshModel(m, lossy=True, fix_gauge=True)
    x0 = model.pack(start.lam, start.phi, beta_start)
    n = model.n_cells
    lo = np.concatenate([np.zeros(n), np.full(model.n_phi, -np.inf), np.zeros(model.n_beta)])
    hi = np.concatenate([np.full(n, np.pi / 2), np.full(model.n_phi, np.inf), np.ones(model.n_beta)])
    x, cost, start_cost, iters, ok, skipped = fit_visibilities(model, x0, vis, sigma, settings, bounds=(lo, hi))
    lam, phi, beta = model.unpack(x)
    core = ReckParameters(m, np.clip(lam, 0.0, np.pi / 2), wrap_phase(phi), gauge_fixed=True)
    beta = np.clip(beta, 1e-12, 1.0)
    return ReconstructionResult(
        "vienna-lossy", embed_circuit_loss(core, beta), params=core, beta=beta,
        residual=cost, start_residual=start_cost, iterations=iters, converged=ok,
        skipped_records=skipped,
    )

