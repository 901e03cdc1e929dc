import json

import numpy as np
import pytest
from scipy.optimize import brentq

from lonrec.errors import InsufficientDataError, LonrecError, UnderdeterminedError, UnphysicalGainError
from lonrec.lossmodel import embed_io_loss
from lonrec.netcore import (
    ReckParameters,
    compose_reck,
    decompose_reck,
    fidelity,
    fidelity_conj_max,
    haar_unitary,
    unitarity_error,
)
from lonrec.probes import NoiseModel, VisibilitySet, perturb, primary_data, visibility_set
from lonrec.recon import (
    OptimizerSettings,
    chi_square_cost,
    estimate_input_loss,
    recover_io_loss,
    reconstruct_bristol,
    reconstruct_brisbane,
    reconstruct_vienna,
    vienna_start,
)


# ---------------------------------------------------------------------------
# Brisbane
# ---------------------------------------------------------------------------

def test_brisbane_clean_is_exact():
    H = haar_unitary(6, np.random.default_rng(0))
    d = primary_data(H)
    res = reconstruct_brisbane(d.tau, d.theta)
    assert fidelity(H, res.U_hat) >= 1 - 1e-9
    assert np.allclose(res.pre_polar, d.tau * np.exp(1j * d.theta))


def test_brisbane_identity():
    res = reconstruct_brisbane(np.eye(3), np.zeros((3, 3)))
    assert np.allclose(res.U_hat, np.eye(3), atol=1e-15)


def test_brisbane_input_loss_normalised_away():
    rng = np.random.default_rng(1)
    H = haar_unitary(4, rng)
    d = primary_data(H @ np.diag(rng.uniform(0.5, 1.0, 4)))
    assert fidelity(H, reconstruct_brisbane(d.tau, d.theta).U_hat) > 1 - 1e-12


def test_brisbane_output_loss_degrades():
    rng = np.random.default_rng(2)
    H = haar_unitary(4, rng)
    d = primary_data(np.diag([1.0, 0.6, 0.9, 0.4]) @ H)
    assert fidelity(H, reconstruct_brisbane(d.tau, d.theta).U_hat) < 1 - 1e-4


# ---------------------------------------------------------------------------
# Input/output loss
# ---------------------------------------------------------------------------

def test_estimate_input_loss():
    assert np.allclose(estimate_input_loss([1.0, 1.0], [1.0, 1.0]), 1.0)
    assert estimate_input_loss([1.0, 0.81], [1.0, 1.0])[1] == pytest.approx(0.9)
    with pytest.raises(UnphysicalGainError):
        estimate_input_loss([1.1], [1.0])


def test_estimate_input_loss_biased_by_output_loss():
    rng = np.random.default_rng(3)
    H = haar_unitary(3, rng)
    a_in = np.array([1.0, 0.9, 0.8])
    a_out = np.array([1.0, 0.7, 1.0])
    A = embed_io_loss(H, a_in, a_out)[:3, :3]
    est = estimate_input_loss((np.abs(A) ** 2).sum(axis=0), np.ones(3))
    assert np.max(np.abs(est - a_in)) > 1e-3


def test_recover_io_loss_lossless():
    H = haar_unitary(4, np.random.default_rng(0))
    a_in, a_out = recover_io_loss(H, np.abs(H) ** 2)
    assert np.allclose(a_in, 1, atol=1e-12) and np.allclose(a_out, 1, atol=1e-12)


def test_recover_io_loss_constructed():
    H = haar_unitary(4, np.random.default_rng(1))
    a_in = np.array([1.0, 0.9, 0.8, 1.0])
    a_out = np.array([1.0, 1.0, 0.7, 1.0])
    I = np.abs(embed_io_loss(H, a_in, a_out)[:4, :4]) ** 2
    r_in, r_out = recover_io_loss(H, I)
    assert np.max(np.abs(r_in - a_in)) < 1e-8
    assert np.max(np.abs(r_out - a_out)) < 1e-8


def test_recover_io_loss_noisy():
    rng = np.random.default_rng(2)
    sigma = 0.05
    worst = 0.0
    for _ in range(100):
        H = haar_unitary(4, rng)
        a_in = rng.uniform(0.7, 1.0, 4)
        a_out = rng.uniform(0.7, 1.0, 4)
        a_out /= a_out.max()
        I = np.abs(embed_io_loss(H, a_in, a_out)[:4, :4]) ** 2
        I = I * (1 + rng.normal(0, sigma, I.shape))
        r_in, r_out = recover_io_loss(H, I)
        worst = max(worst, np.max(np.abs(r_in - a_in)), np.max(np.abs(r_out - a_out)))
    assert worst < 5 * sigma


def test_recover_io_loss_underdetermined():
    with pytest.raises(UnderdeterminedError):
        recover_io_loss(np.eye(3), np.eye(3))


# ---------------------------------------------------------------------------
# Bristol
# ---------------------------------------------------------------------------

def test_bristol_clean_up_to_conjugation():
    rng = np.random.default_rng(0)
    for _ in range(5):
        H = haar_unitary(4, rng)
        d = primary_data(H)
        res = reconstruct_bristol(d.rates(), d.vis)
        assert fidelity_conj_max(H, res.U_hat) >= 1 - 1e-6
        assert res.clamped_cosines == 0


def test_bristol_with_bristol_selection_only():
    H = haar_unitary(5, np.random.default_rng(1))
    vis = visibility_set(H, "bristol")
    res = reconstruct_bristol(np.abs(H) ** 2, vis)
    assert fidelity_conj_max(H, res.U_hat) >= 1 - 1e-6


def test_bristol_rates_loss_invariant():
    rng = np.random.default_rng(2)
    H = haar_unitary(5, rng)
    vis = visibility_set(H)
    R = np.abs(H) ** 2
    D1 = rng.uniform(0.3, 1, 5)
    D2 = rng.uniform(0.3, 1, 5)
    a = reconstruct_bristol(R, vis).U_hat
    b = reconstruct_bristol(D1[:, None] * R * D2[None, :], vis).U_hat
    assert np.max(np.abs(a - b)) < 1e-8


def test_bristol_missing_sign_records():
    H = haar_unitary(4, np.random.default_rng(3))
    vis = visibility_set(H, "reduced")
    with pytest.raises(InsufficientDataError):
        reconstruct_bristol(np.abs(H) ** 2, vis)


def test_bristol_zero_rate():
    H = haar_unitary(3, np.random.default_rng(4))
    R = np.abs(H) ** 2
    R[1, 1] = 0
    with pytest.raises(LonrecError):
        reconstruct_bristol(R, visibility_set(H))


def test_bristol_noisy_counts_clamps():
    H = haar_unitary(6, np.random.default_rng(5))
    d = perturb(primary_data(H), NoiseModel(0.1), np.random.default_rng(6))
    res = reconstruct_bristol(d.rates(), d.vis)
    assert unitarity_error(res.U_hat) < 1e-10
    assert res.clamped_cosines >= 0


# ---------------------------------------------------------------------------
# Chi-square and Vienna
# ---------------------------------------------------------------------------

def test_chi_square_zero_at_truth():
    H = haar_unitary(5, np.random.default_rng(0))
    p = decompose_reck(H)
    assert chi_square_cost(p, visibility_set(H)) < 1e-20


def test_chi_square_single_record():
    # splitter with model V = 0.3 from V = 2 t^2 r^2 / (t^4 + r^4)
    t2 = brentq(lambda x: 2 * x * (1 - x) / (x * x + (1 - x) ** 2) - 0.3, 1e-6, 0.5)
    p = ReckParameters(2, [np.arccos(np.sqrt(t2))], [0.0])
    vis = VisibilitySet(2, [(1, 2, 1, 2)], [0.5])
    assert chi_square_cost(p, vis, weighting="unweighted") == pytest.approx(0.04, abs=1e-12)


def test_chi_square_expectation_matches_record_count():
    H = haar_unitary(4, np.random.default_rng(1))
    p = decompose_reck(H)
    clean = primary_data(H)
    sigma = 0.02
    rng = np.random.default_rng(2)
    costs = [chi_square_cost(p, perturb(clean, NoiseModel(sigma), rng).vis, sigma) for _ in range(100)]
    n = len(clean.vis)
    # weights use the measured value, which biases the statistic slightly
    assert abs(np.mean(costs) - n) < 0.15 * n


def test_chi_square_dark_records_skipped():
    p = ReckParameters(3, np.zeros(3), np.zeros(3))
    vis = VisibilitySet(3, [(1, 2, 1, 2), (1, 2, 1, 3)], [0.0, 0.5])
    cost, skipped = chi_square_cost(p, vis, weighting="unweighted", return_skipped=True)
    assert skipped == 1 and cost == 0.0


def test_vienna_from_truth_clean():
    H = haar_unitary(4, np.random.default_rng(3))
    start = decompose_reck(H, fix_gauge=True)
    res = reconstruct_vienna(visibility_set(H), start)
    assert res.residual < 1e-20
    assert fidelity(H, res.U_hat) >= 1 - 1e-9


def test_vienna_from_brisbane_clean():
    H = haar_unitary(5, np.random.default_rng(4))
    d = primary_data(H)
    res = reconstruct_vienna(d.vis, vienna_start(d.tau, d.theta))
    assert fidelity(H, res.U_hat) >= 1 - 1e-8


def test_vienna_monotone_and_deterministic():
    H = haar_unitary(5, np.random.default_rng(5))
    d = perturb(primary_data(H), NoiseModel(0.03), np.random.default_rng(6))
    start = vienna_start(d.tau, d.theta)
    a = reconstruct_vienna(d.vis, start, sigma=0.03)
    b = reconstruct_vienna(d.vis, start, sigma=0.03)
    assert a.residual <= a.start_residual
    assert a.U_hat.tobytes() == b.U_hat.tobytes()
    assert np.all((a.params.lam >= 0) & (a.params.lam <= np.pi / 2))


def test_vienna_improves_on_brisbane_with_noise():
    rng = np.random.default_rng(7)
    H = haar_unitary(5, rng)
    d = perturb(primary_data(H), NoiseModel(0.02), rng)
    bris = reconstruct_brisbane(d.tau, d.theta).U_hat
    vien = reconstruct_vienna(d.vis, vienna_start(d.tau, d.theta), sigma=0.02).U_hat
    assert fidelity(H, vien) > fidelity(H, bris)


def test_vienna_reduced_set():
    H = haar_unitary(4, np.random.default_rng(8))
    d = primary_data(H)
    res = reconstruct_vienna(d.vis.subset("reduced"), vienna_start(d.tau, d.theta), method="vienna-reduced")
    assert res.method == "vienna-reduced"
    assert fidelity(H, res.U_hat) >= 1 - 1e-8


def test_vienna_conjugate_start_stays_conjugate():
    H = haar_unitary(4, np.random.default_rng(9))
    d = primary_data(H)
    start = decompose_reck(H.conj(), fix_gauge=True)
    res = reconstruct_vienna(d.vis, start)
    assert fidelity_conj_max(H, res.U_hat) >= fidelity(H, res.U_hat)
    assert fidelity(H.conj(), res.U_hat) > 1 - 1e-8


@pytest.mark.parametrize("algorithm", ["lm", "bfgs"])
def test_vienna_alternative_algorithms(algorithm):
    H = haar_unitary(3, np.random.default_rng(10))
    d = primary_data(H)
    res = reconstruct_vienna(d.vis, vienna_start(d.tau, d.theta), OptimizerSettings(algorithm=algorithm))
    assert fidelity(H, res.U_hat) >= 1 - 1e-6


def test_vienna_mode_mismatch():
    H = haar_unitary(4, np.random.default_rng(0))
    with pytest.raises(LonrecError):
        reconstruct_vienna(visibility_set(H), decompose_reck(haar_unitary(3, np.random.default_rng(0))))


def test_optimizer_settings_validation():
    with pytest.raises(LonrecError):
        OptimizerSettings(gtol=0)
    with pytest.raises(LonrecError):
        OptimizerSettings(max_iter=0)
    with pytest.raises(LonrecError):
        OptimizerSettings(weighting="other")


def test_result_json_serialisable():
    H = haar_unitary(3, np.random.default_rng(0))
    d = primary_data(H)
    res = reconstruct_vienna(d.vis, vienna_start(d.tau, d.theta))
    out = json.loads(json.dumps(res.to_dict()))
    assert set(out["diagnostics"]) >= {"iterations", "converged", "clamped_cosines"}
