"""Monte Carlo benchmark of the reconstruction methods.

A job is one Haar network ``H_j`` of size ``m`` at one noise level. It draws
``I`` noisy copies of the primary data, reconstructs each with every
requested method, averages the reconstructions per method and scores the
average against ``H_j``. All random streams are derived from the master
seed and the job coordinates, so results do not depend on scheduling.
The methods of a job share the noise draws, which makes method comparisons
paired.
"""

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import LonrecError, MalformedFileError
from ..lossmodel import embed_circuit_loss, n_loss_modes, quality_scores, reconstruct_vienna_lossy, sample_loss_params
from ..netcore import (
    closest_unitary,
    decompose_reck,
    fidelity,
    fidelity_conj_max,
    gauge_fix,
    haar_unitary,
    spanning_gauge_edges,
    tree_fidelity,
)
from ..probes import NoiseModel, perturb, primary_data
from ..recon import OptimizerSettings, reconstruct_bristol, reconstruct_brisbane, reconstruct_vienna
from .fitting import MIN_SAMPLES, fit_burr12, fit_weibull

SWEEP_METHODS = ("brisbane", "bristol", "vienna", "vienna-reduced")
LOSSY_METHODS = ("brisbane", "bristol", "vienna-lossy")
MAX_SKIP_FRACTION = 0.2

SWEEP_HEADER = ("m", "j", "sigma", "method", "fidelity", "residual", "skipped", "runtime_ms")
SUMMARY_HEADER = ("m", "sigma", "method", "f_mode", "err_left", "err_right", "family", "p1", "p2", "p3", "n")
LOSSY_HEADER = ("eps", "j", "method", "q_t", "q_vis", "fidelity", "skipped")
LOSSY_SUMMARY_HEADER = ("eps", "method", "metric", "mode", "err_left", "err_right", "family", "p1", "p2", "p3", "n")

# stream tags keep the seed sequences of different purposes apart
_NETWORK, _NOISE, _LOSS, _LOSSY_NOISE = 0, 1, 2, 3


def _sigma_key(sigma):
    return int(round(sigma * 1e9))


def derived_rng(seed, *keys):
    """Generator seeded by a pure function of the master seed and ``keys``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]))


def network(seed, m, j):
    """The ``j``-th Haar network of size ``m`` for a master seed."""
    return haar_unitary(m, derived_rng(seed, _NETWORK, m, j))


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


# ---------------------------------------------------------------------------
# Averaging
# ---------------------------------------------------------------------------

def average_unitaries(samples, edges=None):
    """Gauge-aligned mean of unitaries, projected back onto the unitary group.

    Every sample is brought to the same gauge (first row and column real,
    or the spanning tree ``edges``) before the entrywise mean is taken.
    Returns the closest unitary to the mean and the entrywise standard
    deviation ``sqrt(mean |g - mean(g)|**2)`` of the gauge-fixed samples.
    """
    samples = [np.asarray(s) for s in samples]
    if not samples:
        raise LonrecError("need at least one sample")
    shape = samples[0].shape
    if any(s.shape != shape for s in samples):
        raise LonrecError("samples differ in dimension")
    fixed = np.array([gauge_fix(s, edges).canonical for s in samples])
    mean = fixed.mean(axis=0)
    std = np.sqrt(np.mean(np.abs(fixed - mean) ** 2, axis=0))
    return closest_unitary(mean), std


# ---------------------------------------------------------------------------
# Lossless sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentGrid:
    m_values: tuple
    sigma_values: tuple
    methods: tuple = SWEEP_METHODS
    draws: int = 120
    iterations: int = 120
    seed: int = 0
    bristol_draws: int = None

    def __post_init__(self):
        object.__setattr__(self, "m_values", tuple(int(m) for m in self.m_values))
        object.__setattr__(self, "sigma_values", tuple(float(s) for s in self.sigma_values))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.m_values or not self.sigma_values or not self.methods:
            raise LonrecError("grid needs at least one m, sigma and method")
        if any(m < 2 for m in self.m_values):
            raise LonrecError("network size must be at least 2")
        if any(s < 0 for s in self.sigma_values):
            raise LonrecError("sigma values must be non-negative")
        unknown = set(self.methods) - set(SWEEP_METHODS)
        if unknown:
            raise LonrecError(f"unknown methods {sorted(unknown)}")
        if self.draws < 1 or self.iterations < 1 or (self.bristol_draws is not None and self.bristol_draws < 1):
            raise LonrecError("draw and iteration counts must be >= 1")

    def draws_for(self, method):
        if method == "bristol" and self.bristol_draws is not None:
            return self.bristol_draws
        return self.draws

    def jobs(self):
        """``(m, j, sigma, methods)`` for every job, in canonical order."""
        n_draws = max(self.draws_for(mu) for mu in self.methods)
        out = []
        for m in self.m_values:
            for sigma in self.sigma_values:
                for j in range(n_draws):
                    methods = tuple(mu for mu in self.methods if j < self.draws_for(mu))
                    out.append((m, j, sigma, methods))
        return out


@dataclass
class TrialRecord:
    m: int
    j: int
    sigma: float
    method: str
    fidelity: float
    entry_std: float = float("nan")
    residual: float = None
    skipped: int = 0
    runtime_ms: float = None

    @property
    def failed(self):
        return not np.isfinite(self.fidelity)

    def row(self, with_runtime=False):
        return (self.m, self.j, _fmt(self.sigma), self.method, _fmt(self.fidelity),
                _fmt(self.residual), self.skipped, _fmt(self.runtime_ms) if with_runtime else "")


def _noisy_draw(clean, sigma, rng):
    return perturb(clean, NoiseModel(sigma), rng)


def run_network(H, sigma, iterations, methods=SWEEP_METHODS, seed=0, j=0, settings=None):
    """Score every method on network ``H`` over ``iterations`` shared noise draws.

    Returns ``{method: TrialRecord}``. Reconstructions that raise are skipped
    and counted; a method with more than 20% skipped draws, or whose average
    cannot be formed, gets a NaN fidelity.
    """
    settings = settings or OptimizerSettings()
    m = H.shape[0]
    clean = primary_data(H)
    estimates = {mu: [] for mu in methods}
    residuals = {mu: [] for mu in methods}
    skipped = dict.fromkeys(methods, 0)
    elapsed = dict.fromkeys(methods, 0.0)
    needs_start = any(mu.startswith("vienna") for mu in methods)
    for it in range(iterations):
        data = _noisy_draw(clean, sigma, derived_rng(seed, _NOISE, m, j, _sigma_key(sigma), it))
        brisbane = None
        if "brisbane" in methods or needs_start:
            t0 = time.perf_counter()
            brisbane = reconstruct_brisbane(data.tau, data.theta)
            if "brisbane" in methods:
                estimates["brisbane"].append(brisbane.U_hat)
                elapsed["brisbane"] += time.perf_counter() - t0
        for mu in methods:
            if mu == "brisbane":
                continue
            t0 = time.perf_counter()
            try:
                if mu == "bristol":
                    res = reconstruct_bristol(data.rates(), data.vis)
                else:
                    vis = data.vis if mu == "vienna" else data.vis.subset("reduced")
                    start = decompose_reck(brisbane.U_hat, fix_gauge=True)
                    res = reconstruct_vienna(vis, start, settings, sigma, method=mu)
                    residuals[mu].append(res.residual)
                estimates[mu].append(res.U_hat)
            except (LonrecError, np.linalg.LinAlgError, FloatingPointError):
                skipped[mu] += 1
            elapsed[mu] += time.perf_counter() - t0

    records = {}
    for mu in methods:
        F, std = float("nan"), float("nan")
        if skipped[mu] <= MAX_SKIP_FRACTION * iterations and estimates[mu]:
            try:
                U_bar, entry_std = average_unitaries(estimates[mu])
                F = fidelity_conj_max(H, U_bar) if mu == "bristol" else fidelity(H, U_bar)
                std = float(entry_std.mean())
            except (LonrecError, np.linalg.LinAlgError):
                pass
        res = float(np.mean(residuals[mu])) if residuals[mu] else None
        records[mu] = TrialRecord(m, j, sigma, mu, F, std, res, skipped[mu], 1e3 * elapsed[mu])
    return records


def run_cell(H, method, sigma, iterations, seed=0, j=0, settings=None):
    """Single-method version of :func:`run_network`."""
    return run_network(H, sigma, iterations, (method,), seed, j, settings)[method]


def _sweep_job(args):
    m, j, sigma, methods, seed, iterations, settings = args
    recs = run_network(network(seed, m, j), sigma, iterations, methods, seed, j, settings)
    return [recs[mu] for mu in methods]


def _record_order(grid):
    rank = {mu: n for n, mu in enumerate(grid.methods)}
    return lambda r: (grid.m_values.index(r.m), grid.sigma_values.index(r.sigma), rank[r.method], r.j)


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        for job in jobs:
            yield fn(job)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, jobs)


@dataclass
class SweepResult:
    records: list
    summaries: list = field(default_factory=list)


def sweep(grid, workers=1, settings=None, csv_path=None, resume=False, with_runtime=False):
    """Run every job of ``grid`` and fit the fidelity distribution of each cell.

    With ``csv_path`` rows are appended as jobs finish and the file is
    rewritten in canonical order at the end. With ``resume`` the jobs whose
    rows are already complete in ``csv_path`` are not run again.
    """
    settings = settings or OptimizerSettings()
    done = []
    if resume and csv_path and os.path.exists(csv_path):
        done = read_sweep_csv(csv_path)
    have = {(r.m, r.j, r.sigma, r.method) for r in done}
    keep = []
    todo = []
    for m, j, sigma, methods in grid.jobs():
        if all((m, j, sigma, mu) in have for mu in methods):
            keep.extend(r for r in done if (r.m, r.j, r.sigma) == (m, j, sigma) and r.method in methods)
        else:
            todo.append((m, j, sigma, methods, grid.seed, grid.iterations, settings))

    records = list(keep)
    sink = None
    if csv_path:
        sink = open(csv_path, "w", newline="")
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for r in keep:
            writer.writerow(r.row(with_runtime))
        sink.flush()
    try:
        for batch in _map(_sweep_job, todo, workers):
            records.extend(batch)
            if sink:
                for r in batch:
                    writer.writerow(r.row(with_runtime))
                sink.flush()
    finally:
        if sink:
            sink.close()

    records.sort(key=_record_order(grid))
    if csv_path:
        write_sweep_csv(records, csv_path, with_runtime)
    return SweepResult(records, summarize(records))


def summarize(records):
    """Weibull fit of the fidelities of every ``(m, sigma, method)`` cell.

    Cells with fewer than 20 successful records get ``family="none"`` and
    their median fidelity in place of a fitted mode.
    """
    groups = {}
    for r in records:
        groups.setdefault((r.m, r.sigma, r.method), []).append(r.fidelity)
    rows = []
    for (m, sigma, mu), values in groups.items():
        values = np.asarray(values, dtype=float)
        values = values[np.isfinite(values)]
        rows.append(_summary_row((m, sigma, mu), values, fit_weibull))
    return rows


def _summary_row(key, values, fitter):
    n = values.size
    if n < MIN_SAMPLES:
        f_mode = float(np.median(values)) if n else float("nan")
        return key + (f_mode, float("nan"), float("nan"), "none", float("nan"), float("nan"), float("nan"), n)
    fit = fitter(values)
    params = tuple(fit.params) + (float("nan"),) * (3 - len(fit.params))
    return key + (fit.f_mode, fit.err_left, fit.err_right, fit.family) + params + (n,)


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def write_sweep_csv(records, path, with_runtime=False):
    with open(path, "w", newline="") as fp:
        fp.write(_csv_text(SWEEP_HEADER, [r.row(with_runtime) for r in records]))


def write_summary_csv(rows, path, header=SUMMARY_HEADER):
    with open(path, "w", newline="") as fp:
        fp.write(_csv_text(header, rows))


def _read_rows(path, header):
    try:
        with open(path, newline="") as fp:
            rows = list(csv.reader(fp))
    except (OSError, UnicodeDecodeError) as exc:
        raise MalformedFileError(f"cannot read {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != header:
        raise MalformedFileError(f"{path}: expected header {','.join(header)}")
    body = [r for r in rows[1:] if r]
    for n, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise MalformedFileError(f"{path}:{n}: expected {len(header)} fields, got {len(r)}")
    return body


def _num(text, path, cast=float):
    if text == "":
        return None
    try:
        return cast(text)
    except ValueError as exc:
        raise MalformedFileError(f"{path}: bad number {text!r}") from exc


def read_sweep_csv(path):
    """Parse a sweep CSV back into :class:`TrialRecord` objects.

    A truncated last line (from an interrupted run) is dropped.
    """
    try:
        with open(path) as fp:
            text = fp.read()
    except OSError as exc:
        raise MalformedFileError(f"cannot read {path}: {exc}") from exc
    if text and not text.endswith("\n"):
        with open(path, "w") as fp:
            fp.write(text[: text.rfind("\n") + 1])
    records = []
    for r in _read_rows(path, SWEEP_HEADER):
        records.append(TrialRecord(
            _num(r[0], path, int), _num(r[1], path, int), _num(r[2], path), r[3], _num(r[4], path),
            residual=_num(r[5], path), skipped=_num(r[6], path, int), runtime_ms=_num(r[7], path),
        ))
    return records


def read_summary_csv(path):
    rows = []
    for r in _read_rows(path, SUMMARY_HEADER):
        rows.append((_num(r[0], path, int), _num(r[1], path), r[2], *(_num(x, path) for x in r[3:6]),
                     r[6], *(_num(x, path) for x in r[7:10]), _num(r[10], path, int)))
    return rows


# ---------------------------------------------------------------------------
# Lossy experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossyGrid:
    eps_values: tuple
    m: int = 4
    sigma: float = 0.01
    networks: int = 50
    iterations: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "eps_values", tuple(float(e) for e in self.eps_values))
        if not self.eps_values or any(not 0 <= e < np.pi / 2 for e in self.eps_values):
            raise LonrecError("loss parameters must lie in [0, pi/2)")
        if self.m < 3 or self.sigma < 0 or self.networks < 1 or self.iterations < 1:
            raise LonrecError("invalid lossy grid")

    def jobs(self):
        return [(eps, j) for eps in self.eps_values for j in range(self.networks)]


@dataclass
class LossyRecord:
    eps: float
    j: int
    method: str
    q_t: float
    q_vis: float
    fidelity: float = float("nan")
    skipped: int = 0

    def row(self):
        return (_fmt(self.eps), self.j, self.method, _fmt(self.q_t), _fmt(self.q_vis),
                _fmt(self.fidelity), self.skipped)


def lossy_network(seed, m, j, eps):
    """True lossy network for job ``(eps, j)``: core and in-circuit couplers.

    The core and the uniform variates behind the couplers depend on ``j``
    only, so raising ``eps`` makes every coupler of a network lossier.
    """
    H = network(seed, m, j)
    beta = sample_loss_params(eps, n_loss_modes(m), derived_rng(seed, _LOSS, m, j))
    return decompose_reck(H), beta


def run_lossy_network(eps, j, grid, settings=None):
    """Quality scores of every method on one lossy network."""
    settings = settings or OptimizerSettings()
    m = grid.m
    core, beta = lossy_network(grid.seed, m, j, eps)
    T = embed_circuit_loss(core, beta)
    M = T[:m, :m]
    clean = primary_data(M)
    est = {mu: [] for mu in LOSSY_METHODS}
    skipped = dict.fromkeys(LOSSY_METHODS, 0)
    for it in range(grid.iterations):
        data = _noisy_draw(clean, grid.sigma, derived_rng(grid.seed, _LOSSY_NOISE, m, j, it))
        bris = reconstruct_brisbane(data.tau, data.theta)
        est["brisbane"].append(bris.U_hat)
        for mu in LOSSY_METHODS[1:]:
            try:
                if mu == "bristol":
                    res = reconstruct_bristol(data.rates(), data.vis)
                else:
                    start = decompose_reck(bris.U_hat, fix_gauge=True)
                    res = reconstruct_vienna_lossy(data.vis, start, settings, grid.sigma)
                est[mu].append(res.U_hat)
            except (LonrecError, np.linalg.LinAlgError, FloatingPointError):
                skipped[mu] += 1

    out = []
    for mu in LOSSY_METHODS:
        qt = qv = F = float("nan")
        if skipped[mu] <= MAX_SKIP_FRACTION * grid.iterations and est[mu]:
            try:
                edges = spanning_gauge_edges(est[mu][0]) if mu == "vienna-lossy" else None
                U_bar, _ = average_unitaries(est[mu], edges)
                scores = quality_scores(M, U_bar[:m, :m])
                qt, qv = scores.q_t, scores.q_vis
                if mu == "vienna-lossy":
                    F = tree_fidelity(T, U_bar)
            except (LonrecError, np.linalg.LinAlgError):
                pass
        out.append(LossyRecord(eps, j, mu, qt, qv, F, skipped[mu]))
    return out


def _lossy_job(args):
    eps, j, grid, settings = args
    return run_lossy_network(eps, j, grid, settings)


def lossy_sweep(grid, workers=1, settings=None):
    """Run the lossy experiment; returns records and Burr XII summaries.

    Summary rows are ``(eps, method, metric, mode, err_left, err_right,
    family, p1, p2, p3, n)`` for the metrics ``q_t``, ``q_vis`` and, for
    the loss-aware fit, ``fidelity``.
    """
    jobs = [(eps, j, grid, settings) for eps, j in grid.jobs()]
    records = [r for batch in _map(_lossy_job, jobs, workers) for r in batch]
    rank = {mu: n for n, mu in enumerate(LOSSY_METHODS)}
    records.sort(key=lambda r: (grid.eps_values.index(r.eps), rank[r.method], r.j))
    return SweepResult(records, summarize_lossy(records))


def summarize_lossy(records):
    groups = {}
    for r in records:
        groups.setdefault((r.eps, r.method), []).append(r)
    rows = []
    for (eps, mu), recs in groups.items():
        metrics = ("q_t", "q_vis", "fidelity") if mu == "vienna-lossy" else ("q_t", "q_vis")
        for metric in metrics:
            values = np.array([getattr(r, metric) for r in recs], dtype=float)
            values = values[np.isfinite(values)]
            fitter = fit_weibull if metric == "fidelity" else fit_burr12
            rows.append(_summary_row((eps, mu, metric), values, fitter))
    return rows


def write_lossy_csv(records, path):
    with open(path, "w", newline="") as fp:
        fp.write(_csv_text(LOSSY_HEADER, [r.row() for r in records]))
