"""Command line interface: ``lonrec generate|reconstruct|sweep|fit|plot|lossy``.

Settings come from, in increasing priority: built-in defaults, a preset,
a JSON file given with ``--config`` and explicit flags. The seed falls back
to the ``LONREC_SEED`` environment variable, then to 0.

Exit codes: 0 success, 2 configuration error, 3 insufficient data,
4 malformed input file.
"""

import argparse
import json
import os
import sys

import numpy as np

from .errors import InsufficientDataError, LonrecError, MalformedFileError
from .evalharness.harness import (
    LOSSY_SUMMARY_HEADER,
    SWEEP_METHODS,
    ExperimentGrid,
    LossyGrid,
    lossy_sweep,
    read_summary_csv,
    read_sweep_csv,
    summarize,
    sweep,
    write_lossy_csv,
    write_summary_csv,
)
from .evalharness.svgplot import write_plots
from .lossmodel import LossyNetwork, embed_full_loss, n_loss_modes, reconstruct_vienna_lossy, sample_loss_params
from .netcore import (
    ReckParameters,
    decompose_reck,
    fidelity,
    fidelity_conj_max,
    haar_unitary,
    matrix_from_dict,
    matrix_to_dict,
    tree_fidelity,
)
from .probes import NoiseModel, PrimaryData, perturb, primary_data
from .recon import OptimizerSettings, reconstruct_bristol, reconstruct_brisbane, reconstruct_vienna

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_FORMAT = 0, 2, 3, 4

PRESETS = {
    "paper": {
        "m": list(range(4, 15)),
        "sigma": [round(0.005 * k, 4) for k in range(1, 21)],
        "methods": list(SWEEP_METHODS),
        "draws": 120,
        "bristol_draws": 1000,
        "iterations": 120,
        "lossy": {"m": 4, "sigma": 0.01, "loss_eps": [0.0, 0.033, 0.066, 0.1], "networks": 500, "iterations": 120},
    },
    "desk": {
        "m": [8],
        "sigma": [0.01, 0.025, 0.05, 0.075, 0.10],
        "methods": list(SWEEP_METHODS),
        "draws": 20,
        "bristol_draws": None,
        "iterations": 20,
        "lossy": {"m": 4, "sigma": 0.01, "loss_eps": [0.0, 0.033, 0.066, 0.1], "networks": 50, "iterations": 20},
    },
}

# keys accepted in a --config file, per command
CONFIG_KEYS = {
    "generate": {"m", "sigma", "seed", "loss_eps", "out"},
    "reconstruct": {"data", "method", "set", "start", "truth", "sigma", "out", "algorithm", "weighting", "max_iter"},
    "sweep": {"m", "sigma", "methods", "draws", "bristol_draws", "iterations", "seed", "workers", "out",
              "preset", "resume", "runtime", "algorithm", "weighting", "max_iter"},
    "fit": {"input", "out"},
    "plot": {"input", "out"},
    "lossy": {"m", "sigma", "loss_eps", "networks", "iterations", "seed", "workers", "out", "preset"},
}


class ConfigError(LonrecError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _dump(obj, path):
    with open(path, "w") as fp:
        json.dump(obj, fp, indent=1, sort_keys=True)
        fp.write("\n")


def _load_json(path):
    try:
        with open(path) as fp:
            return json.load(fp)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedFileError(f"{path} is not valid JSON: {exc}") from exc


def _settings(cfg):
    kw = {k: cfg[k] for k in ("algorithm", "weighting", "max_iter") if cfg.get(k) is not None}
    return OptimizerSettings(**kw)


def _resolve(args):
    """Merge defaults, preset, config file and flags into one dict."""
    cfg = {}
    preset = getattr(args, "preset", None)
    file_cfg = {}
    if args.config:
        file_cfg = _load_json(args.config)
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - CONFIG_KEYS[args.command])
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        preset = preset or file_cfg.get("preset")
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        values = PRESETS[preset]["lossy"] if args.command == "lossy" else PRESETS[preset]
        cfg.update({k: v for k, v in values.items() if k in CONFIG_KEYS[args.command]})
    cfg.update(file_cfg)
    for k, v in vars(args).items():
        if v is not None and k not in ("command", "config", "func"):
            cfg[k] = v
    if "seed" in CONFIG_KEYS[args.command] and cfg.get("seed") is None:
        env = os.environ.get("LONREC_SEED")
        try:
            cfg["seed"] = int(env) if env else 0
        except ValueError as exc:
            raise ConfigError(f"LONREC_SEED must be an integer, got {env!r}") from exc
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def _outdir(cfg, default="."):
    out = cfg.get("out") or default
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _scalar(value, name):
    if isinstance(value, list):
        if len(value) != 1:
            raise ConfigError(f"{name} takes a single value here")
        return value[0]
    return value


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate(cfg):
    """Write ``network.json``, ``clean.json`` and ``noisy.json``."""
    _require(cfg, "m")
    m = int(_scalar(cfg["m"], "m"))
    sigma = float(_scalar(cfg.get("sigma", 0.0), "sigma"))
    seed = int(cfg["seed"])
    eps = cfg.get("loss_eps")
    out = _outdir(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([seed, m]))
    H = haar_unitary(m, rng)
    core = decompose_reck(H)
    if eps is None:
        net = {"kind": "lossless", "network": core.to_dict(), "U": matrix_to_dict(H)}
        M = H
    else:
        eps = float(_scalar(eps, "loss_eps"))
        beta = sample_loss_params(eps, n_loss_modes(m), rng)
        lossy = LossyNetwork(core, np.ones(m), np.ones(m), beta)
        M = lossy.accessible()
        net = {"kind": "lossy", "network": lossy.to_dict(), "U": matrix_to_dict(M), "loss_eps": eps}
    clean = primary_data(M)
    noisy = perturb(clean, NoiseModel(sigma, seed), np.random.default_rng(np.random.SeedSequence([seed, m, 1])))
    paths = [os.path.join(out, n) for n in ("network.json", "clean.json", "noisy.json")]
    for obj, path in zip((net, clean.to_dict(), noisy.to_dict()), paths):
        _dump(obj, path)
    return paths


def _read_primary(path):
    d = _load_json(path)
    try:
        return PrimaryData.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFileError(f"{path}: not a primary-data file ({exc})") from exc


def cmd_reconstruct(cfg):
    """Reconstruct from a primary-data file and write ``result.json``."""
    _require(cfg, "data", "method")
    data = _read_primary(cfg["data"])
    method = cfg["method"]
    selection = cfg.get("set", "full")
    sigma = float(_scalar(cfg.get("sigma", data.sigma or 0.0), "sigma"))
    settings = _settings(cfg)
    n_records = None
    if method == "brisbane":
        result = reconstruct_brisbane(data.tau, data.theta)
    elif method == "bristol":
        result = reconstruct_bristol(data.rates(), data.vis)
    elif method in ("vienna", "vienna-lossy"):
        vis = data.vis.subset(selection)
        n_records = len(vis)
        if cfg.get("start"):
            start_d = _load_json(cfg["start"])
            start = ReckParameters.from_dict(start_d.get("params") or start_d.get("network") or start_d)
        else:
            start = decompose_reck(reconstruct_brisbane(data.tau, data.theta).U_hat, fix_gauge=True)
        if method == "vienna":
            result = reconstruct_vienna(vis, start, settings, sigma)
        else:
            result = reconstruct_vienna_lossy(vis, start, settings, sigma)
    else:
        raise ConfigError(f"unknown method {method!r}")
    out = result.to_dict()
    out["selection"] = selection if method.startswith("vienna") else None
    out["records"] = n_records
    if cfg.get("truth"):
        truth = _load_json(cfg["truth"])
        try:
            H = matrix_from_dict(truth["U"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFileError(f"{cfg['truth']}: not a network file ({exc})") from exc
        if method == "vienna-lossy":
            T = embed_full_loss(LossyNetwork.from_dict(truth["network"]))
            T = T[: result.U_hat.shape[0], : result.U_hat.shape[0]]
            out["fidelity"] = tree_fidelity(T, result.U_hat)
        elif method == "bristol":
            out["fidelity"] = fidelity_conj_max(H, result.U_hat)
        else:
            out["fidelity"] = fidelity(H, result.U_hat)
    path = os.path.join(_outdir(cfg), "result.json")
    _dump(out, path)
    return [path]


def _list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def cmd_sweep(cfg):
    """Run a grid and write ``sweep.csv``, ``summary.csv`` and SVG plots."""
    _require(cfg, "m", "sigma")
    grid = ExperimentGrid(
        _list(cfg["m"]), _list(cfg["sigma"]), tuple(cfg.get("methods") or SWEEP_METHODS),
        int(cfg.get("draws", 20)), int(cfg.get("iterations", 20)), int(cfg["seed"]), cfg.get("bristol_draws"),
    )
    out = _outdir(cfg)
    csv_path = os.path.join(out, "sweep.csv")
    result = sweep(grid, workers=int(cfg.get("workers", 1)), settings=_settings(cfg), csv_path=csv_path,
                   resume=bool(cfg.get("resume")), with_runtime=bool(cfg.get("runtime")))
    summary_path = os.path.join(out, "summary.csv")
    write_summary_csv(result.summaries, summary_path)
    return [csv_path, summary_path] + write_plots(result.summaries, out)


def cmd_fit(cfg):
    """Fit a sweep CSV and write ``summary.csv``."""
    _require(cfg, "input")
    records = read_sweep_csv(cfg["input"])
    path = os.path.join(_outdir(cfg), "summary.csv")
    write_summary_csv(summarize(records), path)
    return [path]


def cmd_plot(cfg):
    """Plot a summary CSV into SVG files."""
    _require(cfg, "input")
    rows = read_summary_csv(cfg["input"])
    return write_plots(rows, _outdir(cfg))


def cmd_lossy(cfg):
    """Run the in-circuit loss experiment and write ``lossy.csv`` and ``lossy_summary.csv``."""
    _require(cfg, "loss_eps")
    grid = LossyGrid(_list(cfg["loss_eps"]), int(_scalar(cfg.get("m", 4), "m")),
                     float(_scalar(cfg.get("sigma", 0.01), "sigma")), int(cfg.get("networks", 50)),
                     int(cfg.get("iterations", 20)), int(cfg["seed"]))
    result = lossy_sweep(grid, workers=int(cfg.get("workers", 1)), settings=OptimizerSettings())
    out = _outdir(cfg)
    paths = [os.path.join(out, "lossy.csv"), os.path.join(out, "lossy_summary.csv")]
    write_lossy_csv(result.records, paths[0])
    write_summary_csv(result.summaries, paths[1], LOSSY_SUMMARY_HEADER)
    return paths


COMMANDS = {
    "generate": cmd_generate,
    "reconstruct": cmd_reconstruct,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "plot": cmd_plot,
    "lossy": cmd_lossy,
}


def build_parser():
    p = _Parser(prog="lonrec", description="Reconstruct linear optical networks and benchmark the methods.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp):
        sp.add_argument("--config", help="JSON file with settings (flags override it)")
        sp.add_argument("--out", help="output directory")

    g = sub.add_parser("generate", help="draw a Haar network and its primary data")
    common(g)
    g.add_argument("--m", type=int)
    g.add_argument("--sigma", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--loss-eps", dest="loss_eps", type=float)

    r = sub.add_parser("reconstruct", help="reconstruct a network from primary data")
    common(r)
    r.add_argument("--data", help="primary-data JSON")
    r.add_argument("--method", choices=["brisbane", "bristol", "vienna", "vienna-lossy"])
    r.add_argument("--set", choices=["full", "reduced"])
    r.add_argument("--start", help="JSON with starting mesh parameters")
    r.add_argument("--truth", help="network JSON to score against")
    r.add_argument("--sigma", type=float)
    r.add_argument("--algorithm", choices=["trf", "lm", "bfgs"])

    s = sub.add_parser("sweep", help="run a Monte Carlo grid")
    common(s)
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--m", type=int, nargs="+")
    s.add_argument("--sigma", type=float, nargs="+")
    s.add_argument("--method", dest="methods", nargs="+", choices=SWEEP_METHODS)
    s.add_argument("--draws", type=int)
    s.add_argument("--bristol-draws", dest="bristol_draws", type=int)
    s.add_argument("--iterations", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--resume", action="store_true", default=None)
    s.add_argument("--runtime", action="store_true", default=None, help="record wall-clock times (not reproducible)")
    s.add_argument("--algorithm", choices=["trf", "lm", "bfgs"])

    f = sub.add_parser("fit", help="fit the fidelity distributions of a sweep CSV")
    common(f)
    f.add_argument("--in", dest="input")

    pl = sub.add_parser("plot", help="plot a summary CSV")
    common(pl)
    pl.add_argument("--in", dest="input")

    lo = sub.add_parser("lossy", help="run the in-circuit loss experiment")
    common(lo)
    lo.add_argument("--preset", choices=sorted(PRESETS))
    lo.add_argument("--loss-eps", dest="loss_eps", type=float, nargs="+")
    lo.add_argument("--m", type=int)
    lo.add_argument("--sigma", type=float)
    lo.add_argument("--networks", type=int)
    lo.add_argument("--iterations", type=int)
    lo.add_argument("--seed", type=int)
    lo.add_argument("--workers", type=int)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = _resolve(args)
        for path in COMMANDS[args.command](cfg):
            print(path)
        return EXIT_OK
    except InsufficientDataError as exc:
        print(f"lonrec: insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MalformedFileError as exc:
        print(f"lonrec: malformed input: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (LonrecError, OSError) as exc:
        print(f"lonrec: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
