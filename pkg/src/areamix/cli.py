"""Command line front end.

Four subcommands drive the library end to end:

    areamix fit      config.txt   # fit msm | msmm | fh, write predictions
    areamix basis    config.txt   # build + cache the spatial basis
    areamix simulate config.txt   # perturb-and-refit study
    areamix diagnose config.txt   # recompute diagnostics from a draw dump

Configs are flat ``key = value`` text files (``#`` starts a comment
line); every statistical default is pre-filled, so a minimal config
names only the input files.  The ``--seed``, ``--chains``, and ``--out``
flags override their config keys.  Every run writes a ``manifest.json``
recording the resolved configuration, its hash, the seed, and content
hashes of the inputs, and never embeds timestamps, so reruns with the
same seed produce byte-identical outputs.

Errors exit nonzero with a categorised message: config (exit 2), data
(exit 3), or numerical (exit 4).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .basis import basis_cache_key, build_basis, load_basis, save_basis
from .design import build_design, read_population_csv
from .diagnostics import diagnostics_report
from .errors import (
    AreamixError,
    ConfigError,
    DefinitenessError,
    DegenerateChainError,
    DivergenceError,
    DomainError,
    DuplicateKeyError,
    EmptyBasisError,
    InsufficientDataError,
    RankError,
    SchemaError,
    ShapeError,
    UnknownAreaError,
)
from .fh import FhConfig, fit_fh
from .mixture import MixtureConfig, fit_msmm_dp, fit_msmm_truncated
from .msm import MsmConfig, fit_msm
from .simulate import StudyConfig, run_study, write_study_csv, write_study_summary_csv
from .spatial import build_adjacency, expand_multivariate, icar_precision, read_edge_list
from .tabulation import (
    gvf_impute,
    load_tabulation,
    log_transform,
    predict_summaries,
    write_prediction_csv,
)
from .util import derive_seed, format_value, sha256_bytes, sha256_file

# key -> (type, default); None means "no default, may be required per command"
CONFIG_SPEC: dict[str, tuple[str, object]] = {
    "tabulation": ("path", None),
    "adjacency": ("path", None),
    "population": ("path", None),
    "draws": ("path", None),
    "out": ("str", "."),
    "model": ("str", "msmm"),
    "algorithm": ("str", "truncated"),
    "truncation_m": ("int", 25),
    "basis_fraction": ("float", 0.5),
    "basis_r": ("int", None),
    "basis_cache": ("str", None),
    "iterations": ("int", None),
    "burn_in": ("int", None),
    "thin": ("int", 1),
    "chains": ("int", 2),
    "seed": ("int", 0),
    "sigma2_beta": ("float", 100.0),
    "a_eta": ("float", 0.1),
    "b_eta": ("float", 0.1),
    "a_alpha": ("float", 1.0),
    "b_alpha": ("float", 4.0),
    "a_sigma": ("float", 0.1),
    "b_sigma": ("float", 0.1),
    "gvf_span": ("float", 0.75),
    "replicates": ("int", 100),
    "workers": ("int", 1),
    "models": ("str", "msmm,fh"),
    "write_draws": ("bool", True),
    "col_state": ("str", None),
    "col_county": ("str", None),
    "col_order": ("str", None),
    "col_count": ("str", None),
    "col_std_err": ("str", None),
    "col_sample_size": ("str", None),
}

# iteration defaults depend on the model: the mixture runs longer
MODEL_ITERATION_DEFAULTS = {
    "msmm": (10000, 5000),
    "msm": (5000, 1000),
    "fh": (5000, 1000),
}

N_TRACKED_ENTRIES = 5
_ENTRY_SEED_TAG = 7777


def _convert(key: str, raw: str):
    kind, _ = CONFIG_SPEC[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None


def read_config(path: str | Path) -> dict:
    """Parse a flat key = value config file against the known key table."""
    values = {k: default for k, (_, default) in CONFIG_SPEC.items()}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_SPEC:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _convert(key, value)
    return values


def _require(config: dict, keys: list[str]) -> None:
    missing = [k for k in keys if config.get(k) in (None, "")]
    if missing:
        raise ConfigError(f"config is missing required keys: {missing}")


def _column_overrides(config: dict) -> dict | None:
    mapping = {}
    for role in ("state", "county", "order", "count", "std_err", "sample_size"):
        value = config.get(f"col_{role}")
        if value:
            mapping[role] = value
    return mapping or None


def _config_hash(config: dict) -> str:
    canon = "\n".join(f"{k}={config[k]}" for k in sorted(config))
    return sha256_bytes(canon.encode())


def _write_manifest(
    out_dir: Path, command: str, config: dict, inputs: list[str], outputs: list[str]
) -> None:
    manifest = {
        "artifact_version": __version__,
        "command": command,
        "config": {k: config[k] for k in sorted(config)},
        "config_sha256": _config_hash(config),
        "seed": config["seed"],
        "inputs": {name: sha256_file(name) for name in sorted(inputs)},
        "outputs": sorted(outputs),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_pipeline(config: dict):
    """Common ingest: table -> imputed log table, design, adjacency, Q."""
    _require(config, ["tabulation", "adjacency", "population"])
    table = load_tabulation(config["tabulation"], columns=_column_overrides(config))
    log_table = log_transform(table)
    if np.any(~np.isfinite(log_table.d)):
        log_table = gvf_impute(log_table, span=config["gvf_span"])
    population = read_population_csv(config["population"])
    x, names = build_design(log_table, population)
    edges = read_edge_list(config["adjacency"])
    w = build_adjacency(log_table.areas, edges)
    a = expand_multivariate(w, log_table.n_cells)
    q = icar_precision(a)
    return log_table, x, names, a, q


def _get_basis(config: dict, x, a, q):
    fraction = None if config["basis_r"] is not None else config["basis_fraction"]
    cache_dir = config["basis_cache"]
    key = basis_cache_key(x, a)
    if cache_dir:
        cached = load_basis(cache_dir, key)
        if cached is not None:
            return cached, key, True
    basis = build_basis(x, a, q=q, fraction=fraction, r=config["basis_r"])
    if cache_dir:
        save_basis(basis, cache_dir, key)
    return basis, key, False


def _model_config(config: dict, model: str):
    iters, burn = MODEL_ITERATION_DEFAULTS[model]
    iterations = config["iterations"] if config["iterations"] is not None else iters
    burn_in = config["burn_in"] if config["burn_in"] is not None else burn
    common = dict(iterations=iterations, burn_in=burn_in, thin=config["thin"], seed=config["seed"])
    try:
        if model == "msm":
            cfg = MsmConfig(
                sigma2_beta=config["sigma2_beta"],
                a_eta=config["a_eta"],
                b_eta=config["b_eta"],
                **common,
            )
        elif model == "fh":
            cfg = FhConfig(
                sigma2_beta=config["sigma2_beta"],
                a_sigma=config["a_sigma"],
                b_sigma=config["b_sigma"],
                **common,
            )
        elif model == "msmm":
            cfg = MixtureConfig(
                sigma2_beta=config["sigma2_beta"],
                a_eta=config["a_eta"],
                b_eta=config["b_eta"],
                a_alpha=config["a_alpha"],
                b_alpha=config["b_alpha"],
                truncation_m=config["truncation_m"],
                **common,
            )
        else:
            raise ConfigError(f"unknown model {config['model']!r}")
        cfg.validate()
    except DomainError as exc:
        raise ConfigError(f"invalid sampler settings: {exc}") from None
    return cfg


def _fit_one_chain(model: str, algorithm: str, z, d, x, basis, cfg):
    if model == "msm":
        return fit_msm(z, d, x, basis, cfg)
    if model == "fh":
        return fit_fh(z, d, x, cfg)
    if algorithm == "dp":
        return fit_msmm_dp(z, d, x, basis, cfg)
    return fit_msmm_truncated(z, d, x, basis, cfg)


def _tracked_entries(config: dict, log_table) -> list[int]:
    rng = np.random.default_rng(derive_seed(config["seed"], _ENTRY_SEED_TAG))
    n = log_table.n_rows
    picks = rng.choice(n, size=min(N_TRACKED_ENTRIES, n), replace=False)
    return sorted(int(i) for i in picks)


def _entry_name(log_table, flat: int) -> str:
    keys = log_table.keys()
    area, cell = keys[flat]
    return f"y_{area}_{cell}"


def _scalar_series(model: str, fit) -> dict[str, np.ndarray]:
    if model == "msm":
        return {"sigma2_eta": fit.sigma2_eta}
    if model == "fh":
        return {"sigma2": fit.sigma2}
    return {
        "alpha": fit.alpha,
        "sigma2_eta": fit.sigma2_eta,
        "n_clusters": fit.n_clusters.astype(float),
    }


def cmd_fit(config: dict, out_dir: Path) -> list[str]:
    log_table, x, _, a, q = _load_pipeline(config)
    model = config["model"]
    if model not in MODEL_ITERATION_DEFAULTS:
        raise ConfigError(f"model must be one of msm|msmm|fh, got {model!r}")
    if config["algorithm"] not in ("dp", "truncated"):
        raise ConfigError("algorithm must be 'dp' or 'truncated'")
    if config["chains"] < 1:
        raise ConfigError("chains must be >= 1")
    basis = None
    if model != "fh":
        basis, _, _ = _get_basis(config, x, a, q)
    cfg = _model_config(config, model)

    fits = []
    for chain in range(config["chains"]):
        chain_cfg = replace(cfg, seed=derive_seed(config["seed"], chain))
        fits.append(_fit_one_chain(model, config["algorithm"], log_table.z, log_table.d, x, basis, chain_cfg))

    y_all = np.vstack([fit.y for fit in fits])
    summary = predict_summaries(y_all)
    write_prediction_csv(out_dir / "predictions.csv", log_table, summary)
    outputs = ["predictions.csv"]

    entries = _tracked_entries(config, log_table)
    param_chains: dict[str, list[np.ndarray]] = {}
    for fit in fits:
        for name, series in _scalar_series(model, fit).items():
            param_chains.setdefault(name, []).append(series)
        for flat in entries:
            param_chains.setdefault(_entry_name(log_table, flat), []).append(fit.y[:, flat])
    report = diagnostics_report(param_chains)
    with open(out_dir / "diagnostics.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append("diagnostics.json")

    if config["write_draws"]:
        with open(out_dir / "draws.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["chain", "iteration", "parameter", "value"])
            for chain, fit in enumerate(fits):
                series = dict(_scalar_series(model, fit))
                for flat in entries:
                    series[_entry_name(log_table, flat)] = fit.y[:, flat]
                for name in sorted(series):
                    values = series[name]
                    for slot, value in enumerate(values):
                        iteration = cfg.burn_in + slot * cfg.thin
                        writer.writerow([chain, iteration, name, format_value(float(value))])
        outputs.append("draws.csv")

    _write_manifest(
        out_dir,
        "fit",
        config,
        [config["tabulation"], config["adjacency"], config["population"]],
        outputs,
    )
    return outputs


def cmd_basis(config: dict, out_dir: Path) -> list[str]:
    log_table, x, names, a, q = _load_pipeline(config)
    cache_dir = config["basis_cache"] or str(out_dir)
    config = dict(config, basis_cache=cache_dir)
    basis, key, from_cache = _get_basis(config, x, a, q)
    cache_file = Path(cache_dir) / f"moran_{key[:16]}.npz"
    report = {
        "n": basis.n,
        "r": basis.r,
        "n_positive": basis.n_positive,
        "tolerance": basis.tolerance,
        "design_columns": names,
        "eigenvalues": [float(v) for v in basis.eigenvalues],
        "psi_x_max_abs": float(np.max(np.abs(basis.psi.T @ x))),
        "k_inv_min_eigenvalue": float(np.linalg.eigvalsh(basis.k_inv).min()),
        "cache_file": cache_file.name,
        "cache_sha256": sha256_file(cache_file),
        "from_cache": bool(from_cache),
    }
    with open(out_dir / "basis_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs = ["basis_report.json"]
    if Path(cache_dir) == out_dir:
        outputs.append(cache_file.name)
    _write_manifest(
        out_dir,
        "basis",
        config,
        [config["tabulation"], config["adjacency"], config["population"]],
        outputs,
    )
    return outputs


def cmd_simulate(config: dict, out_dir: Path) -> list[str]:
    log_table, x, _, a, q = _load_pipeline(config)
    basis, _, _ = _get_basis(config, x, a, q)
    models = tuple(m.strip() for m in config["models"].split(",") if m.strip())
    study_cfg = StudyConfig(
        replicates=config["replicates"],
        master_seed=config["seed"],
        models=models,
        msmm_algorithm=config["algorithm"],
        msm=_model_config(config, "msm"),
        msmm=_model_config(config, "msmm"),
        fh=_model_config(config, "fh"),
        workers=config["workers"],
    )
    try:
        study_cfg.validate()
    except DomainError as exc:
        raise ConfigError(f"invalid study settings: {exc}") from None
    result = run_study(log_table, x, basis, study_cfg)
    write_study_csv(result, out_dir / "study.csv")
    write_study_summary_csv(result, out_dir / "study_summary.csv")
    outputs = ["study.csv", "study_summary.csv"]
    _write_manifest(
        out_dir,
        "simulate",
        config,
        [config["tabulation"], config["adjacency"], config["population"]],
        outputs,
    )
    return outputs


def cmd_diagnose(config: dict, out_dir: Path) -> list[str]:
    _require(config, ["draws"])
    path = config["draws"]
    series: dict[str, dict[int, list[tuple[int, float]]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"chain", "iteration", "parameter", "value"}
        if reader.fieldnames is None or not needed.issubset(set(reader.fieldnames)):
            raise SchemaError(f"{path}: draw dump needs columns {sorted(needed)}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                chain = int(rec["chain"])
                iteration = int(rec["iteration"])
                value = float(rec["value"])
            except (TypeError, ValueError):
                raise SchemaError(f"{path}:{lineno}: malformed draw row") from None
            series.setdefault(rec["parameter"], {}).setdefault(chain, []).append(
                (iteration, value)
            )
    if not series:
        raise SchemaError(f"{path}: no draws found")
    param_chains: dict[str, list[np.ndarray]] = {}
    for name, by_chain in series.items():
        chains = []
        for chain in sorted(by_chain):
            rows = sorted(by_chain[chain])
            chains.append(np.array([v for _, v in rows]))
        param_chains[name] = chains
    report = diagnostics_report(param_chains)
    with open(out_dir / "diagnostics.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "diagnose", config, [path], ["diagnostics.json"])
    return ["diagnostics.json"]


COMMANDS = {
    "fit": cmd_fit,
    "basis": cmd_basis,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
}

_DATA_ERRORS = (
    SchemaError,
    DuplicateKeyError,
    DomainError,
    ShapeError,
    UnknownAreaError,
    InsufficientDataError,
    DegenerateChainError,
)
_NUMERICAL_ERRORS = (RankError, EmptyBasisError, DefinitenessError, DivergenceError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="areamix",
        description="Area-level spatial mixture models for survey tabulations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("fit", "fit a model and write predictions"),
        ("basis", "build and cache the spatial basis"),
        ("simulate", "run a perturb-and-refit study"),
        ("diagnose", "recompute diagnostics from a draw dump"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", help="flat key = value config file")
        cmd.add_argument("--seed", type=int, help="override the config seed")
        cmd.add_argument("--chains", type=int, help="override the number of chains")
        cmd.add_argument("--out", help="override the output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = read_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.chains is not None:
            config["chains"] = args.chains
        if args.out is not None:
            config["out"] = args.out
        out_dir = Path(config["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.command](config, out_dir)
    except ConfigError as exc:
        print(f"areamix: config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"areamix: config error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"areamix: numerical error: {exc}", file=sys.stderr)
        return 4
    except _DATA_ERRORS as exc:
        print(f"areamix: data error: {exc}", file=sys.stderr)
        return 3
    except AreamixError as exc:
        print(f"areamix: error: {exc}", file=sys.stderr)
        return 1
    for name in outputs:
        print(f"wrote {Path(config['out']) / name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
