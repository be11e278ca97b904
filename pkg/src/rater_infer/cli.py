"""Command-line interface: ``simulate``, ``fit``, ``compare`` and ``icc``.

Settings come from, in increasing priority, built-in defaults, a TOML
config file (``--config``) and command-line flags. Exit codes: 0 success,
2 usage error, 3 input/output error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import tomli

from . import __version__, mixture, post, simbench, store, variants
from .core import HyperConfig, emit_csv, emit_id_map, ingest_csv
from .errors import BadParameter, IoError, NumericalFailure, RaterInferError, UsageError
from .sampler import run_chain

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4
THREADS_ENV = "RATER_INFER_THREADS"
TWO_WAY = ("BNP", "BSP", "BP")
HYPER_FIELDS = {f.name for f in dataclasses.fields(HyperConfig)}
RUN_KEYS = {"n_chains", "scale_min", "scale_max", "preset", "grid_points", "models"}
SCENARIO_KEYS = {"scenario", "I", "J", "ratings_per_subject", "bias_means"}
PRESETS = {"vague": {}, "bench": simbench.BENCH_PRIORS}


# ------------------------------------------------------------------- settings


def load_config(path):
    """Flat ``key = value`` TOML file; unknown keys are a usage error."""
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise UsageError(f"config {path} is not valid TOML: {exc}") from exc
    unknown = sorted(set(raw) - HYPER_FIELDS - RUN_KEYS - SCENARIO_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return raw


def merge_settings(args, defaults, flag_map):
    """Defaults, then the config file, then explicitly given flags."""
    out = dict(defaults)
    if getattr(args, "config", None):
        out.update(load_config(args.config))
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    return out


def hyper_from(settings):
    preset = settings.get("preset", "vague")
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}; valid: {', '.join(PRESETS)}")
    fields = dict(PRESETS[preset])
    fields.update({k: v for k, v in settings.items() if k in HYPER_FIELDS})
    if isinstance(fields.get("fixed_thresholds"), list):
        fields["fixed_thresholds"] = tuple(fields["fixed_thresholds"])
    try:
        return HyperConfig(**fields)
    except BadParameter as exc:
        raise UsageError(str(exc)) from exc


def worker_count(n_tasks):
    env = os.environ.get(THREADS_ENV)
    if env is None:
        cap = os.cpu_count() or 1
    else:
        try:
            cap = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if cap < 1:
            raise UsageError(f"{THREADS_ENV} must be >= 1")
    return max(1, min(cap, n_tasks))


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _out_dir(path):
    d = Path(path)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {d}: {exc}") from exc
    return d


# ------------------------------------------------------------------- fitting


def run_model(data, cfg):
    """Run one chain of any model kind."""
    kind = cfg.model_kind
    if kind in TWO_WAY:
        return run_chain(data, cfg)
    if kind == "OneWay":
        return variants.run_oneway_chain(data, cfg)
    return variants.run_ordinal_chain(data, cfg)


def center(draws):
    if draws.model_kind == "Ordinal":
        return variants.ordinal_postprocess(draws)
    return post.sc_center_draws(draws)


def icc_key(kind):
    return "icc_oneway" if kind == "OneWay" else "icc_A"


def loglik(draws, data):
    if draws.model_kind == "OneWay":
        return variants.oneway_pointwise_loglik(draws, data)
    if draws.model_kind == "Ordinal":
        return variants.ordinal_pointwise_loglik(draws, data)
    return post.pointwise_loglik(draws, data)


def _chain_task(args):
    data, cfg, chain = args
    try:
        return center(run_model(data, cfg))
    except NumericalFailure as exc:
        raise NumericalFailure(f"chain {chain}: {exc}") from exc


def run_chains(data, cfg, n_chains):
    """Chains ``1..n`` use seeds ``cfg.seed + chain - 1``; results are in chain order."""
    tasks = [(data, cfg.replace(seed=cfg.seed + c), c + 1) for c in range(n_chains)]
    workers = worker_count(n_chains)
    if workers == 1:
        return [_chain_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_chain_task, tasks))


def load_dataset(path, settings):
    p = Path(path)
    if not p.is_file():
        raise IoError(f"data file {p} does not exist")
    lo, hi = settings.get("scale_min"), settings.get("scale_max")
    try:
        if lo is None or hi is None:
            probe = ingest_csv(p, -np.inf, np.inf)
            lo = float(probe.score.min()) if lo is None else lo
            hi = float(probe.score.max()) if hi is None else hi
            if lo == hi:
                lo, hi = lo - 0.5, hi + 0.5
        return ingest_csv(p, lo, hi)
    except OSError as exc:
        raise IoError(f"cannot read {p}: {exc}") from exc
    except RaterInferError as exc:
        raise IoError(f"{p}: {exc}") from exc


def _grid_ranges(draws):
    s = draws.scalars
    if draws.model_kind == "OneWay":
        err_sd = np.sqrt(np.mean(s["phi2_H"]))
        return {
            "theta": (np.mean(s["mu_G"]), np.sqrt(np.mean(s["omega2_G"]))),
            "error": (np.mean(s["eta_H"]), err_sd),
        }
    return {
        "theta": (np.mean(s["mu_G"]), np.sqrt(np.mean(s["omega2_G"]))),
        "tau": (np.mean(s["eta_H"]), np.sqrt(np.mean(s["phi2_H"]))),
        "epsilon": (0.0, np.sqrt(np.mean(s["sigma_tilde_H"]))),
    }


def write_densities(draws, out, n_points):
    files = []
    for which, (m, sd) in _grid_ranges(draws).items():
        if not (np.isfinite(m) and np.isfinite(sd) and sd > 0):
            continue
        kind = "tau" if which == "error" else which
        grid = post.eval_density_grid(draws, kind, (m - 6 * sd, m + 6 * sd), n_points)
        name = f"density_{which}.csv"
        store.write_density_csv(grid, out / name)
        files.append(name)
    return files


def fit_and_report(data, cfg, n_chains, out):
    """Fit, write per-chain traces and build the pooled report."""
    chains = run_chains(data, cfg, n_chains)
    files = []
    for c, dr in enumerate(chains, start=1):
        files += store.write_chain_traces(dr, out, c)
    pooled = store.pool_draws(chains)
    report = post.summarize(pooled, icc_key=icc_key(cfg.model_kind), loglik=loglik(pooled, data))
    report.extras["n_chains"] = n_chains
    report.extras["seeds"] = [cfg.seed + c for c in range(n_chains)]
    if n_chains > 1:
        report.diagnostics["rhat"] = {
            k: post.potential_scale_reduction([c.scalars[k] for c in chains]) for k in pooled.scalars
        }
    return report, pooled, files


# ------------------------------------------------------------------ commands

FIT_FLAGS = {
    "iters": "iters",
    "burn_in": "burn_in",
    "thin": "thin",
    "R": "R",
    "seed": "seed",
    "model": "model_kind",
    "chains": "n_chains",
    "scale_min": "scale_min",
    "scale_max": "scale_max",
    "preset": "preset",
    "categories": "n_categories",
    "grid_points": "grid_points",
}


def cmd_simulate(args):
    settings = merge_settings(
        args,
        {"scenario": "UU", "I": 500, "J": 100, "ratings_per_subject": 2, "seed": 0},
        {"scenario": "scenario", "I": "I", "J": "J", "ratings": "ratings_per_subject", "seed": "seed", "bias_means": "bias_means"},
    )
    if settings["scenario"] not in simbench.SCENARIOS:
        raise UsageError(f"unknown scenario {settings['scenario']!r}; valid scenarios: {', '.join(simbench.SCENARIOS)}")
    try:
        spec = simbench.ScenarioSpec(
            scenario=settings["scenario"],
            I=int(settings["I"]),
            J=int(settings["J"]),
            ratings_per_subject=int(settings["ratings_per_subject"]),
            seed=int(settings["seed"]),
            bias_means=None if settings.get("bias_means") is None else tuple(settings["bias_means"]),
        )
    except BadParameter as exc:
        raise UsageError(str(exc)) from exc
    data, truth = simbench.generate(spec)
    out = _out_dir(args.out)
    try:
        emit_csv(data, out / "data.csv")
    except OSError as exc:
        raise IoError(f"cannot write {out / 'data.csv'}: {exc}") from exc
    store.write_json(out / "truth.json", truth.to_dict())
    manifest = {
        "command": "simulate",
        "version": __version__,
        "settings": dataclasses.asdict(spec),
        "scale": [data.scale_min, data.scale_max],
        "files": ["data.csv", "truth.json"],
        "data_sha256": _sha256(out / "data.csv"),
    }
    store.write_json(out / "manifest.json", manifest)
    return EXIT_OK


def _fit_settings(args):
    defaults = {"n_chains": 1, "grid_points": 201}
    settings = merge_settings(args, defaults, FIT_FLAGS)
    if int(settings["n_chains"]) < 1:
        raise UsageError("need at least one chain")
    return settings


def cmd_fit(args):
    settings = _fit_settings(args)
    if Path(args.data).resolve() == Path(args.out).resolve():
        raise UsageError("data path and output directory must differ")
    cfg = hyper_from(settings)
    data = load_dataset(args.data, settings)
    cfg = cfg.resolved(data) if cfg.model_kind != "Ordinal" else cfg
    out = _out_dir(args.out)
    report, pooled, files = fit_and_report(data, cfg, int(settings["n_chains"]), out)
    files += write_densities(pooled, out, int(settings["grid_points"]))
    store.write_json(out / "report.json", report.to_dict())
    emit_id_map(data.subject_labels, out / "subject_ids.csv")
    emit_id_map(data.rater_labels, out / "rater_ids.csv")
    files += ["report.json", "subject_ids.csv", "rater_ids.csv"]
    manifest = {
        "command": "fit",
        "version": __version__,
        "config": cfg.to_dict(),
        "n_chains": int(settings["n_chains"]),
        "scale": [data.scale_min, data.scale_max],
        "data": str(args.data),
        "data_sha256": _sha256(args.data),
        "files": sorted(files),
        "warnings": dict(pooled.warnings),
    }
    store.write_json(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_compare(args):
    settings = _fit_settings(args)
    models = settings.get("models") or list(TWO_WAY[::-1])
    if args.models:
        models = args.models
    bad = [m for m in models if m not in TWO_WAY]
    if bad:
        raise UsageError(f"compare supports {', '.join(TWO_WAY)}; got {', '.join(bad)}")
    data = load_dataset(args.data, settings)
    out = _out_dir(args.out)
    rows = []
    for m in models:
        cfg = hyper_from(dict(settings, model_kind=m)).resolved(data)
        chains = run_chains(data, cfg, int(settings["n_chains"]))
        w, lppd, p = post.waic(loglik(store.pool_draws(chains), data))
        rows.append({"model": m, "waic": w, "lppd": lppd, "p_waic": p})
    rows.sort(key=lambda r: r["waic"])
    best = rows[0]["waic"]
    for r in rows:
        r["delta_waic"] = r["waic"] - best
    store.write_matrix_csv(
        out / "compare.csv",
        ["model", "waic", "delta_waic", "lppd", "p_waic"],
        [np.array([r["model"] for r in rows])] + [np.array([r[k] for r in rows]) for k in ("waic", "delta_waic", "lppd", "p_waic")],
    )
    store.write_json(out / "compare.json", {"models": rows})
    base = hyper_from(settings).resolved(data)
    manifest = {
        "command": "compare",
        "version": __version__,
        "config": dict(base.to_dict(), model_kind=None),
        "models": models,
        "n_chains": int(settings["n_chains"]),
        "data": str(args.data),
        "data_sha256": _sha256(args.data),
        "files": ["compare.csv", "compare.json"],
    }
    store.write_json(out / "manifest.json", manifest)
    return EXIT_OK


def _load_run(run_dir):
    run = Path(run_dir)
    manifest = store.read_json(run / "manifest.json")
    if manifest.get("command") != "fit":
        raise UsageError(f"{run} does not hold fit output")
    n = int(manifest["n_chains"])
    chains = [store.read_chain_traces(run, c) for c in range(1, n + 1)]
    pooled = store.pool_draws(chains)
    pooled.model_kind = manifest["config"]["model_kind"]
    return run, manifest, pooled


def _rater_index(run, label):
    ids = {}
    path = run / "rater_ids.csv"
    try:
        with path.open(encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                orig, _, dense = line.rstrip("\n").rpartition(",")
                ids[orig] = int(dense)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if label not in ids:
        raise UsageError(f"unknown rater id {label!r}")
    return ids[label]


def icc_summary(pooled, pairs=(), clusters=(), run=None):
    """ICC summaries recomputed from stored traces."""
    s = pooled.scalars
    out = {}
    if pooled.model_kind == "OneWay":
        out["icc_oneway"] = post.summarize_trace(mixture.icc_oneway(s["omega2_G"], s["phi2_H"]))
    else:
        out["icc_A"] = post.summarize_trace(mixture.icc_parametric(s["omega2_G"], s["phi2_H"], s["sigma_tilde_H"]))
    for a, b in pairs:
        ja, jb = _rater_index(run, a), _rater_index(run, b)
        vals = mixture.icc_pairwise(
            s["omega2_G"], s["phi2_H"], 1.0 / pooled.inv_sigma2[:, ja], 1.0 / pooled.inv_sigma2[:, jb]
        )
        out.setdefault("pairwise", []).append(dict(post.summarize_trace(vals), raters=[a, b]))
    for n, k in clusters:
        if pooled.model_kind == "OneWay":
            raise UsageError("cluster-conditional ICCs need the two-way model")
        R1, R2 = pooled.counts1.shape[1], pooled.counts2.shape[1]
        if not (0 <= n < R1 and 0 <= k < R2):
            raise UsageError(f"cluster ({n}, {k}) outside the truncation ranges {R1}, {R2}")
        keep = (pooled.counts1[:, n] > 0) & (pooled.counts2[:, k] > 0)
        if not np.any(keep):
            raise UsageError(f"subject cluster {n} and rater cluster {k} are never occupied together")
        a = pooled.atoms
        sig = mixture.expected_residual_variance(a["gam"][keep, k], a["beta"][keep, k])
        vals = mixture.icc_parametric(a["omega2"][keep, n], a["phi2"][keep, k], sig)
        out.setdefault("cluster", []).append(
            dict(post.summarize_trace(np.atleast_1d(vals)), subject_cluster=n, rater_cluster=k, n_draws=int(keep.sum()))
        )
    return out


def cmd_icc(args):
    run, manifest, pooled = _load_run(args.run)
    result = icc_summary(pooled, args.pair or (), [(int(n), int(k)) for n, k in (args.cluster or ())], run)
    store.write_json(run / "icc.json", result)
    print(store.dumps(result))
    return EXIT_OK


# -------------------------------------------------------------------- parser


def _add_fit_flags(p):
    p.add_argument("--data", required=True, help="ratings CSV with header subject_id,rater_id,score")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="TOML file of key = value settings")
    p.add_argument("--iters", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--R", type=int, help="truncation level")
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--scale-min", dest="scale_min", type=float)
    p.add_argument("--scale-max", dest="scale_max", type=float)
    p.add_argument("--preset", choices=sorted(PRESETS), help="hyperprior preset")
    p.add_argument("--grid-points", dest="grid_points", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="rater-infer", description="Bayesian nonparametric rater models")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a benchmark dataset")
    p.add_argument("--scenario", help=f"one of {', '.join(simbench.SCENARIOS)}")
    p.add_argument("--ratings", type=int, help="ratings per subject")
    p.add_argument("--I", type=int, help="number of subjects")
    p.add_argument("--J", type=int, help="number of raters")
    p.add_argument("--seed", type=int)
    p.add_argument("--bias-means", dest="bias_means", type=float, nargs=2)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one model")
    _add_fit_flags(p)
    p.add_argument("--model", help="BNP, BSP, BP, OneWay or Ordinal")
    p.add_argument("--categories", type=int, help="number of ordinal categories")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="WAIC comparison of BP, BSP and BNP")
    _add_fit_flags(p)
    p.add_argument("--models", nargs="+")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("icc", help="ICC summaries from a fit directory")
    p.add_argument("--run", required=True, help="output directory of a fit")
    p.add_argument("--pair", nargs=2, action="append", metavar=("RATER_A", "RATER_B"))
    p.add_argument("--cluster", nargs=2, action="append", metavar=("SUBJECT_CLUSTER", "RATER_CLUSTER"))
    p.set_defaults(func=cmd_icc)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BadParameter as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
