"""``trafficast`` command line: generate, train, eval, report.

Numeric settings live in JSON files; flags carry paths and a few overrides.
Exit codes: 0 ok, 1 I/O failure, 2 invalid configuration or usage, 3 data
problem (malformed trace, series too short).  Every command validates its
inputs before writing anything.

The ``TRAFFICAST_SEED`` environment variable, when set, replaces the seed in
scenario and training configs.
"""

from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .evaluate import MetricsReport, compare_models, evaluate, mse_per_step, residuals
from .models import PAPER_DEFAULTS, Arch, Checkpoint, ModelSpec, TrainConfig, build, predict, train
from .nn import ShapeMismatch
from .pipeline import (
    ALL_FEATURES,
    BASE_FEATURES,
    FeatureSet,
    ScalerKind,
    SeriesTooShort,
    WindowConfig,
    fit_scaler,
    prepare,
)
from .synthgen import InvalidScenario, Scenario, generate
from .trace import LinkSpec, TraceError, read_csv, write_csv

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
SEED_ENV = "TRAFFICAST_SEED"

TRAIN_KEYS = {
    "arch", "delta", "gamma", "features", "f", "kernel_size", "epochs", "batch_size",
    "learning_rate", "validation_fraction", "repetitions", "seed", "scaler", "link",
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config_error(message: str) -> CliError:
    return CliError(EXIT_CONFIG, message)


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise _config_error(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _read_json(path: str) -> tuple[dict, bytes]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise _config_error(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise _config_error(f"{path}: expected a JSON object")
    return data, raw


def _load_link(path: str | None) -> LinkSpec:
    if path is None:
        return LinkSpec()
    data, _ = _read_json(path)
    try:
        return LinkSpec.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise _config_error(f"invalid link spec {path}: {exc}") from None


def _check_writable(*paths: str | Path) -> None:
    for p in paths:
        parent = Path(p).resolve().parent
        if not parent.is_dir():
            raise CliError(EXIT_IO, f"output directory {parent} does not exist")
        if not os.access(parent, os.W_OK):
            raise CliError(EXIT_IO, f"output directory {parent} is not writable")


def _read_trace(path: str, link: LinkSpec, labels_path: str | None = None):
    try:
        return read_csv(path, link, labels_path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {exc.filename or path}: {exc.strerror or exc}") from None
    except TraceError as exc:
        raise CliError(EXIT_DATA, f"{path}: {exc}") from None


def _sibling(path: str | Path, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.stem + suffix)


# ----------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    data, _ = _read_json(args.scenario)
    seed = _env_seed()
    if seed is not None:
        data["seed"] = seed
    try:
        scenario = Scenario.from_dict(data)
    except (KeyError, TypeError, ValueError, InvalidScenario) as exc:
        raise _config_error(f"invalid scenario {args.scenario}: {exc}") from None
    link = _load_link(args.link)
    _check_writable(args.out)
    trace = generate(scenario, link)
    try:
        write_csv(trace, args.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc.strerror or exc}") from None
    n_psi = sum(1 for lab in trace.labels if lab.kind.value == "psi")
    print(f"wrote {len(trace)} samples to {args.out} ({n_psi} psi period(s))")
    return EXIT_OK


# -------------------------------------------------------------------- train

def parse_train_config(data: dict, seed_override: int | None = None, repetitions: int | None = None):
    """Validate a training config dict into (WindowConfig, ModelSpec, TrainConfig, ScalerKind, link dict)."""
    unknown = set(data) - TRAIN_KEYS
    if unknown:
        raise _config_error(f"unknown config key(s): {', '.join(sorted(unknown))}")
    try:
        arch = Arch(data["arch"])
        defaults = PAPER_DEFAULTS[arch]
        features = data.get("features") or list(ALL_FEATURES if arch is Arch.CONV_LSTM else BASE_FEATURES)
        window = WindowConfig(int(data["delta"]), int(data["gamma"]), FeatureSet(tuple(features)))
        seed = int(data.get("seed", 0)) if seed_override is None else seed_override
        spec = ModelSpec(arch, window.delta, window.gamma, window.features.n_features, int(data.get("f", defaults["f"])),
                         int(data.get("kernel_size", 3)), seed)
        config = TrainConfig(
            epochs=int(data.get("epochs", 50)),
            batch_size=int(data.get("batch_size", defaults["batch_size"])),
            learning_rate=float(data.get("learning_rate", 1e-3)),
            validation_fraction=float(data.get("validation_fraction", 0.2)),
            repetitions=int(data.get("repetitions", 1) if repetitions is None else repetitions),
            seed=seed,
        )
        scaler = ScalerKind(data.get("scaler", "standardize"))
        link = LinkSpec.from_dict(data["link"]) if "link" in data else None
    except KeyError as exc:
        raise _config_error(f"missing config key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise _config_error(f"invalid config: {exc}") from None
    return window, spec, config, scaler, link


def _train_one(job):
    spec, train_ds, val_ds, config = job
    t0 = time.perf_counter()
    ckpt, curve = train(build(spec), train_ds, val_ds, config)
    return ckpt, curve, time.perf_counter() - t0


def checkpoint_paths(out: str | Path, repetitions: int) -> list[Path]:
    out = Path(out)
    if repetitions == 1:
        return [out]
    return [out.with_name(f"{out.stem}_rep{r:02d}{out.suffix}") for r in range(repetitions)]


def cmd_train(args) -> int:
    stages = {}
    t0 = time.perf_counter()
    data, raw = _read_json(args.config)
    window, spec, config, scaler_kind, cfg_link = parse_train_config(data, _env_seed(), args.repetitions)
    if args.jobs is not None and args.jobs < 1:
        raise _config_error("--jobs must be >= 1")
    link = _load_link(args.link) if args.link else (cfg_link or LinkSpec())
    ckpt_paths = checkpoint_paths(args.out, config.repetitions)
    loss_paths = [_sibling(p, ".loss.csv") for p in ckpt_paths]
    manifest_path = _sibling(args.out, ".manifest.json")
    _check_writable(*ckpt_paths, *loss_paths, manifest_path)

    train_trace = _read_trace(args.train, link)
    val_trace = _read_trace(args.val, link) if args.val else None
    try:
        train_ds = prepare(train_trace, window)
        val_ds = prepare(val_trace, window) if val_trace is not None else None
    except SeriesTooShort as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    train_ds = train_ds.with_scaler(fit_scaler(train_ds, scaler_kind, link.capacity))
    stages["load"] = time.perf_counter() - t0

    jobs = [
        (replace(spec, seed=config.seed + r), train_ds, val_ds, replace(config, seed=config.seed + r))
        for r in range(config.repetitions)
    ]
    n_jobs = min(args.jobs or 1, len(jobs))
    t1 = time.perf_counter()
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]
    stages["train"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    outputs = {}
    try:
        for r, ((ckpt, curve, secs), cp, lp) in enumerate(zip(results, ckpt_paths, loss_paths)):
            ckpt.save(cp)
            curve.to_csv(lp)
            outputs[f"checkpoint_{r:02d}"] = str(cp)
            outputs[f"loss_{r:02d}"] = str(lp)
            stages[f"train_rep{r:02d}"] = secs
        stages["write"] = time.perf_counter() - t2
        manifest = {
            "command": "train",
            "toolkit_version": __version__,
            "config_sha256": hashlib.sha256(raw).hexdigest(),
            "seed": config.seed,
            "repetitions": config.repetitions,
            "inputs": {"config": args.config, "train": args.train, "val": args.val},
            "outputs": outputs,
            "wall_seconds": stages,
        }
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write outputs: {exc.strerror or exc}") from None
    final = [c.train[-1] for _, c, _ in results]
    print(f"trained {len(results)} {spec.arch.value} model(s); final train loss "
          + ", ".join(f"{v:.4g}" for v in final))
    return EXIT_OK


# --------------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    try:
        ckpt = Checkpoint.load(args.checkpoint)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.checkpoint}: {exc.strerror or exc}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise _config_error(f"{args.checkpoint} is not a usable checkpoint: {exc}") from None

    window = ckpt.window
    if args.delta_override is not None or args.gamma_override is not None:
        try:
            window = WindowConfig(
                args.delta_override if args.delta_override is not None else window.delta,
                args.gamma_override if args.gamma_override is not None else window.gamma,
                window.features,
            )
        except ValueError as exc:
            raise _config_error(str(exc)) from None
    if (window.delta, window.gamma) != (ckpt.spec.delta, ckpt.spec.gamma):
        raise _config_error(
            f"checkpoint expects delta={ckpt.spec.delta}, gamma={ckpt.spec.gamma}; "
            f"data windowed at delta={window.delta}, gamma={window.gamma}"
        )

    link = _load_link(args.link)
    report_path = Path(args.report)
    out_paths = {
        "residuals": _sibling(report_path, ".residuals.csv"),
        "mse_steps": _sibling(report_path, ".mse_steps.csv"),
        "predictions": _sibling(report_path, ".predictions.csv"),
    }
    _check_writable(report_path, *out_paths.values())

    trace = _read_trace(args.data, link, args.labels)
    if args.labels is None and not trace.labels:
        print(f"warning: no labels found for {args.data}; psi metrics omitted", file=sys.stderr)
    try:
        ds = prepare(trace, window)
    except SeriesTooShort as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    try:
        preds = predict(ckpt, ds)
    except ShapeMismatch as exc:
        raise _config_error(str(exc)) from None
    if not any(lab.kind.value == "psi" for lab in trace.labels) and trace.labels:
        print(f"warning: labels for {args.data} contain no psi period; psi metrics omitted", file=sys.stderr)

    scale = ckpt.scaler.capacity
    meta = {
        "arch": ckpt.spec.arch.value,
        "delta": ckpt.spec.delta,
        "gamma": ckpt.spec.gamma,
        "f": ckpt.spec.f,
        "batch_size": ckpt.train_config.batch_size if ckpt.train_config else None,
        "seed": ckpt.spec.seed,
        "checkpoint": Path(args.checkpoint).name,
        "data": Path(args.data).name,
    }
    report = evaluate(preds, ds.targets, ds.tau_index, trace.labels, scale=scale, meta=meta)
    res = residuals(preds / scale, ds.targets / scale, ds.tau_index, trace.labels)
    steps = mse_per_step(preds / scale, ds.targets / scale)
    try:
        report.save(report_path)
        res.to_csv(out_paths["residuals"])
        with open(out_paths["mse_steps"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "mse"])
            for i, v in enumerate(steps):
                w.writerow([i, repr(float(v))])
        with open(out_paths["predictions"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau"] + [f"yhat_{i}" for i in range(preds.shape[1])])
            for tau, row in zip(ds.tau_index, preds):
                w.writerow([int(tau)] + [repr(float(v)) for v in row])
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write outputs: {exc.strerror or exc}") from None
    psi = "" if report.mse_psi_total is None else f", MSE_psi {report.mse_psi_total:.4g}"
    print(f"{report.n_windows} windows: MSE {report.mse_total:.4g}{psi}, r_s {report.spearman_rs:.3f}")
    return EXIT_OK


# ------------------------------------------------------------------- report

def cmd_report(args) -> int:
    paths = sorted(glob.glob(args.reports))
    if not paths:
        raise _config_error(f"no reports match {args.reports}")
    reports = {}
    for p in paths:
        try:
            reports[p] = MetricsReport.load(p)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {p}: {exc.strerror or exc}") from None
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise _config_error(f"{p} is not a metrics report: {exc}") from None
    by_gamma = {}
    for p, r in reports.items():
        by_gamma.setdefault(len(r.mse_per_step) - 1, []).append(p)
    if len(by_gamma) > 1:
        detail = "; ".join(f"gamma={g}: {', '.join(ps)}" for g, ps in sorted(by_gamma.items()))
        raise _config_error(f"reports mix forecast horizons ({detail})")

    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise CliError(EXIT_IO, f"{out} exists and is not a directory")
    grouped = {}
    for r in reports.values():
        key = (str(r.meta.get("arch", "unknown")), int(r.meta.get("delta", 0)))
        grouped.setdefault(key, []).append(r)
    table = compare_models(grouped)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.txt").write_text(table.to_text(), encoding="utf-8")
        table.to_csv(out / "comparison.csv")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write to {out}: {exc.strerror or exc}") from None
    sys.stdout.write(table.to_text())
    return EXIT_OK


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trafficast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a link trace from a scenario")
    g.add_argument("--scenario", required=True)
    g.add_argument("--link", help="link spec JSON (default: 10 Gb/s, 120 s samples)")
    g.add_argument("--out", required=True, help="trace CSV; labels go to <stem>.labels.csv")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one or more models")
    t.add_argument("--config", required=True)
    t.add_argument("--train", required=True)
    t.add_argument("--val")
    t.add_argument("--out", required=True, help="checkpoint JSON")
    t.add_argument("--link", help="link spec JSON for reading the traces")
    t.add_argument("--repetitions", type=int, help="override the config's repetition count")
    t.add_argument("--jobs", type=int, help="repetitions trained in parallel (default 1)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a trace")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--labels")
    e.add_argument("--report", required=True, help="metrics JSON; CSV exports are written beside it")
    e.add_argument("--link")
    e.add_argument("--delta-override", type=int)
    e.add_argument("--gamma-override", type=int)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="tabulate metrics reports")
    r.add_argument("--reports", required=True, help="glob pattern for report JSON files")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 with usage on bad arguments
    try:
        return args.func(args)
    except CliError as exc:
        print(f"trafficast {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
