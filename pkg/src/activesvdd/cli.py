"""Command line entry points: synth, run, report, serve.

Run configs are JSON documents validated strictly: unknown keys are
rejected at every level so a typo cannot silently fall back to a default.
Exit codes: 0 success, 1 usage or config error, 2 data error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import socket
import sys
from pathlib import Path

from .data import DataError, Dataset, generate_synthetic, load_csv, save_csv
from .evaluation import (
    StageMetrics,
    aggregate,
    aggregate_across_datasets,
    export_report,
)
from .loop import ActiveLoopConfig, resolve_budget, run_experiment

__all__ = ["ConfigError", "UsageError", "parse_config", "load_config", "main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

MANIFEST_NAME = "manifest.json"


class ConfigError(Exception):
    """A run config document is malformed or inconsistent."""


class UsageError(Exception):
    """Bad command line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_TOP_KEYS = {"dataset", "synth", "model", "ssl", "query", "loop", "train", "seeds"}
_DATASET_KEYS = {"path", "label_column", "categorical_columns"}
_SYNTH_KEYS = {"n", "dim", "ratio", "seed"}
_MODEL_KEYS = {"objective", "nu", "widths"}
_SSL_KEYS = {"method", "eta"}
_QUERY_KEYS = {"strategy", "q1"}
_LOOP_KEYS = {"budget_fraction", "min_n_for_fraction", "small_budget", "stages"}
_TRAIN_KEYS = {"pretrain_epochs", "finetune_epochs", "lr", "batch"}


def _reject_unknown(section: str, doc: dict, allowed: set) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        where = f"section '{section}'" if section else "config"
        raise ConfigError(f"unknown key(s) {', '.join(map(repr, unknown))} in {where}")


def _section(doc: dict, name: str, allowed: set) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"section '{name}' must be an object")
    _reject_unknown(name, sec, allowed)
    return sec


@dataclasses.dataclass
class ParsedConfig:
    """A validated run config: data source, loop settings, and seeds."""

    dataset: dict | None
    synth: dict | None
    loop: ActiveLoopConfig
    seeds: list

    def describe_source(self) -> str:
        if self.synth is not None:
            return "synth"
        return str(self.dataset["path"])


def parse_config(doc) -> ParsedConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown("", doc, _TOP_KEYS)
    has_dataset = "dataset" in doc
    has_synth = "synth" in doc
    if has_dataset == has_synth:
        raise ConfigError("config needs exactly one of 'dataset' or 'synth'")

    dataset_spec = None
    synth_spec = None
    if has_dataset:
        sec = _section(doc, "dataset", _DATASET_KEYS)
        if "path" not in sec or "label_column" not in sec:
            raise ConfigError("'dataset' needs 'path' and 'label_column'")
        cats = sec.get("categorical_columns", [])
        if not isinstance(cats, list) or not all(isinstance(c, str) for c in cats):
            raise ConfigError("'categorical_columns' must be a list of names")
        dataset_spec = {
            "path": str(sec["path"]),
            "label_column": str(sec["label_column"]),
            "categorical_columns": list(cats),
        }
    else:
        sec = _section(doc, "synth", _SYNTH_KEYS)
        for key in ("n", "dim", "ratio"):
            if key not in sec:
                raise ConfigError(f"'synth' needs '{key}'")
        synth_spec = {
            "n": int(sec["n"]),
            "dim": int(sec["dim"]),
            "ratio": float(sec["ratio"]),
            "seed": int(sec.get("seed", 0)),
        }

    model = _section(doc, "model", _MODEL_KEYS)
    ssl = _section(doc, "ssl", _SSL_KEYS)
    query = _section(doc, "query", _QUERY_KEYS)
    loop = _section(doc, "loop", _LOOP_KEYS)
    train = _section(doc, "train", _TRAIN_KEYS)

    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("'seeds' must be a non-empty list of integers")
    try:
        seeds = [int(s) for s in seeds]
    except (TypeError, ValueError):
        raise ConfigError("'seeds' must be a non-empty list of integers") from None

    try:
        loop_config = ActiveLoopConfig(
            objective=str(model.get("objective", "oc")),
            strategy=str(query.get("strategy", "ab")),
            ssl_method=str(ssl.get("method", "nce")),
            nu=float(model.get("nu", 0.5)),
            eta=float(ssl.get("eta", 1.0)),
            q1=float(query.get("q1", 0.8)),
            widths=tuple(model.get("widths", (32, 16, 8))),
            stages=int(loop.get("stages", 5)),
            budget_fraction=float(loop.get("budget_fraction", 0.01)),
            min_n_for_fraction=int(loop.get("min_n_for_fraction", 500)),
            small_budget=int(loop.get("small_budget", 6)),
            pretrain_epochs=int(train.get("pretrain_epochs", 100)),
            finetune_epochs=int(train.get("finetune_epochs", 50)),
            lr=float(train.get("lr", 1e-3)),
            batch_size=int(train.get("batch", 128)),
            seed=seeds[0],
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return ParsedConfig(dataset=dataset_spec, synth=synth_spec, loop=loop_config, seeds=seeds)


def load_config(path) -> ParsedConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from None
    return parse_config(doc)


def realize_dataset(parsed: ParsedConfig) -> Dataset:
    if parsed.synth is not None:
        spec = parsed.synth
        return generate_synthetic(spec["n"], spec["dim"], spec["ratio"], spec["seed"])
    spec = parsed.dataset
    return load_csv(
        spec["path"], spec["label_column"], spec["categorical_columns"]
    )


def _config_echo(parsed: ParsedConfig) -> dict:
    cfg = parsed.loop
    echo: dict = {}
    if parsed.dataset is not None:
        echo["dataset"] = dict(parsed.dataset)
    else:
        echo["synth"] = dict(parsed.synth)
    echo["model"] = {
        "objective": cfg.objective,
        "nu": cfg.nu,
        "widths": list(cfg.widths),
    }
    echo["ssl"] = {"method": cfg.ssl_method, "eta": cfg.eta}
    echo["query"] = {"strategy": cfg.strategy, "q1": cfg.q1}
    echo["loop"] = {
        "budget_fraction": cfg.budget_fraction,
        "min_n_for_fraction": cfg.min_n_for_fraction,
        "small_budget": cfg.small_budget,
        "stages": cfg.stages,
    }
    echo["train"] = {
        "pretrain_epochs": cfg.pretrain_epochs,
        "finetune_epochs": cfg.finetune_epochs,
        "lr": cfg.lr,
        "batch": cfg.batch_size,
    }
    echo["seeds"] = list(parsed.seeds)
    return echo


def write_manifest(parsed: ParsedConfig, dataset: Dataset, metrics, path) -> Path:
    doc = {
        "format_version": 1,
        "config": _config_echo(parsed),
        "dataset": {
            "name": dataset.name,
            "n": dataset.n,
            "d": dataset.d,
            "anomaly_ratio": dataset.anomaly_ratio,
        },
        "budget": resolve_budget(dataset.n, parsed.loop),
        "runs": [
            {
                "seed": m.seed,
                "dataset": m.dataset,
                "objective": m.objective,
                "strategy": m.strategy,
                "ssl": m.ssl_method,
                "stages": [
                    {
                        "stage": stage,
                        "auc": m.auc[stage],
                        "r": None if stage == 0 else m.r[stage - 1],
                        "q": None if stage == 0 else m.q_used[stage - 1],
                        "q_next": None if stage == 0 else m.q_next[stage - 1],
                        "n_labeled_normal": 0
                        if stage == 0
                        else m.n_labeled_normal[stage - 1],
                        "n_labeled_abnormal": 0
                        if stage == 0
                        else m.n_labeled_abnormal[stage - 1],
                        "loss": m.loss[stage] if m.loss else None,
                    }
                    for stage in range(m.stages + 1)
                ],
            }
            for m in metrics
        ],
    }
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return p


def manifest_to_metrics(doc: dict) -> list[StageMetrics]:
    out = []
    for run in doc.get("runs", []):
        stages = run["stages"]
        body = stages[1:]
        out.append(
            StageMetrics(
                dataset=run["dataset"],
                objective=run["objective"],
                strategy=run["strategy"],
                ssl_method=run["ssl"],
                seed=int(run["seed"]),
                auc=[s["auc"] for s in stages],
                r=[s["r"] for s in body],
                q_used=[s["q"] for s in body],
                q_next=[s["q_next"] for s in body],
                n_labeled_normal=[s["n_labeled_normal"] for s in body],
                n_labeled_abnormal=[s["n_labeled_abnormal"] for s in body],
                loss=[s["loss"] for s in stages],
            )
        )
    return out


def cmd_synth(args) -> int:
    dataset = generate_synthetic(args.n, args.dim, args.ratio, args.seed)
    path = save_csv(dataset, args.out)
    print(f"wrote {path} ({dataset.n} rows, {dataset.d} columns, "
          f"{int(dataset.labels.sum())} abnormal)")
    return EXIT_OK


def cmd_run(args) -> int:
    parsed = load_config(args.config)
    dataset = realize_dataset(parsed)
    out_dir = Path(args.out)
    metrics = run_experiment(parsed.loop, dataset, parsed.seeds, cache={})
    manifest = write_manifest(parsed, dataset, metrics, out_dir / MANIFEST_NAME)
    rows = aggregate(metrics)
    csv_path = export_report(rows, out_dir / "report.csv", fmt="csv")
    json_path = export_report(rows, out_dir / "report.json", fmt="json")
    print(f"wrote {manifest}")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return EXIT_OK


def cmd_report(args) -> int:
    runs_dir = Path(args.runs)
    if not runs_dir.is_dir():
        raise DataError(f"runs directory not found: {runs_dir}")
    manifests = sorted(runs_dir.glob(f"**/{MANIFEST_NAME}"))
    if not manifests:
        raise DataError(f"no {MANIFEST_NAME} files under {runs_dir}")
    metrics: list[StageMetrics] = []
    for path in manifests:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        metrics.extend(manifest_to_metrics(doc))
    rows = aggregate(metrics)
    if args.across_datasets:
        rows = rows + aggregate_across_datasets(rows)
    out_dir = Path(args.out)
    csv_path = export_report(rows, out_dir / "report.csv", fmt="csv")
    json_path = export_report(rows, out_dir / "report.json", fmt="json")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    # imported lazily so batch commands work without the service stack
    import uvicorn

    from .service import build_app

    parsed = load_config(args.config)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        probe.close()
        raise RuntimeError(f"cannot bind {args.host}:{args.port}: {exc}") from None
    probe.close()
    app = build_app(
        default_config=parsed,
        state_dir=args.state_dir,
        ui_dir=args.ui_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="activesvdd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic labeled CSV")
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--dim", type=int, required=True)
    p_synth.add_argument("--ratio", type=float, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_run = sub.add_parser("run", help="run a seeded experiment from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.set_defaults(func=cmd_run)

    p_report = sub.add_parser("report", help="aggregate manifests into reports")
    p_report.add_argument("--runs", required=True)
    p_report.add_argument("--out", required=True)
    p_report.add_argument("--across-datasets", action="store_true")
    p_report.set_defaults(func=cmd_report)

    p_serve = sub.add_parser("serve", help="start the labeling service")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--state-dir", default="sessions")
    p_serve.add_argument("--ui-dir", default=None)
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
