"""Command-line front end: single experiments, malicious-fraction sweeps, CSV/JSON reports."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import __version__
from .data import Dataset, PoisonSpec, load_idx, synthesize
from .defense import DefenseConfig
from .federation import ExperimentReport, FederationConfig, run_experiment
from .privacy import LdpConfig

_SYNTHETIC_DEFAULTS = {
    "type": "synthetic",
    "num_classes": 10,
    "per_class": 200,
    "dim": 64,
    "separation": 6.0,
    "noise_std": 1.0,
    "test_per_class": 50,
}
_IDX_KEYS = {"type", "train_images", "train_labels", "test_images", "test_labels"}
_DEFENSE_DEFAULTS = {
    "kind": "none",
    "fixed_fraction": 0.2,
    "zscore_threshold": 1.0,
    "zscore_one_sided": False,
    "kmeans_guard": 3.5,
    "kmeans_max_iters": 100,
}
_LDP_DEFAULTS = {"epsilon": 1.0, "sensitivity": 0.0001}
_TOP_DEFAULTS = {
    "total_clients": 50,
    "clients_per_round": 10,
    "global_epochs": 15,
    "client_epochs": 5,
    "client_lr": 0.6,
    "batch_size": 12,
    "malicious_fraction": 0.0,
    "source_class": 5,
    "target_class": 3,
    "hidden_dims": [32],
    "seed": 0,
    "repeats": 3,
}

ROUNDS_COLUMNS = (
    "repeat",
    "epoch",
    "malicious_fraction",
    "defense",
    "accuracy",
    "test_loss",
    "source_recall",
    "det_accuracy",
    "det_precision",
    "det_recall",
    "det_f1",
    "eliminated_count",
    "selected_count",
)
SWEEP_COLUMNS = (
    "malicious_fraction",
    "defense_on",
    "final_accuracy",
    "final_source_recall",
    "mean_det_accuracy",
    "mean_det_f1",
)


class ConfigError(ValueError):
    """Rejected experiment configuration."""


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: dict
    federation: FederationConfig
    sweep: tuple[float, ...] | None = None


def _merge_strict(section: str, given: dict, defaults: dict) -> dict:
    for key in given:
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in {section}")
    merged = dict(defaults)
    merged.update(given)
    return merged


def parse_config(path) -> ExperimentSpec:
    """Load and validate a JSON experiment config; unknown keys are fatal."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")

    known_top = set(_TOP_DEFAULTS) | {"dataset", "defense", "ldp", "sweep"}
    for key in raw:
        if key not in known_top:
            raise ConfigError(f"unknown key {key!r} in config")

    dataset_raw = raw.get("dataset", {"type": "synthetic"})
    ds_type = dataset_raw.get("type")
    if ds_type == "synthetic":
        dataset = _merge_strict("dataset", dataset_raw, _SYNTHETIC_DEFAULTS)
    elif ds_type == "idx":
        for key in dataset_raw:
            if key not in _IDX_KEYS:
                raise ConfigError(f"unknown key {key!r} in dataset")
        missing = _IDX_KEYS - set(dataset_raw)
        if missing:
            raise ConfigError(f"dataset missing keys: {sorted(missing)}")
        dataset = dict(dataset_raw)
    else:
        raise ConfigError(f"dataset type must be 'synthetic' or 'idx', got {ds_type!r}")

    top = _merge_strict("config", {k: v for k, v in raw.items() if k in _TOP_DEFAULTS}, _TOP_DEFAULTS)
    defense = _merge_strict("defense", raw.get("defense", {}), _DEFENSE_DEFAULTS)
    ldp = _merge_strict("ldp", raw.get("ldp", {}), _LDP_DEFAULTS)

    if not 0.0 <= top["malicious_fraction"] <= 0.5:
        raise ConfigError(
            f"malicious_fraction {top['malicious_fraction']} outside the supported [0, 0.5]"
        )
    sweep = raw.get("sweep")
    if sweep is not None:
        sweep = tuple(float(f) for f in sweep)
        if not sweep:
            raise ConfigError("sweep list must be nonempty")
        for f in sweep:
            if not 0.0 <= f <= 0.5:
                raise ConfigError(f"sweep fraction {f} outside the supported [0, 0.5]")

    try:
        federation = FederationConfig(
            total_clients=top["total_clients"],
            clients_per_round=top["clients_per_round"],
            global_epochs=top["global_epochs"],
            client_epochs=top["client_epochs"],
            client_lr=top["client_lr"],
            batch_size=top["batch_size"],
            malicious_fraction=top["malicious_fraction"],
            poison_spec=PoisonSpec(top["source_class"], top["target_class"]),
            defense=DefenseConfig(**defense),
            ldp=LdpConfig(**ldp),
            hidden_dims=tuple(top["hidden_dims"]),
            seed=top["seed"],
            repeats=top["repeats"],
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    return ExperimentSpec(dataset=dataset, federation=federation, sweep=sweep)


def build_datasets(spec: ExperimentSpec) -> tuple[Dataset, Dataset]:
    """Materialize the (train, test) pair named by the spec."""
    ds = spec.dataset
    if ds["type"] == "synthetic":
        seed = spec.federation.seed
        train = synthesize(
            ds["num_classes"], ds["per_class"], ds["dim"], ds["separation"],
            seed=[seed, 1000], noise_std=ds["noise_std"],
        )
        test = synthesize(
            ds["num_classes"], ds["test_per_class"], ds["dim"], ds["separation"],
            seed=[seed, 1001], noise_std=ds["noise_std"],
        )
        return train, test
    train = load_idx(ds["train_images"], ds["train_labels"])
    test = load_idx(ds["test_images"], ds["test_labels"], num_classes=train.num_classes)
    return train, test


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def _config_dict(spec: ExperimentSpec) -> dict:
    fed = spec.federation
    return {
        "dataset": spec.dataset,
        "total_clients": fed.total_clients,
        "clients_per_round": fed.clients_per_round,
        "global_epochs": fed.global_epochs,
        "client_epochs": fed.client_epochs,
        "client_lr": fed.client_lr,
        "batch_size": fed.batch_size,
        "malicious_fraction": fed.malicious_fraction,
        "source_class": fed.poison_spec.source_class,
        "target_class": fed.poison_spec.target_class,
        "defense": {
            "kind": fed.defense.kind,
            "fixed_fraction": fed.defense.fixed_fraction,
            "zscore_threshold": fed.defense.zscore_threshold,
            "zscore_one_sided": fed.defense.zscore_one_sided,
            "kmeans_guard": fed.defense.kmeans_guard,
            "kmeans_max_iters": fed.defense.kmeans_max_iters,
        },
        "ldp": {"epsilon": fed.ldp.epsilon, "sensitivity": fed.ldp.sensitivity},
        "hidden_dims": list(fed.hidden_dims),
        "seed": fed.seed,
        "repeats": fed.repeats,
        "sweep": list(spec.sweep) if spec.sweep else None,
    }


def write_reports(spec: ExperimentSpec, report: ExperimentReport, out_dir: Path) -> None:
    """Write rounds.csv (per-round rows plus repeat=-1 mean rows) and summary.json."""
    out_dir.mkdir(parents=True, exist_ok=True)
    fed = spec.federation
    lines = [",".join(ROUNDS_COLUMNS)]
    for repeat, run in enumerate(report.runs):
        for rec in run:
            lines.append(
                ",".join(
                    _fmt(v)
                    for v in (
                        repeat, rec.epoch, fed.malicious_fraction, fed.defense.kind,
                        rec.accuracy, rec.test_loss, rec.source_recall,
                        rec.det_accuracy, rec.det_precision, rec.det_recall, rec.det_f1,
                        rec.eliminated_count, len(rec.selected),
                    )
                )
            )
    for epoch, means in enumerate(report.epoch_means):
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    -1, epoch, fed.malicious_fraction, fed.defense.kind,
                    means["accuracy"], means["test_loss"], means["source_recall"],
                    means["det_accuracy"], means["det_precision"], means["det_recall"],
                    means["det_f1"], means["eliminated_count"], fed.clients_per_round,
                )
            )
        )
    (out_dir / "rounds.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    summary = {
        "final_epoch_means": report.final_means,
        "mean_det_accuracy": report.mean_det_accuracy,
        "mean_det_f1": report.mean_det_f1,
        "config": _config_dict(spec),
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def cmd_run(spec: ExperimentSpec, out_dir: Path) -> int:
    train, test = build_datasets(spec)
    report = run_experiment(spec.federation, train, test)
    write_reports(spec, report, out_dir)
    final = report.final_means
    print(
        f"done: accuracy={final['accuracy']:.4f} test_loss={final['test_loss']:.4f} "
        f"source_recall={final['source_recall']:.4f} det_accuracy={report.mean_det_accuracy:.4f}"
    )
    return 0


def cmd_sweep(spec: ExperimentSpec, fractions, out_dir: Path) -> int:
    """Run each fraction with the configured defense on and off; write sweep.csv."""
    for f in fractions:
        if not 0.0 <= f <= 0.5:
            raise ConfigError(f"sweep fraction {f} outside the supported [0, 0.5]")
    if spec.federation.defense.kind == "none":
        raise ConfigError("sweep needs a defense kind other than 'none' to compare against")
    train, test = build_datasets(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [",".join(SWEEP_COLUMNS)]
    for fraction in fractions:
        for defense_on in (False, True):
            fed = replace(
                spec.federation,
                malicious_fraction=fraction,
                defense=spec.federation.defense if defense_on else DefenseConfig(kind="none"),
            )
            sub_spec = replace(spec, federation=fed, sweep=None)
            report = run_experiment(fed, train, test)
            label = "on" if defense_on else "off"
            write_reports(sub_spec, report, out_dir / f"frac_{_fmt(fraction)}_{label}")
            final = report.final_means
            rows.append(
                ",".join(
                    _fmt(v)
                    for v in (
                        fraction, defense_on, final["accuracy"], final["source_recall"],
                        report.mean_det_accuracy, report.mean_det_f1,
                    )
                )
            )
            print(
                f"fraction={fraction:g} defense={label}: "
                f"accuracy={final['accuracy']:.4f} source_recall={final['source_recall']:.4f}"
            )
    (out_dir / "sweep.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsim",
        description="Federated-learning poisoning/defense simulator",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single experiment")
    p_run.add_argument("--config", required=True, help="path to a JSON experiment config")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_sweep = sub.add_parser("sweep", help="sweep malicious fractions with/without defense")
    p_sweep.add_argument("--config", required=True, help="path to a JSON experiment config")
    p_sweep.add_argument(
        "--fractions",
        default=None,
        help="comma-separated malicious fractions (default: the config's sweep list)",
    )
    p_sweep.add_argument("--out", default="out", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = parse_config(args.config)
        if getattr(args, "seed", None) is not None:
            spec = replace(spec, federation=replace(spec.federation, seed=args.seed))
        if args.command == "run":
            return cmd_run(spec, Path(args.out))
        if args.fractions is not None:
            fractions = tuple(float(f) for f in args.fractions.split(","))
        elif spec.sweep:
            fractions = spec.sweep
        else:
            raise ConfigError("sweep requires --fractions or a 'sweep' list in the config")
        return cmd_sweep(spec, fractions, Path(args.out))
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
