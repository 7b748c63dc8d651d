"""Command-line entry points: prepare, train, evaluate, ablate, grid, synth.

Configuration is a flat JSON object with dotted keys (``train.tau``,
``model.granularity``); CLI flags override file values, and the resolved
config is echoed into the output directory so a run can be reproduced by
pointing at its own echo.  Exit codes: 0 ok, 2 config error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass

from .data import SplitSpec, load_dataset, load_interactions, kcore_filter, save_dataset, split
from .errors import ConfigError, DataError, NumericError, WeightedGCLError
from .evaluation import evaluate
from .graph import build_adjacency, graph_from_dataset
from .model import load_checkpoint, save_checkpoint
from .synth import generate_interactions, write_interactions_tsv
from .training import VARIANTS, TrainConfig, clean_aggregate, train_loop

# hyperparameter values searched in the reference experiments; grid axes
# must stay inside these unless --allow-custom-grid is passed
SEARCH_SPACE = {
    "grid.lambda_c": (0.1, 0.01, 0.001),
    "grid.tau": (0.2, 0.4, 0.6, 0.8),
    "grid.n_layers": (2, 3, 4),
    "grid.granularity": (1, 2, 3, 4),
}


def _positive(kind):
    def check(v):
        return isinstance(v, kind) and not isinstance(v, bool) and v > 0
    return check


def _non_negative(kind):
    def check(v):
        return isinstance(v, kind) and not isinstance(v, bool) and v >= 0
    return check


def _number_list(v):
    return isinstance(v, list) and len(v) > 0 and all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)


# key -> (default, validator, expected-domain description)
KEY_SPECS: dict[str, tuple] = {
    "data.path": (None, lambda v: v is None or isinstance(v, str), "a file or prepared-directory path"),
    "data.k_core": (1, _positive(int), "an integer >= 1"),
    "data.split_seed": (0, _non_negative(int), "an integer >= 0"),
    "data.ratios": ([0.8, 0.1, 0.1],
                    lambda v: _number_list(v) and len(v) == 3 and abs(sum(v) - 1.0) <= 1e-12,
                    "three fractions summing to 1"),
    "model.embedding_dim": (64, _positive(int), "an integer >= 1"),
    "model.n_layers": (2, _positive(int), "an integer >= 1"),
    "model.granularity": (2, lambda v: isinstance(v, int) and 1 <= v <= 4, "an integer in 1..4"),
    "train.batch_size": (4096, _positive(int), "an integer >= 1"),
    "train.learning_rate": (1e-4, _positive((int, float)), "a number > 0"),
    "train.lambda_c": (0.1, _non_negative((int, float)), "a number >= 0"),
    "train.tau": (0.2, _positive((int, float)), "a number > 0"),
    "train.reg_weight": (1e-4, _non_negative((int, float)), "a number >= 0"),
    "train.patience": (30, _non_negative(int), "an integer >= 0"),
    "train.max_epochs": (500, _non_negative(int), "an integer >= 0"),
    "train.seed": (0, _non_negative(int), "an integer >= 0"),
    "train.variant": ("wgcl", lambda v: v in VARIANTS, "one of {wgcl, all-pert, no-pert, lightgcn}"),
    "train.cl_pool": ("batch", lambda v: v in ("batch", "full"), "'batch' or 'full'"),
    "eval.ks": ([10, 20], lambda v: _number_list(v) and all(isinstance(x, int) and x >= 1 for x in v),
                "a list of integers >= 1"),
    "out.dir": (None, lambda v: v is None or isinstance(v, str), "a directory path"),
    "grid.lambda_c": (None, lambda v: v is None or _number_list(v), "a list of numbers"),
    "grid.tau": (None, lambda v: v is None or _number_list(v), "a list of numbers"),
    "grid.n_layers": (None, lambda v: v is None or _number_list(v), "a list of integers"),
    "grid.granularity": (None, lambda v: v is None or _number_list(v), "a list of integers"),
    "ablate.granularities": ([1, 2, 3, 4],
                             lambda v: _number_list(v) and all(isinstance(x, int) and 1 <= x <= 4 for x in v),
                             "a list of integers in 1..4"),
}


@dataclass
class ExperimentConfig:
    """Fully resolved flat configuration."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def train_config(self, **overrides) -> TrainConfig:
        v = {**self.values, **{k: val for k, val in overrides.items()}}
        return TrainConfig(
            embedding_dim=v["model.embedding_dim"],
            batch_size=v["train.batch_size"],
            learning_rate=float(v["train.learning_rate"]),
            lambda_c=float(v["train.lambda_c"]),
            tau=float(v["train.tau"]),
            n_layers=v["model.n_layers"],
            reg_weight=float(v["train.reg_weight"]),
            granularity=v["model.granularity"],
            patience=v["train.patience"],
            max_epochs=v["train.max_epochs"],
            seed=v["train.seed"],
            variant=v["train.variant"],
            cl_pool=v["train.cl_pool"],
        )

    def split_spec(self) -> SplitSpec:
        return SplitSpec(tuple(self.values["data.ratios"]), self.values["data.split_seed"])


def parse_config(path: str | None = None, overrides: dict | None = None,
                 allow_custom_grid: bool = False) -> ExperimentConfig:
    """Resolve defaults, file values, and flag overrides into one config.

    Unknown keys and out-of-domain values raise ConfigError.  Grid axes
    outside the documented search space are rejected unless
    ``allow_custom_grid``.
    """
    values = {k: spec[0] for k, spec in KEY_SPECS.items()}
    layers = []
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(file_values, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        layers.append(file_values)
    if overrides:
        layers.append(overrides)

    for layer in layers:
        for key, value in layer.items():
            if key not in KEY_SPECS:
                raise ConfigError(f"unknown config key {key!r}")
            _, validator, domain = KEY_SPECS[key]
            if not validator(value):
                raise ConfigError(f"invalid value for {key!r}: {value!r} (expected {domain})")
            values[key] = value

    if not allow_custom_grid:
        for key, allowed in SEARCH_SPACE.items():
            axis = values.get(key)
            if axis is not None and any(x not in allowed for x in axis):
                raise ConfigError(
                    f"{key!r} must be a subset of {sorted(allowed)} "
                    f"(pass --allow-custom-grid to override)")
    cfg = ExperimentConfig(values)
    cfg.train_config()  # surface cross-field problems (e.g. dim too small for granularity) now
    return cfg


def _ensure_outdir(path: str, force: bool) -> None:
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise ConfigError(f"output directory {path!r} is not empty (pass --force to overwrite)")
    os.makedirs(path, exist_ok=True)


def _write_config_echo(config: ExperimentConfig, out_dir: str) -> None:
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config.values, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_data(config: ExperimentConfig):
    path = config["data.path"]
    if path is None:
        raise ConfigError("data.path is required")
    if os.path.isdir(path):
        return load_dataset(path)
    interactions = kcore_filter(load_interactions(path), config["data.k_core"])
    if not interactions:
        raise DataError(f"no interactions survive {config['data.k_core']}-core filtering")
    return split(interactions, config.split_spec())


def run_experiment(config: ExperimentConfig, force: bool = False) -> dict:
    """Prepare data, train, evaluate the best checkpoint on the test split.

    Writes config.json, history.jsonl, checkpoint.json, and metrics.json
    into ``out.dir``; returns the metrics dict.
    """
    out_dir = config["out.dir"]
    if out_dir is None:
        raise ConfigError("out.dir is required")
    _ensure_outdir(out_dir, force)
    _write_config_echo(config, out_dir)

    ds = _load_data(config)
    result = train_loop(ds, config.train_config())

    with open(os.path.join(out_dir, "history.jsonl"), "w", encoding="utf-8") as fh:
        for entry in result.history:
            fh.write(json.dumps(entry) + "\n")
    save_checkpoint(result.params, result.n_layers, os.path.join(out_dir, "checkpoint.json"))

    adj = build_adjacency(graph_from_dataset(ds))
    f = clean_aggregate(adj, result.params, result.n_layers)
    report = evaluate(f, ds, "test", ks=tuple(config["eval.ks"]))
    metrics = json.loads(report.to_json())
    metrics["best_epoch"] = result.best_epoch
    metrics["best_val_recall20"] = result.best_val_recall
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return metrics


ABLATION_HEADER = ["variant", "R@10", "R@20", "N@10", "N@20"]


def _metric_row(metrics: dict) -> list[str]:
    return [f"{metrics['10']['recall']:.6f}", f"{metrics['20']['recall']:.6f}",
            f"{metrics['10']['ndcg']:.6f}", f"{metrics['20']['ndcg']:.6f}"]


def run_ablation_suite(config: ExperimentConfig, force: bool = False) -> str:
    """Run the perturbation variants plus one gated run per granularity.

    Rows: W-G<k> for each requested granularity (the full model), then
    all-pert, no-pert, and the plain backbone, all sharing seed and budget.
    Partial results are flushed row by row so a failing run leaves the
    finished rows on disk.  Returns the CSV path.
    """
    out_dir = config["out.dir"]
    if out_dir is None:
        raise ConfigError("out.dir is required")
    _ensure_outdir(out_dir, force)
    _write_config_echo(config, out_dir)

    runs = [(f"W-G{k}", {"train.variant": "wgcl", "model.granularity": int(k)})
            for k in config["ablate.granularities"]]
    runs += [(v, {"train.variant": v}) for v in ("all-pert", "no-pert", "lightgcn")]

    csv_path = os.path.join(out_dir, "ablation.csv")
    eval_ks = sorted(set(config["eval.ks"]) | {10, 20})
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ABLATION_HEADER)
        fh.flush()
        for label, patch in runs:
            sub = ExperimentConfig({**config.values, **patch,
                                    "eval.ks": eval_ks,
                                    "out.dir": os.path.join(out_dir, label)})
            metrics = run_experiment(sub, force=force)
            writer.writerow([label] + _metric_row(metrics))
            fh.flush()
    return csv_path


GRID_HEADER = ["lambda_c", "tau", "n_layers", "granularity", "R@10", "R@20", "N@10", "N@20"]


def run_grid(config: ExperimentConfig, force: bool = False) -> str:
    """Sequential grid search over the configured axes; returns the CSV path."""
    out_dir = config["out.dir"]
    if out_dir is None:
        raise ConfigError("out.dir is required")
    _ensure_outdir(out_dir, force)
    _write_config_echo(config, out_dir)

    axes = {
        "train.lambda_c": config["grid.lambda_c"] or [config["train.lambda_c"]],
        "train.tau": config["grid.tau"] or [config["train.tau"]],
        "model.n_layers": config["grid.n_layers"] or [config["model.n_layers"]],
        "model.granularity": config["grid.granularity"] or [config["model.granularity"]],
    }
    csv_path = os.path.join(out_dir, "grid.csv")
    eval_ks = sorted(set(config["eval.ks"]) | {10, 20})
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(GRID_HEADER)
        fh.flush()
        for lc in axes["train.lambda_c"]:
            for tau in axes["train.tau"]:
                for nl in axes["model.n_layers"]:
                    for gran in axes["model.granularity"]:
                        label = f"lc{lc}-tau{tau}-L{nl}-K{gran}"
                        sub = ExperimentConfig({**config.values,
                                                "train.lambda_c": lc, "train.tau": tau,
                                                "model.n_layers": int(nl),
                                                "model.granularity": int(gran),
                                                "eval.ks": eval_ks,
                                                "out.dir": os.path.join(out_dir, label)})
                        metrics = run_experiment(sub, force=force)
                        writer.writerow([lc, tau, int(nl), int(gran)] + _metric_row(metrics))
                        fh.flush()
    return csv_path


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


# (flag, config key, argparse type) for flags that override config values
_OVERRIDE_FLAGS = [
    ("--data", "data.path", str),
    ("--k-core", "data.k_core", int),
    ("--split-seed", "data.split_seed", int),
    ("--ratios", "data.ratios", _float_list),
    ("--embedding-dim", "model.embedding_dim", int),
    ("--n-layers", "model.n_layers", int),
    ("--granularity", "model.granularity", int),
    ("--batch-size", "train.batch_size", int),
    ("--lr", "train.learning_rate", float),
    ("--lambda-c", "train.lambda_c", float),
    ("--tau", "train.tau", float),
    ("--reg-weight", "train.reg_weight", float),
    ("--patience", "train.patience", int),
    ("--max-epochs", "train.max_epochs", int),
    ("--seed", "train.seed", int),
    ("--variant", "train.variant", str),
    ("--cl-pool", "train.cl_pool", str),
    ("--ks", "eval.ks", _int_list),
    ("--out", "out.dir", str),
    ("--grid-lambda-c", "grid.lambda_c", _float_list),
    ("--grid-tau", "grid.tau", _float_list),
    ("--grid-n-layers", "grid.n_layers", _int_list),
    ("--grid-granularity", "grid.granularity", _int_list),
    ("--granularities", "ablate.granularities", _int_list),
]


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file with flat dotted keys")
    parser.add_argument("--force", action="store_true", help="allow writing into a non-empty output directory")
    parser.add_argument("--allow-custom-grid", action="store_true",
                        help="accept grid axes outside the documented search space")
    for flag, key, typ in _OVERRIDE_FLAGS:
        parser.add_argument(flag, dest=key.replace(".", "__"), type=typ, default=None,
                            help=f"override config key {key}")


def _config_from_args(args) -> ExperimentConfig:
    overrides = {}
    for _, key, _typ in _OVERRIDE_FLAGS:
        value = getattr(args, key.replace(".", "__"), None)
        if value is not None:
            overrides[key] = value
    return parse_config(args.config, overrides, allow_custom_grid=args.allow_custom_grid)


def _cmd_synth(args) -> int:
    interactions = generate_interactions(args.users, args.items, args.groups,
                                         args.p_in, args.p_out, args.seed)
    write_interactions_tsv(interactions, args.out)
    print(f"wrote {len(interactions)} interactions to {args.out}")
    return 0


def _cmd_prepare(args) -> int:
    config = _config_from_args(args)
    if config["data.path"] is None or os.path.isdir(config["data.path"]):
        raise ConfigError("prepare needs --data pointing at a raw interaction TSV")
    out_dir = config["out.dir"]
    if out_dir is None:
        raise ConfigError("out.dir is required")
    _ensure_outdir(out_dir, args.force)
    ds = _load_data(config)
    save_dataset(ds, out_dir)
    _write_config_echo(config, out_dir)
    print(f"prepared dataset in {out_dir}: {ds.num_users} users, {ds.num_items} items, "
          f"{len(ds.train)}/{len(ds.val)}/{len(ds.test)} train/val/test")
    return 0


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    metrics = run_experiment(config, force=args.force)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    params, header = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    if params.num_nodes != ds.num_users + ds.num_items:
        raise DataError(f"checkpoint has {params.num_nodes} nodes, dataset has "
                        f"{ds.num_users + ds.num_items}")
    adj = build_adjacency(graph_from_dataset(ds))
    f = clean_aggregate(adj, params, int(header["L"]))
    report = evaluate(f, ds, args.phase, ks=tuple(_int_list(args.ks)))
    print(report.to_json())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    return 0


def _cmd_ablate(args) -> int:
    config = _config_from_args(args)
    csv_path = run_ablation_suite(config, force=args.force)
    print(f"wrote {csv_path}")
    return 0


def _cmd_grid(args) -> int:
    config = _config_from_args(args)
    csv_path = run_grid(config, force=args.force)
    print(f"wrote {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weightedgcl",
                                     description="Weighted graph contrastive learning recommender")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic block-structured dataset")
    p.add_argument("--out", required=True, help="output TSV path")
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=300)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--p-in", type=float, default=0.2)
    p.add_argument("--p-out", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    for name, func, doc in [
        ("prepare", _cmd_prepare, "ingest, k-core filter, split, and persist a dataset"),
        ("train", _cmd_train, "train one model and evaluate its best checkpoint"),
        ("ablate", _cmd_ablate, "run perturbation variants and granularity levels"),
        ("grid", _cmd_grid, "sequential hyperparameter grid search"),
    ]:
        p = sub.add_parser(name, help=doc)
        _add_config_args(p)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a prepared dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="prepared dataset directory")
    p.add_argument("--phase", choices=("val", "test"), default="test")
    p.add_argument("--ks", default="10,20", help="comma-separated cutoffs")
    p.add_argument("--out", default=None, help="also write the report to this file")
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except WeightedGCLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
