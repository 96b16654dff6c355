"""Command-line entry point: ``spikesparse {train,eval,search,reproduce}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, parse_config
from .datasets import DataFormatError, LabeledImageSet, SplitSpec, load_dataset, split
from .search import format_table, run_grid, select, write_grid_csv, write_summary_csv
from .sparsity import SPARSE_KINDS
from .trainer import DivergenceError, evaluate, train, write_predictions

log = logging.getLogger("spikesparse")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--schedule", choices=["none"] + [k.value for k in SPARSE_KINDS])
    p.add_argument("--sigma0", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--dataset", choices=["mnist", "cifar10"])
    p.add_argument("--data-dir")
    p.add_argument("--tolerance", choices=["strict", "one-percent"])
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spikesparse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in [("train", "train one network"),
                        ("search", "sigma0 grid search per schedule"),
                        ("reproduce", "baseline + all five schedules, both tolerance tables")]:
        _add_common(sub.add_parser(name, help=help_))
    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--split", choices=["val", "test"], default="val")
    ev.add_argument("--dump", help="write index,predicted,label,spikes per sample")
    ev.add_argument("--dataset", choices=["mnist", "cifar10"])
    ev.add_argument("--data-dir")
    return parser


def overrides_from_args(args) -> dict[str, str]:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    flags = {"seed": args.seed, "schedule": args.schedule, "sigma0": args.sigma0, "epochs": args.epochs,
             "out_dir": args.out_dir, "dataset": args.dataset, "data_dir": args.data_dir,
             "tolerance": args.tolerance}
    out.update({k: str(v) for k, v in flags.items() if v is not None})
    return out


def load_split(cfg: ExperimentConfig) -> tuple[LabeledImageSet, LabeledImageSet]:
    if not cfg.data_dir:
        raise ConfigError("data_dir is not set")
    data = load_dataset(cfg.dataset, cfg.data_dir, "train")
    if cfg.subset:
        data = data.head(cfg.subset)
    return split(data, SplitSpec(cfg.validation_fraction, cfg.split_seed))


# ---------------------------------------------------------------- commands

def cmd_train(cfg: ExperimentConfig) -> int:
    train_set, val_set = load_split(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    best, history = train(cfg.training, train_set, val_set, metrics_path=out / "metrics.csv",
                          checkpoint_path=out / "checkpoint.ckpt", extra=cfg.provenance())
    save_checkpoint(best, out / "best.ckpt")
    last = history[-1]
    print(f"accuracy={last.val_accuracy!r}% avg_spikes={last.val_avg_spikes!r}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    prov = dict(ckpt.extra)
    if args.dataset:
        prov["dataset"] = args.dataset
    if args.data_dir:
        prov["data_dir"] = args.data_dir
    if not prov.get("data_dir"):
        raise ConfigError("checkpoint has no data_dir; pass --data-dir")
    if args.split == "test":
        data = load_dataset(prov.get("dataset", "mnist"), prov["data_dir"], "test")
    else:
        data = load_dataset(prov.get("dataset", "mnist"), prov["data_dir"], "train")
        if prov.get("subset"):
            data = data.head(prov["subset"])
        _, data = split(data, SplitSpec(prov.get("validation_fraction", 0.2), prov.get("split_seed", 0)))
    if tuple(data.image_shape) != tuple(ckpt.input_shape):
        raise CheckpointError(f"checkpoint expects {ckpt.input_shape} inputs, dataset has {data.image_shape}")
    result = evaluate(ckpt, data)
    if args.dump:
        write_predictions(args.dump, result, data.labels)
    print(f"accuracy={result.accuracy!r}% avg_spikes={result.avg_spikes!r}")
    return EXIT_OK


def _grids(cfg: ExperimentConfig, kinds) -> dict[str, tuple[float, ...]]:
    return {k: cfg.grid_for(k) for k in kinds}


def cmd_search(cfg: ExperimentConfig) -> int:
    train_set, val_set = load_split(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grids = _grids(cfg, cfg.search_schedules)
    baseline, runs = run_grid(cfg.training, grids, train_set, val_set, out, cfg.workers)
    selections = select(runs, baseline, cfg.tolerance, grids)
    write_grid_csv(out / "grid.csv", baseline, runs)
    write_summary_csv(out / "summary.csv", baseline, selections)
    print(format_table(baseline, selections, f"sigma0 search ({cfg.tolerance})"))
    return EXIT_OK


def cmd_reproduce(cfg: ExperimentConfig) -> int:
    train_set, val_set = load_split(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grids = _grids(cfg, [k.value for k in SPARSE_KINDS])
    baseline, runs = run_grid(cfg.training, grids, train_set, val_set, out, cfg.workers)
    write_grid_csv(out / "grid.csv", baseline, runs)
    for tol, title in [("strict", "no increase in validation error"),
                       ("one_percent", "at most 1 point lower validation accuracy")]:
        selections = select(runs, baseline, tol, grids)
        write_summary_csv(out / f"table_{tol}.csv", baseline, selections)
        print(format_table(baseline, selections, f"best sparsity with {title}"))
        print()
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "eval":
            return cmd_eval(args)
        cfg = parse_config(args.config, overrides_from_args(args))
        return {"train": cmd_train, "search": cmd_search, "reproduce": cmd_reproduce}[args.command](cfg)
    except ConfigError as exc:
        print(f"spikesparse: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, DataFormatError, CheckpointError) as exc:
        print(f"spikesparse: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"spikesparse: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
