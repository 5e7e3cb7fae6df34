"""Command-line front end.

Subcommands:
  synth         generate a labeled I/Q dataset through an impaired channel
  check         validate a dataset container and print its census
  train         optimize a classifier on a dataset; writes checkpoint + logs
  eval          score a checkpoint on a dataset split; reports + optional SVGs
  ablate        sweep one design axis, one seeded training run per variant
  export-graph  dump one record's graph (nodes + weighted edges) as CSV

Exit codes: 0 success, 1 runtime failure, 2 usage or bad-input error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, config, datastore, graphbuild, metrics, synth
from .model import GraphClassifier, load_checkpoint, save_checkpoint
from .training import DivergenceError, split_dataset, train_model

USAGE_ERROR = 2


class CliError(Exception):
    """Bad input or unusable configuration; maps to exit code 2."""


def _load_run_config(args):
    return config.load_run_config(getattr(args, "config", None),
                                  getattr(args, "set", None) or ())


def _read_dataset(path):
    if not Path(path).exists():
        raise CliError(f"dataset not found: {path}")
    try:
        return datastore.read_dataset(path)
    except datastore.DatastoreError as exc:
        raise CliError(f"{path}: {exc}") from None


def _scheme_objects(names, sps):
    table = synth.default_schemes(sps)
    missing = [n for n in names if n not in table]
    if missing:
        raise CliError(f"unknown scheme(s) {missing}; choose from {sorted(table)}")
    return [table[n] for n in names]


def _channel(preset):
    try:
        return synth.CHANNEL_PRESETS[preset]
    except KeyError:
        raise CliError(f"unknown channel preset {preset!r}; "
                       f"choose from {sorted(synth.CHANNEL_PRESETS)}") from None


def _model_for_dataset(model_cfg, dataset):
    if model_cfg.n_classes != dataset.n_classes:
        raise CliError(f"model.n_classes={model_cfg.n_classes} but the dataset "
                       f"has {dataset.n_classes} classes (set model.n_classes)")
    if model_cfg.n_nodes != dataset.gamma:
        raise CliError(f"model.n_nodes={model_cfg.n_nodes} but records have "
                       f"{dataset.gamma} samples (set model.n_nodes)")
    return model_cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    cfg = _load_run_config(args)
    s = cfg.synth
    if args.preset:
        s = replace(s, preset=args.preset)
    if args.per_cell:
        s = replace(s, frames_per_cell=args.per_cell)
    if args.seed is not None:
        s = replace(s, seed=args.seed)
    schemes = _scheme_objects(s.schemes, s.samples_per_symbol)
    channel = _channel(s.preset)
    dataset = synth.synthesize_dataset(schemes, s.snrs_db, s.frames_per_cell,
                                       channel, seed=s.seed, n_samples=s.n_samples,
                                       meta={"preset": s.preset})
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    datastore.write_dataset(dataset, args.out)
    print(f"wrote {dataset.n_records} records "
          f"({dataset.n_classes} classes x {len(s.snrs_db)} SNRs x "
          f"{s.frames_per_cell}/cell) to {args.out}")
    return 0


def cmd_check(args):
    if not Path(args.path).exists():
        raise CliError(f"container not found: {args.path}")
    try:
        summary = datastore.validate_container(args.path)
    except datastore.DatastoreError as exc:
        print(f"{args.path}: {exc}", file=sys.stderr)
        return USAGE_ERROR
    print(f"{args.path}: ok")
    print(f"records {summary['records']}, samples/record {summary['gamma']}, "
          f"classes {summary['classes']}")
    print("SNRs " + ",".join(str(s) for s in summary["snrs_db"]))
    for name, count in summary["per_label"].items():
        print(f"  {name:8s} {count}")
    return 0


def cmd_train(args):
    cfg = _load_run_config(args)
    if args.seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed,
                                         split_seed=args.seed))
    dataset = _read_dataset(args.data)
    model_cfg = _model_for_dataset(cfg.model, dataset)
    train_idx, val_idx, _ = split_dataset(dataset, cfg.train.split_seed)
    model = GraphClassifier(model_cfg, seed=cfg.train.seed)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_lines = [config.resolved_text(cfg),
                 f"deterministic = {bool(args.deterministic)}",
                 f"parameters = {model.param_count()}",
                 f"records: train {train_idx.size}, val {val_idx.size}", ""]

    def log(line):
        print(line)
        log_lines.append(line)

    print(f"parameters: {model.param_count()}")
    result = train_model(model, dataset, train_idx, val_idx, cfg.train, log=log)

    (out_dir / "history.csv").write_text(result.history_csv())
    save_checkpoint(model, out_dir / "model.stfw")
    log_lines.append(f"best epoch {result.best_epoch} "
                     f"val loss {result.best_val_loss:.6f}")
    (out_dir / "run.log").write_text("\n".join(log_lines) + "\n")
    print(f"best epoch {result.best_epoch}, val loss {result.best_val_loss:.6f}; "
          f"wrote {out_dir}/model.stfw")
    return 0


def _select_split(dataset, split, split_seed):
    if split == "all":
        return np.arange(dataset.n_records)
    parts = split_dataset(dataset, split_seed)
    return dict(zip(("train", "val", "test"), parts))[split]


def _plot_report(report, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "modgraph"

    snrs = sorted(report.per_snr_accuracy)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(snrs, [report.per_snr_accuracy[s] for s in snrs], marker="o")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    acc_path = out_dir / "accuracy_vs_snr.svg"
    fig.savefig(acc_path, format="svg", metadata={"Date": None})
    plt.close(fig)

    names = list(report.label_names)
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    conf = report.confusion.astype(np.float64)
    rows = conf.sum(axis=1, keepdims=True)
    im = ax.imshow(np.divide(conf, rows, out=np.zeros_like(conf), where=rows > 0),
                   cmap="Blues", vmin=0, vmax=1)
    ax.set_xticks(range(len(names)), names, rotation=90, fontsize=7)
    ax.set_yticks(range(len(names)), names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.colorbar(im, fraction=0.046)
    fig.tight_layout()
    conf_path = out_dir / "confusion.svg"
    fig.savefig(conf_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return acc_path, conf_path


def cmd_eval(args):
    dataset = _read_dataset(args.data)
    if not Path(args.model).exists():
        raise CliError(f"checkpoint not found: {args.model}")
    try:
        model = load_checkpoint(args.model)
    except Exception as exc:
        raise CliError(f"{args.model}: {exc}") from None
    _model_for_dataset(model.config, dataset)
    idx = _select_split(dataset, args.split, args.split_seed)
    report = metrics.evaluate_model(model, dataset, idx, batch_size=args.batch_size)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report.summary_text())
    report.write_per_snr_csv(out_dir / "per_snr.csv")
    report.write_confusion_csv(out_dir / "confusion.csv")
    print(report.summary_text(), end="")
    if args.plot:
        for p in _plot_report(report, out_dir):
            print(f"wrote {p}")
    return 0


ABLATION_AXES = {
    "tau": ("model", "tau"),
    "adjacency": ("model", "adjacency"),
    "poolgat": ("model", "variant"),
    "inputs": ("train", None),
}
INPUT_VARIANTS = ("full", "no-rotation", "no-dstft", "no-iq")


def _variant_config(cfg, axis, value):
    if axis == "tau":
        return replace(cfg, model=replace(cfg.model, tau=int(value))).validate()
    if axis == "adjacency":
        return replace(cfg, model=replace(cfg.model, adjacency=value)).validate()
    if axis == "poolgat":
        return replace(cfg, model=replace(cfg.model, variant=value)).validate()
    if value not in INPUT_VARIANTS:
        raise CliError(f"unknown inputs variant {value!r}; choose from {INPUT_VARIANTS}")
    if value == "no-rotation":
        return replace(cfg, train=replace(cfg.train, augment=False))
    if value == "no-dstft":
        return replace(cfg, model=replace(cfg.model, zero_freq=True))
    if value == "no-iq":
        return replace(cfg, model=replace(cfg.model, zero_iq=True))
    return cfg


def cmd_ablate(args):
    requested = [(axis, getattr(args, axis.replace("-", "_"))) for axis in ABLATION_AXES
                 if getattr(args, axis.replace("-", "_"))]
    if len(requested) != 1:
        raise CliError("ablate needs exactly one of --tau/--adjacency/--poolgat/--inputs")
    axis, raw_values = requested[0]
    values = [v.strip() for v in raw_values.split(",") if v.strip()]
    if not values:
        raise CliError(f"--{axis} got no values")

    base = _load_run_config(args)
    dataset = _read_dataset(args.data)
    rows = []
    for value in values:
        try:
            cfg = _variant_config(base, axis, value)
        except ValueError as exc:
            raise CliError(f"--{axis} {value}: {exc}") from None
        model_cfg = _model_for_dataset(cfg.model, dataset)
        train_idx, val_idx, test_idx = split_dataset(dataset, cfg.train.split_seed)
        model = GraphClassifier(model_cfg, seed=cfg.train.seed)
        train_model(model, dataset, train_idx, val_idx, cfg.train)
        report = metrics.evaluate_model(model, dataset, test_idx)
        rows.append((axis, value, model.param_count(), report.overall_accuracy))
        print(f"{axis}={value}: params {rows[-1][2]}, accuracy {rows[-1][3]:.4f}")

    lines = ["axis,value,params,accuracy"]
    lines += [f"{a},{v},{p},{acc:.6f}" for a, v, p, acc in rows]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return 0


def cmd_export_graph(args):
    dataset = _read_dataset(args.data)
    if not Path(args.model).exists():
        raise CliError(f"checkpoint not found: {args.model}")
    model = load_checkpoint(args.model)
    _model_for_dataset(model.config, dataset)
    if not 0 <= args.index < dataset.n_records:
        raise CliError(f"--index {args.index} out of range [0, {dataset.n_records})")
    frame = dataset.frames()[args.index:args.index + 1].astype(model.dtype)

    from . import autodiff as ad
    from . import dsp
    spec = dsp.dstft_batch(frame[:, 0], frame[:, 1], n_dft=model.config.n_dft,
                           win_len=model.config.win_len).astype(model.dtype)
    model.eval()
    trace = {}
    with ad.no_grad():
        model.forward(frame, spec, trace=trace)
    stage_idx = {"initial": 0, "pool1": 1}[args.stage]
    nodes = trace["features"][stage_idx][0]
    adjacency = trace["adjacency"][stage_idx][0]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    edges_path, nodes_path = graphbuild.export_graph(nodes, adjacency, args.out,
                                                     threshold=args.threshold)
    print(f"stage {args.stage}: {nodes.shape[0]} nodes")
    print(f"wrote {edges_path}")
    print(f"wrote {nodes_path}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_config_args(p):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(prog="modgraph",
                                     description="Modulation recognition over signal graphs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled dataset")
    _add_config_args(p)
    p.add_argument("--preset", help="channel preset name")
    p.add_argument("--per-cell", type=int, help="frames per (scheme, SNR) cell")
    p.add_argument("--seed", type=int, help="generator seed")
    p.add_argument("--out", required=True, help="output container path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("check", help="validate a dataset container")
    p.add_argument("path")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("train", help="train a classifier")
    _add_config_args(p)
    p.add_argument("--data", required=True, help="dataset container")
    p.add_argument("--out-dir", required=True, help="directory for checkpoint and logs")
    p.add_argument("--seed", type=int, help="sets both train.seed and train.split_seed")
    p.add_argument("--deterministic", action="store_true",
                   help="force the fully serial execution path (recorded in the run log)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="dataset container")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--out-dir", default=".", help="directory for report files")
    p.add_argument("--plot", action="store_true", help="also write SVG plots")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="sweep one design axis")
    _add_config_args(p)
    p.add_argument("--data", required=True, help="dataset container")
    p.add_argument("--out", required=True, help="comparison CSV path")
    p.add_argument("--tau", help="comma-separated band half-widths")
    p.add_argument("--adjacency", help="comma-separated adjacency methods")
    p.add_argument("--poolgat", help="comma-separated network variants")
    p.add_argument("--inputs", help="comma-separated input ablations: "
                                    + ",".join(INPUT_VARIANTS))
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-graph", help="dump one record's graph as CSV")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="dataset container")
    p.add_argument("--index", type=int, default=0, help="record index")
    p.add_argument("--stage", choices=("initial", "pool1"), default="initial")
    p.add_argument("--threshold", type=float, default=0.0,
                   help="drop edges with weight <= this")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_export_graph)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, config.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
