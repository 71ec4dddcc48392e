"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Set ``GAITGRAPH_LOG`` (DEBUG, INFO, WARNING, ...) to control log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import ConfigError
from .checkpoint import CheckpointError
from .config import ConfigFileError, config_to_json, load_config_file, resolve_config
from .evaluation import EvalReport, cross_view_eval, embed_sequences, temporal_control
from .features import FeatureLayout, ShapeError, assemble_single, write_feature_dump
from .model import REDUCED_BLOCKS, FULL_BLOCKS
from .pose_io import IndexEntry, PoseDataError, load_dataset, pad_or_crop, write_csv_sequence, write_index
from .skeleton import SkeletonError, get_skeleton
from .synth import make_synthetic_dataset
from .train import NumericalError, TrainConfigError, fit, load_model, read_history_csv
from .verify import GRAD_TOLERANCE, run_grad_checks

log = logging.getLogger("gaitgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
BLOCK_PRESETS = {"reduced": REDUCED_BLOCKS, "full": FULL_BLOCKS}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _setup_logging() -> None:
    level = os.environ.get("GAITGRAPH_LOG", "INFO").upper()
    root = logging.getLogger("gaitgraph")
    if not root.handlers:
        h = logging.StreamHandler(sys.stderr)
        h.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(h)
    root.setLevel(getattr(logging, level, logging.INFO))


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--config", type=Path, default=None, help="TOML or JSON config; explicit flags win")
    p.add_argument("--workers", type=int, default=None, help="data-preparation threads (default 1)")
    p.add_argument("--bits", type=int, choices=(32, 64), default=None, help="floating-point width")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gaitgraph", description="Skeleton gait recognition toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-synth", help="write a synthetic walker dataset with index files")
    _common(p)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--seqs-per-class", type=int, default=20)
    p.add_argument("--frames", type=int, default=64)
    p.add_argument("--views", type=int, nargs="+", default=[90])
    p.add_argument("--noise", type=float, default=1.0, help="pixel noise sigma")
    p.add_argument("--train-fraction", type=float, default=0.75)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("extract-features", help="dump the assembled feature tensor (GGF1 format)")
    _common(p)
    p.add_argument("--index", type=Path, default=None)
    p.add_argument("--skeleton", default=None)
    p.add_argument("--t-fixed", type=int, default=None)
    p.add_argument("--streams", nargs="+", default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="train an embedder")
    _common(p)
    p.add_argument("--index", type=Path, default=None)
    p.add_argument("--skeleton", default=None)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None, help="peak learning rate")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--blocks", choices=sorted(BLOCK_PRESETS), default=None)
    p.add_argument("--kernel", type=int, default=None, help="temporal kernel size")
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--train-order", choices=("sort", "shuffle"), default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--resume", type=Path, default=None)

    p = sub.add_parser("embed", help="embed the sequences of an index")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--t-fixed", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="cross-view rank-1 evaluation")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--gallery", type=Path, default=None)
    p.add_argument("--probe", type=Path, default=None)
    p.add_argument("--test-order", choices=("sort", "shuffle"), default=None)
    p.add_argument("--t-fixed", type=int, default=None)
    p.add_argument("--out-dir", type=Path, default=None)
    p.add_argument("--stem", default="report")

    p = sub.add_parser("grad-check", help="finite-difference gradient checks of every operation")
    _common(p)
    p.add_argument("--no-composite", action="store_true", help="skip the full network + loss check")
    p.add_argument("--step", type=float, default=1e-5)

    p = sub.add_parser("report", help="summarize evaluation reports and training histories")
    _common(p)
    p.add_argument("reports", type=Path, nargs="*", help="one report JSON, or two (sort then shuffle)")
    p.add_argument("--history", type=Path, default=None)
    p.add_argument("--plot", type=Path, default=None, help="write a static PNG of the loss curve")
    return parser


def _resolved(args, train=None, model=None, data=None, evaluation=None) -> dict:
    doc = load_config_file(args.config) if args.config else {}
    train = dict(train or {})
    train.update(seed=args.seed, workers=args.workers)
    if args.bits is not None:
        train["float64"] = args.bits == 64
    overrides = {name: {k: str(v) if isinstance(v, Path) else v for k, v in (section or {}).items()}
                 for name, section in (("train", train), ("model", model), ("data", data), ("eval", evaluation))}
    resolved = resolve_config(doc, overrides)
    log.info("resolved config: %s", json.dumps(config_to_json(resolved), sort_keys=True))
    log.info("seed: %d", resolved["train"].seed)
    return resolved


def _layout(resolved) -> FeatureLayout:
    return FeatureLayout(tuple(resolved["data"]["streams"]))


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required (flag or config file)")
    return value


def cmd_gen_synth(args) -> int:
    resolved = _resolved(args)
    seed = resolved["train"].seed
    out = args.out
    seqs, classes = make_synthetic_dataset(args.classes, args.seqs_per_class, args.frames, seed,
                                           views=tuple(args.views), noise_sigma=args.noise)
    (out / "seqs").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(seqs):
        rel = f"seqs/{s.subject_id}_{s.view:03d}_{i:05d}.csv"
        write_csv_sequence(s, out / rel)
        entries.append(IndexEntry(s.subject_id, s.view, s.condition, rel))
    n_train = int(round(args.train_fraction * args.seqs_per_class))
    train = [e for i, e in enumerate(entries) if i % args.seqs_per_class < n_train]
    test = [e for i, e in enumerate(entries) if i % args.seqs_per_class >= n_train]
    seen, gallery, probe = set(), [], []
    for e in test:
        key = (e.subject_id, e.view)
        (probe if key in seen else gallery).append(e)
        seen.add(key)
    for name, part in (("index", entries), ("train", train), ("test", test), ("gallery", gallery), ("probe", probe)):
        write_index(part, out / f"{name}.json")
    (out / "classes.json").write_text(json.dumps({k: v.to_dict() for k, v in classes.items()}, indent=1),
                                      encoding="utf-8")
    print(f"wrote {len(entries)} sequences ({len(train)} train, {len(gallery)} gallery, "
          f"{len(probe)} probe) to {out}")
    return EXIT_OK


def cmd_extract_features(args) -> int:
    resolved = _resolved(args, train={"t_fixed": args.t_fixed},
                         data={"index": args.index, "skeleton": args.skeleton, "streams": args.streams})
    data = resolved["data"]
    seqs = load_dataset(_require(data["index"], "--index"), get_skeleton(data["skeleton"]))
    t_fixed = resolved["train"].t_fixed
    tensor = assemble_single([pad_or_crop(s, t_fixed) for s in seqs], _layout(resolved))
    write_feature_dump(tensor, args.out)
    print(f"wrote features {tensor.data.shape} to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    model = {"temporal_kernel": args.kernel, "dropout": args.dropout}
    if args.blocks:
        model["blocks"] = BLOCK_PRESETS[args.blocks]
    resolved = _resolved(
        args, train={"epochs": args.epochs, "batch_size": args.batch_size, "max_lr": args.lr,
                     "temperature": args.temperature, "checkpoint_every": args.checkpoint_every},
        model=model, data={"index": args.index, "skeleton": args.skeleton},
        evaluation={"train_order": args.train_order})
    data, cfg = resolved["data"], resolved["train"]
    skeleton = get_skeleton(data["skeleton"])
    seqs = load_dataset(_require(data["index"], "--index"), skeleton)
    order = resolved["eval"]["train_order"]
    seqs, _ = temporal_control(seqs, [], order, "sort", cfg.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "config.json").write_text(json.dumps(config_to_json(resolved), indent=1), encoding="utf-8")
    result = fit(seqs, cfg, resolved["model"], skeleton, out_dir=args.out_dir, resume=args.resume,
                 layout=_layout(resolved))
    losses = result.epoch_losses()
    print(f"trained {len(losses)} epochs, final loss {losses[-1]:.6f}; checkpoint {result.checkpoint}")
    return EXIT_OK


def _load_checkpoint(path: Path, resolved):
    model, header, _ = load_model(path)
    if resolved["train"].float64 and model.dtype != np.float64:
        model.astype(np.float64)
    return model


def cmd_embed(args) -> int:
    resolved = _resolved(args, train={"t_fixed": args.t_fixed})
    model = _load_checkpoint(args.checkpoint, resolved)
    seqs = load_dataset(args.index, model.skeleton)
    embs = embed_sequences(seqs, model, resolved["train"].t_fixed, _layout(resolved))
    doc = [{"subject_id": e.label, "view": e.view, "vector": [float(v) for v in e.vector]} for e in embs]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(doc), encoding="utf-8")
    print(f"wrote {len(doc)} embeddings to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    resolved = _resolved(args, train={"t_fixed": args.t_fixed},
                         evaluation={"gallery": args.gallery, "probe": args.probe,
                                     "test_order": args.test_order, "out_dir": args.out_dir})
    ev = resolved["eval"]
    model = _load_checkpoint(args.checkpoint, resolved)
    gallery = load_dataset(_require(ev["gallery"], "--gallery"), model.skeleton)
    probe = load_dataset(_require(ev["probe"], "--probe"), model.skeleton)
    # gallery and probe are reordered together as the test phase of the temporal control
    _, both = temporal_control([], gallery + probe, "sort", ev["test_order"], resolved["train"].seed)
    gallery, probe = both[:len(gallery)], both[len(gallery):]
    report = cross_view_eval(gallery, probe, model, resolved["train"].t_fixed, _layout(resolved))
    print(report.to_text())
    if ev["out_dir"] is not None:
        report.save(ev["out_dir"], args.stem)
        log.info("report written to %s", ev["out_dir"])
    return EXIT_OK


def cmd_grad_check(args) -> int:
    resolved = _resolved(args)
    if args.bits == 32:
        raise UsageError("grad-check runs in 64-bit only")
    results = run_grad_checks(seed=resolved["train"].seed, h=args.step, composite=not args.no_composite)
    failed = False
    for name, err in results.items():
        ok = math.isfinite(err) and err <= GRAD_TOLERANCE
        failed |= not ok
        print(f"{name:<20s} max rel err {err:.3e}  {'ok' if ok else 'FAIL'}")
    return EXIT_NUMERICAL if failed else EXIT_OK


def _read_report(path: Path) -> EvalReport:
    try:
        return EvalReport.from_json(json.loads(path.read_text(encoding="utf-8")))
    except OSError as exc:
        raise PoseDataError(f"{path}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise PoseDataError(f"{path}: malformed report ({exc})") from exc


def _plot_history(history, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot([r.step for r in history], [r.loss for r in history], lw=1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def cmd_report(args) -> int:
    _resolved(args)
    if not args.reports and args.history is None:
        raise UsageError("report needs at least one report JSON or --history")
    if len(args.reports) > 2:
        raise UsageError("report takes at most two reports")
    reports = [_read_report(p) for p in args.reports]
    for path, rep in zip(args.reports, reports):
        print(f"== {path}")
        print(rep.to_text())
    if len(reports) == 2:
        a, b = reports
        if a.views != b.views:
            raise PoseDataError("the two reports cover different views")
        print("== delta (first minus second), probe-view means")
        for v, x, y in zip(a.views, a.probe_view_means(), b.probe_view_means()):
            print(f"{v:>13d} {100 * x:7.2f} {100 * y:7.2f} {100 * (x - y):+7.2f}")
        print(f"overall: {100 * a.overall_mean:.2f} vs {100 * b.overall_mean:.2f} "
              f"delta {100 * (a.overall_mean - b.overall_mean):+.2f}")
    if args.history is not None:
        try:
            history = read_history_csv(args.history)
        except OSError as exc:
            raise PoseDataError(f"{args.history}: {exc}") from exc
        except ValueError as exc:
            raise PoseDataError(str(exc)) from exc
        if history:
            print(f"history: {len(history)} steps, first loss {history[0].loss:.6f}, "
                  f"last loss {history[-1].loss:.6f}")
        if args.plot is not None and history:
            _plot_history(history, args.plot)
            print(f"wrote {args.plot}")
    return EXIT_OK


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "extract-features": cmd_extract_features,
    "train": cmd_train,
    "embed": cmd_embed,
    "eval": cmd_eval,
    "grad-check": cmd_grad_check,
    "report": cmd_report,
}

DATA_ERRORS = (PoseDataError, ConfigFileError, CheckpointError, ShapeError, SkeletonError, FileNotFoundError,
               csv.Error)


def run(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (TrainConfigError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
