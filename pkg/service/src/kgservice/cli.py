"""Command-line entry points: serve, train-critic, distill."""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

from kgservice.data import DataFileError
from kgservice.distill import StudentTrainConfig, train_student
from kgservice.train_critic import CriticTrainConfig, train_critic


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgservice",
        description="Train and serve the critic and language models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP scoring service")
    serve.add_argument("--critic-dir", help="critic model directory to load")
    serve.add_argument("--lm-dir", help="language model directory to load")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8100)
    serve.add_argument("--max-batch", type=int, default=256)

    train = sub.add_parser("train-critic", help="train the acceptability critic")
    train.add_argument("--train", required=True, help="labeled train split (JSONL)")
    train.add_argument("--dev", required=True, help="labeled dev split (JSONL)")
    train.add_argument("--out", required=True, help="output model directory")
    train.add_argument("--batch-size", type=int)
    train.add_argument("--learning-rate", type=float)
    train.add_argument("--max-epochs", type=int)
    train.add_argument("--patience", type=int)
    train.add_argument("--target-precision", type=float)
    train.add_argument("--seed", type=int)
    train.add_argument("--max-len", type=int)
    train.add_argument("--hidden-size", type=int)
    train.add_argument("--num-layers", type=int)
    train.add_argument("--head-hidden-size", type=int)
    train.add_argument(
        "--no-name-substitution",
        action="store_true",
        help="train on placeholder names instead of sampled real names",
    )

    distill = sub.add_parser("distill", help="distill a student LM from an export file")
    distill.add_argument("--export", required=True, help="export file of [GEN] lines")
    distill.add_argument("--out", required=True, help="output model directory")
    distill.add_argument("--epochs", type=int)
    distill.add_argument("--batch-size", type=int)
    distill.add_argument("--learning-rate", type=float)
    distill.add_argument("--seed", type=int)
    distill.add_argument("--max-len", type=int)

    return parser


def _config_from_args(config_cls, args: argparse.Namespace, overrides: dict | None = None):
    """Build a config dataclass from the subset of set CLI flags."""

    values = dict(overrides or {})
    names = {f.name for f in fields(config_cls)}
    for name in names:
        arg = getattr(args, name, None)
        if arg is not None:
            values[name] = arg
    return config_cls(**values)


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from kgservice.app import create_app

    app = create_app(args.critic_dir, args.lm_dir, max_batch=args.max_batch)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_train_critic(args: argparse.Namespace) -> int:
    overrides = {}
    if args.no_name_substitution:
        overrides["name_substitution"] = False
    config = _config_from_args(CriticTrainConfig, args, overrides)
    result = train_critic(args.train, args.dev, args.out, config)
    print(
        f"trained critic -> {result.out_dir} "
        f"(dev AP {result.dev_ap:.4f}, "
        f"recall@{config.target_precision:.0%} {result.dev_recall_at_precision:.4f}, "
        f"best epoch {result.best_epoch}/{result.epochs_trained})"
    )
    return 0


def _cmd_distill(args: argparse.Namespace) -> int:
    config = _config_from_args(StudentTrainConfig, args)
    result = train_student(args.export, args.out, config)
    first = result.step_losses[0]
    last = result.step_losses[-1]
    print(
        f"distilled student -> {result.out_dir} "
        f"({result.n_examples} examples, {result.epochs} epoch(s), "
        f"loss {first:.3f} -> {last:.3f})"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    handlers = {
        "serve": _cmd_serve,
        "train-critic": _cmd_train_critic,
        "distill": _cmd_distill,
    }
    try:
        return handlers[args.command](args)
    except DataFileError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except PermissionError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
