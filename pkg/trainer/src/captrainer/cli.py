"""Command-line entry points: train, serve, export."""

import argparse
import logging
import sys

from .export import export_predictions
from .schema import TrainerError
from .serve import serve_http, serve_stdio
from .train import TrainConfig, train

logger = logging.getLogger("captrainer")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="captrainer")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("train", help="fine-tune one model per seed")
    p.add_argument("--train-speeches", required=True)
    p.add_argument("--train-annotations", required=True)
    p.add_argument("--dev-speeches", required=True)
    p.add_argument("--dev-annotations", required=True)
    p.add_argument("--out", required=True, help="artifact directory")
    p.add_argument("--base-model", default=TrainConfig.base_model_id)
    p.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--seeds", default="1,2,3", help="comma-separated, e.g. 1,2,3")
    p.add_argument("--max-seq-len", type=int, default=TrainConfig.max_sequence_length)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)

    p = sub.add_parser("serve", help="answer requests over the wire contract")
    p.add_argument("--artifact", required=True, help="one seed_<n> directory")
    p.add_argument("--transport", choices=("stdio", "http"), default="stdio")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8400)

    p = sub.add_parser("export", help="bulk-classify a speeches file to TSV")
    p.add_argument("--artifact", required=True)
    p.add_argument("--speeches", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=64)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level.upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "train":
            cfg = TrainConfig(
                base_model_id=args.base_model,
                learning_rate=args.learning_rate,
                epochs=args.epochs,
                seeds=tuple(int(s) for s in args.seeds.split(",") if s.strip()),
                max_sequence_length=args.max_seq_len,
                batch_size=args.batch_size,
            )
            result = train(
                args.train_speeches,
                args.train_annotations,
                args.dev_speeches,
                args.dev_annotations,
                cfg,
                args.out,
            )
            print(f"dev macro-F1 {result.aggregate} over {len(cfg.seeds)} seeds")
        elif args.command == "serve":
            if args.transport == "stdio":
                serve_stdio(args.artifact)
            else:
                serve_http(args.artifact, args.host, args.port)
        else:
            count = export_predictions(
                args.artifact, args.speeches, args.out, args.batch_size
            )
            print(f"wrote {count} predictions to {args.out}")
    except (TrainerError, ValueError) as exc:
        logger.error("%s", exc)
        return 1
    except KeyboardInterrupt:
        raise
    except Exception:
        logger.error("unexpected failure", exc_info=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
