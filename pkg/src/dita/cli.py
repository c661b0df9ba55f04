"""Command-line entry point.

Subcommands: gen-rooms, train, eval, compare, dump-episode. Every run writes
the resolved configuration next to its outputs.

Exit status: 0 ok, 2 usage, 3 configuration, 4 file/checkpoint I/O, 5 runtime.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, parse_config, write_resolved
from .errors import CheckpointError, ConfigError, DitaError
from .evaluate import AGENTS, compare, comparison_table, dump_episode, evaluate
from .train import model_from_checkpoint, room_set, train

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_IO, EXIT_RUNTIME = 0, 2, 3, 4, 5

log = logging.getLogger("dita")


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = (s.strip() for s in text.split("=", 1))
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def load_config(args, seed_keys=("train.seed", "eval.seed")) -> RunConfig:
    cfg = parse_config(args.config)
    updates = {}
    for item in args.set or []:
        key, value = _parse_override(item)
        updates[key.replace(".", "__")] = value
    if args.seed is not None:
        for k in seed_keys:
            updates[k.replace(".", "__")] = args.seed
    return cfg.replace(**updates) if updates else cfg


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_rows(rows: list[dict], path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _eval_model(args, cfg: RunConfig):
    """Networks from the checkpoint; evaluation settings from the command-line config."""
    model, stored = model_from_checkpoint(args.checkpoint)
    if args.config is None and not args.set:
        cfg = stored.replace(eval__seed=cfg["eval.seed"])
    return model, cfg


def cmd_gen_rooms(args) -> int:
    cfg = load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world = cfg.world()
    doc = {
        "train": [r.to_dict() for r in room_set(world, cfg["env.train_presets"], cfg["env.train_rooms"])],
        "test": [r.to_dict() for r in room_set(world, cfg["env.test_presets"], cfg["env.test_rooms"],
                                               cfg["env.test_seed_offset"])],
    }
    _write_json(doc, out / "rooms.json")
    write_resolved(cfg, out)
    print(f"wrote {len(doc['train'])} train and {len(doc['test'])} test rooms to {out / 'rooms.json'}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args, seed_keys=("train.seed",))
    out = Path(args.out)
    result = train(cfg, out, progress_every=args.progress)
    n = len(result.log_rows)
    sr = sum(r["success"] for r in result.log_rows) / n if n else 0.0
    print(f"trained {n} episodes (train success {sr:.3f}, {len(result.judge_rows)} judge batches); "
          f"checkpoint at {out / 'checkpoint.json'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args, seed_keys=("eval.seed",))
    model, cfg = _eval_model(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = evaluate(model, cfg, args.episodes)
    _write_json({k: v.to_dict() for k, v in reports.items()}, out / "metrics.json")
    for k, v in reports.items():
        (out / f"metrics_{k}.csv").write_text(v.to_csv())
    write_resolved(cfg, out)
    for k, v in reports.items():
        print(f"{k}: n={v.n} sr={v.sr:.4f} spl={v.spl:.4f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args, seed_keys=("eval.seed",))
    model, cfg = _eval_model(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports, _ = compare(model, cfg, args.episodes)
    table = comparison_table(reports)
    _write_json({k: v.to_dict() for k, v in reports.items()}, out / "compare.json")
    _write_rows(table, out / "compare.csv")
    write_resolved(cfg, out)
    print(f"{'agent':<8} {'filter':<6} {'n':>5} {'sr':>7} {'spl':>7}")
    for r in table:
        print(f"{r['agent']:<8} {r['filter']:<6} {r['n']:>5} {r['sr']:>7.4f} {r['spl']:>7.4f}")
    return EXIT_OK


def cmd_dump_episode(args) -> int:
    cfg = load_config(args, seed_keys=("eval.seed",))
    model = None
    if args.agent != "random":
        if args.checkpoint is None:
            raise ConfigError("--checkpoint is required unless --agent random")
        model, cfg = _eval_model(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = dump_episode(model, cfg, args.index, args.agent)
    path = out / f"episode_{args.index}_{args.agent}.json"
    _write_json(doc, path)
    write_resolved(cfg, out)
    print(f"wrote {len(doc['steps'])} steps to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="configuration file (section.key = value lines)")
    common.add_argument("--seed", type=int, default=None, help="override the run seed")
    common.add_argument("--out", default="runs/out", help="output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")

    parser = argparse.ArgumentParser(prog="dita", description="Object navigation with a learned termination judge.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-rooms", parents=[common], help="generate and save the train/test rooms")
    p.set_defaults(func=cmd_gen_rooms)

    p = sub.add_parser("train", parents=[common], help="train policy and judge")
    p.add_argument("--progress", type=int, default=1000, help="log every N episodes (0 disables)")
    p.set_defaults(func=cmd_train)

    for name, func, text in (("eval", cmd_eval, "metrics with the judge gate off and on"),
                             ("compare", cmd_compare, "random vs judge-ablated vs gated agent")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--episodes", type=int, default=None, help="number of evaluation episodes")
        p.set_defaults(func=func)

    p = sub.add_parser("dump-episode", parents=[common], help="per-step trajectory of one evaluation episode")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--index", type=int, default=0, help="evaluation episode index")
    p.add_argument("--agent", choices=AGENTS, default="dita")
    p.set_defaults(func=cmd_dump_episode)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose or args.command == "train" else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DitaError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
