#!/usr/bin/env python3
"""
Lab client - command-line interface to the training lab
"""
import argparse
import json
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

try:
    from .config import build_config
    from .errors import LabError
    from .gradcheck import TOLERANCE, model_gradcheck, worst
    from .learner import PRESET_NAMES
    from .run_store import RunStore, run_to_dict
    from .schedule import parse_schedule, schedule_curve
    from .synth import TASKS, synth_corpus
    from .trainer import Trainer, parse_grid
except ImportError:
    # When running as a script
    sys.path.append(str(Path(__file__).parent))
    from config import build_config
    from errors import LabError
    from gradcheck import TOLERANCE, model_gradcheck, worst
    from learner import PRESET_NAMES
    from run_store import RunStore, run_to_dict
    from schedule import parse_schedule, schedule_curve
    from synth import TASKS, synth_corpus
    from trainer import Trainer, parse_grid

# CLI flag -> TrainConfig field
COMMON_FLAGS = {
    "seed": ("seed", int),
    "run_dir": ("run_dir", str),
    "train": ("train_path", str),
    "val": ("val_path", str),
    "test": ("test_path", str),
    "data": ("data_path", str),
    "hidden_dim": ("hidden_dim", int),
    "emb_dim": ("emb_dim", int),
    "max_iterations": ("max_iterations", int),
    "eval_every": ("eval_every", int),
    "workers": ("workers", int),
    "checkpoint": ("checkpoint", str),
    "db": ("run_db", str),
    "log": ("log_path", str),
}


def add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key=value config file")
    for flag, (_, kind) in COMMON_FLAGS.items():
        parser.add_argument("--" + flag.replace("_", "-"), dest=flag, type=kind)


def overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values = {field: getattr(args, flag, None) for flag, (field, _) in COMMON_FLAGS.items()}
    for name in ("preset", "alpha", "beta", "dataset_profile", "pretrain_checkpoint"):
        values[name] = getattr(args, name, None)
    return values


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Sequence-to-sequence training lab")
    subparsers = parser.add_subparsers(dest="command", help="Commands")

    add_common(subparsers.add_parser("pretrain", help="MLE pre-training"))

    finetune = subparsers.add_parser("finetune", help="Fine-tune a pre-trained checkpoint with a preset")
    add_common(finetune)
    finetune.add_argument("--preset", required=True, choices=PRESET_NAMES)
    finetune.add_argument("--alpha", help="alpha schedule, e.g. exp:0.9999")
    finetune.add_argument("--beta", help="beta schedule, e.g. sig:3000")
    finetune.add_argument("--dataset-profile", dest="dataset_profile", choices=["quora", "twitter"])
    finetune.add_argument("--pretrain-checkpoint", dest="pretrain_checkpoint")

    evaluate = subparsers.add_parser("evaluate", help="Beam-decode the test split and report metrics")
    add_common(evaluate)
    evaluate.add_argument("--beam", type=int, default=None)

    generate = subparsers.add_parser("generate", help="Paraphrase each line of a file")
    add_common(generate)
    generate.add_argument("--input", required=True)
    generate.add_argument("--output", default="-")
    generate.add_argument("--beam", type=int, default=None)

    synth = subparsers.add_parser("synth", help="Write a synthetic pair file")
    synth.add_argument("--task", required=True, choices=TASKS)
    synth.add_argument("--size", type=int, required=True)
    synth.add_argument("--seed", type=int, default=7)
    synth.add_argument("--vocab", type=int, default=50)
    synth.add_argument("--max-len", dest="max_len", type=int, default=10)
    synth.add_argument("--output", default="-")

    sweep = subparsers.add_parser("sweep", help="Fine-tune over a grid of schedules")
    add_common(sweep)
    sweep.add_argument("--preset", default="DAGGER", choices=PRESET_NAMES)
    sweep.add_argument("--grid", required=True, help="file of alpha=SPEC [beta=SPEC] lines")
    sweep.add_argument("--output", default=None)

    gradcheck = subparsers.add_parser("gradcheck", help="Finite-difference check of the model gradients")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--max-entries", dest="max_entries", type=int, default=None)

    curve = subparsers.add_parser("curve", help="Write iteration,rate CSV for a schedule")
    curve.add_argument("--schedule", required=True, help="const:K, exp:K[:FLOOR] or sig:K[:FLOOR]")
    curve.add_argument("--iterations", type=int, default=10000)
    curve.add_argument("--step", type=int, default=100)
    curve.add_argument("--output", default="-")

    runs = subparsers.add_parser("runs", help="List runs or show one run")
    runs.add_argument("run_id", nargs="?")
    runs.add_argument("--limit", type=int, default=20)
    runs.add_argument("--db")
    return parser


def write_output(target: str, lines: List[str]):
    text = "".join(line + "\n" for line in lines)
    if target == "-":
        sys.stdout.write(text)
    else:
        Path(target).write_text(text, encoding="utf-8")


def run_command(args: argparse.Namespace) -> int:
    if args.command == "synth":
        pairs = synth_corpus(args.task, args.vocab, args.size, args.max_len, args.seed)
        write_output(args.output, [f"{' '.join(p.source)}\t{' '.join(p.target)}" for p in pairs])
        return 0

    if args.command == "gradcheck":
        results = model_gradcheck(args.seed, max_entries=args.max_entries)
        label, error = worst(results)
        print(json.dumps(results, indent=2))
        print(f"worst: {label} {error:.3e} (tolerance {TOLERANCE:g})")
        return 0 if error <= TOLERANCE else 1

    if args.command == "curve":
        spec = parse_schedule(args.schedule)
        iterations = list(range(0, args.iterations + 1, max(args.step, 1)))
        rates = schedule_curve(spec, iterations)
        write_output(args.output, ["iteration,rate"] + [f"{i},{r:.6f}" for i, r in zip(iterations, rates)])
        return 0

    if args.command == "runs":
        store = RunStore(args.db)
        if args.run_id:
            run = store.get_run(args.run_id)
            if run is None:
                print(json.dumps({"error": "Run not found"}))
                return 1
            result = run_to_dict(run)
            result["records"] = [r.__dict__ for r in store.records(args.run_id)]
            print(json.dumps(result, indent=2, default=str))
            return 0
        for run in store.list_runs(args.limit):
            created = datetime.fromtimestamp(run.created_at).isoformat(timespec="seconds")
            best = "" if run.best_score is None else f" best={run.best_score:.4f}"
            print(f"{run.id} {run.phase:<8} {run.preset:<14} {run.status:<11} {created}{best}")
        return 0

    config = build_config(args.config, overrides(args))
    trainer = Trainer(config)

    if args.command == "pretrain":
        print(trainer.pretrain())
    elif args.command == "finetune":
        print(trainer.finetune(args.preset))
    elif args.command == "evaluate":
        checkpoint = config.checkpoint or str(trainer.run_dir / "pretrain.ckpt")
        report = trainer.evaluate(checkpoint, beam=args.beam)
        print(report.csv_header())
        print(report.csv_row())
    elif args.command == "generate":
        checkpoint = config.checkpoint or str(trainer.run_dir / "pretrain.ckpt")
        output = "/dev/stdout" if args.output == "-" else args.output
        trainer.generate(checkpoint, args.input, output, args.beam)
    elif args.command == "sweep":
        lines = trainer.sweep(args.preset, parse_grid(args.grid), args.output)
        if args.output is None:
            write_output("-", lines)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 1
    try:
        return run_command(args)
    except LabError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
