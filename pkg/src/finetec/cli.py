"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .complete import SkeletonBank, complete_all, pretrain_completion
from .config import RunConfig
from .core import SequenceError, read_sequences, write_sequences
from .corrupt import CORRUPTION_MODES, SEVERITY_RATES, CorruptionSpec, corrupt_all
from .metrics import restoration_report
from .modelio import load_completion, save_completion
from .nn import NumericError
from .pipeline import StageError, build_models, load_run, run_all, save_run, train_corruption, write_json
from .plotting import plot_export
from .recognize import decompose_all, evaluate, train
from .synth import SynthSpec, gen_synth

log = logging.getLogger("finetec")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class UsageError(ValueError):
    pass


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    return cfg


def pick(value, default):
    return default if value is None else value


def need_out(args, flag: str = "--out") -> str:
    if not args.out:
        raise UsageError(f"{flag} is required")
    return args.out


def emit_report(report: dict, path) -> None:
    if path:
        write_json(report, path)
    else:
        print(json.dumps(report, indent=2, sort_keys=True))


# ---------------------------------------------------------------- commands

def cmd_gen_synth(args, cfg):
    s = cfg.synth
    spec = SynthSpec(pick(args.classes, s.num_classes), pick(args.per_class, s.per_class),
                     pick(args.frames, s.T), pick(args.seed, s.seed), pick(args.noise, s.noise))
    out = Path(need_out(args))
    out.mkdir(parents=True, exist_ok=True)
    tr, va = gen_synth(spec)
    write_sequences(tr, out / "train.jsonl")
    write_sequences(va, out / "val.jsonl")
    log.info("wrote %d train and %d val sequences to %s", len(tr), len(va), out)


def cmd_corrupt(args, cfg):
    c = cfg.corruption
    rate = SEVERITY_RATES[args.severity] if args.severity else pick(args.rate, c.rate)
    spec = CorruptionSpec(rate, pick(args.mode, c.mode), pick(args.seed, c.seed))
    write_sequences(corrupt_all(read_sequences(args.inp), spec), need_out(args))


def cmd_pretrain(args, cfg):
    from dataclasses import replace

    ccfg = replace(cfg.completion, steps=pick(args.steps, cfg.completion.steps),
                   seed=pick(args.seed, cfg.completion.seed))
    bank = SkeletonBank.from_sequences(read_sequences(args.bank))
    out = need_out(args)
    res = pretrain_completion(bank, ccfg)
    save_completion(res.model, out)
    log.info("completion loss %.6g -> %.6g", res.history[0], res.history[-1])


def cmd_complete(args, cfg):
    model = load_completion(args.model)
    bank = SkeletonBank.from_sequences(read_sequences(args.bank), model.T)
    seqs = read_sequences(args.inp)
    write_sequences(complete_all(model, seqs, bank, seed=pick(args.seed, cfg.completion.seed)), need_out(args))


def cmd_decompose(args, cfg):
    prefix = args.out_prefix or args.out
    if not prefix:
        raise UsageError("--out-prefix is required")
    seqs = read_sequences(args.inp)
    seed = pick(args.seed, cfg.decomposition.seed)
    strong, weak = cfg.decomposition.specs()
    prepared = decompose_all(seqs, seed, strong, weak)
    from .pipeline import write_prepared

    write_prepared(prepared, [s.id for s in seqs], prefix)


def cmd_train(args, cfg):
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    data = Path(args.data)
    tr = read_sequences(data / "train.jsonl")
    va_path = data / "val.jsonl"
    va = read_sequences(va_path) if va_path.is_file() else []
    if any(s.label is None for s in tr):
        raise SequenceError("every training sequence needs a label")
    completion_path = Path(args.completion) if args.completion else data / "completion.bin"
    if completion_path.is_file():
        completion = load_completion(completion_path)
    else:
        log.info("no completion model at %s; pretraining one on the training split", completion_path)
        completion = pretrain_completion(SkeletonBank.from_sequences(tr), cfg.completion).model
    bank = SkeletonBank.from_sequences(tr, completion.T)
    num_classes = max(s.label for s in tr) + 1
    models = build_models(cfg, completion, bank, num_classes)
    strong, weak = cfg.decomposition.specs()
    history = train(models, tr, va, cfg.training, train_corruption(cfg), strong, weak)
    save_run(models, cfg, history.to_dict(), need_out(args))


def cmd_eval(args, cfg):
    models, run_cfg = load_run(args.models)
    data = read_sequences(args.data)
    if args.severity or args.rate is not None:
        rate = SEVERITY_RATES[args.severity] if args.severity else args.rate
        spec = CorruptionSpec(rate, pick(args.mode, run_cfg.corruption.mode),
                              pick(args.seed, run_cfg.corruption.seed))
    elif all(s.fully_valid for s in data):
        spec = train_corruption(run_cfg)
    else:
        spec = None  # already corrupted
    strong, weak = run_cfg.decomposition.specs()
    report = evaluate(models, data, spec, run_cfg.decomposition.seed, strong, weak)
    emit_report(report, args.report or args.out)


def cmd_restore_metrics(args, cfg):
    preds = read_sequences(args.pred)
    gts = {s.id: s for s in read_sequences(args.gt)}
    missing = [p.id for p in preds if p.id not in gts]
    if missing:
        raise SequenceError(f"no ground truth for ids {missing[:5]}")
    masks = None
    if args.mask:
        damaged = {s.id: s for s in read_sequences(args.mask)}
        masks = [~damaged[p.id].valid for p in preds]
    report = restoration_report([p.frames for p in preds], [gts[p.id].frames for p in preds], masks)
    emit_report(report.to_dict(), args.report or args.out)


def cmd_plot_export(args, cfg):
    if not args.report:
        raise UsageError("plot-export needs at least one --report")
    reports = []
    for item in args.report:
        setting, sep, paths = item.partition("=")
        if not sep or not paths:
            raise UsageError(f"--report expects SETTING=PATH[,PATH...], got {item!r}")
        merged = {}
        for path in paths.split(","):
            with open(path, encoding="utf-8") as fh:
                merged.update(json.load(fh))
        reports.append((setting, merged))
    csv_path, svg_path = plot_export(reports, need_out(args))
    log.info("wrote %s and %s", csv_path, svg_path)


def cmd_run_all(args, cfg):
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    manifest = run_all(cfg, need_out(args), resume=not args.no_resume)
    log.info("run complete, config hash %s", manifest["config_hash"])


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--seed", type=int, help="override the command's seed")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="finetec", description="Skeleton-sequence restoration and recognition.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    p = add("gen-synth", cmd_gen_synth, "write synthetic train.jsonl and val.jsonl")
    p.add_argument("--classes", type=int)
    p.add_argument("--per-class", type=int)
    p.add_argument("--frames", type=int, help="sequence length T")
    p.add_argument("--noise", type=float)

    p = add("corrupt", cmd_corrupt, "drop frames from sequences")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--rate", type=float)
    p.add_argument("--severity", choices=sorted(SEVERITY_RATES))
    p.add_argument("--mode", choices=CORRUPTION_MODES)

    p = add("pretrain-completion", cmd_pretrain, "train the completion model on a clean bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--steps", type=int)

    p = add("complete", cmd_complete, "restore dropped frames")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--bank", required=True)

    p = add("decompose", cmd_decompose, "write base/dyna/stat/pred variants")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out-prefix")

    p = add("train", cmd_train, "train dynamics, fusion and classifier")
    p.add_argument("--data", required=True, help="directory holding train.jsonl and val.jsonl")
    p.add_argument("--completion", help="completion model (default DATA/completion.bin, else pretrain)")

    p = add("eval", cmd_eval, "accuracy report for a trained run")
    p.add_argument("--models", required=True, help="run directory written by train")
    p.add_argument("--data", required=True)
    p.add_argument("--report")
    p.add_argument("--rate", type=float)
    p.add_argument("--severity", choices=sorted(SEVERITY_RATES))
    p.add_argument("--mode", choices=CORRUPTION_MODES)

    p = add("restore-metrics", cmd_restore_metrics, "MPJPE, N-MPJPE and MPJVE of restored sequences")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", help="corrupted file; restricts metrics to its dropped frames")
    p.add_argument("--report")

    p = add("plot-export", cmd_plot_export, "CSV table and SVG chart from report files")
    p.add_argument("--report", action="append", metavar="SETTING=PATH[,PATH...]")

    p = add("run-all", cmd_run_all, "run the whole pipeline into a run directory")
    p.add_argument("--no-resume", action="store_true", help="rerun every stage")
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return EXIT_INPUT
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args, load_config(args))
    except Exception as exc:  # mapped to exit codes below
        code = exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
