"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from .align import wer_between
from .config import ConfigError, RunConfig, load_config
from .core import DataError, NumericalError, validate_posterior_seq
from .ctc_ops import greedy_decode
from .evaluation import (compare_report, controllability_eval, write_control_csv,
                         write_fidelity_csv, write_fidelity_table, write_jsonl, write_summary_json)
from .simulator.checkpoint import load_checkpoint, save_checkpoint
from .simulator.model import simulate
from .simulator.training import new_state, train

log = logging.getLogger("ctcsim")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _config(args) -> RunConfig:
    overrides = list(args.set or [])
    if getattr(args, "workers", None) is not None:
        overrides.append(f"run.workers={args.workers}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"run.seed={args.seed}")
    return load_config(args.config, overrides)


def _split(tuples, rc: RunConfig):
    return ds.split_by_utterance(tuples, rc["eval"]["held_out_frac"])


def _load_params(path, rc: RunConfig):
    state, arch, _ = load_checkpoint(path)
    if arch.V != rc["corpus"]["vocab_size"]:
        raise DataError(f"checkpoint vocabulary {arch.V} != configured {rc['corpus']['vocab_size']}")
    return state.params, arch


# ---------------------------------------------------------------- subcommands

def cmd_gen_corpus(args) -> int:
    rc = _config(args)
    c = rc["corpus"]
    corpus = ds.generate_corpus(c["size"], c["vocab_size"], (c["min_len"], c["max_len"]), rc.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.write_transcripts(out, corpus)
    rc.snapshot(out.parent)
    print(f"wrote {len(corpus)} transcripts to {out}")
    return 0


def cmd_build_data(args) -> int:
    rc = _config(args)
    corpus = ds.read_transcripts(args.corpus)
    out_dir = None if args.dry_run else Path(args.out)
    result = ds.build_dataset(corpus, rc.teacher(), rc.scheme(), rc.arch().max_T, rc.seed,
                              out_dir=out_dir, workers=rc.workers)
    summary = result.summary()
    if out_dir is not None:
        rc.snapshot(out_dir)
        (out_dir / "build_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    label = "planned" if args.dry_run else "built"
    print(f"{label}: {summary['accepted']} tuples from {summary['items']} variants "
          f"(rejected {summary['rejected']}, truncated {summary['truncated']})")
    for k, n in summary["bin_counts"].items():
        print(f"  bin {k}: {n}")
    return 0


def cmd_train(args) -> int:
    rc = _config(args)
    arch, cfg = rc.arch(), rc.train()
    tuples = list(ds.load_dataset(args.data))
    train_set, _ = _split(tuples, rc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rc.snapshot(out)
    if args.resume:
        state, ck_arch, _ = load_checkpoint(args.resume)
        if ck_arch != arch:
            raise DataError(f"checkpoint architecture {ck_arch} does not match configured {arch}")
        opt = state.optimizer
        opt.betas, opt.eps, opt.weight_decay = cfg.betas, cfg.eps, cfg.weight_decay
    else:
        state = new_state(arch, cfg)
    state = train(train_set, arch, cfg, state)
    ckpt = out / "checkpoint.bin"
    save_checkpoint(ckpt, state, arch, cfg)
    with open(out / "loss_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_loss"])
        for e, loss in enumerate(state.trace, start=1):
            w.writerow([e, repr(loss)])
    print(f"trained {state.epoch} epochs on {len(train_set)} tuples; "
          f"final loss {state.trace[-1]:.6f}; checkpoint {ckpt}")
    return 0


def cmd_simulate(args) -> int:
    rc = _config(args)
    params, arch = _load_params(args.checkpoint, rc)
    try:
        y = [int(t) for t in args.transcript.split()]
    except ValueError:
        raise UsageError("--transcript must be space-separated token ids") from None
    if not 1 <= args.code <= arch.K:
        raise UsageError(f"--code must lie in [1, {arch.K}]")
    P = simulate(np.array(y), args.code, params, arch, args.max_T)
    bad = validate_posterior_seq(P)
    if bad is not None:
        raise NumericalError(f"simulated posteriors invalid: {bad}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in P:
            w.writerow([repr(float(x)) for x in row])
    hyp = greedy_decode(P)
    print(f"frames: {len(P)}")
    print(f"hypothesis: {' '.join(map(str, hyp))}")
    print(f"wer: {wer_between(y, hyp):.4f}")
    return 0


def cmd_eval_fidelity(args) -> int:
    rc = _config(args)
    params, arch = _load_params(args.checkpoint, rc)
    _, held = _split(list(ds.load_dataset(args.data)), rc)
    if not held:
        raise DataError("held-out split is empty; raise eval.held_out_frac")
    reports, per_utt = compare_report(held, rc.cps(), params, arch, rc.seed, rc.workers,
                                      rc["eval"]["chunk_size"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rc.snapshot(out)
    write_fidelity_csv(out / "fidelity.csv", reports)
    write_fidelity_table(out / "fidelity_table.csv", reports)
    write_jsonl(out / "fidelity_per_utt.jsonl", per_utt)
    print(f"{'system':<10} {'CE':>8} {'KL':>8} {'Acc':>8} {'ProbDiff':>9} {'N':>7}")
    for system, r in reports.items():
        print(f"{system:<10} {r.ce:8.4f} {r.kl:8.4f} {r.acc:8.4f} {r.prob_diff:9.4f} {r.n:7d}")
    return 0


def cmd_eval_control(args) -> int:
    rc = _config(args)
    params, arch = _load_params(args.checkpoint, rc)
    _, held = _split(list(ds.load_dataset(args.data)), rc)
    seen, transcripts, ids = set(), [], []
    for t in held:
        if t.utt_index not in seen:
            seen.add(t.utt_index)
            transcripts.append(t.transcript)
            ids.append(t.utt_index)
    if not transcripts:
        raise DataError("held-out split is empty; raise eval.held_out_frac")
    result = controllability_eval(params, arch, transcripts, rc.scheme(),
                                  rc["eval"]["samples_per_bin"], rc.workers,
                                  rc["eval"]["chunk_size"], ids)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rc.snapshot(out)
    write_control_csv(out / "control_wer.csv", result)
    write_summary_json(out / "control_summary.json", result.summary)
    for k, s in result.summary.items():
        print(f"bin {k}: n={s['n']} median={s['median']:.2f} mean={s['mean']:.2f} "
              f"q1={s['q1']:.2f} q3={s['q3']:.2f}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctcsim", description="WER-controllable text-to-CTC posterior simulation")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, workers=False):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one configuration value (repeatable)")
        p.add_argument("--seed", type=int, help="global seed (overrides run.seed)")
        if workers:
            p.add_argument("--workers", type=int, help="worker processes (overrides run.workers)")

    p = sub.add_parser("gen-corpus", help="write a synthetic transcript corpus")
    common(p)
    p.add_argument("--size", type=int, help="number of transcripts (corpus.size)")
    p.add_argument("--vocab-size", type=int, help="vocabulary size incl. blank (corpus.vocab_size)")
    p.add_argument("--min-len", type=int, help="shortest transcript (corpus.min_len)")
    p.add_argument("--max-len", type=int, help="longest transcript (corpus.max_len)")
    p.add_argument("--out", required=True, help="output transcript file")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("build-data", help="build the WER-binned supervision corpus")
    common(p, workers=True)
    p.add_argument("--corpus", required=True, help="transcript file from gen-corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--dry-run", action="store_true", help="report planned counts without writing")
    p.set_defaults(func=cmd_build_data)

    p = sub.add_parser("train", help="train the conditional simulator")
    common(p)
    p.add_argument("--data", required=True, help="corpus directory from build-data")
    p.add_argument("--out", required=True, help="output directory for checkpoint and loss trace")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="generate posteriors for one transcript and bin code")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--transcript", required=True, help="space-separated token ids")
    p.add_argument("--code", type=int, required=True, help="WER bin code (1-based)")
    p.add_argument("--max-T", dest="max_T", type=int, help="frame cap (default: arch T_train)")
    p.add_argument("--out", required=True, help="output CSV of posterior frames")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval-fidelity", help="CPS vs simulator posterior similarity on held-out data")
    common(p, workers=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_fidelity)

    p = sub.add_parser("eval-control", help="realized WER per conditioning bin on held-out transcripts")
    common(p, workers=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_control)
    return parser


_FLAG_KEYS = {"size": "corpus.size", "vocab_size": "corpus.vocab_size",
              "min_len": "corpus.min_len", "max_len": "corpus.max_len"}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.set = list(args.set or []) + [f"{key}={getattr(args, flag)}"
                                           for flag, key in _FLAG_KEYS.items()
                                           if getattr(args, flag, None) is not None]
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
