"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import corpus as corpora
from .bleu import CORPUS, corpus_bleu
from .config import ConfigError, RunConfig
from .errors import ContractViolation
from .experiment import (
    ABLATION_COLUMNS,
    DEFAULT_VARIANTS,
    ExperimentSpec,
    ablate,
    load_for_translation,
    run_seed,
    train_run,
)
from .inference import StoppingPolicy, format_line, translate

log = logging.getLogger("rewriter_evaluator")


class UsageError(Exception):
    pass


def _read_sentences(path) -> tuple[list[list[str]], list[list[str]] | None]:
    """Sources from a JSONL corpus (with its references) or a token-per-space text file."""
    path = Path(path)
    if path.suffix == ".jsonl":
        c = corpora.load(path)
        return c.sources, c.references
    return [line.split() for line in path.read_text().splitlines() if line.strip()], None


def _read_refs(path) -> list[list[str]]:
    path = Path(path)
    if path.suffix == ".jsonl":
        return corpora.load(path).references
    return [line.split() for line in path.read_text().splitlines()]


def _read_hyps(path) -> list[list[str]]:
    # translation output files carry the hypothesis in the first tab field
    return [line.split("\t", 1)[0].split() for line in Path(path).read_text().splitlines()]


def _pairs(path) -> list:
    if not path:
        return []
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"corpus not found: {p}")
    return corpora.load(p).pairs


def cmd_gen(args) -> int:
    try:
        spec = corpora.TaskSpec(args.task, args.vocab_size, args.min_len, args.max_len, args.noise, args.seed)
    except ContractViolation as e:
        raise UsageError(str(e)) from None
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    corpus = corpora.generate(spec, args.n)
    if args.split_dir:
        out = Path(args.split_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, part in corpora.split(corpus).items():
            corpora.save(part, out / f"{name}.jsonl")
        print(f"wrote {len(corpus)} pairs to {out}/{{train,dev,test}}.jsonl")
    else:
        corpora.save(corpus, args.out)
        print(f"wrote {len(corpus)} pairs to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    run = train_run(cfg, _pairs(cfg.train), _pairs(cfg.dev), Path(cfg.out_dir), resume=args.resume)
    print(f"trained {run.trainer.state.processed} samples in {run.trainer.state.epoch} epochs; model at {cfg.out_dir}/model.ckpt")
    return 0


def cmd_translate(args) -> int:
    try:
        policy = StoppingPolicy.parse(args.policy, args.delta, args.max_k)
    except ContractViolation as e:
        raise UsageError(str(e)) from None
    if policy.mode == "oracle" and not args.refs:
        raise UsageError("--policy oracle needs --refs")
    model = load_for_translation(args.checkpoint, args.vocab)
    xs, _ = _read_sentences(args.input)
    refs = _read_refs(args.refs) if args.refs else None
    if refs is not None and len(refs) != len(xs):
        raise UsageError(f"{len(refs)} references for {len(xs)} sources")
    traces = translate(model, xs, policy, refs, args.beam)
    lines = "".join(format_line(t) + "\n" for t in traces)
    if args.out:
        Path(args.out).write_text(lines)
    else:
        sys.stdout.write(lines)
    if refs is not None:
        score = corpus_bleu([(t.final, y) for t, y in zip(traces, refs)], CORPUS).value
        print(f"BLEU {100 * score:.2f}", file=sys.stderr)
    return 0


def cmd_bleu(args) -> int:
    hyps, refs = _read_hyps(args.hyp), _read_refs(args.ref)
    if len(hyps) != len(refs):
        raise UsageError(f"{len(hyps)} hypotheses for {len(refs)} references")
    score = corpus_bleu(zip(hyps, refs), CORPUS)
    print(f"BLEU {100 * score.value:.2f} BP {score.brevity_penalty:.4f} " + " ".join(f"p{n + 1} {p:.4f}" for n, p in enumerate(score.precisions)))
    return 0


def cmd_ablate(args) -> int:
    cfg = RunConfig.load(args.config)
    if not cfg.test:
        raise UsageError("ablation needs a test corpus in the config")
    variants = args.variants if args.variants is not None else list(DEFAULT_VARIANTS)
    rows = ablate(cfg, _pairs(cfg.train), _pairs(cfg.dev), _pairs(cfg.test), variants)
    out = Path(args.out) if args.out else Path(cfg.out_dir) / "ablation.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=ABLATION_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{r['variant']:<16} BLEU {100 * r['test_bleu']:.2f}  mean k {r['mean_chosen_k']:.2f}")
    return 0


def cmd_experiment(args) -> int:
    spec = ExperimentSpec(budget=args.budget, seeds=tuple(args.seeds), beam_size=args.beam)
    results = []
    for seed in spec.seeds:
        r = run_seed(spec, seed, with_copy_off=not args.skip_copy_off)
        results.append(r.summary())
        print(json.dumps(r.summary(), sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rewriter-evaluator", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic parallel corpus")
    g.add_argument("--task", choices=corpora.TASKS, default="noisy-reversal")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--vocab-size", type=int, default=64)
    g.add_argument("--min-len", type=int, default=3)
    g.add_argument("--max-len", type=int, default=10)
    g.add_argument("--noise", type=float, default=0.1)
    dest = g.add_mutually_exclusive_group()
    dest.add_argument("--out", default="corpus.jsonl")
    dest.add_argument("--split-dir", help="write train/dev/test.jsonl into this directory")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train from a key=value config file")
    t.add_argument("config")
    t.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    t.set_defaults(func=cmd_train)

    tr = sub.add_parser("translate", help="multi-pass translation with a trained checkpoint")
    tr.add_argument("checkpoint")
    tr.add_argument("input", help="JSONL corpus or one space-tokenized sentence per line")
    tr.add_argument("--policy", default="threshold", help="threshold, argmax, oracle or fixed:K")
    tr.add_argument("--delta", type=float, default=0.01)
    tr.add_argument("--max-k", type=int, default=4)
    tr.add_argument("--beam", type=int, default=4)
    tr.add_argument("--refs", help="references (JSONL or one per line)")
    tr.add_argument("--vocab", help="vocabulary file that must match the checkpoint")
    tr.add_argument("--out")
    tr.set_defaults(func=cmd_translate)

    for name in ("bleu", "score"):
        b = sub.add_parser(name, help="corpus BLEU of hypotheses against references")
        b.add_argument("hyp")
        b.add_argument("ref")
        b.set_defaults(func=cmd_bleu)

    a = sub.add_parser("ablate", help="train and evaluate ablation variants of a config")
    a.add_argument("config")
    a.add_argument("--variants", nargs="*", help="overrides such as copy=false or max_k=2")
    a.add_argument("--out")
    a.set_defaults(func=cmd_ablate)

    e = sub.add_parser("experiment", help="multi-pass vs single-pass comparison on noisy reversal")
    e.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    e.add_argument("--budget", type=int, default=ExperimentSpec.budget)
    e.add_argument("--beam", type=int, default=ExperimentSpec.beam_size)
    e.add_argument("--skip-copy-off", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        parser.error(str(e))
    except (ContractViolation, ValueError, FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
