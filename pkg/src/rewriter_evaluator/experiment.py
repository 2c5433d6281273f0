"""Training runs, ablations and the desk-scale multi-pass experiment."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import corpus as corpora
from .base import RewriterEvaluator
from .config import RunConfig
from .corpus import TaskSpec
from .inference import PolicyReport, StoppingPolicy, evaluate_policies, translate
from .bleu import CORPUS, corpus_bleu
from .models import build_model, load_model, save_model
from .pgd import Trainer, seed_streams
from .vocab import Vocabulary

log = logging.getLogger(__name__)


def model_for(cfg: RunConfig, vocab: Vocabulary) -> RewriterEvaluator:
    return build_model(
        cfg.backbone,
        vocab,
        hidden=cfg.hidden,
        share_encoders=cfg.share,
        copy=cfg.copy,
        seed=seed_streams(cfg.seed)["init"],
    )


def vocab_for(pairs) -> Vocabulary:
    """Every token seen in the training pairs, plus the reserved symbols."""
    return corpora.build_vocab(pairs, max_size=10**9)


@dataclass
class TrainedRun:
    model: RewriterEvaluator
    trainer: Trainer
    seconds: float

    @property
    def ms_per_sample(self) -> float:
        """Training-step wall clock per processed sample, dev evaluation excluded."""
        return self.trainer.ms_per_sample


def train_run(
    cfg: RunConfig,
    train_pairs,
    dev_pairs=(),
    out_dir: Path | None = None,
    resume: bool = False,
    vocab: Vocabulary | None = None,
    stop_after: int | None = None,
) -> TrainedRun:
    """Train one configuration; with ``out_dir`` write vocab, metrics, checkpoints and the model."""
    vocab = vocab or vocab_for(train_pairs)
    model = model_for(cfg, vocab)
    metrics = ckpts = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        vocab.save(out_dir / "vocab.txt")
        metrics, ckpts = out_dir / "metrics.csv", out_dir / "checkpoints"
        manifest = {"config": asdict(cfg), "seeds": seed_streams(cfg.seed), "root_seed": cfg.seed}
        (out_dir / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    trainer = Trainer(model, cfg.trainer_config(), train_pairs, dev_pairs, metrics, ckpts)
    if resume:
        last = ckpts / "last.ckpt" if ckpts else None
        if last is None or not last.exists():
            raise FileNotFoundError(f"no checkpoint to resume from in {ckpts}")
        trainer.load_checkpoint(last)
    elif metrics is not None and metrics.exists():
        metrics.unlink()
    t0 = time.perf_counter()
    trainer.train(stop_after)
    seconds = time.perf_counter() - t0
    if out_dir is not None:
        save_model(model, out_dir / "model.ckpt", {"seeds": seed_streams(cfg.seed)})
    return TrainedRun(model, trainer, seconds)


def policy_bleu(model: RewriterEvaluator, pairs, policy: StoppingPolicy, beam_size: int) -> tuple[float, float]:
    """Corpus BLEU and mean chosen pass under ``policy``."""
    xs = [x for x, _ in pairs]
    refs = [y for _, y in pairs]
    traces = translate(model, xs, policy, refs, beam_size)
    score = corpus_bleu([(t.final, y) for t, y in zip(traces, refs)], CORPUS).value
    return score, float(np.mean([t.chosen for t in traces]))


# -- ablations ----------------------------------------------------------------

DEFAULT_VARIANTS = (
    "share=false",
    "copy=false",
    "rho=fixed:0",
    "rho=fixed:0.1",
    "rho=fixed:1.0",
    "rho=annealed",
    "delta=0",
    "delta=0.01",
    "delta=0.1",
    "max_k=2",
    "max_k=4",
    "max_k=6",
    "max_k=8",
)
INFERENCE_ONLY = {"delta", "beam_size"}
ABLATION_COLUMNS = (
    "variant",
    "backbone",
    "share",
    "copy",
    "rho",
    "delta",
    "max_k",
    "expected_iterations",
    "batch_size",
    "hidden",
    "seed",
    "test_bleu",
    "mean_chosen_k",
)


def parse_variant(text: str) -> dict:
    changes = {}
    for item in text.split(","):
        key, _, val = item.partition("=")
        if not _:
            raise ValueError(f"variant {text!r}: expected key=value")
        changes[key.strip()] = val.strip()
    return changes


def apply_variant(cfg: RunConfig, text: str) -> RunConfig:
    lines = cfg.to_text() + "".join(f"{k} = {v}\n" for k, v in parse_variant(text).items())
    return RunConfig.from_text(lines, f"variant {text!r}")


def _training_key(cfg: RunConfig) -> tuple:
    return tuple((k, v) for k, v in sorted(asdict(cfg).items()) if k not in INFERENCE_ONLY)


def ablate(
    base: RunConfig,
    train_pairs,
    dev_pairs,
    test_pairs,
    variants: Sequence[str] = DEFAULT_VARIANTS,
) -> list[dict]:
    """Train/evaluate the base config and each variant; variants that only
    change inference settings reuse the matching trained model."""
    vocab = vocab_for(train_pairs)
    trained: dict[tuple, RewriterEvaluator] = {}
    rows = []
    for name, cfg in [("base", base)] + [(v, apply_variant(base, v)) for v in variants]:
        key = _training_key(cfg)
        if key not in trained:
            log.info("training variant %s", name)
            trained[key] = train_run(cfg, train_pairs, dev_pairs, vocab=vocab).model
        policy = StoppingPolicy("threshold", cfg.delta, cfg.max_k)
        score, chosen = policy_bleu(trained[key], test_pairs, policy, cfg.beam_size)
        row = {k: getattr(cfg, k) for k in ABLATION_COLUMNS[1:-2]}
        row.update(variant=name, test_bleu=score, mean_chosen_k=chosen)
        rows.append(row)
    return rows


# -- desk-scale experiment ------------------------------------------------------


@dataclass
class ExperimentSpec:
    """Noisy-reversal comparison of prioritized multi-pass training against
    single-pass training under an equal budget of processed samples."""

    task: str = "noisy-reversal"
    vocab_size: int = 64
    min_len: int = 3
    max_len: int = 10
    noise_rate: float = 0.4
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    hidden: int = 32
    batch_size: int = 16
    expected_iterations: int = 3
    max_k: int = 4
    delta: float = 0.01
    budget: int = 60000
    lr: float = 3e-3
    beam_size: int = 1
    seeds: tuple[int, ...] = (0, 1, 2)

    def task_spec(self, seed: int) -> TaskSpec:
        return TaskSpec(self.task, self.vocab_size, self.min_len, self.max_len, self.noise_rate, seed)

    def run_config(self, seed: int, multi_pass: bool = True, **changes) -> RunConfig:
        cfg = RunConfig(
            hidden=self.hidden,
            batch_size=self.batch_size,
            expected_iterations=self.expected_iterations if multi_pass else 1,
            max_k=self.max_k if multi_pass else 1,
            delta=self.delta,
            lr=self.lr,
            seed=seed,
            max_samples=self.budget,
            max_epochs=10**6,
            patience=None,
            beam_size=self.beam_size,
        )
        return cfg.replace(**changes)


def experiment_data(spec: ExperimentSpec, seed: int):
    """Train/dev/test pairs drawn from one generated corpus, split by index hash."""
    take = {"train": spec.n_train, "dev": spec.n_dev, "test": spec.n_test}
    # dev and test each get about a tenth of the generated pairs
    n = int(max(1.6 * sum(take.values()), 13 * max(spec.n_dev, spec.n_test)))
    task = spec.task_spec(seed_streams(seed)["data"])
    while True:
        parts = corpora.split(corpora.generate(task, n))
        if all(len(parts[name]) >= k for name, k in take.items()):
            return {name: parts[name].pairs[:k] for name, k in take.items()}
        n = int(n * 1.5)


@dataclass
class SeedResult:
    seed: int
    multi_pass: dict
    single_pass: float
    copy_off: float | None
    ms_per_sample_pgd: float
    ms_per_sample_baseline: float
    cpu_seconds: float
    report: PolicyReport = field(repr=False, default=None)
    refs: list = field(repr=False, default_factory=list)
    test_sources: list = field(repr=False, default_factory=list)
    model: RewriterEvaluator | None = field(repr=False, default=None)

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "multi_pass": self.multi_pass,
            "single_pass": self.single_pass,
            "copy_off": self.copy_off,
            "ms_per_sample_pgd": self.ms_per_sample_pgd,
            "ms_per_sample_baseline": self.ms_per_sample_baseline,
            "cpu_seconds": self.cpu_seconds,
        }


def run_seed(spec: ExperimentSpec, seed: int, with_copy_off: bool = True) -> SeedResult:
    """PGD run, single-pass baseline and optionally a copy-off PGD run, all on one split."""
    t0 = time.process_time()
    data = experiment_data(spec, seed)
    vocab = vocab_for(data["train"])
    xs = [x for x, _ in data["test"]]
    refs = [y for _, y in data["test"]]
    pgd = train_run(spec.run_config(seed), data["train"], data["dev"], vocab=vocab)
    report = evaluate_policies(pgd.model, xs, refs, spec.max_k, spec.delta, spec.beam_size)
    base = train_run(spec.run_config(seed, multi_pass=False), data["train"], data["dev"], vocab=vocab)
    single = evaluate_policies(base.model, xs, refs, 1, spec.delta, spec.beam_size).bleu["fixed:1"]
    copy_off = None
    if with_copy_off:
        off = train_run(spec.run_config(seed, copy=False), data["train"], data["dev"], vocab=vocab)
        copy_off = evaluate_policies(off.model, xs, refs, spec.max_k, spec.delta, spec.beam_size).bleu["argmax"]
    return SeedResult(
        seed,
        report.bleu,
        single,
        copy_off,
        pgd.ms_per_sample,
        base.ms_per_sample,
        time.process_time() - t0,
        report,
        refs,
        xs,
        pgd.model,
    )


def load_for_translation(checkpoint, vocab_path=None) -> RewriterEvaluator:
    model, _ = load_model(checkpoint)
    if vocab_path is not None and Vocabulary.load(vocab_path) != model.vocab:
        raise ValueError(f"vocabulary {vocab_path} does not match checkpoint {checkpoint}")
    return model
