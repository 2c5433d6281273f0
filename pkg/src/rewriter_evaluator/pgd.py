"""Prioritized gradient descent: joint rewriter/evaluator training with a
capacity-bounded queue that keeps poorly translated samples for more passes.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .autodiff import backward
from .base import RewriterEvaluator
from .bleu import CORPUS, corpus_bleu, sentence_bleu
from .checkpoint import load_arrays, save_arrays
from .errors import ContractViolation
from .optim import RMSProp

log = logging.getLogger(__name__)

NEG_INF = float("-inf")
METRIC_COLUMNS = (
    "epoch",
    "step",
    "loss_rewriter",
    "loss_evaluator",
    "dev_bleu",
    "mean_r",
    "mean_passes",
    "evictions",
    "ms_per_sample",
)


@dataclass
class RewriteState:
    """One queue entry: a training pair, its current draft and quality score."""

    x: tuple[str, ...]
    y: tuple[str, ...]
    z: tuple[str, ...] = ()
    r: float = NEG_INF
    q: float | None = None
    passes_done: int = 0

    def __post_init__(self):
        self.x, self.y, self.z = tuple(self.x), tuple(self.y), tuple(self.z)
        if math.isnan(self.r):
            raise ContractViolation("quality score is NaN")
        if (self.r == NEG_INF) != (self.passes_done == 0):
            raise ContractViolation("r is -inf exactly for entries that have not been rewritten")

    @classmethod
    def fresh(cls, x, y) -> "RewriteState":
        return cls(tuple(x), tuple(y))


class PrioritySampleQueue:
    """Entries ordered by ascending r; overflow evicts the largest r.

    Among equal r the later-inserted entry is evicted first, so iteration
    order is (r, insertion order).
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ContractViolation("capacity must be >= 1")
        self.capacity = capacity
        self._heap: list[tuple[float, int, RewriteState]] = []  # max-heap via negated keys
        self._seq = itertools.count()

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, entry: RewriteState) -> None:
        heapq.heappush(self._heap, (-entry.r, -next(self._seq), entry))

    def evict_overflow(self) -> list[RewriteState]:
        """Remove and return the highest-r entries beyond capacity, highest first."""
        out = []
        while len(self._heap) > self.capacity:
            out.append(heapq.heappop(self._heap)[2])
        return out

    def entries(self) -> list[RewriteState]:
        """Entries in ascending (r, insertion) order."""
        return [e for _, _, e in sorted(self._heap, reverse=True)]

    def __iter__(self):
        return iter(self.entries())

    @property
    def scores(self) -> list[float]:
        return [e.r for e in self.entries()]


def push_with_eviction(queue: PrioritySampleQueue, entry: RewriteState) -> list[RewriteState]:
    queue.push(entry)
    return queue.evict_overflow()


def rho_schedule(epoch: int) -> float:
    """Annealed weight of the evaluator score in the quality score."""
    if epoch < 0:
        raise ContractViolation("epoch must be >= 0")
    return epoch / (epoch + 10.0)


def quality_score(z: Sequence[str], y: Sequence[str], q: float, rho: float) -> float:
    """Sentence BLEU of the draft plus rho times its evaluator score."""
    if not y:
        raise ContractViolation("reference must be non-empty")
    return sentence_bleu(z, y).value + rho * q


@dataclass
class TrainingSample:
    """A member of the per-step training list.

    ``z_prev`` is the rewriter input; ``z_new`` is the draft it produced,
    kept so the hinge loss can be differentiated through its score ``q``.
    """

    x: tuple[str, ...]
    y: tuple[str, ...]
    z_prev: tuple[str, ...]
    q: float
    z_new: tuple[str, ...]


class StepModels(Protocol):
    def rewrite(self, xs, drafts) -> list[list[str]]: ...

    def evaluate(self, xs, drafts) -> np.ndarray: ...

    def update(self, samples: list[TrainingSample]) -> tuple[float, float]: ...


@dataclass
class StepResult:
    queue: PrioritySampleQueue
    samples: list[TrainingSample]
    evicted: list[RewriteState]
    retired: list[RewriteState]
    loss_rewriter: float
    loss_evaluator: float


def pgd_epoch_step(
    queue: PrioritySampleQueue,
    batch: Sequence[tuple[Sequence[str], Sequence[str]]],
    models: StepModels,
    rho: float,
    max_passes: int | None = None,
) -> StepResult:
    """One iteration of the prioritized training loop.

    Pushes the batch as fresh entries, evicts overflow, rewrites and scores
    every remaining entry in ascending order, updates both models on the
    collected list and returns the refilled queue.  Entries that have used
    up ``max_passes`` rewrites are retired instead of requeued.
    """
    if not batch:
        raise ContractViolation("empty training batch")
    for x, y in batch:
        queue.push(RewriteState.fresh(x, y))
    evicted = queue.evict_overflow()
    entries = queue.entries()
    xs = [e.x for e in entries]
    new = [tuple(z) for z in models.rewrite(xs, [e.z for e in entries])]
    qs = np.asarray(models.evaluate(xs, new), dtype=np.float64)
    nxt = PrioritySampleQueue(queue.capacity)
    samples, retired = [], []
    for e, z, q in zip(entries, new, qs):
        samples.append(TrainingSample(e.x, e.y, e.z, float(q), z))
        state = RewriteState(e.x, e.y, z, quality_score(z, e.y, float(q), rho), float(q), e.passes_done + 1)
        if max_passes is not None and state.passes_done >= max_passes:
            retired.append(state)
        else:
            nxt.push(state)
    nxt._seq = queue._seq
    loss_r, loss_e = models.update(samples)
    return StepResult(nxt, samples, evicted, retired, loss_r, loss_e)


class Learner:
    """Adapts a RewriterEvaluator and its optimizer to the step protocol.

    The update averages teacher-forcing and hinge losses over the whole
    training list, accumulating gradients over chunks of ``chunk`` samples
    before a single optimizer step.
    """

    def __init__(self, model: RewriterEvaluator, optimizer: RMSProp, chunk: int):
        self.model = model
        self.optimizer = optimizer
        self.chunk = max(1, chunk)

    def rewrite(self, xs, drafts) -> list[list[str]]:
        return [h.tokens for h in self.model.greedy_decode(xs, drafts)]

    def evaluate(self, xs, drafts) -> np.ndarray:
        return self.model.evaluate(xs, drafts)

    def update(self, samples: list[TrainingSample]) -> tuple[float, float]:
        self.optimizer.zero_grad()
        n = len(samples)
        total_r = total_e = 0.0
        for i in range(0, n, self.chunk):
            part = samples[i : i + self.chunk]
            rw, hg = self.model.training_losses(
                [s.x for s in part], [s.z_prev for s in part], [s.y for s in part], [s.z_new for s in part]
            )
            total_r += float(rw.data.sum())
            total_e += float(hg.data.sum())
            backward((rw.sum() + hg.sum()) * (1.0 / n))
        self.optimizer.step()
        return total_r / n, total_e / n


@dataclass
class TrainerConfig:
    batch_size: int = 16
    expected_iterations: int = 3
    capacity: int | None = None
    max_passes: int = 4
    rho: str = "annealed"
    lr: float = 3e-3
    decay: float = 0.9
    clip_norm: float | None = 5.0
    max_epochs: int = 20
    max_samples: int | None = None
    patience: int | None = 3
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.expected_iterations, self.max_passes) < 1:
            raise ContractViolation("batch_size, expected_iterations and max_passes must be >= 1")
        if self.capacity is None:
            self.capacity = self.batch_size * self.expected_iterations
        if not 1 <= self.capacity <= self.batch_size * self.expected_iterations:
            raise ContractViolation("capacity must lie in [1, batch_size * expected_iterations]")
        if self.capacity < self.batch_size:
            raise ContractViolation("capacity must hold at least one batch")
        rho_fn(self.rho)

    @property
    def baseline(self) -> bool:
        return self.expected_iterations == 1 and self.max_passes == 1


def rho_fn(mode: str) -> Callable[[int], float]:
    """``annealed`` or ``fixed:<value>``."""
    if mode == "annealed":
        return rho_schedule
    if mode.startswith("fixed:"):
        try:
            value = float(mode.split(":", 1)[1])
        except ValueError:
            raise ContractViolation(f"bad rho mode {mode!r}") from None
        return lambda epoch: value
    raise ContractViolation(f"bad rho mode {mode!r}")


def seed_streams(seed: int) -> dict[str, int]:
    """Independent child seeds for data, initialization and shuffling."""
    children = np.random.SeedSequence(seed).spawn(3)
    return {name: int(c.generate_state(1)[0]) for name, c in zip(("data", "init", "shuffle"), children)}


def dev_bleu(model: RewriterEvaluator, pairs, batch_size: int = 64) -> float:
    """Single-pass greedy corpus BLEU on held-out pairs."""
    hyps, refs = [], []
    for i in range(0, len(pairs), batch_size):
        part = pairs[i : i + batch_size]
        xs = [x for x, _ in part]
        hyps += [h.tokens for h in model.greedy_decode(xs, [[] for _ in part])]
        refs += [y for _, y in part]
    return corpus_bleu(zip(hyps, refs), CORPUS).value


def _state_to_json(e: RewriteState) -> dict:
    d = asdict(e)
    d["r"] = None if e.r == NEG_INF else e.r
    return d


def _state_from_json(d: dict) -> RewriteState:
    d = dict(d)
    d["r"] = NEG_INF if d["r"] is None else d["r"]
    return RewriteState(**d)


@dataclass
class TrainerState:
    epoch: int = 0
    step: int = 0
    processed: int = 0
    best_dev: float = NEG_INF
    bad_epochs: int = 0
    queue: list[RewriteState] = field(default_factory=list)
    rng: dict | None = None
    done: bool = False


class Trainer:
    """Epoch loop around ``pgd_epoch_step`` with metrics and resumable checkpoints."""

    def __init__(
        self,
        model: RewriterEvaluator,
        config: TrainerConfig,
        train_pairs,
        dev_pairs=(),
        metrics_path=None,
        checkpoint_dir=None,
        save_model: Callable | None = None,
    ):
        if not train_pairs:
            raise ContractViolation("empty training set")
        if len(train_pairs) < config.batch_size:
            raise ContractViolation("training set smaller than one batch")
        self.model = model
        self.config = config
        self.train_pairs = [(tuple(x), tuple(y)) for x, y in train_pairs]
        self.dev_pairs = list(dev_pairs)
        self.metrics_path = Path(metrics_path) if metrics_path else None
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.save_model = save_model
        self.optimizer = RMSProp(model.named_parameters(), config.lr, config.decay, clip_norm=config.clip_norm)
        self.learner = Learner(model, self.optimizer, config.batch_size)
        self.rho = rho_fn(config.rho)
        self.state = TrainerState()
        self.rng = np.random.default_rng(seed_streams(config.seed)["shuffle"])
        self.history: list[dict] = []
        # wall clock spent inside training steps during this process
        self.step_seconds = 0.0
        self.step_samples = 0

    # -- persistence ------------------------------------------------------

    def checkpoint_path(self, epoch: int) -> Path:
        return self.checkpoint_dir / f"epoch{epoch:03d}.ckpt"

    def save_checkpoint(self, path) -> None:
        arrays = {"model." + n: p.data for n, p in self.model.named_parameters().items()}
        arrays.update({"opt." + n: v for n, v in self.optimizer.state.mean_sq.items()})
        s = self.state
        meta = {
            "model": self.model.config(),
            "vocab": self.model.vocab.itos,
            "trainer_config": asdict(self.config),
            "trainer": {
                "epoch": s.epoch,
                "step": s.step,
                "processed": s.processed,
                "best_dev": None if s.best_dev == NEG_INF else s.best_dev,
                "bad_epochs": s.bad_epochs,
                "queue": [_state_to_json(e) for e in s.queue],
                "rng": self.rng.bit_generator.state,
                "opt_steps": self.optimizer.state.steps,
                "done": s.done,
            },
        }
        save_arrays(path, arrays, meta)

    def load_checkpoint(self, path) -> None:
        arrays, meta = load_arrays(path)
        self.model.load_state_dict({n[6:]: v for n, v in arrays.items() if n.startswith("model.")})
        self.optimizer.state.mean_sq = {n[4:]: v for n, v in arrays.items() if n.startswith("opt.")}
        t = meta["trainer"]
        self.optimizer.state.steps = t["opt_steps"]
        self.rng.bit_generator.state = t["rng"]
        self.state = TrainerState(
            epoch=t["epoch"],
            step=t["step"],
            processed=t["processed"],
            best_dev=NEG_INF if t["best_dev"] is None else t["best_dev"],
            bad_epochs=t["bad_epochs"],
            queue=[_state_from_json(d) for d in t["queue"]],
            done=t["done"],
        )
        if self.metrics_path and self.metrics_path.exists():
            with self.metrics_path.open() as f:
                rows = list(csv.DictReader(f))
            self.history = [r for r in rows if int(r["epoch"]) < self.state.epoch]
            self._write_metrics()

    # -- metrics ----------------------------------------------------------

    def _write_metrics(self) -> None:
        if not self.metrics_path:
            return
        with self.metrics_path.open("w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=METRIC_COLUMNS)
            w.writeheader()
            w.writerows(self.history)

    def _append_metrics(self, row: dict) -> None:
        self.history.append(row)
        if not self.metrics_path:
            return
        new = not self.metrics_path.exists() or self.metrics_path.stat().st_size == 0
        with self.metrics_path.open("a", newline="") as f:
            w = csv.DictWriter(f, fieldnames=METRIC_COLUMNS)
            if new:
                w.writeheader()
            w.writerow(row)

    # -- loop -------------------------------------------------------------

    def _queue(self) -> PrioritySampleQueue:
        q = PrioritySampleQueue(self.config.capacity)
        for e in self.state.queue:
            q.push(e)
        return q

    def budget_left(self) -> bool:
        c = self.config
        return c.max_samples is None or self.state.processed < c.max_samples

    def run_epoch(self) -> dict:
        """One shuffled pass over the training pairs in batches of B."""
        c, s = self.config, self.state
        queue = self._queue()
        order = self.rng.permutation(len(self.train_pairs))
        B = c.batch_size
        rho = self.rho(s.epoch)
        losses_r, losses_e, rs, passes = [], [], [], []
        evictions = processed = 0
        elapsed = 0.0
        for i in range(0, len(order) - B + 1, B):
            if not self.budget_left():
                break
            batch = [self.train_pairs[j] for j in order[i : i + B]]
            t0 = time.perf_counter()
            res = pgd_epoch_step(queue, batch, self.learner, rho, c.max_passes)
            elapsed += time.perf_counter() - t0
            queue = res.queue
            s.step += 1
            n = len(res.samples)
            s.processed += n
            processed += n
            evictions += len(res.evicted)
            losses_r.append(res.loss_rewriter)
            losses_e.append(res.loss_evaluator)
            rs += [e.r for e in queue.entries()] + [e.r for e in res.retired]
            passes += [e.passes_done for e in queue.entries()] + [e.passes_done for e in res.retired]
        s.queue = queue.entries()
        self.step_seconds += elapsed
        self.step_samples += processed
        dev = dev_bleu(self.model, self.dev_pairs) if self.dev_pairs else float("nan")
        row = {
            "epoch": s.epoch,
            "step": s.step,
            "loss_rewriter": _fmt(np.mean(losses_r) if losses_r else float("nan")),
            "loss_evaluator": _fmt(np.mean(losses_e) if losses_e else float("nan")),
            "dev_bleu": _fmt(dev),
            "mean_r": _fmt(np.mean(rs) if rs else float("nan")),
            "mean_passes": _fmt(np.mean(passes) if passes else float("nan")),
            "evictions": evictions,
            "ms_per_sample": _fmt(1000.0 * elapsed / max(processed, 1)),
        }
        self._append_metrics(row)
        if dev > s.best_dev:
            s.best_dev, s.bad_epochs = dev, 0
        else:
            s.bad_epochs += 1
        s.epoch += 1
        log.info("epoch %d step %d dev_bleu %.4f ms/sample %s", row["epoch"], s.step, dev, row["ms_per_sample"])
        return row

    @property
    def ms_per_sample(self) -> float:
        return 1000.0 * self.step_seconds / max(self.step_samples, 1)

    def finished(self) -> bool:
        c, s = self.config, self.state
        if s.done or s.epoch >= c.max_epochs or not self.budget_left():
            return True
        return c.patience is not None and self.dev_pairs and s.bad_epochs >= c.patience

    def train(self, stop_after: int | None = None) -> list[dict]:
        """Run epochs until a stopping condition; ``stop_after`` caps epochs in this call."""
        ran = 0
        while not self.finished() and (stop_after is None or ran < stop_after):
            self.run_epoch()
            ran += 1
            if self.finished():
                self.state.done = True
            if self.checkpoint_dir:
                self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
                self.save_checkpoint(self.checkpoint_path(self.state.epoch))
                self.save_checkpoint(self.checkpoint_dir / "last.ckpt")
        return self.history


def _fmt(v: float) -> str:
    return repr(float(v))


def read_metrics(path) -> list[dict]:
    with Path(path).open() as f:
        return list(csv.DictReader(f))

