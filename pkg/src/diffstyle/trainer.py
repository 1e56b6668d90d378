"""Training loop: batching, optimizer steps, validation, checkpoints and loss history."""
from __future__ import annotations

import csv
import logging
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import checkpoint
from .config import RunConfig, TrainConfig
from .corpus import SentencePair, SplitDataset, build_condition
from .denoiser import Denoiser, DenoiserConfig, DiffusionBatch, loss
from .diffusion import NoiseSchedule, linear_schedule
from .tokenizer import Vocabulary

log = logging.getLogger(__name__)


def uses_style_tokens(mode: str) -> bool:
    kind = mode.split(":", 1)[0]
    if kind not in ("single", "multitask", "compositional"):
        raise ValueError(f"unknown mode {mode!r}; expected single:<transfer>, multitask or compositional:<dataset>")
    return kind != "single"


def encode_pairs(pairs: Sequence[SentencePair], vocab: Vocabulary, config: DenoiserConfig,
                 style_tokens: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Condition and target id matrices, shapes (N, Ls) and (N, Lt)."""
    cond = np.array([vocab.encode(build_condition(p, style_tokens), config.cond_len) for p in pairs], dtype=np.int64)
    tgt = np.array([vocab.encode(p.target, config.target_len) for p in pairs], dtype=np.int64)
    return cond.reshape(len(pairs), config.cond_len), tgt.reshape(len(pairs), config.target_len)


def sample_steps(rng: np.random.Generator, size: int, T: int) -> np.ndarray:
    return rng.integers(1, T + 1, size=size)


def sample_batch(cond: np.ndarray, tgt: np.ndarray, T: int, dim: int, rng: np.random.Generator) -> DiffusionBatch:
    """Attach uniform steps in 1..T and standard-normal noise to already-encoded rows."""
    B, Lt = tgt.shape
    t = sample_steps(rng, B, T)
    noise = rng.standard_normal((B, Lt, dim)).astype(np.float32)
    return DiffusionBatch(
        cond_ids=torch.from_numpy(np.ascontiguousarray(cond)),
        target_ids=torch.from_numpy(np.ascontiguousarray(tgt)),
        t=torch.from_numpy(t.astype(np.int64)),
        noise=torch.from_numpy(noise),
    )


def make_batch(pairs: Sequence[SentencePair], vocab: Vocabulary, schedule: NoiseSchedule,
               rng: np.random.Generator, config: DenoiserConfig, style_tokens: bool = True) -> DiffusionBatch:
    cond, tgt = encode_pairs(pairs, vocab, config, style_tokens)
    return sample_batch(cond, tgt, schedule.T, config.dim, rng)


def make_optimizer(model: Denoiser, config: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)


def learning_rate(step: int, config: TrainConfig) -> float:
    """Linear warmup over ``warmup_steps`` then constant; ``step`` is 0-based."""
    if config.warmup_steps == 0:
        return config.lr
    return config.lr * min(1.0, (step + 1) / config.warmup_steps)


def _step_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence([seed, 7, step]).generate_state(1)[0])


def train_step(model: Denoiser, batch: DiffusionBatch, optimizer: torch.optim.Optimizer,
               config: TrainConfig, schedule: NoiseSchedule, step: int = 0) -> float:
    """One clipped AdamW update; returns the loss measured before the update."""
    model.train()
    torch.manual_seed(_step_seed(config.seed, step))  # dropout masks depend only on (seed, step)
    for group in optimizer.param_groups:
        group["lr"] = learning_rate(step, config)
    optimizer.zero_grad(set_to_none=True)
    value = loss(model, batch, schedule)
    if not torch.isfinite(value):
        raise FloatingPointError(f"non-finite loss {value.item()} at step {step}; {_diagnose(model)}")
    value.backward()
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise FloatingPointError(f"non-finite gradient in {name} at step {step}")
    torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)
    optimizer.step()
    return value.item()


def _diagnose(model: Denoiser) -> str:
    for name, p in model.named_parameters():
        if not torch.isfinite(p).all():
            return f"offending tensor: {name}"
    return "all parameters finite; check the batch inputs"


@torch.no_grad()
def evaluate_loss(model: Denoiser, cond: np.ndarray, tgt: np.ndarray, schedule: NoiseSchedule,
                  seed: int, batch_size: int = 64) -> float:
    """Mean loss with steps/noise fixed by ``seed`` so values are comparable across calls."""
    was_training = model.training
    model.eval()
    rng = np.random.default_rng([seed, 3])
    total, count = 0.0, 0
    for start in range(0, len(cond), batch_size):
        batch = sample_batch(cond[start:start + batch_size], tgt[start:start + batch_size],
                             schedule.T, model.config.dim, rng)
        n = len(batch.t)
        total += loss(model, batch, schedule).item() * n
        count += n
    model.train(was_training)
    return total / count


@dataclass
class FitResult:
    run_dir: Path
    last_checkpoint: Path
    best_checkpoint: Path | None
    history: list[tuple[int, float, float | None]] = field(default_factory=list)


def schedule_for(config: RunConfig) -> NoiseSchedule:
    s = config.schedule
    return linear_schedule(s.diffusion_steps, s.beta_start, s.beta_end)


def build_model(config: RunConfig, vocab: Vocabulary) -> Denoiser:
    torch.manual_seed(config.train.seed)
    return Denoiser(config.model, len(vocab), vocab.pad_id)


class Trainer:
    """Single-process trainer over a fixed split and vocabulary.

    Epoch ``e`` visits the training rows in a permutation seeded by ``(seed, e)``
    and every batch draws steps and noise from ``(seed, step)``, so a run
    resumed from a checkpoint replays the uninterrupted run exactly.
    """

    def __init__(self, config: RunConfig, vocab: Vocabulary, dataset: SplitDataset,
                 train_counts: dict | None = None):
        if not dataset.train:
            raise ValueError("training split is empty")
        self.config = config
        self.vocab = vocab
        self.dataset = dataset
        self.train_counts = dict(train_counts or {})
        self.schedule = schedule_for(config)
        style = uses_style_tokens(config.mode)
        self.train_arrays = encode_pairs(dataset.train, vocab, config.model, style)
        self.valid_arrays = encode_pairs(dataset.valid, vocab, config.model, style) if dataset.valid else None
        self.model = build_model(config, vocab)
        self.optimizer = make_optimizer(self.model, config.train)
        self.step = 0
        self._perms: dict[int, np.ndarray] = {}

    def batch_indices(self, step: int) -> np.ndarray:
        n, B = len(self.train_arrays[0]), self.config.train.batch_size
        out = np.empty(B, dtype=np.int64)
        for j in range(B):
            epoch, i = divmod(step * B + j, n)
            if epoch not in self._perms:
                self._perms = {epoch: np.random.default_rng([self.config.train.seed, 1, epoch]).permutation(n)}
            out[j] = self._perms[epoch][i]
        return out

    def batch(self, step: int) -> DiffusionBatch:
        idx = self.batch_indices(step)
        rng = np.random.default_rng([self.config.train.seed, 2, step])
        cond, tgt = self.train_arrays
        return sample_batch(cond[idx], tgt[idx], self.schedule.T, self.config.model.dim, rng)

    def train_step(self) -> float:
        value = train_step(self.model, self.batch(self.step), self.optimizer, self.config.train,
                           self.schedule, self.step)
        self.step += 1
        return value

    def valid_loss(self) -> float | None:
        if self.valid_arrays is None:
            return None
        return evaluate_loss(self.model, *self.valid_arrays, self.schedule, self.config.train.seed)

    def save(self, directory) -> Path:
        directory = Path(directory)
        checkpoint.save_model(directory, self.model, self.optimizer,
                              meta={"step": str(self.step), "vocab_size": str(len(self.vocab))})
        self.config.save(directory / "config.txt")
        self.vocab.save(directory / "vocab.txt")
        with open(directory / "train_counts.tsv", "w", encoding="utf-8") as f:
            for tok in sorted(self.train_counts):
                f.write(f"{tok}\t{self.train_counts[tok]}\n")
        return directory

    def restore(self, directory) -> None:
        meta = checkpoint.load_model(directory, self.model, self.optimizer)
        self.step = int(meta.get("step", 0))

    def fit(self, run_dir, resume_from=None, progress_every: int = 0) -> FitResult:
        run_dir = Path(run_dir)
        try:
            run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OSError(f"cannot create run directory {run_dir}: {e}") from e
        cfg = self.config.train
        ckpt_root = run_dir / "checkpoints"
        history_path = run_dir / "loss_history.csv"
        history: list[tuple[int, float, float | None]] = []
        best: tuple[float, Path] | None = None

        if resume_from is not None:
            self.restore(resume_from)
            if history_path.exists():
                with open(history_path, newline="") as f:
                    for row in csv.DictReader(f):
                        if int(row["step"]) <= self.step:
                            history.append((int(row["step"]), float(row["train_loss"]),
                                            float(row["valid_loss"]) if row["valid_loss"] else None))
        else:
            last = self.save(ckpt_root / f"step_{self.step:07d}")

        last = ckpt_root / f"step_{self.step:07d}"
        window: list[float] = []
        while self.step < cfg.max_steps:
            value = self.train_step()
            window.append(value)
            valid = None
            if self.step % cfg.valid_interval == 0 or self.step == cfg.max_steps:
                valid = self.valid_loss()
            history.append((self.step, value, valid))
            if progress_every and self.step % progress_every == 0:
                log.info("step %d train_loss %.5f (mean of last %d: %.5f)%s", self.step, value, len(window),
                         sum(window) / len(window), "" if valid is None else f" valid_loss {valid:.5f}")
                window = []
            if self.step % cfg.checkpoint_interval == 0 or self.step == cfg.max_steps:
                last = self.save(ckpt_root / f"step_{self.step:07d}")
                if valid is not None and (best is None or valid < best[0]):
                    best = (valid, last)
                    shutil.copytree(last, run_dir / "best", dirs_exist_ok=True)
            if not math.isfinite(value):
                raise FloatingPointError(f"non-finite loss at step {self.step}")

        try:
            with open(history_path, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["step", "train_loss", "valid_loss"])
                for step, tr, va in history:
                    w.writerow([step, repr(tr), "" if va is None else repr(va)])
        except OSError as e:
            raise OSError(f"cannot write loss history {history_path}: {e}") from e
        return FitResult(run_dir, last, best[1] if best else None, history)
