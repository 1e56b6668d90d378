"""Iterative generation from noise and cosine rounding back to tokens."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import checkpoint
from .config import RunConfig, load_config
from .corpus import SentencePair, build_condition, canonical_order, preprocess
from .denoiser import Denoiser
from .diffusion import NoiseSchedule, renoise_step
from .tokenizer import Vocabulary
from .trainer import schedule_for, uses_style_tokens


def round_to_tokens(x0: torch.Tensor, table: torch.Tensor, unk_id: int = 1) -> torch.Tensor:
    """Cosine-nearest row of ``table`` for every row of ``x0`` (..., D) -> (...,).

    Ties go to the lowest id (``argmax`` returns the first maximum); zero rows map to ``unk_id``.
    """
    x = torch.as_tensor(x0)
    table = torch.as_tensor(table).to(x.dtype)
    flat = x.reshape(-1, x.shape[-1])
    norms = flat.norm(dim=-1)
    unit = flat / norms.clamp_min(torch.finfo(x.dtype).tiny)[:, None]
    table_unit = table / table.norm(dim=-1, keepdim=True)
    ids = (unit @ table_unit.T).argmax(dim=-1)
    ids = torch.where(norms == 0, torch.full_like(ids, unk_id), ids)
    return ids.reshape(x.shape[:-1])


def clamp_to_table(x0: torch.Tensor, table: torch.Tensor, unk_id: int = 1) -> torch.Tensor:
    return table[round_to_tokens(x0, table, unk_id)]


def timesteps(T: int, stride: int = 1) -> list[int]:
    """Visited steps, descending from T; the final step is always 1."""
    if stride < 1:
        raise ValueError(f"sample_stride must be >= 1, got {stride}")
    steps = list(range(T, 0, -stride))
    if steps[-1] != 1:
        steps.append(1)
    return steps


@torch.no_grad()
def generate(cond_ids, model: Denoiser, schedule: NoiseSchedule, rng: torch.Generator | int | None = None,
             clamp: bool = False, stride: int = 1,
             noise_fn: Callable[[tuple], torch.Tensor] | None = None) -> torch.Tensor:
    """Sample target ids for condition ids of shape (Ls,) or (B, Ls).

    Starting from standard-normal noise, each step predicts the clean target and
    re-noises it to the next visited step with fresh noise. ``noise_fn(shape)``
    replaces the default generator-backed draws (used for auditing).
    """
    cond_ids = torch.as_tensor(cond_ids, dtype=torch.long)
    unbatched = cond_ids.ndim == 1
    if unbatched:
        cond_ids = cond_ids[None]
    if noise_fn is None:
        gen = rng if isinstance(rng, torch.Generator) else torch.Generator().manual_seed(int(rng or 0))

        def noise_fn(shape):
            return torch.randn(shape, generator=gen, dtype=model.embedding.dtype)

    was_training = model.training
    model.eval()
    cfg = model.config
    shape = (cond_ids.shape[0], cfg.target_len, cfg.dim)
    cond = model.embed(cond_ids)
    pad_mask = cond_ids == model.pad_id
    table = model.embedding.detach()

    steps = timesteps(schedule.T, stride)
    x = noise_fn(shape)
    for i, t in enumerate(steps):
        x0_hat = model(cond, x, t, pad_mask)
        if clamp:
            x0_hat = clamp_to_table(x0_hat, table)
        t_next = steps[i + 1] if i + 1 < len(steps) else 0
        x = x0_hat if t_next == 0 else renoise_step(schedule, x0_hat, t_next, noise_fn(shape))
    model.train(was_training)
    ids = round_to_tokens(x, table)
    return ids[0] if unbatched else ids


@dataclass
class ModelBundle:
    model: Denoiser
    vocab: Vocabulary
    schedule: NoiseSchedule
    config: RunConfig
    train_counts: dict

    @property
    def style_tokens(self) -> bool:
        return uses_style_tokens(self.config.mode)


def load_bundle(directory) -> ModelBundle:
    directory = Path(directory)
    config = load_config(directory / "config.txt", env={})
    vocab = Vocabulary.load(directory / "vocab.txt")
    counts = {}
    counts_path = directory / "train_counts.tsv"
    if counts_path.exists():
        for line in counts_path.read_text(encoding="utf-8").splitlines():
            tok, _, n = line.rpartition("\t")
            counts[tok] = int(n)
    model = Denoiser(config.model, len(vocab), vocab.pad_id)
    checkpoint.load_model(directory, model)
    model.eval()
    return ModelBundle(model, vocab, schedule_for(config), config, counts)


def prepare_condition(bundle: ModelBundle, source: Sequence[str], transfers: Sequence[str],
                      extra_info: Sequence[str] = (), preprocess_input: bool = True) -> list[int]:
    if preprocess_input and bundle.train_counts:
        source = preprocess(source, bundle.train_counts)
        extra_info = preprocess(extra_info, bundle.train_counts)
    # target is a placeholder; only the condition is built
    pair = SentencePair(tuple(source), ("-",), canonical_order(transfers), tuple(extra_info))
    return bundle.vocab.encode(build_condition(pair, bundle.style_tokens), bundle.config.model.cond_len)


def transfer_batch(bundle: ModelBundle, rows: Sequence[tuple], seed: int = 0,
                   preprocess_input: bool = True, batch_size: int = 256) -> list[list[str]]:
    """Generate for ``(source, transfers, extra_info)`` rows; one seeded stream per call."""
    gen = torch.Generator().manual_seed(seed)
    cond = [prepare_condition(bundle, src, tr, ex, preprocess_input) for src, tr, ex in rows]
    out = []
    for start in range(0, len(cond), batch_size):
        ids = generate(torch.tensor(cond[start:start + batch_size]), bundle.model, bundle.schedule, gen,
                       clamp=bundle.config.sample.clamp, stride=bundle.config.sample.sample_stride)
        out.extend(bundle.vocab.decode(row.tolist()) for row in ids)
    return out


def transfer(sentence: Sequence[str], transfers: Sequence[str], extra_info: Sequence[str],
             bundle: ModelBundle, seed: int = 0) -> list[str]:
    """preprocess -> condition -> encode -> generate -> decode for one sentence."""
    return transfer_batch(bundle, [(sentence, transfers, extra_info)], seed)[0]
