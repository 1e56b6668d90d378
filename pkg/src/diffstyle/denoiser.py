"""Transformer denoiser over [clean condition ; noised target] embedding sequences."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import torch
import torch.nn as nn
import torch.nn.functional as F

from .diffusion import NoiseSchedule, q_sample


@dataclass(frozen=True)
class DenoiserConfig:
    layers: int = 4
    heads: int = 4
    dim: int = 128
    ff_dim: int = 512
    cond_len: int = 48
    target_len: int = 48
    dropout: float = 0.1
    mask_pad: bool = False

    def __post_init__(self):
        if self.layers < 0 or self.heads < 1:
            raise ValueError("layers must be >= 0 and heads >= 1")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.cond_len < 1 or self.target_len < 1:
            raise ValueError("cond_len and target_len must be >= 1")

    def replace(self, **kw) -> "DenoiserConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


DESK = DenoiserConfig()
PAPER_SCALE = DenoiserConfig(layers=12, heads=12, dim=768, ff_dim=3072)
PRESETS = {"desk": DESK, "paper": PAPER_SCALE}


def parameter_count(config: DenoiserConfig, vocab_size: int) -> int:
    """Closed-form count matching :class:`Denoiser`."""
    D, F_, L = config.dim, config.ff_dim, config.layers
    embeddings = vocab_size * D + (config.cond_len + config.target_len) * D
    time_mlp = D * F_ + F_ + F_ * D + D
    per_layer = 2 * D + 4 * (D * D + D) + 2 * D + (D * F_ + F_) + (F_ * D + D)
    output = D * D + D
    return embeddings + time_mlp + L * per_layer + output


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal features of integer steps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.o = nn.Linear(dim, dim)
        self.dropout = dropout

    def forward(self, x, key_padding_mask=None):
        B, L, D = x.shape
        h = self.heads

        def split(y):
            return y.view(B, L, h, D // h).transpose(1, 2)

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(D // h)
        if key_padding_mask is not None:
            scores = scores.masked_fill(key_padding_mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        attn = F.dropout(attn, self.dropout, self.training)
        out = (attn @ v).transpose(1, 2).reshape(B, L, D)
        return self.o(out)


class Block(nn.Module):
    """Pre-norm residual block: attention then feed-forward."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(config.dim)
        self.attn = SelfAttention(config.dim, config.heads, config.dropout)
        self.norm2 = nn.LayerNorm(config.dim)
        self.ff1 = nn.Linear(config.dim, config.ff_dim)
        self.ff2 = nn.Linear(config.ff_dim, config.dim)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x, key_padding_mask=None):
        x = x + self.dropout(self.attn(self.norm1(x), key_padding_mask))
        x = x + self.dropout(self.ff2(F.gelu(self.ff1(self.norm2(x)))))
        return x


class Denoiser(nn.Module):
    """Predicts the clean target embeddings from the condition and a noised target.

    The token table ``embedding`` is shared between the condition path, the
    target path and rounding, and is trained jointly with the transformer.
    """

    def __init__(self, config: DenoiserConfig, vocab_size: int, pad_id: int = 0):
        super().__init__()
        self.config = config
        self.vocab_size = vocab_size
        self.pad_id = pad_id
        D = config.dim
        self.embedding = nn.Parameter(torch.empty(vocab_size, D))
        self.position = nn.Parameter(torch.empty(config.cond_len + config.target_len, D))
        self.time1 = nn.Linear(D, config.ff_dim)
        self.time2 = nn.Linear(config.ff_dim, D)
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.layers))
        self.out = nn.Linear(D, D)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        # Unit-variance token table: noise is unit-variance, so a 0.02 table would
        # sit far below it. Everything else starts at N(0, 0.02).
        nn.init.normal_(self.embedding, 0.0, 1.0)
        with torch.no_grad():
            zero = self.embedding.norm(dim=-1) == 0
            while zero.any():
                self.embedding[zero] = torch.randn_like(self.embedding[zero])
                zero = self.embedding.norm(dim=-1) == 0
        nn.init.normal_(self.position, 0.0, 0.02)
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.normal_(module.weight, 0.0, 0.02)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        ids = torch.as_tensor(ids, dtype=torch.long)
        if ids.numel() and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ValueError(f"token id out of range for vocabulary of size {self.vocab_size}")
        return self.embedding[ids]

    def time_embed(self, t: torch.Tensor) -> torch.Tensor:
        feats = timestep_embedding(t, self.config.dim).to(self.embedding.dtype)
        return self.time2(F.silu(self.time1(feats)))

    def forward(self, cond: torch.Tensor, noised_target: torch.Tensor, t, cond_pad_mask=None) -> torch.Tensor:
        """``cond`` (B, Ls, D) and ``noised_target`` (B, Lt, D) -> predicted clean target (B, Lt, D).

        Unbatched (L, D) inputs are accepted and return (Lt, D).
        """
        unbatched = cond.ndim == 2
        if unbatched:
            cond, noised_target = cond[None], noised_target[None]
            if cond_pad_mask is not None:
                cond_pad_mask = cond_pad_mask[None]
        cfg = self.config
        B = cond.shape[0]
        if cond.shape[1:] != (cfg.cond_len, cfg.dim) or noised_target.shape != (B, cfg.target_len, cfg.dim):
            raise ValueError(
                f"expected cond (B, {cfg.cond_len}, {cfg.dim}) and target (B, {cfg.target_len}, {cfg.dim}), "
                f"got {tuple(cond.shape)} and {tuple(noised_target.shape)}"
            )
        t = torch.as_tensor(t, dtype=torch.long).reshape(-1).expand(B)
        x = torch.cat([cond, noised_target], dim=1) + self.position[None]
        x = x + self.time_embed(t)[:, None, :]
        mask = None
        if cfg.mask_pad and cond_pad_mask is not None:
            mask = torch.cat([cond_pad_mask, torch.zeros(B, cfg.target_len, dtype=torch.bool)], dim=1)
        for block in self.blocks:
            x = block(x, mask)
        out = self.out(x[:, cfg.cond_len:])
        return out[0] if unbatched else out

    def denoise(self, cond_ids: torch.Tensor, noised_target: torch.Tensor, t) -> torch.Tensor:
        """Forward pass from condition ids."""
        return self(self.embed(cond_ids), noised_target, t, cond_ids == self.pad_id)


@dataclass(frozen=True)
class DiffusionBatch:
    cond_ids: torch.Tensor  # (B, Ls)
    target_ids: torch.Tensor  # (B, Lt)
    t: torch.Tensor  # (B,)
    noise: torch.Tensor  # (B, Lt, D)


def predict(model: Denoiser, batch: DiffusionBatch, schedule: NoiseSchedule):
    """``(prediction, clean target)`` for a batch; the target keeps its graph into the table."""
    x0 = model.embed(batch.target_ids)
    x_t = q_sample(schedule, x0, batch.t, batch.noise.to(x0.dtype))
    return model.denoise(batch.cond_ids, x_t, batch.t), x0


def loss(model: Denoiser, batch: DiffusionBatch, schedule: NoiseSchedule) -> torch.Tensor:
    """MSE over every target position (PAD included) and embedding coordinate."""
    pred, x0 = predict(model, batch, schedule)
    return ((pred - x0) ** 2).mean()


def gradients(model: Denoiser, batch: DiffusionBatch, schedule: NoiseSchedule) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of :func:`loss` for every named parameter."""
    value = loss(model, batch, schedule)
    if not torch.isfinite(value):
        raise FloatingPointError(f"non-finite loss {value.item()}")
    params = dict(model.named_parameters())
    grads = torch.autograd.grad(value, list(params.values()), allow_unused=True)
    return {
        name: torch.zeros_like(p) if g is None else g
        for (name, p), g in zip(params.items(), grads)
    }
