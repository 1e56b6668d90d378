"""Linear noise schedule and the forward (noising) process over embedding sequences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step tables indexed by step number; index 0 of ``alpha_bar`` is the clean state.

    ``beta[t-1]`` and ``alpha[t-1]`` hold step ``t`` so that ``alpha_bar[t]`` lines up with ``t``.
    """

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)

    def coefficients(self, t):
        """``(sqrt(alpha_bar[t]), sqrt(1 - alpha_bar[t]))`` for int or integer-tensor ``t``."""
        if isinstance(t, torch.Tensor):
            ab = torch.as_tensor(self.alpha_bar)[t.long()]
            return ab.sqrt(), (1.0 - ab).sqrt()
        ab = float(self.alpha_bar[t])
        return float(np.sqrt(ab)), float(np.sqrt(1.0 - ab))

    def dump(self, path) -> None:
        with open(path, "w") as f:
            f.write("t\tbeta\talpha_bar\n")
            f.write(f"0\t0\t{float(self.alpha_bar[0])!r}\n")
            for t in range(1, self.T + 1):
                f.write(f"{t}\t{float(self.beta[t - 1])!r}\t{float(self.alpha_bar[t])!r}\n")


def linear_schedule(T: int = 2000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if T == 1:
        beta = np.array([beta_start], dtype=np.float64)
    else:
        steps = np.arange(T, dtype=np.float64)
        beta = beta_start + steps / (T - 1) * (beta_end - beta_start)
    alpha = 1.0 - beta
    alpha_bar = np.empty(T + 1, dtype=np.float64)
    alpha_bar[0] = 1.0
    acc = 1.0
    for t in range(T):
        acc *= alpha[t]
        alpha_bar[t + 1] = acc
    if acc < np.finfo(np.float64).tiny:
        # past this point the product is subnormal or zero and stops decreasing strictly
        raise ValueError(f"alpha_bar underflows float64 by step {T} (beta {beta_start}..{beta_end}); "
                         "use fewer steps or smaller betas")
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def _broadcast(coef: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    # per-example coefficients (B,) against (B, L, D)
    return coef.to(x.dtype).view(-1, *([1] * (x.ndim - 1)))


def q_sample(schedule: NoiseSchedule, x0, t, noise):
    """``sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * noise``.

    ``t`` is an int, or a length-B integer tensor for batched ``x0``.
    """
    if tuple(x0.shape) != tuple(noise.shape):
        raise ValueError(f"noise shape {tuple(noise.shape)} does not match x0 shape {tuple(x0.shape)}")
    if isinstance(t, torch.Tensor) and t.ndim > 0:
        if t.min() < 1 or t.max() > schedule.T:
            raise ValueError(f"t must lie in [1, {schedule.T}]")
        a, s = schedule.coefficients(t)
        return _broadcast(a, x0) * x0 + _broadcast(s, x0) * noise
    t = int(t)
    if not 1 <= t <= schedule.T:
        raise ValueError(f"t must lie in [1, {schedule.T}], got {t}")
    a, s = schedule.coefficients(t)
    return a * x0 + s * noise


def renoise_step(schedule: NoiseSchedule, x0_hat, t_next: int, noise):
    """Re-noise a clean estimate to step ``t_next``; identity at ``t_next == 0``."""
    if tuple(x0_hat.shape) != tuple(noise.shape):
        raise ValueError(f"noise shape {tuple(noise.shape)} does not match x0 shape {tuple(x0_hat.shape)}")
    if not 0 <= t_next <= schedule.T:
        raise ValueError(f"t_next must lie in [0, {schedule.T}], got {t_next}")
    if t_next == 0:
        return x0_hat
    return q_sample(schedule, x0_hat, t_next, noise)
