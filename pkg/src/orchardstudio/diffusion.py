"""Desk-scale diffusion kernel for numeric property verification.

Implements the plain additive forward step and the variance-preserving
closed form, noise-prediction losses in image and latent space, and the
classifier-free-guidance combination. No training, no sampling loop; the
single-step x0 recovery exists so the algebra can be checked exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

# predictor(x_t, t, condition) -> predicted noise, same shape as x_t
NoisePredictor = Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True)
class NoiseSchedule:
    betas: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if not self.betas:
            raise ValueError("schedule needs at least one step")
        if any(not (0.0 < b < 1.0) for b in self.betas):
            raise ValueError("all betas must lie in (0,1)")

    @property
    def T(self) -> int:
        return len(self.betas)

    @property
    def alphas(self) -> tuple[float, ...]:
        return tuple(1.0 - b for b in self.betas)

    def alpha_bar(self, t: int) -> float:
        """Cumulative product of alphas through step t; alpha_bar(0) == 1."""
        if not (0 <= t <= self.T):
            raise ValueError(f"t must be in [0, {self.T}], got {t}")
        out = 1.0
        for b in self.betas[:t]:
            out *= 1.0 - b
        return out

    def alpha_bars(self) -> np.ndarray:
        return np.cumprod([1.0 - b for b in self.betas])


def make_linear_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    if T < 1:
        raise ValueError(f"T must be positive, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    if T == 1:
        return NoiseSchedule((beta_start,))
    return NoiseSchedule(tuple(np.linspace(beta_start, beta_end, T)))


def forward_noise_simple(
    x_prev: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """One plain additive step: x_t = x_{t-1} + eps with standard-normal eps."""
    x_prev = np.asarray(x_prev, dtype=float)
    eps = rng.standard_normal(x_prev.shape)
    return x_prev + eps, eps


def forward_noise_vp(
    x0: np.ndarray, t: int, schedule: NoiseSchedule, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Variance-preserving closed form:
    x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
    """
    x0 = np.asarray(x0, dtype=float)
    a_bar = schedule.alpha_bar(t)
    eps = rng.standard_normal(x0.shape)
    x_t = math.sqrt(a_bar) * x0 + math.sqrt(1.0 - a_bar) * eps
    return x_t, eps


def recover_x0(
    x_t: np.ndarray, eps: np.ndarray, t: int, schedule: NoiseSchedule
) -> np.ndarray:
    """Invert the VP forward step given the true noise."""
    a_bar = schedule.alpha_bar(t)
    if a_bar == 0.0:
        raise ValueError("alpha_bar is zero; inversion undefined")
    return (np.asarray(x_t) - math.sqrt(1.0 - a_bar) * np.asarray(eps)) / math.sqrt(a_bar)


def dm_loss(
    predictor: NoisePredictor,
    x_t: np.ndarray,
    t: int,
    true_eps: np.ndarray,
) -> float:
    """Squared L2 between true and predicted noise, summed over components
    and averaged over the batch (leading axis when 2-D)."""
    x_t = np.atleast_2d(np.asarray(x_t, dtype=float))
    true_eps = np.atleast_2d(np.asarray(true_eps, dtype=float))
    if x_t.shape != true_eps.shape:
        raise ValueError(f"shape mismatch: x_t {x_t.shape} vs true_eps {true_eps.shape}")
    losses = []
    for xi, ei in zip(x_t, true_eps):
        pred = np.asarray(predictor(xi, t))
        if pred.shape != ei.shape:
            raise ValueError(f"predictor output shape {pred.shape} != noise shape {ei.shape}")
        diff = ei - pred
        losses.append(float(diff @ diff))
    return float(np.mean(losses))


@dataclass(frozen=True)
class LatentCodec:
    """Fixed linear codec: encode rows are orthonormal, decode is the transpose."""

    matrix: np.ndarray  # (d_latent, d_image)

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2:
            raise ValueError("codec matrix must be 2-D")
        gram = m @ m.T
        if not np.allclose(gram, np.eye(m.shape[0]), atol=1e-10):
            raise ValueError("codec rows must be orthonormal")

    @property
    def d_latent(self) -> int:
        return self.matrix.shape[0]

    @property
    def d_image(self) -> int:
        return self.matrix.shape[1]

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)

    def decode(self, z: np.ndarray) -> np.ndarray:
        return self.matrix.T @ np.asarray(z, dtype=float)


def identity_codec(d: int) -> LatentCodec:
    return LatentCodec(np.eye(d))


def random_orthonormal_codec(
    d_latent: int, d_image: int, rng: np.random.Generator
) -> LatentCodec:
    if d_latent > d_image:
        raise ValueError("latent dimension cannot exceed image dimension")
    q, _ = np.linalg.qr(rng.standard_normal((d_image, d_latent)))
    return LatentCodec(q.T)


def ldm_loss(
    predictor: NoisePredictor,
    codec: LatentCodec,
    x0: np.ndarray,
    t: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> float:
    """Noise-prediction loss in the codec's latent space."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != codec.d_image:
        raise ValueError(f"x0 dimension {x0.shape[-1]} != codec d_image {codec.d_image}")
    z0 = codec.encode(x0)
    z_t, eps = forward_noise_vp(z0, t, schedule, rng)
    return dm_loss(predictor, z_t, t, eps)


def cfg_combine(
    eps_uncond: np.ndarray, eps_cond: np.ndarray, scale: float
) -> np.ndarray:
    """Guided noise estimate: uncond + scale * (cond - uncond)."""
    eps_uncond = np.asarray(eps_uncond, dtype=float)
    eps_cond = np.asarray(eps_cond, dtype=float)
    if eps_uncond.shape != eps_cond.shape:
        raise ValueError(
            f"shape mismatch: {eps_uncond.shape} vs {eps_cond.shape}"
        )
    if scale < 0:
        raise ValueError(f"scale must be non-negative, got {scale}")
    if scale == 1.0:
        # the guided estimate must reduce to the conditional one bit-exactly
        return eps_cond.copy()
    return eps_uncond + scale * (eps_cond - eps_uncond)


def run_kernel_checks(seed: int = 0, mc_samples: int = 10_000) -> dict[str, float]:
    """Numeric self-checks for the kernel; returns the measured statistics."""
    rng = np.random.default_rng(seed)
    schedule = make_linear_schedule(100, 1e-4, 2e-2)

    # oracle predictor reproduces the drawn noise exactly
    x0 = rng.standard_normal(16)
    x_t, eps = forward_noise_vp(x0, 50, schedule, rng)
    oracle_loss = dm_loss(lambda x, t: eps, x_t, 50, eps)

    # single-step inversion across every t
    max_inversion_error = 0.0
    for t in range(0, schedule.T + 1):
        x_t, eps = forward_noise_vp(x0, t, schedule, rng)
        err = float(np.max(np.abs(recover_x0(x_t, eps, t, schedule) - x0)))
        max_inversion_error = max(max_inversion_error, err)

    # VP variance preservation at a deep step, unit-variance inputs
    t_deep = schedule.T
    xs = rng.standard_normal((mc_samples, 4))
    noised = np.empty_like(xs)
    a_bar = schedule.alpha_bar(t_deep)
    eps_mc = rng.standard_normal(xs.shape)
    noised = math.sqrt(a_bar) * xs + math.sqrt(1 - a_bar) * eps_mc
    vp_variance = float(np.var(noised))

    # additive walk variance grows linearly in t
    t_walk = 25
    walk = np.zeros((mc_samples,))
    for _ in range(t_walk):
        walk, _ = forward_noise_simple(walk, rng)
    walk_variance = float(np.var(walk))

    # cfg endpoints
    u = rng.standard_normal(8)
    c = rng.standard_normal(8)
    cfg_scale1_err = float(np.max(np.abs(cfg_combine(u, c, 1.0) - c)))
    cfg_scale0_err = float(np.max(np.abs(cfg_combine(u, c, 0.0) - u)))

    return {
        "oracle_loss": oracle_loss,
        "max_inversion_error": max_inversion_error,
        "vp_variance": vp_variance,
        "walk_variance": walk_variance,
        "walk_steps": float(t_walk),
        "cfg_scale1_err": cfg_scale1_err,
        "cfg_scale0_err": cfg_scale0_err,
        "alpha_bar_T": schedule.alpha_bar(schedule.T),
    }
