"""Low-light enhancement: histogram equalization and refined-illumination
reflectance recovery.

The illumination map is initialized from the green channel, refined by
minimizing a quadratic surrogate of a weighted-gradient sparsity objective
(one symmetric positive-definite linear system per frame, solved with
Jacobi-preconditioned conjugate gradients) and finally used for element-wise
reflectance recovery with a gamma-softened division.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import FrameSequence, to_quantized
from .errors import ConfigError, SolverError


@dataclass(frozen=True)
class IlluminationMap:
    values: np.ndarray  # (H, W)


@dataclass(frozen=True)
class WeightField:
    w_h: np.ndarray  # (H, W), horizontal forward-difference weights
    w_v: np.ndarray  # (H, W), vertical forward-difference weights


@dataclass(frozen=True)
class LimeConfig:
    alpha: float = 0.15
    epsilon_w: float = 1e-3
    gamma: float = 0.8
    t_floor: float = 0.004
    solver_tol: float = 1e-6
    solver_max_iter: int = 500

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.epsilon_w <= 0:
            raise ConfigError("epsilon_w must be > 0")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must be in (0, 1]")
        if not 0 < self.t_floor <= 0.1:
            raise ConfigError("t_floor must be in (0, 0.1]")
        if self.solver_tol <= 0:
            raise ConfigError("solver_tol must be > 0")


def _forward_diffs(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences with replicate boundary (last column/row = 0)."""
    gh = np.zeros_like(values)
    gh[:, :-1] = values[:, 1:] - values[:, :-1]
    gv = np.zeros_like(values)
    gv[:-1, :] = values[1:, :] - values[:-1, :]
    return gh, gv


def initial_illumination(frame: np.ndarray) -> IlluminationMap:
    """Initial illumination map: the green channel, per pixel."""
    return IlluminationMap(values=np.asarray(frame[..., 1], dtype=np.float64).copy())


def gradient_weights(t_hat: IlluminationMap, epsilon_w: float) -> WeightField:
    """Gradient-adaptive weights W_d = 1 / (|grad_d T| + epsilon)."""
    if epsilon_w <= 0:
        raise ConfigError("epsilon_w must be > 0")
    gh, gv = _forward_diffs(t_hat.values)
    return WeightField(w_h=1.0 / (np.abs(gh) + epsilon_w), w_v=1.0 / (np.abs(gv) + epsilon_w))


def _surrogate_edge_weights(t_hat: IlluminationMap, w: WeightField, epsilon_w: float):
    gh, gv = _forward_diffs(t_hat.values)
    return w.w_h / (np.abs(gh) + epsilon_w), w.w_v / (np.abs(gv) + epsilon_w)


def surrogate_objective(t, t_hat: IlluminationMap, w: WeightField, cfg: LimeConfig) -> float:
    """Value of the quadratic surrogate whose normal equations we solve."""
    wt_h, wt_v = _surrogate_edge_weights(t_hat, w, cfg.epsilon_w)
    gh, gv = _forward_diffs(np.asarray(t, dtype=np.float64))
    data = float(np.sum((t_hat.values - t) ** 2))
    smooth = float(np.sum(wt_h * gh * gh) + np.sum(wt_v * gv * gv))
    return data + cfg.alpha * smooth


def refine_unclamped(t_hat: IlluminationMap, w: WeightField, cfg: LimeConfig):
    """Solve the surrogate system without the final range clamp.

    Returns (solution, rel_residual, iterations).
    """
    if w.w_h.shape != t_hat.values.shape or w.w_v.shape != t_hat.values.shape:
        raise ConfigError("weight field dimensions must match the map")
    if cfg.alpha == 0.0:
        return t_hat.values.copy(), 0.0, 0
    wt_h, wt_v = _surrogate_edge_weights(t_hat, w, cfg.epsilon_w)
    t, rel, iters = kernels.grid_cg_solve(
        t_hat.values, wt_h, wt_v, cfg.alpha, cfg.solver_tol, cfg.solver_max_iter
    )
    if rel > cfg.solver_tol:
        raise SolverError(
            f"refinement CG stalled at relative residual {rel:.3e} "
            f"after {iters} iterations",
            residual=rel,
        )
    return t, rel, iters


def refine_illumination(t_hat: IlluminationMap, w: WeightField, cfg: LimeConfig) -> IlluminationMap:
    """Refined illumination map, clamped to [t_floor, 1]."""
    t, _, _ = refine_unclamped(t_hat, w, cfg)
    return IlluminationMap(values=np.clip(t, cfg.t_floor, 1.0))


def recover_reflectance(frame: np.ndarray, t: IlluminationMap, cfg: LimeConfig) -> np.ndarray:
    """Element-wise recovery R = clip(L / max(T, floor)^gamma, 0, 1)."""
    denom = np.maximum(t.values, cfg.t_floor) ** cfg.gamma
    return np.clip(np.asarray(frame, dtype=np.float64) / denom[..., None], 0.0, 1.0)


def enhance_frame(frame: np.ndarray, cfg: LimeConfig) -> np.ndarray:
    t_hat = initial_illumination(frame)
    w = gradient_weights(t_hat, cfg.epsilon_w)
    t = refine_illumination(t_hat, w, cfg)
    return recover_reflectance(frame, t, cfg)


def enhance_video_lime(video: FrameSequence, cfg: LimeConfig | None = None) -> FrameSequence:
    """Enhance every frame independently; output is re-quantized to 8-bit."""
    cfg = cfg or LimeConfig()
    out = np.empty((len(video), video.height, video.width, 3), dtype=np.uint8)
    for i in range(len(video)):
        try:
            out[i] = to_quantized(enhance_frame(video.frame_float(i), cfg))
        except SolverError as exc:
            raise SolverError(f"frame {i}: {exc}", residual=exc.residual) from exc
    return FrameSequence(frames=out, fps=video.fps)


def histogram_equalize(frame: np.ndarray) -> np.ndarray:
    """Per-channel 256-bin histogram equalization of an 8-bit RGB frame.

    A channel with a single distinct value is returned unchanged; the rank
    order of distinct values is always preserved.
    """
    frame = np.asarray(frame)
    if frame.dtype != np.uint8:
        raise ConfigError("histogram_equalize expects an 8-bit frame")
    out = np.empty_like(frame)
    n = frame.shape[0] * frame.shape[1]
    for ch in range(3):
        values = frame[..., ch]
        counts = np.bincount(values.ravel(), minlength=256)
        cdf = np.cumsum(counts)
        cdf_min = int(cdf[np.nonzero(counts)[0][0]])
        if cdf_min >= n:  # single distinct value
            out[..., ch] = values
            continue
        lut = np.floor((cdf - cdf_min) / (n - cdf_min) * 255.0 + 0.5)
        out[..., ch] = np.clip(lut, 0, 255).astype(np.uint8)[values]
    return out


def equalize_video(video: FrameSequence) -> FrameSequence:
    frames = video.frames
    if frames.dtype != np.uint8:
        frames = to_quantized(frames)
    out = np.stack([histogram_equalize(frames[i]) for i in range(len(video))])
    return FrameSequence(frames=out, fps=video.fps)
