import numpy as np
import pytest

from luxppg.core import FrameSequence
from luxppg.enhance import (
    IlluminationMap,
    LimeConfig,
    enhance_video_lime,
    gradient_weights,
    histogram_equalize,
    initial_illumination,
    recover_reflectance,
    refine_illumination,
    refine_unclamped,
    surrogate_objective,
)
from luxppg.synth import SynthConfig, generate_recording
from luxppg.traces import spatial_average
from luxppg.roi import BoundingBox, RoiTrack


# --- independent dense oracle -------------------------------------------------
#
# Assembles the refinement normal equations pixel by pixel and solves them
# with a dense direct solver; shares no code with the CG path.


def dense_refine_oracle(t_hat, alpha, epsilon_w):
    H, W = t_hat.shape
    n = H * W

    def idx(i, j):
        return i * W + j

    def grad_h(i, j):
        return t_hat[i, j + 1] - t_hat[i, j] if j + 1 < W else 0.0

    def grad_v(i, j):
        return t_hat[i + 1, j] - t_hat[i, j] if i + 1 < H else 0.0

    A = np.eye(n)
    for i in range(H):
        for j in range(W):
            for (di, dj, grad) in (((0), (1), grad_h), ((1), (0), grad_v)):
                if i + di >= H or j + dj >= W:
                    continue
                g = abs(grad(i, j))
                w_edge = (1.0 / (g + epsilon_w)) / (g + epsilon_w)
                p, q = idx(i, j), idx(i + di, j + dj)
                A[p, p] += alpha * w_edge
                A[q, q] += alpha * w_edge
                A[p, q] -= alpha * w_edge
                A[q, p] -= alpha * w_edge
    return np.linalg.solve(A, t_hat.ravel()).reshape(H, W)


TIGHT = LimeConfig(solver_tol=1e-12, solver_max_iter=5000)


def test_initial_illumination_is_green_channel():
    frame = np.zeros((2, 2, 3))
    frame[0, 0] = (0.2, 0.5, 0.1)
    t = initial_illumination(frame)
    assert t.values[0, 0] == 0.5


def test_initial_illumination_black_and_ramp():
    black = np.zeros((3, 4, 3))
    assert np.all(initial_illumination(black).values == 0)
    ramp = np.zeros((2, 5, 3))
    ramp[..., 1] = np.linspace(0, 1, 5)
    assert np.allclose(initial_illumination(ramp).values, np.linspace(0, 1, 5))


def test_gradient_weights_constant_map():
    t = IlluminationMap(values=np.full((4, 4), 0.3))
    w = gradient_weights(t, 0.1)
    assert np.allclose(w.w_h, 10.0)
    assert np.allclose(w.w_v, 10.0)


def test_gradient_weights_horizontal_step():
    values = np.zeros((2, 4))
    values[:, 2:] = 1.0  # step between columns 1 and 2
    w = gradient_weights(IlluminationMap(values=values), 0.1)
    assert w.w_h[0, 1] == pytest.approx(1 / 1.1)
    assert w.w_h[0, 0] == pytest.approx(10.0)


def test_gradient_weights_match_hand_formula():
    rng = np.random.default_rng(11)
    values = rng.uniform(0, 1, (4, 4))
    w = gradient_weights(IlluminationMap(values=values), 1e-3)
    for i in range(4):
        for j in range(4):
            gh = values[i, j + 1] - values[i, j] if j + 1 < 4 else 0.0
            gv = values[i + 1, j] - values[i, j] if i + 1 < 4 else 0.0
            assert w.w_h[i, j] == pytest.approx(1.0 / (abs(gh) + 1e-3))
            assert w.w_v[i, j] == pytest.approx(1.0 / (abs(gv) + 1e-3))


def test_refine_alpha_zero_returns_clamped_input():
    values = np.array([[0.0, 0.5], [0.002, 1.0]])
    cfg = LimeConfig(alpha=0.0)
    t_hat = IlluminationMap(values=values)
    out = refine_illumination(t_hat, gradient_weights(t_hat, cfg.epsilon_w), cfg)
    assert np.array_equal(out.values, np.clip(values, cfg.t_floor, 1.0))


def test_refine_constant_map_is_fixed_point():
    t_hat = IlluminationMap(values=np.full((5, 6), 0.6))
    out = refine_illumination(t_hat, gradient_weights(t_hat, 1e-3), TIGHT)
    np.testing.assert_allclose(out.values, 0.6, atol=1e-12)


def test_refine_matches_dense_oracle():
    rng = np.random.default_rng(5)
    t_hat_values = rng.uniform(0.05, 0.95, (4, 4))
    t_hat = IlluminationMap(values=t_hat_values)
    cfg = LimeConfig(alpha=0.15, solver_tol=1e-12, solver_max_iter=5000)
    w = gradient_weights(t_hat, cfg.epsilon_w)
    expected = dense_refine_oracle(t_hat_values, cfg.alpha, cfg.epsilon_w)
    got, _, _ = refine_unclamped(t_hat, w, cfg)
    assert np.max(np.abs(got - expected)) < 1e-8


def test_refine_decreases_surrogate_objective():
    rng = np.random.default_rng(6)
    t_hat = IlluminationMap(values=rng.uniform(0.1, 0.9, (8, 8)))
    cfg = TIGHT
    w = gradient_weights(t_hat, cfg.epsilon_w)
    refined, _, _ = refine_unclamped(t_hat, w, cfg)
    assert surrogate_objective(refined, t_hat, w, cfg) <= surrogate_objective(
        t_hat.values, t_hat, w, cfg
    ) + 1e-12


def test_refine_translation_equivariance():
    rng = np.random.default_rng(7)
    base = rng.uniform(0.2, 0.6, (6, 6))
    t_hat = IlluminationMap(values=base)
    w = gradient_weights(t_hat, TIGHT.epsilon_w)
    sol, _, _ = refine_unclamped(t_hat, w, TIGHT)
    shifted = IlluminationMap(values=base + 0.25)
    sol_shifted, _, _ = refine_unclamped(shifted, gradient_weights(shifted, TIGHT.epsilon_w), TIGHT)
    np.testing.assert_allclose(sol_shifted, sol + 0.25, atol=1e-9)


def test_refine_residual_meets_tolerance():
    rng = np.random.default_rng(8)
    t_hat = IlluminationMap(values=rng.uniform(0.0, 1.0, (10, 7)))
    cfg = LimeConfig(solver_tol=1e-8, solver_max_iter=2000)
    w = gradient_weights(t_hat, cfg.epsilon_w)
    _, rel, _ = refine_unclamped(t_hat, w, cfg)
    assert rel <= cfg.solver_tol


def test_recover_identity_when_fully_lit():
    rng = np.random.default_rng(9)
    frame = rng.uniform(0, 1, (4, 4, 3))
    for gamma in (0.3, 0.8, 1.0):
        cfg = LimeConfig(gamma=gamma)
        t = IlluminationMap(values=np.ones((4, 4)))
        np.testing.assert_allclose(recover_reflectance(frame, t, cfg), frame)


def test_recover_division_and_clip():
    cfg = LimeConfig(gamma=1.0)
    t = IlluminationMap(values=np.full((1, 1), 0.25))
    low = np.full((1, 1, 3), 0.2)
    np.testing.assert_allclose(recover_reflectance(low, t, cfg), 0.8)
    high = np.full((1, 1, 3), 0.9)
    np.testing.assert_allclose(recover_reflectance(high, t, cfg), 1.0)


def test_enhance_video_bright_is_identity():
    frames = np.zeros((2, 4, 4, 3), dtype=np.uint8)
    frames[..., 0] = 120
    frames[..., 1] = 255  # green fully lit -> T == 1
    frames[..., 2] = 40
    video = FrameSequence(frames=frames, fps=30.0)
    out = enhance_video_lime(video, TIGHT)
    assert np.array_equal(out.frames, frames)


def test_enhance_video_brightens_dim_scene():
    cfg = SynthConfig(duration_s=0.5, width=16, height=12, illum_scale=0.1, noise_sigma=0.01, seed=2)
    video, _, _ = generate_recording(cfg)
    out = enhance_video_lime(video, LimeConfig())
    box = BoundingBox(0, 0, video.width, video.height)
    track = RoiTrack(boxes=[box] * len(video))
    before = spatial_average(video, track).c[1].mean()
    after = spatial_average(out, track).c[1].mean()
    assert after >= 3 * before


def test_enhance_video_preserves_shape_and_fps():
    frames = np.random.default_rng(1).integers(0, 255, (1, 6, 5, 3), dtype=np.uint8)
    video = FrameSequence(frames=frames, fps=24.0)
    out = enhance_video_lime(video, LimeConfig())
    assert len(out) == 1 and out.fps == 24.0 and out.frames.shape == frames.shape


def test_histogram_equalize_uniform_unchanged():
    frame = np.full((3, 3, 3), 100, dtype=np.uint8)
    assert np.array_equal(histogram_equalize(frame), frame)


def test_histogram_equalize_forced_examples():
    # {0,0,255,255}: cdf(0)=2, cdf(255)=4, cdf_min=2
    frame = np.array([[0, 0], [255, 255]], dtype=np.uint8)[..., None].repeat(3, axis=2)
    assert np.array_equal(histogram_equalize(frame), frame)
    # {10,10,10,200}: cdf(10)=3, cdf(200)=4, cdf_min=3 -> {0,0,0,255}
    frame = np.array([[10, 10], [10, 200]], dtype=np.uint8)[..., None].repeat(3, axis=2)
    expected = np.array([[0, 0], [0, 255]], dtype=np.uint8)[..., None].repeat(3, axis=2)
    assert np.array_equal(histogram_equalize(frame), expected)


def test_histogram_equalize_preserves_rank_order():
    rng = np.random.default_rng(12)
    frame = rng.integers(0, 255, (8, 8, 3), dtype=np.uint8)
    out = histogram_equalize(frame)
    for ch in range(3):
        src = frame[..., ch].ravel()
        dst = out[..., ch].ravel()
        for v1 in np.unique(src):
            for v2 in np.unique(src):
                if v1 < v2:
                    assert dst[src == v1][0] <= dst[src == v2][0]
