"""Deterministic synthetic recordings: the oracle for end-to-end tests.

The scene is a flat skin-colored field whose channels breathe with a
two-harmonic pulse, dimmed multiplicatively by an illuminance scale, with
seeded per-pixel sensor noise added after dimming and optional 8-bit
quantization at the end. An optional textured patch translating rigidly
across the frame exercises the tracker.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .core import FrameSequence, GroundTruthPpg, RecordingMeta, to_quantized
from .errors import ConfigError


@dataclass(frozen=True)
class SynthConfig:
    fps: float = 30.0
    duration_s: float = 60.0
    width: int = 48
    height: int = 36
    hr_bpm: float = 72.0
    pulse_amp: tuple = (0.006, 0.03, 0.012)  # green-dominant R,G,B amplitudes
    base_color: tuple = (0.75, 0.62, 0.5)
    illum_scale: float = 1.0
    noise_sigma: float = 0.02
    second_harmonic: float = 0.3
    quantize: bool = True
    seed: int = 7
    motion: tuple | None = None  # (dx, dy) pixels per frame

    def __post_init__(self):
        if self.fps * self.duration_s < 1:
            raise ConfigError("need at least one frame")
        if any(a < 0 for a in self.pulse_amp):
            raise ConfigError("pulse amplitudes must be non-negative")
        if any(b + a > 1 for b, a in zip(self.base_color, self.pulse_amp)):
            raise ConfigError("base_color + pulse_amp must stay within [0, 1]")
        if not 0 < self.illum_scale <= 1:
            raise ConfigError("illum_scale must lie in (0, 1]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")

    @property
    def n_frames(self) -> int:
        return int(round(self.fps * self.duration_s))

    @property
    def lux(self) -> float:
        """Lux proxy recorded in metadata: 100 * illum_scale."""
        return 100.0 * self.illum_scale


def pulse_waveform(cfg: SynthConfig, t: np.ndarray) -> np.ndarray:
    f0 = cfg.hr_bpm / 60.0
    return np.sin(2 * np.pi * f0 * t) + cfg.second_harmonic * np.sin(4 * np.pi * f0 * t)


def _patch_geometry(cfg: SynthConfig):
    side_w = max(int(round(0.35 * cfg.width)), 2)
    side_h = max(int(round(0.35 * cfg.height)), 2)
    return cfg.width // 5, cfg.height // 5, side_w, side_h


def patch_box_at(cfg: SynthConfig, frame_index: int) -> tuple:
    """Ground-truth (x, y, w, h) of the moving patch at a given frame."""
    x0, y0, w, h = _patch_geometry(cfg)
    dx, dy = cfg.motion if cfg.motion else (0, 0)
    x = min(max(x0 + dx * frame_index, 0), cfg.width - w)
    y = min(max(y0 + dy * frame_index, 0), cfg.height - h)
    return float(x), float(y), float(w), float(h)


def generate_recording(cfg: SynthConfig) -> tuple[FrameSequence, GroundTruthPpg, RecordingMeta]:
    """Render the recording described by ``cfg``; fully seed-deterministic."""
    L = cfg.n_frames
    H, W = cfg.height, cfg.width
    t = np.arange(L) / cfg.fps
    p = pulse_waveform(cfg, t)
    base = np.asarray(cfg.base_color, dtype=np.float64)
    amps = np.asarray(cfg.pulse_amp, dtype=np.float64)

    children = np.random.SeedSequence(cfg.seed).spawn(L + 1)
    canvas = np.broadcast_to(base, (H, W, 3)).copy()
    texture = None
    if cfg.motion is not None:
        _, _, pw, ph = _patch_geometry(cfg)
        texture = np.random.default_rng(children[0]).uniform(0.15, 0.95, size=(ph, pw, 3))

    dtype = np.uint8 if cfg.quantize else np.float64
    frames = np.empty((L, H, W, 3), dtype=dtype)
    for i in range(L):
        field = canvas + amps * p[i]
        if texture is not None:
            x, y, pw, ph = patch_box_at(cfg, i)
            field = field.copy()
            field[int(y) : int(y) + int(ph), int(x) : int(x) + int(pw)] = texture + amps * p[i]
        frame = cfg.illum_scale * field
        if cfg.noise_sigma > 0:
            frame = frame + np.random.default_rng(children[i + 1]).normal(
                0.0, cfg.noise_sigma, size=(H, W, 3)
            )
        frame = np.clip(frame, 0.0, 1.0)
        frames[i] = to_quantized(frame) if cfg.quantize else frame

    video = FrameSequence(frames=frames, fps=cfg.fps)
    gt = GroundTruthPpg(samples=p, sample_rate=cfg.fps, hr_bpm=np.full(L, cfg.hr_bpm))
    meta = RecordingMeta(
        subject_id=f"synth-{cfg.seed}",
        lux=cfg.lux,
        duration_s=cfg.duration_s,
        roi_hint=patch_box_at(cfg, 0) if cfg.motion is not None else _centered_hint(cfg),
        landmarks_path=None,
    )
    return video, gt, meta


def _centered_hint(cfg: SynthConfig) -> tuple:
    w = max(round(cfg.width * 0.4), 1)
    h = max(round(cfg.height * 0.4), 1)
    return float((cfg.width - w) // 2), float((cfg.height - h) // 2), float(w), float(h)


def write_recording(recording, directory) -> Path:
    """Write (video, gt, meta) in the exact layout the loader reads."""
    video, gt, meta = recording
    if len(video) == 0:
        raise ConfigError("refusing to write an empty recording")
    root = Path(directory)
    frames_dir = root / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    payload = {
        "subject_id": meta.subject_id,
        "lux": meta.lux,
        "fps": video.fps,
        "duration_s": meta.duration_s,
    }
    if meta.roi_hint is not None:
        payload["roi_hint"] = list(meta.roi_hint)
    if meta.landmarks_path is not None:
        payload["landmarks_path"] = meta.landmarks_path
    (root / "meta.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    lines = ["t_s,ppg,hr_bpm"]
    hr = gt.hr_bpm
    for i, v in enumerate(gt.samples):
        hr_cell = "" if hr is None else repr(float(hr[i]))
        lines.append(f"{i / gt.sample_rate!r},{float(v)!r},{hr_cell}")
    (root / "gt.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    frames = video.frames if video.frames.dtype == np.uint8 else to_quantized(video.frames)
    for i in range(len(video)):
        Image.fromarray(frames[i], mode="RGB").save(frames_dir / f"frame_{i + 1:06d}.bmp")
    return root


def sweep_configs(base: SynthConfig, illum_scales, reps: int = 1):
    """One config per (scale, repetition), deterministically re-seeded."""
    out = []
    for scale in illum_scales:
        for rep in range(reps):
            seed = base.seed + 1009 * rep + int(round(scale * 1e6)) % 997
            out.append(replace(base, illum_scale=float(scale), seed=seed))
    return out
