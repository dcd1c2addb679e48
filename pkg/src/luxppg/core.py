"""Domain types, 8-bit/float conversions and the on-disk recording loader.

A recording directory holds ``meta.json``, ``gt.csv`` (header
``t_s,ppg,hr_bpm``, the last column may be empty) and ``frames/`` with
``frame_000001.bmp`` (or ``.png``) numbered contiguously from 000001.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import FormatError, NotFoundError

_FRAME_RE = re.compile(r"^frame_(\d{6})\.(bmp|png)$")


@dataclass(frozen=True)
class FrameSequence:
    """Ordered RGB frames plus the frame rate.

    ``frames`` is an (L, H, W, 3) array, either uint8 (channel order R,G,B)
    or float in [0, 1] for in-memory unquantized video.
    """

    frames: np.ndarray
    fps: float

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[3] != 3:
            raise FormatError("frames must have shape (L, H, W, 3)")
        if len(self.frames) < 1:
            raise FormatError("a video needs at least one frame")
        if self.fps <= 0:
            raise FormatError("fps must be positive")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def frame_float(self, i: int) -> np.ndarray:
        """Frame ``i`` as float64 in [0, 1]."""
        f = self.frames[i]
        if f.dtype == np.uint8:
            return to_normalized(f)
        return np.asarray(f, dtype=np.float64)


@dataclass(frozen=True)
class GroundTruthPpg:
    """Contact PPG reference: amplitude series and optional per-sample HR."""

    samples: np.ndarray
    sample_rate: float
    hr_bpm: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise FormatError("sample_rate must be positive")
        if self.hr_bpm is not None:
            hr = np.asarray(self.hr_bpm, dtype=np.float64)
            if np.any(hr <= 0) or np.any(hr >= 300):
                raise FormatError("hr_bpm values must lie in (0, 300)")


@dataclass(frozen=True)
class RecordingMeta:
    subject_id: str
    lux: float
    duration_s: float
    roi_hint: Optional[tuple] = None  # (x, y, w, h)
    landmarks_path: Optional[str] = None

    def __post_init__(self):
        if self.lux <= 0:
            raise FormatError("lux must be positive")
        if self.duration_s <= 0:
            raise FormatError("duration_s must be positive")


def to_normalized(frame: np.ndarray) -> np.ndarray:
    """Map 8-bit values to float64 in [0, 1] via v / 255."""
    return np.asarray(frame, dtype=np.float64) / 255.0


def to_quantized(frame: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_normalized` with round-half-up quantization."""
    v = np.floor(np.asarray(frame, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(v, 0, 255).astype(np.uint8)


def _read_meta(path: Path) -> tuple[RecordingMeta, float]:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid meta.json: {exc}") from exc
    for key in ("subject_id", "lux", "fps", "duration_s"):
        if key not in raw:
            raise FormatError(f"meta.json missing key {key!r}")
    hint = raw.get("roi_hint")
    if hint is not None:
        if len(hint) != 4:
            raise FormatError("roi_hint must be [x, y, w, h]")
        hint = tuple(float(v) for v in hint)
    meta = RecordingMeta(
        subject_id=str(raw["subject_id"]),
        lux=float(raw["lux"]),
        duration_s=float(raw["duration_s"]),
        roi_hint=hint,
        landmarks_path=raw.get("landmarks_path"),
    )
    return meta, float(raw["fps"])


def _read_gt(path: Path) -> GroundTruthPpg:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t_s", "ppg", "hr_bpm"]:
            raise FormatError("gt.csv header must be t_s,ppg,hr_bpm")
        t, ppg, hr = [], [], []
        for row in reader:
            if not row:
                continue
            t.append(float(row[0]))
            ppg.append(float(row[1]))
            hr.append(float(row[2]) if len(row) > 2 and row[2].strip() else np.nan)
    if len(t) < 2:
        raise FormatError("gt.csv needs at least two samples")
    dt = np.diff(np.asarray(t))
    if np.any(dt <= 0):
        raise FormatError("gt.csv timestamps must increase")
    rate = 1.0 / float(np.median(dt))
    hr_arr = np.asarray(hr)
    hr_out = None if np.all(np.isnan(hr_arr)) else hr_arr
    return GroundTruthPpg(samples=np.asarray(ppg), sample_rate=rate, hr_bpm=hr_out)


def _read_frames(frames_dir: Path) -> np.ndarray:
    entries = []
    for p in frames_dir.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            entries.append((int(m.group(1)), p))
    if not entries:
        raise NotFoundError(f"no frame files in {frames_dir}")
    entries.sort()
    indices = [i for i, _ in entries]
    if indices[0] != 1 or indices != list(range(1, len(indices) + 1)):
        raise FormatError(f"frame indices must run 1..N without gaps, got {indices[:5]}...")
    frames = []
    shape = None
    for idx, p in entries:
        arr = np.asarray(Image.open(p).convert("RGB"), dtype=np.uint8)
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise FormatError(f"frame {idx} has shape {arr.shape}, expected {shape}")
        frames.append(arr)
    return np.stack(frames)


def load_recording(directory) -> tuple[FrameSequence, GroundTruthPpg, RecordingMeta]:
    """Load one recording directory.

    Raises :class:`NotFoundError` for missing files and :class:`FormatError`
    for layout violations (frame-index gaps, inconsistent dimensions, bad
    headers).
    """
    root = Path(directory)
    if not root.is_dir():
        raise NotFoundError(f"recording directory not found: {root}")
    meta_path = root / "meta.json"
    gt_path = root / "gt.csv"
    frames_dir = root / "frames"
    for p in (meta_path, gt_path, frames_dir):
        if not p.exists():
            raise NotFoundError(f"missing {p}")
    meta, fps = _read_meta(meta_path)
    gt = _read_gt(gt_path)
    frames = _read_frames(frames_dir)
    return FrameSequence(frames=frames, fps=fps), gt, meta
