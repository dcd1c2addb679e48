"""ROI traces and shared signal conditioning.

Detrending follows the smoothness-priors construction: the trend is the
solution of ``(Id + lambda^2 D2' D2) trend = z`` with ``D2`` the second
difference operator, solved exactly through the pentadiagonal band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded
from scipy.signal import butter, filtfilt

from .core import FrameSequence
from .errors import ConfigError, DegenerateWindowError, GeometryError, LengthError
from .roi import RoiTrack


@dataclass(frozen=True)
class RawTraces:
    """Per-frame ROI channel means, rows ordered R,G,B."""

    c: np.ndarray  # (3, L)
    fps: float

    def __post_init__(self):
        if self.c.ndim != 2 or self.c.shape[0] != 3 or self.c.shape[1] < 1:
            raise ConfigError("traces must have shape (3, L), L >= 1")
        if self.fps <= 0:
            raise ConfigError("fps must be positive")

    @property
    def length(self) -> int:
        return self.c.shape[1]


@dataclass(frozen=True)
class PulseSignal:
    samples: np.ndarray
    fps: float


@dataclass(frozen=True)
class WindowPlan:
    win_s: float = 10.0
    hop_s: float = 1.0

    def __post_init__(self):
        if not self.win_s > self.hop_s > 0:
            raise ConfigError("need win_s > hop_s > 0")


def spatial_average(video: FrameSequence, track: RoiTrack) -> RawTraces:
    """Mean R,G,B over the (frame-clipped) ROI of every frame."""
    if len(track) != len(video):
        raise GeometryError("track length must equal the frame count")
    H, W = video.height, video.width
    c = np.empty((3, len(video)))
    for i, box in enumerate(track.boxes):
        try:
            ys, xs = box.pixel_slices(H, W)
        except GeometryError as exc:
            raise GeometryError(f"frame {i}: {exc}") from exc
        patch = video.frame_float(i)[ys, xs]
        c[:, i] = patch.reshape(-1, 3).mean(axis=0)
    return RawTraces(c=c, fps=video.fps)


def _detrend_band(n: int, lam: float) -> np.ndarray:
    """Upper band form of Id + lam^2 D2'D2 for scipy.linalg.solveh_banded."""
    lam2 = lam * lam
    main = np.full(n, 6.0)
    main[[0, -1]] = 1.0
    if n > 1:
        main[[1, -2]] = 5.0
    off1 = np.full(n - 1, -4.0)
    off1[[0, -1]] = -2.0
    off2 = np.full(n - 2, 1.0)
    ab = np.zeros((3, n))
    ab[0, 2:] = lam2 * off2
    ab[1, 1:] = lam2 * off1
    ab[2, :] = 1.0 + lam2 * main
    return ab


def detrend_smoothness_prior(signal: np.ndarray, lam: float = 100.0) -> np.ndarray:
    """Remove the smooth trend; constants and straight lines map to zero."""
    z = np.asarray(signal, dtype=np.float64)
    n = z.shape[0]
    if n < 3:
        raise LengthError("detrending needs at least 3 samples")
    trend = solveh_banded(_detrend_band(n, lam), z)
    return z - trend


def bandpass_butterworth(
    signal: np.ndarray,
    fps: float,
    low_hz: float = 0.7,
    high_hz: float = 2.5,
    order: int = 3,
) -> np.ndarray:
    """Zero-phase Butterworth bandpass (forward-backward application).

    Edge transients are suppressed with reflective padding of length
    3 * (2 * order + 1) samples.
    """
    if not 0 < low_hz < high_hz < fps / 2:
        raise ConfigError(f"band [{low_hz}, {high_hz}] Hz must sit inside (0, {fps / 2}) Hz")
    x = np.asarray(signal, dtype=np.float64)
    padlen = 3 * (2 * order + 1)
    if x.shape[0] <= max(padlen, 6 * order):
        raise LengthError(f"signal too short for order-{order} zero-phase filtering")
    b, a = butter(order, [low_hz, high_hz], btype="bandpass", fs=fps)
    return filtfilt(b, a, x, padtype="even", padlen=padlen)


def sliding_windows(signal: np.ndarray, fps: float, plan: WindowPlan):
    """(start_index, window) pairs for the plan's window/hop lengths."""
    x = np.asarray(signal)
    win = int(round(plan.win_s * fps))
    hop = int(round(plan.hop_s * fps))
    if x.shape[0] < win:
        raise LengthError(f"signal shorter than one {plan.win_s} s window")
    count = (x.shape[0] - win) // hop + 1
    return [(k * hop, x[k * hop : k * hop + win]) for k in range(count)]


def mean_normalize(window: np.ndarray) -> np.ndarray:
    """Divide every channel row by its own mean (each output row means 1)."""
    w = np.asarray(window, dtype=np.float64)
    means = w.mean(axis=1)
    if np.any(means <= 1e-12):
        raise DegenerateWindowError("channel mean is not positive")
    return w / means[:, None]


def zscore(signal: np.ndarray) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    sd = x.std()
    if sd <= 1e-15:
        return x - x.mean()
    return (x - x.mean()) / sd
