"""Signal quality and accuracy metrics, spectrograms, report aggregation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import GroundTruthPpg
from .errors import ConfigError, LengthError, MetricError
from .traces import PulseSignal, WindowPlan, sliding_windows

SNR_CAP_DB = 60.0


@dataclass(frozen=True)
class SnrConfig:
    band: tuple = (0.7, 4.0)  # Hz, the 42..240 BPM range
    harmonic_half_width: float = 0.1  # Hz around each harmonic
    fft_resolution: float = 0.01  # Hz, reached by zero padding

    def __post_init__(self):
        if self.harmonic_half_width <= 0:
            raise ConfigError("harmonic_half_width must be positive")
        if not 0 < self.band[0] < self.band[1]:
            raise ConfigError("band must be increasing and positive")


@dataclass(frozen=True)
class Spectrogram:
    magnitudes: np.ndarray  # (n_windows, n_freqs)
    times_s: np.ndarray  # window start times
    freqs_bpm: np.ndarray
    ridge_bpm: np.ndarray  # per-window argmax frequency

    @property
    def n_columns(self) -> int:
        return self.magnitudes.shape[0]


def _padded_spectrum(x: np.ndarray, fps: float, resolution_hz: float, window: bool):
    """Magnitude spectrum of the mean-removed signal, zero padded so the bin
    spacing is at most ``resolution_hz``."""
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean()
    if window:
        x = x * np.hanning(x.shape[0])
    n = max(x.shape[0], int(math.ceil(fps / resolution_hz)))
    mags = np.abs(np.fft.rfft(x, n=n))
    freqs = np.fft.rfftfreq(n, d=1.0 / fps)
    return freqs, mags


def snr_db(pulse: PulseSignal, gt_hr_bpm: float, cfg: SnrConfig | None = None) -> float:
    """Harmonic-template SNR in dB.

    Power inside the bands around the HR fundamental and its double is
    compared against everything else inside the valid band. An empty
    off-template residue returns the +60 dB cap.
    """
    cfg = cfg or SnrConfig()
    x = np.asarray(pulse.samples, dtype=np.float64)
    if x.shape[0] < 5 * pulse.fps:
        raise LengthError("SNR needs at least 5 s of signal")
    if not np.any(x != 0):
        raise MetricError("SNR undefined for an all-zero pulse")
    f0 = gt_hr_bpm / 60.0
    lo, hi = cfg.band
    if not (lo <= f0 <= hi) and not (lo <= 2 * f0 <= hi):
        raise MetricError("reference HR lies outside the SNR band")
    freqs, mags = _padded_spectrum(x, pulse.fps, cfg.fft_resolution, window=True)
    power = mags * mags
    in_band = (freqs >= lo) & (freqs <= hi)
    w = cfg.harmonic_half_width
    template = np.zeros_like(in_band)
    for harmonic in (f0, 2 * f0):
        template |= (freqs >= harmonic - w) & (freqs <= harmonic + w)
    template &= in_band
    signal = float(power[template].sum())
    noise = float(power[in_band & ~template].sum())
    if noise <= 0.0:
        return SNR_CAP_DB
    return min(10.0 * math.log10(signal / noise), SNR_CAP_DB) if signal > 0 else -math.inf


def hr_from_window(window: np.ndarray, fps: float, band=(0.7, 2.5)) -> float:
    """Peak-frequency heart rate of one window, in BPM.

    Uses the Hann-tapered zero-padded periodogram (taper keeps out-of-band
    leakage from shadowing faint in-band peaks). Resolution is at most
    0.5 BPM via zero padding; near-ties (within 1e-9 relative) resolve
    toward the lower frequency.
    """
    x = np.asarray(window, dtype=np.float64)
    if x.shape[0] < 5 * fps:
        raise LengthError("HR estimation needs at least 5 s windows")
    if not np.any(x != 0):
        raise MetricError("HR undefined for an all-zero window")
    resolution_hz = 0.5 / 60.0
    freqs, mags = _padded_spectrum(x, fps, resolution_hz, window=True)
    sel = np.nonzero((freqs >= band[0]) & (freqs <= band[1]))[0]
    if sel.size == 0:
        raise MetricError("band contains no frequency bins")
    m = mags[sel]
    peak = float(m.max())
    if peak <= 0.0:
        raise MetricError("window has no spectral content inside the band")
    candidates = np.nonzero(m >= peak * (1.0 - 1e-9))[0]
    return float(freqs[sel[candidates[0]]] * 60.0)


def mae(est, gt) -> float:
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape or est.size == 0:
        raise MetricError("estimate and reference must have equal nonzero length")
    return float(np.mean(np.abs(est - gt)))


def rmse(est, gt) -> float:
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape or est.size == 0:
        raise MetricError("estimate and reference must have equal nonzero length")
    return float(np.sqrt(np.mean((est - gt) ** 2)))


def spectrogram(
    signal: np.ndarray,
    fps: float,
    plan: WindowPlan | None = None,
    max_bpm: float = 300.0,
) -> Spectrogram:
    """Short-time Hann-windowed magnitude spectrogram up to ``max_bpm``."""
    plan = plan or WindowPlan()
    windows = sliding_windows(signal, fps, plan)
    resolution_hz = 0.5 / 60.0
    columns = []
    freqs = None
    for _, win in windows:
        f, m = _padded_spectrum(win, fps, resolution_hz, window=True)
        keep = f * 60.0 <= max_bpm
        if freqs is None:
            freqs = f[keep] * 60.0
        columns.append(m[keep])
    magnitudes = np.stack(columns)
    hop = int(round(plan.hop_s * fps))
    times = np.array([start / fps for start, _ in windows], dtype=np.float64)
    assert hop > 0
    ridge = freqs[np.argmax(magnitudes, axis=1)]
    return Spectrogram(magnitudes=magnitudes, times_s=times, freqs_bpm=freqs, ridge_bpm=ridge)


def reference_hr_series(gt: GroundTruthPpg, plan: WindowPlan, band=(0.7, 2.5)) -> np.ndarray:
    """Per-window reference HR from the contact PPG (or its HR column)."""
    win = int(round(plan.win_s * gt.sample_rate))
    hop = int(round(plan.hop_s * gt.sample_rate))
    n = (len(gt.samples) - win) // hop + 1
    if n < 1:
        raise LengthError("ground truth shorter than one window")
    if gt.hr_bpm is not None:
        hr = np.asarray(gt.hr_bpm, dtype=np.float64)
        return np.array([np.nanmean(hr[k * hop : k * hop + win]) for k in range(n)])
    return np.array(
        [hr_from_window(gt.samples[k * hop : k * hop + win], gt.sample_rate, band) for k in range(n)]
    )


def evaluate_video(
    pulse: PulseSignal,
    gt: GroundTruthPpg,
    plan: WindowPlan | None = None,
    snr_cfg: SnrConfig | None = None,
) -> dict:
    """Windowed HR accuracy plus full-length SNR for one extracted pulse.

    Window k of the pulse is compared against window k of the reference
    (both start at k * hop seconds); SNR is taken against the median
    reference HR.
    """
    plan = plan or WindowPlan()
    est = np.array(
        [hr_from_window(win, pulse.fps) for _, win in sliding_windows(pulse.samples, pulse.fps, plan)]
    )
    ref = reference_hr_series(gt, plan)
    n = min(est.shape[0], ref.shape[0])
    if n < 1:
        raise LengthError("no complete windows to evaluate")
    est, ref = est[:n], ref[:n]
    return {
        "snr_db": snr_db(pulse, float(np.median(ref)), snr_cfg),
        "mae_bpm": mae(est, ref),
        "rmse_bpm": rmse(est, ref),
        "n_windows": int(n),
    }


REPORT_COLUMNS = ("lux", "method", "enhancement", "snr_db", "mae_bpm", "rmse_bpm", "mean_iou", "n_windows")


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)  # dicts keyed by REPORT_COLUMNS

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [
                        f"{row['lux']:.4f}",
                        row["method"],
                        row["enhancement"],
                        f"{row['snr_db']:.6f}",
                        f"{row['mae_bpm']:.6f}",
                        f"{row['rmse_bpm']:.6f}",
                        "" if row.get("mean_iou") is None else f"{row['mean_iou']:.6f}",
                        row["n_windows"],
                    ]
                )


def aggregate_report(rows) -> EvalReport:
    """Group rows by (lux, method, enhancement) and average the metrics.

    Output order is deterministic: lux ascending, then method, then
    enhancement. ``n_windows`` sums over the group; ``mean_iou`` averages
    the rows that carry one.
    """
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["lux"], row["method"], row["enhancement"]), []).append(row)
    report = EvalReport()
    for key in sorted(groups):
        members = groups[key]
        ious = [r["mean_iou"] for r in members if r.get("mean_iou") is not None]
        report.rows.append(
            {
                "lux": key[0],
                "method": key[1],
                "enhancement": key[2],
                "snr_db": float(np.mean([r["snr_db"] for r in members])),
                "mae_bpm": float(np.mean([r["mae_bpm"] for r in members])),
                "rmse_bpm": float(np.mean([r["rmse_bpm"] for r in members])),
                "mean_iou": float(np.mean(ious)) if ious else None,
                "n_windows": int(sum(r["n_windows"] for r in members)),
            }
        )
    return report
