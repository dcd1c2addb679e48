"""Pulse extractors: green channel, blind source separation, skin-plane
projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ConvergenceError, DegenerateInputError, DegenerateWindowError, LengthError
from .traces import PulseSignal, RawTraces, bandpass_butterworth, detrend_smoothness_prior, zscore

PULSE_BAND = (0.7, 2.5)  # Hz

# Fixed projection plane orthogonal to the standardized skin tone; both rows
# sum to zero, so constant traces project to exactly zero.
POS_PROJECTION = ((0.0, 1.0, -1.0), (-2.0, 1.0, 1.0))


@dataclass(frozen=True)
class PosConfig:
    window_s: float = 1.6
    projection: tuple = POS_PROJECTION

    def __post_init__(self):
        if self.window_s <= 0:
            raise ConfigError("window_s must be positive")
        p = np.asarray(self.projection, dtype=np.float64)
        if p.shape != (2, 3) or np.linalg.matrix_rank(p) != 2:
            raise ConfigError("projection must be a rank-2 2x3 matrix")


@dataclass(frozen=True)
class IcaConfig:
    n_components: int = 3
    max_iter: int = 500
    tol: float = 1e-6
    seed: int = 0
    band: tuple = PULSE_BAND
    damping: float = 0.7  # update mix-in factor; 1.0 is the plain iteration
    restarts: int = 4  # extra deterministic re-initializations on a stall

    def __post_init__(self):
        if self.n_components != 3:
            raise ConfigError("exactly 3 components are separated")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1]")


def band_power_fraction(signal: np.ndarray, fps: float, band=PULSE_BAND) -> float:
    """Fraction of (non-DC) spectral power inside the band."""
    x = np.asarray(signal, dtype=np.float64)
    spec = np.abs(np.fft.rfft(x - x.mean())) ** 2
    freqs = np.fft.rfftfreq(x.shape[0], d=1.0 / fps)
    total = float(spec[1:].sum())
    if total <= 0:
        return 0.0
    sel = (freqs >= band[0]) & (freqs <= band[1])
    return float(spec[sel].sum()) / total


def extract_green(traces: RawTraces) -> PulseSignal:
    """Green channel -> smoothness detrend -> zero-phase bandpass."""
    if traces.length < 3:
        raise LengthError("need at least 3 samples")
    detrended = detrend_smoothness_prior(traces.c[1], lam=100.0)
    filtered = bandpass_butterworth(detrended, traces.fps, *PULSE_BAND)
    return PulseSignal(samples=filtered, fps=traces.fps)


# ---------------------------------------------------------------------------
# ICA
# ---------------------------------------------------------------------------


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(w @ w.T)
    return vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T @ w


def _whiten(x: np.ndarray):
    """Whiten zero-mean rows; raises on a rank-deficient covariance."""
    cov = (x @ x.T) / x.shape[1]
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] <= 1e-10 * vals[-1]:
        raise DegenerateInputError("trace covariance is rank deficient")
    whitener = np.diag(1.0 / np.sqrt(vals)) @ vecs.T
    return whitener @ x, whitener


def _fastica_attempt(xw: np.ndarray, seed: int, cfg: IcaConfig):
    n = xw.shape[1]
    rng = np.random.default_rng(seed)
    w = _sym_decorrelate(rng.standard_normal((3, 3)))
    for _ in range(cfg.max_iter):
        wx = w @ xw
        g = np.tanh(wx)
        g_prime = (1.0 - g * g).mean(axis=1)
        w_plain = (g @ xw.T) / n - g_prime[:, None] * w
        # damp toward the previous iterate (sign-aligned per row, so the
        # +-w ambiguity cannot cancel the step); fixed points are unchanged
        # and limit cycles on noise-dominated data are suppressed
        signs = np.sign(np.sum(w_plain * w, axis=1))
        signs[signs == 0] = 1.0
        w_new = _sym_decorrelate(cfg.damping * signs[:, None] * w_plain + (1 - cfg.damping) * w)
        delta = float(np.max(np.abs(np.abs(np.sum(w_new * w, axis=1)) - 1.0)))
        w = w_new
        if delta < cfg.tol:
            return w
    return None


def fastica_components(x: np.ndarray, cfg: IcaConfig) -> np.ndarray:
    """Fixed-point negentropy ICA (log-cosh contrast, symmetric updates).

    ``x`` holds zero-mean rows. Returns unit-variance source estimates,
    mutually uncorrelated, one per row. Deterministic for a fixed seed;
    a stalled iteration is retried from derived seeds before giving up.
    """
    xw, _ = _whiten(x - x.mean(axis=1, keepdims=True))
    for attempt in range(cfg.restarts + 1):
        w = _fastica_attempt(xw, cfg.seed + 7919 * attempt, cfg)
        if w is not None:
            return w @ xw
    raise ConvergenceError(
        f"ICA did not converge within {cfg.max_iter} iterations ({cfg.restarts + 1} starts)"
    )


def extract_ica(traces: RawTraces, cfg: IcaConfig | None = None) -> PulseSignal:
    """Detrend, standardize and unmix the traces; keep the component with
    the largest spectral power fraction inside the pulse band."""
    cfg = cfg or IcaConfig()
    if traces.length < 90:
        raise LengthError("ICA needs at least 90 samples")
    detrended = np.stack([detrend_smoothness_prior(row, lam=100.0) for row in traces.c])
    standardized = np.stack([zscore(row) for row in detrended])
    components = fastica_components(standardized, cfg)
    fractions = [band_power_fraction(comp, traces.fps, cfg.band) for comp in components]
    selected = components[int(np.argmax(fractions))]
    # orient the pulse along the green trace
    corr = float(np.dot(selected, standardized[1]))
    if corr < 0:
        selected = -selected
    filtered = bandpass_butterworth(selected, traces.fps, *cfg.band)
    return PulseSignal(samples=filtered, fps=traces.fps)


# ---------------------------------------------------------------------------
# POS
# ---------------------------------------------------------------------------


def pos_overlap_add(traces: RawTraces, cfg: PosConfig | None = None) -> np.ndarray:
    """Raw overlap-add output of the windowed projection (no bandpass)."""
    cfg = cfg or PosConfig()
    lw = int(round(cfg.window_s * traces.fps))
    if traces.length < lw:
        raise LengthError(f"need at least one {cfg.window_s} s window")
    proj = np.asarray(cfg.projection, dtype=np.float64)
    h, bad = kernels.pos_overlap_add(traces.c, proj, lw)
    if bad >= 0:
        raise DegenerateWindowError(f"window starting at sample {bad} has a non-positive channel mean")
    return h

def extract_pos(traces: RawTraces, cfg: PosConfig | None = None) -> PulseSignal:
    h = pos_overlap_add(traces, cfg)
    filtered = bandpass_butterworth(h, traces.fps, *PULSE_BAND)
    return PulseSignal(samples=filtered, fps=traces.fps)


EXTRACTORS = {
    "green": lambda tr: extract_green(tr),
    "ica": lambda tr: extract_ica(tr),
    "pos": lambda tr: extract_pos(tr),
}
