import numpy as np
import pytest

from luxppg.core import GroundTruthPpg
from luxppg.errors import LengthError, MetricError
from luxppg.metrics import (
    SNR_CAP_DB,
    SnrConfig,
    aggregate_report,
    evaluate_video,
    hr_from_window,
    mae,
    rmse,
    snr_db,
    spectrogram,
)
from luxppg.traces import PulseSignal, WindowPlan

FPS = 30.0


def _tone(freq, seconds=20.0, fps=FPS, amp=1.0):
    t = np.arange(int(seconds * fps)) / fps
    return amp * np.sin(2 * np.pi * freq * t)


def test_snr_high_for_matching_tone():
    pulse = PulseSignal(samples=_tone(1.2), fps=FPS)
    assert snr_db(pulse, 72.0) >= 20.0


def test_snr_low_for_off_template_tone():
    pulse = PulseSignal(samples=_tone(1.8), fps=FPS)
    assert snr_db(pulse, 72.0) <= -10.0


def test_snr_white_noise_matches_flat_spectrum_expectation():
    cfg = SnrConfig()
    values = []
    for seed in range(100):
        x = np.random.default_rng(seed).normal(size=int(20 * FPS))
        values.append(snr_db(PulseSignal(samples=x, fps=FPS), 72.0, cfg))
    # template bins vs remaining band bins for a flat spectrum
    f0 = 72.0 / 60.0
    n = int(np.ceil(FPS / cfg.fft_resolution))
    freqs = np.fft.rfftfreq(n, d=1.0 / FPS)
    in_band = (freqs >= cfg.band[0]) & (freqs <= cfg.band[1])
    template = np.zeros_like(in_band)
    for h in (f0, 2 * f0):
        template |= (freqs >= h - cfg.harmonic_half_width) & (freqs <= h + cfg.harmonic_half_width)
    template &= in_band
    expected = 10 * np.log10(template.sum() / (in_band & ~template).sum())
    assert abs(np.mean(values) - expected) <= 3.0


def test_snr_increases_with_tone_amplitude():
    rng = np.random.default_rng(8)
    noise = 0.1 * rng.normal(size=int(20 * FPS))
    last = -np.inf
    for amp in (0.2, 0.5, 1.0, 2.0):
        v = snr_db(PulseSignal(samples=_tone(1.2, amp=amp) + noise, fps=FPS), 72.0)
        assert v > last
        last = v


def test_snr_pure_template_capped():
    # almost no off-template energy: huge but finite ratio, capped at +60
    pulse = PulseSignal(samples=_tone(1.2, seconds=60.0), fps=FPS)
    assert snr_db(pulse, 72.0) <= SNR_CAP_DB


def test_snr_errors():
    with pytest.raises(MetricError):
        snr_db(PulseSignal(samples=np.zeros(900), fps=FPS), 72.0)
    with pytest.raises(LengthError):
        snr_db(PulseSignal(samples=np.ones(30), fps=FPS), 72.0)


def test_hr_from_window_tone():
    assert hr_from_window(_tone(1.2, seconds=10.0), FPS) == pytest.approx(72.0, abs=0.5)


def test_hr_tie_breaks_low():
    window = _tone(1.0, seconds=10.0) + _tone(1.5, seconds=10.0)
    assert hr_from_window(window, FPS) == pytest.approx(60.0, abs=0.5)


def test_hr_band_restriction():
    window = _tone(0.5, seconds=10.0) + _tone(1.0, seconds=10.0, amp=0.05)
    assert hr_from_window(window, FPS, band=(0.7, 2.5)) == pytest.approx(60.0, abs=0.5)


def test_hr_scale_and_sign_invariance():
    w = _tone(1.3, seconds=10.0) + 0.2 * np.random.default_rng(2).normal(size=300)
    base = hr_from_window(w, FPS)
    assert hr_from_window(5.0 * w, FPS) == base
    assert hr_from_window(-w, FPS) == base


def test_hr_errors():
    with pytest.raises(MetricError):
        hr_from_window(np.zeros(300), FPS)
    with pytest.raises(LengthError):
        hr_from_window(np.ones(100), FPS)


def test_mae_rmse_values():
    assert mae([72, 75], [70, 80]) == pytest.approx(3.5)
    assert rmse([72, 75], [70, 80]) == pytest.approx(np.sqrt(29 / 2))
    assert mae([100], [90]) == 10
    assert mae([70, 80], [70, 80]) == 0
    assert rmse([70, 80], [70, 80]) == 0


def test_rmse_at_least_mae():
    rng = np.random.default_rng(77)
    for _ in range(25):
        est = rng.uniform(40, 200, 10)
        gt = rng.uniform(40, 200, 10)
        assert rmse(est, gt) >= mae(est, gt) - 1e-12


def test_mae_length_mismatch():
    with pytest.raises(MetricError):
        mae([1, 2], [1])
    with pytest.raises(MetricError):
        rmse([], [])


def test_spectrogram_stationary_tone_ridge():
    spec = spectrogram(_tone(1.2, seconds=60.0), FPS, WindowPlan())
    assert spec.n_columns == 51
    np.testing.assert_allclose(spec.ridge_bpm, 72.0, atol=0.5)
    assert spec.freqs_bpm[-1] <= 300.0
    assert np.all(spec.magnitudes >= 0)


def test_spectrogram_chirp_ridge_monotone():
    t = np.arange(int(60 * FPS)) / FPS
    # linear sweep 1.0 -> 2.0 Hz
    chirp = np.sin(2 * np.pi * (1.0 * t + 0.5 * (1.0 / 60.0) * t * t))
    spec = spectrogram(chirp, FPS, WindowPlan())
    assert np.all(np.diff(spec.ridge_bpm) >= -1e-9)


def test_spectrogram_too_short():
    with pytest.raises(LengthError):
        spectrogram(np.zeros(100), FPS, WindowPlan())


def _gt_from(samples, rate=FPS, hr=None):
    return GroundTruthPpg(samples=samples, sample_rate=rate, hr_bpm=hr)


def test_evaluate_identity_pulse():
    ppg = _tone(1.2, seconds=60.0)
    row = evaluate_video(PulseSignal(samples=ppg, fps=FPS), _gt_from(ppg), WindowPlan())
    assert row["mae_bpm"] == 0.0
    assert row["rmse_bpm"] == 0.0
    assert row["n_windows"] == 51


def test_evaluate_uses_hr_column_when_present():
    ppg = _tone(1.2, seconds=60.0)
    gt = _gt_from(ppg, hr=np.full(ppg.shape, 72.0))
    row = evaluate_video(PulseSignal(samples=ppg, fps=FPS), gt, WindowPlan())
    assert row["mae_bpm"] == pytest.approx(0.0, abs=0.5)


def test_evaluate_noise_pulse_has_large_error():
    ppg = _tone(1.2, seconds=60.0)
    maes = []
    for seed in range(10):
        noise = np.random.default_rng(seed).normal(size=ppg.shape)
        row = evaluate_video(PulseSignal(samples=noise, fps=FPS), _gt_from(ppg), WindowPlan())
        maes.append(row["mae_bpm"])
    assert np.mean(maes) > 10.0


def _row(lux, method, enh, mae_v=1.0, iou=None):
    return {
        "lux": lux,
        "method": method,
        "enhancement": enh,
        "snr_db": 5.0,
        "mae_bpm": mae_v,
        "rmse_bpm": mae_v + 1,
        "mean_iou": iou,
        "n_windows": 51,
    }


def test_aggregate_passthrough_and_mean():
    report = aggregate_report([_row(1.0, "pos", "none", 2.0), _row(1.0, "pos", "none", 4.0)])
    assert len(report.rows) == 1
    assert report.rows[0]["mae_bpm"] == 3.0
    assert report.rows[0]["n_windows"] == 102

    empty = aggregate_report([])
    assert empty.rows == []


def test_aggregate_order_is_deterministic():
    rows = [
        _row(10.0, "pos", "none"),
        _row(1.0, "ica", "lime"),
        _row(1.0, "green", "he"),
        _row(1.0, "green", "none"),
    ]
    report = aggregate_report(rows)
    keys = [(r["lux"], r["method"], r["enhancement"]) for r in report.rows]
    assert keys == sorted(keys)


def test_report_csv_schema(tmp_path):
    report = aggregate_report([_row(1.0, "pos", "none", iou=0.9)])
    out = tmp_path / "report.csv"
    report.write_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "lux,method,enhancement,snr_db,mae_bpm,rmse_bpm,mean_iou,n_windows"
    assert lines[1].startswith("1.0000,pos,none,")
