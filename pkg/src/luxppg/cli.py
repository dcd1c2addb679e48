"""Pipeline runner and benchmark harness.

One command covers both modes: ``--input`` pointing at a single recording
directory (it contains ``meta.json``) runs the pipeline once per
enhancement/method pair; pointing at a dataset root sweeps every recording
under it. ``--synth config.json`` first renders synthetic recordings and
then evaluates them. Exit codes: 0 success, 1 runtime failure, 2 usage
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import enhance, metrics, roi, synth, traces
from .core import FrameSequence, load_recording
from .errors import LuxppgError
from .metrics import SnrConfig, Spectrogram, aggregate_report, evaluate_video, spectrogram
from .rppg import EXTRACTORS
from .traces import WindowPlan, spatial_average

ENHANCERS = ("none", "he", "lime")
METHODS = tuple(EXTRACTORS)


@dataclass
class RunConfig:
    input: Path | None = None
    enhancements: tuple = ("none",)
    methods: tuple = ("green",)
    out: Path = Path("report.csv")
    jobs: int = 1
    landmarks: Path | None = None
    roi_inset: float = 0.05
    seed: int | None = None
    emit_spectrogram: bool = False
    synth_config: Path | None = None
    window_plan: WindowPlan = field(default_factory=WindowPlan)
    snr_cfg: SnrConfig = field(default_factory=SnrConfig)
    lime_cfg: enhance.LimeConfig = field(default_factory=enhance.LimeConfig)
    search_radius: int = 16
    accept_threshold: float = 0.5


def _enhanced(video: FrameSequence, kind: str, cfg: RunConfig) -> FrameSequence:
    if kind == "none":
        return video
    if kind == "he":
        return enhance.equalize_video(video)
    if kind == "lime":
        return enhance.enhance_video_lime(video, cfg.lime_cfg)
    raise LuxppgError(f"unknown enhancement {kind!r}")


def _initial_box(video: FrameSequence, meta, cfg: RunConfig) -> roi.BoundingBox:
    """Priority: landmarks file, then the recording's ROI hint, then a
    centered default box."""
    landmarks = cfg.landmarks or (meta.landmarks_path if meta else None)
    if landmarks:
        lm = roi.load_landmarks(landmarks)
        return roi.roi_from_landmarks(lm, cfg.roi_inset)
    if meta is not None and meta.roi_hint is not None:
        x, y, w, h = meta.roi_hint
        return roi.BoundingBox(x, y, w, h)
    return roi.default_roi(video.height, video.width)


def run_pipeline(recording_dir, cfg: RunConfig, enhancement: str, method: str) -> dict:
    """Run enhance -> ROI -> traces -> extraction -> metrics on one recording."""
    video, gt, meta = load_recording(recording_dir)
    return _run_stages(video, gt, meta, cfg, enhancement, method, name=Path(recording_dir).name)


def _run_stages(video, gt, meta, cfg: RunConfig, enhancement: str, method: str, name: str) -> dict:
    enhanced = _enhanced(video, enhancement, cfg)
    initial = _initial_box(enhanced, meta, cfg)
    track = roi.track_roi(enhanced, initial, cfg.search_radius, cfg.accept_threshold)
    raw = spatial_average(enhanced, track)
    pulse = EXTRACTORS[method](raw)
    row = evaluate_video(pulse, gt, cfg.window_plan, cfg.snr_cfg)
    mean_iou = None
    if meta is not None and meta.roi_hint is not None and cfg.landmarks is None:
        hint = roi.BoundingBox(*meta.roi_hint)
        mean_iou = float(np.mean([roi.iou(b, hint) for b in track.boxes]))
    row.update(
        {
            "lux": meta.lux if meta else float("nan"),
            "method": method,
            "enhancement": enhancement,
            "mean_iou": mean_iou,
            "recording": name,
            "pulse": pulse,
        }
    )
    return row


def discover_recordings(root) -> list:
    root = Path(root)
    if (root / "meta.json").is_file():
        return [root]
    return sorted(d for d in root.iterdir() if d.is_dir() and (d / "meta.json").is_file())


def run_benchmark(root, cfg: RunConfig) -> metrics.EvalReport:
    """Cartesian sweep over recordings x enhancements x methods.

    Failures are reported on stderr with the stage context and skipped;
    the report holds per-(lux, method, enhancement) group means.
    """
    recordings = discover_recordings(root)
    if not recordings:
        raise LuxppgError(f"no recordings under {root}")

    units = []
    for rec in recordings:
        for enh in cfg.enhancements:
            units.append((rec, enh))

    def run_unit(unit):
        rec, enh = unit
        rows = []
        try:
            video, gt, meta = load_recording(rec)
            enhanced = _enhanced(video, enh, cfg)
            initial = _initial_box(enhanced, meta, cfg)
            track = roi.track_roi(enhanced, initial, cfg.search_radius, cfg.accept_threshold)
            raw = spatial_average(enhanced, track)
        except Exception as exc:  # noqa: BLE001 - harness must keep going
            print(f"[luxppg] {rec.name}/{enh}: preprocessing failed: {exc}", file=sys.stderr)
            return rows
        mean_iou = None
        if meta.roi_hint is not None and cfg.landmarks is None:
            hint = roi.BoundingBox(*meta.roi_hint)
            mean_iou = float(np.mean([roi.iou(b, hint) for b in track.boxes]))
        for method in cfg.methods:
            try:
                pulse = EXTRACTORS[method](raw)
                row = evaluate_video(pulse, gt, cfg.window_plan, cfg.snr_cfg)
            except Exception as exc:  # noqa: BLE001
                print(f"[luxppg] {rec.name}/{enh}/{method}: {exc}", file=sys.stderr)
                continue
            row.update(
                {
                    "lux": meta.lux,
                    "method": method,
                    "enhancement": enh,
                    "mean_iou": mean_iou,
                    "recording": rec.name,
                }
            )
            rows.append(row)
            if cfg.emit_spectrogram:
                spec = spectrogram(pulse.samples, pulse.fps, cfg.window_plan)
                stem = f"{rec.name}_{method}_{enh}_spectrogram"
                out_dir = Path(cfg.out).parent
                emit_spectrogram_svg(spec, out_dir / f"{stem}.svg")
                write_spectrogram_csv(spec, out_dir / f"{stem}.csv")
        return rows

    all_rows = []
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            for rows in pool.map(run_unit, units):
                all_rows.extend(rows)
    else:
        for unit in units:
            all_rows.extend(run_unit(unit))
    # deterministic reduction regardless of completion order
    all_rows.sort(key=lambda r: (r["lux"], r["method"], r["enhancement"], r["recording"]))
    return aggregate_report(all_rows)


# ---------------------------------------------------------------------------
# Spectrogram artifacts
# ---------------------------------------------------------------------------

_HEAT_STOPS = ((0.0, 0.0, 0.35), (0.0, 0.1, 1.0), (0.0, 0.9, 1.0), (1.0, 1.0, 0.0), (1.0, 0.0, 0.0))


def _heat_color(v: float) -> str:
    pos = v * (len(_HEAT_STOPS) - 1)
    i = min(int(pos), len(_HEAT_STOPS) - 2)
    frac = pos - i
    rgb = [
        round(255 * ((1 - frac) * _HEAT_STOPS[i][k] + frac * _HEAT_STOPS[i + 1][k]))
        for k in range(3)
    ]
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def emit_spectrogram_svg(spec: Spectrogram, path, cell_w: int = 12, max_rows: int = 120) -> Path:
    """Static SVG heat map, time left-to-right, 0..300 BPM bottom-to-top,
    one group per time column with its per-column peak marked."""
    if spec.n_columns == 0:
        raise LuxppgError("cannot plot an empty spectrogram")
    mags = spec.magnitudes
    n_freq = mags.shape[1]
    stride = max(1, int(np.ceil(n_freq / max_rows)))
    pad = (-n_freq) % stride
    pooled = np.pad(mags, ((0, 0), (0, pad)), mode="edge")
    pooled = pooled.reshape(mags.shape[0], -1, stride).max(axis=2)
    peak = pooled.max() or 1.0
    pooled = pooled / peak
    rows = pooled.shape[1]
    cell_h = 3
    height = rows * cell_h
    width = spec.n_columns * cell_w
    fmax = float(spec.freqs_bpm[-1])

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width + 60}" height="{height + 30}">',
        f'<rect width="{width + 60}" height="{height + 30}" fill="black"/>',
    ]
    for col in range(spec.n_columns):
        cells = []
        for r in range(rows):
            y = height - (r + 1) * cell_h
            cells.append(
                f'<rect x="{col * cell_w}" y="{y}" width="{cell_w}" height="{cell_h}" '
                f'fill="{_heat_color(float(pooled[col, r]))}"/>'
            )
        ridge_y = height - (spec.ridge_bpm[col] / fmax) * height
        cells.append(
            f'<text x="{col * cell_w + cell_w / 2}" y="{ridge_y:.1f}" fill="white" '
            f'font-size="8" text-anchor="middle">*</text>'
        )
        parts.append(f'<g class="col" data-t="{spec.times_s[col]:.3f}">' + "".join(cells) + "</g>")
    parts.append(
        f'<text x="{width + 4}" y="12" fill="white" font-size="9">{fmax:.0f} BPM</text>'
        f'<text x="{width + 4}" y="{height}" fill="white" font-size="9">0 BPM</text>'
        f'<text x="0" y="{height + 14}" fill="white" font-size="9">0 s</text>'
        f'<text x="{width - 30}" y="{height + 14}" fill="white" font-size="9">{spec.times_s[-1]:.0f} s</text>'
        "</svg>"
    )
    path = Path(path)
    path.write_text("\n".join(parts), encoding="utf-8")
    return path


def write_spectrogram_csv(spec: Spectrogram, path) -> Path:
    path = Path(path)
    header = "t_s," + ",".join(f"{f:.2f}" for f in spec.freqs_bpm)
    lines = [header]
    for i in range(spec.n_columns):
        lines.append(
            f"{spec.times_s[i]:.3f}," + ",".join(f"{v:.6e}" for v in spec.magnitudes[i])
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------


def _csv_choices(valid, label):
    def parse(text: str):
        items = tuple(s.strip() for s in text.split(",") if s.strip())
        if not items:
            raise argparse.ArgumentTypeError(f"empty {label} list")
        for item in items:
            if item not in valid:
                raise argparse.ArgumentTypeError(
                    f"invalid {label} {item!r} (choose from {', '.join(valid)})"
                )
        return items

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="luxppg",
        description="Low-light rPPG pipeline and illuminance benchmark harness.",
    )
    parser.add_argument("--input", type=Path, help="recording directory or dataset root")
    parser.add_argument(
        "--enhance",
        type=_csv_choices(ENHANCERS, "enhancement"),
        help="comma-separated subset of: " + ", ".join(ENHANCERS),
    )
    parser.add_argument(
        "--method",
        type=_csv_choices(METHODS, "method"),
        help="comma-separated subset of: " + ", ".join(METHODS),
    )
    parser.add_argument("--out", type=Path, help="report CSV path (default report.csv)")
    parser.add_argument("--jobs", type=int, help="parallel recordings (default 1)")
    parser.add_argument("--landmarks", type=Path, help="66-point x,y CSV for the first frame")
    parser.add_argument("--roi-inset", type=float, dest="roi_inset", help="ROI inset fraction")
    parser.add_argument("--seed", type=int, help="override synthetic base seed")
    parser.add_argument(
        "--emit-spectrogram",
        action="store_true",
        default=None,
        help="also write per-run spectrogram SVG/CSV next to the report",
    )
    parser.add_argument("--synth", type=Path, dest="synth", help="synthetic config JSON (generate-then-evaluate)")
    parser.add_argument("--config", type=Path, help="JSON file mirroring the flags; flags override it")
    return parser


_CONFIG_KEYS = {
    "input": Path,
    "enhance": str,
    "method": str,
    "out": Path,
    "jobs": int,
    "landmarks": Path,
    "roi_inset": float,
    "seed": int,
    "emit_spectrogram": bool,
    "synth": Path,
}


def _merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    merged = {}
    if args.config is not None:
        if not args.config.is_file():
            parser.error(f"config file not found: {args.config}")
        file_cfg = json.loads(args.config.read_text(encoding="utf-8"))
        for key, value in file_cfg.items():
            if key not in _CONFIG_KEYS:
                parser.error(f"unknown config key {key!r}")
            merged[key] = _CONFIG_KEYS[key](value)
        for key in ("enhance", "method"):
            if key in merged:
                valid = ENHANCERS if key == "enhance" else METHODS
                try:
                    merged[key] = _csv_choices(valid, key)(merged[key])
                except argparse.ArgumentTypeError as exc:
                    parser.error(str(exc))
    for key in _CONFIG_KEYS:
        flag_value = getattr(args, key)
        if flag_value is not None:
            merged[key] = flag_value
    return merged


def _generate_synth_dataset(config_path: Path, out_dir: Path, seed_override) -> Path:
    raw = json.loads(config_path.read_text(encoding="utf-8"))
    scales = raw.pop("illum_scales", None)
    reps = int(raw.pop("reps", 1))
    if seed_override is not None:
        raw["seed"] = seed_override
    for key in ("pulse_amp", "base_color", "motion"):
        if key in raw and raw[key] is not None:
            raw[key] = tuple(raw[key])
    base = synth.SynthConfig(**raw)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = synth.sweep_configs(base, scales, reps) if scales else [base]
    for cfg in configs:
        name = f"rec_lux{cfg.lux:08.3f}_s{cfg.seed}"
        synth.write_recording(synth.generate_recording(cfg), out_dir / name)
    return out_dir


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    opts = _merge_config(args, parser)

    if opts.get("input") is None and opts.get("synth") is None:
        parser.error("either --input or --synth is required")

    cfg = RunConfig(
        input=opts.get("input"),
        enhancements=opts.get("enhance", ("none",)),
        methods=opts.get("method", ("green",)),
        out=opts.get("out", Path("report.csv")),
        jobs=opts.get("jobs", 1),
        landmarks=opts.get("landmarks"),
        roi_inset=opts.get("roi_inset", 0.05),
        seed=opts.get("seed"),
        emit_spectrogram=bool(opts.get("emit_spectrogram", False)),
        synth_config=opts.get("synth"),
    )

    try:
        root = cfg.input
        if cfg.synth_config is not None:
            if not cfg.synth_config.is_file():
                parser.error(f"synth config not found: {cfg.synth_config}")
            dataset_dir = cfg.input or (Path(cfg.out).parent / "synth_recordings")
            root = _generate_synth_dataset(cfg.synth_config, Path(dataset_dir), cfg.seed)
        if not Path(root).exists():
            parser.error(f"input not found: {root}")
        if not discover_recordings(root):
            parser.error(f"no recordings under {root}")
        report = run_benchmark(root, cfg)
        if not report.rows:
            print("[luxppg] every run failed; no report rows", file=sys.stderr)
            return 1
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        report.write_csv(cfg.out)
        print(f"wrote {len(report.rows)} rows to {cfg.out}")
        return 0
    except LuxppgError as exc:
        print(f"[luxppg] error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:  # console script
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
