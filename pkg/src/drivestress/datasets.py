"""Dataset manifests, annotation adapters, extraction, and synthetic data.

Trace files always use the canonical ``time_s,value`` CSV layout, one file
per (drive, modality). Annotation handling differs per source:

    generic        segments CSV ``start_s,end_s,condition`` or score CSV
                   ``time_s,score`` with scores already in [0, 1]
    drivedb        marker CSV ``time_s,marker``; rising edges split the
                   recording into intervals labeled by the drive protocol
                   (default rest,city,highway,city,highway,city,rest)
    hcilab         score CSV with raw video ratings 0..128, min-max
                   normalized per drive
    affectiveroad  score CSV with slider values 0..1, min-max normalized
                   per drive

The public recordings themselves are not redistributed here; point the
manifest at your local copies converted to the canonical trace layout.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import DriveStressError, InvalidParameterError, SchemaError
from .features import (
    WindowInstance,
    eda_features,
    hr_features,
    label_from_score,
    label_from_segments,
    slide_windows,
    window_score,
)
from .signal import EDA, HR, SignalTrace, load_trace_csv, lowpass_filter, minmax_normalize

ADAPTERS = ("generic", "drivedb", "hcilab", "affectiveroad")
ANNOTATION_KINDS = ("segments", "score")
DEFAULT_DRIVEDB_PROTOCOL = ("rest", "city", "highway", "city", "highway", "city", "rest")


@dataclass(frozen=True)
class DriveEntry:
    drive_id: str
    eda_path: Path
    hr_path: Path
    annotation_path: Path
    annotation_kind: str
    eda_sample_rate: float
    hr_sample_rate: float
    protocol: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Manifest:
    dataset_id: str
    adapter: str
    drives: tuple[DriveEntry, ...]


def load_manifest(path: str | Path) -> Manifest:
    """Parse and validate a dataset manifest; all referenced files must exist."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: cannot read manifest: {exc}") from exc
    for key in ("dataset_id", "drives"):
        if key not in doc:
            raise SchemaError(f"{path}: manifest missing key {key!r}")
    adapter = doc.get("adapter", "generic")
    if adapter not in ADAPTERS:
        raise SchemaError(f"{path}: unknown adapter {adapter!r}; expected one of {ADAPTERS}")
    base = path.parent
    drives = []
    seen = set()
    for i, entry in enumerate(doc["drives"]):
        required = {
            "drive_id",
            "eda_path",
            "hr_path",
            "annotation_path",
            "annotation_kind",
            "eda_sample_rate",
            "hr_sample_rate",
        }
        missing = required - set(entry)
        if missing:
            raise SchemaError(f"{path}: drive entry {i} missing keys {sorted(missing)}")
        if entry["annotation_kind"] not in ANNOTATION_KINDS:
            raise SchemaError(
                f"{path}: drive entry {i}: annotation_kind must be one of "
                f"{ANNOTATION_KINDS}, got {entry['annotation_kind']!r}"
            )
        drive_id = str(entry["drive_id"])
        if drive_id in seen:
            raise SchemaError(f"{path}: duplicate drive_id {drive_id!r}")
        seen.add(drive_id)
        protocol = None
        if "protocol" in entry:
            protocol = tuple(p.strip() for p in str(entry["protocol"]).split(",") if p.strip())
        resolved = DriveEntry(
            drive_id=drive_id,
            eda_path=base / entry["eda_path"],
            hr_path=base / entry["hr_path"],
            annotation_path=base / entry["annotation_path"],
            annotation_kind=entry["annotation_kind"],
            eda_sample_rate=float(entry["eda_sample_rate"]),
            hr_sample_rate=float(entry["hr_sample_rate"]),
            protocol=protocol,
        )
        for p in (resolved.eda_path, resolved.hr_path, resolved.annotation_path):
            if not p.exists():
                raise SchemaError(f"{path}: referenced file does not exist: {p}")
        drives.append(resolved)
    return Manifest(dataset_id=str(doc["dataset_id"]), adapter=adapter, drives=tuple(drives))


def _read_two_column_csv(path: Path, columns: tuple[str, str]) -> tuple[np.ndarray, np.ndarray]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(columns):
            raise SchemaError(
                f"{path}: expected header {','.join(columns)!r}, "
                f"got {','.join(header) if header else '<empty>'!r}"
            )
        a, b = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise SchemaError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                a.append(float(row[0]))
                b.append(float(row[1]))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: non-numeric entry {row!r}") from exc
    return np.array(a), np.array(b)


def load_segments_csv(path: str | Path) -> list[tuple[float, float, str]]:
    """Canonical condition segments: ``start_s,end_s,condition``."""
    path = Path(path)
    expected = ["start_s", "end_s", "condition"]
    segments = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != expected:
            raise SchemaError(
                f"{path}: expected header 'start_s,end_s,condition', "
                f"got {','.join(header) if header else '<empty>'!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise SchemaError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                start, end = float(row[0]), float(row[1])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: non-numeric bounds {row!r}") from exc
            if end <= start:
                raise SchemaError(f"{path}:{lineno}: segment end {end} <= start {start}")
            segments.append((start, end, row[2].strip()))
    return segments


def load_score_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Canonical score annotation: ``time_s,score``."""
    return _read_two_column_csv(Path(path), ("time_s", "score"))


def drivedb_segments(
    path: str | Path,
    t_start: float,
    t_end: float,
    protocol: tuple[str, ...] = DEFAULT_DRIVEDB_PROTOCOL,
) -> list[tuple[float, float, str]]:
    """Convert a drivedb marker channel into condition segments.

    Rising edges of the marker split [t_start, t_end] into intervals that
    must match the protocol sequence length exactly.
    """
    times, marker = _read_two_column_csv(Path(path), ("time_s", "marker"))
    if len(times) == 0:
        raise SchemaError(f"{path}: marker file is empty")
    level = marker > 0.5 * (marker.max() + marker.min()) if marker.max() > marker.min() else marker > 0.5
    edges = times[1:][level[1:] & ~level[:-1]]
    boundaries = [t_start] + [float(t) for t in edges] + [t_end]
    n_intervals = len(boundaries) - 1
    if n_intervals != len(protocol):
        raise SchemaError(
            f"{path}: marker edges produce {n_intervals} intervals but the protocol "
            f"has {len(protocol)} conditions ({','.join(protocol)}); "
            f"edges at {[round(float(t), 1) for t in edges]}"
        )
    return [
        (boundaries[i], boundaries[i + 1], protocol[i])
        for i in range(n_intervals)
    ]


def _normalize_scores(path: Path, scores: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if np.min(scores) < lo - 1e-9 or np.max(scores) > hi + 1e-9:
        raise SchemaError(
            f"{path}: scores outside the documented range [{lo:g}, {hi:g}]: "
            f"min {np.min(scores):g}, max {np.max(scores):g}"
        )
    smin, smax = float(np.min(scores)), float(np.max(scores))
    if smax == smin:
        raise SchemaError(f"{path}: constant score {smin:g}; cannot min-max normalize")
    return (scores - smin) / (smax - smin)


def load_annotation(
    entry: DriveEntry,
    adapter: str,
    t_start: float,
    t_end: float,
):
    """Return ('segments', segments) or ('score', (times, values in [0,1]))."""
    if entry.annotation_kind == "segments":
        if adapter == "drivedb":
            protocol = entry.protocol or DEFAULT_DRIVEDB_PROTOCOL
            return "segments", drivedb_segments(entry.annotation_path, t_start, t_end, protocol)
        return "segments", load_segments_csv(entry.annotation_path)
    times, scores = load_score_csv(entry.annotation_path)
    if adapter == "hcilab":
        scores = _normalize_scores(entry.annotation_path, scores, 0.0, 128.0)
    elif adapter == "affectiveroad":
        scores = _normalize_scores(entry.annotation_path, scores, 0.0, 1.0)
    else:
        if len(scores) and (np.min(scores) < -1e-9 or np.max(scores) > 1 + 1e-9):
            raise SchemaError(
                f"{entry.annotation_path}: generic scores must already lie in [0, 1]"
            )
    return "score", (times, scores)


def extract_drive(
    entry: DriveEntry,
    adapter: str,
    dataset_id: str,
    config: PipelineConfig,
) -> tuple[list[WindowInstance], list[dict]]:
    """Condition, window, featurize, and label one drive.

    Windows that cannot be labeled or featurized are dropped and logged,
    never imputed.
    """
    eda_raw = load_trace_csv(entry.eda_path, entry.drive_id, EDA, entry.eda_sample_rate)
    hr_raw = load_trace_csv(entry.hr_path, entry.drive_id, HR, entry.hr_sample_rate)

    eda = minmax_normalize(
        lowpass_filter(eda_raw, config.eda_cutoff_hz, order=config.filter_order)
    )
    hr = minmax_normalize(hr_raw)

    t_start = max(eda.times[0], hr.times[0])
    t_end = min(eda.times[-1], hr.times[-1])
    kind, annotation = load_annotation(entry, adapter, t_start, t_end)

    instances: list[WindowInstance] = []
    dropped: list[dict] = []
    for window in slide_windows(eda, hr, config.window_seconds, config.window_overlap):
        try:
            eda_vec = eda_features(
                window.eda_values,
                entry.eda_sample_rate,
                slope_threshold=config.peak_slope_threshold,
                min_amplitude=config.peak_min_amplitude,
                smooth_seconds=config.peak_smooth_seconds,
            )
            hr_vec = hr_features(window.hr_values)
            score = None
            if kind == "segments":
                label = label_from_segments(window.start, window.duration, annotation)
            else:
                times, values = annotation
                score = window_score(times, values, window.start, window.duration)
                label = label_from_score(score)
        except DriveStressError as exc:
            dropped.append(
                {
                    "drive_id": entry.drive_id,
                    "start_s": window.start,
                    "reason": type(exc).__name__,
                    "detail": str(exc),
                }
            )
            continue
        instances.append(
            WindowInstance(
                drive_id=entry.drive_id,
                start=window.start,
                duration=window.duration,
                eda_features=eda_vec,
                hr_features=hr_vec,
                label=label,
                score=score,
                dataset_id=dataset_id,
            )
        )
    return instances, dropped


def extract_dataset(
    manifest: Manifest,
    config: PipelineConfig,
) -> tuple[list[WindowInstance], dict]:
    """Run extraction for every drive; fail only if no drive succeeds."""
    instances: list[WindowInstance] = []
    log = {"drives": [], "dropped_windows": [], "errors": []}
    ok = 0
    for entry in manifest.drives:
        try:
            drive_instances, dropped = extract_drive(entry, manifest.adapter, manifest.dataset_id, config)
        except DriveStressError as exc:
            log["errors"].append(
                {"drive_id": entry.drive_id, "error": type(exc).__name__, "detail": str(exc)}
            )
            continue
        ok += 1
        instances.extend(drive_instances)
        log["dropped_windows"].extend(dropped)
        log["drives"].append(
            {"drive_id": entry.drive_id, "windows": len(drive_instances), "dropped": len(dropped)}
        )
    if ok == 0:
        raise SchemaError(
            "extraction failed for every drive: "
            + "; ".join(f"{e['drive_id']}: {e['detail']}" for e in log["errors"])
        )
    return instances, log


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

_CONDITION_EDA_LEVEL = {"rest": 0.0, "highway": 1.0, "city": 2.2}
_CONDITION_HR_LEVEL = {"rest": 0.0, "highway": 6.0, "city": 14.0}
_CONDITION_SCORE = {"rest": 0.1, "highway": 0.5, "city": 0.9}


def synth_segments(duration: float) -> list[tuple[float, float, str]]:
    third = duration / 3.0
    return [
        (0.0, third, "rest"),
        (third, 2.0 * third, "highway"),
        (2.0 * third, duration, "city"),
    ]


def _condition_at(t: np.ndarray, segments) -> list[str]:
    out = []
    for ti in t:
        cond = segments[-1][2]
        for start, end, c in segments:
            if start <= ti < end:
                cond = c
                break
        out.append(cond)
    return out


def synth_drive_signals(
    drive_id: str,
    duration: float = 120.0,
    seed: int = 0,
    eda_sample_rate: float = 16.0,
    hr_sample_rate: float = 1.0,
    startle_rate_city: float = 4.0,
) -> tuple[SignalTrace, SignalTrace, list[tuple[float, float, str]]]:
    """One synthetic drive: EDA with startles, HR with condition shifts."""
    rng = np.random.default_rng(seed)
    segments = synth_segments(duration)

    t_eda = np.arange(0.0, duration + 0.5 / eda_sample_rate, 1.0 / eda_sample_rate)
    conds = _condition_at(t_eda, segments)
    base = 2.0 + np.array([_CONDITION_EDA_LEVEL[c] for c in conds])
    eda_values = base + 0.05 * np.sin(2 * np.pi * t_eda / 60.0) + 0.02 * rng.standard_normal(len(t_eda))
    for start, end, cond in segments:
        rate = startle_rate_city if cond == "city" else (1.0 if cond == "highway" else 0.2)
        n_peaks = rng.poisson(rate * (end - start) / 60.0)
        for _ in range(n_peaks):
            onset = rng.uniform(start, max(start + 1e-6, end - 8.0))
            amp = rng.uniform(0.3, 0.8)
            rise, tau = 1.0, 3.0
            rel = t_eda - onset
            shape = np.where(
                rel < 0,
                0.0,
                np.where(rel < rise, rel / rise, np.exp(-(rel - rise) / tau)),
            )
            eda_values = eda_values + amp * shape

    t_hr = np.arange(0.0, duration + 0.5 / hr_sample_rate, 1.0 / hr_sample_rate)
    hr_conds = _condition_at(t_hr, segments)
    hr_values = (
        70.0
        + np.array([_CONDITION_HR_LEVEL[c] for c in hr_conds])
        + 1.5 * rng.standard_normal(len(t_hr))
    )

    eda = SignalTrace(drive_id, EDA, eda_sample_rate, t_eda, eda_values)
    hr = SignalTrace(drive_id, HR, hr_sample_rate, t_hr, hr_values)
    return eda, hr, segments


def write_synth_dataset(
    out_dir: str | Path,
    n_drives: int = 3,
    duration: float = 120.0,
    seed: int = 0,
    annotation_kind: str = "segments",
) -> Path:
    """Write a complete synthetic dataset + manifest; returns the manifest path."""
    if annotation_kind not in ANNOTATION_KINDS:
        raise InvalidParameterError(
            f"annotation kind must be one of {ANNOTATION_KINDS}, got {annotation_kind!r}"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_drives):
        drive_id = f"drive{i + 1:02d}"
        eda, hr, segments = synth_drive_signals(drive_id, duration=duration, seed=seed + i)
        eda_path = out_dir / f"{drive_id}_eda.csv"
        hr_path = out_dir / f"{drive_id}_hr.csv"
        _write_trace_csv(eda, eda_path)
        _write_trace_csv(hr, hr_path)
        if annotation_kind == "segments":
            ann_path = out_dir / f"{drive_id}_segments.csv"
            with ann_path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["start_s", "end_s", "condition"])
                for start, end, cond in segments:
                    writer.writerow([f"{start:.3f}", f"{end:.3f}", cond])
        else:
            ann_path = out_dir / f"{drive_id}_score.csv"
            t = np.arange(0.0, duration + 0.5, 1.0)
            conds = _condition_at(t, segments)
            scores = np.array([_CONDITION_SCORE[c] for c in conds])
            with ann_path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["time_s", "score"])
                for ti, si in zip(t, scores):
                    writer.writerow([f"{ti:.3f}", f"{si:.6f}"])
        entries.append(
            {
                "drive_id": drive_id,
                "eda_path": eda_path.name,
                "hr_path": hr_path.name,
                "annotation_path": ann_path.name,
                "annotation_kind": annotation_kind,
                "eda_sample_rate": eda.sample_rate,
                "hr_sample_rate": hr.sample_rate,
            }
        )
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps(
            {"dataset_id": "synth", "adapter": "generic", "drives": entries},
            indent=2,
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    return manifest_path


def _write_trace_csv(trace: SignalTrace, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "value"])
        for t, v in zip(trace.times, trace.values):
            writer.writerow([f"{t:.6f}", f"{v:.6f}"])


def make_two_profile_instances(
    n_drives: int = 40,
    windows_per_drive: int = 50,
    seed: int = 0,
    shift: float = 0.3,
    noise: float = 0.06,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict[str, int]]:
    """Feature-level dataset with view informativeness swapped across profiles.

    Profile 1 drives carry their label in the EDA view; profile 2 drives in
    the HR view. The uninformative view gets the same bimodal marginal via an
    independent coin, so pooling all drives leaves the two views mutually
    contradictory and caps drive-agnostic accuracy well below the per-profile
    optimum. Labels are exactly balanced within each drive.
    """
    from .features import N_FEATURES
    from .kernels import EDA_VIEW, HR_VIEW

    if windows_per_drive % 2 != 0:
        raise InvalidParameterError("windows_per_drive must be even for exact balance")
    rng = np.random.default_rng(seed)
    rows, ys, drive_col = [], [], []
    profile_of: dict[str, int] = {}
    for d in range(n_drives):
        drive_id = f"drive{d + 1:02d}"
        profile = 1 if d < n_drives // 2 else 2
        profile_of[drive_id] = profile
        labels = np.array([1.0] * (windows_per_drive // 2) + [-1.0] * (windows_per_drive // 2))
        rng.shuffle(labels)
        for y_i in labels:
            coin = rng.choice([-1.0, 1.0])
            x = np.empty(N_FEATURES)
            informative = 0.5 + shift * y_i + noise * rng.standard_normal(N_FEATURES)
            distractor = 0.5 + shift * coin + noise * rng.standard_normal(N_FEATURES)
            if profile == 1:
                x[EDA_VIEW] = informative[EDA_VIEW]
                x[HR_VIEW] = distractor[HR_VIEW]
            else:
                x[EDA_VIEW] = distractor[EDA_VIEW]
                x[HR_VIEW] = informative[HR_VIEW]
            rows.append(np.clip(x, 0.0, 1.0))
            ys.append(y_i)
            drive_col.append(drive_id)
    return (
        np.array(rows),
        np.array(ys),
        np.array(drive_col, dtype=object),
        profile_of,
    )


def make_random_label_instances(
    n_instances: int = 200,
    n_drives: int = 10,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Featureless-noise dataset with balanced random labels."""
    from .features import N_FEATURES

    if n_instances % 2 != 0:
        raise InvalidParameterError("n_instances must be even for exact balance")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n_instances, N_FEATURES))
    y = np.array([1.0] * (n_instances // 2) + [-1.0] * (n_instances // 2))
    rng.shuffle(y)
    drives = np.array(
        [f"drive{(i % n_drives) + 1:02d}" for i in range(n_instances)], dtype=object
    )
    return X, y, drives
