"""Windowed feature extraction and labeling.

Normalized traces are sliced into overlapping windows (30 s, 50% overlap by
default). Each window yields a 9-dim EDA view and a 5-dim HR view:

    EDA: mean, std, min, max, kurtosis, skewness,
         peak_count, peak_total_amplitude, peak_total_duration
    HR:  mean, std, min, max, rmssd

Moments use the population convention (std = sqrt(m2), skewness = m3/m2^1.5,
kurtosis = m4/m2^2) with zero-variance windows reporting 0 for both shape
statistics. Startle peaks follow a derivative-threshold detector: onset at
the base of the first rise whose smoothed slope exceeds the threshold, peak
at the following local maximum, offset at half-recovery.

Labels come either from condition segments (rest -> L, highway -> M,
city -> H) or from a normalized subjective score averaged per window and
thresholded at 0.33 / 0.67.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AmbiguousLabelError,
    InsufficientDataError,
    InvalidParameterError,
    InvalidScoreError,
    MissingClassError,
    SchemaError,
    ShapeError,
    UnlabeledError,
)
from .signal import SignalTrace

EDA_FEATURE_NAMES = (
    "eda_mean",
    "eda_std",
    "eda_min",
    "eda_max",
    "eda_kurtosis",
    "eda_skewness",
    "eda_peak_count",
    "eda_peak_amplitude",
    "eda_peak_duration",
)
HR_FEATURE_NAMES = ("hr_mean", "hr_std", "hr_min", "hr_max", "hr_rmssd")
FEATURE_NAMES = EDA_FEATURE_NAMES + HR_FEATURE_NAMES
N_FEATURES = len(FEATURE_NAMES)

LABELS = ("L", "M", "H")
CONDITION_LABELS = {"rest": "L", "highway": "M", "city": "H"}

DEFAULT_WINDOW_SECONDS = 30.0
DEFAULT_OVERLAP = 0.5


@dataclass(frozen=True)
class Peak:
    """One startle event: onset/offset in seconds relative to the segment."""

    onset: float
    offset: float
    amplitude: float

    def __post_init__(self):
        if self.offset <= self.onset:
            raise InvalidParameterError(
                f"peak offset {self.offset} must exceed onset {self.onset}"
            )
        if self.amplitude < 0:
            raise InvalidParameterError(f"peak amplitude must be >= 0, got {self.amplitude}")

    @property
    def duration(self) -> float:
        return self.offset - self.onset


@dataclass
class WindowInstance:
    """One 30 s window: per-view feature vectors plus label and provenance."""

    drive_id: str
    start: float
    duration: float
    eda_features: np.ndarray
    hr_features: np.ndarray
    label: str | None = None
    score: float | None = None
    dataset_id: str = ""

    def __post_init__(self):
        self.eda_features = np.asarray(self.eda_features, dtype=float)
        self.hr_features = np.asarray(self.hr_features, dtype=float)
        if self.eda_features.shape != (len(EDA_FEATURE_NAMES),):
            raise ShapeError(
                f"eda_features must have shape ({len(EDA_FEATURE_NAMES)},), "
                f"got {self.eda_features.shape}"
            )
        if self.hr_features.shape != (len(HR_FEATURE_NAMES),):
            raise ShapeError(
                f"hr_features must have shape ({len(HR_FEATURE_NAMES)},), "
                f"got {self.hr_features.shape}"
            )
        if self.label is not None and self.label not in LABELS:
            raise InvalidParameterError(f"label must be one of {LABELS}, got {self.label!r}")

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.eda_features, self.hr_features])


@dataclass(frozen=True)
class WindowSlice:
    """Raw per-window sample slices prior to feature computation."""

    start: float
    duration: float
    eda_times: np.ndarray = field(repr=False)
    eda_values: np.ndarray = field(repr=False)
    hr_times: np.ndarray = field(repr=False)
    hr_values: np.ndarray = field(repr=False)


def slide_windows(
    eda: SignalTrace,
    hr: SignalTrace,
    window: float = DEFAULT_WINDOW_SECONDS,
    overlap_fraction: float = DEFAULT_OVERLAP,
) -> list[WindowSlice]:
    """Cut both traces into aligned windows of ``window`` seconds.

    Window k starts at t0 + k * window * (1 - overlap_fraction); only
    windows fully contained in both traces are emitted, so a trace shorter
    than one window yields an empty list.
    """
    if window <= 0:
        raise InvalidParameterError(f"window must be positive, got {window}")
    if not 0 <= overlap_fraction < 1:
        raise InvalidParameterError(f"overlap_fraction must lie in [0, 1), got {overlap_fraction}")
    if len(eda) == 0 or len(hr) == 0:
        return []

    stride = window * (1.0 - overlap_fraction)
    t0 = max(eda.times[0], hr.times[0])
    t_end = min(eda.times[-1], hr.times[-1])
    out: list[WindowSlice] = []
    k = 0
    eps = 1e-9
    while True:
        start = t0 + k * stride
        end = start + window
        if end > t_end + eps:
            break
        eda_mask = (eda.times >= start - eps) & (eda.times <= end + eps)
        hr_mask = (hr.times >= start - eps) & (hr.times <= end + eps)
        out.append(
            WindowSlice(
                start=float(start),
                duration=float(window),
                eda_times=eda.times[eda_mask],
                eda_values=eda.values[eda_mask],
                hr_times=hr.times[hr_mask],
                hr_values=hr.values[hr_mask],
            )
        )
        k += 1
    return out


def _trailing_mean(x: np.ndarray, width: int) -> np.ndarray:
    """Mean over the trailing ``width`` samples, partial at the start."""
    if width <= 1:
        return x.astype(float)
    csum = np.cumsum(x, dtype=float)
    out = np.empty_like(csum)
    out[:width] = csum[:width] / np.arange(1, width + 1)
    out[width:] = (csum[width:] - csum[:-width]) / width
    return out


def detect_peaks(
    values: np.ndarray,
    sample_rate: float,
    slope_threshold: float = 0.01,
    min_amplitude: float = 0.005,
    smooth_seconds: float = 1.0,
) -> list[Peak]:
    """Derivative-threshold startle detection on a uniformly sampled segment.

    The first derivative is smoothed with a trailing moving average. Where it
    exceeds ``slope_threshold`` the onset is refined backward to the base of
    the rise, the peak is the end of the subsequent non-decreasing run, and
    the offset is the first later sample below half-recovery (onset value
    plus half the amplitude) or the segment end. Peaks smaller than
    ``min_amplitude`` are discarded; detected peaks never overlap.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2:
        return []
    dt = 1.0 / sample_rate
    deriv = np.gradient(values, dt)
    width = max(1, int(round(smooth_seconds * sample_rate)))
    smoothed = _trailing_mean(deriv, width)

    peaks: list[Peak] = []
    i = 0
    while i < n:
        if smoothed[i] <= slope_threshold:
            i += 1
            continue
        onset = i
        while onset > 0 and values[onset - 1] < values[onset]:
            onset -= 1
        peak_idx = onset
        while peak_idx + 1 < n and values[peak_idx + 1] >= values[peak_idx]:
            peak_idx += 1
        amplitude = values[peak_idx] - values[onset]
        half_level = values[onset] + 0.5 * amplitude
        offset = peak_idx
        while offset + 1 < n and values[offset + 1] >= half_level:
            offset += 1
        if offset + 1 < n:
            offset += 1
        if amplitude >= min_amplitude and offset > onset:
            peaks.append(Peak(onset=onset * dt, offset=offset * dt, amplitude=float(amplitude)))
            i = offset + 1
        else:
            i = max(peak_idx, i) + 1
    return peaks


def eda_features(
    values: np.ndarray,
    sample_rate: float,
    slope_threshold: float = 0.01,
    min_amplitude: float = 0.005,
    smooth_seconds: float = 1.0,
) -> np.ndarray:
    """Nine EDA statistics for one normalized window segment."""
    values = np.asarray(values, dtype=float)
    if len(values) < 4:
        raise InsufficientDataError(
            f"EDA features need at least 4 samples (kurtosis), got {len(values)}"
        )
    if np.min(values) < -1e-9 or np.max(values) > 1 + 1e-9:
        raise InvalidParameterError("EDA segment must be normalized to [0, 1]")

    mean = float(np.mean(values))
    centered = values - mean
    m2 = float(np.mean(centered**2))
    std = float(np.sqrt(m2))
    if m2 > 0:
        skewness = float(np.mean(centered**3)) / m2**1.5
        kurtosis = float(np.mean(centered**4)) / m2**2
    else:
        skewness = 0.0
        kurtosis = 0.0

    peaks = detect_peaks(
        values,
        sample_rate,
        slope_threshold=slope_threshold,
        min_amplitude=min_amplitude,
        smooth_seconds=smooth_seconds,
    )
    return np.array(
        [
            mean,
            std,
            float(np.min(values)),
            float(np.max(values)),
            kurtosis,
            skewness,
            float(len(peaks)),
            float(sum(p.amplitude for p in peaks)),
            float(sum(p.duration for p in peaks)),
        ]
    )


def hr_features(values: np.ndarray) -> np.ndarray:
    """Five HR statistics; RMSSD is the root mean square of successive diffs."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise InsufficientDataError(f"HR features need at least 2 samples, got {len(values)}")
    diffs = np.diff(values)
    rmssd = float(np.sqrt(np.mean(diffs**2)))
    return np.array(
        [
            float(np.mean(values)),
            float(np.std(values)),
            float(np.min(values)),
            float(np.max(values)),
            rmssd,
        ]
    )


def label_from_segments(
    start: float,
    duration: float,
    segments: list[tuple[float, float, str]],
) -> str:
    """Label a window from condition segments by majority overlap.

    The winning condition must cover at least half the window and be unique;
    otherwise the window is ambiguous. A window outside every segment is
    unlabeled.
    """
    overlaps: dict[str, float] = {}
    w_end = start + duration
    for seg_start, seg_end, condition in segments:
        if condition not in CONDITION_LABELS:
            raise SchemaError(
                f"unknown condition {condition!r}; expected one of "
                f"{sorted(CONDITION_LABELS)}"
            )
        ov = max(0.0, min(seg_end, w_end) - max(seg_start, start))
        if ov > 0:
            overlaps[condition] = overlaps.get(condition, 0.0) + ov
    if not overlaps:
        raise UnlabeledError(f"window [{start:.6g}, {w_end:.6g}] is outside all segments")
    best = max(overlaps.values())
    winners = [c for c, ov in overlaps.items() if ov == best]
    if best < 0.5 * duration or len(winners) > 1:
        raise AmbiguousLabelError(
            f"window [{start:.6g}, {w_end:.6g}] has no majority condition "
            f"(overlaps: {overlaps})"
        )
    return CONDITION_LABELS[winners[0]]


def label_from_score(score: float) -> str:
    """Threshold a normalized score: [0, 0.33] -> L, (0.33, 0.67) -> M, [0.67, 1] -> H."""
    if not 0.0 <= score <= 1.0:
        raise InvalidScoreError(f"score must lie in [0, 1], got {score}")
    if score <= 0.33:
        return "L"
    if score >= 0.67:
        return "H"
    return "M"


def window_score(
    score_times: np.ndarray,
    score_values: np.ndarray,
    start: float,
    duration: float,
) -> float:
    """Average the score samples whose timestamps fall inside the window."""
    score_times = np.asarray(score_times, dtype=float)
    score_values = np.asarray(score_values, dtype=float)
    eps = 1e-9
    mask = (score_times >= start - eps) & (score_times <= start + duration + eps)
    if not np.any(mask):
        raise UnlabeledError(
            f"no score samples inside window [{start:.6g}, {start + duration:.6g}]"
        )
    return float(np.mean(score_values[mask]))


def balance_downsample(
    instances: list[WindowInstance],
    seed: int,
) -> list[WindowInstance]:
    """Downsample the overrepresented class so that |L| == |H|.

    The selection is uniform without replacement using a seeded generator,
    so identical inputs and seed always keep the same instances. Input order
    is preserved among survivors.
    """
    labels = [inst.label for inst in instances]
    extra = sorted({lab for lab in labels if lab not in ("L", "H")})
    if extra:
        raise InvalidParameterError(
            f"balance_downsample expects only L/H instances, found labels {extra}"
        )
    idx_l = [i for i, lab in enumerate(labels) if lab == "L"]
    idx_h = [i for i, lab in enumerate(labels) if lab == "H"]
    if not idx_l or not idx_h:
        missing = "L" if not idx_l else "H"
        raise MissingClassError(f"class {missing} is absent; cannot balance")
    target = min(len(idx_l), len(idx_h))
    rng = np.random.default_rng(seed)
    keep = set()
    for idx in (idx_l, idx_h):
        if len(idx) == target:
            keep.update(idx)
        else:
            keep.update(rng.choice(np.array(idx), size=target, replace=False).tolist())
    return [inst for i, inst in enumerate(instances) if i in keep]


def instances_to_arrays(
    instances: list[WindowInstance],
    drop_m: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack instances into (X, y, drives) with H -> +1 and L -> -1."""
    rows, ys, drives = [], [], []
    for inst in instances:
        if inst.label == "M":
            if drop_m:
                continue
            raise InvalidParameterError("binary assembly cannot encode label M")
        if inst.label not in ("L", "H"):
            raise InvalidParameterError(f"instance has no binary label: {inst.label!r}")
        rows.append(inst.features)
        ys.append(1.0 if inst.label == "H" else -1.0)
        drives.append(inst.drive_id)
    if not rows:
        raise MissingClassError("no L/H instances to assemble")
    return np.array(rows), np.array(ys), np.array(drives, dtype=object)


def save_instances(instances: list[WindowInstance], path: str | Path) -> None:
    """Write instances CSV plus a sidecar header file naming each feature."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["drive_id", "start_s", "label"] + [f"f{i + 1}" for i in range(N_FEATURES)])
        for inst in instances:
            writer.writerow(
                [inst.drive_id, f"{inst.start:.6f}", inst.label or ""]
                + [f"{v:.12g}" for v in inst.features]
            )
    sidecar_path(path).write_text("\n".join(FEATURE_NAMES) + "\n", encoding="utf-8")


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".header")


def load_instances(path: str | Path, dataset_id: str | None = None) -> list[WindowInstance]:
    """Read instances CSV, verifying the sidecar feature header matches."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"instances file does not exist: {path}")
    sidecar = sidecar_path(path)
    if sidecar.exists():
        names = tuple(
            line.strip() for line in sidecar.read_text(encoding="utf-8").splitlines() if line.strip()
        )
        if names != FEATURE_NAMES:
            missing = [n for n in FEATURE_NAMES if n not in names]
            surplus = [n for n in names if n not in FEATURE_NAMES]
            raise SchemaError(
                f"{sidecar}: feature header mismatch (missing: {missing}, unexpected: {surplus})"
            )
    dataset_id = dataset_id if dataset_id is not None else path.stem
    expected = ["drive_id", "start_s", "label"] + [f"f{i + 1}" for i in range(N_FEATURES)]
    instances = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise SchemaError(f"{path}: expected columns {expected[:4]}..., got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise SchemaError(f"{path}:{lineno}: expected {len(expected)} columns, got {len(row)}")
            feats = np.array([float(v) for v in row[3:]])
            instances.append(
                WindowInstance(
                    drive_id=row[0],
                    start=float(row[1]),
                    duration=DEFAULT_WINDOW_SECONDS,
                    eda_features=feats[: len(EDA_FEATURE_NAMES)],
                    hr_features=feats[len(EDA_FEATURE_NAMES):],
                    label=row[2] or None,
                    dataset_id=dataset_id,
                )
            )
    return instances
