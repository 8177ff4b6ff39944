"""Raw trace ingestion and conditioning.

A drive contributes one electrodermal activity (EDA) trace and one heart
rate (HR) trace. EDA is low-pass filtered to strip motion and line noise,
then both modalities are min-max normalized per drive so that downstream
features are comparable across individuals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .errors import (
    DegenerateRangeError,
    EmptyInputError,
    InvalidParameterError,
    SchemaError,
    TimestampError,
)

EDA = "eda"
HR = "hr"
MODALITIES = (EDA, HR)

# consecutive sample gaps may deviate this much from 1/sample_rate
GAP_TOLERANCE = 0.10


@dataclass(frozen=True)
class SignalTrace:
    """Timestamped samples of one physiological modality for one drive.

    ``times`` are seconds, strictly increasing. ``values`` are microsiemens
    for EDA and beats per minute for HR (or unitless in [0, 1] after
    normalization). ``declared_gaps`` lists (start, end) intervals where
    recording dropouts are expected and the gap check is waived.
    """

    drive_id: str
    modality: str
    sample_rate: float
    times: np.ndarray
    values: np.ndarray
    declared_gaps: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.modality not in MODALITIES:
            raise InvalidParameterError(
                f"modality must be one of {MODALITIES}, got {self.modality!r}"
            )
        if self.sample_rate <= 0:
            raise InvalidParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise TimestampError(
                f"times {self.times.shape} and values {self.values.shape} must be "
                "1-D arrays of equal length"
            )
        if not np.all(np.isfinite(self.values)) or not np.all(np.isfinite(self.times)):
            raise TimestampError(f"trace {self.drive_id}/{self.modality} has non-finite entries")
        self._check_timestamps()

    def _check_timestamps(self):
        if len(self.times) < 2:
            return
        diffs = np.diff(self.times)
        if np.any(diffs <= 0):
            idx = int(np.argmax(diffs <= 0))
            raise TimestampError(
                f"trace {self.drive_id}/{self.modality}: timestamps not strictly "
                f"increasing near index {idx} (t={self.times[idx]:.6g})"
            )
        nominal = 1.0 / self.sample_rate
        bad = np.flatnonzero(np.abs(diffs - nominal) > GAP_TOLERANCE * nominal)
        for idx in bad:
            start, end = self.times[idx], self.times[idx + 1]
            if not any(g0 <= start and end <= g1 for g0, g1 in self.declared_gaps):
                raise TimestampError(
                    f"trace {self.drive_id}/{self.modality}: gap of {end - start:.6g}s at "
                    f"t={start:.6g} deviates from 1/sample_rate={nominal:.6g}s by more "
                    f"than {GAP_TOLERANCE:.0%} and is not declared"
                )

    def __len__(self) -> int:
        return len(self.times)

    @property
    def duration(self) -> float:
        if len(self.times) == 0:
            return 0.0
        return float(self.times[-1] - self.times[0])

    def with_values(self, values: np.ndarray) -> "SignalTrace":
        return replace(self, values=np.asarray(values, dtype=float))


def is_uniform(trace: SignalTrace) -> bool:
    if len(trace) < 3:
        return True
    diffs = np.diff(trace.times)
    nominal = 1.0 / trace.sample_rate
    return bool(np.all(np.abs(diffs - nominal) <= 1e-6 * nominal))


def resample_uniform(trace: SignalTrace) -> SignalTrace:
    """Linear interpolation onto a uniform grid at the declared sample rate."""
    if len(trace) == 0:
        raise EmptyInputError(f"trace {trace.drive_id}/{trace.modality} is empty")
    if is_uniform(trace):
        return trace
    step = 1.0 / trace.sample_rate
    n_steps = int(np.floor((trace.times[-1] - trace.times[0]) / step + 1e-9))
    grid = trace.times[0] + step * np.arange(n_steps + 1)
    values = np.interp(grid, trace.times, trace.values)
    return replace(trace, times=grid, values=values, declared_gaps=())


def _design_lowpass(cutoff: float, sample_rate: float, order: int) -> np.ndarray:
    return butter(order, cutoff / (sample_rate / 2.0), btype="low", output="sos")


def lowpass_filter(trace: SignalTrace, cutoff: float, order: int = 2) -> SignalTrace:
    """Zero-phase Butterworth low-pass for EDA traces.

    Forward-backward filtering squares the magnitude response, so the
    second-order design attenuates by more than 20 dB one octave above the
    cutoff while leaving the DC level and peak timing untouched. Length and
    timestamps of the output match the input exactly; irregular traces are
    filtered on a uniform grid and interpolated back.
    """
    if len(trace) == 0:
        raise EmptyInputError(f"trace {trace.drive_id}/{trace.modality} is empty")
    if trace.modality != EDA:
        raise InvalidParameterError(f"low-pass filtering expects an EDA trace, got {trace.modality!r}")
    nyquist = trace.sample_rate / 2.0
    if not 0 < cutoff < nyquist:
        raise InvalidParameterError(
            f"cutoff must lie in (0, {nyquist:.6g}) Hz for sample_rate "
            f"{trace.sample_rate:.6g} Hz, got {cutoff:.6g}"
        )
    if len(trace) < 2:
        return trace.with_values(trace.values.copy())

    sos = _design_lowpass(cutoff, trace.sample_rate, order)
    uniform = resample_uniform(trace)
    padlen = min(3 * (2 * sos.shape[0] + 1), len(uniform) - 1)
    filtered = sosfiltfilt(sos, uniform.values, padlen=padlen)
    if uniform is trace:
        return trace.with_values(filtered)
    back = np.interp(trace.times, uniform.times, filtered)
    return trace.with_values(back)


def minmax_normalize(trace: SignalTrace) -> SignalTrace:
    """Per-drive, per-modality min-max scaling onto [0, 1].

    A constant trace signals a dead sensor; fabricating 0.5-filled output
    would poison every downstream feature, so it is an error instead.
    """
    if len(trace) == 0:
        raise EmptyInputError(f"trace {trace.drive_id}/{trace.modality} is empty")
    lo = float(np.min(trace.values))
    hi = float(np.max(trace.values))
    if hi == lo:
        raise DegenerateRangeError(
            f"trace {trace.drive_id}/{trace.modality} is constant at {lo:.6g}; "
            "cannot min-max normalize",
            constant_value=lo,
        )
    return trace.with_values((trace.values - lo) / (hi - lo))


def load_trace_csv(
    path: str | Path,
    drive_id: str,
    modality: str,
    sample_rate: float,
    declared_gaps: tuple[tuple[float, float], ...] = (),
) -> SignalTrace:
    """Read a ``time_s,value`` CSV into a SignalTrace."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["time_s", "value"]:
            raise SchemaError(
                f"{path}: expected header 'time_s,value', got {','.join(header or ['<empty>'])!r}"
            )
        times, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise SchemaError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                times.append(float(row[0]))
                values.append(float(row[1]))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: non-numeric entry {row!r}") from exc
    return SignalTrace(
        drive_id=drive_id,
        modality=modality,
        sample_rate=sample_rate,
        times=np.array(times),
        values=np.array(values),
        declared_gaps=declared_gaps,
    )
