"""Breathing-signal ingestion, band-pass filtering and short-time windowing.

Signals are uniformly sampled 1-D traces (arbitrary units, typically
temperature-derived). Everything here is a pure function of its inputs;
reductions run in fixed ascending-index order so results are reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_FS_HZ = 8.0
DEFAULT_WINDOW_S = 20
DEFAULT_STRIDE_S = 1

# slack for float comparisons on time grids (duration floors, integral checks)
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class BandConfig:
    """Pass-band in Hz. Defaults cover the normal adult breathing range."""

    f1_hz: float = 0.1
    f2_hz: float = 0.85

    def __post_init__(self):
        if not 0.0 < self.f1_hz < self.f2_hz:
            raise ValueError(f"need 0 < f1 < f2, got [{self.f1_hz}, {self.f2_hz}]")

    def check_fs(self, fs_hz: float) -> None:
        if self.f2_hz >= fs_hz / 2.0:
            raise ValueError(
                f"band upper edge {self.f2_hz} Hz needs fs > {2 * self.f2_hz} Hz, got {fs_hz}"
            )


@dataclass
class BreathingSignal:
    """Uniformly sampled breathing trace with session identity."""

    samples: np.ndarray
    fs_hz: float
    participant_id: str
    session_id: str

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain non-finite values")
        # Nyquist margin over the default band upper edge; custom bands are
        # re-checked in bandpass().
        if self.fs_hz <= 2 * BandConfig().f2_hz:
            raise ValueError(f"fs_hz {self.fs_hz} too low for breathing band")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.fs_hz


@dataclass(frozen=True)
class SignalWindow:
    """One short-time slice; t_end_s is the window's integer end time."""

    values: np.ndarray
    t_end_s: int


@dataclass(frozen=True)
class SessionManifest:
    participant_id: str
    session_id: str
    fs_hz: float
    vas_score_cm: float

    def __post_init__(self):
        if not 0.0 <= self.vas_score_cm <= 10.0:
            raise ValueError(f"vas_score_cm must be in [0, 10], got {self.vas_score_cm}")
        if self.fs_hz <= 0:
            raise ValueError("fs_hz must be positive")

    @classmethod
    def load(cls, path) -> "SessionManifest":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            return cls(
                participant_id=str(raw["participant_id"]),
                session_id=str(raw["session_id"]),
                fs_hz=float(raw["fs_hz"]),
                vas_score_cm=float(raw["vas_score_cm"]),
            )
        except KeyError as exc:
            raise ValueError(f"{path}: manifest missing key {exc}") from exc

    def save(self, path) -> None:
        doc = {
            "participant_id": self.participant_id,
            "session_id": self.session_id,
            "fs_hz": self.fs_hz,
            "vas_score_cm": self.vas_score_cm,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
            fh.write("\n")


def read_signal_csv(path):
    """Parse a `time_s,value` CSV into (timestamps, values) float arrays."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "time_s,value":
            raise ValueError(f"{path}: expected header 'time_s,value', got {header!r}")
        times, values = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns")
            try:
                times.append(float(parts[0]))
                values.append(float(parts[1]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric row") from exc
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.size < 2:
        raise ValueError(f"{path}: fewer than 2 samples")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
        raise ValueError(f"{path}: non-finite values")
    if np.any(np.diff(t) <= 0):
        raise ValueError(f"{path}: non-monotone timestamps")
    return t, v


def load_signal(path, manifest: SessionManifest) -> BreathingSignal:
    """Load a signal CSV and resample it onto the manifest's uniform grid.

    Resampling is linear interpolation onto t0 + i/fs_hz, i = 0..floor((tN-t0)*fs).
    Already-uniform input at the target rate passes through unchanged.
    """
    t, v = read_signal_csv(path)
    fs = manifest.fs_hz
    n_out = int(math.floor((t[-1] - t[0]) * fs + _TIME_EPS)) + 1
    grid = t[0] + np.arange(n_out) / fs
    samples = np.interp(grid, t, v)
    return BreathingSignal(
        samples=samples,
        fs_hz=fs,
        participant_id=manifest.participant_id,
        session_id=manifest.session_id,
    )


def bandpass(signal: BreathingSignal, band: BandConfig | None = None) -> BreathingSignal:
    """Zero-phase brick-wall band-pass over the whole trace.

    Forward real FFT, zero every bin with frequency outside [f1, f2]
    (edges inclusive), inverse transform. Linear, idempotent, and free of
    phase distortion; DC and drift are removed because 0 Hz < f1.
    """
    band = band or BandConfig()
    band.check_fs(signal.fs_hz)
    x = signal.samples
    if x.size < 2:
        raise ValueError("signal shorter than 2 samples")
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, d=1.0 / signal.fs_hz)
    spec[(freqs < band.f1_hz) | (freqs > band.f2_hz)] = 0.0
    return BreathingSignal(
        samples=np.fft.irfft(spec, n=x.size),
        fs_hz=signal.fs_hz,
        participant_id=signal.participant_id,
        session_id=signal.session_id,
    )


def _samples_per(seconds: int, fs_hz: float) -> int:
    exact = seconds * fs_hz
    n = round(exact)
    if abs(exact - n) > _TIME_EPS:
        raise ValueError(f"{seconds} s is not an integer number of samples at fs={fs_hz}")
    return int(n)


def extract_windows(
    signal: BreathingSignal,
    window_s: int = DEFAULT_WINDOW_S,
    stride_s: int = DEFAULT_STRIDE_S,
) -> list[SignalWindow]:
    """Slice the signal into windows ending at t = window_s, window_s+stride_s, ...

    The last window ends at floor(duration_s); with stride 1 the count is
    floor(duration_s) - window_s + 1.
    """
    if window_s < 1 or stride_s < 1:
        raise ValueError("window_s and stride_s must be >= 1")
    n_win = _samples_per(window_s, signal.fs_hz)
    duration = int(math.floor(signal.duration_s + _TIME_EPS))
    if signal.duration_s + _TIME_EPS < window_s:
        raise ValueError(
            f"signal too short: {signal.duration_s:.1f} s < window of {window_s} s"
        )
    windows = []
    for t_end in range(window_s, duration + 1, stride_s):
        end = _samples_per(t_end, signal.fs_hz)
        windows.append(SignalWindow(values=signal.samples[end - n_win : end], t_end_s=t_end))
    return windows


def biased_autocorrelation(window) -> np.ndarray:
    """Biased autocorrelation R(k) = (1/N) sum_t w[t] w[t+k], k = 0..N-1.

    The 1/N scaling (rather than 1/(N-k)) makes the implied two-sided
    spectrum nonnegative. Negative lags follow from symmetry R(-k) = R(k).
    """
    w = window.values if isinstance(window, SignalWindow) else np.asarray(window, dtype=np.float64)
    n = w.size
    r = np.empty(n, dtype=np.float64)
    for k in range(n):
        r[k] = np.dot(w[: n - k], w[k:]) / n
    return r
