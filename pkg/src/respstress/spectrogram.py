"""Respiration variability spectrogram: stacked short-time PSD columns.

Each column is the power spectral density of one 20 s window, evaluated as
the cosine transform of the biased autocorrelation over two-sided lags:

    psd(f) = R(0) + 2 * sum_{k=1}^{N-1} R(k) cos(2 pi (f / fs) k)

which equals the periodogram (1/N) |DTFT of the window at f|^2, so every
entry is nonnegative up to rounding. Frequencies are the m equally spaced
points mapped from [f1, f2] onto integer bins [l, m]; the transform is
evaluated directly at those frequencies, not on an FFT grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .signals import (
    DEFAULT_STRIDE_S,
    DEFAULT_WINDOW_S,
    BandConfig,
    BreathingSignal,
    extract_windows,
)

DEFAULT_BIN_COUNT = 120


@dataclass(frozen=True)
class SpectrogramConfig:
    band: BandConfig = BandConfig()
    m: int = DEFAULT_BIN_COUNT
    l: int = 1
    window_s: int = DEFAULT_WINDOW_S
    stride_s: int = DEFAULT_STRIDE_S

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need at least 2 frequency bins")
        if self.l != 1:
            raise ValueError("lowest bin index is fixed at 1")
        if self.window_s < 1 or self.stride_s < 1:
            raise ValueError("window_s and stride_s must be >= 1")


@dataclass
class RvsMatrix:
    """m x cols PSD matrix; row i holds bin y = l + i, column c holds the
    window ending at t_end_of_col + c * stride_s seconds."""

    values: np.ndarray
    config: SpectrogramConfig
    fs_hz: float
    t_end_of_col: int
    participant_id: str
    session_id: str

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


def freq_to_bin(f: float, config: SpectrogramConfig) -> int:
    """Map a frequency in [f1, f2] to its integer bin in [l, m].

    Rounding is half-away-from-zero (the argument is never negative here,
    so this is floor(x + 0.5)).
    """
    band = config.band
    if f < band.f1_hz - 1e-12 or f > band.f2_hz + 1e-12:
        raise ValueError(f"frequency {f} Hz outside band [{band.f1_hz}, {band.f2_hz}]")
    x = (f - band.f1_hz) / (band.f2_hz - band.f1_hz) * (config.m - config.l)
    return config.l + int(math.floor(x + 0.5))


def bin_to_freq(y: int, config: SpectrogramConfig) -> float:
    """Inverse of the linear bin map (exact on bin centers)."""
    if not config.l <= y <= config.m:
        raise ValueError(f"bin {y} outside [{config.l}, {config.m}]")
    band = config.band
    return band.f1_hz + (y - config.l) / (config.m - config.l) * (band.f2_hz - band.f1_hz)


def bin_frequencies(config: SpectrogramConfig) -> np.ndarray:
    return np.array([bin_to_freq(y, config) for y in range(config.l, config.m + 1)])


@lru_cache(maxsize=8)
def _cosine_table(m: int, l: int, f1: float, f2: float, fs: float, n: int) -> np.ndarray:
    # rows = bins, cols = lags k; first column (k=0) is all ones
    freqs = f1 + (np.arange(l, m + 1) - l) / (m - l) * (f2 - f1)
    k = np.arange(n)
    return np.cos(2.0 * np.pi * np.outer(freqs / fs, k))


def _autocorr_stack(windows: np.ndarray) -> np.ndarray:
    """Biased autocorrelation of each row of a (n_windows, N) stack."""
    n = windows.shape[1]
    r = np.empty_like(windows)
    for k in range(n):
        r[:, k] = np.einsum("wt,wt->w", windows[:, : n - k], windows[:, k:]) / n
    return r


def compute_rvs(signal: BreathingSignal, config: SpectrogramConfig | None = None) -> RvsMatrix:
    """Build the spectrogram of an (already band-passed) signal.

    Column count follows the windowing rule: floor(duration) - window_s + 1
    for stride 1. Within-column reductions run in fixed ascending-lag order.
    """
    config = config or SpectrogramConfig()
    windows = extract_windows(signal, config.window_s, config.stride_s)
    stack = np.stack([w.values for w in windows])
    r = _autocorr_stack(stack)
    r[:, 1:] *= 2.0  # fold negative lags into the cosine sum
    table = _cosine_table(
        config.m, config.l, config.band.f1_hz, config.band.f2_hz,
        signal.fs_hz, stack.shape[1],
    )
    values = table @ r.T
    return RvsMatrix(
        values=values,
        config=config,
        fs_hz=signal.fs_hz,
        t_end_of_col=windows[0].t_end_s,
        participant_id=signal.participant_id,
        session_id=signal.session_id,
    )


def normalize_session(rvs: RvsMatrix) -> RvsMatrix:
    """Scale by the session-wide maximum so values land in [0, 1].

    Tiny negative entries (PSD rounding noise) are clipped to 0. A matrix
    with no positive entry cannot be normalized.
    """
    peak = float(rvs.values.max(initial=0.0))
    if peak <= 0.0:
        raise ValueError(
            f"degenerate session {rvs.participant_id}/{rvs.session_id}: all-zero spectrogram"
        )
    values = np.clip(rvs.values / peak, 0.0, None)
    return RvsMatrix(
        values=values,
        config=rvs.config,
        fs_hz=rvs.fs_hz,
        t_end_of_col=rvs.t_end_of_col,
        participant_id=rvs.participant_id,
        session_id=rvs.session_id,
    )


def export_pgm(rvs: RvsMatrix, path) -> None:
    """Write a binary 16-bit PGM with frequency increasing upward.

    Expects a normalized matrix; sample value is round(65535 * entry),
    stored big-endian as PGM requires, highest bin (y = m) on the top row.
    """
    v = rvs.values
    if v.min() < -1e-9 or v.max() > 1.0 + 1e-9:
        raise ValueError("matrix must be normalized to [0, 1] before PGM export")
    words = np.floor(np.clip(v, 0.0, 1.0) * 65535.0 + 0.5).astype(">u2")
    height, width = words.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n65535\n".encode("ascii"))
        fh.write(words[::-1].tobytes())


def write_rvs(rvs: RvsMatrix, path) -> None:
    """Serialize to the `.rvs` container: one JSON header line, then
    m*cols little-endian float64 values, row-major by ascending bin."""
    header = {
        "m": rvs.config.m,
        "cols": rvs.n_cols,
        "f1": rvs.config.band.f1_hz,
        "f2": rvs.config.band.f2_hz,
        "fs": rvs.fs_hz,
        "participant_id": rvs.participant_id,
        "session_id": rvs.session_id,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(rvs.values, dtype="<f8").tobytes())


def read_rvs(path) -> RvsMatrix:
    """Load a `.rvs` file. The file does not carry window/stride timing, so
    the returned matrix uses the default window for its column origin."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        m, cols = int(header["m"]), int(header["cols"])
        data = np.frombuffer(fh.read(m * cols * 8), dtype="<f8")
    if data.size != m * cols:
        raise ValueError(f"{path}: truncated payload, expected {m * cols} values")
    config = SpectrogramConfig(
        band=BandConfig(float(header["f1"]), float(header["f2"])), m=m
    )
    return RvsMatrix(
        values=data.reshape(m, cols).astype(np.float64),
        config=config,
        fs_hz=float(header["fs"]),
        t_end_of_col=config.window_s,
        participant_id=str(header["participant_id"]),
        session_id=str(header["session_id"]),
    )
