"""The protoplasmic tube as a first-order RC low-pass filter."""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import DegenerateInput, RangeError, UndersampledInput, UndersampledRequest

DEFAULT_FC = 7500.0
FC_BAND = (5000.0, 10000.0)


class FilterWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FilterSpec:
    fc: float = DEFAULT_FC

    def __post_init__(self):
        if not self.fc > 0:
            raise RangeError("cutoff frequency must be > 0")
        lo, hi = FC_BAND
        if not lo <= self.fc <= hi:
            warnings.warn(
                f"cutoff {self.fc} Hz lies outside the measured {lo:g}-{hi:g} Hz band",
                FilterWarning,
                stacklevel=3,
            )

    @property
    def tau(self) -> float:
        return 1.0 / (2 * math.pi * self.fc)


@dataclass(frozen=True, eq=False)
class Waveform:
    sample_rate: float
    samples: np.ndarray
    shape: str = "arbitrary"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if not self.sample_rate > 0:
            raise RangeError("sample_rate must be > 0")
        if samples.ndim != 1 or samples.size == 0:
            raise RangeError("waveform needs a non-empty 1-D sample sequence")
        if not np.all(np.isfinite(samples)):
            raise RangeError("waveform samples must be finite")
        if self.shape not in ("sine", "square", "triangle", "arbitrary"):
            raise RangeError(f"unknown waveform shape {self.shape!r}")

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    def __neg__(self):
        return Waveform(self.sample_rate, -self.samples, self.shape)


def gain_phase(fc: float, f: float):
    """Magnitude and phase (radians) of ``1 / (1 + j f/fc)``."""
    if not fc > 0:
        raise RangeError("fc must be > 0")
    if f < 0:
        raise RangeError("f must be >= 0")
    x = f / fc
    return 1.0 / math.sqrt(1.0 + x * x), -math.atan(x)


def filter_alpha(fc: float, sample_rate: float) -> float:
    return 1.0 - math.exp(-2 * math.pi * fc / sample_rate)


def apply_filter(w: Waveform, fc: float = DEFAULT_FC, initial_state: float = 0.0) -> Waveform:
    """Exponential-smoothing discretization of the RC low-pass.

    ``y[n] = a*x[n] + (1 - a)*y[n-1]`` with ``a = 1 - exp(-2*pi*fc/fs)`` and
    ``y[-1] = initial_state``.
    """
    if not fc > 0:
        raise RangeError("fc must be > 0")
    fs = w.sample_rate
    if fs < 4 * fc:
        raise UndersampledInput(f"sample rate {fs} Hz is below 4x the cutoff {fc} Hz")
    if fs < 20 * fc:
        warnings.warn(
            f"sample rate {fs} Hz is below 20x the cutoff {fc} Hz; response is approximate",
            FilterWarning,
            stacklevel=2,
        )
    a = filter_alpha(fc, fs)
    zi = np.array([(1 - a) * initial_state])
    y, _ = signal.lfilter([a], [1.0, -(1 - a)], w.samples, zi=zi)
    return Waveform(fs, y, "arbitrary")


def generate_waveform(shape: str, f: float, amplitude: float, fs: float, duration: float) -> Waveform:
    """Sine, square or triangle test signal starting at phase zero."""
    if not (f > 0 and fs > 0 and duration > 0):
        raise RangeError("f, fs and duration must be > 0")
    if fs < 20 * f:
        raise UndersampledRequest(f"sample rate {fs} Hz is below 20x the signal frequency {f} Hz")
    if duration < 10 / f - 1e-12:
        raise RangeError(f"duration must cover at least 10 periods ({10 / f} s)")
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    theta = 2 * np.pi * f * t
    if shape == "sine":
        x = amplitude * np.sin(theta)
    elif shape == "square":
        # sign(sin); a zero crossing takes the sign of the half period it opens.
        # The tolerance keeps float error from moving an edge by one sample.
        half_periods = np.floor(2 * f * np.arange(n) / fs + 1e-9)
        x = amplitude * np.where(half_periods % 2 == 0, 1.0, -1.0)
    elif shape == "triangle":
        x = ideal_triangle(f, amplitude, fs, n).samples
    else:
        raise RangeError(f"unknown waveform shape {shape!r}")
    return Waveform(fs, x, shape)


def ideal_triangle(f: float, amplitude: float, fs: float, n: int) -> Waveform:
    """Running integral of a zero-phase square wave, rescaled to +-amplitude.

    Troughs sit at the square's rising edges, peaks at its falling edges.
    """
    t = np.arange(n) / fs
    return Waveform(fs, -amplitude * (2 / np.pi) * np.arcsin(np.cos(2 * np.pi * f * t)), "triangle")


def shape_similarity(a: Waveform, b: Waveform, fc: float = DEFAULT_FC, n_tau: float = 5.0) -> float:
    """Pearson correlation after dropping the first ``n_tau`` filter time constants."""
    if len(a) != len(b) or a.sample_rate != b.sample_rate:
        raise RangeError("waveforms must share length and sample rate")
    skip = int(math.ceil(n_tau / (2 * math.pi * fc) * a.sample_rate)) if n_tau > 0 else 0
    x, y = a.samples[skip:], b.samples[skip:]
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateInput("correlation needs two non-constant waveforms")
    return float(np.corrcoef(x, y)[0, 1])


def sine_gain(fc: float, f: float, fs: float, periods: int = 50) -> float:
    """Measured steady-state amplitude ratio of the discrete filter at ``f``.

    Drives the filter with a unit sine for the transient plus ``periods``
    cycles and fits a sinusoid at ``f`` over the settled part.
    """
    settle = 10 / (2 * math.pi * fc)
    n = int(round((settle + periods / f) * fs))
    t = np.arange(n) / fs
    y = apply_filter(Waveform(fs, np.sin(2 * np.pi * f * t), "sine"), fc).samples
    keep = t >= settle
    basis = np.column_stack([np.sin(2 * np.pi * f * t[keep]), np.cos(2 * np.pi * f * t[keep])])
    coef, *_ = np.linalg.lstsq(basis, y[keep], rcond=None)
    return float(np.hypot(*coef))


def bode_frequencies(f_lo=100.0, f_hi=1e6, per_decade=20, include=()):
    decades = math.log10(f_hi / f_lo)
    n = int(round(decades * per_decade)) + 1
    freqs = np.logspace(math.log10(f_lo), math.log10(f_hi), n)
    return np.unique(np.concatenate([freqs, np.asarray(include, dtype=float)]))


BODE_HEADER = "freq_hz,gain_db,phase_deg"


def format_bode(fc: float, freqs) -> str:
    out = io.StringIO()
    out.write(BODE_HEADER + "\n")
    for f in np.asarray(freqs, dtype=float).tolist():
        mag, ph = gain_phase(fc, f)
        out.write(f"{f!r},{20 * math.log10(mag)!r},{math.degrees(ph)!r}\n")
    return out.getvalue()


WAVEFORM_HEADER = "time_s,volts"


def format_waveform(w: Waveform) -> str:
    out = io.StringIO()
    out.write(WAVEFORM_HEADER + "\n")
    for t, v in zip(w.times.tolist(), w.samples.tolist()):
        out.write(f"{t!r},{v!r}\n")
    return out.getvalue()
