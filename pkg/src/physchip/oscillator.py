"""Stimulus-modulated noisy oscillator for the extracellular potential.

The instantaneous frequency is ``f0 * (1 + d)`` where ``d`` is the realized
fused delta of the stimuli active at that instant.  Stimuli fuse additively.
Each stimulus window (a maximal interval with a constant, non-empty set of
active stimuli) draws one response realization: with probability ``p_miss``
the organism does not respond at all, and independently a Gaussian jitter of
scale ``sigma_resp`` is added to the delta.  White measurement noise of scale
``sigma_meas`` is added per sample.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    InvalidProgram,
    NyquistViolation,
    RangeError,
    TraceFormatError,
    UnknownStimulus,
)

_BASIC_KINDS = ("light", "heat", "oat")


@dataclass(frozen=True, order=True)
class StimulusKind:
    """Light, heat, oat flake, or a named chemical."""

    kind: str
    chemical: str | None = None

    def __post_init__(self):
        if self.kind in _BASIC_KINDS:
            if self.chemical is not None:
                raise ValueError(f"{self.kind} stimulus takes no chemical id")
        elif self.kind == "chemical":
            if not self.chemical:
                raise ValueError("chemical id must be a non-empty string")
        else:
            raise ValueError(f"unknown stimulus kind {self.kind!r}")

    def __str__(self):
        return self.kind if self.chemical is None else f"chemical:{self.chemical}"

    @classmethod
    def parse(cls, text: str) -> "StimulusKind":
        text = text.strip()
        if text.lower().startswith("chemical:"):
            return cls("chemical", text.split(":", 1)[1])
        return cls(text.lower())


LIGHT = StimulusKind("light")
HEAT = StimulusKind("heat")
OAT = StimulusKind("oat")


def chemical(name: str) -> StimulusKind:
    return StimulusKind("chemical", name)


@dataclass(frozen=True)
class StimulusEvent:
    t_on: float
    t_off: float
    kind: StimulusKind

    def __post_init__(self):
        if not (0 <= self.t_on < self.t_off):
            raise InvalidProgram(
                f"event {self.kind} needs 0 <= t_on < t_off, got [{self.t_on}, {self.t_off})"
            )

    def active_at(self, t: float) -> bool:
        return self.t_on <= t < self.t_off


@dataclass(frozen=True)
class StimulusProgram:
    events: tuple[StimulusEvent, ...] = ()

    @classmethod
    def of(cls, *events: tuple[float, float, StimulusKind]) -> "StimulusProgram":
        return cls(tuple(StimulusEvent(*e) for e in events))

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def active(self, t: float) -> frozenset[StimulusKind]:
        return frozenset(e.kind for e in self.events if e.active_at(t))

    def kinds(self) -> set[StimulusKind]:
        return {e.kind for e in self.events}


DEFAULT_DELTA = {LIGHT: -0.30, HEAT: 0.50, OAT: 0.30}


@dataclass(frozen=True)
class OscillatorParams:
    """Oscillator configuration.

    ``delta`` and ``amp_delta`` are relative changes (``+0.5`` means +50 %).
    ``est_noise_coef`` is the relative frequency-estimator standard deviation
    per unit of ``sigma_meas / amplitude``; it is measured by
    :func:`physchip.gates.measure_estimator_noise` and left ``None`` until then.
    """

    f0: float = 0.010
    A0: float = 5.0
    V_offset: float = 0.0
    delta: Mapping[StimulusKind, float] = field(default_factory=lambda: dict(DEFAULT_DELTA))
    amp_delta: Mapping[StimulusKind, float] = field(default_factory=dict)
    sigma_resp: float = 0.05
    sigma_meas: float = 0.5
    p_miss: float = 0.0
    est_noise_coef: float | None = None

    def __post_init__(self):
        checks = [
            (self.f0 > 0, "f0 must be > 0"),
            (self.A0 > 0, "A0 must be > 0"),
            (math.isfinite(self.V_offset), "V_offset must be finite"),
            (self.sigma_resp >= 0, "sigma_resp must be >= 0"),
            (self.sigma_meas >= 0, "sigma_meas must be >= 0"),
            (0 <= self.p_miss < 1, "p_miss must lie in [0, 1)"),
            (self.est_noise_coef is None or self.est_noise_coef >= 0, "est_noise_coef must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise RangeError(msg)
        for table in (self.delta, self.amp_delta):
            for k, v in table.items():
                if not isinstance(k, StimulusKind):
                    raise TypeError(f"stimulus keys must be StimulusKind, got {k!r}")
                if not math.isfinite(v) or v <= -1:
                    raise RangeError(f"relative delta for {k} must be finite and > -1, got {v}")

    def replace(self, **changes) -> "OscillatorParams":
        return replace(self, **changes)

    def with_stimulus(self, kind: StimulusKind, delta: float, amp_delta: float = 0.0):
        d = dict(self.delta)
        a = dict(self.amp_delta)
        d[kind] = delta
        a[kind] = amp_delta
        return replace(self, delta=d, amp_delta=a)

    def noiseless(self) -> "OscillatorParams":
        return replace(self, sigma_resp=0.0, sigma_meas=0.0, p_miss=0.0)

    def key(self) -> tuple:
        """Hashable identity, used for memoization."""
        return (
            self.f0, self.A0, self.V_offset,
            tuple(sorted(self.delta.items())), tuple(sorted(self.amp_delta.items())),
            self.sigma_resp, self.sigma_meas, self.p_miss, self.est_noise_coef,
        )


@dataclass(frozen=True, eq=False)
class Trace:
    """Uniformly sampled potential, millivolts against seconds."""

    sample_rate: float
    samples: np.ndarray
    t_start: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if not self.sample_rate > 0:
            raise RangeError("sample_rate must be > 0")
        if samples.ndim != 1 or samples.size == 0:
            raise RangeError("trace needs a non-empty 1-D sample sequence")
        if not np.all(np.isfinite(samples)):
            raise RangeError("trace samples must be finite")

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t_start + np.arange(self.samples.size) / self.sample_rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    def index(self, t: float) -> int:
        return int(round((t - self.t_start) * self.sample_rate))

    def window(self, t0: float, t1: float) -> np.ndarray:
        return self.samples[self.index(t0):self.index(t1)]

    def scaled(self, k: float) -> "Trace":
        return Trace(self.sample_rate, self.samples * k, self.t_start)

    def shifted(self, dv: np.ndarray | float) -> "Trace":
        return Trace(self.sample_rate, self.samples + dv, self.t_start)


def fused_delta(active: Iterable[StimulusKind], params: OscillatorParams) -> float:
    """Additive fusion of the relative frequency deltas of ``active``."""
    total = 0.0
    for kind in sorted(set(active)):
        try:
            total += params.delta[kind]
        except KeyError:
            raise UnknownStimulus(f"no frequency delta configured for stimulus {kind}") from None
    if total <= -1:
        raise RangeError(f"fused delta {total} drives the frequency non-positive")
    return total


def fused_amp_delta(active: Iterable[StimulusKind], params: OscillatorParams) -> float:
    total = sum(params.amp_delta.get(k, 0.0) for k in set(active))
    if total <= -1:
        raise RangeError(f"fused amplitude delta {total} drives the amplitude non-positive")
    return total


def sample_response(nominal_delta: float, sigma_resp: float, rng_seed, size=None):
    """Nominal delta plus Gaussian jitter, reproducible for a given seed."""
    if sigma_resp < 0:
        raise RangeError("sigma_resp must be >= 0")
    rng = np.random.default_rng(rng_seed)
    return nominal_delta + rng.normal(0.0, sigma_resp, size)


# realized deltas are clipped so the frequency stays positive
_MIN_DELTA = -0.99


def realize(nominal, nominal_amp, params: OscillatorParams, rng: np.random.Generator, size=None):
    """Draw response realizations for stimulus windows.

    Consumes exactly one uniform (miss test) and one normal (jitter) per window,
    in that order, whatever the parameter values.
    """
    miss = rng.random(size) < params.p_miss
    eps = rng.normal(0.0, params.sigma_resp, size)
    delta = np.where(miss, 0.0, nominal) + eps
    amp = np.where(miss, 0.0, nominal_amp)
    delta = np.maximum(delta, _MIN_DELTA)
    if size is None:
        return float(delta), float(amp)
    return delta, amp


def _segments(program: StimulusProgram, n: int, sample_rate: float):
    """Split sample indices [0, n) into maximal runs of constant active set."""
    edges = {0, n}
    quantized = []
    for e in program:
        i0 = min(int(round(e.t_on * sample_rate)), n)
        i1 = min(int(round(e.t_off * sample_rate)), n)
        quantized.append((i0, i1, e.kind))
        edges.update((i0, i1))
    bounds = sorted(edges)
    segs: list[list] = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        if a == b:
            continue
        active = frozenset(k for i0, i1, k in quantized if i0 <= a < i1)
        if segs and segs[-1][2] == active:
            segs[-1][1] = b
        else:
            segs.append([a, b, active])
    return [tuple(s) for s in segs]


def simulate_trace(
    params: OscillatorParams,
    program: StimulusProgram,
    duration: float,
    sample_rate: float,
    seed,
) -> Trace:
    """Synthesize a phase-continuous potential trace for ``program``."""
    if not duration > 0:
        raise RangeError("duration must be > 0")
    if not sample_rate > 0:
        raise RangeError("sample_rate must be > 0")
    for e in program:
        if e.t_off > duration:
            raise InvalidProgram(
                f"event {e.kind} [{e.t_on}, {e.t_off}) lies outside [0, {duration})"
            )
    n = int(round(duration * sample_rate))
    if n < 1:
        raise RangeError("duration * sample_rate rounds to zero samples")
    segs = _segments(program, n, sample_rate)

    nominal = []
    f_max = params.f0
    for _, _, active in segs:
        if active:
            d, a = fused_delta(active, params), fused_amp_delta(active, params)
            nominal.append((d, a))
            f_max = max(f_max, params.f0 * (1 + d))
        else:
            nominal.append(None)
    if sample_rate < 10 * f_max:
        raise NyquistViolation(
            f"sample_rate {sample_rate} Hz is below 10x the peak frequency {f_max:.6g} Hz"
        )

    rng = np.random.default_rng(seed)
    phase0 = rng.uniform(0.0, 2 * np.pi)
    freq = np.empty(n)
    amp = np.empty(n)
    for (a, b, _), nom in zip(segs, nominal):
        if nom is None:
            freq[a:b] = params.f0
            amp[a:b] = params.A0
        else:
            d, ad = realize(nom[0], nom[1], params, rng)
            freq[a:b] = params.f0 * (1 + d)
            amp[a:b] = params.A0 * (1 + ad)
    # phase at sample k accumulates the frequency of samples 0..k-1
    phase = phase0 + (2 * np.pi / sample_rate) * (np.cumsum(freq) - freq)
    v = params.V_offset + amp * np.sin(phase)
    if params.sigma_meas > 0:
        v = v + rng.normal(0.0, params.sigma_meas, n)
    else:
        rng.normal(0.0, 1.0, n)  # keep the stream layout independent of sigma_meas
    return Trace(sample_rate, v, 0.0)


# -- trace files --------------------------------------------------------------

TRACE_HEADER = "time_s,voltage_mV"


def format_trace(trace: Trace) -> str:
    out = io.StringIO()
    out.write(TRACE_HEADER + "\n")
    for t, v in zip(trace.times.tolist(), trace.samples.tolist()):
        out.write(f"{t!r},{v!r}\n")
    return out.getvalue()


def write_trace(trace: Trace, path) -> None:
    Path(path).write_bytes(format_trace(trace).encode("utf-8"))


def parse_trace(text: str) -> Trace:
    lines = text.split("\n")
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise TraceFormatError(f"expected header {TRACE_HEADER!r}", line=1)
    times, volts = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise TraceFormatError("expected two comma-separated fields", line=lineno)
        try:
            t, v = float(parts[0]), float(parts[1])
        except ValueError:
            raise TraceFormatError(f"bad number in {line!r}", line=lineno) from None
        if not (math.isfinite(t) and math.isfinite(v)):
            raise TraceFormatError("non-finite value", line=lineno)
        times.append(t)
        volts.append(v)
    if len(times) < 2:
        raise TraceFormatError("a trace needs at least two samples")
    t = np.asarray(times)
    dt = np.diff(t)
    step = float(np.median(dt))
    if step <= 0 or np.max(np.abs(dt - step)) > 1e-6 * step + 1e-9:
        raise TraceFormatError("samples are not uniformly spaced in time")
    return Trace(1.0 / step, np.asarray(volts), float(t[0]))


def read_trace(path) -> Trace:
    return parse_trace(Path(path).read_text(encoding="utf-8"))
