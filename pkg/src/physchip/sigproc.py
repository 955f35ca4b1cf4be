"""Frequency, amplitude and change-ratio estimation on potential traces.

Frequency comes from the peak of a Hann-windowed, zero-padded periodogram of
the linearly detrended window, refined by a parabola through the
log-magnitudes of the peak bin and its two neighbours.  Amplitude is the
least-squares sine amplitude at the refined frequency.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import InvalidWindow, NoOscillation, WindowTooLong
from .oscillator import Trace

DEFAULT_WINDOW_S = 600.0
DEFAULT_SETTLE_S = 600.0
PEAK_TO_MEDIAN = 4.0
MIN_CYCLES = 2
PAD_FACTOR = 4


@dataclass(frozen=True)
class FrequencyEstimate:
    f_hat: float
    amplitude_hat: float
    window: tuple[float, float]
    n_cycles: int


@dataclass(frozen=True)
class ChangeRatio:
    r: float
    amp_ratio: float
    pre: FrequencyEstimate
    post: FrequencyEstimate


def detrend(trace: Trace, baseline_window: float) -> Trace:
    """Subtract a centred moving average of width ``baseline_window`` seconds.

    Near the ends the averaging window shrinks symmetrically, so linear trends
    are removed exactly everywhere.  Pick ``baseline_window`` of at least two
    oscillation periods.
    """
    if not baseline_window > 0:
        raise InvalidWindow("baseline_window must be > 0")
    if baseline_window > trace.duration:
        raise WindowTooLong(
            f"baseline window {baseline_window} s exceeds trace duration {trace.duration} s"
        )
    x = trace.samples
    n = x.size
    h = int(round(baseline_window * trace.sample_rate / 2))
    i = np.arange(n)
    w = np.minimum(h, np.minimum(i, n - 1 - i))
    cs = np.concatenate(([0.0], np.cumsum(x)))
    mean = (cs[i + w + 1] - cs[i - w]) / (2 * w + 1)
    return Trace(trace.sample_rate, x - mean, trace.t_start)


def _linear_detrend(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    tc = np.arange(n) - (n - 1) / 2
    slope = (x @ tc) / (tc @ tc)
    return x - x.mean(axis=-1, keepdims=True) - slope[..., None] * tc


def estimate_rows(x: np.ndarray, sample_rate: float, amplitude: bool = True):
    """Vectorized estimator over the rows of ``x``.

    Returns ``(f_hat, amp_hat, n_cycles, ok)``; rows with ``ok`` False carry
    no significant oscillation and their other entries are meaningless.
    ``amp_hat`` is None when ``amplitude`` is False.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rows, n = x.shape
    xd = _linear_detrend(x)
    rms = np.sqrt(np.mean(xd * xd, axis=1))
    live = rms > 0
    safe = np.where(live, rms, 1.0)
    nfft = PAD_FACTOR * n
    spec = scipy.fft.rfft(xd / safe[:, None] * np.hanning(n), nfft, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    body = power[:, 1:-1]
    k = np.argmax(body, axis=1) + 1
    idx = np.arange(rows)
    peak = power[idx, k]
    # median over the unpadded bin grid
    median = np.median(power[:, PAD_FACTOR::PAD_FACTOR], axis=1)
    significant = live & (peak > 0) & (peak >= PEAK_TO_MEDIAN * median)

    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.log(np.maximum(power[idx[:, None], k[:, None] + np.array([-1, 0, 1])], 1e-300))
        denom = lp[:, 0] - 2 * lp[:, 1] + lp[:, 2]
        d = np.where(denom < 0, 0.5 * (lp[:, 0] - lp[:, 2]) / denom, 0.0)
    d = np.clip(np.nan_to_num(d), -0.5, 0.5)
    f_hat = (k + d) * sample_rate / nfft

    duration = n / sample_rate
    # a cycle within 1e-3 of complete counts, absorbing the tiny estimator bias
    n_cycles = np.floor(f_hat * duration + 1e-3).astype(int)
    ok = significant & (n_cycles >= MIN_CYCLES)

    if not amplitude:
        return f_hat, None, n_cycles, ok

    # joint least-squares fit of offset, slope and sinusoid at f_hat
    t = np.arange(n) / sample_rate
    arg = 2 * np.pi * f_hat[:, None] * t
    basis = np.stack(
        [np.ones_like(arg), np.broadcast_to(t - t.mean(), arg.shape), np.cos(arg), np.sin(arg)],
        axis=1,
    )
    gram = basis @ basis.transpose(0, 2, 1)
    rhs = np.einsum("rkn,rn->rk", basis, x)
    gram[~ok] = np.eye(4)
    coef = np.linalg.solve(gram, rhs[..., None])[..., 0]
    amp = np.hypot(coef[:, 2], coef[:, 3])
    return f_hat, amp, n_cycles, ok


def _window_samples(trace: Trace, t0: float, t1: float) -> np.ndarray:
    tol = 0.5 / trace.sample_rate
    if not t1 > t0:
        raise InvalidWindow(f"window [{t0}, {t1}] is empty")
    if t0 < trace.t_start - tol or t1 > trace.t_end + tol:
        raise InvalidWindow(
            f"window [{t0}, {t1}] is outside the trace span [{trace.t_start}, {trace.t_end}]"
        )
    x = trace.window(t0, t1)
    if x.size < 8:
        raise InvalidWindow(f"window [{t0}, {t1}] holds only {x.size} samples")
    return x


def estimate_frequency(trace: Trace, t0: float | None = None, t1: float | None = None) -> FrequencyEstimate:
    """Dominant oscillation frequency and amplitude in ``[t0, t1)``.

    Defaults to the first 600 s of the trace.  Raises :class:`NoOscillation`
    when the periodogram peak is under 4x the median power or the window holds
    fewer than two cycles.
    """
    if t0 is None:
        t0 = trace.t_start
    if t1 is None:
        t1 = t0 + DEFAULT_WINDOW_S
    x = _window_samples(trace, t0, t1)
    f, a, nc, ok = estimate_rows(x[None, :], trace.sample_rate)
    if not ok[0]:
        raise NoOscillation(f"no significant oscillation in window [{t0}, {t1}]")
    return FrequencyEstimate(float(f[0]), float(a[0]), (float(t0), float(t1)), int(nc[0]))


def frequency_change_ratio(trace: Trace, pre: tuple[float, float], post: tuple[float, float]) -> ChangeRatio:
    """Ratio of post-window to pre-window frequency (and amplitude)."""
    if not (pre[1] <= post[0] or post[1] <= pre[0]):
        raise InvalidWindow(f"pre window {pre} overlaps post window {post}")
    e_pre = estimate_frequency(trace, *pre)
    e_post = estimate_frequency(trace, *post)
    return ChangeRatio(
        e_post.f_hat / e_pre.f_hat,
        e_post.amplitude_hat / e_pre.amplitude_hat,
        e_pre,
        e_post,
    )


def tile_windows(trace: Trace, window_s: float = DEFAULT_WINDOW_S) -> list[tuple[float, float]]:
    n = int(math.floor(trace.duration / window_s + 1e-9))
    return [(trace.t_start + i * window_s, trace.t_start + (i + 1) * window_s) for i in range(n)]


REPORT_HEADER = "window_t0,window_t1,f_hat_hz,amp_hat_mv,n_cycles"


def format_report(estimates) -> str:
    out = io.StringIO()
    out.write(REPORT_HEADER + "\n")
    for e in estimates:
        out.write(f"{e.window[0]!r},{e.window[1]!r},{e.f_hat!r},{e.amplitude_hat!r},{e.n_cycles}\n")
    return out.getvalue()
