import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from physchip.errors import InvalidWindow, NoOscillation, WindowTooLong
from physchip.oscillator import HEAT, LIGHT, OscillatorParams, StimulusProgram, Trace, simulate_trace
from physchip.sigproc import (
    REPORT_HEADER,
    detrend,
    estimate_frequency,
    estimate_rows,
    format_report,
    frequency_change_ratio,
    tile_windows,
)

F0 = 0.010


def sine(f=F0, amp=5.0, n=600, fs=1.0, phase=0.0, t_start=0.0):
    t = np.arange(n) / fs
    return Trace(fs, amp * np.sin(2 * np.pi * f * t + phase), t_start)


def zero_crossing_frequency(x, fs):
    """Independent cross-check: rising zero crossings, linearly interpolated."""
    i = np.nonzero((x[:-1] < 0) & (x[1:] >= 0))[0]
    t = (i + x[i] / (x[i] - x[i + 1])) / fs
    return (len(t) - 1) / (t[-1] - t[0])


# -- detrend ------------------------------------------------------------------

def test_detrend_keeps_sine():
    tr = sine(n=1200)
    out = detrend(tr, 2 / F0)
    # ignore the shrinking-window ends
    core = out.samples[100:-100]
    assert np.max(np.abs(core)) == pytest.approx(5.0, rel=0.05)
    assert len(out) == len(tr)


def test_detrend_removes_ramp():
    tr = sine(n=1200)
    ramped = tr.shifted(0.01 * tr.times)
    out = detrend(ramped, 2 / F0)
    # the ramp itself leaves nothing behind, ends included
    assert np.allclose(out.samples, detrend(tr, 2 / F0).samples, atol=1e-9)
    # joint offset + slope + sinusoid fit away from the shrinking-window ends
    t, y = out.times[100:-100], out.samples[100:-100]
    w = 2 * np.pi * F0 * t
    basis = np.column_stack([np.ones_like(t), t, np.sin(w), np.cos(w)])
    slope = np.linalg.lstsq(basis, y, rcond=None)[0][1]
    assert abs(slope) < 1e-4


def test_detrend_constant_to_zero():
    out = detrend(Trace(1.0, np.full(500, 3.0)), 100)
    assert np.allclose(out.samples, 0.0)


def test_detrend_window_too_long():
    with pytest.raises(WindowTooLong):
        detrend(sine(n=300), 400)


# -- estimate_frequency --------------------------------------------------------

def test_noiseless_sine():
    est = estimate_frequency(sine(), 0, 600)
    assert est.f_hat == pytest.approx(F0, rel=0.01)
    assert est.amplitude_hat == pytest.approx(5.0, rel=0.05)
    assert est.n_cycles == 6
    assert est.window == (0.0, 600.0)


def test_default_window_is_600s():
    est = estimate_frequency(sine(n=1000, t_start=50.0))
    assert est.window == (50.0, 650.0)


@pytest.mark.parametrize("f", [0.006, 0.0085, 0.012, 0.0173, 0.025])
def test_agrees_with_zero_crossings(f):
    tr = sine(f=f, n=600, phase=0.3)
    assert estimate_frequency(tr, 0, 600).f_hat == pytest.approx(zero_crossing_frequency(tr.samples, 1.0), rel=0.01)


def test_constant_has_no_oscillation():
    with pytest.raises(NoOscillation):
        estimate_frequency(Trace(1.0, np.full(600, 3.0)), 0, 600)


def test_fewer_than_two_cycles_rejected():
    with pytest.raises(NoOscillation):
        estimate_frequency(sine(f=0.003), 0, 600)


def test_noisy_sine_95th_percentile():
    errs = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        tr = sine(phase=rng.uniform(0, 2 * np.pi)).shifted(rng.normal(0, 1.6, 600))
        errs.append(abs(estimate_frequency(tr, 0, 600).f_hat / F0 - 1))
    assert np.percentile(errs, 95) < 0.05


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0, 2 * np.pi))
def test_scale_invariance(k, phase):
    tr = sine(phase=phase).shifted(np.random.default_rng(1).normal(0, 0.5, 600))
    # equal up to the rounding of k * x itself
    assert estimate_frequency(tr.scaled(k), 0, 600).f_hat == pytest.approx(
        estimate_frequency(tr, 0, 600).f_hat, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1200))
def test_shift_invariance(offset):
    tr = sine(n=2400)
    base = estimate_frequency(tr, 0, 600).f_hat
    assert estimate_frequency(tr, offset, offset + 600).f_hat == pytest.approx(base, rel=0.005)


def test_error_shrinks_with_window_length():
    errs = []
    for cycles in range(2, 11):
        n = int(round(cycles / F0))
        x = np.array([sine(n=n, phase=p).samples for p in np.linspace(0, 2 * np.pi, 16, endpoint=False)])
        f, _, _, _ = estimate_rows(x, 1.0, amplitude=False)
        errs.append(np.mean(np.abs(f / F0 - 1)))
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_batched_matches_single():
    rng = np.random.default_rng(4)
    rows = np.array([sine(f=f).samples + rng.normal(0, 0.5, 600) for f in (0.008, 0.01, 0.015)])
    f, a, nc, ok = estimate_rows(rows, 1.0)
    for i in range(3):
        e = estimate_frequency(Trace(1.0, rows[i]), 0, 600)
        assert e.f_hat == pytest.approx(f[i], rel=1e-12)
        assert e.amplitude_hat == pytest.approx(a[i], rel=1e-9)
        assert e.n_cycles == nc[i] and ok[i]


@pytest.mark.parametrize("t0,t1", [(100, 100), (-50, 550), (0, 700), (0, 5)])
def test_bad_windows(t0, t1):
    with pytest.raises(InvalidWindow):
        estimate_frequency(sine(), t0, t1)


# -- change ratio --------------------------------------------------------------

@pytest.mark.parametrize("kind,expected", [(HEAT, 1.50), (LIGHT, 0.70)])
def test_noiseless_ratio(kind, expected):
    p = OscillatorParams().noiseless()
    tr = simulate_trace(p, StimulusProgram.of((600, 1800, kind)), 1800, 1.0, seed=6)
    cr = frequency_change_ratio(tr, (0, 600), (1200, 1800))
    assert cr.r == pytest.approx(expected, abs=0.02)
    assert cr.amp_ratio == pytest.approx(1.0, abs=0.02)
    assert cr.r == pytest.approx(cr.post.f_hat / cr.pre.f_hat)


def test_stationary_ratio_is_one():
    tr = sine(n=1800)
    assert frequency_change_ratio(tr, (0, 600), (1200, 1800)).r == pytest.approx(1.0, abs=0.005)


def test_overlapping_windows_rejected():
    with pytest.raises(InvalidWindow):
        frequency_change_ratio(sine(n=1800), (0, 700), (600, 1200))


def test_ratio_propagates_no_oscillation():
    x = np.concatenate([sine().samples, np.zeros(600)])
    with pytest.raises(NoOscillation):
        frequency_change_ratio(Trace(1.0, x), (0, 600), (600, 1200))


def test_report_format():
    tr = sine(n=1300)
    wins = tile_windows(tr)
    assert wins == [(0.0, 600.0), (600.0, 1200.0)]
    text = format_report([estimate_frequency(tr, *w) for w in wins])
    lines = text.splitlines()
    assert lines[0] == REPORT_HEADER
    assert len(lines) == 3 and lines[1].startswith("0.0,600.0,")
