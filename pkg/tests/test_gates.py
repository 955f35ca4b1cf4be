import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from physchip import gates
from physchip.errors import ArityMismatch, GateFailure, InvalidRatio, NoSolution, RangeError
from physchip.gates import (
    GateKind,
    GateSpec,
    analytic_accuracy,
    calibrate_noise,
    decode_output,
    encode_inputs,
    estimator_ratio_sd,
    format_calibration,
    gate_accuracy,
    measure_estimator_noise,
    run_gate,
    simulate_ratio_batch,
)
from physchip.oscillator import HEAT, LIGHT, OAT, OscillatorParams, fused_delta

SPEC = GateSpec()
P = OscillatorParams()
ALL = list(GateKind)


# -- kinds, encoding, decoding -------------------------------------------------

def test_truth_tables():
    table = {
        GateKind.OR: [0, 1, 1, 1], GateKind.AND: [0, 0, 0, 1], GateKind.XOR: [0, 1, 1, 0],
        GateKind.NOR: [1, 0, 0, 0], GateKind.NAND: [1, 1, 1, 0], GateKind.XNOR: [1, 0, 0, 1],
    }
    for kind, outs in table.items():
        assert [kind.truth(v) for v in kind.vectors()] == outs
    assert [GateKind.NOT.truth(v) for v in GateKind.NOT.vectors()] == [1, 0]


def test_encode_examples():
    prog = encode_inputs(GateKind.NOT, (1,))
    assert [e.kind for e in prog] == [LIGHT]
    assert len(encode_inputs(GateKind.AND, (0, 0))) == 0
    prog = encode_inputs(GateKind.OR, (1, 0))
    assert [e.kind for e in prog] == [HEAT]
    assert [e.kind for e in encode_inputs(GateKind.AND, (1, 1))] == [HEAT, OAT]


def test_stimulus_spans_onset_to_end_of_post_window():
    (e,) = encode_inputs(GateKind.OR, (0, 1))
    assert (e.t_on, e.t_off) == (SPEC.onset_s, SPEC.post[1]) == (600.0, 1800.0)


@pytest.mark.parametrize("kind,bits", [(GateKind.NOT, (0, 1)), (GateKind.AND, (1,)), (GateKind.OR, ())])
def test_arity(kind, bits):
    with pytest.raises(ArityMismatch):
        encode_inputs(kind, bits)


def test_decode_examples():
    assert decode_output(GateKind.AND, 1.80) == 1
    assert decode_output(GateKind.AND, 1.50) == 0
    assert decode_output(GateKind.NAND, 1.80) == 0
    assert decode_output(GateKind.NOT, 0.70) == 0
    assert decode_output(GateKind.NOT, 1.0) == 1
    assert decode_output(GateKind.XOR, 1.30) == 1
    assert decode_output(GateKind.XOR, 1.80) == 0


@pytest.mark.parametrize("r", [0.0, -1.0, float("nan"), float("inf")])
def test_invalid_ratio(r):
    with pytest.raises(InvalidRatio):
        decode_output(GateKind.OR, r)


@given(st.floats(1e-6, 1e3))
def test_complement_identity(r):
    for inv, base in ((GateKind.NOR, GateKind.OR), (GateKind.NAND, GateKind.AND), (GateKind.XNOR, GateKind.XOR)):
        assert decode_output(inv, r) == 1 - decode_output(base, r)


def test_default_thresholds_are_midpoints():
    mid = GateSpec.midpoints(P)
    assert mid.not_high == pytest.approx(0.85)
    assert mid.or_low == pytest.approx(1.15)
    assert mid.and_low == pytest.approx(1.65)
    assert mid.xor_band == pytest.approx((1.15, 1.65))


def test_thresholds_separate_nominal_ratios():
    r = {bits: 1 + fused_delta(gates.input_stimuli(GateKind.AND, bits), P) for bits in GateKind.AND.vectors()}
    assert r[(0, 0)] < SPEC.or_low < min(r[(0, 1)], r[(1, 0)])
    assert max(r[(0, 1)], r[(1, 0)]) < SPEC.and_low < r[(1, 1)]
    assert 1 + fused_delta({LIGHT}, P) < SPEC.not_high < 1.0


@pytest.mark.parametrize("kw", [dict(or_low=1.7), dict(not_high=1.0), dict(xor_band=(1.6, 1.2)),
                                dict(window_s=0), dict(latency_max_s=1000)])
def test_spec_invariants(kw):
    with pytest.raises(RangeError):
        GateSpec(**kw)


# -- single runs ---------------------------------------------------------------

@pytest.mark.parametrize("kind", ALL)
def test_zero_noise_truth_table(kind, quiet):
    for i, bits in enumerate(kind.vectors()):
        assert run_gate(kind, bits, quiet, seed=i).output == kind.truth(bits)


def test_zero_noise_ratios(quiet):
    run = run_gate(GateKind.AND, (1, 1), quiet, seed=3)
    assert run.output == 1 and run.ratio.r == pytest.approx(1.80, abs=0.02)
    run = run_gate(GateKind.OR, (0, 0), quiet, seed=3)
    assert run.output == 0 and run.ratio.r == pytest.approx(1.0, abs=0.02)


def test_latency_and_trace_retention(quiet):
    run = run_gate(GateKind.OR, (1, 0), quiet, seed=1, keep_trace=True)
    assert run.latency_s == 1200.0
    assert 20 * 60 <= run.latency_s <= 30 * 60
    assert len(run.trace) == 1800
    assert run_gate(GateKind.OR, (1, 0), quiet, seed=1).trace is None


def test_run_gate_deterministic(calibrated):
    a = run_gate(GateKind.XOR, (1, 0), calibrated, seed=77)
    b = run_gate(GateKind.XOR, (1, 0), calibrated, seed=77)
    assert a.ratio.r == b.ratio.r and a.output == b.output


def test_stalled_oscillation_is_gate_failure(quiet):
    slow = quiet.replace(delta={LIGHT: -0.9, HEAT: 0.5, OAT: 0.3})
    with pytest.raises(GateFailure):
        run_gate(GateKind.NOT, (1,), slow, seed=0)
    rep = gate_accuracy(GateKind.NOT, 200, slow, master_seed=0)
    assert rep.per_vector[(1,)] == 0.0 and rep.per_vector[(0,)] == 1.0


# -- Monte Carlo -------------------------------------------------------------------

def test_trials_floor():
    with pytest.raises(RangeError):
        gate_accuracy(GateKind.AND, 99, P)


def test_zero_noise_accuracy_is_exact(quiet):
    assert gate_accuracy(GateKind.AND, 2000, quiet, master_seed=1).overall == 1.0


def test_nand_report_mirrors_and(calibrated):
    a = gate_accuracy(GateKind.AND, 3000, calibrated, master_seed=5)
    n = gate_accuracy(GateKind.NAND, 3000, calibrated, master_seed=5)
    assert a.per_vector == n.per_vector and a.correct == n.correct


def test_report_csv(calibrated):
    rep = gate_accuracy(GateKind.OR, 500, calibrated, master_seed=2)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "gate,input_vector,trials,correct,accuracy"
    assert [l.split(",")[1] for l in lines[1:]] == ["00", "01", "10", "11", "all"]
    last = lines[-1].split(",")
    assert last[2] == "2000" and float(last[4]) == pytest.approx(rep.overall)


def test_worker_count_does_not_change_results(calibrated):
    gates._RATIO_CACHE.clear()
    one = gate_accuracy(GateKind.XOR, 2500, calibrated, master_seed=9, workers=1).to_csv()
    gates._RATIO_CACHE.clear()
    three = gate_accuracy(GateKind.XOR, 2500, calibrated, master_seed=9, workers=3).to_csv()
    assert one == three


def test_batch_agrees_with_full_trace_pipeline(calibrated):
    # the batch path synthesizes only the analysis windows; compare it to
    # complete run_gate traces on the least reliable vector
    n = 400
    slow = np.mean([run_gate(GateKind.AND, (1, 1), calibrated, seed=10_000 + i).output for i in range(n)])
    fast = gate_accuracy(GateKind.AND, 10_000, calibrated, master_seed=4).per_vector[(1, 1)]
    se = math.sqrt(fast * (1 - fast) / n)
    assert abs(slow - fast) < 3.5 * se


def test_noiseless_batch_ratio_matches_trace(quiet):
    rng = np.random.default_rng(0)
    r, ok = simulate_ratio_batch(np.array([0.5, -0.3, 0.8]), np.zeros(3), np.array([True, True, True]),
                                 quiet, SPEC, rng)
    assert ok.all()
    for bits, k in (((1, 0), 0), ((1, 1), 2)):
        assert run_gate(GateKind.AND, bits, quiet, seed=1).ratio.r == pytest.approx(r[k], abs=2e-3)


def test_accuracy_non_increasing_in_jitter(calibrated):
    trials = 3000
    prev = 1.0
    for s in (0.0, 0.05, 0.1, 0.2, 0.4):
        acc = gate_accuracy(GateKind.OR, trials, calibrated.replace(sigma_resp=s), master_seed=3).overall
        assert acc <= prev + 3 / math.sqrt(trials)
        prev = acc


@pytest.mark.parametrize("kind", ALL)
def test_monte_carlo_matches_closed_form(kind, calibrated):
    trials = 10_000
    mc = gate_accuracy(kind, trials, calibrated, master_seed=21)
    an = analytic_accuracy(kind, calibrated)
    for bits in kind.vectors():
        p = an.per_vector[bits]
        se = max(math.sqrt(p * (1 - p) / trials), 1 / trials)
        assert abs(mc.per_vector[bits] - p) < 3 * se + 1e-12, bits
    se_all = math.sqrt(an.overall * (1 - an.overall) / (trials * len(kind.vectors())))
    assert abs(mc.overall - an.overall) < 3 * se_all


# -- closed form and calibration -----------------------------------------------------

@pytest.mark.parametrize("kind", ALL)
def test_noiseless_closed_form(kind, quiet):
    acc = analytic_accuracy(kind, quiet)
    assert all(v == 1.0 for v in acc.per_vector.values())


def test_calibrated_closed_form(calibrated):
    assert analytic_accuracy(GateKind.AND, calibrated).overall == pytest.approx(0.90, abs=1e-3)
    assert analytic_accuracy(GateKind.OR, calibrated).overall == pytest.approx(0.78, abs=1e-3)
    assert analytic_accuracy(GateKind.NAND, calibrated).overall == pytest.approx(0.90, abs=1e-3)
    assert analytic_accuracy(GateKind.NOR, calibrated).overall == pytest.approx(0.78, abs=1e-3)


def test_estimator_noise_model():
    p = measure_estimator_noise(P)
    rng = np.random.default_rng(12345)
    n = 4096
    r, ok = simulate_ratio_batch(np.full(n, 0.8), np.zeros(n), np.ones(n, bool),
                                 p.replace(sigma_resp=0.0), SPEC, rng)
    predicted = estimator_ratio_sd(1.8, p)
    assert np.std(r[ok], ddof=1) == pytest.approx(predicted, rel=0.1)


def test_infeasible_targets():
    with pytest.raises(NoSolution):
        calibrate_noise({"AND": 0.51, "OR": 0.99})


def test_or_unreachable_reports_frontier():
    with pytest.raises(NoSolution) as exc:
        calibrate_noise({"AND": 0.999, "OR": 0.55})
    lo, hi = exc.value.frontier
    assert lo <= hi and not lo <= 0.55 <= hi


@pytest.mark.parametrize("t", [0.5, 1.0, 1.2])
def test_targets_must_be_open_unit_half(t):
    with pytest.raises(RangeError):
        calibrate_noise({"AND": t, "OR": 0.78})


def test_noise_vanishes_as_targets_approach_one():
    fits = [calibrate_noise({"AND": 1 - e, "OR": 1 - e}) for e in (1e-2, 1e-4, 1e-6)]
    sig = [f.sigma_resp for f in fits]
    miss = [f.p_miss for f in fits]
    assert sig[0] > sig[1] > sig[2] and sig[2] < 0.04
    assert miss[0] > miss[1] > miss[2] and miss[2] < 1e-5


def test_calibration_text(calibrated):
    text = format_calibration(calibrated)
    keys = [line.split("=")[0] for line in text.splitlines()]
    assert keys == ["sigma_resp", "sigma_meas", "p_miss", "est_noise_coef"]
