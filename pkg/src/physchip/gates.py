"""Frequency-threshold logic gates.

Inputs are applied as stimuli: light for the NOT gate, heat (input A) and an
oat flake (input B) for the two-input gates.  The output bit is decoded from
the ratio ``r = f_post / f_pre`` of oscillation frequencies measured before
stimulation and after the settle time.

Timeline of one gate run (defaults in brackets)::

    [0, window_s)                      pre window            [0, 600)
    window_s                           stimulus onset        600
    [window_s, window_s + settle_s)    settle                [600, 1200)
    [.., .. + window_s)                post window           [1200, 1800)
"""

from __future__ import annotations

import enum
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import norm

from .errors import (
    ArityMismatch,
    GateFailure,
    InvalidRatio,
    NoOscillation,
    NoSolution,
    RangeError,
)
from .oscillator import (
    HEAT,
    LIGHT,
    OAT,
    OscillatorParams,
    StimulusProgram,
    Trace,
    fused_amp_delta,
    fused_delta,
    realize,
    simulate_trace,
)
from .sigproc import ChangeRatio, estimate_rows, frequency_change_ratio

BLOCK = 1024


class GateKind(str, enum.Enum):
    NOT = "NOT"
    OR = "OR"
    AND = "AND"
    NOR = "NOR"
    NAND = "NAND"
    XOR = "XOR"
    XNOR = "XNOR"

    def __str__(self):
        return self.value

    @property
    def arity(self) -> int:
        return 1 if self is GateKind.NOT else 2

    @property
    def base(self) -> "GateKind":
        """The non-inverted gate sharing this gate's decision rule."""
        return _COMPLEMENT.get(self, self)

    @property
    def inverted(self) -> bool:
        return self in _COMPLEMENT

    def truth(self, bits) -> int:
        bits = tuple(int(b) for b in bits)
        if len(bits) != self.arity:
            raise ArityMismatch(f"{self} takes {self.arity} input(s), got {len(bits)}")
        if self is GateKind.NOT:
            return 1 - bits[0]
        a, b = bits
        out = {
            GateKind.OR: a | b, GateKind.AND: a & b, GateKind.XOR: a ^ b,
        }[self.base]
        return 1 - out if self.inverted else out

    def vectors(self) -> list[tuple[int, ...]]:
        return list(itertools.product((0, 1), repeat=self.arity))

    @classmethod
    def parse(cls, text: str) -> "GateKind":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ValueError(f"unknown gate kind {text!r}") from None


_COMPLEMENT = {GateKind.NOR: GateKind.OR, GateKind.NAND: GateKind.AND, GateKind.XNOR: GateKind.XOR}


@dataclass(frozen=True)
class GateSpec:
    """Decode thresholds on the frequency-change ratio plus the run timeline."""

    not_high: float = 0.85
    or_low: float = 1.15
    and_low: float = 1.65
    xor_band: tuple[float, float] = (1.15, 1.65)
    settle_s: float = 600.0
    window_s: float = 600.0
    sample_rate: float = 1.0
    latency_max_s: float = 1800.0

    def __post_init__(self):
        object.__setattr__(self, "xor_band", tuple(float(v) for v in self.xor_band))
        checks = [
            (0 < self.or_low < self.and_low, "thresholds need 0 < or_low < and_low"),
            (0 < self.not_high < 1, "not_high must lie in (0, 1)"),
            (len(self.xor_band) == 2 and 0 < self.xor_band[0] < self.xor_band[1],
             "xor_band needs 0 < lo < hi"),
            (self.settle_s >= 0, "settle_s must be >= 0"),
            (self.window_s > 0, "window_s must be > 0"),
            (self.sample_rate > 0, "sample_rate must be > 0"),
            (self.latency_max_s >= self.latency_s, "latency_max_s must be >= settle_s + window_s"),
        ]
        for ok, msg in checks:
            if not ok:
                raise RangeError(msg)

    @classmethod
    def midpoints(cls, params: OscillatorParams, **kw) -> "GateSpec":
        """Thresholds halfway between adjacent nominal ratios of ``params``."""
        light = 1 + fused_delta({LIGHT}, params)
        levels = sorted(1 + fused_delta(s, params) for s in ((), {HEAT}, {OAT}, {HEAT, OAT}))
        r00, r_lo, r_hi, r11 = levels
        or_low = (r00 + r_lo) / 2
        and_low = (r_hi + r11) / 2
        return cls(not_high=(light + 1) / 2, or_low=or_low, and_low=and_low,
                   xor_band=(or_low, and_low), **kw)

    @property
    def onset_s(self) -> float:
        return self.window_s

    @property
    def pre(self) -> tuple[float, float]:
        return (0.0, self.window_s)

    @property
    def post(self) -> tuple[float, float]:
        t = self.window_s + self.settle_s
        return (t, t + self.window_s)

    @property
    def duration_s(self) -> float:
        return self.post[1]

    @property
    def latency_s(self) -> float:
        # the pre window runs before the stimulus is applied
        return self.settle_s + self.window_s


@dataclass(frozen=True, eq=False)
class GateRun:
    output: int
    ratio: ChangeRatio
    latency_s: float
    trace: Trace | None = None


@dataclass(frozen=True)
class AccuracyReport:
    gate: str
    per_vector: dict
    correct: dict
    trials: int
    seed: int

    @property
    def overall(self) -> float:
        return float(np.mean(list(self.per_vector.values())))

    def to_csv(self) -> str:
        return format_accuracy_rows(self.gate, self.per_vector, self.correct, self.trials)


def _bits_label(bits) -> str:
    return "".join(str(int(b)) for b in bits)


def format_accuracy_rows(name, per_vector, correct, trials, extra=None) -> str:
    """CSV rows ``gate,input_vector,trials,correct,accuracy[,extra...]``.

    A closing ``all`` row holds the unweighted mean over input vectors.
    """
    extra = extra or {}
    header = "gate,input_vector,trials,correct,accuracy"
    tail = "".join(f",{v}" for v in extra.values())
    if extra:
        header += "," + ",".join(extra)
    out = io.StringIO()
    out.write(header + "\n")
    for bits, acc in per_vector.items():
        out.write(f"{name},{_bits_label(bits)},{trials},{correct[bits]},{acc!r}{tail}\n")
    overall = float(np.mean(list(per_vector.values())))
    total = sum(correct.values())
    out.write(f"{name},all,{trials * len(per_vector)},{total},{overall!r}{tail}\n")
    return out.getvalue()


# -- encode / decode -----------------------------------------------------------

def input_stimuli(kind: GateKind, bits) -> frozenset:
    kind = GateKind(kind)
    bits = tuple(int(b) for b in bits)
    if len(bits) != kind.arity:
        raise ArityMismatch(f"{kind} takes {kind.arity} input(s), got {len(bits)}")
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"input bits must be 0 or 1, got {bits}")
    if kind is GateKind.NOT:
        return frozenset({LIGHT} if bits[0] else ())
    a, b = bits
    return frozenset(([HEAT] if a else []) + ([OAT] if b else []))


def encode_inputs(kind: GateKind, bits, spec: GateSpec | None = None) -> StimulusProgram:
    """Stimulus program applying ``bits`` from onset to the end of the post window."""
    spec = spec or GateSpec()
    t_on, t_off = spec.onset_s, spec.duration_s
    return StimulusProgram.of(*((t_on, t_off, k) for k in sorted(input_stimuli(kind, bits))))


def _decide_base(base: GateKind, r, spec: GateSpec):
    if base is GateKind.NOT:
        return r > spec.not_high
    if base is GateKind.OR:
        return r > spec.or_low
    if base is GateKind.AND:
        return r > spec.and_low
    lo, hi = spec.xor_band
    return (r > lo) & (r <= hi)


def decode_output(kind: GateKind, r: float, spec: GateSpec | None = None) -> int:
    """Output bit for frequency-change ratio ``r``."""
    spec = spec or GateSpec()
    kind = GateKind(kind)
    if not (math.isfinite(r) and r > 0):
        raise InvalidRatio(f"ratio must be finite and > 0, got {r}")
    bit = int(_decide_base(kind.base, r, spec))
    return 1 - bit if kind.inverted else bit


def decode_array(kind: GateKind, r: np.ndarray, spec: GateSpec) -> np.ndarray:
    kind = GateKind(kind)
    bit = _decide_base(kind.base, r, spec).astype(np.int8)
    return 1 - bit if kind.inverted else bit


# -- single runs ---------------------------------------------------------------

def run_gate(kind, bits, params: OscillatorParams, spec: GateSpec | None = None, seed=0,
             keep_trace: bool = False) -> GateRun:
    """Encode, simulate, measure and decode one gate evaluation."""
    spec = spec or GateSpec()
    kind = GateKind(kind)
    program = encode_inputs(kind, bits, spec)
    trace = simulate_trace(params, program, spec.duration_s, spec.sample_rate, seed)
    try:
        ratio = frequency_change_ratio(trace, spec.pre, spec.post)
    except NoOscillation as exc:
        raise GateFailure(f"{kind}{tuple(bits)}: {exc}") from exc
    return GateRun(decode_output(kind, ratio.r, spec), ratio, spec.latency_s,
                   trace if keep_trace else None)


# -- batched simulation -----------------------------------------------------------

def simulate_ratio_batch(nominal, nominal_amp, active, params: OscillatorParams,
                         spec: GateSpec, rng: np.random.Generator):
    """Frequency-change ratios for a batch of independent gate runs.

    Row ``i`` is a run whose stimulus set has fused delta ``nominal[i]`` (and
    amplitude delta ``nominal_amp[i]``), or no stimulus when ``active[i]`` is
    False.  Only the two analysis windows are synthesized; phase is carried
    analytically across the settle period, which matches
    :func:`physchip.oscillator.simulate_trace` sample for sample in the
    noiseless case.  Returns ``(r, ok)``.
    """
    nominal = np.asarray(nominal, dtype=float)
    active = np.asarray(active, dtype=bool)
    b = nominal.size
    fs = spec.sample_rate
    nw = int(round(spec.window_s * fs))
    s0 = int(round(spec.onset_s * fs))
    p0 = int(round(spec.post[0] * fs))

    phase0 = rng.uniform(0.0, 2 * np.pi, b)
    delta, amp = realize(nominal, np.asarray(nominal_amp, dtype=float), params, rng, size=b)
    delta = np.where(active, delta, 0.0)
    amp = np.where(active, amp, 0.0)
    f1 = params.f0 * (1 + delta)

    k = np.arange(nw)
    w = 2 * np.pi / fs
    pre = phase0[:, None] + w * params.f0 * k
    post = phase0[:, None] + w * (params.f0 * s0 + f1[:, None] * (p0 + k - s0))
    v = np.empty((2 * b, nw))
    v[:b] = params.V_offset + params.A0 * np.sin(pre)
    v[b:] = params.V_offset + (params.A0 * (1 + amp))[:, None] * np.sin(post)
    noise = rng.normal(0.0, 1.0, (2, b, nw))
    if params.sigma_meas > 0:
        v += params.sigma_meas * noise.reshape(2 * b, nw)
    f, _, _, ok = estimate_rows(v, fs, amplitude=False)
    return f[b:] / f[:b], ok[:b] & ok[b:]


def block_rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), *(int(k) for k in key)])


def _blocks(trials: int):
    return [(i, min(BLOCK, trials - i)) for i in range(0, trials, BLOCK)]


def map_blocks(fn, trials: int, workers: int = 1):
    """Apply ``fn(block_index, start, size)`` over fixed-size blocks, in order.

    Blocking does not depend on ``workers``, so results are identical for any
    worker count.
    """
    jobs = [(j, start, size) for j, (start, size) in enumerate(_blocks(trials))]
    if workers <= 1 or len(jobs) == 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


_FAMILY = {1: 0, 2: 1}
_RATIO_CACHE: dict = {}
_RATIO_CACHE_SIZE = 64


def vector_ratios(arity: int, bits, trials: int, params: OscillatorParams, spec: GateSpec,
                  master_seed: int, workers: int = 1):
    """Ratios of ``trials`` runs of a gate family on one input vector.

    All two-input gates share an encoding, so AND/OR/NAND/... runs with the same
    master seed see the same ratios.  Results are memoized.
    """
    bits = tuple(int(x) for x in bits)
    key = (arity, bits, trials, params.key(), spec, int(master_seed))
    hit = _RATIO_CACHE.get(key)
    if hit is not None:
        return hit
    probe = GateKind.NOT if arity == 1 else GateKind.AND
    stim = input_stimuli(probe, bits)
    act = bool(stim)
    d = fused_delta(stim, params) if act else 0.0
    a = fused_amp_delta(stim, params) if act else 0.0
    vindex = int("".join(map(str, bits)), 2)

    def one(j, start, size):
        rng = block_rng(master_seed, _FAMILY[arity], vindex, j)
        return simulate_ratio_batch(np.full(size, d), np.full(size, a), np.full(size, act),
                                    params, spec, rng)

    parts = map_blocks(one, trials, workers)
    r = np.concatenate([p[0] for p in parts])
    ok = np.concatenate([p[1] for p in parts])
    if len(_RATIO_CACHE) >= _RATIO_CACHE_SIZE:
        _RATIO_CACHE.pop(next(iter(_RATIO_CACHE)))
    _RATIO_CACHE[key] = (r, ok)
    return r, ok


def gate_accuracy(kind, trials: int, params: OscillatorParams, spec: GateSpec | None = None,
                  master_seed: int = 0, workers: int = 1) -> AccuracyReport:
    """Monte Carlo accuracy per input vector; failed runs count as wrong."""
    spec = spec or GateSpec()
    kind = GateKind(kind)
    if trials < 100:
        raise RangeError("gate_accuracy needs trials >= 100")
    per, correct = {}, {}
    for bits in kind.vectors():
        r, ok = vector_ratios(kind.arity, bits, trials, params, spec, master_seed, workers)
        out = decode_array(kind, r, spec)
        good = int(np.count_nonzero(ok & (out == kind.truth(bits))))
        per[bits] = good / trials
        correct[bits] = good
    return AccuracyReport(str(kind), per, correct, trials, int(master_seed))


# -- closed form -------------------------------------------------------------------

def estimator_ratio_sd(r, params: OscillatorParams, amp_pre=1.0, amp_post=1.0):
    """Standard deviation of the estimated ratio due to measurement noise.

    The estimator's absolute frequency error is taken as independent of the
    frequency, so the post-window error scales with 1/f0 and the pre-window
    error enters multiplied by ``r``.
    """
    if params.sigma_meas == 0:
        return 0.0 * np.asarray(r)
    if params.est_noise_coef is None:
        raise ValueError("est_noise_coef is unset; run measure_estimator_noise first")
    e = params.est_noise_coef * params.sigma_meas / params.A0
    return e * np.sqrt((1 / amp_post) ** 2 + (np.asarray(r) / amp_pre) ** 2)


def measure_estimator_noise(params: OscillatorParams, spec: GateSpec | None = None,
                            trials: int = 4096, seed: int = 20140) -> OscillatorParams:
    """Return ``params`` with ``est_noise_coef`` measured on synthetic baselines."""
    spec = spec or GateSpec()
    if params.sigma_meas == 0:
        return params.replace(est_noise_coef=0.0)
    rng = np.random.default_rng(seed)
    b = trials // 2
    r, ok = simulate_ratio_batch(np.zeros(b), np.zeros(b), np.zeros(b, bool),
                                 params.replace(sigma_resp=0.0, p_miss=0.0), spec, rng)
    # baseline ratio sd = coef * sigma/A * sqrt(2)
    sd = float(np.std(r[ok], ddof=1))
    coef = sd / math.sqrt(2) / (params.sigma_meas / params.A0)
    return params.replace(est_noise_coef=coef)


@dataclass(frozen=True)
class AnalyticAccuracy:
    gate: str
    per_vector: dict = field(default_factory=dict)

    @property
    def overall(self) -> float:
        return float(np.mean(list(self.per_vector.values())))


def _p_one(base: GateKind, m, sd, spec: GateSpec):
    """P(decoded bit of ``base`` is 1) for r ~ N(m, sd^2)."""
    def above(th):
        if sd == 0:
            return float(m > th)
        return norm.sf((th - m) / sd)
    if base is GateKind.NOT:
        return above(spec.not_high)
    if base is GateKind.OR:
        return above(spec.or_low)
    if base is GateKind.AND:
        return above(spec.and_low)
    lo, hi = spec.xor_band
    if sd == 0:
        return float(lo < m <= hi)
    return norm.cdf((hi - m) / sd) - norm.cdf((lo - m) / sd)


def response_states(stim, params: OscillatorParams):
    """(weight, nominal ratio, post amplitude factor, jitter sd) per response outcome."""
    if not stim:
        return [(1.0, 1.0, 1.0, 0.0)]
    r = 1 + fused_delta(stim, params)
    a = 1 + fused_amp_delta(stim, params)
    q = params.p_miss
    states = [(1 - q, r, a, params.sigma_resp)]
    if q > 0:
        states.append((q, 1.0, 1.0, params.sigma_resp))
    return states


def vector_accuracy(kind, bits, params: OscillatorParams, spec: GateSpec) -> float:
    kind = GateKind(kind)
    want = kind.truth(bits)
    total = 0.0
    for w, r, a, s_resp in response_states(input_stimuli(kind, bits), params):
        sd = math.hypot(s_resp, float(estimator_ratio_sd(r, params, 1.0, a)))
        p1 = _p_one(kind.base, r, sd, spec)
        if kind.inverted:
            p1 = 1 - p1
        total += w * (p1 if want == 1 else 1 - p1)
    return float(total)


def analytic_accuracy(kind, params: OscillatorParams, spec: GateSpec | None = None) -> AnalyticAccuracy:
    """Closed-form accuracy per input vector under the Gaussian noise model."""
    spec = spec or GateSpec()
    kind = GateKind(kind)
    if params.sigma_meas > 0 and params.est_noise_coef is None:
        params = measure_estimator_noise(params, spec)
    per = {bits: vector_accuracy(kind, bits, params, spec) for bits in kind.vectors()}
    return AnalyticAccuracy(str(kind), per)


# -- calibration ---------------------------------------------------------------------

_SIGMA_MAX = 5.0


def calibrate_noise(targets=None, params: OscillatorParams | None = None,
                    spec: GateSpec | None = None, tol: float = 1e-3) -> OscillatorParams:
    """Fit response jitter ``sigma_resp`` and non-response probability ``p_miss``.

    Solves analytic AND accuracy = ``targets['AND']`` and OR accuracy =
    ``targets['OR']`` with ``sigma_meas`` held fixed.  For each candidate
    ``p_miss`` the AND equation is solved for ``sigma_resp`` by Brent's
    method; the OR residual is then root-bracketed over ``p_miss``.
    """
    targets = dict(targets or {"AND": 0.90, "OR": 0.78})
    params = params or OscillatorParams()
    spec = spec or GateSpec()
    t_and, t_or = float(targets["AND"]), float(targets["OR"])
    for t in (t_and, t_or):
        if not 0.5 < t < 1.0:
            raise RangeError(f"accuracy targets must lie in (0.5, 1), got {t}")
    if params.sigma_meas > 0 and params.est_noise_coef is None:
        params = measure_estimator_noise(params, spec)

    def acc(kind, sigma, q):
        p = params.replace(sigma_resp=sigma, p_miss=q)
        return float(np.mean([vector_accuracy(kind, v, p, spec) for v in kind.vectors()]))

    sig_grid = np.concatenate(([0.0], np.geomspace(1e-5, _SIGMA_MAX, 120)))

    def sigma_for_and(q):
        vals = np.array([acc(GateKind.AND, s, q) for s in sig_grid]) - t_and
        for i in range(len(sig_grid) - 1):
            if vals[i] == 0:
                return sig_grid[i]
            if vals[i] > 0 > vals[i + 1]:
                return optimize.brentq(lambda s: acc(GateKind.AND, s, q) - t_and,
                                       sig_grid[i], sig_grid[i + 1], xtol=1e-12)
        return None

    q_grid = np.concatenate(([0.0], np.geomspace(1e-6, 0.999, 80)))
    feasible = []
    for q in q_grid:
        s = sigma_for_and(q)
        if s is not None:
            feasible.append((q, s, acc(GateKind.OR, s, q) - t_or))
    if not feasible:
        raise NoSolution(f"AND accuracy {t_and} is unreachable by any noise level")

    solution = None
    for (q0, _, g0), (q1, _, g1) in zip(feasible[:-1], feasible[1:]):
        if g0 == 0:
            solution = q0
            break
        if np.sign(g0) != np.sign(g1):
            def resid(q):
                s = sigma_for_and(q)
                return acc(GateKind.OR, s, q) - t_or
            solution = optimize.brentq(resid, q0, q1, xtol=1e-12)
            break
    if solution is None and feasible[-1][2] == 0:
        solution = feasible[-1][0]
    if solution is None:
        ors = [g + t_or for _, _, g in feasible]
        frontier = (min(ors), max(ors))
        raise NoSolution(
            f"OR accuracy {t_or} is unreachable when AND is {t_and}; "
            f"achievable OR range is [{frontier[0]:.4f}, {frontier[1]:.4f}]",
            frontier=frontier,
        )
    sigma = sigma_for_and(solution)
    fitted = params.replace(sigma_resp=float(sigma), p_miss=float(solution))
    for kind, t in ((GateKind.AND, t_and), (GateKind.OR, t_or)):
        got = acc(kind, sigma, solution)
        if abs(got - t) >= tol:
            raise NoSolution(f"calibration residual for {kind} is {got - t:.2e}")
    return fitted


def format_calibration(params: OscillatorParams) -> str:
    lines = [
        f"sigma_resp={params.sigma_resp!r}",
        f"sigma_meas={params.sigma_meas!r}",
        f"p_miss={params.p_miss!r}",
    ]
    if params.est_noise_coef is not None:
        lines.append(f"est_noise_coef={params.est_noise_coef!r}")
    return "\n".join(lines) + "\n"
