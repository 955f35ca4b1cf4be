"""Netlist language, technology mapping and composed-circuit simulation.

Grammar::

    circuit   := "circuit" IDENT "(" idlist ")" "->" "(" idlist ")" NEWLINE stmt* "end"
    stmt      := IDENT "=" GATE "(" idlist ")" NEWLINE
    GATE      := "NOT" | "OR" | "AND" | "NOR" | "NAND" | "XOR" | "XNOR"
    idlist    := IDENT ("," IDENT)*

``#`` starts a comment that runs to the end of the line; blank lines are
ignored.  Statements may appear in any order as long as the result is acyclic.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import (
    CycleDetected,
    GateFailure,
    MultipleDrivers,
    NetlistArityMismatch,
    NetlistSyntaxError,
    RangeError,
    UndrivenNet,
    UnknownGate,
    UnsupportedBasis,
)
from .gates import (
    GateKind,
    GateSpec,
    block_rng,
    decode_array,
    format_accuracy_rows,
    input_stimuli,
    map_blocks,
    run_gate,
    simulate_ratio_batch,
)
from .oscillator import OscillatorParams, fused_amp_delta, fused_delta


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    inputs: tuple[str, ...]
    output: str
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Netlist:
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    gates: tuple[Gate, ...]

    @classmethod
    def build(cls, name, inputs, outputs, gates) -> "Netlist":
        gates = tuple(g if isinstance(g, Gate) else Gate(GateKind(g[0]), tuple(g[1]), g[2]) for g in gates)
        net = cls(name, tuple(inputs), tuple(outputs), gates)
        validate(net)
        return net

    @property
    def nets(self) -> set[str]:
        s = set(self.inputs) | set(self.outputs)
        for g in self.gates:
            s.update(g.inputs)
            s.add(g.output)
        return s

    @property
    def order(self) -> list[Gate]:
        return _topological(self)

    def levels(self) -> dict[str, int]:
        """Logic depth of every net; primary inputs sit at level 0."""
        lvl = {n: 0 for n in self.inputs}
        for g in self.order:
            lvl[g.output] = 1 + max(lvl[i] for i in g.inputs)
        return lvl

    @property
    def depth(self) -> int:
        lv = self.levels()
        return max((lv[g.output] for g in self.gates), default=0)

    def kinds(self) -> set[GateKind]:
        return {g.kind for g in self.gates}

    def __str__(self):
        return format_netlist(self)


# -- validation -----------------------------------------------------------------

def _topological(net: Netlist) -> list[Gate]:
    driver = {g.output: g for g in net.gates}
    state: dict[str, int] = {}
    order: list[Gate] = []

    def visit(g: Gate, stack):
        st = state.get(g.output)
        if st == 2:
            return
        if st == 1:
            cyc = " -> ".join(stack[stack.index(g.output):] + [g.output])
            raise CycleDetected(f"combinational cycle {cyc}", line=g.line)
        state[g.output] = 1
        stack.append(g.output)
        for n in g.inputs:
            if n in driver:
                visit(driver[n], stack)
        stack.pop()
        state[g.output] = 2
        order.append(g)

    for g in net.gates:
        visit(g, [])
    return order


def validate(net: Netlist) -> None:
    """Raise a SemanticError subclass if ``net`` is not a well-formed DAG."""
    driven: dict[str, int | None] = {}
    for n in net.inputs:
        if n in driven:
            raise MultipleDrivers(f"input {n!r} is declared twice")
        driven[n] = None
    for g in net.gates:
        if len(g.inputs) != g.kind.arity:
            raise NetlistArityMismatch(
                f"{g.kind} takes {g.kind.arity} input(s), got {len(g.inputs)}", line=g.line
            )
        if g.output in driven:
            prev = driven[g.output]
            what = "a primary input" if prev is None and g.output in net.inputs else f"line {prev}"
            raise MultipleDrivers(f"net {g.output!r} is already driven by {what}", line=g.line)
        driven[g.output] = g.line
    for g in net.gates:
        for n in g.inputs:
            if n not in driven:
                raise UndrivenNet(f"net {n!r} is never driven", line=g.line)
    for n in net.outputs:
        if n not in driven:
            raise UndrivenNet(f"output {n!r} is never driven")
    _topological(net)


# -- parsing ----------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<comment>#[^\n]*)|(?P<nl>\n)|(?P<arrow>->)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[(),=])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise NetlistSyntaxError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            toks.append(_Tok("nl", "\n", line, pos - start + 1))
            line += 1
            start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind if kind != "punct" else m.group(), m.group(), line, pos - start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - start + 1))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def fail(self, what):
        t = self.tok
        got = "end of input" if t.kind == "eof" else ("newline" if t.kind == "nl" else repr(t.text))
        raise NetlistSyntaxError(f"expected {what}, got {got}", t.line, t.col)

    def expect(self, kind, what=None):
        if self.tok.kind != kind:
            self.fail(what or repr(kind))
        t = self.tok
        self.i += 1
        return t

    def keyword(self, word):
        if self.tok.kind != "ident" or self.tok.text != word:
            self.fail(repr(word))
        self.i += 1

    def blank_lines(self):
        while self.tok.kind == "nl":
            self.i += 1

    def idlist(self):
        names = [self.expect("ident", "identifier").text]
        while self.tok.kind == ",":
            self.i += 1
            names.append(self.expect("ident", "identifier").text)
        return names

    def parse(self) -> Netlist:
        self.blank_lines()
        self.keyword("circuit")
        name = self.expect("ident", "circuit name").text
        self.expect("(")
        ins = self.idlist()
        self.expect(")")
        self.expect("arrow", "'->'")
        self.expect("(")
        outs = self.idlist()
        self.expect(")")
        self.expect("nl", "newline")
        gates = []
        while True:
            self.blank_lines()
            t = self.tok
            if t.kind == "ident" and t.text == "end":
                self.i += 1
                break
            if t.kind == "eof":
                self.fail("'end'")
            lhs = self.expect("ident", "statement or 'end'")
            self.expect("=")
            gt = self.expect("ident", "gate name")
            try:
                kind = GateKind(gt.text)
            except ValueError:
                raise UnknownGate(f"unknown gate {gt.text!r}", gt.line, gt.col) from None
            self.expect("(")
            args = self.idlist()
            self.expect(")")
            if len(args) != kind.arity:
                raise NetlistArityMismatch(
                    f"{kind} takes {kind.arity} input(s), got {len(args)}", lhs.line, gt.col
                )
            self.expect("nl", "newline")
            gates.append(Gate(kind, tuple(args), lhs.text, lhs.line))
        while self.tok.kind == "nl":
            self.i += 1
        if self.tok.kind != "eof":
            self.fail("end of input")
        net = Netlist(name, tuple(ins), tuple(outs), tuple(gates))
        validate(net)
        return net


def parse_netlist(text: str) -> Netlist:
    """Parse and validate netlist source; errors carry line and column."""
    if not text.endswith("\n"):
        text += "\n"
    return _Parser(text).parse()


def format_netlist(net: Netlist) -> str:
    out = io.StringIO()
    out.write(f"circuit {net.name}({', '.join(net.inputs)}) -> ({', '.join(net.outputs)})\n")
    for g in net.gates:
        out.write(f"    {g.output} = {g.kind}({', '.join(g.inputs)})\n")
    out.write("end\n")
    return out.getvalue()


def read_netlist(path) -> Netlist:
    with open(path, encoding="utf-8") as fh:
        return parse_netlist(fh.read())


# -- bundled circuits ---------------------------------------------------------------

BUNDLED = ("half_adder", "xor", "full_adder", "mux2", "majority3", "parity4", "and_or_invert")


def bundled_netlist(name: str) -> Netlist:
    src = resources.files("physchip.data").joinpath(f"{name}.phc").read_text(encoding="utf-8")
    return parse_netlist(src)


def bundled_netlists() -> dict[str, Netlist]:
    return {name: bundled_netlist(name) for name in BUNDLED}


def half_adder() -> Netlist:
    return bundled_netlist("half_adder")


def not_chain(depth: int) -> Netlist:
    if depth < 1:
        raise RangeError("a NOT chain needs depth >= 1")
    nets = ["a"] + [f"n{i}" for i in range(1, depth)] + ["y"]
    gates = [Gate(GateKind.NOT, (nets[i],), nets[i + 1]) for i in range(depth)]
    return Netlist.build(f"not_chain{depth}", ("a",), ("y",), gates)


# -- evaluation ----------------------------------------------------------------------

def _check_bits(net: Netlist, bits) -> tuple[int, ...]:
    bits = tuple(int(b) for b in bits)
    if len(bits) != len(net.inputs):
        raise RangeError(f"{net.name} takes {len(net.inputs)} input bit(s), got {len(bits)}")
    if any(b not in (0, 1) for b in bits):
        raise RangeError(f"input bits must be 0 or 1, got {bits}")
    return bits


def eval_ideal(net: Netlist, bits) -> tuple[int, ...]:
    """Noiseless boolean evaluation."""
    vals = dict(zip(net.inputs, _check_bits(net, bits)))
    for g in net.order:
        vals[g.output] = g.kind.truth(tuple(vals[i] for i in g.inputs))
    return tuple(vals[o] for o in net.outputs)


def input_vectors(net: Netlist) -> list[tuple[int, ...]]:
    n = len(net.inputs)
    return [tuple((v >> (n - 1 - i)) & 1 for i in range(n)) for v in range(2 ** n)]


def truth_table(net: Netlist) -> dict[tuple[int, ...], tuple[int, ...]]:
    return {v: eval_ideal(net, v) for v in input_vectors(net)}


# -- technology mapping -------------------------------------------------------------

_N = GateKind
BASES = {
    "NAND": frozenset({_N.NAND}),
    "NOR": frozenset({_N.NOR}),
    "NOT,OR,AND": frozenset({_N.NOT, _N.OR, _N.AND}),
    "FULL": frozenset(GateKind),
}

# Each template lists (kind, args, result) with args drawn from the gate inputs
# "a", "b" or earlier results "t0", "t1", ...; the last result drives the output.
_TEMPLATES = {
    "NAND": {
        _N.NOT: [(_N.NAND, "aa")],
        _N.AND: [(_N.NAND, "ab"), (_N.NAND, ("t0", "t0"))],
        _N.OR: [(_N.NAND, "aa"), (_N.NAND, "bb"), (_N.NAND, ("t0", "t1"))],
        _N.NOR: [(_N.NAND, "aa"), (_N.NAND, "bb"), (_N.NAND, ("t0", "t1")), (_N.NAND, ("t2", "t2"))],
        _N.XOR: [(_N.NAND, "ab"), (_N.NAND, ("a", "t0")), (_N.NAND, ("b", "t0")), (_N.NAND, ("t1", "t2"))],
        _N.XNOR: [(_N.NAND, "ab"), (_N.NAND, ("a", "t0")), (_N.NAND, ("b", "t0")),
                  (_N.NAND, ("t1", "t2")), (_N.NAND, ("t3", "t3"))],
    },
    "NOR": {
        _N.NOT: [(_N.NOR, "aa")],
        _N.OR: [(_N.NOR, "ab"), (_N.NOR, ("t0", "t0"))],
        _N.AND: [(_N.NOR, "aa"), (_N.NOR, "bb"), (_N.NOR, ("t0", "t1"))],
        _N.NAND: [(_N.NOR, "aa"), (_N.NOR, "bb"), (_N.NOR, ("t0", "t1")), (_N.NOR, ("t2", "t2"))],
        _N.XNOR: [(_N.NOR, "ab"), (_N.NOR, ("a", "t0")), (_N.NOR, ("b", "t0")), (_N.NOR, ("t1", "t2"))],
        _N.XOR: [(_N.NOR, "ab"), (_N.NOR, ("a", "t0")), (_N.NOR, ("b", "t0")),
                 (_N.NOR, ("t1", "t2")), (_N.NOR, ("t3", "t3"))],
    },
    "NOT,OR,AND": {
        _N.NAND: [(_N.AND, "ab"), (_N.NOT, ("t0",))],
        _N.NOR: [(_N.OR, "ab"), (_N.NOT, ("t0",))],
        _N.XOR: [(_N.NOT, "b"), (_N.NOT, "a"), (_N.AND, ("a", "t0")), (_N.AND, ("t1", "b")),
                 (_N.OR, ("t2", "t3"))],
        _N.XNOR: [(_N.NOT, "b"), (_N.NOT, "a"), (_N.AND, ("a", "t0")), (_N.AND, ("t1", "b")),
                  (_N.OR, ("t2", "t3")), (_N.NOT, ("t4",))],
    },
}


def _basis_name(basis) -> str:
    if isinstance(basis, str):
        key = ",".join(p.strip().upper() for p in basis.split(","))
        if key in BASES:
            return key
        kinds = frozenset(GateKind.parse(p) for p in basis.split(","))
    else:
        kinds = frozenset(GateKind(k) for k in basis)
    for name, members in BASES.items():
        if members == kinds:
            return name
    raise UnsupportedBasis(
        f"unsupported basis {sorted(map(str, kinds))}; use NAND, NOR, NOT/OR/AND or full"
    )


def _rewrite(net: Netlist, template_set: str, targets, suffix: str) -> Netlist:
    taken = set(net.nets)
    counter = 0

    def fresh(stem):
        nonlocal counter
        while True:
            cand = f"{stem}_m{counter}"
            counter += 1
            if cand not in taken:
                taken.add(cand)
                return cand

    out = []
    for g in net.gates:
        if g.kind not in targets:
            out.append(Gate(g.kind, g.inputs, g.output))
            continue
        template = _TEMPLATES[template_set][g.kind]
        env = {"a": g.inputs[0], "b": g.inputs[-1]}
        for i, (kind, args) in enumerate(template):
            last = i == len(template) - 1
            dst = g.output if last else fresh(g.output)
            out.append(Gate(kind, tuple(env[x] for x in args), dst))
            env[f"t{i}"] = dst
    return Netlist.build(f"{net.name}_{suffix}", net.inputs, net.outputs, out)


def tech_map(net: Netlist, basis) -> Netlist:
    """Rewrite ``net`` using only gates from ``basis`` (direct per-gate templates)."""
    name = _basis_name(basis)
    targets = set(GateKind) - BASES[name]
    suffix = {"NAND": "nand", "NOR": "nor", "NOT,OR,AND": "aon", "FULL": "full"}[name]
    return _rewrite(net, name, targets, suffix)


def compose(net: Netlist) -> Netlist:
    """Replace the derived XOR/XNOR gates by their multi-gate NAND circuits.

    Basic gates stay single gates, so the half adder becomes a four-NAND XOR
    for the sum next to one AND gate for the carry.
    """
    return _rewrite(net, "NAND", {GateKind.XOR, GateKind.XNOR}, "composed")


# -- noisy simulation -----------------------------------------------------------------

@dataclass(frozen=True)
class CircuitRun:
    outputs: tuple[int, ...]
    latency_s: float
    failed: bool = False


def latency_bounds(net: Netlist, spec: GateSpec) -> tuple[float, float]:
    return (net.depth * spec.latency_s, net.depth * spec.latency_max_s)


def _stage_latency(net: Netlist, draws: np.ndarray) -> np.ndarray:
    """Sum over logic levels of the slowest gate in each level.

    ``draws`` has one column per gate in ``net.gates`` order.
    """
    lv = net.levels()
    gate_lv = np.array([lv[g.output] for g in net.gates])
    total = np.zeros(draws.shape[0])
    for level in range(1, net.depth + 1):
        total += draws[:, gate_lv == level].max(axis=1)
    return total


def simulate_circuit(net: Netlist, bits, params: OscillatorParams, spec: GateSpec | None = None,
                     seed=0) -> CircuitRun:
    """Run every gate instance as an independent noisy gate, feeding decoded bits forward.

    A gate failure is flagged in the result; downstream gates then see a 0.
    """
    spec = spec or GateSpec()
    bits = _check_bits(net, bits)
    children = np.random.SeedSequence(seed).spawn(len(net.gates) + 1)
    seeds = dict(zip((g.output for g in net.gates), children))
    vals = dict(zip(net.inputs, bits))
    failed = False
    for g in net.order:
        ins = tuple(vals[i] for i in g.inputs)
        try:
            vals[g.output] = run_gate(g.kind, ins, params, spec, seeds[g.output]).output
        except GateFailure:
            failed = True
            vals[g.output] = 0
    rng = np.random.default_rng(children[-1])
    draws = rng.uniform(spec.latency_s, spec.latency_max_s, (1, len(net.gates)))
    latency = float(_stage_latency(net, draws)[0]) if net.gates else 0.0
    return CircuitRun(tuple(vals[o] for o in net.outputs), latency, failed)


@dataclass(frozen=True)
class CircuitReport:
    circuit: str
    per_vector: dict
    correct: dict
    trials: int
    seed: int
    depth: int
    latency_s: tuple[float, float]
    latency_observed: tuple[float, float]

    @property
    def overall(self) -> float:
        return float(np.mean(list(self.per_vector.values())))

    def to_csv(self) -> str:
        extra = {
            "depth": self.depth,
            "latency_min_s": repr(float(self.latency_s[0])),
            "latency_max_s": repr(float(self.latency_s[1])),
        }
        return format_accuracy_rows(self.circuit, self.per_vector, self.correct, self.trials, extra)


def _stimulus_table(kind: GateKind, params):
    """Per input-vector index: (fused delta, amplitude delta, any stimulus)."""
    rows = []
    for bits in kind.vectors():
        stim = input_stimuli(kind, bits)
        if stim:
            rows.append((fused_delta(stim, params), fused_amp_delta(stim, params), True))
        else:
            rows.append((0.0, 0.0, False))
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows]), np.array([r[2] for r in rows])


def _batch_circuit(net: Netlist, bits, size, params, spec, rng):
    order = net.order
    tables = {k: _stimulus_table(k, params) for k in net.kinds()}
    vals = {n: np.full(size, b, dtype=np.int8) for n, b in zip(net.inputs, bits)}
    failed = np.zeros(size, dtype=bool)
    for g in order:
        idx = np.zeros(size, dtype=np.int64)
        for n in g.inputs:
            idx = 2 * idx + vals[n]
        d, a, act = (t[idx] for t in tables[g.kind])
        r, ok = simulate_ratio_batch(d, a, act, params, spec, rng)
        r = np.where(ok, r, 1.0)
        vals[g.output] = np.where(ok, decode_array(g.kind, r, spec), 0).astype(np.int8)
        failed |= ~ok
    draws = rng.uniform(spec.latency_s, spec.latency_max_s, (size, len(net.gates)))
    latency = _stage_latency(net, draws) if net.gates else np.zeros(size)
    outs = np.stack([vals[o] for o in net.outputs], axis=1)
    return outs, failed, latency


def circuit_accuracy(net: Netlist, trials: int, params: OscillatorParams,
                     spec: GateSpec | None = None, master_seed: int = 0,
                     workers: int = 1) -> CircuitReport:
    """Monte Carlo accuracy of ``net`` per input vector against :func:`eval_ideal`.

    A trial is correct when every output bit matches and no gate failed.
    """
    spec = spec or GateSpec()
    if trials < 100:
        raise RangeError("circuit_accuracy needs trials >= 100")
    per, correct = {}, {}
    lat_lo, lat_hi = np.inf, -np.inf
    for vindex, bits in enumerate(input_vectors(net)):
        want = np.array(eval_ideal(net, bits), dtype=np.int8)

        def one(j, start, size, bits=bits, vindex=vindex):
            rng = block_rng(master_seed, 2, vindex, j)
            return _batch_circuit(net, bits, size, params, spec, rng)

        good = 0
        for outs, failed, latency in map_blocks(one, trials, workers):
            good += int(np.count_nonzero(np.all(outs == want, axis=1) & ~failed))
            if latency.size:
                lat_lo = min(lat_lo, float(latency.min()))
                lat_hi = max(lat_hi, float(latency.max()))
        per[bits] = good / trials
        correct[bits] = good
    return CircuitReport(net.name, per, correct, trials, int(master_seed), net.depth,
                         latency_bounds(net, spec), (lat_lo, lat_hi))
