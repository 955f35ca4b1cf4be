"""``physchip`` command line.

Every subcommand writes CSV (or key=value) files into ``--out``.  Exit
status is 0 on success, 1 on a domain error (reported on stderr as
``ERROR:<code>:<message>``) and 2 on a usage error.  Stochastic subcommands
take all randomness from ``--seed``.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from . import analog, circuit, gates, sensor, sigproc
from .config import ExperimentConfig, build_config, load_config, read_kv
from .errors import InvalidWindow, MissingFile, PhyschipError, RangeError
from .oscillator import (
    HEAT,
    LIGHT,
    StimulusKind,
    StimulusProgram,
    Trace,
    chemical,
    format_trace,
    read_trace,
    simulate_trace,
)

STOCHASTIC = {"simulate", "gate", "circuit", "calibrate"}


class UsageError(Exception):
    pass


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _span(text):
    """``T0:T1`` in seconds."""
    try:
        a, b = text.split(":")
        return float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected T0:T1, got {text!r}") from None


def _event(text):
    """``KIND:T_ON:T_OFF`` where KIND may itself be ``chemical:NAME``."""
    try:
        kind, on, off = text.rsplit(":", 2)
        return float(on), float(off), StimulusKind.parse(kind)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad stimulus {text!r}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value experiment config")
    common.add_argument("--params", help="key=value overrides applied on top of --config")
    common.add_argument("--out", help="output directory (default: config out_dir or .)")
    common.add_argument("--seed", type=_u64, help="master seed (required for stochastic commands)")
    common.add_argument("--trials", type=_positive_int, help="Monte Carlo trials per input vector")
    common.add_argument("--workers", type=_positive_int, default=1, help="worker threads")

    p = argparse.ArgumentParser(prog="physchip", description="Slime-mould oscillator chip simulator")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate a potential trace")
    s.add_argument("--stimulus", type=_event, action="append", default=[],
                   metavar="KIND:T_ON:T_OFF", help="light, heat, oat or chemical:NAME (repeatable)")
    s.add_argument("--duration", type=float, help="trace length in s (default: one gate run)")
    s.add_argument("--sample-rate", type=float, help="samples per second")

    s = sub.add_parser("analyze", parents=[common], help="estimate frequency and amplitude of a trace")
    s.add_argument("--trace", required=True, help="trace CSV")
    s.add_argument("--window", type=float, default=sigproc.DEFAULT_WINDOW_S, help="window length in s")
    s.add_argument("--pre", type=_span, metavar="T0:T1", help="pre window for a change ratio")
    s.add_argument("--post", type=_span, metavar="T0:T1", help="post window for a change ratio")
    s.add_argument("--detrend", type=float, metavar="SECONDS", help="moving-average baseline removal")

    s = sub.add_parser("gate", parents=[common], help="Monte Carlo accuracy of one gate")
    s.add_argument("--kind", required=True, help="NOT, AND, OR, XOR, NAND, NOR or XNOR")

    s = sub.add_parser("circuit", parents=[common], help="Monte Carlo accuracy of a netlist")
    s.add_argument("--netlist", help=f"netlist file or bundled name ({', '.join(circuit.BUNDLED)})")
    s.add_argument("--basis", help="map to a gate basis: " + ", ".join(circuit.BASES))
    s.add_argument("--compose", action="store_true", help="expand XOR/XNOR into NAND gates")

    s = sub.add_parser("calibrate", parents=[common], help="fit noise to target gate accuracies")
    s.add_argument("--target-and", type=float, default=0.90)
    s.add_argument("--target-or", type=float, default=0.78)

    s = sub.add_parser("filter", parents=[common], help="RC low-pass filter analysis")
    s.add_argument("--fc", type=float, help="cutoff in Hz")
    s.add_argument("--bode", action="store_true", help="write a Bode table")
    s.add_argument("--shape", choices=["sine", "square", "triangle"], help="filter a generated waveform")
    s.add_argument("--freq", type=float, help="waveform frequency in Hz (default 10*fc)")
    s.add_argument("--amplitude", type=float, default=1.0)
    s.add_argument("--fs", type=float, help="sample rate in Hz (default 400*freq)")
    s.add_argument("--duration", type=float, help="seconds (default 40 periods)")

    s = sub.add_parser("sense", parents=[common], help="classify a chemical exposure")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", help="trace CSV containing the exposure")
    src.add_argument("--chemical", help="simulate an exposure to this database chemical")
    s.add_argument("--exposure", type=float, default=sigproc.DEFAULT_WINDOW_S, help="exposure time in s")
    s.add_argument("--signatures", help="signature CSV (default: bundled illustrative table)")
    s.add_argument("--reject-k", type=float, default=sensor.DEFAULT_REJECT_K)
    s.add_argument("--light", type=_span, action="append", default=[], metavar="T_ON:T_OFF")
    s.add_argument("--heat", type=_span, action="append", default=[], metavar="T_ON:T_OFF")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.params:
        cfg = build_config(read_kv(args.params), cfg)
    return cfg


def _seed(args, cfg: ExperimentConfig) -> int:
    if args.seed is not None:
        return args.seed
    if cfg.master_seed is not None:
        return cfg.master_seed
    raise UsageError(f"{args.command} is stochastic and needs --seed")


def _trace(path) -> Trace:
    if not Path(path).is_file():
        raise MissingFile(f"no such trace file: {path}")
    return read_trace(path)


def _netlist(args, cfg: ExperimentConfig) -> circuit.Netlist:
    ref = args.netlist
    if ref is None:
        if cfg.netlist is None:
            raise UsageError("circuit needs --netlist or a netlist= config key")
        return circuit.read_netlist(cfg.netlist)
    path = Path(ref)
    if path.is_file():
        return circuit.read_netlist(path)
    stem = path.name[:-4] if path.name.endswith(".phc") else path.name
    if stem in circuit.BUNDLED and path.parent == Path("."):
        return circuit.bundled_netlist(stem)
    raise MissingFile(f"no such netlist file or bundled circuit: {ref}")


def cmd_simulate(args, cfg):
    spec = cfg.spec
    duration = args.duration if args.duration is not None else spec.duration_s
    fs = args.sample_rate if args.sample_rate is not None else spec.sample_rate
    program = StimulusProgram.of(*args.stimulus)
    trace = simulate_trace(cfg.params, program, duration, fs, _seed(args, cfg))
    return {"trace.csv": format_trace(trace)}, [f"{trace.samples.size} samples"]


def cmd_analyze(args, cfg):
    trace = _trace(args.trace)
    if args.detrend is not None:
        trace = sigproc.detrend(trace, args.detrend)
    out = {}
    windows = sigproc.tile_windows(trace, args.window)
    if not windows:
        raise InvalidWindow(f"trace of {trace.duration} s holds no {args.window} s window")
    estimates = [sigproc.estimate_frequency(trace, *w) for w in windows]
    out["report.csv"] = sigproc.format_report(estimates)
    notes = [f"{len(estimates)} windows"]
    if (args.pre is None) != (args.post is None):
        raise UsageError("--pre and --post go together")
    if args.pre is not None:
        cr = sigproc.frequency_change_ratio(trace, args.pre, args.post)
        out["ratio.csv"] = (
            "pre_t0,pre_t1,post_t0,post_t1,r,amp_ratio\n"
            f"{args.pre[0]!r},{args.pre[1]!r},{args.post[0]!r},{args.post[1]!r},{cr.r!r},{cr.amp_ratio!r}\n"
        )
        notes.append(f"r={cr.r:.4f}")
    return out, notes


def cmd_gate(args, cfg):
    try:
        kind = gates.GateKind.parse(args.kind)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    trials = args.trials or cfg.trials
    rep = gates.gate_accuracy(kind, trials, cfg.params, cfg.spec, _seed(args, cfg), args.workers)
    return {f"gate_{kind.value}.csv": rep.to_csv()}, [f"{kind.value} overall={rep.overall:.4f}"]


def cmd_circuit(args, cfg):
    net = _netlist(args, cfg)
    if args.basis:
        net = circuit.tech_map(net, args.basis)
    if args.compose:
        net = circuit.compose(net)
    trials = args.trials or cfg.trials
    rep = circuit.circuit_accuracy(net, trials, cfg.params, cfg.spec, _seed(args, cfg), args.workers)
    notes = [f"{net.name} depth={rep.depth} gates={len(net.gates)} overall={rep.overall:.4f}"]
    return {f"circuit_{net.name}.csv": rep.to_csv()}, notes


def cmd_calibrate(args, cfg):
    params = cfg.params
    seed = _seed(args, cfg)
    if params.sigma_meas > 0 and params.est_noise_coef is None:
        params = gates.measure_estimator_noise(params, cfg.spec, seed=seed)
    fitted = gates.calibrate_noise({"AND": args.target_and, "OR": args.target_or}, params, cfg.spec)
    notes = [f"sigma_resp={fitted.sigma_resp:.6f} p_miss={fitted.p_miss:.6f}"]
    return {"calibrated.kv": gates.format_calibration(fitted)}, notes


def cmd_filter(args, cfg):
    fc = args.fc if args.fc is not None else cfg.filter.fc
    if args.fc is not None:
        analog.FilterSpec(fc)  # range check and band warning
    if not args.bode and args.shape is None:
        raise UsageError("filter needs --bode and/or --shape")
    out, notes = {}, []
    if args.bode:
        freqs = analog.bode_frequencies(include=[fc, 10 * fc])
        out["bode.csv"] = analog.format_bode(fc, freqs)
        notes.append(f"gain at fc = {20 * math.log10(analog.gain_phase(fc, fc)[0]):.2f} dB")
    if args.shape is not None:
        f = args.freq if args.freq is not None else 10 * fc
        fs = args.fs if args.fs is not None else 400 * f
        duration = args.duration if args.duration is not None else 40 / f
        w = analog.generate_waveform(args.shape, f, args.amplitude, fs, duration)
        y = analog.apply_filter(w, fc)
        out["filtered.csv"] = analog.format_waveform(y)
        if args.shape == "square":
            tri = analog.ideal_triangle(f, 1.0, fs, len(w))
            notes.append(f"triangle correlation={analog.shape_similarity(y, tri, fc):.4f}")
    return out, notes


def cmd_sense(args, cfg):
    sig_path = args.signatures or cfg.signatures
    if sig_path is not None and not Path(sig_path).is_file():
        raise MissingFile(f"no such signature file: {sig_path}")
    db = sensor.load_signatures(sig_path)
    events = [(a, b, LIGHT) for a, b in args.light] + [(a, b, HEAT) for a, b in args.heat]
    t = args.exposure
    if args.chemical is not None:
        try:
            sig = db[args.chemical]
        except KeyError:
            raise RangeError(f"chemical {args.chemical!r} is not in the signature database") from None
        kind = chemical(sig.name)
        params = cfg.params.with_stimulus(kind, sig.df_rel, sig.da_rel)
        duration = t + cfg.spec.settle_s + cfg.spec.window_s
        program = StimulusProgram.of((t, duration, kind), *events)
        trace = simulate_trace(params, program, duration, cfg.spec.sample_rate, _seed(args, cfg))
    else:
        trace = _trace(args.trace)
        program = StimulusProgram.of(*events)
    fv, res = sensor.sense(trace, t, db, program, args.reject_k)
    return {"sense.csv": sensor.format_classification(fv, res)}, [
        f"verdict={res.verdict or 'unknown'} distance={res.distance:.3f}"
        + (" (confounded)" if res.confounded else "")
    ]


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "gate": cmd_gate,
    "circuit": cmd_circuit,
    "calibrate": cmd_calibrate,
    "filter": cmd_filter,
    "sense": cmd_sense,
}


def write_outputs(out_dir: Path, files: dict) -> list[Path]:
    """Write all files or none: anything written before a failure is removed."""
    out_dir.mkdir(parents=True, exist_ok=True)
    done = []
    try:
        for name, text in files.items():
            path = out_dir / name
            tmp = path.with_name(path.name + ".part")
            with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
            done.append(path)
    except BaseException:
        for p in done:
            p.unlink(missing_ok=True)
        for name in files:
            (out_dir / (name + ".part")).unlink(missing_ok=True)
        raise
    return done


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config(args)
        if args.command in STOCHASTIC:
            _seed(args, cfg)
        files, notes = COMMANDS[args.command](args, cfg)
        out_dir = Path(args.out) if args.out else cfg.out_dir
        paths = write_outputs(out_dir, files)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"physchip: error: {exc}", file=sys.stderr)
        return 2
    except PhyschipError as exc:
        print(f"ERROR:{exc.code}:{exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ERROR:IO:{exc}", file=sys.stderr)
        return 1
    for n in notes:
        print(n)
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
