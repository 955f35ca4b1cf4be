"""Plain ``key=value`` experiment configuration.

Blank lines and ``#`` comments are ignored.  Every key is optional; unknown
keys are rejected so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .analog import FilterSpec
from .errors import MissingFile, ParseError, RangeError, UnknownKey
from .gates import GateSpec
from .oscillator import DEFAULT_DELTA, HEAT, LIGHT, OAT, OscillatorParams

_KINDS = {"light": LIGHT, "heat": HEAT, "oat": OAT}


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _rel(v):
    return v > -1


def _prob(v):
    return 0 <= v < 1


def _finite(v):
    return True


# key -> (type, check, description of the valid range)
KEYS = {
    "f0": (float, _positive, "> 0"),
    "A0": (float, _positive, "> 0"),
    "V_offset": (float, _finite, "finite"),
    "sigma_resp": (float, _nonneg, ">= 0"),
    "sigma_meas": (float, _nonneg, ">= 0"),
    "p_miss": (float, _prob, "in [0, 1)"),
    "est_noise_coef": (float, _nonneg, ">= 0"),
    "not_high": (float, _positive, "> 0"),
    "or_low": (float, _positive, "> 0"),
    "and_low": (float, _positive, "> 0"),
    "xor_lo": (float, _positive, "> 0"),
    "xor_hi": (float, _positive, "> 0"),
    "settle_s": (float, _nonneg, ">= 0"),
    "window_s": (float, _positive, "> 0"),
    "sample_rate": (float, _positive, "> 0"),
    "latency_max_s": (float, _positive, "> 0"),
    "fc": (float, _positive, "> 0"),
    "netlist": (str, None, ""),
    "signatures": (str, None, ""),
    "out_dir": (str, None, ""),
    "trials": (int, lambda v: v >= 1, ">= 1"),
    "master_seed": (int, lambda v: 0 <= v < 2**64, "in [0, 2^64)"),
}
for _name in _KINDS:
    KEYS[f"delta_{_name}"] = (float, _rel, "> -1")
    KEYS[f"amp_delta_{_name}"] = (float, _rel, "> -1")

PATH_KEYS = ("netlist", "signatures")


@dataclass(frozen=True)
class ExperimentConfig:
    params: OscillatorParams = field(default_factory=OscillatorParams)
    spec: GateSpec = field(default_factory=GateSpec)
    filter: FilterSpec = field(default_factory=FilterSpec)
    netlist: Path | None = None
    signatures: Path | None = None
    out_dir: Path = Path(".")
    trials: int = 10000
    master_seed: int | None = None


def parse_kv(text: str) -> dict:
    """Parse and range-check ``key=value`` lines into typed values."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {raw.strip()!r}", line=lineno)
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in KEYS:
            raise UnknownKey(f"unknown key {key!r}", line=lineno)
        if key in values:
            raise ParseError(f"key {key!r} given twice", line=lineno)
        typ, check, rng = KEYS[key]
        if typ is str:
            if not val:
                raise ParseError(f"{key} needs a value", line=lineno)
            values[key] = val
            continue
        try:
            v = typ(val)
        except ValueError:
            raise ParseError(f"{key}: cannot read {val!r} as {typ.__name__}", line=lineno) from None
        if typ is float and not math.isfinite(v):
            raise RangeError(f"line {lineno}: {key} must be finite")
        if not check(v):
            raise RangeError(f"line {lineno}: {key}={val} must be {rng}")
        values[key] = v
    return values


def read_kv(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    values = parse_kv(path.read_text(encoding="utf-8"))
    # relative file references resolve against the file that names them
    for k in PATH_KEYS:
        if k in values:
            values[k] = str((path.parent / values[k]))
    return values


def build_config(values: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply parsed ``values`` on top of ``base`` (defaults if omitted)."""
    base = base or ExperimentConfig()
    p = base.params
    delta = dict(p.delta)
    amp = dict(p.amp_delta)
    for name, kind in _KINDS.items():
        if f"delta_{name}" in values:
            delta[kind] = values[f"delta_{name}"]
        if f"amp_delta_{name}" in values:
            amp[kind] = values[f"amp_delta_{name}"]
    pkeys = ("f0", "A0", "V_offset", "sigma_resp", "sigma_meas", "p_miss", "est_noise_coef")
    params = p.replace(delta=delta, amp_delta=amp, **{k: values[k] for k in pkeys if k in values})

    s = base.spec
    skw = {k: values[k] for k in ("not_high", "or_low", "and_low", "settle_s", "window_s",
                                  "sample_rate", "latency_max_s") if k in values}
    lo, hi = s.xor_band
    skw["xor_band"] = (values.get("xor_lo", lo), values.get("xor_hi", hi))
    if "latency_max_s" not in skw:
        # keep the default 600 s spread when the timeline moves
        spread = s.latency_max_s - s.latency_s
        skw["latency_max_s"] = (skw.get("settle_s", s.settle_s) + skw.get("window_s", s.window_s)
                                + spread)
    spec = GateSpec(**{**_spec_fields(s), **skw})

    filt = FilterSpec(values["fc"]) if "fc" in values else base.filter

    def path(key, old):
        if key not in values:
            return old
        p = Path(values[key])
        if not p.is_file():
            raise MissingFile(f"{key} file not found: {p}")
        return p

    return ExperimentConfig(
        params=params,
        spec=spec,
        filter=filt,
        netlist=path("netlist", base.netlist),
        signatures=path("signatures", base.signatures),
        out_dir=Path(values["out_dir"]) if "out_dir" in values else base.out_dir,
        trials=values.get("trials", base.trials),
        master_seed=values.get("master_seed", base.master_seed),
    )


def _spec_fields(s: GateSpec) -> dict:
    return {"not_high": s.not_high, "or_low": s.or_low, "and_low": s.and_low,
            "xor_band": s.xor_band, "settle_s": s.settle_s, "window_s": s.window_s,
            "sample_rate": s.sample_rate, "latency_max_s": s.latency_max_s}


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read a config file; missing keys keep the values of ``base``."""
    return build_config(read_kv(path), base)


def format_config(cfg: ExperimentConfig) -> str:
    p, s = cfg.params, cfg.spec
    lines = [f"f0={p.f0!r}", f"A0={p.A0!r}", f"V_offset={p.V_offset!r}"]
    for name, kind in _KINDS.items():
        lines.append(f"delta_{name}={p.delta.get(kind, DEFAULT_DELTA[kind])!r}")
    for name, kind in _KINDS.items():
        if kind in p.amp_delta:
            lines.append(f"amp_delta_{name}={p.amp_delta[kind]!r}")
    lines += [f"sigma_resp={p.sigma_resp!r}", f"sigma_meas={p.sigma_meas!r}", f"p_miss={p.p_miss!r}"]
    if p.est_noise_coef is not None:
        lines.append(f"est_noise_coef={p.est_noise_coef!r}")
    lines += [
        f"not_high={s.not_high!r}", f"or_low={s.or_low!r}", f"and_low={s.and_low!r}",
        f"xor_lo={s.xor_band[0]!r}", f"xor_hi={s.xor_band[1]!r}",
        f"settle_s={s.settle_s!r}", f"window_s={s.window_s!r}", f"sample_rate={s.sample_rate!r}",
        f"latency_max_s={s.latency_max_s!r}", f"fc={cfg.filter.fc!r}", f"trials={cfg.trials}",
    ]
    if cfg.master_seed is not None:
        lines.append(f"master_seed={cfg.master_seed}")
    return "\n".join(lines) + "\n"

