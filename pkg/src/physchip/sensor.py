"""Chemical biosensor: signature database, feature extraction, classification.

A chemical is identified by the relative frequency and amplitude change it
causes.  The bundled database (``data/signatures.csv``) holds illustrative
values only; it is not a measured chemical panel.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import (
    DegenerateDB,
    DuplicateChemical,
    EmptyDB,
    InsufficientTrace,
    ParseError,
    RangeError,
)
from .oscillator import HEAT, LIGHT, StimulusProgram, Trace
from .sigproc import DEFAULT_SETTLE_S, DEFAULT_WINDOW_S, frequency_change_ratio

SIGNATURE_HEADER = ["chemical", "df_rel", "da_rel", "tol_df", "tol_da"]
DEFAULT_REJECT_K = 1.0


class SignatureOverlapWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ChemicalSignature:
    name: str
    df_rel: float
    da_rel: float
    tol_df: float
    tol_da: float

    def __post_init__(self):
        if not self.name:
            raise RangeError("chemical name must be non-empty")
        for v in (self.df_rel, self.da_rel, self.tol_df, self.tol_da):
            if not math.isfinite(v):
                raise RangeError(f"{self.name}: signature values must be finite")
        if self.df_rel <= -1 or self.da_rel <= -1:
            raise RangeError(f"{self.name}: relative changes must be > -1")
        if self.tol_df <= 0 or self.tol_da <= 0:
            raise RangeError(f"{self.name}: tolerances must be > 0")


@dataclass(frozen=True)
class SignatureDB:
    signatures: tuple[ChemicalSignature, ...]

    def __len__(self):
        return len(self.signatures)

    def __iter__(self):
        return iter(self.signatures)

    def __getitem__(self, name: str) -> ChemicalSignature:
        for s in self.signatures:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.signatures]


@dataclass(frozen=True)
class FeatureVector:
    df_rel: float
    da_rel: float
    quality: tuple[str, ...] = ()


@dataclass(frozen=True)
class ClassificationResult:
    verdict: str | None  # None means unknown
    distance: float
    confounded: bool = False
    warnings: tuple[str, ...] = field(default_factory=tuple)
    nearest: str | None = None

    @property
    def known(self) -> bool:
        return self.verdict is not None


def check_signatures(signatures) -> SignatureDB:
    """Enforce unique names and one-to-one separation of signatures."""
    seen = set()
    for s in signatures:
        if s.name in seen:
            raise DuplicateChemical(f"chemical {s.name!r} appears twice")
        seen.add(s.name)
    sigs = tuple(signatures)
    for i, a in enumerate(sigs):
        for b in sigs[i + 1:]:
            if a.df_rel == b.df_rel and a.da_rel == b.da_rel:
                raise DegenerateDB(f"{a.name!r} and {b.name!r} have identical signatures")
            if (abs(a.df_rel - b.df_rel) < a.tol_df + b.tol_df
                    and abs(a.da_rel - b.da_rel) < a.tol_da + b.tol_da):
                warnings.warn(
                    f"signatures {a.name!r} and {b.name!r} overlap within their tolerances",
                    SignatureOverlapWarning,
                    stacklevel=3,
                )
    return SignatureDB(sigs)


def parse_signatures(text: str) -> SignatureDB:
    rows = []
    header_seen = False
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if not header_seen:
            if [f.strip() for f in fields] != SIGNATURE_HEADER:
                raise ParseError(f"expected header {','.join(SIGNATURE_HEADER)}", line=lineno)
            header_seen = True
            continue
        if len(fields) != 5:
            raise ParseError(f"expected 5 fields, got {len(fields)}", line=lineno)
        name = fields[0].strip()
        try:
            nums = [float(f) for f in fields[1:]]
        except ValueError:
            raise ParseError(f"bad number in {line!r}", line=lineno) from None
        try:
            sig = ChemicalSignature(name, *nums)
        except RangeError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if any(r.name == name for r, _ in rows):
            raise DuplicateChemical(f"chemical {name!r} appears twice", line=lineno)
        rows.append((sig, lineno))
    if not header_seen:
        raise ParseError("missing header line")
    return check_signatures([r for r, _ in rows])


def load_signatures(path=None) -> SignatureDB:
    """Load a signature CSV; without a path, the bundled illustrative table."""
    if path is None:
        text = resources.files("physchip.data").joinpath("signatures.csv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_signatures(text)


def extract_features(trace: Trace, exposure_t: float, settle_s: float = DEFAULT_SETTLE_S,
                     window_s: float = DEFAULT_WINDOW_S) -> FeatureVector:
    """Relative frequency and amplitude change around an exposure at ``exposure_t``."""
    need0 = exposure_t - window_s
    need1 = exposure_t + settle_s + window_s
    tol = 0.5 / trace.sample_rate
    if need0 < trace.t_start - tol or need1 > trace.t_end + tol:
        raise InsufficientTrace(
            f"trace [{trace.t_start}, {trace.t_end}] must span [{need0}, {need1}]"
        )
    ratio = frequency_change_ratio(
        trace, (need0, exposure_t), (exposure_t + settle_s, need1)
    )
    return FeatureVector(ratio.r - 1.0, ratio.amp_ratio - 1.0)


def distance(fv: FeatureVector, sig: ChemicalSignature) -> float:
    return math.hypot((fv.df_rel - sig.df_rel) / sig.tol_df, (fv.da_rel - sig.da_rel) / sig.tol_da)


def classify(fv: FeatureVector, db: SignatureDB, reject_k: float = DEFAULT_REJECT_K,
             warnings: tuple[str, ...] | list[str] = ()) -> ClassificationResult:
    """Nearest signature under tolerance-normalized distance, or unknown."""
    if len(db) == 0:
        raise EmptyDB("signature database is empty")
    # ties break on name so the result does not depend on row order
    best = min(db, key=lambda s: (distance(fv, s), s.name))
    d = distance(fv, best)
    warns = tuple(warnings) + tuple(fv.quality)
    verdict = best.name if d <= reject_k else None
    return ClassificationResult(verdict, d, bool(warnings), warns, best.name)


def flag_confounds(program: StimulusProgram, window: tuple[float, float]) -> list[str]:
    """One warning per light or heat event overlapping ``window``."""
    t0, t1 = window
    out = []
    for e in program:
        if e.kind in (LIGHT, HEAT) and e.t_on < t1 and e.t_off > t0:
            out.append(f"{e.kind} stimulus during [{e.t_on:g}, {e.t_off:g}) overlaps sensing window "
                       f"[{t0:g}, {t1:g}]")
    return out


def sense(trace: Trace, exposure_t: float, db: SignatureDB, program: StimulusProgram | None = None,
          reject_k: float = DEFAULT_REJECT_K) -> tuple[FeatureVector, ClassificationResult]:
    """Extract features, flag confounds over the full sensing span, and classify."""
    fv = extract_features(trace, exposure_t)
    window = (exposure_t - DEFAULT_WINDOW_S, exposure_t + DEFAULT_SETTLE_S + DEFAULT_WINDOW_S)
    warns = flag_confounds(program, window) if program is not None else []
    return fv, classify(fv, db, reject_k, warns)


CLASSIFICATION_HEADER = "verdict,nearest,distance,confounded,df_rel,da_rel,warnings"


def format_classification(fv: FeatureVector, res: ClassificationResult) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CLASSIFICATION_HEADER.split(","))
    w.writerow([res.verdict or "unknown", res.nearest or "", repr(res.distance),
                str(res.confounded).lower(), repr(fv.df_rel), repr(fv.da_rel), "; ".join(res.warnings)])
    return out.getvalue()
