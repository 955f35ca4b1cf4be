"""Exception hierarchy.

Every error carries a short machine-readable ``code`` which the command line
front end prints as ``ERROR:<code>:<message>``.
"""


class PhyschipError(Exception):
    code = "ERROR"


# configuration / io
class ParseError(PhyschipError):
    code = "PARSE"

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class UnknownKey(ParseError):
    code = "UNKNOWN_KEY"


class RangeError(PhyschipError, ValueError):
    code = "RANGE"


class TraceFormatError(ParseError):
    code = "TRACE_FORMAT"


# oscillator
class UnknownStimulus(PhyschipError, KeyError):
    code = "UNKNOWN_STIMULUS"

    def __str__(self):
        return Exception.__str__(self)


class InvalidProgram(PhyschipError, ValueError):
    code = "INVALID_PROGRAM"


class NyquistViolation(PhyschipError, ValueError):
    code = "NYQUIST"


# sigproc
class NoOscillation(PhyschipError):
    code = "NO_OSCILLATION"


class WindowTooLong(PhyschipError, ValueError):
    code = "WINDOW_TOO_LONG"


class InvalidWindow(PhyschipError, ValueError):
    code = "INVALID_WINDOW"


# gates
class ArityMismatch(PhyschipError, ValueError):
    code = "ARITY"


class InvalidRatio(PhyschipError, ValueError):
    code = "INVALID_RATIO"


class GateFailure(PhyschipError):
    code = "GATE_FAILURE"


class NoSolution(PhyschipError):
    """Calibration targets outside what the noise model can reach.

    ``frontier`` holds the achievable (lo, hi) OR accuracy at the requested
    AND accuracy, or None when the AND target itself is unreachable.
    """

    code = "NO_SOLUTION"

    def __init__(self, message, frontier=None):
        self.frontier = frontier
        super().__init__(message)


# circuit
class NetlistSyntaxError(ParseError):
    code = "SYNTAX"


class SemanticError(ParseError):
    code = "SEMANTIC"


class UndrivenNet(SemanticError):
    code = "UNDRIVEN_NET"


class MultipleDrivers(SemanticError):
    code = "MULTIPLE_DRIVERS"


class CycleDetected(SemanticError):
    code = "CYCLE"


class NetlistArityMismatch(SemanticError, ArityMismatch):
    code = "ARITY"


class UnknownGate(SemanticError):
    code = "UNKNOWN_GATE"


class UnsupportedBasis(PhyschipError, ValueError):
    code = "UNSUPPORTED_BASIS"


# analog
class UndersampledInput(PhyschipError, ValueError):
    code = "UNDERSAMPLED_INPUT"


class UndersampledRequest(PhyschipError, ValueError):
    code = "UNDERSAMPLED_REQUEST"


class DegenerateInput(PhyschipError, ValueError):
    code = "DEGENERATE_INPUT"


# sensor
class DuplicateChemical(ParseError):
    code = "DUPLICATE_CHEMICAL"


class DegenerateDB(PhyschipError, ValueError):
    code = "DEGENERATE_DB"


class EmptyDB(PhyschipError, ValueError):
    code = "EMPTY_DB"


class InsufficientTrace(PhyschipError, ValueError):
    code = "INSUFFICIENT_TRACE"


# command line
class MissingFile(PhyschipError, FileNotFoundError):
    code = "MISSING_FILE"
