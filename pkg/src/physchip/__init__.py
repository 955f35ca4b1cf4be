"""Simulator for a slime-mould oscillator computing chip.

Stimulus-driven oscillator model, frequency estimation, threshold logic
gates, multi-gate circuits, the tube's RC low-pass behaviour and a chemical
sensor, plus the ``physchip`` command line.
"""

from .analog import (
    FilterSpec,
    Waveform,
    apply_filter,
    gain_phase,
    generate_waveform,
    ideal_triangle,
    shape_similarity,
    sine_gain,
)
from .circuit import (
    Gate,
    Netlist,
    bundled_netlist,
    circuit_accuracy,
    compose,
    eval_ideal,
    parse_netlist,
    read_netlist,
    simulate_circuit,
    tech_map,
    truth_table,
)
from .config import ExperimentConfig, load_config
from .errors import PhyschipError
from .gates import (
    GateKind,
    GateSpec,
    analytic_accuracy,
    calibrate_noise,
    decode_output,
    encode_inputs,
    gate_accuracy,
    run_gate,
)
from .oscillator import (
    HEAT,
    LIGHT,
    OAT,
    OscillatorParams,
    StimulusEvent,
    StimulusKind,
    StimulusProgram,
    Trace,
    chemical,
    fused_delta,
    simulate_trace,
)
from .sensor import ChemicalSignature, classify, extract_features, flag_confounds, load_signatures
from .sigproc import detrend, estimate_frequency, frequency_change_ratio

__version__ = "0.1.0"
