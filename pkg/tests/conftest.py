import pytest

from physchip.gates import calibrate_noise
from physchip.oscillator import OscillatorParams


@pytest.fixture(scope="session")
def calibrated() -> OscillatorParams:
    """Noise parameters fitted to AND 0.90 / OR 0.78 (about 5 s)."""
    return calibrate_noise({"AND": 0.90, "OR": 0.78})


@pytest.fixture
def quiet() -> OscillatorParams:
    return OscillatorParams().noiseless()
