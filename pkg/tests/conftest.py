import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import pytest

from franson.aom import AomSpec
from franson.core import CoincidenceModel, InterferometerArm, SourceSpectrum

@pytest.fixture
def source():
    return SourceSpectrum(omega0=1.43e15, pump_bandwidth=1e6, photon_bandwidth=1.2e13, pair_rate=1e4)

@pytest.fixture
def make_model(source):
    def _make_model(phase_a=0.0, phase_b=0.0, shift_a=0.0, shift_b=0.0, accidental_rate=0.0, pair_rate=None):
        spectrum = source
        if pair_rate is not None:
            spectrum = SourceSpectrum(source.omega0, source.pump_bandwidth, source.photon_bandwidth, pair_rate)
        return CoincidenceModel(
            InterferometerArm(0.0, phase_a, shift_a),
            InterferometerArm(0.0, phase_b, shift_b),
            spectrum,
            accidental_rate,
        )
    return _make_model

@pytest.fixture
def amtir_spec():
    # 100 MHz modulator in AMTIR-1 at 1314 nm
    return AomSpec(
        acoustic_freq=1e8,
        sound_speed=2500.0,
        wavelength_light=1.314e-6,
        refractive_index=2.5,
        interaction_length=1e-2,
        figure_of_merit=1e-15,
        acoustic_power=1.0,
    )

@pytest.fixture
def write_config(tmp_path):
    def _write_config(text, name='params.env'):
        path = tmp_path / name
        path.write_text(text)
        return path
    return _write_config
