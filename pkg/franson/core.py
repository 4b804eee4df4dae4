"""Closed-form coincidence physics of the frequency-shifted Franson interferometer.

All frequencies inside this module are angular (rad/s). Parameter files use ordinary
frequencies; `load_model` performs the 2*pi conversion. Keys understood by `load_model`:

    delta_l_a, delta_l_b        path differences l - s of each interferometer (m)
    phase_a, phase_b            interferometer phases (rad)
    shift_a_hz, shift_b_hz      frequency shift of the short arm photon (Hz, signed)
    pump_center_hz              pump central frequency (Hz)
    pump_bandwidth_hz           pump bandwidth (Hz)
    photon_bandwidth_hz         single photon bandwidth (Hz)
    pair_rate                   mean pair detection rate (1/s)
    accidental_rate             background coincidence rate (1/s, optional, default 0)
"""

from dataclasses import dataclass
import logging
import math

import numpy as np

from franson.common import SPEED_OF_LIGHT, TWO_PI, NumericalError
from utils import render_csv

logger = logging.getLogger(__name__)

# Phase smear below which single-photon fringes survive (< 1% visibility loss)
FRINGE_SMEAR_THRESHOLD = 0.1

# Minimum significance of the fitted fringe amplitude, in standard errors
DEGENERATE_AMPLITUDE_SIGMAS = 3.0

# Local realistic models bound the CHSH value by 2, quantum mechanics by 2 sqrt 2
CHSH_CLASSICAL_BOUND = 2.0
CHSH_QUANTUM_BOUND = 2.0 * math.sqrt(2.0)

MODEL_KEYS = [
    'delta_l_a', 'delta_l_b', 'phase_a', 'phase_b', 'shift_a_hz', 'shift_b_hz',
    'pump_center_hz', 'pump_bandwidth_hz', 'photon_bandwidth_hz', 'pair_rate',
]
OPTIONAL_MODEL_KEYS = {'accidental_rate': 0.0}

def reduce_phase(phase):
    reduced = math.fmod(phase, TWO_PI)
    if reduced < 0:
        reduced += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    if reduced >= TWO_PI:
        reduced = 0.0
    return reduced

@dataclass(frozen=True)
class InterferometerArm:
    delta_l: float = 0.0
    phase: float = 0.0
    freq_shift: float = 0.0

    def __post_init__(self):
        if self.delta_l < 0:
            raise ValueError(f'Path difference must be non-negative, got {self.delta_l}')
        object.__setattr__(self, 'phase', reduce_phase(float(self.phase)))

    @property
    def delay(self):
        return self.delta_l / SPEED_OF_LIGHT

@dataclass(frozen=True)
class SourceSpectrum:
    omega0: float
    pump_bandwidth: float
    photon_bandwidth: float
    pair_rate: float

    def __post_init__(self):
        for name in ['omega0', 'pump_bandwidth', 'photon_bandwidth', 'pair_rate']:
            if not getattr(self, name) > 0:
                raise ValueError(f'{name} must be strictly positive, got {getattr(self, name)}')
        if self.photon_bandwidth < self.pump_bandwidth:
            raise ValueError('Photon bandwidth must not be smaller than the pump bandwidth')

@dataclass(frozen=True)
class CoincidenceModel:
    arm_a: InterferometerArm
    arm_b: InterferometerArm
    source: SourceSpectrum
    accidental_rate: float = 0.0

    def __post_init__(self):
        if self.accidental_rate < 0:
            raise ValueError(f'Accidental rate must be non-negative, got {self.accidental_rate}')

    @property
    def omega_sum(self):
        return self.arm_a.freq_shift + self.arm_b.freq_shift

    @property
    def delay(self):
        # Equal to delta_l / c once the two interferometers are equalized
        return 0.5 * (self.arm_a.delay + self.arm_b.delay)

    @property
    def global_phase(self):
        delay = self.delay
        return (self.source.omega0 * delay + self.omega_sum * delay
                + self.arm_a.phase + self.arm_b.phase)

@dataclass(frozen=True)
class Distinguishability:
    phase_smear: float
    fringes_possible: bool

@dataclass(frozen=True)
class FringePoint:
    phase: float
    true_coincidences: int
    accidental_coincidences: int

    @property
    def total(self):
        return self.true_coincidences + self.accidental_coincidences

@dataclass(frozen=True)
class FringeVisibility:
    raw_visibility: float
    raw_error: float
    noise_subtracted_visibility: float
    noise_subtracted_error: float
    fit_phase: float
    degenerate: bool = False

@dataclass(frozen=True)
class BellTest:
    chsh: float
    chsh_error: float
    significance: float
    violation: bool

def _check_chi(chi):
    if not 0.0 <= chi <= 1.0:
        raise ValueError(f'Visibility factor chi must lie in [0, 1], got {chi}')

def coincidence_probability(model, chi, t):
    _check_chi(chi)
    value = 0.5 * (1.0 + chi * np.cos(model.global_phase - model.omega_sum * np.asarray(t, dtype=float)))
    if np.ndim(value) == 0:
        return float(value)
    return value

def _gaussian_factor(x, y):
    return math.exp(-0.5 * (x * y) ** 2)

def visibility_factor(delta_l_a, delta_l_b, pump_bandwidth, photon_bandwidth):
    if not (pump_bandwidth > 0 and photon_bandwidth > 0):
        raise ValueError('Bandwidths must be strictly positive')

    pump_term = _gaussian_factor(delta_l_b / SPEED_OF_LIGHT, pump_bandwidth)
    photon_term = _gaussian_factor((delta_l_a - delta_l_b) / SPEED_OF_LIGHT, photon_bandwidth)

    return pump_term * photon_term

def single_photon_distinguishability(freq_shift, photon_bandwidth):
    if not photon_bandwidth > 0:
        raise ValueError('Photon bandwidth must be strictly positive')

    phase_smear = abs(freq_shift) / photon_bandwidth

    return Distinguishability(phase_smear, phase_smear < FRINGE_SMEAR_THRESHOLD)

def bandwidth_from_wavelength(delta_lambda, center_wavelength):
    return TWO_PI * SPEED_OF_LIGHT * delta_lambda / center_wavelength ** 2

def series_alignment_beat(arm_a, arm_b):
    # With the interferometers in series the s_a l_b and l_a s_b paths beat at the shift difference
    return arm_a.freq_shift - arm_b.freq_shift

def paths_equalized(arm_a, arm_b, coherence_length):
    return abs(arm_a.delta_l - arm_b.delta_l) < coherence_length

def window_average_cos(phase, omega_sum, t0, duration):
    """Exact mean of cos(phase - omega_sum * t) over [t0, t0 + duration]."""

    if duration <= 0:
        return math.cos(phase - omega_sum * t0)

    half = 0.5 * omega_sum * duration
    # np.sinc is the normalized sinc, sin(pi x) / (pi x)
    return math.cos(phase - omega_sum * t0 - half) * float(np.sinc(half / math.pi))

def fringe_scan(model, chi, phase_grid, integration_time, seed):
    _check_chi(chi)
    if not integration_time > 0:
        raise ValueError(f'Integration time must be positive, got {integration_time}')

    rng = np.random.default_rng(seed)
    omega_sum = model.omega_sum
    scan = []

    for phase in phase_grid:
        t0 = rng.uniform(0.0, TWO_PI / abs(omega_sum)) if omega_sum != 0 else 0.0
        mean_cos = window_average_cos(model.global_phase + phase, omega_sum, t0, integration_time)
        probability = 0.5 * (1.0 + chi * mean_cos)

        true_counts = rng.poisson(model.source.pair_rate * integration_time * probability)
        accidental_counts = rng.poisson(model.accidental_rate * integration_time)

        scan.append(FringePoint(float(phase), int(true_counts), int(accidental_counts)))

    return scan

def fringe_scan_to_csv(scan):
    rows = [(point.phase, point.true_coincidences, point.accidental_coincidences) for point in scan]
    return render_csv(['phase_rad', 'true_counts', 'accidental_counts'], rows)

def visibility_from_counts(scan):
    """Fit C (1 + V cos(phase + phase0)) + B to a fringe scan.

    The model is linear in (a, b, c) = (C + B, C V cos phase0, -C V sin phase0), so a
    weighted linear least squares with Poisson weights gives the fit and its covariance.
    The raw visibility keeps B inside the offset; the noise-subtracted one removes the
    accidental mean first.
    """

    if len(scan) < 8:
        raise ValueError(f'A fringe scan needs at least 8 points, got {len(scan)}')

    phases = np.array([point.phase for point in scan], dtype=float)
    counts = np.array([point.total for point in scan], dtype=float)
    accidentals = np.array([point.accidental_coincidences for point in scan], dtype=float)

    span = np.ptp(phases)
    if span + span / (len(scan) - 1) < TWO_PI * (1 - 1e-9):
        raise ValueError('The fringe scan must cover at least one full fringe period')

    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    weights = 1.0 / np.maximum(counts, 1.0)
    sqrt_w = np.sqrt(weights)

    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise NumericalError('Fringe fit design is singular; the scan phases do not resolve cos and sin')

    coefficients, _, _, _ = np.linalg.lstsq(design * sqrt_w[:, None], counts * sqrt_w, rcond=None)
    try:
        covariance = np.linalg.inv(design.T @ (design * weights[:, None]))
    except np.linalg.LinAlgError as e:
        raise NumericalError(f'Fringe fit covariance is singular: {e}')

    a, b, c = coefficients
    amplitude = math.hypot(b, c)
    fit_phase = reduce_phase(math.atan2(-c, b))

    background = float(np.mean(accidentals))
    background_var = background / len(scan)

    if amplitude > 0:
        grad_amplitude = np.array([0.0, b / amplitude, c / amplitude])
        amplitude_error = math.sqrt(grad_amplitude @ covariance @ grad_amplitude)
    else:
        amplitude_error = math.inf

    offset_net = a - background
    if amplitude <= DEGENERATE_AMPLITUDE_SIGMAS * amplitude_error or offset_net <= 0:
        logger.warning('Fringe amplitude %.3g is not significant (error %.3g), reporting V=0',
                       amplitude, amplitude_error)
        return FringeVisibility(0.0, 0.0, 0.0, 0.0, fit_phase, degenerate=True)

    def visibility_error(offset, offset_extra_var):
        grad = np.array([-amplitude / offset ** 2, b / (amplitude * offset), c / (amplitude * offset)])
        variance = grad @ covariance @ grad + (amplitude / offset ** 2) ** 2 * offset_extra_var
        return math.sqrt(variance)

    return FringeVisibility(
        raw_visibility=amplitude / a,
        raw_error=visibility_error(a, 0.0),
        noise_subtracted_visibility=amplitude / offset_net,
        noise_subtracted_error=visibility_error(offset_net, background_var),
        fit_phase=fit_phase,
    )

def bell_violation(visibility, error=0.0):
    """CHSH value reached by two-photon fringes of the given visibility.

    With the analyzer settings at the optimal angles the correlation is V cos, so
    S = 2 sqrt(2) V. The inequality S <= 2 is violated for V > 1/sqrt(2); the
    significance is the excess over 2 in units of the propagated standard error.
    """

    if visibility < 0:
        raise ValueError(f'Visibility must be non-negative, got {visibility}')
    if error < 0:
        raise ValueError(f'Visibility error must be non-negative, got {error}')

    chsh = CHSH_QUANTUM_BOUND * visibility
    chsh_error = CHSH_QUANTUM_BOUND * error
    excess = chsh - CHSH_CLASSICAL_BOUND

    if chsh_error > 0:
        significance = excess / chsh_error
    else:
        significance = math.copysign(math.inf, excess) if excess != 0 else 0.0

    return BellTest(chsh, chsh_error, significance, chsh > CHSH_CLASSICAL_BOUND)

def load_model(params):
    arm_a = InterferometerArm(params['delta_l_a'], params['phase_a'], TWO_PI * params['shift_a_hz'])
    arm_b = InterferometerArm(params['delta_l_b'], params['phase_b'], TWO_PI * params['shift_b_hz'])

    source = SourceSpectrum(
        omega0=TWO_PI * params['pump_center_hz'],
        pump_bandwidth=TWO_PI * params['pump_bandwidth_hz'],
        photon_bandwidth=TWO_PI * params['photon_bandwidth_hz'],
        pair_rate=params['pair_rate'],
    )

    return CoincidenceModel(arm_a, arm_b, source, params.get('accidental_rate', 0.0))
