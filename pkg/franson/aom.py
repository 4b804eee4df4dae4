"""Acousto-optic modulator physics used to shift the short-arm photons.

Angles are radians everywhere in this module; degrees only appear in reports.
"""

from dataclasses import dataclass
import logging
import math

from franson.common import SPEED_OF_LIGHT, TWO_PI, ElasticSingularity, NoBraggSolution
from franson.core import single_photon_distinguishability

logger = logging.getLogger(__name__)

# Above this angle the small-angle reflectivity formula is flagged
SMALL_ANGLE_LIMIT = 0.2

# Closest approach to the incompressible limit nu = 1/2
POISSON_SINGULARITY_GAP = 1e-9

# Synthesizer step of the driver PLL (Hz)
DRIVER_STEP_HZ = 15625.0

@dataclass(frozen=True)
class AomSpec:
    acoustic_freq: float
    sound_speed: float
    wavelength_light: float
    refractive_index: float
    interaction_length: float
    figure_of_merit: float
    acoustic_power: float

    def __post_init__(self):
        for name in ['acoustic_freq', 'sound_speed', 'wavelength_light', 'refractive_index',
                     'interaction_length', 'figure_of_merit']:
            if not getattr(self, name) > 0:
                raise ValueError(f'{name} must be strictly positive, got {getattr(self, name)}')
        # Zero power is allowed: it is the switched-off modulator
        if self.acoustic_power < 0:
            raise ValueError(f'Acoustic power must be non-negative, got {self.acoustic_power}')

    @property
    def acoustic_wavelength(self):
        return self.sound_speed / self.acoustic_freq

    def double_pass_shift(self):
        # Each photon crosses its modulator twice
        return 2.0 * self.acoustic_freq

@dataclass(frozen=True)
class ElasticMaterial:
    young_modulus: float
    poisson_ratio: float
    density: float

    def __post_init__(self):
        if not self.young_modulus > 0:
            raise ValueError(f'Young modulus must be positive, got {self.young_modulus}')
        if not self.density > 0:
            raise ValueError(f'Density must be positive, got {self.density}')
        if not self.poisson_ratio > -1.0:
            raise ValueError(f'Poisson ratio must exceed -1, got {self.poisson_ratio}')
        if not self.poisson_ratio < 0.5:
            raise ElasticSingularity(f'Poisson ratio must stay below 1/2, got {self.poisson_ratio}')

@dataclass(frozen=True)
class Deflection:
    internal: float
    external: float

@dataclass(frozen=True)
class Reflectivity:
    reflectivity: float
    half_power: float
    small_angle_valid: bool

def bragg_angle(spec):
    argument = spec.wavelength_light / (2.0 * spec.refractive_index * spec.acoustic_wavelength)
    if argument > 1.0:
        raise NoBraggSolution(f'No Bragg angle: sin(theta_B) would be {argument:.6g}')
    return math.asin(argument)

def deflection_angles(spec):
    theta = bragg_angle(spec)

    # Snell refraction of the half-deflection at the exit face
    sin_external = spec.refractive_index * math.sin(theta)
    if sin_external > 1.0:
        raise NoBraggSolution('The deflected beam is totally reflected at the exit face')

    return Deflection(internal=2.0 * theta, external=2.0 * math.asin(sin_external))

def _reflectivity_per_watt(spec, theta):
    return (math.pi ** 2 / (2.0 * spec.wavelength_light ** 2)
            * (spec.interaction_length / math.sin(theta)) ** 2 * spec.figure_of_merit)

def reflectivity(spec, theta):
    if not 0.0 < theta < math.pi / 2:
        raise ValueError(f'Reflectivity needs 0 < theta < pi/2, got {theta}')

    small_angle_valid = theta <= SMALL_ANGLE_LIMIT
    if not small_angle_valid:
        logger.warning('theta = %.3g rad is outside the small-angle reflectivity regime', theta)

    per_watt = _reflectivity_per_watt(spec, theta)

    return Reflectivity(
        reflectivity=per_watt * spec.acoustic_power,
        half_power=0.5 / per_watt,
        small_angle_valid=small_angle_valid,
    )

def sound_speed(material):
    nu = material.poisson_ratio
    if 0.5 - nu < POISSON_SINGULARITY_GAP:
        raise ElasticSingularity(f'Lame lambda diverges at Poisson ratio {nu}')

    shear = material.young_modulus / (2.0 * (1.0 + nu))
    lame = material.young_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))

    return math.sqrt((lame + 2.0 * shear) / material.density)

def doppler_shift(n, v, theta, nu):
    return 2.0 * n * v * math.sin(theta) / SPEED_OF_LIGHT * nu

def alpha(nu_aom, v_synch):
    if not v_synch > 0:
        raise ValueError(f'Synchronization signal speed must be positive, got {v_synch}')
    return TWO_PI * nu_aom / v_synch

def synch_speed_from_alpha(nu_aom, alpha_value):
    if alpha_value == 0:
        raise ValueError('A zero phase slope does not determine a signal speed')
    return TWO_PI * nu_aom / alpha_value

def sync_phase(nu_aom, v_synch, cable_delta):
    return alpha(nu_aom, v_synch) * cable_delta

def residual_beat(nu_aom, ratio_uncertainty):
    """Beat frequency (Hz) left when the two drivers share an oscillator to the given ratio."""
    return abs(nu_aom * ratio_uncertainty)

def driver_step_beat(steps, step_hz=DRIVER_STEP_HZ, passes=2):
    return steps * step_hz * passes

def phase_smear(spec, photon_bandwidth):
    return single_photon_distinguishability(TWO_PI * spec.double_pass_shift(), photon_bandwidth)

def aom_report(spec, material=None, v_synch=None, cable_delta=0.0, photon_bandwidth=None):
    theta = bragg_angle(spec)
    deflection = deflection_angles(spec)
    reflection = reflectivity(spec, theta)
    optical_freq = SPEED_OF_LIGHT / spec.wavelength_light

    report = {
        'acoustic_wavelength_m': spec.acoustic_wavelength,
        'bragg_angle_rad': theta,
        'bragg_angle_deg': math.degrees(theta),
        'deflection_internal_deg': math.degrees(deflection.internal),
        'deflection_external_deg': math.degrees(deflection.external),
        'doppler_shift_hz': doppler_shift(spec.refractive_index, spec.sound_speed, theta, optical_freq),
        'double_pass_shift_hz': spec.double_pass_shift(),
        'reflectivity': reflection.reflectivity,
        'half_power_w': reflection.half_power,
        'small_angle_valid': reflection.small_angle_valid,
    }

    if material is not None:
        report['sound_speed_m_s'] = sound_speed(material)

    if v_synch is not None:
        report['alpha_rad_per_m'] = alpha(spec.double_pass_shift(), v_synch)
        report['sync_phase_rad'] = sync_phase(spec.double_pass_shift(), v_synch, cable_delta)

    if photon_bandwidth is not None:
        smear = phase_smear(spec, photon_bandwidth)
        report['phase_smear'] = smear.phase_smear
        report['single_photon_fringes'] = smear.fringes_possible

    return report
