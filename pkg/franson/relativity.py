"""Time ordering of the two detections seen from the rest frames of the acoustic waves.

When the two acoustic waves move, each modulator defines its own frame. Within the
window |dt| < v d / c^2 the two choices can each happen first in their own frame
(before-before with opposed waves, after-after with reversed waves). Multisimultaneity
predicts that the two-photon fringes vanish inside that window.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy import integrate, special

from franson.common import SPEED_OF_LIGHT, TimeOrdering, WaveOrientation
from utils import render_csv

logger = logging.getLogger(__name__)

# Measured stage step 0.10 mm -> 0.11 mm of air path
STAGE_TO_AIR_SLOPE = 1.1

DEFAULT_SIGMA = 0.076e-3

@dataclass(frozen=True)
class TimingConfig:
    frame_speed: float
    separation: float
    lab_time_diff: float
    wave_orientation: WaveOrientation = WaveOrientation.OPPOSED

    def __post_init__(self):
        if self.frame_speed < 0:
            raise ValueError(f'Frame speed must be non-negative, got {self.frame_speed}')
        if not self.frame_speed < SPEED_OF_LIGHT:
            raise ValueError('Frame speed must stay below the speed of light')
        if not self.separation > 0:
            raise ValueError(f'Separation must be positive, got {self.separation}')
        object.__setattr__(self, 'wave_orientation', WaveOrientation(self.wave_orientation))

@dataclass(frozen=True)
class TimingClassification:
    ordering: TimeOrdering
    margin: float
    max_discrepancy: float

@dataclass(frozen=True)
class SpreadBudget:
    coherence_length: float
    dispersion_spread: float
    total: float

@dataclass(frozen=True)
class VisibilityCurve:
    path_offsets: np.ndarray
    qm_visibility: float
    multisim_visibility: np.ndarray

    def to_csv(self):
        rows = [(x, self.qm_visibility, v) for x, v in zip(self.path_offsets, self.multisim_visibility)]
        return render_csv(['x_m', 'v_qm', 'v_multisim'], rows)

def max_time_discrepancy(v, d):
    """Largest lab-frame delay (s) that still allows before-before, and its air path (m)."""

    if not 0 <= v < SPEED_OF_LIGHT:
        raise ValueError(f'Frame speed must lie in [0, c), got {v}')

    delay = v * d / SPEED_OF_LIGHT ** 2
    return delay, SPEED_OF_LIGHT * delay

def spacelike_window(d):
    return d / SPEED_OF_LIGHT

def classify_timing(config):
    if config.wave_orientation == WaveOrientation.AT_REST:
        return TimingClassification(TimeOrdering.BEFORE_AFTER, abs(config.lab_time_diff), 0.0)

    max_delay, _ = max_time_discrepancy(config.frame_speed, config.separation)
    lab_delay = abs(config.lab_time_diff)

    if lab_delay >= max_delay:
        return TimingClassification(TimeOrdering.BEFORE_AFTER, lab_delay - max_delay, max_delay)

    if config.wave_orientation == WaveOrientation.OPPOSED:
        ordering = TimeOrdering.BEFORE_BEFORE
    else:
        ordering = TimeOrdering.AFTER_AFTER

    return TimingClassification(ordering, max_delay - lab_delay, max_delay)

def spread_budget(filter_bandwidth_nm, center_nm, fiber_length_m, dispersion_ps_nm_km, wavelength_offset_nm):
    if filter_bandwidth_nm < 0 or fiber_length_m < 0 or dispersion_ps_nm_km < 0:
        raise ValueError('Bandwidth, fiber length and dispersion must be non-negative')
    if not center_nm > 0:
        raise ValueError(f'Center wavelength must be positive, got {center_nm}')

    # A zero filter bandwidth means no filter-limited coherence term
    if filter_bandwidth_nm > 0:
        coherence = (center_nm * 1e-9) ** 2 / (filter_bandwidth_nm * 1e-9)
    else:
        coherence = 0.0

    delay_ps = abs(dispersion_ps_nm_km * (fiber_length_m / 1000.0) * wavelength_offset_nm)
    dispersion = SPEED_OF_LIGHT * delay_ps * 1e-12

    return SpreadBudget(coherence, dispersion, math.hypot(coherence, dispersion))

def multisim_visibility(x, window, sigma, v0):
    """Step visibility (0 inside |x| < window, v0 outside) smoothed by a unit Gaussian."""

    if not sigma > 0:
        raise ValueError(f'sigma must be positive, got {sigma}')
    if window < 0:
        raise ValueError(f'window must be non-negative, got {window}')

    x = np.asarray(x, dtype=float)
    scale = math.sqrt(2.0) * sigma
    # 1 - (erf(a) + erf(b)) / 2 written with erfc to keep the bottom of the dip accurate
    value = 0.5 * v0 * (special.erfc((window - x) / scale) + special.erfc((window + x) / scale))

    if np.ndim(value) == 0:
        return float(value)
    return value

def convolution_visibility(x, window, sigma, v0):
    if not sigma > 0:
        raise ValueError(f'sigma must be positive, got {sigma}')

    def integrand(y):
        step = 0.0 if abs(y) < window else v0
        return step * math.exp(-0.5 * ((x - y) / sigma) ** 2) / (math.sqrt(2.0 * math.pi) * sigma)

    lo, hi = x - 12.0 * sigma, x + 12.0 * sigma
    breaks = [p for p in (-window, window) if lo < p < hi]
    value, _ = integrate.quad(integrand, lo, hi, points=breaks or None, epsabs=1e-12, limit=200)

    return value

def predict_curves(offsets, window, sigma=DEFAULT_SIGMA, v0=1.0):
    offsets = np.asarray(offsets, dtype=float)
    if offsets.size == 0:
        raise ValueError('At least one path offset is required')

    if window == 0:
        multisim = np.full_like(offsets, v0)
    else:
        multisim = multisim_visibility(offsets, window, sigma, v0)

    return VisibilityCurve(offsets, v0, np.atleast_1d(multisim))

def half_depth_width(curve):
    order = np.argsort(curve.path_offsets)
    x = curve.path_offsets[order]
    v = curve.multisim_visibility[order]
    half = 0.5 * curve.qm_visibility

    below = np.flatnonzero(v < half)
    if below.size == 0:
        return 0.0

    def crossing(i, j):
        if v[i] == v[j]:
            return x[i]
        return x[i] + (half - v[i]) * (x[j] - x[i]) / (v[j] - v[i])

    first, last = below[0], below[-1]
    left = crossing(first - 1, first) if first > 0 else x[first]
    right = crossing(last, last + 1) if last < len(x) - 1 else x[last]

    return float(right - left)

def elongation_calibration(stage_positions, optical_path_per_stage=STAGE_TO_AIR_SLOPE):
    if not optical_path_per_stage > 0:
        raise ValueError(f'Calibration slope must be positive, got {optical_path_per_stage}')
    return np.asarray(stage_positions, dtype=float) * optical_path_per_stage
