"""Visibility versus which-path information when the beat marks the path.

Finite time resolution averages the beat away (visibility loss); the conjugate energy
resolution decides how well a total-energy measurement predicts the ss/ll path pair.

The path prediction rule is: ll if the measured total energy is below omega0 + Omega0/2,
ss otherwise. Its success probability q is computed from its defining Gaussian tail
integral. That integral evaluates to q = 1/2 + erf(x)/2 with x = Omega0 dt / (4 sqrt(2) pi),
hence K = 2q - 1 = erf(x). The closed form 2 erf(x) - 1 that circulates for K is
negative for small x and disagrees with the integral; it is kept in
`printed_information` for comparison only.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate, special

from franson.common import TWO_PI
from utils import render_csv

QUAD_TOLERANCE = 1e-10

DUALITY_EPSILON = 1e-12

@dataclass(frozen=True)
class ResolutionSetting:
    omega_sum: float
    time_resolution: float
    energy_resolution: float

    def __post_init__(self):
        if self.time_resolution < 0:
            raise ValueError(f'Time resolution must be non-negative, got {self.time_resolution}')
        # A tiny relative slack keeps the saturated construction valid after rounding
        if self.energy_resolution * self.time_resolution < TWO_PI * (1 - 1e-12):
            raise ValueError('Energy and time resolutions violate d_omega * d_t >= 2 pi')

    @classmethod
    def saturated(cls, omega_sum, time_resolution):
        if not time_resolution > 0:
            raise ValueError('A saturated setting needs a strictly positive time resolution')
        return cls(omega_sum, time_resolution, TWO_PI / time_resolution)

@dataclass(frozen=True)
class WhichPath:
    q: float
    K: float

@dataclass(frozen=True)
class DualityCheck:
    sum_of_squares: float
    satisfied: bool

def time_averaged_probability(global_phase, omega_sum, time_resolution):
    if time_resolution < 0:
        raise ValueError(f'Time resolution must be non-negative, got {time_resolution}')
    return 0.5 + 0.5 * math.cos(global_phase) * visibility_vs_resolution(omega_sum, time_resolution)

def quadrature_probability(global_phase, omega_sum, time_resolution):
    """Gaussian-weighted quadrature of (1 + cos(phase - omega_sum t)) / 2."""

    if time_resolution == 0:
        return 0.5 * (1.0 + math.cos(global_phase))

    # Integrate in units of the resolution so the Gaussian weight is the standard normal
    def integrand(u):
        return 0.5 * (1.0 + math.cos(global_phase - omega_sum * time_resolution * u)) * math.exp(-0.5 * u * u)

    value, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE, limit=400)

    return value / math.sqrt(TWO_PI)

def visibility_vs_resolution(omega_sum, time_resolution):
    if time_resolution < 0:
        raise ValueError(f'Time resolution must be non-negative, got {time_resolution}')
    return math.exp(-0.5 * (omega_sum * time_resolution) ** 2)

def which_path_information(omega_sum, time_resolution):
    if not time_resolution > 0:
        raise ValueError('Which-path information needs a strictly positive time resolution')

    setting = ResolutionSetting.saturated(omega_sum, time_resolution)

    # Threshold of the prediction rule in units of the energy resolution
    threshold = abs(setting.omega_sum) / 2.0 / setting.energy_resolution

    tail, _ = integrate.quad(lambda u: math.exp(-0.5 * u * u), threshold, np.inf,
                             epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE)
    q = 1.0 - tail / math.sqrt(TWO_PI)

    return WhichPath(q=q, K=2.0 * q - 1.0)

def closed_form_information(omega_sum, time_resolution):
    return float(special.erf(abs(omega_sum) * time_resolution / (4.0 * math.sqrt(2.0) * math.pi)))

def printed_information(omega_sum, time_resolution):
    return 2.0 * closed_form_information(omega_sum, time_resolution) - 1.0

def duality_check(V, K):
    if not (0.0 <= V <= 1.0 and 0.0 <= K <= 1.0):
        raise ValueError(f'V and K must lie in [0, 1], got V={V}, K={K}')

    sum_of_squares = V * V + K * K
    return DualityCheck(sum_of_squares, sum_of_squares <= 1.0 + DUALITY_EPSILON)

def tradeoff_table(omega_dt_grid, omega_sum=1.0):
    rows = []
    for omega_dt in omega_dt_grid:
        time_resolution = omega_dt / omega_sum
        V = visibility_vs_resolution(omega_sum, time_resolution)
        K = which_path_information(omega_sum, time_resolution).K
        rows.append((float(omega_dt), V, K, V * V + K * K))
    return rows

def tradeoff_table_to_csv(rows):
    return render_csv(['omega_dt', 'V', 'K', 'V2_plus_K2'], rows)
