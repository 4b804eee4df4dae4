import math
from enum import Enum

# Exact by definition (m/s)
SPEED_OF_LIGHT = 299_792_458.0

TWO_PI = 2.0 * math.pi

class WaveOrientation(str, Enum):
    OPPOSED = 'opposed'
    REVERSED = 'reversed'
    AT_REST = 'at-rest'

class TimeOrdering(str, Enum):
    BEFORE_AFTER = 'before-after'
    BEFORE_BEFORE = 'before-before'
    AFTER_AFTER = 'after-after'

class Scheme(str, Enum):
    PHASE = 'phase'
    FREQUENCY = 'freq'
    SIDEBAND = 'sideband'

class BasisStrategy(str, Enum):
    RANDOM = 'random'
    MATCHED = 'matched'

class SidebandVariant(str, Enum):
    SINGLE_PHOTON = 'single-photon'
    TWO_PHOTON = 'two-photon'
    BB84 = 'bb84'

class JitterModel(str, Enum):
    UNIFORM = 'uniform'
    GAUSSIAN = 'gaussian'

class ConfigError(ValueError):
    pass

class NumericalError(RuntimeError):
    pass

class FitError(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self):
        if not self.diagnostics:
            return super().__str__()
        details = ', '.join(f'{key}={value}' for key, value in self.diagnostics.items())
        return f'{super().__str__()} ({details})'

class NoBraggSolution(ValueError):
    pass

class ElasticSingularity(ValueError):
    pass
