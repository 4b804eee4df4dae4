"""Key distribution with pseudo-complementary bases built from frequency shifts and phases.

Three schemes are simulated:

- phase: Alice uses phi1 in {0, pi/2}, Bob phi2 in {0, -pi/2}; no frequency shift.
- freq: Alice shifts by Omega1 in {0, Omega}, Bob by Omega2 in {0, -Omega}; mismatched
  bases beat at +-Omega and average to zero correlation over the unknown emission time.
- sideband: phase modulation sidebands with two-photon filtering, run as a one-output
  (B92-type) protocol where a filtered detection is a conclusive bit.
"""

from dataclasses import dataclass, field
from functools import partial
import logging
import math

import numpy as np

from franson.common import TWO_PI, BasisStrategy, JitterModel, Scheme, SidebandVariant
from utils import fifo_task_processor, render_csv, shared_config, spawn_seeds

logger = logging.getLogger(__name__)

BREACH_THRESHOLD = 0.5

DEFAULT_PATH_DELAY = 1.5e-9

# Largest post-selected weight |1 + e^{i phi}|^2 of a two-term filtered amplitude
SIDEBAND_MAX_WEIGHT = 4.0

TRACE_HEADER = ['round', 'basis_a', 'basis_b', 'outcome_a', 'outcome_b', 'sifted']

@dataclass(frozen=True)
class RoundSetting:
    alice_phase: float = 0.0
    bob_phase: float = 0.0
    alice_shift: float = 0.0
    bob_shift: float = 0.0
    scheme: Scheme = Scheme.PHASE
    emission_time_jitter: float = 0.0

    def __post_init__(self):
        if self.emission_time_jitter < 0:
            raise ValueError(f'Emission time jitter must be non-negative, got {self.emission_time_jitter}')
        object.__setattr__(self, 'scheme', Scheme(self.scheme))

@dataclass(frozen=True)
class OutcomeProbabilities:
    p_pp: float
    p_pm: float
    p_mp: float
    p_mm: float

    @property
    def correlation(self):
        return self.p_pp + self.p_mm - self.p_pm - self.p_mp

@dataclass
class KeyReport:
    rounds: int
    sifted: int
    qber: float
    mean_correlation: dict
    eve_information: float
    warnings: list = field(default_factory=list)
    trace: list = None

    def to_report(self):
        return {
            'rounds': self.rounds,
            'sifted': self.sifted,
            'qber': self.qber,
            'mean_correlation': self.mean_correlation,
            'eve_information': self.eve_information,
            'warnings': self.warnings,
        }

    def trace_to_csv(self):
        return render_csv(TRACE_HEADER, self.trace or [])

@dataclass(frozen=True)
class EveKnowledge:
    phase_knowledge: float
    breach: bool

def outcome_probabilities(setting, t, visibility=1.0):
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f'Visibility must lie in [0, 1], got {visibility}')

    total_phase = setting.alice_phase + setting.bob_phase + (setting.alice_shift + setting.bob_shift) * t
    interference = visibility * math.cos(total_phase)

    same = 0.25 * (1.0 + interference)
    different = 0.25 * (1.0 - interference)

    return OutcomeProbabilities(p_pp=same, p_pm=different, p_mp=different, p_mm=same)

def binary_entropy(p):
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)

def eve_timing_attack(omega_sum, time_disclosure_jitter, model=JitterModel.UNIFORM):
    """How well Eve can follow the beat phase when detection times leak with some jitter.

    The knowledge is the magnitude of the mean beat phasor over the jitter distribution:
    a Gaussian of standard deviation `jitter` or a uniform window of width `jitter`.
    """

    if time_disclosure_jitter < 0:
        raise ValueError(f'Jitter must be non-negative, got {time_disclosure_jitter}')

    model = JitterModel(model)
    x = omega_sum * time_disclosure_jitter

    if model == JitterModel.GAUSSIAN:
        knowledge = math.exp(-0.5 * x * x)
    else:
        knowledge = abs(float(np.sinc(x / TWO_PI)))

    return EveKnowledge(knowledge, knowledge > BREACH_THRESHOLD)

def _choose_bases(rng, size, basis_strategy):
    basis_a = rng.integers(0, 2, size)
    if basis_strategy == BasisStrategy.MATCHED:
        return basis_a, basis_a.copy()
    return basis_a, rng.integers(0, 2, size)

def _run_correlation_batch(size, scheme, basis_strategy, omega, visibility, seed):
    rng = np.random.default_rng(seed)
    basis_a, basis_b = _choose_bases(rng, size, basis_strategy)

    if scheme == Scheme.PHASE:
        total_phase = basis_a * (math.pi / 2) - basis_b * (math.pi / 2)
    else:
        # Emission time is uniform over one beat period
        period = TWO_PI / abs(omega) if omega != 0 else 0.0
        t = rng.uniform(0.0, period, size)
        total_phase = (basis_a * omega - basis_b * omega) * t

    p_same = 0.5 * (1.0 + visibility * np.cos(total_phase))
    outcome_a = np.where(rng.random(size) < 0.5, 1, -1)
    outcome_b = np.where(rng.random(size) < p_same, outcome_a, -outcome_a)

    return basis_a, basis_b, outcome_a, outcome_b, basis_a == basis_b

def _run_sideband_batch(size, basis_strategy, visibility, seed):
    rng = np.random.default_rng(seed)

    # basis_a is Alice's bit (phi_a = 0 or pi/2), basis_b Bob's filter setting (phi_b = pi/2 or pi)
    basis_a, basis_b = _choose_bases(rng, size, basis_strategy)
    phi_a = basis_a * (math.pi / 2)
    phi_b = math.pi / 2 + basis_b * (math.pi / 2)

    p_detect = 0.5 * (1.0 + visibility * np.cos(phi_a + phi_b))
    detected = rng.random(size) < p_detect

    # phi_b = pi can only fire for phi_a = pi/2 (bit 1); phi_b = pi/2 only for phi_a = 0 (bit 0)
    inferred = basis_b

    return basis_a, basis_b, basis_a, np.where(detected, inferred, -1), detected

def _run_batch(size, scheme, basis_strategy, omega, visibility, seed):
    if scheme == Scheme.SIDEBAND:
        return _run_sideband_batch(size, basis_strategy, visibility, seed)
    return _run_correlation_batch(size, scheme, basis_strategy, omega, visibility, seed)

def _timing_warnings(omega, delta_t_disclosure, path_delay):
    warnings = []

    if omega != 0 and delta_t_disclosure <= 1.0 / abs(omega):
        warnings.append(f'disclosed time resolution {delta_t_disclosure:.3g} s does not exceed '
                        f'1/Omega0 = {1.0 / abs(omega):.3g} s; the beat phase can be followed')
    if path_delay <= delta_t_disclosure:
        warnings.append(f'path delay {path_delay:.3g} s does not exceed the disclosed time resolution '
                        f'{delta_t_disclosure:.3g} s; short and long paths are not distinguishable')

    for warning in warnings:
        logger.warning('Timing constraint violated: %s', warning)

    return warnings

def _pairing_correlations(scheme, basis_a, basis_b, outcome_a, outcome_b, sifted):
    correlations = {}
    for a in (0, 1):
        for b in (0, 1):
            mask = (basis_a == a) & (basis_b == b)
            if scheme == Scheme.SIDEBAND:
                # Conclusive rounds only; +1 when Bob's bit equals Alice's
                mask = mask & sifted
                values = np.where(outcome_a[mask] == outcome_b[mask], 1.0, -1.0)
            else:
                values = (outcome_a[mask] * outcome_b[mask]).astype(float)
            correlations[f'{a}{b}'] = float(values.mean()) if values.size else None
    return correlations

def run_protocol(n_rounds, scheme, basis_strategy, omega, delta_t_disclosure, seed,
                 visibility=1.0, path_delay=DEFAULT_PATH_DELAY, trace=False, num_workers=None):
    """Simulate the raw correlation layer of a key exchange.

    Rounds are split into batches of `qkdBatchSize`, each with its own seed spawned from
    `seed`, so the report does not depend on the number of workers.
    """

    if not n_rounds > 0:
        raise ValueError(f'The number of rounds must be positive, got {n_rounds}')
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f'Visibility must lie in [0, 1], got {visibility}')

    scheme = Scheme(scheme)
    basis_strategy = BasisStrategy(basis_strategy)

    if scheme == Scheme.FREQUENCY and omega == 0:
        raise ValueError('Frequency coding needs a non-zero shift')

    batch_size = shared_config('qkdBatchSize', 10000)
    sizes = [batch_size] * (n_rounds // batch_size)
    if n_rounds % batch_size:
        sizes.append(n_rounds % batch_size)

    tasks = [partial(_run_batch, size, scheme, basis_strategy, omega, visibility, batch_seed)
             for size, batch_seed in zip(sizes, spawn_seeds(seed, len(sizes)))]
    batches = fifo_task_processor(tasks, num_workers)

    basis_a, basis_b, outcome_a, outcome_b, sifted = (np.concatenate(column) for column in zip(*batches))

    n_sifted = int(sifted.sum())
    errors = int(np.sum(sifted & (outcome_a != outcome_b)))
    qber = errors / n_sifted if n_sifted else 0.0

    warnings = []
    eve_information = 0.0
    if scheme == Scheme.FREQUENCY:
        warnings = _timing_warnings(omega, delta_t_disclosure, path_delay)
        knowledge = eve_timing_attack(omega, delta_t_disclosure, JitterModel.UNIFORM).phase_knowledge
        eve_information = 1.0 - binary_entropy(0.5 * (1.0 + knowledge))

    report = KeyReport(
        rounds=n_rounds,
        sifted=n_sifted,
        qber=qber,
        mean_correlation=_pairing_correlations(scheme, basis_a, basis_b, outcome_a, outcome_b, sifted),
        eve_information=eve_information,
        warnings=warnings,
    )

    if trace:
        report.trace = [(i, int(basis_a[i]), int(basis_b[i]), int(outcome_a[i]), int(outcome_b[i]), bool(sifted[i]))
                        for i in range(n_rounds)]

    logger.info('%s protocol: %d rounds, %d sifted, QBER %.4f', scheme.value, n_rounds, n_sifted, qber)

    return report

def sideband_amplitude(phi_a, phi_b, variant):
    variant = SidebandVariant(variant)
    if variant == SidebandVariant.SINGLE_PHOTON:
        return 0.5 * (1.0 + math.cos(phi_a - phi_b))
    if variant == SidebandVariant.TWO_PHOTON:
        return 0.5 * (1.0 + math.cos(phi_a + phi_b))
    raise ValueError('The three-sideband variant has no single filtered detection rule')

@dataclass
class SidebandLedger:
    terms: list
    output: object

    @property
    def collected(self):
        amplitudes = {}
        for index, amplitude in self.terms:
            amplitudes[index] = amplitudes.get(index, 0j) + amplitude
        return amplitudes

    @property
    def filtered_amplitude(self):
        return self.collected.get(self.output, 0j)

    def probability(self):
        return abs(self.filtered_amplitude) ** 2 / SIDEBAND_MAX_WEIGHT

    def output_distribution(self):
        weights = {index: abs(amplitude) ** 2 for index, amplitude in self.collected.items()}
        total = sum(weights.values())
        return {index: weight / total for index, weight in weights.items()}

def modulate(terms, phase, position=None, three_term=False):
    """Apply |k> -> |k> + e^{i phase}|k+1> (+ e^{-i phase}|k-1>) to every term, without collecting.

    `position` selects which photon of a pair index is modulated; None for single photons.
    """

    steps = [(0, 1.0), (1, np.exp(1j * phase))]
    if three_term:
        steps.append((-1, np.exp(-1j * phase)))

    def shifted(index, k):
        if position is None:
            return index + k
        index = list(index)
        index[position] += k
        return tuple(index)

    return [(shifted(index, k), amplitude * factor) for index, amplitude in terms for k, factor in steps]

def sideband_state_evolution(phi_a, phi_b, variant):
    variant = SidebandVariant(variant)

    if variant == SidebandVariant.TWO_PHOTON:
        # Source |w+W>|w+W> + |w>|w>, each side modulated once
        source = [((1, 1), 1.0 + 0j), ((0, 0), 1.0 + 0j)]
        terms = modulate(modulate(source, phi_a, position=0), phi_b, position=1)
        return SidebandLedger(terms, output=(1, 1))

    three_term = variant == SidebandVariant.BB84
    terms = modulate(modulate([(0, 1.0 + 0j)], phi_a, three_term=three_term), phi_b, three_term=three_term)

    return SidebandLedger(terms, output=1)
