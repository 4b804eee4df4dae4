import cmath
import math

import numpy as np
import pytest
from scipy import integrate

from franson.common import TWO_PI, BasisStrategy, JitterModel, Scheme, SidebandVariant
from franson.qkd import (
    RoundSetting,
    binary_entropy,
    eve_timing_attack,
    modulate,
    outcome_probabilities,
    run_protocol,
    sideband_amplitude,
    sideband_state_evolution,
)

OMEGA = TWO_PI * 4e8

def test_probabilities_sum_to_one():
    for phase in np.linspace(0.0, TWO_PI, 9):
        for t in [0.0, 1e-9, 3.7e-9]:
            setting = RoundSetting(phase, 0.3, OMEGA, 0.0, Scheme.FREQUENCY)
            p = outcome_probabilities(setting, t)
            assert p.p_pp + p.p_pm + p.p_mp + p.p_mm == pytest.approx(1.0, abs=1e-15)

def test_perfect_correlation():
    p = outcome_probabilities(RoundSetting(), 0.0)

    assert (p.p_pp, p.p_pm, p.p_mp, p.p_mm) == (0.5, 0.0, 0.0, 0.5)
    assert p.correlation == 1.0

def test_time_averaged_correlations():
    period = TWO_PI / OMEGA

    def mean_correlation(setting):
        # Integrate over the fraction of the beat period
        value, _ = integrate.quad(lambda u: outcome_probabilities(setting, u * period).correlation, 0.0, 1.0,
                                  epsabs=1e-12)
        return value

    assert mean_correlation(RoundSetting(math.pi / 2, 0.0)) == pytest.approx(0.0, abs=1e-10)
    assert mean_correlation(RoundSetting(0.4, 0.3)) == pytest.approx(math.cos(0.7), abs=1e-10)
    assert mean_correlation(RoundSetting(0.0, 0.0, OMEGA, 0.0, Scheme.FREQUENCY)) == pytest.approx(0.0, abs=1e-10)
    assert mean_correlation(RoundSetting(0.0, 0.0, OMEGA, -OMEGA, Scheme.FREQUENCY)) == pytest.approx(1.0, abs=1e-10)

@pytest.mark.parametrize('scheme, omega', [(Scheme.PHASE, 0.0), (Scheme.FREQUENCY, OMEGA)])
def test_monte_carlo_correlation_tables(scheme, omega):
    rounds = 100000
    report = run_protocol(rounds, scheme, BasisStrategy.RANDOM, omega, 1e-9, seed=10)

    # Each basis pair gets about a quarter of the rounds; products are +-1
    sigma = 1.0 / math.sqrt(rounds / 4)
    for pair, expected in {'00': 1.0, '11': 1.0, '01': 0.0, '10': 0.0}.items():
        assert abs(report.mean_correlation[pair] - expected) < 3 * sigma

def test_round_setting_validation():
    with pytest.raises(ValueError):
        RoundSetting(emission_time_jitter=-1.0)
    assert RoundSetting(scheme='sideband').scheme == Scheme.SIDEBAND

def test_ideal_phase_coding_has_no_errors():
    report = run_protocol(100000, Scheme.PHASE, BasisStrategy.RANDOM, 0.0, 1e-9, seed=1)

    assert report.qber == 0.0
    assert report.sifted == pytest.approx(50000, abs=800)
    assert report.mean_correlation['00'] == 1.0
    assert abs(report.mean_correlation['01']) < 0.02
    assert report.eve_information == 0.0

def test_frequency_coding_correlations():
    report = run_protocol(100000, 'freq', 'random', OMEGA, 1e-9, seed=2)

    assert report.qber == 0.0
    assert report.mean_correlation['11'] == 1.0
    assert abs(report.mean_correlation['10']) < 0.02
    assert abs(report.mean_correlation['01']) < 0.02
    assert report.warnings == []
    assert 0.0 <= report.eve_information <= 1.0

def test_matched_bases_are_all_sifted():
    report = run_protocol(20000, Scheme.FREQUENCY, BasisStrategy.MATCHED, OMEGA, 1e-9, seed=3)

    assert report.sifted == report.rounds
    assert report.mean_correlation['01'] is None

def test_noisy_channel_error_rate():
    report = run_protocol(100000, Scheme.PHASE, BasisStrategy.RANDOM, 0.0, 1e-9, seed=4, visibility=0.9)
    assert report.qber == pytest.approx(0.05, abs=0.005)

def test_timing_constraints_are_reported():
    fast_disclosure = run_protocol(1000, Scheme.FREQUENCY, BasisStrategy.RANDOM, OMEGA, 0.2e-9, seed=5)
    assert len(fast_disclosure.warnings) == 1

    short_paths = run_protocol(1000, Scheme.FREQUENCY, BasisStrategy.RANDOM, OMEGA, 1e-9, seed=5, path_delay=0.5e-9)
    assert len(short_paths.warnings) == 1

def test_report_does_not_depend_on_workers():
    single = run_protocol(25000, Scheme.FREQUENCY, BasisStrategy.RANDOM, OMEGA, 1e-9, seed=6, num_workers=1)
    pooled = run_protocol(25000, Scheme.FREQUENCY, BasisStrategy.RANDOM, OMEGA, 1e-9, seed=6, num_workers=4)

    assert single.to_report() == pooled.to_report()

def test_trace_rows():
    report = run_protocol(50, Scheme.PHASE, BasisStrategy.RANDOM, 0.0, 1e-9, seed=7, trace=True)

    assert len(report.trace) == 50
    assert sum(row[5] for row in report.trace) == report.sifted
    assert report.trace_to_csv().splitlines()[1] == 'round,basis_a,basis_b,outcome_a,outcome_b,sifted'

def test_protocol_input_checks():
    with pytest.raises(ValueError):
        run_protocol(0, Scheme.PHASE, BasisStrategy.RANDOM, 0.0, 1e-9, seed=1)
    with pytest.raises(ValueError):
        run_protocol(10, Scheme.FREQUENCY, BasisStrategy.RANDOM, 0.0, 1e-9, seed=1)

def test_sideband_protocol_is_conclusive():
    report = run_protocol(100000, Scheme.SIDEBAND, BasisStrategy.RANDOM, 0.0, 1e-9, seed=8)

    assert report.qber == 0.0
    assert report.sifted == pytest.approx(25000, abs=600)
    assert report.mean_correlation['00'] == 1.0
    assert report.mean_correlation['01'] is None

def test_eve_timing_attack():
    exact = eve_timing_attack(OMEGA, 0.0)
    assert exact.phase_knowledge == 1.0
    assert exact.breach

    blurred = eve_timing_attack(OMEGA, 100 * TWO_PI / OMEGA, JitterModel.UNIFORM)
    assert blurred.phase_knowledge == pytest.approx(0.0, abs=1e-9)
    assert not blurred.breach

    gaussian = eve_timing_attack(OMEGA, 1.0 / OMEGA, 'gaussian')
    assert gaussian.phase_knowledge == pytest.approx(0.607, abs=1e-3)
    assert gaussian.breach

    with pytest.raises(ValueError):
        eve_timing_attack(OMEGA, -1.0)

def test_binary_entropy():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(1.0) == 0.0

def test_sideband_amplitude_examples():
    assert sideband_amplitude(0.3, 0.3, SidebandVariant.SINGLE_PHOTON) == pytest.approx(1.0)
    assert sideband_amplitude(math.pi, 0.0, 'single-photon') == pytest.approx(0.0, abs=1e-15)
    assert sideband_amplitude(math.pi / 4, math.pi / 4, 'two-photon') == pytest.approx(0.5)

    with pytest.raises(ValueError):
        sideband_amplitude(0.0, 0.0, SidebandVariant.BB84)

def test_single_modulation_pass():
    terms = modulate([(0, 1.0 + 0j)], 0.7)

    assert terms[0] == (0, 1.0)
    assert terms[1][0] == 1
    assert terms[1][1] == pytest.approx(cmath.exp(0.7j))

def test_filtered_single_photon_amplitude():
    ledger = sideband_state_evolution(0.4, 1.1, SidebandVariant.SINGLE_PHOTON)

    assert len(ledger.terms) == 4
    assert ledger.filtered_amplitude == pytest.approx(cmath.exp(0.4j) + cmath.exp(1.1j))

def test_two_photon_expansion():
    ledger = sideband_state_evolution(0.4, 1.1, SidebandVariant.TWO_PHOTON)

    assert len(ledger.terms) == 8
    assert ledger.filtered_amplitude == pytest.approx(1 + cmath.exp(1.5j))

    # Brute-force product of the two single-photon polynomials over the source components
    alice = np.array([1.0, cmath.exp(0.4j)])
    bob = np.array([1.0, cmath.exp(1.1j)])
    product = np.zeros((3, 3), dtype=complex)
    for start in [(0, 0), (1, 1)]:
        product[start[0]:start[0] + 2, start[1]:start[1] + 2] += np.outer(alice, bob)

    collected = ledger.collected
    for (i, j), value in np.ndenumerate(product):
        assert collected.get((i, j), 0j) == pytest.approx(value)

def test_ledger_probability_matches_amplitude():
    grid = np.linspace(0.0, TWO_PI, 20)
    for phi_a in grid:
        for phi_b in grid:
            for variant in [SidebandVariant.SINGLE_PHOTON, SidebandVariant.TWO_PHOTON]:
                ledger = sideband_state_evolution(phi_a, phi_b, variant)
                assert ledger.probability() == pytest.approx(sideband_amplitude(phi_a, phi_b, variant), abs=1e-12)

def test_three_sideband_transformation():
    ledger = sideband_state_evolution(0.4, 1.1, SidebandVariant.BB84)

    assert len(ledger.terms) == 9
    assert set(ledger.collected) == {-2, -1, 0, 1, 2}
    assert ledger.filtered_amplitude == pytest.approx(cmath.exp(0.4j) + cmath.exp(1.1j))
    assert sum(ledger.output_distribution().values()) == pytest.approx(1.0)
