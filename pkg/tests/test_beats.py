import math

import numpy as np
import pytest
from scipy import integrate, stats

from franson.aom import driver_step_beat
from franson.beats import (
    BEAT_REGIME_LIMIT,
    FLAG_NO_BEAT,
    FLAG_OK,
    Histogram,
    ProcessParams,
    apply_dead_time,
    beat_forward_model,
    binned_counts,
    fit_beats,
    generate_stream,
    generate_streams,
    histogram_interarrivals,
    interarrival_cdf,
    interarrival_density,
    stream_to_text,
)
from franson.common import TWO_PI, FitError

BEAT = TWO_PI * 31250.0

def _integrate_density(V, omega, tau):
    # Piecewise quadrature over at most one beat period per piece, up to 40 tau
    piece = tau if omega == 0 else min(tau, TWO_PI / omega)
    n_pieces = int(math.ceil(40.0 * tau / piece))
    return sum(integrate.quad(lambda t: interarrival_density(t, V, omega, tau), i * piece, (i + 1) * piece,
                              epsabs=1e-15, epsrel=1e-13)[0]
               for i in range(n_pieces))

@pytest.mark.parametrize('V', [0.0, 0.3, 0.6, 0.9, 1.0])
@pytest.mark.parametrize('omega_tau', [0.0, 0.5, 2.0, 5.0, 20.0])
def test_density_is_normalized(V, omega_tau):
    tau = 1e-3
    assert _integrate_density(V, omega_tau / tau, tau) == pytest.approx(1.0, abs=1e-9)

def test_density_matches_phase_averaged_rate_product():
    # Rate factors (1 + V cos) / 2 at both ends of the gap, averaged over the unknown beat phase
    tau, omega = 1e-3, TWO_PI * 3000.0
    for V in [0.5, 0.97]:
        norm = tau * (1.0 + 0.5 * V ** 2 / (1.0 + (omega * tau) ** 2))
        for dt in [0.0, 3e-5, 1.7e-4, 2e-3]:
            averaged, _ = integrate.quad(
                lambda g: 0.25 * (1 + V * math.cos(g)) * (1 + V * math.cos(omega * dt + g)), 0.0, TWO_PI,
                epsabs=1e-13, epsrel=1e-13)
            implemented = 0.25 * interarrival_density(dt, V, omega, tau) * norm * math.exp(dt / tau)
            assert averaged / TWO_PI == pytest.approx(implemented, abs=1e-8)

def test_density_without_beat_is_exponential():
    t = np.linspace(0.0, 5e-3, 11)
    assert np.allclose(interarrival_density(t, 0.0, BEAT, 1e-3), np.exp(-t / 1e-3) / 1e-3)
    # Without a beat the modulation is absorbed by the normalization
    assert np.allclose(interarrival_density(t, 0.8, 0.0, 1e-3), np.exp(-t / 1e-3) / 1e-3)

def test_density_rejects_negative_intervals():
    with pytest.raises(ValueError):
        interarrival_density(-1.0, 0.5, BEAT, 1e-3)

def test_cdf_matches_integrated_density():
    tau, omega = 2e-3, TWO_PI * 1500.0
    for t in [1e-4, 7e-4, 3e-3, 1e-2]:
        expected, _ = integrate.quad(lambda x: interarrival_density(x, 0.7, omega, tau), 0.0, t, limit=500)
        assert interarrival_cdf(t, 0.7, omega, tau) == pytest.approx(expected, abs=1e-9)

    assert interarrival_cdf(0.0, 0.7, omega, tau) == 0.0
    assert interarrival_cdf(1.0, 0.7, omega, tau) == pytest.approx(1.0)

def test_stream_basics():
    params = ProcessParams(mean_interval=1e-3, visibility=0.9, beat_freq=BEAT, duration=2.0, seed=1)
    stream = generate_stream(params)

    assert np.all(np.diff(stream) > 0)
    assert len(stream) == pytest.approx(2000, rel=0.1)
    assert np.array_equal(stream, generate_stream(params))
    assert generate_stream(ProcessParams(1e-3, 0.9, BEAT, duration=0.0)).size == 0

def test_dead_time_is_non_paralyzable():
    assert np.array_equal(apply_dead_time([0.0, 0.4, 0.9, 1.2, 2.5], 1.0), [0.0, 1.2, 2.5])

    params = ProcessParams(1e-3, 0.5, BEAT, dead_time=2e-6, duration=1.0, seed=4)
    assert np.all(np.diff(generate_stream(params)) >= 2e-6)

def test_long_dead_time_is_flagged(caplog):
    params = ProcessParams(1e-3, 0.5, BEAT, dead_time=1e-5, duration=0.1, seed=2)

    assert not params.dead_time_valid
    generate_stream(params)
    assert 'Dead time' in caplog.text

def test_params_validation():
    with pytest.raises(ValueError):
        ProcessParams(0.0, 0.5, BEAT)
    with pytest.raises(ValueError):
        ProcessParams(1e-3, 1.5, BEAT)

def test_streams_follow_the_interarrival_law():
    # Omega0 tau = 196, well inside the regime where the successive-coincidence law holds
    tau = 1e-3
    passing = 0

    for seed in range(10):
        params = ProcessParams(mean_interval=tau, visibility=0.97, beat_freq=BEAT, duration=1e5 * tau, seed=seed)
        gaps = np.diff(generate_stream(params))
        assert len(gaps) == pytest.approx(1e5, rel=0.02)

        result = stats.kstest(gaps, lambda x: interarrival_cdf(np.asarray(x), 0.97, BEAT, tau))
        passing += result.pvalue > 0.01

    assert passing >= 9

def test_slow_beat_regime_is_flagged(caplog):
    params = ProcessParams(mean_interval=1e-3, visibility=0.9, beat_freq=5e3, duration=0.1, seed=1)

    assert params.beat_regime_valid is False
    assert ProcessParams(1e-3, 0.9, 1.01 * BEAT_REGIME_LIMIT / 1e-3).beat_regime_valid
    assert ProcessParams(1e-3, 0.0, 5e3).beat_regime_valid

    generate_stream(params)
    assert 'Omega0 * tau' in caplog.text

def test_batch_generation_matches_single_runs():
    params = ProcessParams(1e-3, 0.9, BEAT, duration=0.5)
    streams = generate_streams(params, [3, 4, 5], num_workers=2)

    assert len(streams) == 3
    assert np.array_equal(streams[1], generate_stream(ProcessParams(1e-3, 0.9, BEAT, duration=0.5, seed=4)))

def test_stream_text_has_twelve_digits():
    assert stream_to_text([0.1234567890123456, 2.0]) == '0.123456789012\n2\n'

def test_histogram_example():
    tau = 1e-3
    hist = histogram_interarrivals([0.0, tau, 2 * tau], 4e-4, 0.0, 2e-3)

    assert hist.counts[2] == 2
    assert hist.total == 2
    assert hist.dropped == 0

def test_histogram_of_short_stream_is_empty():
    hist = histogram_interarrivals([0.5], 1e-4, 0.0, 1e-3)
    assert hist.n_bins == 10
    assert hist.total == 0

def test_histogram_counts_dropped_differences():
    hist = histogram_interarrivals([0.0, 0.5e-3, 3.0e-3], 1e-4, 0.0, 1e-3)

    assert hist.total == 1
    assert hist.dropped == 1

def test_histogram_rejects_unsorted_stream():
    with pytest.raises(ValueError):
        histogram_interarrivals([0.0, 2.0, 1.0], 0.1, 0.0, 1.0)

def test_histogram_csv_round_trip():
    hist = Histogram(4e-6, 0.0, 4e-4, np.arange(100))
    restored = Histogram.from_csv(hist.to_csv())

    assert restored.n_bins == 100
    assert np.array_equal(restored.counts, hist.counts)
    assert restored.bin_width == pytest.approx(4e-6)

def test_binned_counts_modes(caplog):
    coarse_bins = ProcessParams(1e-3, 0.9, BEAT)
    exact = binned_counts(coarse_bins, 4e-6, 100.0, 0.0, 4e-3)
    assert not exact.approximate
    assert 'exact bin integral' in caplog.text

    fine_bins = ProcessParams(1e-3, 0.9, TWO_PI * 1000.0)
    approximate = binned_counts(fine_bins, 4e-6, 100.0, 0.0, 4e-3)
    assert approximate.approximate

    # 40 mean intervals by default hold essentially all the pairs
    default_range = binned_counts(fine_bins, 1e-5, 100.0)
    assert default_range.expected.sum() == pytest.approx(100.0 / 1e-3, rel=1e-3)

def test_small_bins_agree_with_exact_integral():
    params = ProcessParams(1e-3, 0.9, TWO_PI * 1000.0)
    approximate = binned_counts(params, 1e-6, 1.0, 0.0, 2e-3).expected

    edges = np.linspace(0.0, 2e-3, 2001)
    exact = (interarrival_cdf(edges[1:], 0.9, TWO_PI * 1000.0, 1e-3)
             - interarrival_cdf(edges[:-1], 0.9, TWO_PI * 1000.0, 1e-3)) * 1.0 / 1e-3

    assert np.allclose(approximate, exact, rtol=1e-4)

def test_fit_recovers_forward_model():
    params = ProcessParams(mean_interval=1e-3, visibility=0.95, beat_freq=BEAT)
    hist = beat_forward_model(params, 4e-6, 0.0, 1e-2, acquisition=300.0, seed=12)

    fit = fit_beats(hist)

    assert fit.flag == FLAG_OK
    assert fit.freq_err_hz < 5.0
    assert abs(fit.freq_hz - 31250.0) < 5 * fit.freq_err_hz + 1e-6
    assert fit.visibility_sq_half == pytest.approx(0.5 * 0.95 ** 2, abs=5 * fit.visibility_sq_half_err)
    assert fit.mean_interval == pytest.approx(1e-3, rel=0.02)
    assert 0.5 < fit.goodness < 1.5

def test_fit_without_beat_reports_no_detection():
    params = ProcessParams(mean_interval=1e-3, visibility=0.0, beat_freq=BEAT)
    hist = beat_forward_model(params, 4e-6, 0.0, 1e-2, acquisition=300.0, seed=13)

    fit = fit_beats(hist)

    assert fit.flag == FLAG_NO_BEAT
    assert fit.visibility_sq_half == 0.0
    assert fit.mean_interval == pytest.approx(1e-3, rel=0.02)

def test_fit_needs_enough_bins():
    with pytest.raises(ValueError):
        fit_beats(Histogram(1e-6, 0.0, 1e-4, np.r_[np.ones(10), np.zeros(90)]))

def test_fit_rejects_growing_histogram():
    with pytest.raises(FitError) as excinfo:
        fit_beats(Histogram(1e-6, 0.0, 1e-4, np.arange(1, 101)))

    assert 'slope' in str(excinfo.value)

def test_driver_step_gives_the_measured_beat():
    assert driver_step_beat(1) == 31250.0

def test_histogram_csv_needs_both_columns():
    with pytest.raises(ValueError) as excinfo:
        Histogram.from_csv('# schema_version=1\nlo,count\n0.0,3\n4e-06,2\n')

    assert 'bin_lo_s' in str(excinfo.value)

def test_histogram_csv_needs_even_bins():
    with pytest.raises(ValueError):
        Histogram.from_csv('# schema_version=1\nbin_lo_s,count\n0.0,3\n1e-06,2\n4e-06,1\n')

@pytest.mark.slow
@pytest.mark.parametrize('beat_hz', [31250.0, 62500.0])
def test_fit_recovers_generated_stream(beat_hz):
    # Experimental regime: about 3e5 coincidences, 4 us bins over 0.1 s
    params = ProcessParams(mean_interval=1e-2, visibility=0.97, beat_freq=TWO_PI * beat_hz, duration=3000.0, seed=21)
    hist = histogram_interarrivals(generate_stream(params), 4e-6, 0.0, 0.1)

    fit = fit_beats(hist)

    assert fit.flag == FLAG_OK
    assert fit.freq_hz == pytest.approx(beat_hz, abs=5.0)
    assert abs(fit.freq_hz - beat_hz) < 3 * fit.freq_err_hz + 0.5
    assert fit.visibility_sq_half == pytest.approx(0.5 * 0.97 ** 2, rel=0.1)

@pytest.mark.slow
def test_repeated_fits_cover_the_truth():
    params = ProcessParams(mean_interval=1e-3, visibility=0.95, beat_freq=BEAT)
    acquisition = 30.0
    inside = 0

    for seed in range(100):
        fit = fit_beats(beat_forward_model(params, 4e-6, 0.0, 1e-2, acquisition=acquisition, seed=seed))
        inside += all([
            abs(fit.total - acquisition / params.mean_interval) < 3 * fit.total_err,
            abs(fit.visibility_sq_half - params.v_sq_half) < 3 * fit.visibility_sq_half_err,
            abs(fit.beat_freq - BEAT) < 3 * fit.beat_freq_err,
            abs(fit.mean_interval - params.mean_interval) < 3 * fit.mean_interval_err,
        ])

    assert inside >= 95
