"""Two-photon beats seen through the statistics of successive coincidences.

The coincidence stream is an inhomogeneous Poisson process whose rate is modulated
at the beat frequency; the distribution of the time between successive coincidences
keeps a cos(Omega0 dt) modulation of depth V^2/2 on top of the exponential decay,
even though the absolute phase of the beat is never observed.
"""

from dataclasses import dataclass, field, replace
from functools import partial
import logging
import math

import numpy as np
from scipy import optimize, special

from franson.common import TWO_PI, FitError
from utils import fifo_task_processor, read_csv, render_csv

logger = logging.getLogger(__name__)

# t_b * Omega0 below which a bin is represented by its center value
SMALL_BIN_LIMIT = 0.1

# Dead time must stay below this fraction of the beat period for the analytic density
DEAD_TIME_FRACTION = 0.1

# Probability that pure noise produces a periodogram peak above the detection threshold
FALSE_ALARM = 1e-4

# Number of coarse bins used for the log-linear envelope estimate
ENVELOPE_BINS = 64

# Omega0 * tau above which the successive-coincidence law holds for generated streams
BEAT_REGIME_LIMIT = 50.0

MAX_FIT_EVALUATIONS = 2000

FLAG_OK = 'ok'
FLAG_NO_BEAT = 'no beat detected'

HISTOGRAM_COLUMNS = ['bin_lo_s', 'count']

@dataclass(frozen=True)
class ProcessParams:
    mean_interval: float
    visibility: float
    beat_freq: float
    dead_time: float = 0.0
    duration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.mean_interval > 0:
            raise ValueError(f'Mean interval must be positive, got {self.mean_interval}')
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f'Visibility must lie in [0, 1], got {self.visibility}')
        if self.dead_time < 0:
            raise ValueError(f'Dead time must be non-negative, got {self.dead_time}')

    @property
    def v_sq_half(self):
        return 0.5 * self.visibility ** 2

    @property
    def beat_regime_valid(self):
        if self.beat_freq == 0 or self.visibility == 0:
            return True
        return abs(self.beat_freq) * self.mean_interval >= BEAT_REGIME_LIMIT

    @property
    def dead_time_valid(self):
        if self.beat_freq == 0 or self.dead_time == 0:
            return True
        return self.dead_time < DEAD_TIME_FRACTION * TWO_PI / abs(self.beat_freq)

@dataclass(frozen=True)
class BinnedCounts:
    edges: np.ndarray
    expected: np.ndarray
    approximate: bool

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

@dataclass
class Histogram:
    bin_width: float
    lo: float
    hi: float
    counts: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f'Histogram range must satisfy hi > lo, got [{self.lo}, {self.hi})')
        if not self.bin_width > 0:
            raise ValueError(f'Bin width must be positive, got {self.bin_width}')

        n_bins = _bin_count(self.lo, self.hi, self.bin_width)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if len(self.counts) != n_bins:
            raise ValueError(f'Expected {n_bins} bins, got {len(self.counts)} counts')
        if np.any(self.counts < 0):
            raise ValueError('Histogram counts must be non-negative')

    @property
    def n_bins(self):
        return len(self.counts)

    @property
    def edges(self):
        return self.lo + self.bin_width * np.arange(self.n_bins + 1)

    @property
    def centers(self):
        return self.lo + self.bin_width * (np.arange(self.n_bins) + 0.5)

    @property
    def total(self):
        return int(self.counts.sum())

    def to_csv(self):
        bin_lo = self.lo + self.bin_width * np.arange(self.n_bins)
        return render_csv(HISTOGRAM_COLUMNS, zip(bin_lo, self.counts))

    @staticmethod
    def from_csv(text):
        rows = read_csv(text)
        if len(rows) < 2:
            raise ValueError('A histogram CSV needs at least two bins')

        missing = [column for column in HISTOGRAM_COLUMNS if column not in rows[0]]
        if missing:
            raise ValueError(f'Histogram CSV is missing column(s): {", ".join(missing)}')

        bin_lo = np.array([float(row['bin_lo_s']) for row in rows])
        counts = np.array([int(row['count']) for row in rows])
        bin_width = (bin_lo[-1] - bin_lo[0]) / (len(bin_lo) - 1)

        if not bin_width > 0 or not np.allclose(np.diff(bin_lo), bin_width, rtol=1e-6, atol=0.0):
            raise ValueError('Histogram bins must be evenly spaced and increasing')

        return Histogram(bin_width, bin_lo[0], bin_lo[0] + bin_width * len(bin_lo), counts)

@dataclass
class BeatFit:
    visibility_sq_half: float
    beat_freq: float
    mean_interval: float
    goodness: float
    visibility_sq_half_err: float = 0.0
    beat_freq_err: float = 0.0
    mean_interval_err: float = 0.0
    total: float = 0.0
    total_err: float = 0.0
    flag: str = FLAG_OK
    diagnostics: dict = field(default_factory=dict)

    @property
    def visibility(self):
        return math.sqrt(2.0 * self.visibility_sq_half)

    @property
    def freq_hz(self):
        return self.beat_freq / TWO_PI

    @property
    def freq_err_hz(self):
        return self.beat_freq_err / TWO_PI

    def to_report(self):
        return {
            'v_sq_half': self.visibility_sq_half,
            'v_sq_half_err': self.visibility_sq_half_err,
            'freq_hz': self.freq_hz,
            'freq_err_hz': self.freq_err_hz,
            'tau_s': self.mean_interval,
            'tau_err_s': self.mean_interval_err,
            'chi2_reduced': self.goodness,
            'flag': self.flag,
        }

def _bin_count(lo, hi, bin_width):
    exact = (hi - lo) / bin_width
    n_bins = int(round(exact))
    if n_bins < 1 or abs(exact - n_bins) > 1e-6 * max(1.0, exact):
        raise ValueError(f'Range [{lo}, {hi}) is not an integral number of {bin_width} s bins')
    return n_bins

def _normalization(v_sq_half, beat_freq, mean_interval):
    return mean_interval * (1.0 + v_sq_half / (1.0 + (beat_freq * mean_interval) ** 2))

def _antiderivative(t, v_sq_half, beat_freq, mean_interval):
    # Primitive of [1 + s cos(w t)] exp(-t / tau)
    decay = np.exp(-t / mean_interval)
    rate = 1.0 / mean_interval
    oscillation = (beat_freq * np.sin(beat_freq * t) - rate * np.cos(beat_freq * t)) / (rate ** 2 + beat_freq ** 2)
    return -mean_interval * decay + v_sq_half * decay * oscillation

def _density(dt, v_sq_half, beat_freq, mean_interval):
    norm = _normalization(v_sq_half, beat_freq, mean_interval)
    return (1.0 + v_sq_half * np.cos(beat_freq * dt)) * np.exp(-dt / mean_interval) / norm

def _bin_probability(lo_edges, hi_edges, v_sq_half, beat_freq, mean_interval):
    norm = _normalization(v_sq_half, beat_freq, mean_interval)
    upper = _antiderivative(hi_edges, v_sq_half, beat_freq, mean_interval)
    lower = _antiderivative(lo_edges, v_sq_half, beat_freq, mean_interval)
    return (upper - lower) / norm

def _as_result(value):
    if np.ndim(value) == 0:
        return float(value)
    return value

def interarrival_density(dt, V, beat_freq, mean_interval):
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ValueError('Inter-arrival times must be non-negative')
    return _as_result(_density(dt, 0.5 * V ** 2, beat_freq, mean_interval))

def interarrival_cdf(dt, V, beat_freq, mean_interval):
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ValueError('Inter-arrival times must be non-negative')

    s = 0.5 * V ** 2
    cdf = _bin_probability(np.zeros_like(dt), dt, s, beat_freq, mean_interval)
    return _as_result(np.clip(cdf, 0.0, 1.0))

def apply_dead_time(timestamps, dead_time):
    # Non-paralyzable: discarded events do not extend the dead window
    kept = []
    last = -math.inf
    for t in timestamps:
        if t - last >= dead_time:
            kept.append(t)
            last = t
    return np.array(kept, dtype=float)

def generate_stream(params):
    if params.duration <= 0:
        return np.empty(0, dtype=float)

    if not params.dead_time_valid:
        logger.warning('Dead time %.3g s is not small against the beat period; '
                       'the analytic inter-arrival density does not apply', params.dead_time)
    if not params.beat_regime_valid:
        logger.warning('Omega0 * tau = %.3g is below %.3g; generated inter-arrival times deviate from '
                       'the analytic density', abs(params.beat_freq) * params.mean_interval, BEAT_REGIME_LIMIT)

    rng = np.random.default_rng(params.seed)

    # The absolute beat phase at the start of the acquisition is unknown
    beat_phase = rng.uniform(0.0, TWO_PI)

    # Rate (1 + V cos) / tau has long-run mean 1 / tau; thin against its maximum
    peak_rate = (1.0 + params.visibility) / params.mean_interval
    n_candidates = rng.poisson(peak_rate * params.duration)
    candidates = np.sort(rng.uniform(0.0, params.duration, n_candidates))

    acceptance = (1.0 + params.visibility * np.cos(params.beat_freq * candidates + beat_phase)) / (1.0 + params.visibility)
    timestamps = candidates[rng.random(n_candidates) < acceptance]

    if len(timestamps) > 1:
        timestamps = timestamps[np.concatenate(([True], np.diff(timestamps) > 0))]

    if params.dead_time > 0:
        timestamps = apply_dead_time(timestamps, params.dead_time)

    logger.info('Generated %d coincidences over %.3g s', len(timestamps), params.duration)

    return timestamps

def generate_streams(params, seeds, num_workers=None):
    tasks = [partial(generate_stream, replace(params, seed=seed)) for seed in seeds]
    return fifo_task_processor(tasks, num_workers)

def stream_to_text(timestamps):
    return ''.join(f'{t:.12g}\n' for t in timestamps)

def binned_counts(params, bin_width, acquisition, lo=0.0, hi=None):
    """Expected coincidence pairs per inter-arrival bin after `acquisition` seconds."""

    if hi is None:
        hi = lo + bin_width * math.ceil(40.0 * params.mean_interval / bin_width)

    n_bins = _bin_count(lo, hi, bin_width)
    edges = lo + bin_width * np.arange(n_bins + 1)
    scale = acquisition / params.mean_interval

    if not params.dead_time_valid:
        logger.warning('Dead time %.3g s is not small against the beat period', params.dead_time)

    if abs(params.beat_freq) * bin_width < SMALL_BIN_LIMIT:
        centers = 0.5 * (edges[:-1] + edges[1:])
        density = _density(centers, params.v_sq_half, params.beat_freq, params.mean_interval)
        return BinnedCounts(edges, scale * bin_width * density, approximate=True)

    logger.warning('Bin width x beat frequency = %.3g is not small; using the exact bin integral',
                   abs(params.beat_freq) * bin_width)
    probability = _bin_probability(edges[:-1], edges[1:], params.v_sq_half, params.beat_freq, params.mean_interval)
    return BinnedCounts(edges, scale * probability, approximate=False)

def beat_forward_model(params, bin_width, lo, hi, acquisition, seed):
    expected = binned_counts(params, bin_width, acquisition, lo, hi).expected
    rng = np.random.default_rng(seed)
    return Histogram(bin_width, lo, hi, rng.poisson(expected))

def histogram_interarrivals(timestamps, bin_width, lo, hi):
    timestamps = np.asarray(timestamps, dtype=float)
    n_bins = _bin_count(lo, hi, bin_width)

    if len(timestamps) < 2:
        return Histogram(bin_width, lo, hi, np.zeros(n_bins, dtype=np.int64))

    differences = np.diff(timestamps)
    if np.any(differences <= 0):
        raise ValueError('Timestamps must be strictly increasing')

    index = np.floor((differences - lo) / bin_width).astype(np.int64)
    inside = (differences >= lo) & (differences < hi) & (index >= 0) & (index < n_bins)

    counts = np.bincount(index[inside], minlength=n_bins)
    dropped = int(len(differences) - inside.sum())

    return Histogram(bin_width, lo, hi, counts, dropped=dropped)

def _envelope_estimate(centers, counts):
    # Coarse bins average the beat out and leave the exponential envelope
    group = max(1, len(counts) // ENVELOPE_BINS)
    n_groups = len(counts) // group

    coarse_counts = counts[:n_groups * group].reshape(n_groups, group).sum(axis=1)
    coarse_t = centers[:n_groups * group].reshape(n_groups, group).mean(axis=1)

    positive = coarse_counts > 0
    if positive.sum() < 2:
        raise FitError('Not enough populated bins to estimate the envelope', {'populated': int(positive.sum())})

    slope, intercept = np.polyfit(coarse_t[positive], np.log(coarse_counts[positive]), 1,
                                  w=np.sqrt(coarse_counts[positive]))
    if slope >= 0:
        raise FitError('Histogram shows no exponential decay', {'slope': float(slope)})

    return -1.0 / slope, np.exp(intercept + slope * centers) / group

def _periodogram_peak(counts, envelope, bin_width):
    residual = (counts - envelope) / np.sqrt(np.maximum(envelope, 1.0))
    n = len(residual)
    span = n * bin_width

    # Zero padding interpolates the spectrum so the peak is located well inside a bin
    n_fft = 1 << int(math.ceil(math.log2(4 * n)))
    spectrum = np.fft.rfft(residual, n=n_fft)
    freqs = np.fft.rfftfreq(n_fft, d=bin_width)
    power = np.abs(spectrum) ** 2 / n

    band = freqs >= 3.0 / span
    if band.sum() < 3:
        return None, 0.0

    band_indices = np.flatnonzero(band)
    peak = band_indices[np.argmax(power[band])]

    # The median of an exponential variable is ln 2 times its mean
    noise = np.median(power[band]) / math.log(2.0)
    significance = power[peak] / noise
    threshold = math.log(max(n / 2.0, 1.0) / FALSE_ALARM)

    if significance < threshold:
        logger.info('Periodogram peak %.3g x noise is below the %.3g detection threshold', significance, threshold)
        return None, significance

    freq = freqs[peak]
    if 0 < peak < len(power) - 1:
        y0, y1, y2 = np.log(power[peak - 1:peak + 2])
        curvature = y0 - 2.0 * y1 + y2
        if curvature < 0:
            freq += 0.5 * (y0 - y2) / curvature * (freqs[1] - freqs[0])

    return TWO_PI * freq, significance

def _deviance_residuals(observed, expected):
    expected = np.maximum(expected, 1e-300)
    deviance = 2.0 * np.maximum(expected - observed + special.xlogy(observed, observed / expected), 0.0)
    return np.sign(observed - expected) * np.sqrt(deviance)

def _run_fit(residuals, x0, lower, upper, names):
    x0 = np.clip(x0, lower, upper)
    result = optimize.least_squares(residuals, x0, bounds=(lower, upper), x_scale='jac',
                                    method='trf', max_nfev=MAX_FIT_EVALUATIONS)

    if result.status <= 0 or not np.all(np.isfinite(result.x)):
        raise FitError('Beat fit did not converge', {
            'status': result.status,
            'message': result.message,
            'nfev': result.nfev,
            'params': dict(zip(names, np.round(result.x, 12).tolist())),
        })

    jacobian = result.jac
    covariance = np.linalg.pinv(jacobian.T @ jacobian)
    errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None))

    dof = max(len(result.fun) - len(x0), 1)
    goodness = float(np.sum(result.fun ** 2) / dof)

    return result, errors, goodness

def fit_beats(hist, min_bins=50):
    """Fit the binned inter-arrival model to a histogram.

    Parameters are the expected total number of pairs, V^2/2, the beat frequency (rad/s)
    and the mean interval. The objective is the Poisson deviance (squared deviance
    residuals), standard errors come from the Gauss-Newton curvature at the minimum and
    the goodness is the deviance per degree of freedom.
    """

    counts = hist.counts.astype(float)
    centers = hist.centers
    edges = hist.edges
    t_b = hist.bin_width

    if np.count_nonzero(counts) < min_bins:
        raise ValueError(f'Fit needs at least {min_bins} non-empty bins, got {np.count_nonzero(counts)}')

    tau0, envelope = _envelope_estimate(centers, counts)
    total0 = float(np.sum(envelope)) / np.sum(_bin_probability(edges[:-1], edges[1:], 0.0, 0.0, tau0))
    omega0, significance = _periodogram_peak(counts, envelope, t_b)

    def model(total, v_sq_half, beat_freq, mean_interval, exact):
        if exact:
            return total * _bin_probability(edges[:-1], edges[1:], v_sq_half, beat_freq, mean_interval)
        return total * t_b * _density(centers, v_sq_half, beat_freq, mean_interval)

    if omega0 is None:
        def flat_residuals(x):
            return _deviance_residuals(counts, model(x[0], 0.0, 0.0, x[1], exact=False))

        result, errors, goodness = _run_fit(flat_residuals, np.array([total0, tau0]),
                                            np.array([1e-12, 1e-3 * tau0]), np.array([np.inf, np.inf]),
                                            ['total', 'tau'])
        return BeatFit(
            visibility_sq_half=0.0,
            beat_freq=0.0,
            mean_interval=float(result.x[1]),
            mean_interval_err=float(errors[1]),
            total=float(result.x[0]),
            total_err=float(errors[0]),
            goodness=goodness,
            flag=FLAG_NO_BEAT,
            diagnostics={'significance': float(significance)},
        )

    exact = omega0 * t_b >= SMALL_BIN_LIMIT
    nyquist = math.pi / t_b

    def residuals(x):
        return _deviance_residuals(counts, model(x[0], x[1], x[2], x[3], exact))

    x0 = np.array([total0, 0.25, omega0, tau0])
    lower = np.array([1e-12, 0.0, 0.5 * omega0, 1e-3 * tau0])
    upper = np.array([np.inf, 0.5, min(1.5 * omega0, nyquist), np.inf])

    result, errors, goodness = _run_fit(residuals, x0, lower, upper, ['total', 'v_sq_half', 'omega', 'tau'])
    total, v_sq_half, beat_freq, mean_interval = result.x

    logger.info('Beat fit: f = %.3f +- %.3f Hz, V^2/2 = %.4f, tau = %.4g s',
                beat_freq / TWO_PI, errors[2] / TWO_PI, v_sq_half, mean_interval)

    return BeatFit(
        visibility_sq_half=float(v_sq_half),
        visibility_sq_half_err=float(errors[1]),
        beat_freq=float(beat_freq),
        beat_freq_err=float(errors[2]),
        mean_interval=float(mean_interval),
        mean_interval_err=float(errors[3]),
        total=float(total),
        total_err=float(errors[0]),
        goodness=goodness,
        diagnostics={'significance': float(significance), 'exact_bins': bool(exact), 'nfev': int(result.nfev)},
    )
