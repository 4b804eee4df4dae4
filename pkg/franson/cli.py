import sys
sys.path.append('.')

from dataclasses import asdict
import logging
import math
import os

import click
import dotenv
import numpy as np

from franson import aom, beats, core, eraser, qkd, relativity
from franson.common import (
    SPEED_OF_LIGHT, TWO_PI, BasisStrategy, ConfigError, NumericalError, Scheme, WaveOrientation
)
from utils import compute_hash, render_csv, render_json, shared_config, write_atomic

logger = logging.getLogger(__name__)

REQUIRED = object()

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

# (key, type, default) in declaration order; REQUIRED keys have no default
PARAMETER_SCHEMAS = {
    'fringe-scan': [(key, float, REQUIRED) for key in core.MODEL_KEYS] + [
        ('accidental_rate', float, 0.0),
        ('phase_points', int, 32),
        ('integration_time', float, 1.0),
    ],
    'beat-histogram': [
        ('mean_interval', float, REQUIRED),
        ('visibility', float, REQUIRED),
        ('beat_freq_hz', float, REQUIRED),
        ('duration', float, REQUIRED),
        ('bin_width', float, REQUIRED),
        ('hist_hi', float, REQUIRED),
        ('hist_lo', float, 0.0),
        ('dead_time', float, 0.0),
    ],
    'beat-fit': [
        ('min_bins', int, 50),
    ],
    'eraser-table': [
        ('omega_dt_min', float, 1e-3),
        ('omega_dt_max', float, 1e3),
        ('points', int, 61),
    ],
    'aom-calc': [
        ('acoustic_freq_hz', float, REQUIRED),
        ('sound_speed', float, REQUIRED),
        ('wavelength_light', float, REQUIRED),
        ('refractive_index', float, REQUIRED),
        ('interaction_length', float, REQUIRED),
        ('figure_of_merit', float, REQUIRED),
        ('acoustic_power', float, REQUIRED),
        ('young_modulus', float, None),
        ('poisson_ratio', float, None),
        ('density', float, None),
        ('v_synch_fraction', float, None),
        ('cable_delta', float, 0.0),
        ('photon_bandwidth_hz', float, None),
    ],
    'relativity-scan': [
        ('frame_speed', float, REQUIRED),
        ('separation', float, REQUIRED),
        ('sigma', float, relativity.DEFAULT_SIGMA),
        ('v0', float, 1.0),
        ('x_max', float, 2e-3),
        ('x_step', float, 0.11e-3),
    ],
    'timing-check': [
        ('frame_speed', float, REQUIRED),
        ('separation', float, REQUIRED),
        ('lab_time_diff', float, REQUIRED),
        ('wave_orientation', WaveOrientation, WaveOrientation.OPPOSED),
    ],
    'qkd-sim': [
        ('omega_hz', float, 4e8),
        ('delta_t_disclosure', float, 1e-9),
        ('basis_strategy', BasisStrategy, BasisStrategy.RANDOM),
        ('visibility', float, 1.0),
        ('path_delay', float, qkd.DEFAULT_PATH_DELAY),
    ],
}

def load_parameters(config_path, command):
    """Parse a flat KEY=value parameter file against the schema of `command`.

    Returns the parameters and the hash of the file text. Unknown keys are rejected and
    the first missing required key (in declaration order) is named in the error.
    """

    schema = PARAMETER_SCHEMAS[command]

    if config_path is None:
        text = ''
        raw = {}
    else:
        with open(config_path) as f:
            text = f.read()
        raw = dotenv.dotenv_values(config_path, interpolate=False)

    known = [key for key, _, _ in schema]
    unknown = [key for key in raw if key not in known]
    if unknown:
        raise ConfigError(f'Unknown parameter(s) for {command}: {", ".join(unknown)}')

    params = {}
    for key, kind, default in schema:
        if key not in raw or raw[key] is None or raw[key].strip() == '':
            if default is REQUIRED:
                raise ConfigError(f'Missing required parameter: {key}')
            params[key] = default
            continue

        try:
            params[key] = kind(raw[key].strip())
        except ValueError:
            raise ConfigError(f'Invalid value for {key}: {raw[key]!r}')

    return params, compute_hash(text)

def emit(text, out):
    if out == '-':
        click.echo(text, nl=False)
    else:
        write_atomic(out, text)
        logger.info('Wrote %s', out)

def with_config_hash(report, config_hash):
    report = dict(report)
    report['config_hash'] = config_hash
    return report

def common_options(func):
    func = click.option('--format', '-f', 'output_format', type=click.Choice(['csv', 'json']), default=None,
                        help='Output format (each subcommand has its own default).')(func)
    func = click.option('--out', '-o', default='-', show_default=True,
                        help='Output path, - for stdout.')(func)
    func = click.option('--seed', '-s', type=int, default=lambda: shared_config('defaultSeed', 42),
                        help='Random seed.')(func)
    func = click.option('--config', '-c', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None,
                        help='KEY=value parameter file.')(func)
    return func

@click.group()
def main():
    """Frequency-shifted Franson interferometry toolkit."""

    level = os.environ.get('FRANSON_LOG_LEVEL', 'INFO').upper()
    logging.basicConfig(level=level, format='%(asctime)s [%(levelname)s] - %(message)s')

@main.command('fringe-scan')
@common_options
def fringe_scan_command(config_path, seed, out, output_format):
    """Simulate a two-photon fringe scan over one period of the phase."""

    params, config_hash = load_parameters(config_path, 'fringe-scan')

    model = core.load_model(params)
    chi = core.visibility_factor(model.arm_a.delta_l, model.arm_b.delta_l,
                                 model.source.pump_bandwidth, model.source.photon_bandwidth)
    phases = np.linspace(0.0, TWO_PI, params['phase_points'], endpoint=False)
    scan = core.fringe_scan(model, chi, phases, params['integration_time'], seed)

    if (output_format or 'csv') == 'csv':
        emit(core.fringe_scan_to_csv(scan), out)
        return

    report = {
        'chi': chi,
        'global_phase': model.global_phase,
        'omega_sum_hz': model.omega_sum / TWO_PI,
        'points': [asdict(point) for point in scan],
        'seed': seed,
    }
    if len(scan) >= 8:
        visibility = core.visibility_from_counts(scan)
        report['visibility'] = asdict(visibility)
        if not visibility.degenerate:
            report['bell'] = asdict(core.bell_violation(visibility.noise_subtracted_visibility,
                                                        visibility.noise_subtracted_error))

    emit(render_json(with_config_hash(report, config_hash)), out)

@main.command('beat-histogram')
@click.option('--stream', 'stream_path', type=click.Path(dir_okay=False), default=None,
              help='Also write the coincidence timestamps, one per line.')
@common_options
def beat_histogram_command(stream_path, config_path, seed, out, output_format):
    """Generate a coincidence stream and histogram the times between successive events."""

    params, config_hash = load_parameters(config_path, 'beat-histogram')

    process = beats.ProcessParams(
        mean_interval=params['mean_interval'],
        visibility=params['visibility'],
        beat_freq=TWO_PI * params['beat_freq_hz'],
        dead_time=params['dead_time'],
        duration=params['duration'],
        seed=seed,
    )
    stream = beats.generate_stream(process)

    if stream_path is not None:
        write_atomic(stream_path, beats.stream_to_text(stream))

    hist = beats.histogram_interarrivals(stream, params['bin_width'], params['hist_lo'], params['hist_hi'])

    if (output_format or 'csv') == 'csv':
        emit(hist.to_csv(), out)
        return

    report = {
        'events': len(stream),
        'dropped': hist.dropped,
        'bin_width': hist.bin_width,
        'lo': hist.lo,
        'hi': hist.hi,
        'counts': hist.counts,
        'seed': seed,
    }
    emit(render_json(with_config_hash(report, config_hash)), out)

@main.command('beat-fit')
@click.option('--histogram', 'histogram_path', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Histogram CSV written by beat-histogram.')
@common_options
def beat_fit_command(histogram_path, config_path, seed, out, output_format):
    """Fit beat frequency, V^2/2 and mean interval to an inter-arrival histogram."""

    params, config_hash = load_parameters(config_path, 'beat-fit')

    with open(histogram_path) as f:
        hist = beats.Histogram.from_csv(f.read())

    fit = beats.fit_beats(hist, min_bins=params['min_bins'])
    report = fit.to_report()

    if (output_format or 'json') == 'csv':
        header = ['v_sq_half', 'freq_hz', 'freq_err_hz', 'tau_s', 'chi2_reduced', 'flag']
        emit(render_csv(header, [[report[key] for key in header]]), out)
        return

    emit(render_json(with_config_hash(report, config_hash)), out)

@main.command('eraser-table')
@common_options
def eraser_table_command(config_path, seed, out, output_format):
    """Tabulate visibility and which-path knowledge against the time resolution."""

    params, config_hash = load_parameters(config_path, 'eraser-table')

    if not 0 < params['omega_dt_min'] < params['omega_dt_max']:
        raise ValueError('The grid needs 0 < omega_dt_min < omega_dt_max')

    grid = np.geomspace(params['omega_dt_min'], params['omega_dt_max'], params['points'])
    rows = eraser.tradeoff_table(grid)

    if (output_format or 'csv') == 'csv':
        emit(eraser.tradeoff_table_to_csv(rows), out)
        return

    report = {
        'rows': [dict(zip(['omega_dt', 'V', 'K', 'V2_plus_K2'], row)) for row in rows],
        'duality_satisfied': all(eraser.duality_check(row[1], row[2]).satisfied for row in rows),
    }
    emit(render_json(with_config_hash(report, config_hash)), out)

@main.command('aom-calc')
@common_options
def aom_calc_command(config_path, seed, out, output_format):
    """Derive Bragg geometry, Doppler shift and synchronization phase of an AOM."""

    params, config_hash = load_parameters(config_path, 'aom-calc')

    spec = aom.AomSpec(
        acoustic_freq=params['acoustic_freq_hz'],
        sound_speed=params['sound_speed'],
        wavelength_light=params['wavelength_light'],
        refractive_index=params['refractive_index'],
        interaction_length=params['interaction_length'],
        figure_of_merit=params['figure_of_merit'],
        acoustic_power=params['acoustic_power'],
    )

    elastic = [params['young_modulus'], params['poisson_ratio'], params['density']]
    material = None
    if all(value is not None for value in elastic):
        material = aom.ElasticMaterial(*elastic)
    elif any(value is not None for value in elastic):
        raise ConfigError('young_modulus, poisson_ratio and density must be given together')

    v_synch = None
    if params['v_synch_fraction'] is not None:
        v_synch = params['v_synch_fraction'] * SPEED_OF_LIGHT

    photon_bandwidth = None
    if params['photon_bandwidth_hz'] is not None:
        photon_bandwidth = TWO_PI * params['photon_bandwidth_hz']

    report = aom.aom_report(spec, material, v_synch, params['cable_delta'], photon_bandwidth)

    if (output_format or 'json') == 'csv':
        emit(render_csv(['quantity', 'value'], sorted(report.items())), out)
        return

    emit(render_json(with_config_hash(report, config_hash)), out)

@main.command('relativity-scan')
@common_options
def relativity_scan_command(config_path, seed, out, output_format):
    """Predict visibility against path offset for quantum mechanics and Multisimultaneity."""

    params, config_hash = load_parameters(config_path, 'relativity-scan')

    _, window = relativity.max_time_discrepancy(params['frame_speed'], params['separation'])

    if not params['x_step'] > 0:
        raise ValueError(f'x_step must be positive, got {params["x_step"]}')
    n_steps = int(math.floor(params['x_max'] / params['x_step']))
    offsets = params['x_step'] * np.arange(-n_steps, n_steps + 1)

    curve = relativity.predict_curves(offsets, window, params['sigma'], params['v0'])

    if (output_format or 'csv') == 'csv':
        emit(curve.to_csv(), out)
        return

    report = {
        'window_m': window,
        'sigma_m': params['sigma'],
        'v0': params['v0'],
        'half_depth_width_m': relativity.half_depth_width(curve),
        'x_m': curve.path_offsets,
        'v_multisim': curve.multisim_visibility,
    }
    emit(render_json(with_config_hash(report, config_hash)), out)

@main.command('timing-check')
@common_options
def timing_check_command(config_path, seed, out, output_format):
    """Classify the time ordering of the two detections in the acoustic-wave frames."""

    params, config_hash = load_parameters(config_path, 'timing-check')

    config = relativity.TimingConfig(
        frame_speed=params['frame_speed'],
        separation=params['separation'],
        lab_time_diff=params['lab_time_diff'],
        wave_orientation=params['wave_orientation'],
    )
    result = relativity.classify_timing(config)
    _, window = relativity.max_time_discrepancy(config.frame_speed, config.separation)

    report = {
        'ordering': result.ordering.value,
        'margin_s': result.margin,
        'max_discrepancy_s': result.max_discrepancy,
        'window_m': window,
        'spacelike_window_s': relativity.spacelike_window(config.separation),
    }

    if (output_format or 'json') == 'csv':
        header = ['ordering', 'margin_s', 'max_discrepancy_s', 'window_m', 'spacelike_window_s']
        emit(render_csv(header, [[report[key] for key in header]]), out)
        return

    emit(render_json(with_config_hash(report, config_hash)), out)

@main.command('qkd-sim')
@click.option('--scheme', type=click.Choice([scheme.value for scheme in Scheme]), default=Scheme.PHASE.value,
              show_default=True)
@click.option('--rounds', '-n', type=click.IntRange(min=1), default=10000, show_default=True)
@click.option('--trace', 'trace_path', type=click.Path(dir_okay=False), default=None,
              help='Also write the per-round trace as CSV.')
@common_options
def qkd_sim_command(scheme, rounds, trace_path, config_path, seed, out, output_format):
    """Simulate the raw key exchange of one coding scheme."""

    params, config_hash = load_parameters(config_path, 'qkd-sim')

    report = qkd.run_protocol(
        n_rounds=rounds,
        scheme=scheme,
        basis_strategy=params['basis_strategy'],
        omega=TWO_PI * params['omega_hz'],
        delta_t_disclosure=params['delta_t_disclosure'],
        seed=seed,
        visibility=params['visibility'],
        path_delay=params['path_delay'],
        trace=trace_path is not None,
    )

    if trace_path is not None:
        write_atomic(trace_path, report.trace_to_csv())

    if (output_format or 'json') == 'csv':
        header = ['rounds', 'sifted', 'qber', 'eve_information']
        summary = report.to_report()
        emit(render_csv(header, [[summary[key] for key in header]]), out)
        return

    summary = report.to_report()
    summary.update({'scheme': scheme, 'seed': seed})
    emit(render_json(with_config_hash(summary, config_hash)), out)

def dispatch(argv=None):
    """Run the command line and return its exit code instead of exiting."""

    dotenv.load_dotenv()

    try:
        main.main(args=argv, prog_name='franson', standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return EXIT_INPUT_ERROR
    except NumericalError as e:
        logger.error('Numerical failure: %s', e)
        click.echo(f'Error: {e}', err=True)
        return EXIT_NUMERICAL_ERROR
    except ValueError as e:
        logger.error('Invalid input: %s', e)
        click.echo(f'Error: {e}', err=True)
        return EXIT_INPUT_ERROR

    return EXIT_OK

if __name__ == '__main__':
    sys.exit(dispatch())
