import base64
import concurrent.futures
import csv
import hashlib
import io
import json
import os
from pathlib import Path
import queue
import tempfile

import numpy as np

CONFIG_PATH = Path(__file__).resolve().parent / 'config.json'

def compute_hash(s):
    # Hash a string using SHA-1 and return the base64 encoded result

    m = hashlib.sha1()
    m.update(s.encode())

    b = m.digest()

    return base64.b64encode(b).decode('ascii')

def write_atomic(path, text):
    if isinstance(path, str):
        path = Path(path)

    path.parent.mkdir(parents=True, exist_ok=True)

    # The temporary file must live on the same filesystem for os.replace to be atomic
    fd, tmp_path = tempfile.mkstemp(dir=str(path.parent), prefix='.' + path.name + '.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise

def render_csv(header, rows, schema_version=None):
    if schema_version is None:
        schema_version = shared_config('schemaVersion', 1)

    buffer = io.StringIO()
    buffer.write(f'# schema_version={schema_version}\n')

    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(value) for value in row])

    return buffer.getvalue()

def read_csv(text):
    lines = [line for line in text.splitlines() if line.strip() and not line.startswith('#')]
    reader = csv.DictReader(lines)
    return list(reader)

def render_json(report, schema_version=None):
    if schema_version is None:
        schema_version = shared_config('schemaVersion', 1)

    report = dict(report)
    report['schema_version'] = schema_version

    return json.dumps(to_serializable(report), indent=2, sort_keys=True) + '\n'

def format_value(value):
    # Shortest round-tripping form
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)

def to_serializable(output):
    # numpy scalars and arrays are not JSON-serializable, so we convert them manually
    if isinstance(output, np.ndarray):
        return [to_serializable(x) for x in output.tolist()]
    elif isinstance(output, np.bool_):
        return bool(output)
    elif isinstance(output, np.integer):
        return int(output)
    elif isinstance(output, np.floating):
        return float(output)
    elif isinstance(output, (list, tuple)):
        return [to_serializable(x) for x in output]
    elif isinstance(output, dict):
        return {str(key): to_serializable(value) for key, value in output.items()}
    return output

SHARED_CONFIG = None

def shared_config(key, fallback='no_fallback'):
    global SHARED_CONFIG

    if SHARED_CONFIG is None:
        if CONFIG_PATH.exists():
            with open(CONFIG_PATH) as f:
                SHARED_CONFIG = json.load(f)['shared']
        else:
            SHARED_CONFIG = {}

    if key == 'numWorkers' and os.environ.get('FRANSON_NUM_WORKERS'):
        return int(os.environ['FRANSON_NUM_WORKERS'])

    if fallback == 'no_fallback':
        return SHARED_CONFIG[key]
    else:
        return SHARED_CONFIG.get(key, fallback)

def spawn_seeds(seed, count):
    # Child seeds depend only on (seed, index), never on how the batches are scheduled
    sequence = np.random.SeedSequence(seed)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in sequence.spawn(count)]

def worker(worker_id, task_queue, result_list):
    while not task_queue.empty():
        try:
            index, task = task_queue.get_nowait()
            result_list[index] = task()  # Store the result at the original index
            task_queue.task_done()
        except queue.Empty:
            break

def fifo_task_processor(task_list, num_workers=None):
    if num_workers is None:
        num_workers = shared_config('numWorkers', 4)

    # Create a queue and add tasks with their indices to it
    task_queue = queue.Queue()
    result_list = [None] * len(task_list)  # Placeholder for results in original order

    if len(task_list) == 0:
        return result_list

    for index, task in enumerate(task_list):
        task_queue.put((index, task))

    num_workers = max(1, min(num_workers, len(task_list)))

    with concurrent.futures.ThreadPoolExecutor(max_workers=num_workers) as executor:
        futures = [executor.submit(worker, i, task_queue, result_list) for i in range(num_workers)]

        # Surface the first worker exception, if any
        for future in concurrent.futures.as_completed(futures):
            future.result()

    return result_list
