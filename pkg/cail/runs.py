"""Run directory layout: ``config``, ``metrics.csv`` and ``ckpt_<step>`` files."""
import csv
import io
import logging
import os
import re

import numpy as np

from cail.nets import dump_checkpoint
from cail.nets import load_checkpoint
from cail.storage import RunStorage
from cail.utils import format_float
from cail.utils import runs_root

logger = logging.getLogger(__name__)

METRICS_FILE = 'metrics.csv'
CONFIG_FILE = 'config'
METRICS_COLUMNS = (
    'step',
    'eval_mean_return',
    'eval_std_return',
    'L_dis',
    'L_unsup',
    'L_csup',
    'critic_loss',
    'actor_loss',
    'alpha',
    'steps_per_second',
)
METRICS_HEADER = ','.join(METRICS_COLUMNS)

_CHECKPOINT_RE = re.compile(r'^ckpt_(\d+)$')


class CorruptMetricsFile(ValueError):
    pass


def _write_csv(header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def format_metrics(rows):
    return _write_csv(METRICS_COLUMNS, (
        [int(row['step'])] + [format_float(row.get(column)) for column in METRICS_COLUMNS[1:]]
        for row in rows
    ))


def parse_metrics(text):
    records = [record for record in csv.reader(io.StringIO(text)) if record]
    if not records or tuple(records[0]) != METRICS_COLUMNS:
        raise CorruptMetricsFile('Not a metrics file: unexpected header')
    rows = []
    for lineno, record in enumerate(records[1:], start=2):
        if len(record) != len(METRICS_COLUMNS):
            raise CorruptMetricsFile('Metrics line {} has {} fields'.format(lineno, len(record)))
        try:
            row = {'step': int(record[0])}
            for column, value in zip(METRICS_COLUMNS[1:], record[1:]):
                row[column] = float(value)
        except ValueError:
            raise CorruptMetricsFile('Metrics line {} is not numeric'.format(lineno))
        rows.append(row)
    return rows


def default_run_dir(config):
    return os.path.join(runs_root(), '{}-{}-s{}'.format(config.algo, config.env, config.seed))


class Run:
    """Artifacts of one training run, written through a RunStorage."""

    def __init__(self, path):
        self.path = path
        self.storage = RunStorage(location=os.path.abspath(path))

    @property
    def name(self):
        return os.path.basename(os.path.normpath(self.path))

    def write_config(self, config):
        self.storage.write_text(CONFIG_FILE, config.as_text())

    def read_config_text(self):
        return self.storage.read_text(CONFIG_FILE)

    def write_metrics(self, rows):
        self.storage.write_text(METRICS_FILE, format_metrics(rows))

    def read_metrics(self):
        return parse_metrics(self.storage.read_text(METRICS_FILE))

    def has_metrics(self):
        return self.storage.exists(METRICS_FILE)

    def save_checkpoint(self, nets, step):
        name = 'ckpt_%d' % step
        self.storage.write_bytes(name, dump_checkpoint(nets, step))
        logger.info('checkpoint saved run=%s step=%d', self.name, step)
        return name

    def checkpoints(self):
        if not self.storage.exists(''):
            return []
        _, files = self.storage.listdir('')
        found = []
        for name in files:
            match = _CHECKPOINT_RE.match(name)
            if match:
                found.append((int(match.group(1)), name))
        return sorted(found)

    def load_latest(self, nets):
        checkpoints = self.checkpoints()
        if not checkpoints:
            raise FileNotFoundError('No checkpoint in run directory %s' % self.path)
        step, name = checkpoints[-1]
        load_checkpoint(nets, self.storage.read_bytes(name))
        return step


CURVES_COLUMNS = ('run', 'step', 'eval_mean_return', 'eval_std_return')
SUMMARY_COLUMNS = ('step', 'num_runs', 'mean_return', 'std_return')


def merge_curves(runs):
    """Long-format learning curves: grouped by run in the given order, ascending step."""
    if not runs:
        raise ValueError('No runs to merge')
    rows = []
    for run in runs:
        for row in sorted(run.read_metrics(), key=lambda row: row['step']):
            rows.append([
                run.name,
                row['step'],
                format_float(row['eval_mean_return']),
                format_float(row['eval_std_return']),
            ])
    return _write_csv(CURVES_COLUMNS, rows)


def summarize_runs(runs):
    """Mean and population std of eval_mean_return across runs, at steps every run reached."""
    if not runs:
        raise ValueError('No runs to summarize')
    curves = [{row['step']: row['eval_mean_return'] for row in run.read_metrics()} for run in runs]
    common = set(curves[0])
    for curve in curves[1:]:
        common &= set(curve)
    rows = []
    for step in sorted(common):
        values = np.array([curve[step] for curve in curves])
        rows.append([step, len(values), format_float(values.mean()), format_float(values.std())])
    return _write_csv(SUMMARY_COLUMNS, rows)
