import shutil
import tempfile

import numpy as np

from cail.data import Transition


class TempDirMixin:
    """Gives each test a scratch directory, removed afterwards."""

    def setUp(self):
        super().setUp()
        self.tmpdir = tempfile.mkdtemp(prefix='cail-test-')
        self.addCleanup(shutil.rmtree, self.tmpdir, ignore_errors=True)


def frame_stack(ident, shape=(3, 8, 8)):
    """A frame stack whose every pixel encodes ``ident``."""
    return np.full(shape, ident % 256, dtype=np.uint8)


def chained_transition(ident, shape=(3, 8, 8), done=0):
    """Transition whose next_obs is obs shifted by one frame."""
    obs = frame_stack(ident, shape)
    next_obs = np.concatenate([obs[1:], np.full((1,) + shape[1:], (ident + 1) % 256, dtype=np.uint8)])
    return Transition(obs, float(ident) / 10.0, 0.0, next_obs, done)


TINY_TRAIN = {
    'total_steps': 24,
    'warmup': 8,
    'batch_size': 4,
    'eval_every': 12,
    'eval_episodes': 1,
    'buffer_capacity': 64,
    'bc_epochs': 2,
    'bc_batch_size': 32,
    'bc_eval_every': 1,
}
