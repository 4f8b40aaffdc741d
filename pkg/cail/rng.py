"""Named, independent random streams derived from one run seed."""

import numpy as np

# Index of each stream in the seed sequence's spawn key. Appending new names is
# fine; reordering changes every seeded result.
STREAMS = (
    'env-init',
    'replay-sample',
    'augment',
    'action-noise',
    'net-init',
    'eval',
)


class RandomStreams:
    """
    One ``numpy.random.Generator`` per named stream.

    Streams never share state, so drawing more numbers from one (for example
    running an extra evaluation) never shifts another.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._generators = {}

    def _seed_sequence(self, name, *extra):
        try:
            index = STREAMS.index(name)
        except ValueError:
            raise KeyError('Unknown random stream: %s' % name)
        return np.random.SeedSequence(self.seed, spawn_key=(index,) + tuple(extra))

    def __getitem__(self, name):
        generator = self._generators.get(name)
        if generator is None:
            generator = np.random.default_rng(self._seed_sequence(name))
            self._generators[name] = generator
        return generator

    def fresh(self, name, *extra):
        """A new generator for ``name``, independent of the shared one."""
        return np.random.default_rng(self._seed_sequence(name, 1, *extra))

    def draw_seed(self, name):
        """A 32-bit seed drawn from ``name``, for components seeded by int."""
        return int(self[name].integers(0, 2 ** 31 - 1))
