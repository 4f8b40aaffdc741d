"""
Replay buffer, expert demonstration files and the augmentation pipeline that
turns N agent states and N expert states into contrastive views.
"""
import io
import logging
import os
import struct
from collections import namedtuple
from dataclasses import dataclass
from dataclasses import field
from typing import List
from typing import Optional

import numpy as np

from cail.storage import storage_for_path

logger = logging.getLogger(__name__)

DEMO_MAGIC = b'CAILDEM1'
DEMO_VERSION = 1

AUGMENTATIONS = ('shift', 'crop', 'cutout', 'composite', 'none')
CUTOUT_SIZES = (8, 12, 16)


class DataError(Exception):
    pass


class StorageError(DataError):
    pass


class EmptyBufferError(DataError):
    pass


class BatchTooSmall(DataError):
    pass


class CorruptDemoFile(DataError):
    pass


@dataclass
class Transition:
    obs: np.ndarray
    action: float
    reward: float
    next_obs: np.ndarray
    done: int


TransitionBatch = namedtuple('TransitionBatch', ['obs', 'action', 'reward', 'next_obs', 'done', 'indices'])


class ReplayBuffer:
    """
    FIFO ring of transitions.

    Only the newest frame of ``next_obs`` is stored: the rest of it is ``obs``
    shifted by one frame, which ``push`` checks.
    """

    def __init__(self, obs_shape, capacity=100000):
        if capacity < 1:
            raise ValueError('capacity must be >= 1')
        self.obs_shape = tuple(obs_shape)
        self.capacity = capacity
        self.obs = np.empty((capacity,) + self.obs_shape, dtype=np.uint8)
        self.next_frame = np.empty((capacity,) + self.obs_shape[1:], dtype=np.uint8)
        self.action = np.empty((capacity,), dtype=np.float32)
        self.reward = np.empty((capacity,), dtype=np.float32)
        self.done = np.empty((capacity,), dtype=np.float32)
        self.idx = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, transition):
        obs = np.asarray(transition.obs)
        next_obs = np.asarray(transition.next_obs)
        if obs.shape != self.obs_shape or next_obs.shape != self.obs_shape:
            raise StorageError(
                'Transition shapes {} / {} do not match buffer shape {}'.format(
                    obs.shape, next_obs.shape, self.obs_shape)
            )
        if transition.done not in (0, 1):
            raise StorageError('done must be 0 or 1, got %r' % (transition.done,))
        if not np.array_equal(obs[1:], next_obs[:-1]):
            raise StorageError('next_obs is not obs shifted by one frame')
        self.obs[self.idx] = obs
        self.next_frame[self.idx] = next_obs[-1]
        self.action[self.idx] = transition.action
        self.reward[self.idx] = transition.reward
        self.done[self.idx] = transition.done
        self.idx = (self.idx + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _next_obs(self, indices):
        return np.concatenate([self.obs[indices, 1:], self.next_frame[indices, None]], axis=1)

    def sample(self, n, rng):
        """``n`` transitions uniformly with replacement."""
        if self.size == 0:
            raise EmptyBufferError('Cannot sample from an empty replay buffer')
        indices = rng.integers(0, self.size, size=n)
        return TransitionBatch(
            self.obs[indices],
            self.action[indices],
            self.reward[indices],
            self._next_obs(indices),
            self.done[indices],
            indices,
        )

    def __iter__(self):
        """Stored transitions, oldest first."""
        start = self.idx if self.size == self.capacity else 0
        for k in range(self.size):
            i = (start + k) % self.capacity
            yield Transition(
                self.obs[i].copy(),
                float(self.action[i]),
                float(self.reward[i]),
                self._next_obs(np.array([i]))[0],
                int(self.done[i]),
            )


@dataclass
class Trajectory:
    frames: np.ndarray
    actions: Optional[np.ndarray] = None

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.uint8)
        if self.frames.ndim != 3 or len(self.frames) == 0:
            raise ValueError('A trajectory needs a non-empty T x H x W frame array')
        if self.actions is not None:
            self.actions = np.ascontiguousarray(self.actions, dtype=np.float32).reshape(-1)
            if len(self.actions) != len(self.frames):
                raise ValueError('Got %d actions for %d frames' % (len(self.actions), len(self.frames)))

    def __len__(self):
        return len(self.frames)


@dataclass
class DemoSet:
    env_name: str
    trajectories: List[Trajectory] = field(default_factory=list)
    seed: Optional[int] = None

    def __post_init__(self):
        shapes = {t.frames.shape[1:] for t in self.trajectories}
        if len(shapes) > 1:
            raise ValueError('All demo frames must share one size, got %s' % sorted(shapes))

    @property
    def has_actions(self):
        return bool(self.trajectories) and all(t.actions is not None for t in self.trajectories)

    @property
    def num_states(self):
        return sum(len(t) for t in self.trajectories)

    def stacked_states(self, frame_stack):
        """
        Every demo state as a frame stack, built the way the environment
        builds observations: the first frame is replicated at episode start.
        """
        stacks = []
        for trajectory in self.trajectories:
            frames = trajectory.frames
            padded = np.concatenate([np.repeat(frames[:1], frame_stack - 1, axis=0), frames], axis=0)
            windows = np.stack([padded[k:k + len(frames)] for k in range(frame_stack)], axis=1)
            stacks.append(windows)
        return np.concatenate(stacks, axis=0)

    def stacked_actions(self):
        if not self.has_actions:
            return None
        return np.concatenate([t.actions for t in self.trajectories])


def dump_demos(demos):
    """Serialise a DemoSet to the little-endian ``CAILDEM1`` format."""
    out = io.BytesIO()
    name = demos.env_name.encode('utf-8')
    if len(name) > 255:
        raise ValueError('Env name too long for the demo format')
    out.write(DEMO_MAGIC)
    out.write(struct.pack('<I', DEMO_VERSION))
    out.write(struct.pack('<B', len(name)))
    out.write(name)
    out.write(struct.pack('<I', len(demos.trajectories)))
    for trajectory in demos.trajectories:
        t, h, w = trajectory.frames.shape
        has_actions = trajectory.actions is not None
        out.write(struct.pack('<IIIB', t, h, w, int(has_actions)))
        out.write(trajectory.frames.tobytes(order='C'))
        if has_actions:
            out.write(trajectory.actions.astype('<f4').tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, size):
        end = self.pos + size
        if end > len(self.data):
            raise CorruptDemoFile('Truncated demo file: wanted %d bytes at offset %d' % (size, self.pos))
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def parse_demos(data, seed=None):
    reader = _Reader(bytes(data))
    if reader.take(len(DEMO_MAGIC)) != DEMO_MAGIC:
        raise CorruptDemoFile('Bad magic: not a demo file')
    version, = reader.unpack('<I')
    if version != DEMO_VERSION:
        raise CorruptDemoFile('Unsupported demo file version %d' % version)
    name_length, = reader.unpack('<B')
    try:
        env_name = reader.take(name_length).decode('utf-8')
    except UnicodeDecodeError:
        raise CorruptDemoFile('Env name is not valid UTF-8')
    num_traj, = reader.unpack('<I')
    trajectories = []
    for _ in range(num_traj):
        t, h, w, has_actions = reader.unpack('<IIIB')
        if t == 0:
            raise CorruptDemoFile('Empty trajectory in demo file')
        frames = np.frombuffer(reader.take(t * h * w), dtype=np.uint8).reshape(t, h, w).copy()
        actions = None
        if has_actions:
            actions = np.frombuffer(reader.take(4 * t), dtype='<f4').astype(np.float32)
        trajectories.append(Trajectory(frames, actions))
    if reader.pos != len(reader.data):
        raise CorruptDemoFile('Trailing bytes after the last trajectory')
    try:
        return DemoSet(env_name, trajectories, seed)
    except ValueError as e:
        raise CorruptDemoFile(str(e))


def default_demo_path(env_name, seed, root='demos'):
    return os.path.join(root, env_name, '%d.demo' % seed)


def save_demos(demos, path):
    storage, name = storage_for_path(path)
    storage.write_bytes(name, dump_demos(demos))
    logger.info('demos saved path=%s num_traj=%d', path, len(demos.trajectories))
    return path


def load_demos(path):
    storage, name = storage_for_path(path)
    stem = os.path.splitext(name)[0]
    seed = int(stem) if stem.isdigit() else None
    return parse_demos(storage.read_bytes(name), seed=seed)


def _crop_window(padded, pad, offset, rng):
    if offset is None:
        offset = rng.integers(0, 2 * pad + 1, size=2)
    dy, dx = (int(v) for v in offset)
    height, width = padded.shape[-2] - 2 * pad, padded.shape[-1] - 2 * pad
    return padded[:, dy:dy + height, dx:dx + width]


def random_shift(obs, rng, pad=4, offset=None):
    """Replicate-pad every frame, then crop one window shared by the stack."""
    padded = np.pad(obs, ((0, 0), (pad, pad), (pad, pad)), mode='edge')
    return np.ascontiguousarray(_crop_window(padded, pad, offset, rng))


def random_crop(obs, rng, pad=4, offset=None):
    """As ``random_shift`` with zero padding."""
    padded = np.pad(obs, ((0, 0), (pad, pad), (pad, pad)), mode='constant', constant_values=0)
    return np.ascontiguousarray(_crop_window(padded, pad, offset, rng))


def random_cutout(obs, rng, sizes=CUTOUT_SIZES, box=None):
    """Zero one square, fully inside the frame, at the same place in every frame."""
    if box is None:
        side = int(sizes[rng.integers(0, len(sizes))])
        top = int(rng.integers(0, obs.shape[-2] - side + 1))
        left = int(rng.integers(0, obs.shape[-1] - side + 1))
    else:
        top, left, side = box
    out = obs.copy()
    out[:, top:top + side, left:left + side] = 0
    return out


def augment(obs, mode, rng):
    if mode == 'shift':
        return random_shift(obs, rng)
    if mode == 'crop':
        return random_crop(obs, rng)
    if mode == 'cutout':
        return random_cutout(obs, rng)
    if mode == 'composite':
        return random_cutout(random_shift(obs, rng), rng)
    if mode == 'none':
        return obs.copy()
    raise ValueError('Unknown augmentation mode %r' % (mode,))


@dataclass
class ViewBatch:
    """
    ``agent_views[2i]`` and ``agent_views[2i + 1]`` are the two views of agent
    state ``i``; ``expert_views[i]`` is the single view of expert state ``i``.
    """
    agent_views: np.ndarray
    expert_views: np.ndarray

    @property
    def n(self):
        return len(self.expert_views)

    @property
    def pairs(self):
        return np.arange(len(self.agent_views)) ^ 1


def make_views(agent_states, expert_states, mode, rng):
    n = len(agent_states)
    if n != len(expert_states):
        raise ValueError('Got %d agent states for %d expert states' % (n, len(expert_states)))
    if n < 2:
        raise BatchTooSmall('Contrastive batches need N >= 2, got %d' % n)
    agent_views = []
    for state in agent_states:
        agent_views.append(augment(state, mode, rng))
        agent_views.append(augment(state, mode, rng))
    expert_views = [augment(state, mode, rng) for state in expert_states]
    return ViewBatch(np.stack(agent_views), np.stack(expert_views))
