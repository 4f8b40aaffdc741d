import logging
from collections import deque

import gymnasium as gym
import numpy as np
from django.core.exceptions import ImproperlyConfigured

from cail.base import Configurable
from cail.utils import setting

logger = logging.getLogger(__name__)


class EnvError(Exception):
    pass


class IntegrationFault(EnvError):
    pass


def clip_action(action):
    return float(np.clip(float(np.asarray(action).reshape(-1)[0]), -1.0, 1.0))


class PixelEnv(Configurable, gym.Env):
    """
    Deterministic control task observed through stacked 8-bit frames.

    The environment owns the current physical state and the frame stack.
    ``step`` advances ``action_repeat`` explicit Euler steps and appends one
    rendered frame. The reward it reports is ``eval_reward``, a metric only;
    nothing trains on it. ``info['state']`` carries the physical state.
    """
    metadata = {'render_modes': ['grayscale']}
    render_mode = 'grayscale'
    name = None
    state_class = None

    def __init__(self, **settings):
        super().__init__(**settings)
        if self.action_repeat < 1:
            raise ImproperlyConfigured('action_repeat must be >= 1')
        if self.max_agent_steps < 1:
            raise ImproperlyConfigured('max_agent_steps must be >= 1')
        self.observation_space = gym.spaces.Box(0, 255, shape=self.observation_shape, dtype=np.uint8)
        self.action_space = gym.spaces.Box(-1.0, 1.0, shape=(1,), dtype=np.float32)
        self.state = None
        self._frames = deque(maxlen=self.frame_stack)
        self._steps = 0
        self._finished = True

    def get_default_settings(self):
        return {
            'frame_stack': setting('CAIL_FRAME_STACK', 3),
            'image_size': 64,
            'action_repeat': setting('CAIL_ACTION_REPEAT', 2),
            'max_agent_steps': setting('CAIL_MAX_AGENT_STEPS', 200),
            'init_noise': 0.05,
        }

    @property
    def observation_shape(self):
        return (self.frame_stack, self.image_size, self.image_size)

    def initial_state(self, eta):
        raise NotImplementedError

    def dynamics(self, state, u):
        """One inner Euler step under the already clipped command ``u``."""
        raise NotImplementedError

    def is_terminal(self, state):
        return False

    def render_state(self, state):
        raise NotImplementedError

    def render(self, state=None):
        """Frame of ``state``, or of the current state when omitted."""
        return self.render_state(self.state if state is None else state)

    def scripted_expert(self, state):
        raise NotImplementedError

    def eval_reward(self, state):
        raise NotImplementedError

    def observation(self):
        return np.stack(self._frames, axis=0)

    def reset(self, *, seed=None, options=None):
        """
        Start an episode at the upright-or-hanging start plus uniform noise of
        width ``init_noise``, drawn from ``np_random`` seeded by ``seed``.
        ``options={'state': s}`` starts from ``s`` instead.
        """
        super().reset(seed=seed)
        if options and 'state' in options:
            state = options['state']
        else:
            eta = float(self.np_random.uniform(-self.init_noise, self.init_noise))
            state = self.initial_state(eta)
        self.state = state
        self._steps = 0
        self._finished = False
        frame = self.render(state)
        self._frames.clear()
        for _ in range(self.frame_stack):
            self._frames.append(frame)
        return self.observation(), {'state': state}

    def reset_to(self, state):
        return self.reset(options={'state': state})

    def step(self, action):
        if self._finished:
            raise EnvError('step() called on a finished episode; call reset() first')
        u = clip_action(action)
        state = self.state
        for _ in range(self.action_repeat):
            state = self.dynamics(state, u)
            if not state.is_finite():
                logger.error('env=%s non-finite state after step=%d: %r', self.name, self._steps, state)
                raise IntegrationFault('Non-finite state {!r}'.format(state))
        self.state = state
        self._steps += 1
        self._frames.append(self.render(state))
        terminated = self.is_terminal(state)
        truncated = not terminated and self._steps >= self.max_agent_steps
        self._finished = terminated or truncated
        return self.observation(), self.eval_reward(state), terminated, truncated, {'state': state}
