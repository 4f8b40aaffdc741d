import math
from dataclasses import astuple
from dataclasses import dataclass

import numpy as np

from cail import raster
from cail.envs.base import PixelEnv


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    wrapped = math.remainder(theta, 2 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2 * math.pi
    return wrapped


@dataclass(frozen=True)
class PendulumState:
    theta: float
    theta_dot: float

    def is_finite(self):
        return all(math.isfinite(v) for v in astuple(self))


class PixelPendulum(PixelEnv):
    """
    Swing-up pendulum. ``theta = 0`` is upright, positive angles swing the
    tip towards the right of the frame.
    """
    name = 'pendulum'
    state_class = PendulumState

    def get_default_settings(self):
        defaults = super().get_default_settings()
        defaults.update({
            'dt': 0.05,
            'gravity': 10.0,
            'mass': 1.0,
            'length': 1.0,
            'max_torque': 2.0,
            'max_speed': 8.0,
            # scripted expert gains
            'kp': 8.0,
            'kd': 2.0,
            'ke': 0.5,
            'balance_angle': 0.3,
            'balance_speed': 1.0,
            # layout, in pixels
            'pivot': (32, 32),
            'pole_length': 24,
            'tip_radius': 3,
        })
        return defaults

    def initial_state(self, eta):
        return PendulumState(wrap_angle(math.pi + eta), 0.0)

    def dynamics(self, state, u):
        g, m, length = self.gravity, self.mass, self.length
        theta_ddot = (-3 * g / (2 * length) * math.sin(state.theta + math.pi)
                      + 3 * self.max_torque * u / (m * length ** 2))
        theta = state.theta + self.dt * state.theta_dot
        theta_dot = state.theta_dot + self.dt * theta_ddot
        theta_dot = min(max(theta_dot, -self.max_speed), self.max_speed)
        return PendulumState(wrap_angle(theta), theta_dot)

    def energy(self, state):
        """
        Mechanical energy scaled so that resting upright is ``gravity`` and
        hanging at rest is ``-gravity``. Conserved by the torque-free dynamics.
        """
        return self.length / 3 * state.theta_dot ** 2 + self.gravity * math.cos(state.theta)

    def render_state(self, state):
        frame = raster.blank(self.image_size, self.image_size)
        px, py = self.pivot
        tip_x = raster.to_pixel(px + self.pole_length * math.sin(state.theta))
        tip_y = raster.to_pixel(py - self.pole_length * math.cos(state.theta))
        raster.draw_line(frame, px, py, tip_x, tip_y)
        raster.draw_disc(frame, tip_x, tip_y, self.tip_radius)
        return frame

    def scripted_expert(self, state):
        theta, theta_dot = state.theta, state.theta_dot
        if abs(theta) < self.balance_angle and abs(theta_dot) < self.balance_speed:
            u = -(self.kp * theta + self.kd * theta_dot) / self.max_torque
        else:
            direction = 1.0 if theta_dot >= 0 else -1.0
            u = self.ke * (self.gravity - self.energy(state)) * direction
        return float(np.clip(u, -1.0, 1.0))

    def eval_reward(self, state):
        return (1.0 + math.cos(state.theta)) / 2.0
