import math
from dataclasses import astuple
from dataclasses import dataclass

import numpy as np

from cail import raster
from cail.envs.base import PixelEnv


@dataclass(frozen=True)
class CartPoleState:
    x: float
    x_dot: float
    theta: float
    theta_dot: float

    def is_finite(self):
        return all(math.isfinite(v) for v in astuple(self))


class PixelCartPole(PixelEnv):
    """
    Cart-pole balance with true terminal states.

    Positive force pushes the cart towards +x (right of the frame). ``theta``
    is measured counter-clockwise from upright, so a positive angle leans the
    pole towards -x.
    """
    name = 'cartpole'
    state_class = CartPoleState

    def get_default_settings(self):
        defaults = super().get_default_settings()
        defaults.update({
            'dt': 0.02,
            'gravity': 9.8,
            'mass_cart': 1.0,
            'mass_pole': 0.1,
            'half_length': 0.5,
            'force_mag': 10.0,
            'theta_limit': 0.7,
            'x_limit': 2.0,
            # scripted expert gains on (theta, theta_dot, x, x_dot)
            'expert_gains': (20.0, 4.0, -1.0, -2.0),
            # layout, in pixels
            'track_row': 48,
            'cart_size': (12, 6),
            'pole_length': 20,
            'x_range': 2.4,
            'x_pixels': (4, 60),
        })
        return defaults

    def initial_state(self, eta):
        return CartPoleState(0.0, 0.0, eta, 0.0)

    def dynamics(self, state, u):
        force = self.force_mag * u
        total_mass = self.mass_cart + self.mass_pole
        polemass_length = self.mass_pole * self.half_length
        sin_t = math.sin(state.theta)
        cos_t = math.cos(state.theta)
        temp = (force - polemass_length * state.theta_dot ** 2 * sin_t) / total_mass
        theta_acc = (self.gravity * sin_t + cos_t * temp) / (
            self.half_length * (4.0 / 3.0 - self.mass_pole * cos_t ** 2 / total_mass)
        )
        x_acc = temp + polemass_length * theta_acc * cos_t / total_mass
        return CartPoleState(
            state.x + self.dt * state.x_dot,
            state.x_dot + self.dt * x_acc,
            state.theta + self.dt * state.theta_dot,
            state.theta_dot + self.dt * theta_acc,
        )

    def is_terminal(self, state):
        return abs(state.theta) > self.theta_limit or abs(state.x) > self.x_limit

    def cart_column(self, x):
        left, right = self.x_pixels
        return raster.to_pixel(left + (x + self.x_range) / (2 * self.x_range) * (right - left))

    def render_state(self, state):
        frame = raster.blank(self.image_size, self.image_size)
        raster.draw_row(frame, self.track_row)
        width, height = self.cart_size
        cx = self.cart_column(state.x)
        top = self.track_row - height
        raster.fill_rect(frame, cx - width // 2, top, cx + width // 2, self.track_row)
        tip_x = raster.to_pixel(cx - self.pole_length * math.sin(state.theta))
        tip_y = raster.to_pixel(top - self.pole_length * math.cos(state.theta))
        raster.draw_line(frame, cx, top, tip_x, tip_y)
        return frame

    def scripted_expert(self, state):
        k_theta, k_omega, k_x, k_v = self.expert_gains
        u = -(k_theta * state.theta + k_omega * state.theta_dot
              + k_x * state.x + k_v * state.x_dot) / self.force_mag
        return float(np.clip(u, -1.0, 1.0))

    def eval_reward(self, state):
        return 1.0 if abs(state.theta) < 0.2 and abs(state.x) < 1.0 else 0.0
