import math
from unittest.mock import patch

import numpy as np
from django.core.exceptions import ImproperlyConfigured
from django.test import TestCase

from cail import raster
from cail.envs import make_env
from cail.envs.base import EnvError
from cail.envs.base import IntegrationFault
from cail.envs.cartpole import CartPoleState
from cail.envs.pendulum import PendulumState
from cail.envs.pendulum import wrap_angle


def step_state(env, action):
    return env.step(action)[4]['state']


class RegistryTest(TestCase):
    def test_unknown_env(self):
        with self.assertRaises(ImproperlyConfigured):
            make_env('acrobot')

    def test_unknown_setting(self):
        with self.assertRaises(ImproperlyConfigured):
            make_env('pendulum', friction=0.1)

    def test_bad_step_counts(self):
        with self.assertRaises(ImproperlyConfigured):
            make_env('pendulum', action_repeat=0)
        with self.assertRaises(ImproperlyConfigured):
            make_env('cartpole', max_agent_steps=0)

    def test_observation_shape(self):
        env = make_env('cartpole')
        self.assertEqual(env.observation_shape, (3, 64, 64))


class RasterTest(TestCase):
    def test_bresenham_endpoints(self):
        points = raster.bresenham(0, 0, 5, 2)
        self.assertEqual(points[0], (0, 0))
        self.assertEqual(points[-1], (5, 2))
        self.assertEqual(len(points), 6)

    def test_thick_vertical_line(self):
        frame = raster.blank(10, 10)
        raster.draw_line(frame, 5, 1, 5, 8)
        columns = np.nonzero(frame.any(axis=0))[0]
        self.assertEqual(columns.tolist(), [4, 5, 6])

    def test_round_half_up(self):
        self.assertEqual(raster.to_pixel(2.5), 3)
        self.assertEqual(raster.to_pixel(-2.5), -2)


class PendulumTest(TestCase):
    def setUp(self):
        self.env = make_env('pendulum')

    def test_wrap_angle(self):
        self.assertEqual(wrap_angle(math.pi), math.pi)
        self.assertAlmostEqual(wrap_angle(-math.pi), math.pi)
        self.assertAlmostEqual(wrap_angle(3 * math.pi / 2), -math.pi / 2)

    def test_initial_state_without_noise(self):
        state = self.env.initial_state(0.0)
        self.assertEqual(state, PendulumState(math.pi, 0.0))

    def test_reset_is_seeded(self):
        obs_a, info_a = self.env.reset(seed=5)
        obs_b, info_b = make_env('pendulum').reset(seed=5)
        state_a = info_a['state']
        self.assertEqual(state_a, info_b['state'])
        self.assertEqual(obs_a.tobytes(), obs_b.tobytes())
        self.assertLessEqual(abs(abs(state_a.theta) - math.pi), 0.05)

    def test_frame_stack_replicated_on_reset(self):
        obs, _ = self.env.reset(seed=0)
        self.assertEqual(obs.dtype, np.uint8)
        self.assertTrue(np.array_equal(obs[0], obs[2]))

    def test_frame_stack_follows_last_states(self):
        _, info = self.env.reset(seed=2)
        states = [info['state']]
        for k in range(1, 7):
            obs, _, _, _, info = self.env.step(0.5 if k % 2 else -1.0)
            states.append(info['state'])
            if k >= self.env.frame_stack:
                expected = np.stack([self.env.render(s) for s in states[-self.env.frame_stack:]])
                self.assertEqual(obs.tobytes(), expected.tobytes())

    def test_spaces(self):
        obs, _ = self.env.reset(seed=0)
        self.assertTrue(self.env.observation_space.contains(obs))
        self.assertEqual(self.env.action_space.shape, (1,))
        self.assertEqual(self.env.render().tobytes(), obs[-1].tobytes())

    def test_hanging_equilibrium(self):
        self.env.reset_to(PendulumState(math.pi, 0.0))
        state = step_state(self.env, 0.0)
        self.assertAlmostEqual(abs(state.theta), math.pi, places=9)
        self.assertAlmostEqual(state.theta_dot, 0.0, places=9)

    def test_full_torque_step(self):
        # two Euler steps with theta_ddot = 6 from rest
        self.env.reset_to(PendulumState(math.pi, 0.0))
        state = step_state(self.env, 1.0)
        self.assertAlmostEqual(state.theta_dot, 0.6, places=9)
        self.assertAlmostEqual(state.theta, -math.pi + 0.015, places=9)

    def test_speed_clamped(self):
        self.env.reset_to(PendulumState(0.0, 7.99))
        for _ in range(5):
            state = step_state(self.env, 1.0)
            self.assertLessEqual(abs(state.theta_dot), 8.0)

    def test_action_clipped(self):
        self.env.reset_to(PendulumState(math.pi, 0.0))
        clipped = step_state(self.env, 5.0)
        self.env.reset_to(PendulumState(math.pi, 0.0))
        self.assertEqual(step_state(self.env, 1.0), clipped)

    def test_truncation_is_not_termination(self):
        env = make_env('pendulum', max_agent_steps=3)
        env.reset(seed=0)
        results = [env.step(0.0) for _ in range(3)]
        self.assertEqual([truncated for _, _, _, truncated, _ in results], [False, False, True])
        self.assertEqual([terminated for _, _, terminated, _, _ in results], [False, False, False])
        with self.assertRaises(EnvError):
            env.step(0.0)

    def test_non_finite_state(self):
        self.env.reset(seed=0)
        with patch.object(self.env, 'dynamics', return_value=PendulumState(float('nan'), 0.0)):
            with self.assertRaises(IntegrationFault):
                self.env.step(0.0)

    def test_energy_drift(self):
        self.env.reset_to(PendulumState(math.pi, 0.0))
        start = self.env.energy(self.env.state)
        state = self.env.state
        for _ in range(200):
            state = self.env.dynamics(state, 0.0)
        self.assertLess(abs(self.env.energy(state) - start), 0.5)

    def test_render_upright(self):
        frame = self.env.render(PendulumState(0.0, 0.0))
        self.assertTrue(np.all(frame[8:33, 32] == raster.FOREGROUND))
        self.assertEqual(frame[40:, :].sum(), 0)

    def test_render_horizontal(self):
        frame = self.env.render(PendulumState(math.pi / 2, 0.0))
        self.assertEqual(frame[32, 56], raster.FOREGROUND)
        self.assertEqual(frame[29, 56], raster.FOREGROUND)
        self.assertEqual(frame[32, 60], 0)

    def test_render_deterministic(self):
        state = PendulumState(0.7, -1.0)
        self.assertEqual(self.env.render(state).tobytes(), self.env.render(state).tobytes())

    def test_expert(self):
        self.assertEqual(self.env.scripted_expert(PendulumState(0.0, 0.0)), 0.0)
        self.assertEqual(self.env.scripted_expert(PendulumState(math.pi, 0.0)), 1.0)
        self.assertEqual(self.env.scripted_expert(PendulumState(math.pi, -0.1)), -1.0)

    def test_eval_reward(self):
        self.assertEqual(self.env.eval_reward(PendulumState(0.0, 0.0)), 1.0)
        self.assertAlmostEqual(self.env.eval_reward(PendulumState(math.pi, 0.0)), 0.0)


class CartPoleTest(TestCase):
    def setUp(self):
        self.env = make_env('cartpole')

    def test_initial_state_without_noise(self):
        self.assertEqual(self.env.initial_state(0.0), CartPoleState(0.0, 0.0, 0.0, 0.0))

    def test_upright_rest_is_equilibrium(self):
        self.env.reset_to(CartPoleState(0.0, 0.0, 0.0, 0.0))
        self.assertEqual(step_state(self.env, 0.0), CartPoleState(0.0, 0.0, 0.0, 0.0))

    def test_fall_terminates(self):
        self.env.reset_to(CartPoleState(0.0, 0.0, 0.69, 2.0))
        _, _, terminated, truncated, info = self.env.step(0.0)
        self.assertGreater(info['state'].theta, 0.7)
        self.assertTrue(terminated)
        self.assertFalse(truncated)

    def test_track_limit_terminates(self):
        self.assertTrue(self.env.is_terminal(CartPoleState(2.01, 0.0, 0.0, 0.0)))
        self.assertFalse(self.env.is_terminal(CartPoleState(1.99, 0.0, 0.69, 0.0)))

    def test_push_moves_cart_right(self):
        self.env.reset_to(CartPoleState(0.0, 0.0, 0.0, 0.0))
        state = step_state(self.env, 1.0)
        self.assertGreater(state.x_dot, 0.0)

    def test_expert(self):
        self.assertAlmostEqual(self.env.scripted_expert(CartPoleState(0.0, 0.0, 0.1, 0.0)), -0.2)
        self.assertEqual(self.env.scripted_expert(CartPoleState(0.0, 0.0, 0.0, 0.0)), 0.0)

    def test_expert_never_falls(self):
        for seed in range(10):
            _, info = self.env.reset(seed=seed)
            total, truncated = 0.0, False
            while not truncated:
                _, reward, terminated, truncated, info = self.env.step(self.env.scripted_expert(info['state']))
                self.assertFalse(terminated)
                total += reward
            self.assertGreaterEqual(total, 190)

    def test_eval_reward(self):
        self.assertEqual(self.env.eval_reward(CartPoleState(0.0, 0.0, 0.25, 0.0)), 0.0)
        self.assertEqual(self.env.eval_reward(CartPoleState(0.5, 0.0, 0.1, 0.0)), 1.0)

    def test_render_layout(self):
        frame = self.env.render(CartPoleState(0.0, 0.0, 0.0, 0.0))
        self.assertTrue(np.all(frame[48, :] == raster.FOREGROUND))
        self.assertTrue(np.all(frame[42:48, 26:38] == raster.FOREGROUND))
        self.assertEqual(frame[22, 32], raster.FOREGROUND)
        self.assertEqual(frame[10, 32], 0)
        self.assertEqual(self.env.cart_column(-2.4), 4)
        self.assertEqual(self.env.cart_column(2.4), 60)
