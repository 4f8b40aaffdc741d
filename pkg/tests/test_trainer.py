import math
import os

import numpy as np
from django.core.exceptions import ImproperlyConfigured
from django.test import TestCase
from django.test import override_settings

from cail import trainer
from cail.data import DemoSet
from cail.data import Trajectory
from cail.runs import Run
from cail.trainer import TrainConfig
from tests.utils import TINY_TRAIN
from tests.utils import TempDirMixin


def short_demos(env_name='pendulum', episodes=1, steps=40, seed=0):
    demos, _ = trainer.generate_expert_demos(env_name, episodes, seed)
    trajectories = [Trajectory(t.frames[:steps], t.actions[:steps]) for t in demos.trajectories]
    return DemoSet(env_name, trajectories, seed)


class AlphaScheduleTest(TestCase):
    def test_endpoints(self):
        self.assertEqual(trainer.alpha_schedule(0, 60000, 0.3, 0.5), 0.3)
        self.assertAlmostEqual(trainer.alpha_schedule(60000, 60000, 0.3, 0.5), 0.5)
        self.assertAlmostEqual(trainer.alpha_schedule(30000, 60000, 0.3, 0.5), 0.4)

    def test_fixed_mode(self):
        config = TrainConfig(alpha_mode='fixed', alpha=0.7)
        self.assertEqual(config.alpha_at(0), 0.7)
        self.assertEqual(config.alpha_at(config.total_steps), 0.7)


class TrainConfigTest(TestCase):
    def test_defaults(self):
        config = TrainConfig()
        self.assertEqual(config.algo, 'cail')
        self.assertEqual(config.batch_size, 64)
        self.assertEqual(config.augmentation, 'shift')
        self.assertEqual((config.alpha_start, config.alpha_end), (0.3, 0.5))

    def test_variant_augmentation(self):
        self.assertEqual(TrainConfig(algo='gail').augmentation, 'none')
        self.assertEqual(TrainConfig(algo='gail-se').augmentation, 'none')
        self.assertEqual(TrainConfig(algo='gail-se', augmentation='shift').augmentation, 'shift')
        self.assertEqual(TrainConfig(algo='cail-nocal').augmentation, 'shift')

    def test_variant_wiring(self):
        gail = TrainConfig(algo='gail')
        self.assertTrue(gail.network_settings()['separate_disc_encoder'])
        self.assertEqual((gail.agent_settings()['lambda1'], gail.agent_settings()['lambda2']), (0.0, 0.0))
        nocal = TrainConfig(algo='cail-nocal').agent_settings()
        self.assertFalse(nocal['calibrated'])
        self.assertEqual(nocal['lambda2'], 1.0)
        self.assertTrue(TrainConfig().agent_settings()['calibrated'])

    def test_invalid(self):
        bad = [
            {'algo': 'sqil'},
            {'env': 'acrobot'},
            {'augmentation': 'mixup'},
            {'alpha_start': 0.6, 'alpha_end': 0.5},
            {'alpha_end': 1.2},
            {'alpha_mode': 'cosine'},
            {'tau': 0.0},
            {'lambda1': -1.0},
            {'batch_size': 1},
            {'total_steps': 0},
            {'warmup': -1},
            {'ema_rate': 1.5},
            {'learning_rate': 0.1},
        ]
        for settings in bad:
            with self.subTest(settings=settings):
                with self.assertRaises(ImproperlyConfigured):
                    TrainConfig(**settings)

    def test_sources_layering(self):
        text = '# run file\nbatch_size = 32\nalgo = gail\ntau=0.2\n'
        config = TrainConfig.from_sources(text, algo='cail', seed=None)
        self.assertEqual(config.batch_size, 32)
        self.assertEqual(config.algo, 'cail')
        self.assertEqual(config.tau, 0.2)
        self.assertEqual(config.seed, 0)

    def test_sources_unknown_key(self):
        with self.assertRaises(ImproperlyConfigured):
            TrainConfig.from_sources('momentum=0.9\n')

    @override_settings(CAIL_BATCH_SIZE=16)
    def test_setting_defaults(self):
        self.assertEqual(TrainConfig().batch_size, 16)
        self.assertEqual(TrainConfig(batch_size=8).batch_size, 8)

    def test_text_round_trip(self):
        config = TrainConfig(algo='gail-se', augmentation='crop', seed=3, timing=True)
        again = TrainConfig.from_sources(config.as_text())
        self.assertEqual(again.get_settings(), config.get_settings())


class EvaluateTest(TestCase):
    def test_expert_competence(self):
        for env_name, floor in (('pendulum', 180), ('cartpole', 190)):
            with self.subTest(env=env_name):
                mean, std = trainer.evaluate_expert(env_name, 10, seed=0)
                self.assertGreaterEqual(mean, floor)
                self.assertGreaterEqual(std, 0.0)

    def test_single_episode_has_zero_std(self):
        _, std = trainer.evaluate(trainer.RandomPolicy(np.random.default_rng(0)), 'pendulum', 1, seed=0)
        self.assertEqual(std, 0.0)

    def test_seeded(self):
        a = trainer.evaluate(trainer.RandomPolicy(np.random.default_rng(1)), 'cartpole', 2, seed=4)
        b = trainer.evaluate(trainer.RandomPolicy(np.random.default_rng(1)), 'cartpole', 2, seed=4)
        self.assertEqual(a, b)

    def test_needs_an_episode(self):
        with self.assertRaises(ValueError):
            trainer.evaluate(trainer.RandomPolicy(np.random.default_rng(0)), 'pendulum', 0, seed=0)


class GenerateExpertTest(TestCase):
    def test_shapes(self):
        demos, returns = trainer.generate_expert_demos('pendulum', 2, seed=0)
        self.assertEqual(len(demos.trajectories), 2)
        self.assertEqual([len(t) for t in demos.trajectories], [200, 200])
        self.assertTrue(demos.has_actions)
        self.assertEqual(demos.trajectories[0].frames.shape[1:], (64, 64))
        self.assertEqual(len(returns), 2)

    def test_first_frame_is_reset_frame(self):
        demos, _ = trainer.generate_expert_demos('cartpole', 1, seed=2)
        states = demos.stacked_states(3)
        self.assertTrue(np.array_equal(states[0, 0], states[0, 2]))

    def test_reproducible(self):
        a, _ = trainer.generate_expert_demos('cartpole', 1, seed=5)
        b, _ = trainer.generate_expert_demos('cartpole', 1, seed=5)
        self.assertEqual(a.trajectories[0].frames.tobytes(), b.trajectories[0].frames.tobytes())


class TrainTest(TempDirMixin, TestCase):
    def setUp(self):
        super().setUp()
        self.demos = short_demos()

    def run_training(self, name, **settings):
        config = TrainConfig(**dict(TINY_TRAIN, **settings))
        run = Run(os.path.join(self.tmpdir, name))
        metrics, nets = trainer.train(config, self.demos, run)
        return config, run, metrics

    def test_artifacts(self):
        config, run, metrics = self.run_training('cail')
        self.assertEqual([row['step'] for row in metrics.rows], [12, 24])
        rows = run.read_metrics()
        self.assertEqual(rows[-1]['step'], config.total_steps)
        self.assertEqual(run.checkpoints()[-1][0], config.total_steps)
        self.assertEqual(run.read_config_text(), config.as_text())
        self.assertTrue(math.isnan(rows[-1]['steps_per_second']))
        self.assertTrue(math.isfinite(rows[-1]['L_dis']))
        self.assertAlmostEqual(rows[-1]['alpha'], 0.5)

    def test_deterministic(self):
        self.run_training('a', seed=4)
        self.run_training('b', seed=4)
        with open(os.path.join(self.tmpdir, 'a', 'metrics.csv'), 'rb') as a, \
                open(os.path.join(self.tmpdir, 'b', 'metrics.csv'), 'rb') as b:
            self.assertEqual(a.read(), b.read())

    def test_gail_has_no_contrastive_gradient(self):
        _, run, metrics = self.run_training('gail', algo='gail')
        self.assertTrue(math.isfinite(metrics.final['L_unsup']))
        self.assertEqual(metrics.final['step'], 24)

    def test_periodic_checkpoints(self):
        _, run, _ = self.run_training('ckpt', save_every=10)
        self.assertEqual([step for step, _ in run.checkpoints()], [10, 20, 24])

    def test_timing_column(self):
        _, run, _ = self.run_training('timed', timing=True)
        self.assertGreater(run.read_metrics()[-1]['steps_per_second'], 0)

    def test_demo_env_mismatch(self):
        config = TrainConfig(**dict(TINY_TRAIN, env='cartpole'))
        with self.assertRaises(ImproperlyConfigured):
            trainer.train(config, self.demos)

    def test_load_policy(self):
        _, run, _ = self.run_training('policy')
        config, agent, step = trainer.load_policy(run)
        self.assertEqual(step, 24)
        self.assertEqual(config.algo, 'cail')
        obs, _ = trainer.make_env('pendulum').reset(seed=0)
        self.assertLessEqual(abs(agent.act(obs)), 1.0)


class BehaviourCloningTest(TempDirMixin, TestCase):
    def test_bc(self):
        config = TrainConfig(**dict(TINY_TRAIN, algo='bc'))
        run = Run(os.path.join(self.tmpdir, 'bc'))
        metrics, _ = trainer.train(config, short_demos(), run)
        self.assertEqual([row['step'] for row in metrics.rows], [1, 2])
        self.assertTrue(math.isfinite(metrics.final['actor_loss']))
        self.assertTrue(math.isnan(metrics.final['L_dis']))
        self.assertEqual(run.checkpoints()[-1][0], 2)

    def test_bc_needs_actions(self):
        demos = DemoSet('pendulum', [Trajectory(short_demos().trajectories[0].frames)])
        config = TrainConfig(**dict(TINY_TRAIN, algo='bc'))
        with self.assertRaises(ImproperlyConfigured):
            trainer.bc_train(config, demos)
