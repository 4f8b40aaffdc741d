"""
Training orchestration: the adversarial imitation loop, behaviour cloning,
evaluation and expert demo generation.

Steps are agent steps (each one is ``action_repeat`` simulator steps).
"""
import logging
import time
from collections import namedtuple

import numpy as np
import torch
from django.core.exceptions import ImproperlyConfigured

from cail.agent import CAILAgent
from cail.base import Configurable
from cail.data import AUGMENTATIONS
from cail.data import DemoSet
from cail.data import ReplayBuffer
from cail.data import Trajectory
from cail.data import Transition
from cail.data import augment
from cail.envs import ENVS
from cail.envs import make_env
from cail.losses import bc_loss
from cail.nets import build_nets
from cail.nets import obs_to_tensor
from cail.rng import RandomStreams
from cail.utils import coerce_value
from cail.utils import parse_key_values
from cail.utils import setting

logger = logging.getLogger(__name__)

Variant = namedtuple('Variant', ['separate_disc_encoder', 'contrastive', 'calibrated', 'augmentation'])

VARIANTS = {
    'bc': Variant(False, False, False, 'shift'),
    'gail': Variant(True, False, False, 'none'),
    'gail-se': Variant(False, False, False, 'none'),
    'cail-nocal': Variant(False, True, False, 'shift'),
    'cail': Variant(False, True, True, 'shift'),
}


def run_variant(algo):
    """Objective wiring for ``algo``."""
    try:
        return VARIANTS[algo]
    except KeyError:
        raise ImproperlyConfigured(
            "Unknown algo '{}'. Choose one of: {}".format(algo, ', '.join(VARIANTS))
        )


def alpha_schedule(step, total_steps, alpha_start, alpha_end):
    return alpha_start + (alpha_end - alpha_start) * step / total_steps


class TrainConfig(Configurable):
    """
    Every hyperparameter of a run. Defaults may be overridden project-wide
    with ``CAIL_<KEY>`` Django settings.
    """

    def __init__(self, **settings):
        super().__init__(**settings)
        self.validate()

    @classmethod
    def get_default_settings(cls):
        defaults = {
            'algo': 'cail',
            'env': 'pendulum',
            'seed': 0,
            'total_steps': 60000,
            'batch_size': 64,
            'gamma': 0.99,
            'tau': 0.1,
            'lambda1': 1.0,
            'lambda2': 1.0,
            'alpha_mode': 'linear',
            'alpha': 0.5,
            'alpha_start': 0.3,
            'alpha_end': 0.5,
            'sigma': 0.2,
            'noise_clip': 0.3,
            'ema_rate': 0.99,
            'buffer_capacity': 100000,
            'warmup': 1000,
            'eval_every': 2000,
            'eval_episodes': 10,
            'augmentation': 'auto',
            'disc_lr': 1e-4,
            'critic_lr': 1e-4,
            'actor_lr': 1e-4,
            'feature_dim': 50,
            'num_filters': 32,
            'num_layers': 4,
            'head_hidden': 128,
            'proj_dim': 64,
            'hidden_dim': 256,
            'bc_epochs': 200,
            'bc_batch_size': 64,
            'bc_lr': 1e-4,
            'bc_eval_every': 20,
            'save_every': 0,
            'timing': False,
        }
        return {key: setting('CAIL_' + key.upper(), value) for key, value in defaults.items()}

    def validate(self):
        variant = run_variant(self.algo)
        if self.env not in ENVS:
            raise ImproperlyConfigured("Unknown env '{}'".format(self.env))
        if self.augmentation == 'auto':
            self.augmentation = variant.augmentation
        if self.augmentation not in AUGMENTATIONS:
            raise ImproperlyConfigured("Unknown augmentation '{}'".format(self.augmentation))
        if self.alpha_mode not in ('linear', 'fixed'):
            raise ImproperlyConfigured("alpha_mode must be 'linear' or 'fixed'")
        if not 0.0 <= self.alpha_start <= self.alpha_end <= 1.0:
            raise ImproperlyConfigured('Need 0 <= alpha_start <= alpha_end <= 1')
        if not 0.0 <= self.alpha <= 1.0:
            raise ImproperlyConfigured('alpha must lie in [0, 1]')
        if not 0.0 <= self.ema_rate <= 1.0:
            raise ImproperlyConfigured('ema_rate must lie in [0, 1]')
        if self.tau <= 0:
            raise ImproperlyConfigured('tau must be positive')
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ImproperlyConfigured('lambda1 and lambda2 must be non-negative')
        for name in ('total_steps', 'batch_size', 'buffer_capacity', 'eval_every', 'eval_episodes',
                     'bc_batch_size', 'bc_eval_every'):
            if getattr(self, name) < 1:
                raise ImproperlyConfigured('{} must be positive'.format(name))
        for name in ('warmup', 'bc_epochs', 'save_every'):
            if getattr(self, name) < 0:
                raise ImproperlyConfigured('{} must not be negative'.format(name))
        if self.algo != 'bc' and self.batch_size < 2:
            raise ImproperlyConfigured('Contrastive batches need batch_size >= 2')

    @property
    def variant(self):
        return run_variant(self.algo)

    @classmethod
    def from_sources(cls, config_text=None, **flags):
        """Defaults < ``config_text`` key=value lines < ``flags``."""
        defaults = cls.get_default_settings()
        values = {}
        if config_text:
            for key, raw in parse_key_values(config_text).items():
                if key not in defaults:
                    raise ImproperlyConfigured(
                        "Invalid setting '{}' for {}".format(key, cls.__name__)
                    )
                values[key] = coerce_value(key, raw, defaults[key])
        values.update({key: value for key, value in flags.items() if value is not None})
        return cls(**values)

    def as_text(self):
        return ''.join('{}={}\n'.format(key, value) for key, value in self.get_settings().items())

    def alpha_at(self, step):
        if self.alpha_mode == 'fixed':
            return self.alpha
        return alpha_schedule(step, self.total_steps, self.alpha_start, self.alpha_end)

    def network_settings(self):
        return {
            'feature_dim': self.feature_dim,
            'num_filters': self.num_filters,
            'num_layers': self.num_layers,
            'head_hidden': self.head_hidden,
            'proj_dim': self.proj_dim,
            'hidden_dim': self.hidden_dim,
            'separate_disc_encoder': self.variant.separate_disc_encoder,
        }

    def agent_settings(self):
        variant = self.variant
        contrastive = variant.contrastive
        return {
            'gamma': self.gamma,
            'tau': self.tau,
            'lambda1': self.lambda1 if contrastive else 0.0,
            'lambda2': self.lambda2 if contrastive else 0.0,
            'calibrated': variant.calibrated,
            'sigma': self.sigma,
            'noise_clip': self.noise_clip,
            'ema_rate': self.ema_rate,
            'disc_lr': self.disc_lr,
            'critic_lr': self.critic_lr,
            'actor_lr': self.actor_lr,
            'augmentation': self.augmentation,
        }


class RunMetrics:
    def __init__(self):
        self.rows = []

    def append(self, row):
        if self.rows and row['step'] <= self.rows[-1]['step']:
            raise ValueError('Metrics rows must be strictly increasing in step')
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    @property
    def final(self):
        return self.rows[-1] if self.rows else None


class AgentPolicy:
    def __init__(self, agent):
        self.agent = agent

    def __call__(self, obs, state):
        return self.agent.act(obs, explore=False)


class ExpertPolicy:
    def __init__(self, env):
        self.env = env

    def __call__(self, obs, state):
        return self.env.scripted_expert(state)


class RandomPolicy:
    def __init__(self, rng):
        self.rng = rng

    def __call__(self, obs, state):
        return float(self.rng.uniform(-1.0, 1.0))


def run_episode(env, policy, seed, record=False):
    """Roll out one episode; returns the ground-truth return (and frames/actions)."""
    obs, info = env.reset(seed=seed)
    total = 0.0
    frames, actions = [], []
    while True:
        action = policy(obs, info['state'])
        if record:
            frames.append(obs[-1].copy())
            actions.append(action)
        obs, reward, terminated, truncated, info = env.step(action)
        total += reward
        if terminated or truncated:
            break
    if record:
        return total, Trajectory(np.stack(frames), np.asarray(actions, dtype=np.float32))
    return total


def evaluate(policy, env_name, episodes, seed, **env_settings):
    """Mean and population std of ground-truth returns, without exploration noise."""
    if episodes < 1:
        raise ValueError('episodes must be >= 1')
    env = make_env(env_name, **env_settings)
    rng = np.random.default_rng(seed)
    returns = [run_episode(env, policy, int(rng.integers(0, 2 ** 31 - 1))) for _ in range(episodes)]
    return float(np.mean(returns)), float(np.std(returns))


def evaluate_expert(env_name, episodes, seed):
    return evaluate(ExpertPolicy(make_env(env_name)), env_name, episodes, seed)


def generate_expert_demos(env_name, episodes, seed):
    """Scripted-expert rollouts recorded as a DemoSet, plus their returns."""
    streams = RandomStreams(seed)
    env = make_env(env_name)
    policy = ExpertPolicy(env)
    trajectories, returns = [], []
    for episode in range(episodes):
        total, trajectory = run_episode(env, policy, streams.draw_seed('env-init'), record=True)
        logger.info('expert episode=%d env=%s return=%.3f steps=%d', episode, env_name, total, len(trajectory))
        trajectories.append(trajectory)
        returns.append(total)
    return DemoSet(env_name, trajectories, seed), returns


def _check_demos(config, demos, env):
    if demos.env_name != config.env:
        raise ImproperlyConfigured(
            "Demos were recorded on '{}' but the run uses '{}'".format(demos.env_name, config.env)
        )
    if not demos.trajectories:
        raise ImproperlyConfigured('Demo set is empty')
    if demos.trajectories[0].frames.shape[1:] != env.observation_shape[1:]:
        raise ImproperlyConfigured('Demo frame size does not match the environment')


def _setup(config):
    torch.manual_seed(config.seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    streams = RandomStreams(config.seed)
    env = make_env(config.env)
    nets = build_nets(env.observation_shape, streams.draw_seed('net-init'), **config.network_settings())
    return streams, env, nets


def _metrics_row(step, mean, std, latest, alpha, steps_per_second):
    row = {
        'step': step,
        'eval_mean_return': mean,
        'eval_std_return': std,
        'alpha': alpha,
        'steps_per_second': steps_per_second,
    }
    row.update(latest)
    return row


def train(config, demos, run=None):
    """
    The adversarial imitation loop: one environment step, then (after warmup)
    one discriminator, critic, actor and target update per step.
    """
    if config.algo == 'bc':
        return bc_train(config, demos, run)
    streams, env, nets = _setup(config)
    _check_demos(config, demos, env)
    agent = CAILAgent(nets, streams['action-noise'], streams['augment'], **config.agent_settings())
    buffer = ReplayBuffer(env.observation_shape, config.buffer_capacity)
    expert_states = demos.stacked_states(env.frame_stack)
    replay_rng = streams['replay-sample']
    noise_rng = streams['action-noise']
    metrics = RunMetrics()
    latest = {key: float('nan') for key in ('L_dis', 'L_unsup', 'L_csup', 'critic_loss', 'actor_loss')}
    if run is not None:
        run.write_config(config)
    logger.info('train start algo=%s env=%s seed=%d steps=%d encoders=%d',
                config.algo, config.env, config.seed, config.total_steps, nets.num_encoders)

    obs, _ = env.reset(seed=streams.draw_seed('env-init'))
    started = time.perf_counter() if config.timing else None
    for step in range(1, config.total_steps + 1):
        if step <= config.warmup:
            action = float(noise_rng.uniform(-1.0, 1.0))
        else:
            action = agent.act(obs, explore=True)
        next_obs, _, terminated, truncated, _ = env.step(action)
        buffer.push(Transition(obs, action, 0.0, next_obs, int(terminated)))
        obs = next_obs
        if terminated or truncated:
            obs, _ = env.reset(seed=streams.draw_seed('env-init'))

        if step > config.warmup:
            batch = buffer.sample(config.batch_size, replay_rng)
            expert_obs = expert_states[replay_rng.integers(0, len(expert_states), size=config.batch_size)]
            latest.update(agent.update(batch, expert_obs, config.alpha_at(step)))

        if step % config.eval_every == 0 or step == config.total_steps:
            mean, std = evaluate(AgentPolicy(agent), config.env, config.eval_episodes,
                                 streams.draw_seed('eval'))
            steps_per_second = None
            if started is not None:
                steps_per_second = step / max(time.perf_counter() - started, 1e-9)
            metrics.append(_metrics_row(step, mean, std, latest, config.alpha_at(step), steps_per_second))
            logger.info('eval step=%d eval_mean_return=%.3f eval_std_return=%.3f L_dis=%.4f '
                        'L_unsup=%.4f L_csup=%.4f critic_loss=%.4f actor_loss=%.4f',
                        step, mean, std, latest['L_dis'], latest['L_unsup'], latest['L_csup'],
                        latest['critic_loss'], latest['actor_loss'])
            if run is not None:
                run.write_metrics(metrics.rows)
        if run is not None and config.save_every and step % config.save_every == 0:
            run.save_checkpoint(nets, step)

    if run is not None:
        run.save_checkpoint(nets, config.total_steps)
    return metrics, nets


def bc_train(config, demos, run=None):
    """Regress expert actions from frame stacks; encoder and actor train together."""
    if not demos.has_actions:
        raise ImproperlyConfigured('Behaviour cloning needs demos with actions')
    streams, env, nets = _setup(config)
    _check_demos(config, demos, env)
    states = demos.stacked_states(env.frame_stack)
    actions = torch.as_tensor(demos.stacked_actions())
    params = list(nets.encoder.parameters()) + list(nets.actor.parameters())
    optimizer = torch.optim.Adam(params, lr=config.bc_lr, betas=(0.9, 0.999), eps=1e-8)
    shuffle_rng = streams['replay-sample']
    augment_rng = streams['augment']
    agent = CAILAgent(nets, streams['action-noise'], augment_rng, **config.agent_settings())
    metrics = RunMetrics()
    latest = {key: float('nan') for key in ('L_dis', 'L_unsup', 'L_csup', 'critic_loss', 'actor_loss')}
    if run is not None:
        run.write_config(config)

    def record(epoch):
        mean, std = evaluate(AgentPolicy(agent), config.env, config.eval_episodes, streams.draw_seed('eval'))
        metrics.append(_metrics_row(epoch, mean, std, latest, float('nan'), None))
        logger.info('bc eval epoch=%d eval_mean_return=%.3f bc_loss=%.5f', epoch, mean, latest['actor_loss'])
        if run is not None:
            run.write_metrics(metrics.rows)

    if config.bc_epochs == 0:
        record(0)
    for epoch in range(1, config.bc_epochs + 1):
        order = shuffle_rng.permutation(len(states))
        losses = []
        for start in range(0, len(order), config.bc_batch_size):
            idx = order[start:start + config.bc_batch_size]
            batch = states[idx]
            if config.augmentation != 'none':
                batch = np.stack([augment(o, config.augmentation, augment_rng) for o in batch])
            predicted = nets.actor(nets.encoder(obs_to_tensor(batch)))
            loss = bc_loss(predicted, actions[idx])
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        latest['actor_loss'] = float(np.mean(losses))
        if epoch % config.bc_eval_every == 0 or epoch == config.bc_epochs:
            record(epoch)

    if run is not None:
        run.save_checkpoint(nets, config.bc_epochs)
    return metrics, nets


def load_policy(run):
    """Rebuild a run's networks from its config echo and latest checkpoint."""
    config = TrainConfig.from_sources(run.read_config_text())
    env = make_env(config.env)
    nets = build_nets(env.observation_shape, 0, **config.network_settings())
    step = run.load_latest(nets)
    agent = CAILAgent(nets, np.random.default_rng(0), np.random.default_rng(0), **config.agent_settings())
    return config, agent, step
