import logging

import numpy as np
import torch

from cail.base import Configurable
from cail.data import augment
from cail.data import make_views
from cail.losses import actor_loss
from cail.losses import cail_loss
from cail.losses import clipped_noise
from cail.losses import disc_reward
from cail.losses import td_loss
from cail.losses import td_target
from cail.nets import ema_update
from cail.nets import obs_to_tensor
from cail.utils import setting

logger = logging.getLogger(__name__)


class CAILAgent(Configurable):
    """
    One optimisation step per sub-network.

    Gradient routing:

    * discriminator step: disc encoder, ``h_d``, ``h_unsup``, ``h_sup``
    * critic step: shared encoder, both critics
    * actor step: actor only (its input representation is detached)
    * target step: target critics only

    Rewards are never read from the buffer; every critic step relabels the
    batch with the current discriminator.
    """

    def __init__(self, nets, noise_rng, augment_rng, **settings):
        super().__init__(**settings)
        self.nets = nets
        self.noise_rng = noise_rng
        self.augment_rng = augment_rng
        adam = dict(betas=(0.9, 0.999), eps=1e-8)
        self.disc_optimizer = torch.optim.Adam(
            list(nets.disc_encoder.parameters())
            + list(nets.disc.parameters())
            + list(nets.proj_unsup.parameters())
            + list(nets.proj_sup.parameters()),
            lr=self.disc_lr, **adam)
        self.critic_optimizer = torch.optim.Adam(
            list(nets.encoder.parameters()) + list(nets.critic.parameters()),
            lr=self.critic_lr, **adam)
        self.actor_optimizer = torch.optim.Adam(nets.actor.parameters(), lr=self.actor_lr, **adam)

    def get_default_settings(self):
        return {
            'gamma': setting('CAIL_GAMMA', 0.99),
            'tau': setting('CAIL_TAU', 0.1),
            'lambda1': setting('CAIL_LAMBDA1', 1.0),
            'lambda2': setting('CAIL_LAMBDA2', 1.0),
            'calibrated': True,
            'sigma': setting('CAIL_SIGMA', 0.2),
            'noise_clip': setting('CAIL_NOISE_CLIP', 0.3),
            'ema_rate': setting('CAIL_EMA_RATE', 0.99),
            'disc_lr': setting('CAIL_DISC_LR', 1e-4),
            'critic_lr': setting('CAIL_CRITIC_LR', 1e-4),
            'actor_lr': setting('CAIL_ACTOR_LR', 1e-4),
            'augmentation': setting('CAIL_AUGMENTATION', 'shift'),
        }

    def _augment_batch(self, obs):
        if self.augmentation == 'none':
            return obs
        return np.stack([augment(o, self.augmentation, self.augment_rng) for o in obs])

    def act(self, obs, explore=False):
        with torch.no_grad():
            action = self.nets.actor(self.nets.encoder(obs_to_tensor(obs)))[0].item()
        if explore:
            action += clipped_noise((), self.sigma, self.noise_clip, self.noise_rng).item()
        return float(np.clip(action, -1.0, 1.0))

    def relabel(self, obs):
        """Discriminator rewards for a batch of raw observations."""
        nets = self.nets
        with torch.no_grad():
            return disc_reward(nets.discriminate(nets.disc_encoder(obs_to_tensor(obs))))

    def update_discriminator(self, agent_obs, expert_obs, alpha):
        views = make_views(agent_obs, expert_obs, self.augmentation, self.augment_rng)
        loss, components = cail_loss(
            views, self.nets, alpha,
            tau=self.tau, lambda1=self.lambda1, lambda2=self.lambda2, calibrated=self.calibrated,
        )
        self.disc_optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.disc_optimizer.step()
        return components

    def update_critic(self, batch):
        nets = self.nets
        reward = self.relabel(batch.obs)
        done = torch.as_tensor(batch.done, dtype=torch.float32)
        action = torch.as_tensor(batch.action, dtype=torch.float32)
        obs = obs_to_tensor(self._augment_batch(batch.obs))
        next_obs = obs_to_tensor(self._augment_batch(batch.next_obs))
        with torch.no_grad():
            next_repr = nets.encoder(next_obs)
        noise = clipped_noise((len(done),), self.sigma, self.noise_clip, self.noise_rng)
        target = td_target(nets.critic_target, nets.actor, next_repr, reward, done, self.gamma, noise)
        loss = td_loss(nets.critic, nets.encoder(obs), action, target)
        self.critic_optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.critic_optimizer.step()
        return loss.item()

    def update_actor(self, batch):
        nets = self.nets
        obs = obs_to_tensor(self._augment_batch(batch.obs))
        with torch.no_grad():
            repr_ = nets.encoder(obs)
        noise = clipped_noise((len(repr_),), self.sigma, self.noise_clip, self.noise_rng)
        loss = actor_loss(nets.critic, nets.actor, repr_, noise)
        self.actor_optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.actor_optimizer.step()
        return loss.item()

    def update_targets(self, rho=None):
        ema_update(self.nets.critic_target, self.nets.critic, self.ema_rate if rho is None else rho)

    def update(self, batch, expert_obs, alpha):
        """Discriminator, critic, actor and target steps, in that order."""
        metrics = self.update_discriminator(batch.obs, expert_obs, alpha)
        metrics['critic_loss'] = self.update_critic(batch)
        metrics['actor_loss'] = self.update_actor(batch)
        self.update_targets()
        return metrics
