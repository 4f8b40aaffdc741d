"""
Networks: the shared image encoder, the discriminator and projection heads,
the deterministic actor and the twin critics with their EMA targets.
"""
import copy
import io

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

PROB_EPS = 1e-6


class ModelError(Exception):
    pass


def orthogonal_init(module):
    if isinstance(module, (nn.Linear, nn.Conv2d)):
        nn.init.orthogonal_(module.weight)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def mlp(in_dim, hidden_dims, out_dim):
    layers = []
    last = in_dim
    for hidden in hidden_dims:
        layers += [nn.Linear(last, hidden), nn.ReLU()]
        last = hidden
    layers.append(nn.Linear(last, out_dim))
    return nn.Sequential(*layers)


class Encoder(nn.Module):
    """Conv stack -> linear -> LayerNorm -> tanh, mapping a frame stack to ``r``."""

    def __init__(self, obs_shape, num_filters=32, num_layers=4, feature_dim=50):
        super().__init__()
        self.obs_shape = tuple(obs_shape)
        self.feature_dim = feature_dim
        convs = [nn.Conv2d(self.obs_shape[0], num_filters, 3, stride=2)]
        for _ in range(num_layers - 1):
            convs.append(nn.Conv2d(num_filters, num_filters, 3, stride=1))
        self.convs = nn.ModuleList(convs)
        with torch.no_grad():
            flat = self._conv(torch.zeros(1, *self.obs_shape)).shape[1]
        self.fc = nn.Linear(flat, feature_dim)
        self.ln = nn.LayerNorm(feature_dim)

    def _conv(self, obs):
        h = obs
        for conv in self.convs:
            h = torch.relu(conv(h))
        return h.flatten(start_dim=1)

    def forward(self, obs):
        if tuple(obs.shape[1:]) != self.obs_shape:
            raise ModelError('Encoder expects (B, {}), got {}'.format(
                ', '.join(map(str, self.obs_shape)), tuple(obs.shape)))
        return torch.tanh(self.ln(self.fc(self._conv(obs))))


class DiscHead(nn.Module):

    def __init__(self, feature_dim=50, hidden_dim=128):
        super().__init__()
        self.net = mlp(feature_dim, [hidden_dim], 1)

    def logits(self, r):
        return self.net(r).squeeze(-1)

    def forward(self, r):
        return torch.sigmoid(self.logits(r)).clamp(PROB_EPS, 1 - PROB_EPS)


class ProjHead(nn.Module):

    def __init__(self, feature_dim=50, hidden_dim=128, out_dim=64):
        super().__init__()
        self.net = mlp(feature_dim, [hidden_dim], out_dim)

    def forward(self, r):
        return F.normalize(self.net(r), dim=-1)


class Actor(nn.Module):

    def __init__(self, feature_dim=50, hidden_dim=256, action_dim=1):
        super().__init__()
        self.net = mlp(feature_dim, [hidden_dim, hidden_dim], action_dim)

    def forward(self, r):
        return torch.tanh(self.net(r)).squeeze(-1)


class CriticPair(nn.Module):

    def __init__(self, feature_dim=50, hidden_dim=256, action_dim=1):
        super().__init__()
        self.q1 = mlp(feature_dim + action_dim, [hidden_dim, hidden_dim], 1)
        self.q2 = mlp(feature_dim + action_dim, [hidden_dim, hidden_dim], 1)

    def forward(self, r, a):
        h = torch.cat([r, a.reshape(len(r), -1)], dim=-1)
        return self.q1(h).squeeze(-1), self.q2(h).squeeze(-1)


class CAILNets(nn.Module):
    """
    Every network of one run. ``disc_encoder`` is the encoder the
    discriminator and contrastive heads read from: the shared ``encoder``
    unless ``separate_disc_encoder`` is set.
    """

    def __init__(self, obs_shape, feature_dim=50, num_filters=32, num_layers=4,
                 head_hidden=128, proj_dim=64, hidden_dim=256, separate_disc_encoder=False):
        super().__init__()
        self.encoder = Encoder(obs_shape, num_filters, num_layers, feature_dim)
        self.separate_disc_encoder = separate_disc_encoder
        if separate_disc_encoder:
            self.disc_encoder_module = Encoder(obs_shape, num_filters, num_layers, feature_dim)
        self.disc = DiscHead(feature_dim, head_hidden)
        self.proj_unsup = ProjHead(feature_dim, head_hidden, proj_dim)
        self.proj_sup = ProjHead(feature_dim, head_hidden, proj_dim)
        self.actor = Actor(feature_dim, hidden_dim)
        self.critic = CriticPair(feature_dim, hidden_dim)
        self.apply(orthogonal_init)
        self.critic_target = copy.deepcopy(self.critic)
        for p in self.critic_target.parameters():
            p.requires_grad_(False)

    @property
    def disc_encoder(self):
        return self.disc_encoder_module if self.separate_disc_encoder else self.encoder

    @property
    def num_encoders(self):
        return 2 if self.separate_disc_encoder else 1

    def encode(self, obs):
        return self.encoder(obs)

    def project(self, r, head):
        if head == 'unsup':
            return self.proj_unsup(r)
        if head == 'sup':
            return self.proj_sup(r)
        raise ModelError('Unknown projection head %r' % (head,))

    def discriminate(self, r):
        return self.disc(r)

    def q_values(self, r, a):
        return self.critic(r, a)


def build_nets(obs_shape, seed, **kwargs):
    """Networks with orthogonal weights drawn from a torch RNG seeded by ``seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return CAILNets(obs_shape, **kwargs)


def ema_update(target, online, rho):
    """``target <- rho * target + (1 - rho) * online`` for every parameter."""
    if not 0.0 <= rho <= 1.0:
        raise ModelError('EMA rate must lie in [0, 1], got %r' % (rho,))
    target_params = list(target.parameters())
    online_params = list(online.parameters())
    if len(target_params) != len(online_params):
        raise ModelError('EMA target and online networks have different parameter lists')
    with torch.no_grad():
        for t, o in zip(target_params, online_params):
            if t.shape != o.shape:
                raise ModelError('EMA shape mismatch: {} vs {}'.format(tuple(t.shape), tuple(o.shape)))
            if rho == 0.0:
                t.copy_(o)
            elif rho != 1.0:
                t.mul_(rho).add_(o, alpha=1.0 - rho)


def obs_to_tensor(obs):
    """uint8 frame stacks -> float tensor in [0, 1], adding a batch axis if needed."""
    array = np.asarray(obs)
    if array.ndim == 3:
        array = array[None]
    return torch.as_tensor(array, dtype=torch.float32).div_(255.0)


def parameter_digest(module):
    """Bytes of every parameter, for bit-level before/after comparisons."""
    return b''.join(p.detach().cpu().numpy().tobytes() for p in module.parameters())


def dump_checkpoint(nets, step):
    buffer = io.BytesIO()
    torch.save({'step': step, 'nets': nets.state_dict()}, buffer)
    return buffer.getvalue()


def load_checkpoint(nets, data):
    try:
        payload = torch.load(io.BytesIO(data), map_location='cpu')
    except Exception as e:
        raise ModelError('Unreadable checkpoint: %s' % e)
    try:
        state, step = payload['nets'], int(payload['step'])
        nets.load_state_dict(state)
    except (KeyError, TypeError, ValueError, RuntimeError) as e:
        raise ModelError('Checkpoint does not match the networks: %s' % e)
    return step
