"""
Fast property checks over the losses, gradients and update wiring.

Each check is a function that raises ``AssertionError`` with a message on
failure. ``run_checks`` runs them all and returns the failures; the
``selftest`` command exits 1 when that list is not empty.
"""
import logging
import math

import numpy as np
import torch
import torch.nn.functional as F
from torch.func import functional_call

from cail.agent import CAILAgent
from cail.data import TransitionBatch
from cail.data import ViewBatch
from cail.losses import actor_loss
from cail.losses import c_sup_con_loss
from cail.losses import cail_loss
from cail.losses import calibrated_terms
from cail.losses import combine_objective
from cail.losses import dis_loss
from cail.losses import disc_reward
from cail.losses import oracle_contrastive
from cail.losses import sup_con_loss
from cail.losses import td_loss
from cail.losses import td_target
from cail.losses import unsup_con_loss
from cail.nets import Actor
from cail.nets import CriticPair
from cail.nets import DiscHead
from cail.nets import build_nets
from cail.nets import ema_update
from cail.nets import obs_to_tensor
from cail.nets import parameter_digest

logger = logging.getLogger(__name__)

TINY_OBS_SHAPE = (3, 16, 16)
TINY_NETS = {
    'feature_dim': 8,
    'num_filters': 4,
    'num_layers': 2,
    'head_hidden': 8,
    'proj_dim': 4,
    'hidden_dim': 8,
}
GRADCHECK_TOLERANCE = {'eps': 1e-6, 'atol': 1e-8, 'rtol': 1e-5}


def _normalized(rng, rows, dim):
    z = torch.as_tensor(rng.normal(size=(rows, dim)), dtype=torch.float64)
    return F.normalize(z, dim=-1)


def _pairs(num_agent):
    return np.arange(num_agent) ^ 1


def check_contrastive_oracles(trials=50, tolerance=1e-6):
    rng = np.random.default_rng(20)
    tau, alpha = 0.1, 0.4
    for trial in range(trials):
        n = (2, 4, 8)[trial % 3]
        dim = (2, 16)[trial % 2]
        ua = _normalized(rng, 2 * n, dim)
        sa = _normalized(rng, 2 * n, dim)
        se = _normalized(rng, n, dim)
        expected = oracle_contrastive(ua, sa, se, _pairs(2 * n), alpha, tau)
        got = (
            unsup_con_loss(ua, tau).item(),
            sup_con_loss(sa, se, tau).item(),
            c_sup_con_loss(sa, se, alpha, tau).item(),
        )
        for label, value, reference in zip(('unsup', 'sup', 'c_sup'), got, expected):
            assert abs(value - reference) <= tolerance, (
                '{} loss off by {:.3g} (N={}, dim={})'.format(label, abs(value - reference), n, dim)
            )


def check_closed_forms():
    tau = 0.1
    for n in (2, 4, 8):
        z = torch.ones(3 * n, 4, dtype=torch.float64) / 2.0
        unsup = unsup_con_loss(z[:2 * n], tau).item()
        sup = sup_con_loss(z[:2 * n], z[2 * n:], tau).item()
        assert abs(unsup - math.log(2 * n - 1)) <= 1e-9, 'all-equal unsup loss is not log(2N-1)'
        assert abs(sup - math.log(3 * n - 1)) <= 1e-9, 'all-equal sup loss is not log(3N-1)'

    rng = np.random.default_rng(21)
    za, ze = _normalized(rng, 8, 6), _normalized(rng, 4, 6)
    sup_term, info_term = calibrated_terms(za, ze, tau)
    assert c_sup_con_loss(za, ze, 1.0, tau).item() == sup_term.item(), 'alpha=1 is not the expert-like term'
    assert c_sup_con_loss(za, ze, 0.0, tau).item() == info_term.item(), 'alpha=0 is not the agent-like term'
    for alpha in (0.1, 0.3, 0.5, 0.9):
        expected = alpha * sup_term.item() + (1 - alpha) * info_term.item()
        got = c_sup_con_loss(za, ze, alpha, tau).item()
        assert abs(got - expected) <= 1e-9, 'c_sup_con_loss is not affine in alpha'

    rewards = disc_reward(torch.tensor([0.0, 0.5, 1.0 - 1e-12], dtype=torch.float64))
    assert rewards[0].item() == 0.0, 'reward at p=0 must be 0'
    assert abs(rewards[1].item() - math.log(2.0)) <= 1e-12, 'reward at p=0.5 must be log 2'
    assert rewards[2].item() == 10.0, 'reward must clip at 10'

    online, target = CriticPair(4, 4).double(), CriticPair(4, 4).double()
    ema_update(target, online, 0.0)
    assert parameter_digest(target) == parameter_digest(online), 'EMA with rho=0 must copy'
    before = parameter_digest(target)
    ema_update(target, CriticPair(4, 4).double(), 1.0)
    assert parameter_digest(target) == before, 'EMA with rho=1 must be a no-op'


def _gradcheck(label, fn, *inputs):
    inputs = tuple(x.detach().clone().requires_grad_(True) for x in inputs)
    try:
        ok = torch.autograd.gradcheck(fn, inputs, raise_exception=False, **GRADCHECK_TOLERANCE)
    except RuntimeError as e:
        raise AssertionError('{} gradient check errored: {}'.format(label, e))
    assert ok, '{} analytic gradient disagrees with finite differences'.format(label)


def check_gradients():
    rng = np.random.default_rng(22)
    tau, alpha = 0.5, 0.4

    def randn(*shape):
        return torch.as_tensor(rng.normal(size=shape), dtype=torch.float64)

    def unit(z):
        return F.normalize(z, dim=-1)

    za, ze = randn(4, 3), randn(2, 3)
    _gradcheck('unsup_con_loss', lambda a: unsup_con_loss(unit(a), tau), za)
    _gradcheck('sup_con_loss', lambda a, e: sup_con_loss(unit(a), unit(e), tau), za, ze)
    _gradcheck('c_sup_con_loss', lambda a, e: c_sup_con_loss(unit(a), unit(e), alpha, tau), za, ze)

    torch.manual_seed(22)
    disc = DiscHead(4, 8).double()
    _gradcheck('dis_loss', lambda re, ra: dis_loss(disc(re), disc(ra)), randn(3, 4), randn(3, 4))

    critic = CriticPair(4, 4).double()
    actor = Actor(4, 4).double()
    target = randn(5)
    noise = 0.1 * randn(5)
    _gradcheck('td_loss', lambda r, a: td_loss(critic, r, a, target), randn(5, 4), 0.5 * randn(5))
    _gradcheck('actor_loss', lambda r: actor_loss(critic, actor, r, noise), randn(5, 4))


def _parameter_gradcheck(label, module, loss_fn):
    """Gradient check of ``loss_fn(call)`` with respect to every parameter of ``module``."""
    names = [name for name, _ in module.named_parameters()]

    def fn(*values):
        params = dict(zip(names, values))
        return loss_fn(lambda *args: functional_call(module, params, args))

    _gradcheck(label, fn, *(p for _, p in module.named_parameters()))


def check_parameter_gradients():
    rng = np.random.default_rng(31)

    def randn(*shape):
        return torch.as_tensor(rng.normal(size=shape), dtype=torch.float64)

    torch.manual_seed(31)
    disc = DiscHead(4, 8).double()
    expert_r, agent_r = randn(3, 4), randn(3, 4)
    _parameter_gradcheck('dis_loss parameters', disc, lambda d: dis_loss(d(expert_r), d(agent_r)))

    # two transitions, target built from frozen target critics
    critic, critic_target, actor = CriticPair(4, 4).double(), CriticPair(4, 4).double(), Actor(4, 4).double()
    r, next_r, action = randn(2, 4), randn(2, 4), 0.5 * randn(2)
    reward, done = torch.tensor([0.7, 0.2], dtype=torch.float64), torch.tensor([0.0, 1.0], dtype=torch.float64)
    target = td_target(critic_target, actor, next_r, reward, done, 0.99, 0.1 * randn(2))
    _parameter_gradcheck('td_loss parameters', critic, lambda q: td_loss(q, r, action, target))

    noise = 0.1 * randn(2)
    _parameter_gradcheck('actor_loss parameters', actor, lambda pi: actor_loss(critic, pi, r, noise))


def _tiny_agent(separate_disc_encoder=False, lambda1=1.0, lambda2=1.0, seed=23):
    nets = build_nets(TINY_OBS_SHAPE, seed, separate_disc_encoder=separate_disc_encoder, **TINY_NETS)
    agent = CAILAgent(
        nets, np.random.default_rng(seed), np.random.default_rng(seed + 1),
        lambda1=lambda1, lambda2=lambda2, disc_lr=1e-2, critic_lr=1e-2, actor_lr=1e-2,
    )
    return agent


def _tiny_batch(rng, n=4):
    obs = rng.integers(0, 256, size=(n,) + TINY_OBS_SHAPE, dtype=np.uint8)
    next_obs = np.concatenate([obs[:, 1:], rng.integers(0, 256, size=(n, 1) + TINY_OBS_SHAPE[1:], dtype=np.uint8)],
                              axis=1)
    batch = TransitionBatch(
        obs,
        rng.uniform(-1, 1, size=n).astype(np.float32),
        np.zeros(n, dtype=np.float32),
        next_obs,
        np.zeros(n, dtype=np.float32),
        np.arange(n),
    )
    expert = rng.integers(0, 256, size=(n,) + TINY_OBS_SHAPE, dtype=np.uint8)
    return batch, expert


def _digests(nets):
    modules = {
        'encoder': nets.encoder,
        'disc': nets.disc,
        'proj_unsup': nets.proj_unsup,
        'proj_sup': nets.proj_sup,
        'actor': nets.actor,
        'critic': nets.critic,
        'critic_target': nets.critic_target,
    }
    if nets.separate_disc_encoder:
        modules['disc_encoder'] = nets.disc_encoder
    return {name: parameter_digest(module) for name, module in modules.items()}


def _touched(nets, step):
    before = _digests(nets)
    step()
    after = _digests(nets)
    return {name for name in before if before[name] != after[name]}


def _expect_touched(label, touched, expected):
    assert touched == set(expected), '{} touched {} instead of {}'.format(
        label, sorted(touched), sorted(expected))


def check_gradient_routing():
    rng = np.random.default_rng(24)
    batch, expert = _tiny_batch(rng)

    agent = _tiny_agent()
    nets = agent.nets
    _expect_touched('discriminator step', _touched(nets, lambda: agent.update_discriminator(batch.obs, expert, 0.4)),
                    {'encoder', 'disc', 'proj_unsup', 'proj_sup'})
    _expect_touched('critic step', _touched(nets, lambda: agent.update_critic(batch)), {'encoder', 'critic'})
    _expect_touched('actor step', _touched(nets, lambda: agent.update_actor(batch)), {'actor'})
    _expect_touched('target step', _touched(nets, agent.update_targets), {'critic_target'})

    agent = _tiny_agent(separate_disc_encoder=True, lambda1=0.0, lambda2=0.0)
    nets = agent.nets
    _expect_touched('separate-encoder discriminator step',
                    _touched(nets, lambda: agent.update_discriminator(batch.obs, expert, 0.4)),
                    {'disc_encoder', 'disc'})
    _expect_touched('separate-encoder critic step', _touched(nets, lambda: agent.update_critic(batch)),
                    {'encoder', 'critic'})


def check_tabular_fixed_point(iterations=3000, lr=0.5, tolerance=0.05):
    """
    Two states visited by the expert with frequencies [0.8, 0.2] and by the
    agent with [0.2, 0.8]. The optimal discriminator is rho_e / (rho_e + rho_agent).
    """
    rho_expert = np.array([0.8, 0.2])
    rho_agent = np.array([0.2, 0.8])
    expert_states = torch.as_tensor(np.repeat([0, 1], (rho_expert * 10).astype(int)))
    agent_states = torch.as_tensor(np.repeat([0, 1], (rho_agent * 10).astype(int)))
    logits = torch.zeros(2, dtype=torch.float64, requires_grad=True)
    optimizer = torch.optim.SGD([logits], lr=lr)
    for _ in range(iterations):
        probs = torch.sigmoid(logits)
        loss = dis_loss(probs[expert_states], probs[agent_states])
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    found = torch.sigmoid(logits).detach().numpy()
    expected = rho_expert / (rho_expert + rho_agent)
    assert np.all(np.abs(found - expected) <= tolerance), (
        'discriminator converged to {} instead of {}'.format(np.round(found, 3).tolist(), expected.tolist())
    )


def check_cail_loss_identity(tolerance=1e-5):
    rng = np.random.default_rng(25)
    batch, expert = _tiny_batch(rng)
    nets = build_nets(TINY_OBS_SHAPE, 25, **TINY_NETS)
    agent_views = np.repeat(batch.obs, 2, axis=0)
    views = ViewBatch(agent_views, expert)
    for lambda1, lambda2 in ((1.0, 1.0), (0.5, 2.0), (0.0, 1.0), (1.0, 0.0)):
        total, parts = cail_loss(views, nets, 0.4, tau=0.1, lambda1=lambda1, lambda2=lambda2)
        expected = combine_objective(parts['L_dis'], parts['L_unsup'], parts['L_csup'], lambda1, lambda2)
        assert abs(total.item() - expected) <= tolerance * max(1.0, abs(expected)), (
            'total {:.6f} != L_dis + {}*L_unsup + {}*L_csup = {:.6f}'.format(
                total.item(), lambda1, lambda2, expected)
        )
    with torch.no_grad():
        r = nets.disc_encoder(obs_to_tensor(np.concatenate([agent_views, expert])))
        reference = unsup_con_loss(nets.project(r[:len(agent_views)], 'unsup'), 0.1).item()
    assert abs(parts['L_unsup'] - reference) <= tolerance, 'L_unsup is not computed on the agent views'


CHECKS = (
    ('contrastive oracles', check_contrastive_oracles),
    ('closed forms', check_closed_forms),
    ('gradient checks', check_gradients),
    ('parameter gradient checks', check_parameter_gradients),
    ('gradient routing', check_gradient_routing),
    ('tabular fixed point', check_tabular_fixed_point),
    ('cail_loss identity', check_cail_loss_identity),
)


def run_checks(checks=CHECKS):
    """Run every check; returns ``[(name, message), ...]`` for the failures."""
    failures = []
    for name, check in checks:
        try:
            check()
        except AssertionError as e:
            logger.error('selftest check=%r status=FAIL reason=%s', name, e)
            failures.append((name, str(e)))
        else:
            logger.info('selftest check=%r status=ok', name)
    return failures
