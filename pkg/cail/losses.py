"""
Training objectives.

Contrastive losses take L2-normalised projections. Agent views are
interleaved: rows ``2i`` and ``2i + 1`` are the two views of one agent state,
so the sibling of row ``i`` is ``i ^ 1``. ``oracle_*`` functions recompute the
same quantities with plain loops in double precision and exist to check the
batched versions.
"""
import math

import numpy as np
import torch
from django.core.exceptions import ImproperlyConfigured

from cail.data import BatchTooSmall
from cail.nets import obs_to_tensor

REWARD_CLIP = 10.0


class DegenerateInput(ValueError):
    pass


def _check_tau(tau):
    if tau <= 0:
        raise ImproperlyConfigured('Temperature must be positive, got %r' % (tau,))


def cosine_sim(u, w):
    u = torch.as_tensor(u)
    w = torch.as_tensor(w)
    nu = torch.linalg.vector_norm(u)
    nw = torch.linalg.vector_norm(w)
    if nu == 0 or nw == 0:
        raise DegenerateInput('Cosine similarity of a zero vector')
    return torch.dot(u, w) / (nu * nw)


def info_nce(anchor, positive, contrast_set, tau):
    """
    ``-log exp(sim(anchor, positive)/tau) / sum_j exp(sim(anchor, j)/tau)``
    over the rows of ``contrast_set``.
    """
    _check_tau(tau)
    anchor = torch.as_tensor(anchor)
    contrast_set = torch.as_tensor(contrast_set)
    if len(contrast_set) < 1:
        raise BatchTooSmall('InfoNCE needs a non-empty contrast set')
    sims = torch.stack([cosine_sim(anchor, c) for c in contrast_set]) / tau
    return torch.logsumexp(sims, dim=0) - cosine_sim(anchor, positive) / tau


def sup_single(anchor, positive_set, contrast_set, tau):
    """Mean of ``info_nce`` over each member of ``positive_set``."""
    if len(positive_set) < 1:
        raise BatchTooSmall('Supervised contrastive loss needs at least one positive')
    terms = [info_nce(anchor, positive, contrast_set, tau) for positive in positive_set]
    return torch.stack(terms).mean()


def _masked_logits(z, tau):
    logits = z @ z.T / tau
    eye = torch.eye(len(z), dtype=torch.bool, device=z.device)
    return logits.masked_fill(eye, float('-inf')), eye


def _sibling_logits(logits, num_agent):
    rows = torch.arange(num_agent, device=logits.device)
    return logits[rows, rows ^ 1]


def unsup_con_loss(z_agent, tau):
    """Mean InfoNCE over all 2N agent views; experts take no part."""
    _check_tau(tau)
    if len(z_agent) < 2 or len(z_agent) % 2:
        raise BatchTooSmall('Need an even number (>= 2) of agent views, got %d' % len(z_agent))
    logits, _ = _masked_logits(z_agent, tau)
    lse = torch.logsumexp(logits, dim=1)
    return (lse - _sibling_logits(logits, len(z_agent))).mean()


def _mean_over_positives(logits, lse, positive_mask):
    # masked_fill keeps -inf diagonal entries out of the sum
    positive_logits = logits.masked_fill(~positive_mask, 0.0)
    counts = positive_mask.sum(dim=1)
    return lse - positive_logits.sum(dim=1) / counts


def sup_con_loss(z_agent, z_expert, tau):
    """
    Mean over expert anchors; positives are the other expert views, the
    contrast set is every view but the anchor.
    """
    _check_tau(tau)
    n = len(z_expert)
    if n < 2:
        raise BatchTooSmall('Supervised contrastive loss needs N >= 2 expert views, got %d' % n)
    num_agent = len(z_agent)
    logits, eye = _masked_logits(torch.cat([z_agent, z_expert]), tau)
    lse = torch.logsumexp(logits, dim=1)
    is_expert = torch.zeros(len(logits), dtype=torch.bool, device=logits.device)
    is_expert[num_agent:] = True
    positive_mask = is_expert[:, None] & is_expert[None, :] & ~eye
    per_anchor = _mean_over_positives(logits, lse, positive_mask)
    return per_anchor[num_agent:].mean()


def calibrated_terms(z_agent, z_expert, tau):
    """
    The two endpoint losses of the calibrated objective, each averaged over
    the 2N agent anchors: (expert-like term, agent-like term).
    """
    _check_tau(tau)
    if len(z_agent) < 2 or len(z_agent) % 2:
        raise BatchTooSmall('Need an even number (>= 2) of agent views, got %d' % len(z_agent))
    num_agent = len(z_agent)
    logits, _ = _masked_logits(torch.cat([z_agent, z_expert]), tau)
    logits = logits[:num_agent]
    lse = torch.logsumexp(logits, dim=1)
    total = logits.shape[1]
    rows = torch.arange(num_agent, device=logits.device)
    positive_mask = torch.zeros(num_agent, total, dtype=torch.bool, device=logits.device)
    positive_mask[:, num_agent:] = True
    positive_mask[rows, rows ^ 1] = True
    sup_term = _mean_over_positives(logits, lse, positive_mask).mean()
    info_term = (lse - _sibling_logits(logits, num_agent)).mean()
    return sup_term, info_term


def c_sup_con_loss(z_agent, z_expert, alpha, tau):
    if not 0.0 <= alpha <= 1.0:
        raise ImproperlyConfigured('alpha must lie in [0, 1], got %r' % (alpha,))
    sup_term, info_term = calibrated_terms(z_agent, z_expert, tau)
    return alpha * sup_term + (1.0 - alpha) * info_term


def dis_loss(expert_probs, agent_probs):
    return (-torch.log(expert_probs) - torch.log1p(-agent_probs)).mean()


def combine_objective(l_dis, l_unsup, l_csup, lambda1, lambda2):
    return l_dis + lambda1 * l_unsup + lambda2 * l_csup


def cail_loss(views, nets, alpha, tau=0.1, lambda1=1.0, lambda2=1.0, calibrated=True):
    """
    Discriminator objective on one ViewBatch.

    Returns ``(total, components)``. A contrastive term whose weight is zero
    is still computed for logging but kept out of the graph, so its head
    receives no gradient. With ``calibrated=False`` the plain supervised
    contrastive loss stands in for the calibrated one.
    """
    num_agent = len(views.agent_views)
    obs = torch.cat([obs_to_tensor(views.agent_views), obs_to_tensor(views.expert_views)])
    r = nets.disc_encoder(obs)
    r_agent, r_expert = r[:num_agent], r[num_agent:]
    l_dis = dis_loss(nets.discriminate(r_expert), nets.discriminate(r_agent[0::2]))

    def contrastive(weight, compute):
        if weight > 0:
            return compute(r_agent, r_expert)
        with torch.no_grad():
            return compute(r_agent.detach(), r_expert.detach())

    l_unsup = contrastive(lambda1, lambda ra, re: unsup_con_loss(nets.project(ra, 'unsup'), tau))

    def supervised(ra, re):
        za, ze = nets.project(ra, 'sup'), nets.project(re, 'sup')
        if calibrated:
            return c_sup_con_loss(za, ze, alpha, tau)
        return sup_con_loss(za, ze, tau)

    l_csup = contrastive(lambda2, supervised)

    total = l_dis
    if lambda1 > 0:
        total = total + lambda1 * l_unsup
    if lambda2 > 0:
        total = total + lambda2 * l_csup
    components = {
        'L_dis': l_dis.item(),
        'L_unsup': l_unsup.item(),
        'L_csup': l_csup.item(),
    }
    return total, components


def disc_reward(p):
    """``-log(1 - p)`` clipped to [0, 10]."""
    p = torch.as_tensor(p)
    return (-torch.log1p(-p)).clamp(0.0, REWARD_CLIP)


def clipped_noise(shape, sigma, clip, rng, dtype=torch.float32):
    """Gaussian noise with std ``sigma`` clipped to [-clip, clip], drawn from ``rng``."""
    if sigma <= 0:
        return torch.zeros(shape, dtype=dtype)
    noise = np.clip(rng.normal(0.0, sigma, size=shape), -clip, clip)
    return torch.as_tensor(noise, dtype=dtype)


def td_target(critic_target, actor, next_repr, reward, done, gamma, noise):
    """``r + gamma (1 - d) min_i Qbar_i(v', a')`` with ``a' = pi(v') + noise``; no gradient."""
    with torch.no_grad():
        next_action = (actor(next_repr) + noise).clamp(-1.0, 1.0)
        q1, q2 = critic_target(next_repr, next_action)
        return reward + gamma * (1.0 - done) * torch.min(q1, q2)


def td_loss(critic, repr_, action, target):
    """Squared TD error averaged over the batch and over both critics."""
    q1, q2 = critic(repr_, action)
    return 0.5 * (((q1 - target) ** 2).mean() + ((q2 - target) ** 2).mean())


def actor_loss(critic, actor, repr_, noise):
    """``-mean min_i Q_i(v, pi(v) + noise)``; pass a detached ``repr_``."""
    q1, q2 = critic(repr_, actor(repr_) + noise)
    return -torch.min(q1, q2).mean()


def bc_loss(predicted, expert_actions):
    return ((predicted - expert_actions) ** 2).mean()


def _oracle_cos(u, w):
    dot = math.fsum(a * b for a, b in zip(u, w))
    nu = math.sqrt(math.fsum(a * a for a in u))
    nw = math.sqrt(math.fsum(b * b for b in w))
    if nu == 0 or nw == 0:
        raise DegenerateInput('Cosine similarity of a zero vector')
    return dot / (nu * nw)


def oracle_info_nce(anchor, positive, contrast_set, tau):
    denominator = math.fsum(math.exp(_oracle_cos(anchor, c) / tau) for c in contrast_set)
    return -math.log(math.exp(_oracle_cos(anchor, positive) / tau) / denominator)


def oracle_contrastive(unsup_agent, sup_agent, sup_expert, pairs, alpha, tau):
    """
    Reference values ``(L_UnSupCon, L_SupCon, L_C-SupCon)`` from plain nested
    loops. ``unsup_agent`` and ``sup_agent`` are the 2N agent embeddings under
    each head, ``sup_expert`` the N expert embeddings, ``pairs[i]`` the index
    of the sibling of agent view ``i``.
    """
    ua = [[float(x) for x in v] for v in unsup_agent]
    sa = [[float(x) for x in v] for v in sup_agent]
    se = [[float(x) for x in v] for v in sup_expert]
    num_agent = len(sa)

    unsup_terms = []
    for i in range(num_agent):
        contrast = [ua[j] for j in range(num_agent) if j != i]
        unsup_terms.append(oracle_info_nce(ua[i], ua[pairs[i]], contrast, tau))
    l_unsup = math.fsum(unsup_terms) / num_agent

    views = sa + se
    sup_terms = []
    for k in range(len(se)):
        anchor = num_agent + k
        contrast = [views[j] for j in range(len(views)) if j != anchor]
        positives = [views[num_agent + m] for m in range(len(se)) if m != k]
        per_positive = [oracle_info_nce(views[anchor], p, contrast, tau) for p in positives]
        sup_terms.append(math.fsum(per_positive) / len(per_positive))
    l_sup = math.fsum(sup_terms) / len(se)

    calibrated = []
    for i in range(num_agent):
        contrast = [views[j] for j in range(len(views)) if j != i]
        positives = se + [sa[pairs[i]]]
        per_positive = [oracle_info_nce(sa[i], p, contrast, tau) for p in positives]
        expert_like = math.fsum(per_positive) / len(per_positive)
        agent_like = oracle_info_nce(sa[i], sa[pairs[i]], contrast, tau)
        calibrated.append(alpha * expert_like + (1 - alpha) * agent_like)
    l_csup = math.fsum(calibrated) / num_agent

    return l_unsup, l_sup, l_csup
