"""Translation-based triplet scoring in relation-projected space, with a
pairwise logistic ranking loss and an SGD pretraining loop used to
initialize the recommender's embedding tables.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass
class KgeConfig:
    dim: int = 64                # entity embedding size d_e
    rel_dim: int = None          # relation space size d_r; defaults to dim
    lr: float = 0.0001
    epochs: int = 200
    batch_size: int = 2048
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if self.rel_dim is None:
            self.rel_dim = self.dim


@dataclass
class KgeParams:
    entities: np.ndarray    # (n_entities, d_e)
    relations: np.ndarray   # (n_relations, d_r)
    proj: np.ndarray        # (n_relations, d_r, d_e)

    def copy(self):
        return KgeParams(self.entities.copy(), self.relations.copy(),
                         self.proj.copy())


def xavier(rng, shape):
    fan_in, fan_out = shape[-1], shape[-2] if len(shape) > 1 else shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(n_entities, n_relations, config, rng):
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    return KgeParams(
        entities=xavier(rng, (n_entities, config.dim)),
        relations=xavier(rng, (n_relations, config.rel_dim)),
        proj=xavier(rng, (n_relations, config.rel_dim, config.dim)),
    )


def energy(params, triple):
    """Squared distance between the projected head translated by the
    relation vector and the projected tail; lower means more plausible."""
    h, r, t = triple
    if h >= len(params.entities) or t >= len(params.entities) \
            or r >= len(params.relations):
        raise IndexError(f"triple ({h}, {r}, {t}) out of range")
    w = params.proj[r]
    diff = w @ params.entities[h] + params.relations[r] - w @ params.entities[t]
    return float(diff @ diff)


def _energy_nodes(ent, rel, proj, quads_arr):
    """Batched energy of true and corrupted triples as autodiff nodes."""
    h, r, t, tn = (quads_arr[:, k] for k in range(4))
    eh = ad.gather(ent, h)
    er = ad.gather(rel, r)
    et = ad.gather(ent, t)
    etn = ad.gather(ent, tn)
    ph = ad.relation_project(proj, r, eh)
    pt = ad.relation_project(proj, r, et)
    ptn = ad.relation_project(proj, r, etn)
    d_true = ad.add(ad.sub(ph, pt), er)
    d_neg = ad.add(ad.sub(ph, ptn), er)
    s_true = ad.asum(ad.mul(d_true, d_true), axis=1)
    s_neg = ad.asum(ad.mul(d_neg, d_neg), axis=1)
    return s_true, s_neg


def kg_loss_node(ent, rel, proj, quads):
    """Loss graph sum(-ln sigmoid(s(h,r,t') - s(h,r,t))) over the quads."""
    quads_arr = np.asarray(quads, dtype=np.int64)
    if quads_arr.size == 0:
        raise ValueError("quads must be nonempty")
    s_true, s_neg = _energy_nodes(ent, rel, proj, quads_arr)
    return ad.neg(ad.asum(ad.log_sigmoid(ad.sub(s_neg, s_true))))


def kg_loss(params, quads):
    """Scalar pairwise ranking loss over (h, r, t, t') quadruples."""
    ent = ad.leaf(params.entities)
    rel = ad.leaf(params.relations)
    proj = ad.leaf(params.proj)
    return float(kg_loss_node(ent, rel, proj, quads).value)


def mean_energy_margin(params, triples, ckg, rng):
    """Mean energy of corrupted minus true triples; positive is good."""
    true_e = [energy(params, t) for t in triples]
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    neg_e = [energy(params, ckg.sample_kg_negative(t, rng)) for t in triples]
    return float(np.mean(neg_e) - np.mean(true_e))


def pretrain(ckg, config, seed=0, log=None):
    """SGD on the ranking loss over all CKG triples, one corrupted tail
    per positive per step; entity rows are renormalized to unit length
    after every step. Returns the trained tables and the holdout triples.
    """
    rng = np.random.default_rng(seed)
    params = init_params(ckg.n_entities, ckg.n_relations, config, rng)

    triples = list(zip(ckg.heads.tolist(), ckg.rels.tolist(), ckg.tails.tolist()))
    n_hold = int(len(triples) * config.holdout_fraction)
    perm = rng.permutation(len(triples))
    holdout = [triples[k] for k in perm[:n_hold]]
    train = [triples[k] for k in perm[n_hold:]]
    if not train:
        raise ValueError("graph has no training triples")

    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        for lo in range(0, len(order), config.batch_size):
            batch = [train[k] for k in order[lo:lo + config.batch_size]]
            quads = [(h, r, t, ckg.sample_kg_negative((h, r, t), rng)[2])
                     for h, r, t in batch]
            ent = ad.leaf(params.entities)
            rel = ad.leaf(params.relations)
            proj = ad.leaf(params.proj)
            loss = kg_loss_node(ent, rel, proj, quads)
            if not np.isfinite(loss.value):
                raise DivergenceError(f"pretraining loss diverged at epoch {epoch}")
            g_ent, g_rel, g_proj = ad.grad(loss, [ent, rel, proj])
            params.entities -= config.lr * g_ent
            params.relations -= config.lr * g_rel
            params.proj -= config.lr * g_proj
            norms = np.linalg.norm(params.entities, axis=1, keepdims=True)
            params.entities /= np.maximum(norms, 1e-12)
            if log is not None:
                log.append(float(loss.value) / len(quads))
    return params, holdout
