"""The base recommender: embedding projection, relation-aware gated
attention over interaction and knowledge neighbors, multi-layer
bi-interaction aggregation, and inner-product preference scoring with a
pairwise ranking loss.

Parameters are partitioned into three groups so the meta procedures can
update them selectively:
  * phi   - the embedding projection (W_e, b)
  * omega - attention machinery (per-layer relation projections W_r,
            per-layer relation embeddings for depth > 0, gate weights)
  * gamma - the per-layer aggregation weights (W1, W2)
plus the frozen base tables produced by pretraining.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .kge import xavier


@dataclass
class ModelConfig:
    base_dim: int = 64           # width of the pretrained base tables
    embed_dim: int = 64          # output of the projection layer
    layer_dims: tuple = (64, 32, 16)
    leaky_slope: float = 0.2

    @property
    def n_layers(self):
        return len(self.layer_dims)

    @property
    def input_dims(self):
        """Input width of each propagation layer."""
        return (self.embed_dim,) + tuple(self.layer_dims[:-1])

    @property
    def star_dim(self):
        return sum(self.layer_dims)


@dataclass
class ParamBundle:
    config: ModelConfig
    phi: dict
    omega: dict
    gamma: dict
    base_ent: np.ndarray = field(repr=False)   # frozen pretrained entities
    base_rel: np.ndarray = field(repr=False)   # frozen pretrained relations

    def copy(self):
        return ParamBundle(self.config,
                           {k: v.copy() for k, v in self.phi.items()},
                           {k: v.copy() for k, v in self.omega.items()},
                           {k: v.copy() for k, v in self.gamma.items()},
                           self.base_ent.copy(), self.base_rel.copy())

    def trainable(self):
        """Flat name -> array view over phi, omega and gamma."""
        out = {}
        for part, d in (("phi", self.phi), ("omega", self.omega),
                        ("gamma", self.gamma)):
            for k, v in d.items():
                out[f"{part}.{k}"] = v
        return out

    def partition(self, name):
        return {"phi": self.phi, "omega": self.omega, "gamma": self.gamma}[name]


def init_params(ckg, config, rng, kge_params=None):
    """Fresh parameter bundle; base tables and the first relation
    projection come from pretraining when available."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    d_p, d_e = config.base_dim, config.embed_dim
    if kge_params is not None:
        base_ent = kge_params.entities.copy()
        base_rel = kge_params.relations.copy()
    else:
        base_ent = xavier(rng, (ckg.n_entities, d_p))
        base_rel = xavier(rng, (ckg.n_relations, d_p))
    if base_ent.shape[1] != d_p:
        raise ValueError("pretrained width does not match config.base_dim")

    phi = {"W_e": xavier(rng, (d_e, d_p)), "b": np.zeros(d_e)}
    omega = {}
    gamma = {}
    dims = config.input_dims
    for l, d_in in enumerate(dims):
        if l == 0 and kge_params is not None \
                and kge_params.proj.shape[1:] == (d_in, d_in):
            omega[f"W_r_{l}"] = kge_params.proj.copy()
        else:
            omega[f"W_r_{l}"] = xavier(rng, (ckg.n_relations, d_in, d_in))
        omega[f"W_c_{l}"] = xavier(rng, (d_in, d_in))
        omega[f"W_k_{l}"] = xavier(rng, (d_in, d_in))
        if l > 0:
            omega[f"R_{l}"] = xavier(rng, (ckg.n_relations, d_in))
        gamma[f"W1_{l}"] = xavier(rng, (config.layer_dims[l], d_in))
        gamma[f"W2_{l}"] = xavier(rng, (config.layer_dims[l], d_in))
    return ParamBundle(config, phi, omega, gamma, base_ent, base_rel)


# -- single-entity helpers (oracle-friendly surfaces) ------------------------

def embed(params, entity_index):
    """Projected representation W_e c + b of one entity."""
    if entity_index >= len(params.base_ent):
        raise IndexError(f"entity {entity_index} out of range")
    return params.phi["W_e"] @ params.base_ent[entity_index] + params.phi["b"]


def attend(w_r, rel_emb, head_vec, tail_vecs, rel_ids):
    """Attention summary over one neighbor set.

    Scores are (W_r e_t)^T tanh(W_r e_h + e_r), softmax-normalized over
    the supplied set; the result is the weighted sum of tail embeddings.
    """
    tail_vecs = np.asarray(tail_vecs, dtype=np.float64)
    if tail_vecs.shape[0] == 0:
        raise ValueError("neighbor set must be nonempty")
    scores = np.array([
        (w_r[r] @ t) @ np.tanh(w_r[r] @ head_vec + rel_emb[r])
        for r, t in zip(rel_ids, tail_vecs)])
    scores -= scores.max()
    alpha = np.exp(scores) / np.exp(scores).sum()
    return alpha @ tail_vecs, alpha


def fuse_gate(w_c, w_k, e_c, e_k):
    """Sigmoid-gated convex combination of the two branch summaries."""
    g = 1.0 / (1.0 + np.exp(-(w_c @ e_c + w_k @ e_k)))
    return g * e_c + (1.0 - g) * e_k, g


# -- full-graph propagation --------------------------------------------------

class PropagationGraph:
    """Differentiable forward pass over every entity.

    Holds leaf nodes per parameter array (keys match
    ParamBundle.trainable, plus 'base_ent' / 'base_rel') so gradients for
    any partition can be read after a backward pass.
    """

    def __init__(self, params, ckg, keep_mask=None, param_overrides=None):
        cfg = params.config
        n = ckg.n_entities
        arrays = dict(params.trainable())
        if param_overrides:
            arrays.update(param_overrides)
        arrays["base_ent"] = params.base_ent
        arrays["base_rel"] = params.base_rel
        self.leaves = {k: ad.leaf(v) for k, v in arrays.items()}
        lv = self.leaves

        heads, rels, tails = ckg.heads, ckg.rels, ckg.tails
        keep = np.ones(len(heads), dtype=bool) if keep_mask is None else keep_mask
        branch_ids = []
        for branch_mask in (ckg.collab_mask, ckg.know_mask):
            idx = np.flatnonzero(branch_mask & keep)
            branch_ids.append((heads[idx], rels[idx], tails[idx]))

        e_cur = ad.add(ad.linear(lv["base_ent"], lv["phi.W_e"]), lv["phi.b"])
        rel0 = ad.add(ad.linear(lv["base_rel"], lv["phi.W_e"]), lv["phi.b"])

        self.layer_outputs = []
        self.attention = []       # per layer: (alpha_collab, alpha_know)
        for l in range(cfg.n_layers):
            r_table = rel0 if l == 0 else lv[f"omega.R_{l}"]
            w_r = lv[f"omega.W_r_{l}"]
            summaries = []
            alphas = []
            for h_ids, r_ids, t_ids in branch_ids:
                if len(h_ids) == 0:
                    summaries.append(ad.leaf(np.zeros((n, e_cur.shape[1]))))
                    alphas.append(None)
                    continue
                e_h = ad.gather(e_cur, h_ids)
                e_t = ad.gather(e_cur, t_ids)
                e_r = ad.gather(r_table, r_ids)
                p_h = ad.relation_project(w_r, r_ids, e_h)
                p_t = ad.relation_project(w_r, r_ids, e_t)
                scores = ad.rowwise_inner(p_t, ad.tanh(ad.add(p_h, e_r)))
                alpha = ad.segment_softmax(scores, h_ids, n)
                weighted = ad.mul(ad.reshape(alpha, (-1, 1)), e_t)
                summaries.append(ad.segment_sum(weighted, h_ids, n))
                alphas.append(alpha)
            self.attention.append(tuple(alphas))
            sum_c, sum_k = summaries
            gate = ad.sigmoid(ad.add(ad.linear(sum_c, lv[f"omega.W_c_{l}"]),
                                     ad.linear(sum_k, lv[f"omega.W_k_{l}"])))
            fused = ad.add(ad.mul(gate, sum_c),
                           ad.mul(ad.sub(1.0, gate), sum_k))
            slope = cfg.leaky_slope
            e_cur = ad.add(
                ad.leaky_relu(ad.linear(ad.add(e_cur, fused),
                                        lv[f"gamma.W1_{l}"]), slope),
                ad.leaky_relu(ad.linear(ad.mul(e_cur, fused),
                                        lv[f"gamma.W2_{l}"]), slope))
            self.layer_outputs.append(e_cur)
        self.e_star = ad.concat(self.layer_outputs, axis=1)

    def embeddings(self):
        """Concatenated multi-layer representation, one row per entity."""
        return self.e_star.value

    def grads(self, loss, keys):
        """Backward through `loss` and collect gradients for the given
        parameter keys (missing participation yields zeros)."""
        leaves = [self.leaves[k] for k in keys]
        gs = ad.grad(loss, leaves)
        return dict(zip(keys, gs))


def predict(e_star_value, user_entity, item_entity):
    """Inner product of the concatenated user and item representations."""
    return float(e_star_value[user_entity] @ e_star_value[item_entity])


def bpr_loss_node(e_star, ckg, triples):
    """Pairwise ranking loss graph over (user, pos item, neg item) triples.

    Ids are in user/item space; they are mapped to unified entity rows
    here.
    """
    arr = np.asarray([(ckg.user_entity(u), ckg.item_entity(i), ckg.item_entity(j))
                      for u, i, j in triples], dtype=np.int64)
    if arr.size == 0:
        raise ValueError("triples must be nonempty")
    e_u = ad.gather(e_star, arr[:, 0])
    e_i = ad.gather(e_star, arr[:, 1])
    e_j = ad.gather(e_star, arr[:, 2])
    diff = ad.sub(ad.rowwise_inner(e_u, e_i), ad.rowwise_inner(e_u, e_j))
    return ad.neg(ad.asum(ad.log_sigmoid(diff)))


def bpr_loss(params, ckg, triples, keep_mask=None):
    """Convenience scalar wrapper around a fresh propagation graph."""
    g = PropagationGraph(params, ckg, keep_mask=keep_mask)
    return float(bpr_loss_node(g.e_star, ckg, triples).value)
