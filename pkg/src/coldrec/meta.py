"""Per-user preference tasks and the two cooperating update rules:
task-local gradient steps on the aggregation weights, and global steps
that move the embedding/attention weights along the knowledge-loss
gradient while the aggregation weights follow accumulated query-set
gradients. Also the post-training adaptation to a new scenario.

All meta-gradients are first order: a locally adapted parameter set is
treated as a constant offset when the query gradient is taken.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import kge
from .model import PropagationGraph, bpr_loss_node
from .optim import sgd_step


class InsufficientInteractionsError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class MetaConfig:
    local_lr: float = 0.01       # v
    global_lr: float = 0.0001    # k
    local_updates: int = 1       # m
    task_batch: int = 8
    kg_batch: int = 2048
    query_size: int = 10
    adapt_steps: int = 1


@dataclass
class Task:
    """One user's preference-learning task: disjoint support and query
    positives plus the (u, i, j) ranking triples built from them."""
    user: int
    support_pos: np.ndarray
    query_pos: np.ndarray
    support: list
    query: list
    _mask_cache: dict = field(default_factory=dict, repr=False)

    def fresh_support(self, ckg, rng):
        negs = ckg.sample_cf_negatives(self.user, len(self.support_pos), rng)
        return [(self.user, int(i), int(j))
                for i, j in zip(self.support_pos, negs)]

    def fresh_query(self, ckg, rng):
        negs = ckg.sample_cf_negatives(self.user, len(self.query_pos), rng)
        return [(self.user, int(i), int(j))
                for i, j in zip(self.query_pos, negs)]

    def keep_mask(self, ckg):
        """Triple mask hiding this user's query edges during propagation."""
        key = id(ckg)
        if key not in self._mask_cache:
            pairs = [(self.user, int(i)) for i in self.query_pos]
            self._mask_cache[key] = ckg.triple_keep_mask(pairs)
        return self._mask_cache[key]


def make_tasks(ckg, users, query_size, rng):
    """Split each user's positives into a uniform query sample and a
    support remainder, pairing every positive with one fresh negative."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    tasks = []
    for user in users:
        pos = ckg.user_pos.get(user)
        if pos is None or len(pos) <= query_size:
            have = 0 if pos is None else len(pos)
            raise InsufficientInteractionsError(
                f"user {user} has {have} positives; need > {query_size}")
        q_idx = rng.choice(len(pos), size=query_size, replace=False)
        q_mask = np.zeros(len(pos), dtype=bool)
        q_mask[q_idx] = True
        query_pos = np.sort(pos[q_mask])
        support_pos = np.sort(pos[~q_mask])
        task = Task(user=int(user), support_pos=support_pos,
                    query_pos=query_pos, support=[], query=[])
        task.support = task.fresh_support(ckg, rng)
        task.query = task.fresh_query(ckg, rng)
        tasks.append(task)
    return tasks


def tasks_from_split(pool, support_pool=None):
    """Evaluation tasks from a precomputed item split: `pool` maps user
    -> query items, `support_pool` maps user -> support items (empty
    support when absent, e.g. non-cold users whose support lives in the
    training graph)."""
    tasks = []
    for user in sorted(pool):
        sup = np.array(sorted(support_pool.get(user, [])), dtype=np.int64) \
            if support_pool else np.empty(0, dtype=np.int64)
        tasks.append(Task(user=int(user), support_pos=sup,
                          query_pos=np.array(sorted(pool[user]), dtype=np.int64),
                          support=[], query=[]))
    return tasks


def _check_finite(grads, where):
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for {k} in {where}")


def local_update(params, ckg, task, lr, rng, m=1, keep_mask=None):
    """m gradient steps on the aggregation weights using the support
    loss; embedding and attention weights are held fixed. Returns the
    adapted aggregation arrays keyed like ParamBundle.trainable()."""
    gamma_keys = [f"gamma.{k}" for k in params.gamma]
    adapted = {k: params.gamma[k.split(".", 1)[1]].copy() for k in gamma_keys}
    if keep_mask is None:
        keep_mask = task.keep_mask(ckg)
    for _ in range(m):
        triples = task.fresh_support(ckg, rng)
        graph = PropagationGraph(params, ckg, keep_mask=keep_mask,
                                 param_overrides=adapted)
        loss = bpr_loss_node(graph.e_star, ckg, triples)
        grads = graph.grads(loss, gamma_keys)
        _check_finite(grads, f"local update of task {task.user}")
        for k in gamma_keys:
            adapted[k] = adapted[k] - lr * grads[k]
    return adapted


def query_gamma_grads(params, ckg, task, adapted_gamma, rng, keep_mask=None):
    """Query-loss gradient w.r.t. the aggregation weights, evaluated at
    the locally adapted point (first-order rule)."""
    gamma_keys = [f"gamma.{k}" for k in params.gamma]
    if keep_mask is None:
        keep_mask = task.keep_mask(ckg)
    graph = PropagationGraph(params, ckg, keep_mask=keep_mask,
                             param_overrides=adapted_gamma)
    triples = task.fresh_query(ckg, rng)
    loss = bpr_loss_node(graph.e_star, ckg, triples)
    grads = graph.grads(loss, gamma_keys)
    _check_finite(grads, f"query gradient of task {task.user}")
    return grads, float(loss.value) / len(triples)


def sample_kg_quads(ckg, count, rng):
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    count = min(count, ckg.n_triples)
    idx = rng.choice(ckg.n_triples, size=count, replace=False)
    quads = []
    for k in idx:
        h, r, t = int(ckg.heads[k]), int(ckg.rels[k]), int(ckg.tails[k])
        quads.append((h, r, t, ckg.sample_kg_negative((h, r, t), rng)[2]))
    return quads


def kg_loss_grads(params, quads):
    """Knowledge-loss gradients for the embedding and attention
    partitions. Entity/relation vectors are the projection-layer outputs
    and the projection into relation space is the first attention
    layer's relation matrix, so only phi and omega participate."""
    lv = {k: ad.leaf(v) for k, v in
          {"phi.W_e": params.phi["W_e"], "phi.b": params.phi["b"],
           "omega.W_r_0": params.omega["W_r_0"],
           "base_ent": params.base_ent, "base_rel": params.base_rel}.items()}
    ent = ad.add(ad.linear(lv["base_ent"], lv["phi.W_e"]), lv["phi.b"])
    rel = ad.add(ad.linear(lv["base_rel"], lv["phi.W_e"]), lv["phi.b"])
    loss = kge.kg_loss_node(ent, rel, lv["omega.W_r_0"], quads)
    keys = ["phi.W_e", "phi.b", "omega.W_r_0"]
    gs = ad.grad(loss, [lv[k] for k in keys])
    grads = dict(zip(keys, gs))
    _check_finite(grads, "knowledge loss")
    return grads, float(loss.value) / len(quads)


def global_update(params, ckg, tasks, adapted_gammas, kg_quads, optimizer, rng,
                  use_kg=True):
    """One cross-task step: phi/omega follow the knowledge-loss gradient,
    gamma follows the sum of per-task query gradients taken at the
    adapted points. Updates `params` in place through `optimizer`.
    `use_kg=False` skips the knowledge step entirely (ablation).

    Returns (per-task query losses, mean kg loss).
    """
    gamma_keys = [f"gamma.{k}" for k in params.gamma]
    total = {k: np.zeros_like(params.gamma[k.split(".", 1)[1]])
             for k in gamma_keys}
    q_losses = []
    for task, adapted in zip(tasks, adapted_gammas):
        grads, q_loss = query_gamma_grads(params, ckg, task, adapted, rng)
        q_losses.append(q_loss)
        for k in gamma_keys:
            total[k] += grads[k]
    all_grads = dict(total)
    kg_loss_val = 0.0
    if use_kg:
        kg_grads, kg_loss_val = kg_loss_grads(params, kg_quads)
        all_grads.update(kg_grads)
    optimizer.step(params.trainable(), all_grads)
    return q_losses, kg_loss_val


def adapt(params, ckg, tasks, steps, lr, rng, kg_batch=256, mode="finetune",
          local_m=1, freeze=()):
    """Fit the trained parameters to a new scenario's support sets.

    `finetune` (default): joint gradient descent on the support ranking
    loss plus the knowledge loss, over all trainable partitions except
    those whose names start with a prefix in `freeze`; `kg_batch=0`
    drops the knowledge term.
    `local`: per-task local updates of the aggregation weights only;
    returns a dict user -> adapted gamma arrays alongside the unchanged
    shared parameters.

    The graph passed in must already contain the support edges (and no
    query edges) of the new scenario.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    params = params.copy()
    if mode == "local":
        per_task = {}
        for task in tasks:
            if len(task.support_pos) == 0:
                continue
            per_task[task.user] = local_update(
                params, ckg, task, lr, rng, m=steps * local_m,
                keep_mask=np.ones(ckg.n_triples, dtype=bool))
        return params, per_task
    if mode != "finetune":
        raise ValueError(f"unknown adaptation mode: {mode}")
    keys = [k for k in params.trainable()
            if not any(k.startswith(f) for f in freeze)]
    for _ in range(steps):
        graph = PropagationGraph(params, ckg)
        triples = []
        for task in tasks:
            if len(task.support_pos):
                triples.extend(task.fresh_support(ckg, rng))
        loss = bpr_loss_node(graph.e_star, ckg, triples)
        grads = graph.grads(loss, keys)
        if kg_batch:
            kg_grads, _ = kg_loss_grads(
                params, sample_kg_quads(ckg, kg_batch, rng))
            for k, g in kg_grads.items():
                if k in grads:
                    grads[k] = grads[k] + g
        _check_finite(grads, "adaptation")
        sgd_step(params.trainable(), grads, lr)
    return params, None
