"""Desk-scale synthetic benchmark harness.

Shared by the experiment scripts and the acceptance tests: dataset
recipes, a meta-training run, a joint (non-meta) run with the same
gradient budget, and cold-start / held-out evaluation helpers. Learning
rates here are tuned for the 200-user scale and are larger than the
ones a full-size dataset would use.
"""

import numpy as np

from . import graph, kge, meta, synth
from .config import RunConfig
from .evaluation import evaluate_tasks
from .meta import adapt, make_tasks, sample_kg_quads
from .model import ModelConfig, PropagationGraph, bpr_loss_node, init_params
from .optim import Adam
from .train import MetaTrainer


def benchmark_config(**overrides):
    """The tuned desk-scale configuration; keyword overrides applied."""
    cfg = RunConfig(base_dim=8, embed_dim=8, layer_dims=(8, 4),
                    kge_lr=0.01, kge_epochs=5, kge_batch=512,
                    local_lr=0.01, global_lr=0.001, meta_steps=30,
                    task_batch=8, kg_batch=128, query_size=5,
                    use_scheduler=False, adapt_steps=1, adapt_lr=0.005,
                    adapt_kg_batch=64, top_k=20)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def benchmark_data(seed, n_users=200, noise=0.0):
    """The 200-user benchmark dataset (criterion-style recipe)."""
    spec = synth.SyntheticSpec(n_users=n_users, n_items=100,
                               n_attr_entities=30, latent_dim=8,
                               train_interactions=16, cold_interactions=8,
                               query_size=5, noise_fraction=noise,
                               affinity_sharpness=8.0)
    return spec, synth.generate(spec, seed=seed)


def noisy_benchmark_data(seed, noise=0.3):
    """Variant shaped for scheduler experiments: nearly all-old catalog
    and sharp affinities, so label-shuffled users' query losses separate
    from clean users' while their updates still hurt training."""
    spec = synth.SyntheticSpec(n_users=200, n_items=100, n_attr_entities=30,
                               latent_dim=8, train_interactions=20,
                               cold_interactions=10, query_size=8,
                               noise_fraction=noise, affinity_sharpness=16.0,
                               user_cut=0.1, item_cut=0.1,
                               ic_user_fraction=0.0, ncs_holdout=0.0)
    return spec, synth.generate(spec, seed=seed)


def train_graph(data):
    """CKG over the training split (all train pairs plus the KG)."""
    by_user = {}
    for u, i in data.split.train_pairs:
        by_user.setdefault(u, []).append(i)
    inter = [(u, i) for u, its in sorted(by_user.items()) for i in its]
    spec = data.spec
    return graph.build(inter, data.kg_triples,
                       n_users=spec.n_users, n_items=spec.n_items,
                       n_kg_entities=data.n_kg_entities,
                       n_kg_relations=spec.n_kg_relations)


def pretrain_base(ckg, cfg, seed):
    k_cfg = kge.KgeConfig(dim=cfg.base_dim, lr=cfg.kge_lr,
                          epochs=cfg.kge_epochs, batch_size=cfg.kge_batch)
    params, _ = kge.pretrain(ckg, k_cfg, seed=seed)
    return params


def model_config(cfg):
    return ModelConfig(base_dim=cfg.base_dim, embed_dim=cfg.embed_dim,
                       layer_dims=tuple(cfg.layer_dims))


def meta_run(ckg, kge_params, cfg, seed, tasks=None):
    """Meta-train from a pretrained base; returns (params, trainer)."""
    params = init_params(ckg, model_config(cfg), np.random.default_rng(seed),
                         kge_params=kge_params)
    if tasks is None:
        users = [u for u, p in ckg.user_pos.items() if len(p) > cfg.query_size]
        tasks = make_tasks(ckg, users, cfg.query_size,
                           np.random.default_rng(seed + 1))
    trainer = MetaTrainer(params, ckg, tasks, cfg, seed=seed + 2)
    trainer.run(cfg.meta_steps)
    return params, trainer


def joint_run(ckg, kge_params, cfg, seed):
    """Non-meta baseline: joint Adam training with the same step count
    and per-step data volume (batch tasks' support+query triples as one
    ranking loss plus a KG batch)."""
    params = init_params(ckg, model_config(cfg), np.random.default_rng(seed),
                         kge_params=kge_params)
    users = [u for u, p in ckg.user_pos.items() if len(p) > cfg.query_size]
    tasks = make_tasks(ckg, users, cfg.query_size,
                       np.random.default_rng(seed + 1))
    rng = np.random.default_rng(seed + 2)
    opt = Adam(cfg.global_lr)
    for _ in range(cfg.meta_steps):
        batch_idx = rng.choice(len(tasks), size=cfg.task_batch, replace=False)
        triples = []
        for k in batch_idx:
            t = tasks[k]
            triples += t.fresh_support(ckg, rng) + t.fresh_query(ckg, rng)
        g = PropagationGraph(params, ckg)
        loss = bpr_loss_node(g.e_star, ckg, triples)
        grads = g.grads(loss, list(params.trainable()))
        kg_grads, _ = meta.kg_loss_grads(
            params, sample_kg_quads(ckg, cfg.kg_batch, rng))
        for k2, gv in kg_grads.items():
            grads[k2] = grads[k2] + gv
        opt.step(params.trainable(), grads)
    return params


def eval_scenario(params, ckg, data, cfg, seed, scenario="uic",
                  adapt_steps=None, freeze=()):
    """Adapt on the scenario pool's support half and report mean
    Recall@K on the query half."""
    pool = data.split.pools[scenario]
    rng = np.random.default_rng(seed)
    q_pool, s_pool = {}, {}
    for u in sorted(pool):
        items = np.array(sorted(pool[u]))
        if len(items) <= cfg.query_size:
            continue
        qi = rng.choice(len(items), cfg.query_size, replace=False)
        m = np.zeros(len(items), dtype=bool)
        m[qi] = True
        q_pool[u] = items[m].tolist()
        s_pool[u] = items[~m].tolist()
    pairs = [(u, i) for u in sorted(s_pool) for i in s_pool[u]]
    eckg = ckg.with_extra_interactions(pairs)
    tasks = meta.tasks_from_split(q_pool, s_pool)
    steps = cfg.adapt_steps if adapt_steps is None else adapt_steps
    per_task = None
    if steps:
        params, per_task = adapt(params, eckg, tasks, steps, cfg.adapt_lr,
                                 np.random.default_rng(seed + 1),
                                 kg_batch=cfg.adapt_kg_batch,
                                 mode=cfg.adapt_mode, freeze=freeze)
    train_pos = {u: p.tolist() for u, p in ckg.user_pos.items()}
    rep = evaluate_tasks(params, eckg, tasks, cfg.top_k, train_pos=train_pos,
                         per_task_gamma=per_task)
    return rep.mean_recall


def clean_task_recall(params, ckg, tasks, noisy_users, cfg, seed):
    """Held-out Recall@K on the clean tasks' query items (the queries
    were removed from the graph by heldout_task_graph)."""
    clean = [t for t in tasks if t.user not in noisy_users]
    p2, per_task = adapt(params, ckg, clean, cfg.adapt_steps, cfg.adapt_lr,
                         np.random.default_rng(seed),
                         kg_batch=cfg.adapt_kg_batch, mode=cfg.adapt_mode)
    train_pos = {u: p.tolist() for u, p in ckg.user_pos.items()}
    rep = evaluate_tasks(p2, ckg, clean, cfg.top_k, train_pos=train_pos,
                         per_task_gamma=per_task)
    return rep.mean_recall
