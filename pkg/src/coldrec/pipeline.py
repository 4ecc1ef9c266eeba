"""Batch pipeline stages shared by the CLI and the test harness:
dataset loading, checkpoint conversion, and the pretrain / meta-train /
adapt / evaluate flow over a dataset directory.
"""

import os
import zlib

import numpy as np

from . import checkpoint, graph, kge, synth
from .config import dump_config
from .evaluation import evaluate_tasks
from .meta import adapt, make_tasks, tasks_from_split
from .model import ModelConfig, ParamBundle, init_params
from .train import MetaTrainer


def derive_seed(seed, tag):
    """Deterministic per-stage seed from the single run seed."""
    return int(np.random.SeedSequence([seed, zlib.crc32(tag.encode())])
               .generate_state(1)[0])


def _require(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return path


def build_train_ckg(datadir):
    _require(os.path.join(datadir, "stats.txt"))
    stats = synth.load_stats(datadir)
    interactions = graph.load_interactions(
        _require(os.path.join(datadir, "train.txt")))
    kg_triples = graph.load_kg(_require(os.path.join(datadir, "kg_final.txt")))
    align_path = os.path.join(datadir, "item_list.txt")
    alignment = graph.load_alignment(align_path) if os.path.exists(align_path) else None
    return graph.build(interactions, kg_triples, alignment=alignment,
                       n_users=stats["n_users"], n_items=stats["n_items"],
                       n_kg_entities=stats["n_kg_entities"],
                       n_kg_relations=stats["n_kg_relations"])


# -- checkpoints -------------------------------------------------------------

def save_kge(path, params, cfg):
    arrays = {"entities": params.entities, "relations": params.relations,
              "proj": params.proj}
    checkpoint.save(path, arrays, meta={"kind": "kge",
                                        "config": dump_config(cfg)})


def load_kge(path):
    arrays, meta = checkpoint.load(_require(path))
    if meta.get("kind") != "kge":
        raise ValueError(f"{path}: not a pretraining checkpoint")
    return kge.KgeParams(arrays["entities"], arrays["relations"],
                         arrays["proj"])


def save_model(path, params, cfg, extra_arrays=None, kind="model"):
    arrays = dict(params.trainable())
    arrays["base_ent"] = params.base_ent
    arrays["base_rel"] = params.base_rel
    if extra_arrays:
        arrays.update(extra_arrays)
    mc = params.config
    meta = {"kind": kind, "config": dump_config(cfg),
            "base_dim": mc.base_dim, "embed_dim": mc.embed_dim,
            "layer_dims": list(mc.layer_dims), "leaky_slope": mc.leaky_slope}
    checkpoint.save(path, arrays, meta=meta)


def load_model(path, expected_kind=None):
    arrays, meta = checkpoint.load(_require(path))
    if expected_kind and meta.get("kind") != expected_kind:
        raise ValueError(f"{path}: expected a {expected_kind} checkpoint")
    mc = ModelConfig(base_dim=meta["base_dim"], embed_dim=meta["embed_dim"],
                     layer_dims=tuple(meta["layer_dims"]),
                     leaky_slope=meta["leaky_slope"])
    parts = {"phi": {}, "omega": {}, "gamma": {}}
    per_task_gamma = {}
    for name, arr in arrays.items():
        if name in ("base_ent", "base_rel"):
            continue
        if name.startswith("task_gamma."):
            _, user, key = name.split(".", 2)
            per_task_gamma.setdefault(int(user), {})[f"gamma.{key}"] = arr
            continue
        part, key = name.split(".", 1)
        parts[part][key] = arr
    params = ParamBundle(mc, parts["phi"], parts["omega"], parts["gamma"],
                         arrays["base_ent"], arrays["base_rel"])
    return params, (per_task_gamma or None), meta


def model_config_from_run(cfg):
    return ModelConfig(base_dim=cfg.base_dim, embed_dim=cfg.embed_dim,
                       layer_dims=tuple(cfg.layer_dims),
                       leaky_slope=cfg.leaky_slope)


# -- stages ------------------------------------------------------------------

def gen_synth_stage(spec, outdir, seed):
    data = synth.generate(spec, seed=seed)
    synth.write_files(data, outdir)
    return data


def pretrain_stage(datadir, outdir, cfg):
    os.makedirs(outdir, exist_ok=True)
    ckg = build_train_ckg(datadir)
    k_cfg = kge.KgeConfig(dim=cfg.base_dim, lr=cfg.kge_lr,
                          epochs=cfg.kge_epochs, batch_size=cfg.kge_batch,
                          holdout_fraction=cfg.kge_holdout)
    params, _holdout = kge.pretrain(ckg, k_cfg,
                                    seed=derive_seed(cfg.seed, "pretrain"))
    path = os.path.join(outdir, "kge.ckpt")
    save_kge(path, params, cfg)
    return path


def trainable_users(ckg, query_size):
    return [u for u, pos in ckg.user_pos.items() if len(pos) > query_size]


def meta_train_stage(datadir, kge_ckpt, outdir, cfg):
    os.makedirs(outdir, exist_ok=True)
    ckg = build_train_ckg(datadir)
    kge_params = load_kge(kge_ckpt)
    seed = derive_seed(cfg.seed, "meta-train")
    params = init_params(ckg, model_config_from_run(cfg),
                         np.random.default_rng(seed), kge_params=kge_params)
    tasks = make_tasks(ckg, trainable_users(ckg, cfg.query_size),
                       cfg.query_size, np.random.default_rng(seed + 1))
    trainer = MetaTrainer(params, ckg, tasks, cfg, seed=seed + 2)
    trainer.run(cfg.meta_steps)
    path = os.path.join(outdir, "model.ckpt")
    save_model(path, params, cfg)
    with open(os.path.join(outdir, "train_log.txt"), "w") as f:
        f.write("\n".join(trainer.log) + "\n")
    with open(os.path.join(outdir, "resolved_config.txt"), "w") as f:
        f.write(dump_config(cfg))
    return path


def build_eval_setup(datadir, scenario, cfg):
    """Evaluation graph and tasks for one scenario.

    Cold scenarios split each test user's pool into query-size query
    items and support items (support edges are added to the graph); the
    non-cold scenario keeps its support inside the training graph.
    """
    ckg = build_train_ckg(datadir)
    pool_path = _require(os.path.join(datadir, f"test_{scenario}.txt"))
    pool_pairs = graph.load_interactions(pool_path)
    pool = {}
    for u, i in pool_pairs:
        pool.setdefault(u, []).append(i)
    rng = np.random.default_rng(derive_seed(cfg.seed, f"split:{scenario}"))
    train_pos = {u: p.tolist() for u, p in ckg.user_pos.items()}

    if scenario == "ncs":
        tasks = tasks_from_split(pool)
        for t in tasks:
            t.support_pos = np.array(sorted(train_pos.get(t.user, [])),
                                     dtype=np.int64)
        return ckg, tasks, train_pos

    support_pool, query_pool = {}, {}
    for u in sorted(pool):
        items = np.array(sorted(pool[u]), dtype=np.int64)
        if len(items) <= cfg.query_size:
            continue
        q_idx = rng.choice(len(items), size=cfg.query_size, replace=False)
        mask = np.zeros(len(items), dtype=bool)
        mask[q_idx] = True
        query_pool[u] = items[mask].tolist()
        support_pool[u] = items[~mask].tolist()
    support_pairs = [(u, i) for u in sorted(support_pool)
                     for i in support_pool[u]]
    eval_ckg = ckg.with_extra_interactions(support_pairs)
    tasks = tasks_from_split(query_pool, support_pool)
    return eval_ckg, tasks, train_pos


def adapt_stage(datadir, model_ckpt, scenario, outdir, cfg):
    os.makedirs(outdir, exist_ok=True)
    params, _, _ = load_model(model_ckpt)
    eval_ckg, tasks, _ = build_eval_setup(datadir, scenario, cfg)
    rng = np.random.default_rng(derive_seed(cfg.seed, f"adapt:{scenario}"))
    adapted, per_task = adapt(params, eval_ckg, tasks, cfg.adapt_steps,
                              cfg.adapt_lr, rng, kg_batch=cfg.adapt_kg_batch,
                              mode=cfg.adapt_mode)
    extra = {}
    if per_task:
        for user, gammas in per_task.items():
            for key, arr in gammas.items():
                extra[f"task_gamma.{user}.{key.split('.', 1)[1]}"] = arr
    path = os.path.join(outdir, f"adapted_{scenario}.ckpt")
    save_model(path, adapted, cfg, extra_arrays=extra, kind="adapted")
    return path


def evaluate_stage(datadir, ckpt, scenario, outdir, cfg, per_user=False):
    os.makedirs(outdir, exist_ok=True)
    params, per_task_gamma, _meta = load_model(ckpt)
    eval_ckg, tasks, train_pos = build_eval_setup(datadir, scenario, cfg)
    report = evaluate_tasks(params, eval_ckg, tasks, cfg.top_k,
                            train_pos=train_pos,
                            per_task_gamma=per_task_gamma)
    report.scenario = scenario
    path = os.path.join(outdir, f"report_{scenario}.txt")
    with open(path, "w") as f:
        f.write(report.to_text(per_user=per_user))
    return report
