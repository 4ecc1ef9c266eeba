"""Synthetic benchmark generator.

Plants a low-rank user/item affinity in which item factors are driven by
shared KG attributes, so both the interaction structure and the KG carry
signal. A configurable fraction of training users get label-shuffled
(noisy) interactions. Timestamps are assigned so that a quantile cut
reproduces the intended old/new designation of users and items.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import graph
from .evaluation import split_scenarios


class InfeasibleSpecError(ValueError):
    pass


@dataclass
class SyntheticSpec:
    n_users: int = 200
    n_items: int = 100
    n_attr_entities: int = 30
    n_kg_relations: int = 3
    latent_dim: int = 8
    attrs_per_item: int = 3
    train_interactions: int = 16   # old-item ratings per old user
    cold_interactions: int = 8     # pool ratings per cold-scenario membership
    query_size: int = 5
    noise_fraction: float = 0.0    # old users with shuffled labels
    ic_user_fraction: float = 0.5  # old users who also rate new items
    user_cut: float = 0.2
    item_cut: float = 0.2
    ncs_holdout: float = 0.3
    affinity_sharpness: float = 6.0
    item_noise: float = 0.3

    def validate(self):
        if self.cold_interactions <= self.query_size:
            raise InfeasibleSpecError(
                "cold_interactions must exceed query_size")
        if self.train_interactions <= self.query_size:
            raise InfeasibleSpecError(
                "train_interactions must exceed query_size")
        n_new_items = int(round(self.n_items * self.item_cut))
        if self.cold_interactions > n_new_items:
            raise InfeasibleSpecError("not enough new items for cold pools")
        if self.cold_interactions > self.n_items - n_new_items:
            raise InfeasibleSpecError("not enough old items for cold pools")
        if self.train_interactions > self.n_items - n_new_items:
            raise InfeasibleSpecError("not enough old items for training")


@dataclass
class SynthData:
    spec: SyntheticSpec
    interactions: list           # (user, item, timestamp)
    user_join: dict
    item_release: dict
    kg_triples: list
    affinity: np.ndarray         # planted (n_users, n_items) preference
    noisy_users: set
    split: object = field(default=None)

    @property
    def n_kg_entities(self):
        return self.spec.n_items + self.spec.n_attr_entities


def generate(spec, seed=0):
    spec.validate()
    rng = np.random.default_rng(seed)
    n_u, n_i, d = spec.n_users, spec.n_items, spec.latent_dim

    n_new_u = int(round(n_u * spec.user_cut))
    n_new_i = int(round(n_i * spec.item_cut))
    old_users = list(range(n_u - n_new_u))
    new_users = list(range(n_u - n_new_u, n_u))
    old_items = np.arange(n_i - n_new_i)
    new_items = np.arange(n_i - n_new_i, n_i)

    # KG: each item links to a few attribute entities; item factors are
    # built from those attributes so the KG predicts preferences.
    attr_latent = rng.normal(size=(spec.n_attr_entities, d)) / np.sqrt(d)
    kg_triples = []
    item_latent = np.zeros((n_i, d))
    for i in range(n_i):
        attrs = rng.choice(spec.n_attr_entities, size=spec.attrs_per_item,
                           replace=False)
        for a in attrs:
            r = int(rng.integers(spec.n_kg_relations))
            kg_triples.append((i, r, n_i + int(a)))
        vec = attr_latent[attrs].mean(axis=0) \
            + spec.item_noise * rng.normal(size=d) / np.sqrt(d)
        item_latent[i] = vec / max(np.linalg.norm(vec), 1e-12)
    user_latent = rng.normal(size=(n_u, d)) / np.sqrt(d)
    affinity = user_latent @ item_latent.T

    noisy_users = set()
    n_noisy = int(round(len(old_users) * spec.noise_fraction))
    if n_noisy:
        noisy_users = set(rng.choice(old_users, size=n_noisy,
                                     replace=False).tolist())

    def pick(user, candidates, count):
        logits = spec.affinity_sharpness * affinity[user, candidates]
        if user in noisy_users:
            p = np.full(len(candidates), 1.0 / len(candidates))
        else:
            p = np.exp(logits - logits.max())
            p /= p.sum()
        return candidates[rng.choice(len(candidates), size=count,
                                     replace=False, p=p)]

    # timestamps: old before the cut with a gap, new after it
    user_join = {}
    for u in range(n_u):
        lo, hi = (0.85, 1.0) if u in set(new_users) else (0.0, 0.7)
        user_join[u] = float(rng.uniform(lo, hi))
    item_release = {}
    for i in range(n_i):
        lo, hi = (0.85, 1.0) if i in set(new_items.tolist()) else (0.0, 0.7)
        item_release[i] = float(rng.uniform(lo, hi))

    ic_users = set(rng.choice(old_users,
                              size=int(round(len(old_users) * spec.ic_user_fraction)),
                              replace=False).tolist())
    interactions = []

    def add(u, items):
        for i in items:
            ts = max(user_join[u], item_release[int(i)]) + float(rng.uniform(0, 0.01))
            interactions.append((u, int(i), ts))

    for u in old_users:
        add(u, pick(u, old_items, spec.train_interactions))
        if u in ic_users:
            add(u, pick(u, new_items, spec.cold_interactions))
    for u in new_users:
        add(u, pick(u, old_items, spec.cold_interactions))
        add(u, pick(u, new_items, spec.cold_interactions))

    data = SynthData(spec=spec, interactions=interactions,
                     user_join=user_join, item_release=item_release,
                     kg_triples=kg_triples, affinity=affinity,
                     noisy_users=noisy_users)
    data.split = split_scenarios(interactions, user_join, item_release,
                                 cut_fractions=(spec.user_cut, spec.item_cut),
                                 ncs_holdout=spec.ncs_holdout, seed=seed)
    return data


def write_files(data, outdir):
    """Emit the dataset in the standard wire format plus bookkeeping."""
    os.makedirs(outdir, exist_ok=True)
    split = data.split
    by_user = {}
    for u, i in split.train_pairs:
        by_user.setdefault(u, []).append(i)
    graph.save_interactions(os.path.join(outdir, "train.txt"),
                            {u: sorted(v) for u, v in by_user.items()})
    for tag in ("uc", "ic", "uic", "ncs"):
        graph.save_interactions(os.path.join(outdir, f"test_{tag}.txt"),
                                split.pools[tag])
    graph.save_kg(os.path.join(outdir, "kg_final.txt"), data.kg_triples)
    graph.save_alignment(os.path.join(outdir, "item_list.txt"),
                         {i: i for i in range(data.spec.n_items)})
    with open(os.path.join(outdir, "stats.txt"), "w") as f:
        f.write(f"n_users={data.spec.n_users}\n")
        f.write(f"n_items={data.spec.n_items}\n")
        f.write(f"n_kg_entities={data.n_kg_entities}\n")
        f.write(f"n_kg_relations={data.spec.n_kg_relations}\n")
        f.write(f"query_size={data.spec.query_size}\n")
    with open(os.path.join(outdir, "noisy_users.txt"), "w") as f:
        for u in sorted(data.noisy_users):
            f.write(f"{u}\n")


def load_stats(datadir):
    stats = {}
    with open(os.path.join(datadir, "stats.txt")) as f:
        for line in f:
            k, v = line.strip().split("=")
            stats[k] = int(v)
    return stats


def heldout_task_graph(data, query_size, n_tasks, noisy_share, seed):
    """Training graph plus meta-tasks whose query items are held out of
    the graph entirely, pretraining included.

    At desk scale a low-dimensional translation embedding memorizes
    every training edge, so query items that stay in the graph leak
    through the frozen base tables and every task looks easy. Removing
    them first makes the query loss measure generalization. The task
    subset is drawn with an exact share of label-shuffled users so
    scheduler experiments see the intended noise level.
    """
    from . import meta
    spec = data.spec
    by_user = {}
    for u, i in data.split.train_pairs:
        by_user.setdefault(u, []).append(i)
    eligible = sorted(u for u, its in by_user.items()
                      if len(its) > 2 * query_size)
    clean = [u for u in eligible if u not in data.noisy_users]
    noisy = [u for u in eligible if u in data.noisy_users]
    rng = np.random.default_rng(seed)
    k = int(round(noisy_share * n_tasks))
    if len(clean) < n_tasks - k or len(noisy) < k:
        raise InfeasibleSpecError(
            f"need {n_tasks - k} clean and {k} noisy eligible users, "
            f"have {len(clean)} and {len(noisy)}")
    users = sorted(rng.choice(clean, n_tasks - k, replace=False).tolist()
                   + rng.choice(noisy, k, replace=False).tolist())
    q_pool, s_pool = {}, {}
    for u in users:
        items = np.array(sorted(by_user[u]))
        qi = rng.choice(len(items), query_size, replace=False)
        m = np.zeros(len(items), dtype=bool)
        m[qi] = True
        q_pool[u] = items[m].tolist()
        s_pool[u] = items[~m].tolist()
    inter = [(u, i) for u, its in sorted(by_user.items()) for i in its
             if u not in q_pool or i not in q_pool[u]]
    ckg = graph.build(inter, data.kg_triples,
                      n_users=spec.n_users, n_items=spec.n_items,
                      n_kg_entities=data.n_kg_entities,
                      n_kg_relations=spec.n_kg_relations)
    tasks = meta.tasks_from_split(q_pool, s_pool)
    return ckg, tasks, users
