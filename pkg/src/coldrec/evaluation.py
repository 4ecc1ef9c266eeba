"""Cold-start scenario construction and top-K ranking evaluation.

Scenarios: users and items are split old/new by a timestamp quantile.
Training keeps only old-user interactions with old items; test pools are
UC (new users, old items), IC (old users, new items), UIC (new users,
new items) and NCS (held-out old-user/old-item interactions).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import PropagationGraph


SCENARIOS = ("uc", "ic", "uic", "ncs")


@dataclass
class ScenarioSplit:
    train_pairs: list                    # (user, item) interactions
    pools: dict                          # tag -> {user: [query items]}
    ncs_support: dict                    # user -> train items (NCS tasks)
    new_users: set
    new_items: set


def split_scenarios(interactions, user_join, item_release, cut_fractions=(0.2, 0.2),
                    ncs_holdout=0.3, seed=0):
    """Partition timestamped interactions into the train set and the four
    test pools.

    `interactions` is a list of (user, item, timestamp); `user_join` and
    `item_release` map ids to times. Users (items) above the
    1 - cut_fraction quantile of join (release) times are "new". For a
    fraction of eligible old users, `ncs_holdout` of their old-item
    interactions are withheld from training into the NCS pool.
    """
    uf, itf = cut_fractions
    if not (0 < uf < 1 and 0 < itf < 1):
        raise ValueError("cut fractions must lie in (0, 1)")
    users = sorted(user_join)
    items = sorted(item_release)
    join = np.array([user_join[u] for u in users], dtype=np.float64)
    release = np.array([item_release[i] for i in items], dtype=np.float64)
    u_cut = np.quantile(join, 1.0 - uf)
    i_cut = np.quantile(release, 1.0 - itf)
    new_users = {u for u, t in zip(users, join) if t > u_cut}
    new_items = {i for i, t in zip(items, release) if t > i_cut}

    pools = {tag: {} for tag in SCENARIOS}
    old_old = {}
    for u, i, _ts in interactions:
        u_new, i_new = u in new_users, i in new_items
        if u_new and i_new:
            pools["uic"].setdefault(u, set()).add(i)
        elif u_new:
            pools["uc"].setdefault(u, set()).add(i)
        elif i_new:
            pools["ic"].setdefault(u, set()).add(i)
        else:
            old_old.setdefault(u, set()).add(i)

    rng = np.random.default_rng(seed)
    train_pairs = []
    ncs_support = {}
    for u in sorted(old_old):
        its = sorted(old_old[u])
        n_hold = int(round(len(its) * ncs_holdout))
        if n_hold > 0 and len(its) - n_hold >= 1:
            held = set(np.array(its)[rng.choice(len(its), n_hold, replace=False)].tolist())
        else:
            held = set()
        kept = [i for i in its if i not in held]
        train_pairs.extend((u, i) for i in kept)
        if held:
            pools["ncs"][u] = held
            ncs_support[u] = kept

    pools = {tag: {u: sorted(s) for u, s in sorted(d.items())}
             for tag, d in pools.items()}
    for tag in SCENARIOS:
        if not pools[tag]:
            warnings.warn(f"scenario '{tag}' has no qualifying tasks")
    return ScenarioSplit(train_pairs=sorted(train_pairs), pools=pools,
                         ncs_support=ncs_support, new_users=new_users,
                         new_items=new_items)


# -- ranking and metrics -----------------------------------------------------

def rank_items(scores, candidates):
    """Candidates in descending score order; ties break by ascending id."""
    return sorted(candidates, key=lambda i: (-scores[i], i))


def recall_at_k(ranked, relevant, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    if not relevant:
        return None
    hits = sum(1 for i in ranked[:k] if i in relevant)
    return hits / len(relevant)


def ndcg_at_k(ranked, relevant, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    if not relevant:
        return None
    dcg = sum(1.0 / np.log2(rank + 2)
              for rank, i in enumerate(ranked[:k]) if i in relevant)
    ideal = sum(1.0 / np.log2(rank + 2)
                for rank in range(min(len(relevant), k)))
    return dcg / ideal


@dataclass
class EvalReport:
    scenario: str
    k: int
    per_user: dict = field(default_factory=dict)  # user -> (recall, ndcg)

    @property
    def mean_recall(self):
        vals = [r for r, _ in self.per_user.values()]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def mean_ndcg(self):
        vals = [n for _, n in self.per_user.values()]
        return float(np.mean(vals)) if vals else 0.0

    def to_text(self, per_user=False):
        lines = [
            f"scenario={self.scenario} k={self.k} metric=recall "
            f"mean={self.mean_recall:.10f} count={len(self.per_user)}",
            f"scenario={self.scenario} k={self.k} metric=ndcg "
            f"mean={self.mean_ndcg:.10f} count={len(self.per_user)}",
        ]
        if per_user:
            for u in sorted(self.per_user):
                r, n = self.per_user[u]
                lines.append(f"user={u} recall={r:.10f} ndcg={n:.10f}")
        return "\n".join(lines) + "\n"


def score_all_items(e_star, ckg, user):
    """Preference score of one user against every item."""
    u_row = e_star[ckg.user_entity(user)]
    item_rows = e_star[ckg.alignment]
    return item_rows @ u_row


def evaluate_tasks(params, ckg, tasks, k, train_pos=None, per_task_gamma=None):
    """Full-ranking evaluation of every task against its query items.

    Candidates are all items except the user's known positives (training
    interactions plus support items). `ckg` must already contain the
    support edges of the tasks. `per_task_gamma` optionally maps user ->
    adapted aggregation arrays (local adaptation mode).
    """
    shared = None
    if per_task_gamma is None:
        shared = PropagationGraph(params, ckg).embeddings()
    report = EvalReport(scenario="", k=k)
    for task in tasks:
        if len(task.query_pos) == 0:
            continue
        if per_task_gamma is not None and task.user in per_task_gamma:
            e_star = PropagationGraph(
                params, ckg,
                param_overrides=per_task_gamma[task.user]).embeddings()
        elif per_task_gamma is not None:
            if shared is None:
                shared = PropagationGraph(params, ckg).embeddings()
            e_star = shared
        else:
            e_star = shared
        scores = score_all_items(e_star, ckg, task.user)
        known = set(task.support_pos.tolist())
        if train_pos is not None:
            known |= set(train_pos.get(task.user, []))
        candidates = [i for i in range(ckg.n_items) if i not in known]
        ranked = rank_items(scores, candidates)
        r = recall_at_k(ranked, task.query_pos.tolist(), k)
        n = ndcg_at_k(ranked, task.query_pos.tolist(), k)
        if r is not None:
            report.per_user[task.user] = (r, n)
    return report
