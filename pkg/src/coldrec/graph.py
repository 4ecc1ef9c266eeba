"""Collaborative knowledge graph: users, items and KG entities in one
unified id space, with per-head neighbor indexes and negative sampling.

Id layout:
  * unified entities: KG entities occupy [0, n_kg_entities); users occupy
    [n_kg_entities, n_kg_entities + n_users). Items map into the KG
    entity range through the alignment table.
  * relations: 0 is the user->item interaction, 1 its inverse; input KG
    relation r becomes 2 + 2r (canonical) and 3 + 2r (inverse), so the
    inverse of any relation id is `r ^ 1`.
"""

from dataclasses import dataclass, field

import numpy as np


class DanglingItemError(ValueError):
    """An item appears in the data but has no entity alignment."""


class ExhaustedCandidatesError(RuntimeError):
    """No negative candidate is left to sample."""


def inverse_relation(r):
    return r ^ 1


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass
class CollabKG:
    n_users: int
    n_items: int
    n_kg_entities: int
    n_kg_relations: int          # canonical input relations, before doubling
    alignment: np.ndarray        # item id -> KG entity id
    heads: np.ndarray
    rels: np.ndarray
    tails: np.ndarray
    user_pos: dict               # user id -> sorted array of positive items
    interactions: list = field(repr=False)
    kg_triples: list = field(repr=False)

    def __post_init__(self):
        self.n_entities = self.n_kg_entities + self.n_users
        self.n_relations = 2 + 2 * self.n_kg_relations
        self._triple_set = set(zip(self.heads.tolist(), self.rels.tolist(),
                                   self.tails.tolist()))
        # CSR-style offsets over the (head, rel, tail)-sorted triple list.
        counts = np.bincount(self.heads, minlength=self.n_entities)
        self._head_offsets = np.concatenate([[0], np.cumsum(counts)])
        self.collab_mask = self.rels <= 1
        self.know_mask = ~self.collab_mask

    # -- id helpers ---------------------------------------------------------
    def user_entity(self, u):
        return self.n_kg_entities + u

    def item_entity(self, i):
        return int(self.alignment[i])

    def is_user_entity(self, e):
        return e >= self.n_kg_entities

    @property
    def n_triples(self):
        return len(self.heads)

    def has_triple(self, h, r, t):
        return (int(h), int(r), int(t)) in self._triple_set

    # -- neighbor queries ---------------------------------------------------
    def _head_slice(self, h):
        return slice(self._head_offsets[h], self._head_offsets[h + 1])

    def collab_neighbors(self, h):
        """(rel, tail) pairs of h's interaction-relation triples."""
        s = self._head_slice(h)
        keep = self.collab_mask[s]
        return self.rels[s][keep], self.tails[s][keep]

    def know_neighbors(self, h):
        """(rel, tail) pairs of h's knowledge-relation triples."""
        s = self._head_slice(h)
        keep = self.know_mask[s]
        return self.rels[s][keep], self.tails[s][keep]

    # -- sampling -----------------------------------------------------------
    def sample_cf_negatives(self, user, count, rng):
        """Uniformly sample `count` distinct items the user never observed."""
        rng = _as_rng(rng)
        pos = self.user_pos.get(user, np.empty(0, dtype=np.int64))
        candidates = np.setdiff1d(np.arange(self.n_items), pos)
        if candidates.size == 0:
            raise ExhaustedCandidatesError(f"user {user} observed every item")
        if count > candidates.size:
            raise ExhaustedCandidatesError(
                f"user {user}: {count} negatives requested, "
                f"{candidates.size} candidates")
        return candidates[rng.choice(candidates.size, size=count, replace=False)]

    def sample_kg_negative(self, triple, rng):
        """Corrupt the tail of (h, r, t) to a tail t' with (h, r, t') absent."""
        rng = _as_rng(rng)
        h, r, t = triple
        s = self._head_slice(h)
        used = self.tails[s][self.rels[s] == r]
        candidates = np.setdiff1d(np.arange(self.n_entities), used)
        if candidates.size == 0:
            raise ExhaustedCandidatesError(
                f"triple ({h}, {r}, {t}): no corrupting tail exists")
        t_neg = int(candidates[rng.integers(candidates.size)])
        return (h, r, t_neg)

    # -- derived graphs -----------------------------------------------------
    def with_extra_interactions(self, extra_pairs, n_users=None):
        """Rebuild with additional (user, item) edges; inputs stay immutable."""
        return build(self.interactions + list(extra_pairs), self.kg_triples,
                     alignment={i: int(e) for i, e in enumerate(self.alignment)},
                     n_users=n_users or self.n_users, n_items=self.n_items,
                     n_kg_entities=self.n_kg_entities,
                     n_kg_relations=self.n_kg_relations)

    def triple_keep_mask(self, excluded_pairs):
        """Boolean keep-mask over triples dropping the given (u, i) edges
        in both directions; used to hide query items during propagation."""
        drop = set()
        for u, i in excluded_pairs:
            drop.add((self.user_entity(u), 0, self.item_entity(i)))
            drop.add((self.item_entity(i), 1, self.user_entity(u)))
        keep = np.ones(self.n_triples, dtype=bool)
        for k, hrt in enumerate(zip(self.heads.tolist(), self.rels.tolist(),
                                    self.tails.tolist())):
            if hrt in drop:
                keep[k] = False
        return keep


def build(interactions, kg_triples, alignment=None, n_users=None, n_items=None,
          n_kg_entities=None, n_kg_relations=None):
    """Assemble the unified graph from interactions and KG triples.

    Duplicate interactions collapse silently; every edge is materialized
    in both directions. Identity alignment is assumed when none is given.
    """
    interactions = [(int(u), int(i)) for u, i in interactions]
    kg_triples = [(int(h), int(r), int(t)) for h, r, t in kg_triples]

    if n_users is None:
        n_users = max((u for u, _ in interactions), default=-1) + 1
    if n_items is None:
        n_items = max((i for _, i in interactions), default=-1) + 1
        if alignment:
            n_items = max(n_items, max(alignment) + 1)
    if n_kg_relations is None:
        n_kg_relations = max((r for _, r, _ in kg_triples), default=-1) + 1

    if alignment is None:
        align = np.arange(n_items, dtype=np.int64)
    else:
        align = np.full(n_items, -1, dtype=np.int64)
        for i, e in alignment.items():
            align[i] = e
    for u, i in interactions:
        if i >= n_items or align[i] < 0:
            raise DanglingItemError(f"item {i} has no entity alignment")

    if n_kg_entities is None:
        n_kg_entities = max((max(h, t) for h, _, t in kg_triples), default=-1) + 1
        if n_items:
            n_kg_entities = max(n_kg_entities, int(align.max()) + 1)

    triples = set()
    for h, r, t in kg_triples:
        triples.add((h, 2 + 2 * r, t))
        triples.add((t, 3 + 2 * r, h))
    user_pos = {}
    for u, i in interactions:
        triples.add((n_kg_entities + u, 0, int(align[i])))
        triples.add((int(align[i]), 1, n_kg_entities + u))
        user_pos.setdefault(u, set()).add(i)

    ordered = sorted(triples)
    heads = np.array([h for h, _, _ in ordered], dtype=np.int64)
    rels = np.array([r for _, r, _ in ordered], dtype=np.int64)
    tails = np.array([t for _, _, t in ordered], dtype=np.int64)
    user_pos = {u: np.array(sorted(s), dtype=np.int64)
                for u, s in sorted(user_pos.items())}

    return CollabKG(n_users=n_users, n_items=n_items,
                    n_kg_entities=n_kg_entities, n_kg_relations=n_kg_relations,
                    alignment=align, heads=heads, rels=rels, tails=tails,
                    user_pos=user_pos, interactions=interactions,
                    kg_triples=kg_triples)


# -- dataset wire format -----------------------------------------------------

def load_interactions(path):
    """`user item item ...` per line -> list of (user, item) pairs."""
    pairs = []
    with open(path) as f:
        for line in f:
            nums = [int(x) for x in line.split()]
            if len(nums) < 2:
                continue
            pairs.extend((nums[0], i) for i in nums[1:])
    return pairs


def save_interactions(path, user_items):
    """Write a dict user -> iterable of items in the one-line-per-user form."""
    with open(path, "w") as f:
        for u in sorted(user_items):
            items = " ".join(str(i) for i in user_items[u])
            f.write(f"{u} {items}\n")


def load_kg(path):
    """`head relation tail` per line -> list of triples."""
    triples = []
    with open(path) as f:
        for line in f:
            nums = line.split()
            if len(nums) == 3:
                triples.append((int(nums[0]), int(nums[1]), int(nums[2])))
    return triples


def save_kg(path, triples):
    with open(path, "w") as f:
        for h, r, t in triples:
            f.write(f"{h} {r} {t}\n")


def load_alignment(path):
    """`item entity` per line -> dict; identity alignment if file absent."""
    mapping = {}
    with open(path) as f:
        for line in f:
            nums = line.split()
            if len(nums) == 2:
                mapping[int(nums[0])] = int(nums[1])
    return mapping


def save_alignment(path, mapping):
    with open(path, "w") as f:
        for i in sorted(mapping):
            f.write(f"{i} {mapping[i]}\n")
