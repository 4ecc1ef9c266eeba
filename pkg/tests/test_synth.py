import filecmp
import os

import numpy as np
import pytest

from coldrec import synth
from coldrec.evaluation import rank_items, recall_at_k


def small_spec(**kw):
    base = dict(n_users=60, n_items=60, n_attr_entities=12, latent_dim=6,
                train_interactions=10, cold_interactions=7, query_size=5)
    base.update(kw)
    return synth.SyntheticSpec(**base)


def test_generation_deterministic_files(tmp_path):
    for sub in ("a", "b"):
        data = synth.generate(small_spec(), seed=123)
        synth.write_files(data, tmp_path / sub)
    names = os.listdir(tmp_path / "a")
    assert set(names) == {"train.txt", "test_uc.txt", "test_ic.txt",
                          "test_uic.txt", "test_ncs.txt", "kg_final.txt",
                          "item_list.txt", "stats.txt", "noisy_users.txt"}
    for name in names:
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name,
                           shallow=False), name


def test_planted_oracle_beats_random_ranking():
    # rank the new users' old-item pools against the full old-item
    # catalog; interactions were drawn from exactly that candidate set
    spec = small_spec(n_users=80, n_items=150, cold_interactions=8,
                      affinity_sharpness=8.0)
    data = synth.generate(spec, seed=7)
    old_items = sorted(set(range(spec.n_items)) - data.split.new_items)
    scores_oracle = []
    for u, items in data.split.pools["uc"].items():
        oracle = rank_items({i: data.affinity[u, i] for i in old_items},
                            old_items)
        scores_oracle.append(recall_at_k(oracle, set(items), 20))
    # a uniform ranker's expected recall is K / |candidates| regardless
    # of the relevant-set size
    random_expectation = 20.0 / len(old_items)
    assert np.mean(scores_oracle) > 5.0 * random_expectation


def test_scenario_pools_are_well_formed():
    spec = small_spec()
    data = synth.generate(spec, seed=11)
    split = data.split
    for tag in ("uc", "ic", "uic", "ncs"):
        assert split.pools[tag], tag
    # cold users have enough pool items to split support from query
    for tag in ("uc", "ic", "uic"):
        assert any(len(v) > spec.query_size
                   for v in split.pools[tag].values()), tag
    # most training users keep enough interactions to form a task
    by_user = {}
    for u, i in split.train_pairs:
        by_user.setdefault(u, []).append(i)
    enough = sum(1 for v in by_user.values() if len(v) > spec.query_size)
    assert enough >= len(by_user) * 0.8


def test_timestamp_cut_reproduces_designation():
    spec = small_spec()
    data = synth.generate(spec, seed=3)
    n_new = int(round(spec.n_users * spec.user_cut))
    assert data.split.new_users == set(range(spec.n_users - n_new,
                                             spec.n_users))
    n_new_i = int(round(spec.n_items * spec.item_cut))
    assert data.split.new_items == set(range(spec.n_items - n_new_i,
                                             spec.n_items))


def test_noise_marks_users():
    spec = small_spec(noise_fraction=0.25)
    data = synth.generate(spec, seed=5)
    n_old = spec.n_users - int(round(spec.n_users * spec.user_cut))
    assert len(data.noisy_users) == int(round(n_old * 0.25))
    new_users = data.split.new_users
    assert not (data.noisy_users & new_users)


def test_infeasible_specs_rejected():
    with pytest.raises(synth.InfeasibleSpecError):
        synth.generate(small_spec(cold_interactions=5, query_size=5), seed=0)
    with pytest.raises(synth.InfeasibleSpecError):
        synth.generate(small_spec(train_interactions=4, query_size=5), seed=0)
    with pytest.raises(synth.InfeasibleSpecError):
        synth.generate(small_spec(n_items=20, cold_interactions=10,
                                  item_cut=0.2), seed=0)


def test_stats_round_trip(tmp_path):
    data = synth.generate(small_spec(), seed=1)
    synth.write_files(data, tmp_path)
    stats = synth.load_stats(tmp_path)
    assert stats["n_users"] == 60
    assert stats["n_kg_entities"] == data.n_kg_entities


def test_boundary_interaction_count():
    # one more interaction than the query size is enough for a task
    spec = small_spec(train_interactions=6, query_size=5)
    data = synth.generate(spec, seed=9)
    by_user = {}
    for u, i in data.split.train_pairs:
        by_user.setdefault(u, []).append(i)
    assert any(len(v) == 6 for v in by_user.values()) or \
        all(len(v) <= 6 for v in by_user.values())


def test_heldout_task_graph_removes_queries():
    spec = small_spec(noise_fraction=0.4, train_interactions=12,
                      query_size=3)
    data = synth.generate(spec, seed=3)
    ckg, tasks, users = synth.heldout_task_graph(data, query_size=3,
                                                 n_tasks=8, noisy_share=0.25,
                                                 seed=7)
    assert len(tasks) == 8
    noisy = sum(1 for u in users if u in data.noisy_users)
    assert noisy == 2
    by_user = {}
    for u, i in data.split.train_pairs:
        by_user.setdefault(u, set()).add(i)
    for t in tasks:
        pos = set(ckg.user_pos.get(t.user, []))
        # query items are gone from the graph, support items remain
        assert not pos & set(t.query_pos.tolist())
        assert set(t.support_pos.tolist()) <= pos
        assert set(t.support_pos.tolist()) | set(t.query_pos.tolist()) \
            == by_user[t.user]


def test_heldout_task_graph_infeasible():
    spec = small_spec(noise_fraction=0.0)
    data = synth.generate(spec, seed=1)
    with pytest.raises(synth.InfeasibleSpecError):
        synth.heldout_task_graph(data, query_size=5, n_tasks=8,
                                 noisy_share=0.5, seed=0)
