import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coldrec import autodiff as ad
from coldrec import graph, kge


def small_params(rng, n_ent=6, n_rel=4, dim=4):
    cfg = kge.KgeConfig(dim=dim)
    return kge.init_params(n_ent, n_rel, cfg, rng)


def test_energy_exact_translation():
    p = kge.KgeParams(entities=np.array([[1.0, 0.0], [1.0, 1.0]]),
                      relations=np.array([[0.0, 1.0]]),
                      proj=np.eye(2)[None, :, :])
    assert kge.energy(p, (0, 0, 1)) == pytest.approx(0.0)


def test_energy_degenerate_identity():
    p = kge.KgeParams(entities=np.array([[0.3, -0.7], [0.3, -0.7]]),
                      relations=np.zeros((1, 2)),
                      proj=np.random.default_rng(0).normal(size=(1, 2, 2)))
    assert kge.energy(p, (0, 0, 1)) == pytest.approx(0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_energy_matches_hand_rolled_norm(seed):
    rng = np.random.default_rng(seed)
    p = small_params(rng)
    h, r, t = rng.integers(0, 6), rng.integers(0, 4), rng.integers(0, 6)
    w = p.proj[r]
    diff = w @ p.entities[h] + p.relations[r] - w @ p.entities[t]
    assert kge.energy(p, (int(h), int(r), int(t))) == \
        pytest.approx(float(np.sum(diff ** 2)))


def test_energy_index_error():
    p = small_params(np.random.default_rng(0))
    with pytest.raises(IndexError):
        kge.energy(p, (99, 0, 0))


def test_kg_loss_equal_energies_is_ln2():
    # t and t' are the same vector at different ids: equal energies
    ent = np.ones((3, 2))
    p = kge.KgeParams(entities=ent, relations=np.ones((1, 2)),
                      proj=np.random.default_rng(1).normal(size=(1, 2, 2)))
    loss = kge.kg_loss(p, [(0, 0, 1, 2)])
    assert loss == pytest.approx(np.log(2.0), abs=1e-12)


def test_kg_loss_saturation():
    # corrupted triple has far higher energy: loss vanishes
    ent = np.array([[0.0, 0.0], [0.0, 0.0], [10.0, 10.0]])
    p = kge.KgeParams(entities=ent, relations=np.zeros((1, 2)),
                      proj=np.eye(2)[None, :, :])
    assert kge.kg_loss(p, [(0, 0, 1, 2)]) < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_kg_loss_is_sum_of_per_quad_terms(seed):
    rng = np.random.default_rng(seed)
    p = small_params(rng)
    quads = [tuple(int(x) for x in (rng.integers(6), rng.integers(4),
                                    rng.integers(6), rng.integers(6)))
             for _ in range(3)]

    def one(q):
        s_true = kge.energy(p, q[:3])
        s_neg = kge.energy(p, (q[0], q[1], q[3]))
        return -np.log(1.0 / (1.0 + np.exp(-(s_neg - s_true))))

    assert kge.kg_loss(p, quads) == pytest.approx(sum(one(q) for q in quads))


def test_energy_rotation_invariance():
    # rotating the relation-space output leaves the distance unchanged
    rng = np.random.default_rng(5)
    p = small_params(rng, dim=4)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    rotated = kge.KgeParams(entities=p.entities.copy(),
                            relations=p.relations @ q.T,
                            proj=np.einsum("ij,rjk->rik", q, p.proj))
    for triple in [(0, 0, 1), (2, 3, 4), (5, 1, 0)]:
        assert kge.energy(p, triple) == \
            pytest.approx(kge.energy(rotated, triple), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_kg_loss_gradcheck(seed):
    rng = np.random.default_rng(seed)
    p = small_params(rng, n_ent=4, n_rel=2, dim=3)
    quads = [(0, 0, 1, 2), (1, 1, 3, 0), (2, 0, 0, 3)]

    def build(ent, rel, proj):
        return kge.kg_loss_node(ent, rel, proj, quads)

    err = ad.grad_check(build, [p.entities, p.relations, p.proj])
    assert err < 1e-4


# -- pretraining --------------------------------------------------------------

def pretrain_graph(seed=0, n_ent=50):
    rng = np.random.default_rng(seed)
    kg = [(int(rng.integers(n_ent)), int(rng.integers(3)),
           int(rng.integers(n_ent))) for _ in range(200)]
    return graph.build([], kg, n_users=0, n_items=0, n_kg_entities=n_ent,
                       n_kg_relations=3)


def test_pretrain_margin_positive():
    g = pretrain_graph()
    cfg = kge.KgeConfig(dim=8, lr=0.05, epochs=60, batch_size=128)
    params, holdout = kge.pretrain(g, cfg, seed=0)
    margin = kge.mean_energy_margin(params, holdout, g,
                                    np.random.default_rng(1))
    assert margin > 0


def test_pretrain_deterministic():
    g = pretrain_graph(1)
    cfg = kge.KgeConfig(dim=4, lr=0.05, epochs=3, batch_size=64)
    a, _ = kge.pretrain(g, cfg, seed=9)
    b, _ = kge.pretrain(g, cfg, seed=9)
    assert np.array_equal(a.entities, b.entities)
    assert np.array_equal(a.relations, b.relations)
    assert np.array_equal(a.proj, b.proj)


def test_pretrain_zero_epochs_is_init():
    g = pretrain_graph(2)
    cfg = kge.KgeConfig(dim=4, epochs=0)
    params, _ = kge.pretrain(g, cfg, seed=4)
    rng = np.random.default_rng(4)
    ref = kge.init_params(g.n_entities, g.n_relations, cfg, rng)
    assert np.array_equal(params.entities, ref.entities)
    assert np.array_equal(params.proj, ref.proj)


def test_pretrain_smoothed_loss_decreases():
    g = pretrain_graph(3)
    cfg = kge.KgeConfig(dim=8, lr=0.05, epochs=40, batch_size=64)
    log = []
    kge.pretrain(g, cfg, seed=0, log=log)
    smoothed = np.convolve(log, np.ones(10) / 10.0, mode="valid")
    assert smoothed[-1] < smoothed[0]


def test_entities_unit_norm_after_training():
    g = pretrain_graph(4)
    cfg = kge.KgeConfig(dim=6, lr=0.05, epochs=2, batch_size=64)
    params, _ = kge.pretrain(g, cfg, seed=0)
    norms = np.linalg.norm(params.entities, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-9)
