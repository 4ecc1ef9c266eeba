"""Adaptive task scheduler: a small bidirectional LSTM encodes each
candidate task's recent history of (query loss, support/query gradient
similarity) pairs; a linear head turns the encoding into a score and a
softmax over candidates yields sampling probabilities.

The sampling step itself is discrete, so the scheduler parameters are
trained on a differentiable surrogate: by default the probability-
weighted sum of the sampled tasks' query losses (losses held constant),
optionally a score-function estimator with a mean-loss baseline.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .optim import sgd_step


class NonFiniteFeatureError(FloatingPointError):
    pass


class DegenerateDistributionError(ValueError):
    pass


@dataclass
class SchedulerConfig:
    hidden: int = 10
    window: int = 5
    lr: float = 0.001
    mode: str = "reweight"        # or "score_function"
    entropy: float = 0.0          # weight of an entropy bonus on p
    standardize: bool = True
    n_features: int = 2


def _glorot(rng, shape):
    bound = np.sqrt(6.0 / (shape[0] + shape[-1]))
    return rng.uniform(-bound, bound, size=shape)


def init_delta(config, rng):
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    h, f = config.hidden, config.n_features
    delta = {}
    for d in ("fw", "bw"):
        for gate in ("i", "f", "o", "g"):
            delta[f"{d}_W{gate}"] = _glorot(rng, (h, f))
            delta[f"{d}_U{gate}"] = _glorot(rng, (h, h))
            # standard trick: start with an open forget gate
            delta[f"{d}_b{gate}"] = np.ones(h) if gate == "f" else np.zeros(h)
    delta["head_w"] = _glorot(rng, (1, 2 * h))
    delta["head_b"] = np.zeros(1)
    return delta


@dataclass
class SchedulerState:
    config: SchedulerConfig
    delta: dict
    histories: dict = field(default_factory=dict)   # user -> list of (loss, sim)

    def record(self, user, loss, sim):
        if not (np.isfinite(loss) and np.isfinite(sim)):
            raise NonFiniteFeatureError(f"task {user}: features ({loss}, {sim})")
        hist = self.histories.setdefault(user, [])
        hist.append((float(loss), float(sim)))
        del hist[:-self.config.window]


def init_state(config, rng):
    return SchedulerState(config=config, delta=init_delta(config, rng))


def _history_batch(state, users, fresh):
    """Stack each candidate's history (fresh entry appended) into a
    (window, n_tasks, 2) array, zero-padded at the front and z-scored
    per batch when configured."""
    w = state.config.window
    seqs = np.zeros((w, len(users), state.config.n_features))
    lens = np.zeros(len(users), dtype=np.intp)
    for k, u in enumerate(users):
        hist = list(state.histories.get(u, []))
        if fresh is not None:
            hist = hist + [fresh[k]]
        hist = hist[-w:]
        lens[k] = len(hist)
        if hist:
            seqs[w - len(hist):, k, :] = np.asarray(hist)
    if not np.all(np.isfinite(seqs)):
        bad = users[int(np.argwhere(~np.isfinite(seqs))[0][1])]
        raise NonFiniteFeatureError(f"task {bad} has non-finite history features")
    if state.config.standardize:
        mask = np.zeros((w, len(users)), dtype=bool)
        for k in range(len(users)):
            mask[w - lens[k]:, k] = True
        if mask.any():
            vals = seqs[mask]
            mean = vals.mean(axis=0)
            std = np.maximum(vals.std(axis=0), 1e-8)
            seqs[mask] = (vals - mean) / std
    return seqs


def _lstm_direction(delta_leaves, xs, prefix, hidden):
    n = xs[0].shape[0]
    h = ad.leaf(np.zeros((n, hidden)))
    c = ad.leaf(np.zeros((n, hidden)))
    for x in xs:
        pre = {}
        for gate in ("i", "f", "o", "g"):
            pre[gate] = ad.add(
                ad.add(ad.linear(x, delta_leaves[f"{prefix}_W{gate}"]),
                       ad.linear(h, delta_leaves[f"{prefix}_U{gate}"])),
                delta_leaves[f"{prefix}_b{gate}"])
        i = ad.sigmoid(pre["i"])
        f = ad.sigmoid(pre["f"])
        o = ad.sigmoid(pre["o"])
        g = ad.tanh(pre["g"])
        c = ad.add(ad.mul(f, c), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
    return h


class ScoreGraph:
    """Differentiable candidate scoring; keeps leaves so the surrogate
    loss can be backpropagated into the scheduler parameters."""

    def __init__(self, state, users, fresh=None):
        if not users:
            raise DegenerateDistributionError("no candidate tasks")
        cfg = state.config
        seqs = _history_batch(state, users, fresh)
        self.leaves = {k: ad.leaf(v) for k, v in state.delta.items()}
        xs = [ad.leaf(seqs[t]) for t in range(cfg.window)]
        h_fw = _lstm_direction(self.leaves, xs, "fw", cfg.hidden)
        h_bw = _lstm_direction(self.leaves, xs[::-1], "bw", cfg.hidden)
        enc = ad.concat([h_fw, h_bw], axis=1)
        scores = ad.add(ad.linear(enc, self.leaves["head_w"]),
                        self.leaves["head_b"])
        flat = ad.reshape(scores, (-1,))
        self.p = ad.segment_softmax(flat, np.zeros(len(users), dtype=np.intp), 1)
        self.users = list(users)


def score_tasks(state, users, fresh=None):
    """Sampling probability per candidate task; a valid distribution."""
    return ScoreGraph(state, users, fresh=fresh)


def sample_batch(p, batch_size, rng):
    """Draw `batch_size` distinct indices, sequentially proportional to
    p with renormalization after each draw."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise DegenerateDistributionError("invalid probability vector")
    if batch_size > p.size:
        raise ValueError("batch larger than candidate pool")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    remaining = np.arange(p.size)
    weights = p.copy()
    chosen = []
    for _ in range(batch_size):
        tot = weights.sum()
        probs = np.full(weights.size, 1.0 / weights.size) if tot <= 0 \
            else weights / tot
        k = rng.choice(weights.size, p=probs)
        chosen.append(int(remaining[k]))
        remaining = np.delete(remaining, k)
        weights = np.delete(weights, k)
    return chosen


def update_scheduler(state, graph, sampled_idx, query_losses, similarities,
                     lr=None):
    """Move the scheduler parameters along the surrogate gradient and
    append the batch's fresh (loss, similarity) pairs to the per-task
    histories; with lr = 0 only the histories change.

    `query_losses` are the sampled tasks' query losses after the global
    step, treated as constants.
    """
    cfg = state.config
    for idx, loss, sim in zip(sampled_idx, query_losses, similarities):
        state.record(graph.users[idx], loss, sim)
    lr = cfg.lr if lr is None else lr
    losses = np.asarray(query_losses, dtype=np.float64)
    p_sel = ad.gather(graph.p, np.asarray(sampled_idx, dtype=np.intp))
    if cfg.mode == "reweight":
        surrogate = ad.asum(ad.mul(p_sel, losses))
    elif cfg.mode == "score_function":
        advantage = losses - losses.mean()
        surrogate = ad.asum(ad.mul(ad.log(p_sel), advantage))
    else:
        raise ValueError(f"unknown scheduler mode: {cfg.mode}")
    if cfg.entropy:
        # entropy bonus over the whole candidate distribution keeps the
        # policy from collapsing onto a few low-loss tasks
        neg_entropy = ad.asum(ad.mul(graph.p, ad.log(graph.p)))
        surrogate = ad.add(surrogate, ad.mul(neg_entropy,
                                             np.float64(cfg.entropy)))
    if lr != 0.0:
        grads = {k: g for k, g in zip(
            graph.leaves, ad.grad(surrogate, list(graph.leaves.values())))}
        sgd_step(state.delta, grads, lr)
    return state
