"""Meta-training driver: candidate scoring, task sampling, local and
global updates, scheduler updates, and a line-delimited training log.
"""

import time

import numpy as np

from . import scheduler as sched
from .meta import (MetaConfig, global_update, local_update, query_gamma_grads,
                   sample_kg_quads)
from .model import PropagationGraph, bpr_loss_node
from .optim import Adam


class MetaTrainer:
    """Drives Algorithm-style meta-training over a fixed task population.

    With the scheduler disabled the loop reduces exactly to uniform task
    sampling; no scheduler state is created or consulted.
    """

    def __init__(self, params, ckg, tasks, run_cfg, seed=0):
        self.params = params
        self.ckg = ckg
        self.tasks = list(tasks)
        self.cfg = run_cfg
        self.rng = np.random.default_rng(seed)
        self.opt = Adam(run_cfg.global_lr)
        self.meta = MetaConfig(local_lr=run_cfg.local_lr,
                               global_lr=run_cfg.global_lr,
                               local_updates=run_cfg.local_updates,
                               task_batch=run_cfg.task_batch,
                               kg_batch=run_cfg.kg_batch,
                               query_size=run_cfg.query_size)
        self.sched_state = None
        if run_cfg.use_scheduler:
            s_cfg = sched.SchedulerConfig(hidden=run_cfg.sched_hidden,
                                          window=run_cfg.sched_window,
                                          lr=run_cfg.sched_lr,
                                          mode=run_cfg.sched_mode,
                                          entropy=run_cfg.sched_entropy)
            self.sched_state = sched.init_state(
                s_cfg, np.random.default_rng(self.rng.integers(2 ** 31)))
        self.log = []
        self.step_count = 0
        self.probability_trace = []   # (users, probabilities) per step

    # -- scheduler features --------------------------------------------------

    def _features(self, pool):
        """Per-candidate (query loss, support/query gradient similarity)
        at the pre-update point. Each task is propagated with its own
        query edges hidden, matching the local-update view; otherwise the
        query items leak into the user's neighborhood and every task
        looks easy."""
        gamma_keys = [f"gamma.{k}" for k in self.params.gamma]
        feats = []
        support_losses = []
        for task in pool:
            graph = PropagationGraph(self.params, self.ckg,
                                     keep_mask=task.keep_mask(self.ckg))
            s_tr = task.fresh_support(self.ckg, self.rng)
            q_tr = task.fresh_query(self.ckg, self.rng)
            loss_s = bpr_loss_node(graph.e_star, self.ckg, s_tr)
            g_s = graph.grads(loss_s, gamma_keys)
            loss_q = bpr_loss_node(graph.e_star, self.ckg, q_tr)
            g_q = graph.grads(loss_q, gamma_keys)
            sim = sum(float(np.dot(g_s[k].ravel(), g_q[k].ravel()))
                      for k in gamma_keys)
            feats.append((float(loss_q.value) / len(q_tr), sim))
            support_losses.append(float(loss_s.value) / len(s_tr))
        return feats, support_losses

    def _batch_losses(self, batch):
        """Support/query loss values for the log (uniform-sampling path)."""
        graph = PropagationGraph(self.params, self.ckg)
        s_vals, q_vals = [], []
        for task in batch:
            s_tr = task.fresh_support(self.ckg, self.rng)
            q_tr = task.fresh_query(self.ckg, self.rng)
            s_vals.append(float(bpr_loss_node(graph.e_star, self.ckg,
                                              s_tr).value) / len(s_tr))
            q_vals.append(float(bpr_loss_node(graph.e_star, self.ckg,
                                              q_tr).value) / len(q_tr))
        return s_vals, q_vals

    # -- one global step -----------------------------------------------------

    def step(self):
        t0 = time.perf_counter()
        cfg = self.cfg
        pool = self.tasks
        if cfg.candidate_pool and cfg.candidate_pool < len(self.tasks):
            idx = self.rng.choice(len(self.tasks), size=cfg.candidate_pool,
                                  replace=False)
            pool = [self.tasks[k] for k in sorted(idx)]

        score_graph = None
        feats = None
        if self.sched_state is not None:
            feats, support_losses = self._features(pool)
            users = [t.user for t in pool]
            score_graph = sched.score_tasks(self.sched_state, users, fresh=feats)
            p = score_graph.p.value
            self.probability_trace.append((users, p.copy()))
            sampled = sched.sample_batch(p, min(cfg.task_batch, len(pool)),
                                         self.rng)
        else:
            sampled = sorted(self.rng.choice(
                len(pool), size=min(cfg.task_batch, len(pool)),
                replace=False).tolist())
            support_losses = None
        batch = [pool[k] for k in sampled]

        adapted = [local_update(self.params, self.ckg, task,
                                self.meta.local_lr, self.rng,
                                m=self.meta.local_updates)
                   for task in batch]
        quads = sample_kg_quads(self.ckg, self.meta.kg_batch, self.rng)
        q_losses, kg_loss = global_update(self.params, self.ckg, batch,
                                          adapted, quads, self.opt, self.rng,
                                          use_kg=self.cfg.use_kg_loss)

        if self.sched_state is not None:
            sims = [feats[k][1] for k in sampled]
            sched.update_scheduler(self.sched_state, score_graph, sampled,
                                   q_losses, sims, lr=cfg.sched_lr)
            s_loss = float(np.mean([support_losses[k] for k in sampled]))
        else:
            s_vals, _ = self._batch_losses(batch)
            s_loss = float(np.mean(s_vals))

        self.step_count += 1
        wall_ms = (time.perf_counter() - t0) * 1000.0
        self.log.append(
            f"step={self.step_count} support_loss={s_loss:.6f} "
            f"query_loss={float(np.mean(q_losses)):.6f} "
            f"kg_loss={kg_loss:.6f} wall_ms={wall_ms:.3f}")
        return self.log[-1]

    def run(self, steps):
        for _ in range(steps):
            self.step()
        return self.params

    def mean_probability(self, users):
        """Mean sampling probability assigned to `users` across the
        recorded trace (scheduler diagnostics)."""
        users = set(users)
        vals = []
        for trace_users, p in self.probability_trace:
            vals.extend(p[k] for k, u in enumerate(trace_users) if u in users)
        return float(np.mean(vals)) if vals else 0.0
