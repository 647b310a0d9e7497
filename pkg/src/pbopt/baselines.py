"""Comparison solvers: random labelings, ICM, min-sum BP, QPBO, QPBO-I.

Every solver reports its energy through evaluate() on the labeling it
returns, so reported numbers can never drift from what the function
actually assigns.  QPBO may leave variables unresolved; such variables
come back Unlabeled and the caller decides how to complete them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .chargraph import characterize
from .maxflow import FlowNet
from .qpbf import UNLABELED, Labeling, Qpbf, evaluate, to_standard

ImprovementCallback = Callable[[int, float, Labeling], None]


@dataclass
class SolverOpts:
    seed: int = 0
    max_iterations: int = 500
    damping: float = 0.5
    time_budget: float | None = None
    on_improvement: ImprovementCallback | None = None

    def __post_init__(self):
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.time_budget is not None and self.time_budget <= 0:
            raise ValueError("time_budget must be positive")


def random_labeling(n: int, seed: int) -> Labeling:
    """Uniform iid fair labels; identical for identical seeds."""
    rng = np.random.default_rng(seed)
    return Labeling(rng.integers(0, 2, size=n).astype(np.int8))


def _std_neighbors(f: Qpbf):
    std = to_standard(f)
    nbrs: list[list[tuple[int, float]]] = [[] for _ in range(f.n)]
    for (u, v), q in std.quad.items():
        nbrs[u].append((v, q))
        nbrs[v].append((u, q))
    return std, nbrs


def icm(f: Qpbf, init: Labeling, opts: SolverOpts | None = None
        ) -> tuple[Labeling, float]:
    """Iterated conditional modes: sweep variables in id order, setting each
    to its conditional minimizer, until a sweep changes nothing.  Exact ties
    keep the current value, so a 1-flip-stable input returns unchanged."""
    opts = opts or SolverOpts()
    if not init.is_complete or init.n != f.n:
        raise ValueError("icm needs a complete labeling of matching length")
    std, nbrs = _std_neighbors(f)
    x = init.values.astype(np.int8).copy()
    energy = evaluate(f, init)
    deadline = None if opts.time_budget is None else (
        time.perf_counter() + opts.time_budget)
    flips = 0
    for _ in range(opts.max_iterations):
        changed = False
        for u in range(f.n):
            diff = std.linear[u]
            for v, q in nbrs[u]:
                if x[v]:
                    diff += q
            want = 1 if diff < 0 else (0 if diff > 0 else x[u])
            if want != x[u]:
                energy += diff if want == 1 else -diff
                x[u] = want
                changed = True
                flips += 1
                if opts.on_improvement is not None:
                    opts.on_improvement(flips, energy, Labeling(x.copy()))
        if not changed:
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
    out = Labeling(x)
    return out, evaluate(f, out)


def bp_min_sum(f: Qpbf, opts: SolverOpts | None = None
               ) -> tuple[Labeling, float]:
    """Synchronous damped min-sum message passing on the pairwise graph.

    Messages are normalized by subtracting their min entry; iteration stops
    when the largest message change drops below 1e-6 or max_iterations is
    reached.  Variables decode by min belief (ties to 0).  Exact on trees.
    """
    opts = opts or SolverOpts()
    n = f.n
    unary = f.unary.astype(np.float64)
    pairs = sorted(f.pairwise.items())
    m = len(pairs)
    if m == 0:
        beliefs = unary
        vals = (beliefs[:, 1] < beliefs[:, 0]).astype(np.int8)
        lab = Labeling(vals)
        e = evaluate(f, lab)
        if opts.on_improvement is not None:
            opts.on_improvement(0, e, lab)
        return lab, e
    src = np.empty(2 * m, dtype=np.int64)
    dst = np.empty(2 * m, dtype=np.int64)
    tabs = np.empty((2 * m, 2, 2))
    for i, ((u, v), t) in enumerate(pairs):
        tab = np.array(t, dtype=np.float64).reshape(2, 2)
        src[2 * i], dst[2 * i] = u, v
        tabs[2 * i] = tab
        src[2 * i + 1], dst[2 * i + 1] = v, u
        tabs[2 * i + 1] = tab.T
    msg = np.zeros((2 * m, 2))
    incoming = np.zeros((n, 2))
    deadline = None if opts.time_budget is None else (
        time.perf_counter() + opts.time_budget)
    d = opts.damping
    for _ in range(opts.max_iterations):
        rev = msg.reshape(m, 2, 2)[:, ::-1].reshape(2 * m, 2)
        base = unary[src] + incoming[src] - rev
        new = (tabs + base[:, :, None]).min(axis=1)
        new -= new.min(axis=1, keepdims=True)
        damped = d * msg + (1.0 - d) * new
        delta = float(np.abs(damped - msg).max())
        msg = damped
        incoming[:] = 0.0
        np.add.at(incoming, dst, msg)
        if delta < 1e-6:
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
    beliefs = unary + incoming
    vals = (beliefs[:, 1] < beliefs[:, 0]).astype(np.int8)
    lab = Labeling(vals)
    e = evaluate(f, lab)
    if opts.on_improvement is not None:
        opts.on_improvement(0, e, lab)
    return lab, e


def qpbo(f: Qpbf) -> Labeling:
    """Roof-duality partial labeling via the doubled network.

    Each variable owns a node pair (u, u-bar); every standard-form term is
    split into two half-capacity arcs placed symmetrically, negative parts
    folding their span into the constant.  After max-flow, a variable is
    labeled only when its two nodes fall on opposite cut sides; every
    labeled variable then agrees with at least one global minimizer, and a
    submodular input labels everything at the optimum.
    """
    std = to_standard(f)
    n = f.n
    net = FlowNet(2 * n + 2)
    s, t = 2 * n, 2 * n + 1

    def add_linear(u: int, l: float) -> None:
        if l >= 0:
            net.add_arc(s, u, 0.5 * l)
            net.add_arc(n + u, t, 0.5 * l)
        else:
            net.add_arc(u, t, -0.5 * l)
            net.add_arc(s, n + u, -0.5 * l)

    for u in range(n):
        add_linear(u, float(std.linear[u]))
    for (u, v), q in sorted(std.quad.items()):
        if q >= 0:
            net.add_arc(n + u, v, 0.5 * q)
            net.add_arc(n + v, u, 0.5 * q)
        else:
            net.add_arc(v, u, -0.5 * q)
            net.add_arc(n + u, n + v, -0.5 * q)
            add_linear(u, q)
    _, side = net.max_flow(s, t)
    vals = np.full(n, UNLABELED, dtype=np.int8)
    resolved = side[:n] != side[n:2 * n]
    vals[resolved] = side[:n][resolved]
    return Labeling(vals)


def qpbo_improve(f: Qpbf, init: Labeling, opts: SolverOpts | None = None
                 ) -> tuple[Labeling, float]:
    """QPBO-I: the first round adopts the plain QPBO labeling, and every
    later round fixes a fresh random half of the variables at their current
    labels, solves the rest to optimality-or-partial with QPBO on the
    restricted function, and keeps the result when it strictly improves.
    The autarky property makes the energy non-increasing either way."""
    opts = opts or SolverOpts()
    if not init.is_complete or init.n != f.n:
        raise ValueError("qpbo_improve needs a complete labeling")
    n = f.n
    rng = np.random.default_rng(opts.seed)
    x = init.values.astype(np.int8).copy()
    energy = evaluate(f, init)
    deadline = None if opts.time_budget is None else (
        time.perf_counter() + opts.time_budget)
    base_graph = characterize(f)
    for it in range(1, opts.max_iterations + 1):
        if it == 1 or n // 2 == 0:
            partial = qpbo(f)
            free_mask = np.ones(n, dtype=bool)
        else:
            fixed_ids = rng.choice(n, size=n // 2, replace=False)
            free_mask = np.ones(n, dtype=bool)
            free_mask[fixed_ids] = False
            held = Labeling.empty(n)
            held.values[fixed_ids] = x[fixed_ids]
            g = base_graph.copy()
            g.simplify(held)
            partial = qpbo(g.to_qpbf())
        cand = x.copy()
        adopt = free_mask & (partial.values != UNLABELED)
        cand[adopt] = partial.values[adopt]
        cand_lab = Labeling(cand)
        cand_e = evaluate(f, cand_lab)
        if cand_e < energy:
            x, energy = cand, cand_e
            if opts.on_improvement is not None:
                opts.on_improvement(it, energy, Labeling(x.copy()))
        if deadline is not None and time.perf_counter() > deadline:
            break
    out = Labeling(x)
    return out, evaluate(f, out)
