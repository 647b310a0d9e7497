"""Submodular-supermodular minimization with permutation-driven bounds.

The pipeline: characterize the function as a cut graph, suppress as much
negative edge mass as possible by variable flips, then split into a
submodular graph (solved exactly by max-flow) and a residual supermodular
graph.  If the residual is empty the single cut is a certified global
minimum.  Otherwise each iteration draws permutations consistent with the
incumbent labeling, replaces the supermodular part by its tight modular
upper bound along each permutation chain, and solves the resulting
submodular proxy exactly.  Proxy minima never exceed the incumbent energy,
so accepted moves descend monotonically and the loop stops at the first
iteration that fails to improve.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chargraph import CharGraph, characterize
from .maxflow import build_flownet, set_modular_weights
from .qpbf import Labeling, Qpbf, evaluate

DEFAULT_MAX_ITERATIONS = 100
DEFAULT_PERMUTATIONS = 5
_INVARIANT_TOL = 1e-6

ImprovementCallback = Callable[[int, float, Labeling], None]


@dataclass
class ModularFn:
    """Modular set function sum_u weights[u]*x_u + const."""

    weights: np.ndarray
    const: float = 0.0

    def evaluate(self, x: Labeling | np.ndarray) -> float:
        vals = x.values if isinstance(x, Labeling) else np.asarray(x)
        return float(self.weights @ vals + self.const)


@dataclass
class EsspReport:
    labeling: Labeling
    energy: float
    certified: bool
    iterations: int
    n_flips: int
    flip_set: list[int] = field(default_factory=list)
    energy_history: list[float] = field(default_factory=list)


def consistent_permutation(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random permutation whose prefix chain passes through {u : x[u] = 1}.

    All 1-labeled ids precede all 0-labeled ids; order within each group is
    uniform.  The modular approximation along such a chain is tight at x.
    """
    ones = np.flatnonzero(x == 1)
    zeros = np.flatnonzero(x != 1)
    return np.concatenate([rng.permutation(ones), rng.permutation(zeros)])


def modular_approximation(sup: CharGraph, perm: np.ndarray) -> ModularFn:
    """Tight modular upper bound of a supermodular cut graph along a chain.

    Node weights are the marginal gains of adding each node, in permutation
    order, to the growing prefix set: an edge pays its (negative) capacity
    to whichever endpoint appears first and recoups it from the second.
    The bound dominates the graph's cut value everywhere and matches it on
    every prefix of the permutation.
    """
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(sup.n)):
        raise ValueError("perm must be a permutation of all node ids")
    eu, ev, cap = sup._edge_arrays()
    if np.any(cap > 0):
        raise ValueError("supermodular graph has a positive edge capacity")
    weights = np.zeros(sup.n)
    if cap.size:
        pos = np.empty(sup.n, dtype=np.int64)
        pos[perm] = np.arange(sup.n)
        u_first = pos[eu] < pos[ev]
        first = np.where(u_first, eu, ev)
        second = np.where(u_first, ev, eu)
        np.add.at(weights, first, cap)
        np.add.at(weights, second, -cap)
    return ModularFn(weights, 0.0)


class _CutArrays:
    """Vectorized cut evaluation over a frozen edge list."""

    def __init__(self, g: CharGraph):
        self.eu, self.ev, self.cap = g._edge_arrays()
        self.ind_o = g.ind_o.copy()
        self.ind_obar = g.ind_obar.copy()
        self.const = g.const

    def value(self, x: np.ndarray) -> float:
        total = float(self.ind_o @ x + self.ind_obar @ (1 - x)) + self.const
        if self.cap.size:
            total += float(self.cap[x[self.eu] != x[self.ev]].sum())
        return total


def _pipeline(
    f: Qpbf,
    g: CharGraph,
    init: Labeling,
    pinned: np.ndarray,
    allow_certify: bool,
    seed: int,
    max_iterations: int,
    permutations: int,
    on_improvement: ImprovementCallback | None,
    time_budget: float | None,
) -> EsspReport:
    n = f.n
    rng = np.random.default_rng(seed)
    deadline = None if time_budget is None else (
        time.perf_counter() + time_budget)
    flip_set, n_flips = g.suppress_supermodular()
    sub, sup = g.decompose()
    flipped = g.flipped.copy()

    def to_original(x_graph: np.ndarray) -> Labeling:
        out = np.where(flipped, 1 - x_graph, x_graph).astype(np.int8)
        return Labeling(out)

    if sup.num_variable_edges == 0:
        net, const = build_flownet(sub)
        flow, side = net.max_flow(net.source, net.sink)
        x_graph = side[:n].astype(np.int8)
        x_graph[pinned] = _graph_vals(init, flipped)[pinned]
        labeling = to_original(x_graph)
        energy = evaluate(f, labeling)
        if on_improvement is not None:
            on_improvement(0, energy, labeling)
        return EsspReport(labeling, energy, certified=allow_certify,
                          iterations=0, n_flips=n_flips, flip_set=flip_set,
                          energy_history=[energy])

    sub_arrs = _CutArrays(sub)
    sup_arrs = _CutArrays(sup)
    net, _ = build_flownet(sub)
    net.snapshot()

    x_prev = _graph_vals(init, flipped)
    e_prev = sub_arrs.value(x_prev) + sup_arrs.value(x_prev)
    history = [e_prev]
    if on_improvement is not None:
        on_improvement(0, e_prev, to_original(x_prev))

    cached_weights: np.ndarray | None = None
    cached: tuple[np.ndarray, float] | None = None
    rounds = 0
    for it in range(1, max_iterations + 1):
        if deadline is not None and time.perf_counter() > deadline:
            break
        rounds = it
        best_x = None
        best_e = np.inf
        for _ in range(permutations):
            perm = consistent_permutation(x_prev, rng)
            m = modular_approximation(sup, perm)
            if cached_weights is not None and np.array_equal(
                    m.weights, cached_weights):
                x_cand, e_cand = cached
            else:
                net.reset()
                shift = set_modular_weights(net, sub, m.weights)
                flow, side = net.max_flow(net.source, net.sink)
                x_cand = side[:n].astype(np.int8)
                x_cand[pinned] = x_prev[pinned]
                bound = flow + shift + sub.const + m.const
                e_cand = sub_arrs.value(x_cand) + sup_arrs.value(x_cand)
                tol = _INVARIANT_TOL * (1.0 + abs(bound))
                if e_cand > bound + tol or bound > e_prev + tol:
                    raise RuntimeError("descent invariant violated")
                cached_weights = m.weights
                cached = (x_cand, e_cand)
            if e_cand < best_e:
                best_x, best_e = x_cand, e_cand
        if best_x is not None and best_e < e_prev:
            x_prev, e_prev = best_x, best_e
            history.append(e_prev)
            if on_improvement is not None:
                on_improvement(it, e_prev, to_original(x_prev))
        else:
            break

    labeling = to_original(x_prev)
    energy = evaluate(f, labeling)
    return EsspReport(labeling, energy, certified=False, iterations=rounds,
                      n_flips=n_flips, flip_set=flip_set,
                      energy_history=history)


def _graph_vals(x: Labeling, flipped: np.ndarray) -> np.ndarray:
    vals = x.values.astype(np.int8).copy()
    vals[flipped] = 1 - vals[flipped]
    return vals


def essp_minimize(
    f: Qpbf,
    init: Labeling | None = None,
    seed: int = 0,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    permutations: int = DEFAULT_PERMUTATIONS,
    on_improvement: ImprovementCallback | None = None,
    time_budget: float | None = None,
) -> EsspReport:
    """Minimize a QPBF; the report is a certified global minimum whenever
    suppression removes every negative edge.

    `init` (complete, original space; all zeros when omitted) seeds the
    incumbent for the iterative phase, so a good labeling from another
    solver can be refined without ever getting worse.
    """
    if init is None:
        init = Labeling(np.zeros(f.n, dtype=np.int8))
    _check_init(init, f.n)
    g = characterize(f)
    pinned = np.zeros(f.n, dtype=bool)
    return _pipeline(f, g, init, pinned, True, seed, max_iterations,
                     permutations, on_improvement, time_budget)


def essp_refine_local(
    f: Qpbf,
    init: Labeling,
    free_ids: Sequence[int] | np.ndarray,
    seed: int = 0,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    permutations: int = DEFAULT_PERMUTATIONS,
    on_improvement: ImprovementCallback | None = None,
    time_budget: float | None = None,
) -> EsspReport:
    """Improve `init` while touching only the variables in free_ids.

    The fixed variables are folded into indicator edges and the constant
    before the pipeline runs, so the subproblem is solved on the full
    function restricted to the free set.  An empty free set returns init
    unchanged.
    """
    _check_init(init, f.n)
    free = np.zeros(f.n, dtype=bool)
    free_ids = np.asarray(list(free_ids), dtype=np.int64)
    if free_ids.size:
        if free_ids.min() < 0 or free_ids.max() >= f.n:
            raise ValueError("free_ids out of range")
        free[free_ids] = True
    if not free.any():
        return EsspReport(init.copy(), evaluate(f, init), certified=False,
                          iterations=0, n_flips=0,
                          energy_history=[evaluate(f, init)])
    g = characterize(f)
    if free.all():
        return _pipeline(f, g, init, np.zeros(f.n, dtype=bool), False, seed,
                         max_iterations, permutations, on_improvement,
                         time_budget)
    partial = Labeling.empty(f.n)
    partial.values[~free] = init.values[~free]
    g.simplify(partial)
    return _pipeline(f, g, init, ~free, False, seed, max_iterations,
                     permutations, on_improvement, time_budget)


def _check_init(init: Labeling, n: int) -> None:
    if init.n != n:
        raise ValueError("init length mismatch")
    if not init.is_complete:
        raise ValueError("init must be a complete labeling")
