"""Max-flow / min-cut on an arena-style arc network.

Arcs are stored in pairs (arc, arc^1 is its reverse), so residual updates
and reverse traversal need no extra tables.  The network is built once and
frozen; capacities stay mutable afterwards for solvers that re-run flows on
a fixed topology with different terminal weights.

The Dinic kernel is compiled with numba when available and falls back to
the identical pure-Python code otherwise.  Admissibility uses a small eps
so that float residue never manufactures augmenting paths.
"""

from __future__ import annotations

import numpy as np

from .chargraph import CharGraph

EPS = 1e-12

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def _dinic_py(first, nxt, arc_to, cap, s, t, eps):
    n = first.size
    level = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    path = np.empty(n + 1, dtype=np.int64)
    flow = 0.0
    while True:
        level[:] = -1
        level[s] = 0
        queue[0] = s
        qh, qt = 0, 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            a = first[u]
            while a != -1:
                v = arc_to[a]
                if cap[a] > eps and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
                a = nxt[a]
        if level[t] < 0:
            break
        for i in range(n):
            it[i] = first[i]
        top = 0
        u = s
        while True:
            if u == t:
                bott = np.inf
                for i in range(top):
                    if cap[path[i]] < bott:
                        bott = cap[path[i]]
                for i in range(top):
                    cap[path[i]] -= bott
                    cap[path[i] ^ 1] += bott
                flow += bott
                newtop = top
                for i in range(top):
                    if cap[path[i]] <= eps:
                        newtop = i
                        break
                top = newtop
                u = s if top == 0 else arc_to[path[top - 1]]
                continue
            a = it[u]
            found = False
            while a != -1:
                v = arc_to[a]
                if cap[a] > eps and level[v] == level[u] + 1:
                    found = True
                    break
                a = nxt[a]
            it[u] = a
            if found:
                path[top] = a
                top += 1
                u = arc_to[a]
            else:
                level[u] = -2
                if top == 0:
                    break
                top -= 1
                p = path[top]
                u = arc_to[p ^ 1]
                it[u] = nxt[p]
    return flow


def _reach_sink_py(first, nxt, arc_to, cap, t, eps):
    n = first.size
    reach = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    reach[t] = True
    queue[0] = t
    qh, qt = 0, 1
    while qh < qt:
        v = queue[qh]
        qh += 1
        a = first[v]
        while a != -1:
            # arc a runs v -> w, so its pair runs w -> v; residual capacity
            # on the pair means w still reaches the sink through v
            w = arc_to[a]
            if not reach[w] and cap[a ^ 1] > eps:
                reach[w] = True
                queue[qt] = w
                qt += 1
            a = nxt[a]
    return reach


if HAVE_NUMBA:
    _dinic = njit(cache=True)(_dinic_py)
    _reach_sink = njit(cache=True)(_reach_sink_py)
else:  # pragma: no cover
    _dinic = _dinic_py
    _reach_sink = _reach_sink_py


class FlowNet:
    """Directed flow network with paired arcs and a freezeable topology."""

    def __init__(self, num_nodes: int):
        if num_nodes < 2:
            raise ValueError("a flow network needs at least two nodes")
        self.num_nodes = int(num_nodes)
        self._to: list[int] = []
        self._nxt: list[int] = []
        self._first = np.full(self.num_nodes, -1, dtype=np.int64)
        self._cap: list[float] | np.ndarray = []
        self._frozen = False
        self._cap0: np.ndarray | None = None
        # populated by build_flownet for arena-style reuse
        self.source: int | None = None
        self.sink: int | None = None
        self.src_arc: np.ndarray | None = None
        self.snk_arc: np.ndarray | None = None

    @property
    def num_arcs(self) -> int:
        return len(self._to)

    def add_arc(self, u: int, v: int, cap: float, rcap: float = 0.0) -> int:
        """Add the arc u->v (capacity cap) and its reverse (rcap).

        Returns the forward arc id; the reverse is id^1.
        """
        if self._frozen:
            raise RuntimeError("topology is frozen")
        if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
            raise ValueError(f"arc endpoints ({u}, {v}) out of range")
        if u == v:
            raise ValueError("self-arcs are not allowed")
        a = len(self._to)
        self._to.extend((v, u))
        self._cap.extend((float(cap), float(rcap)))
        self._nxt.append(self._first[u])
        self._first[u] = a
        self._nxt.append(self._first[v])
        self._first[v] = a + 1
        return a

    def freeze(self) -> None:
        if self._frozen:
            return
        self._to_arr = np.array(self._to, dtype=np.int64)
        self._nxt_arr = np.array(self._nxt, dtype=np.int64)
        self._cap = np.array(self._cap, dtype=np.float64)
        self._frozen = True

    @property
    def cap(self) -> np.ndarray:
        self.freeze()
        return self._cap

    def set_cap(self, arc: int, cap: float) -> None:
        self.freeze()
        self._cap[arc] = cap

    def snapshot(self) -> None:
        """Remember current capacities; reset() restores them."""
        self.freeze()
        self._cap0 = self._cap.copy()

    def reset(self) -> None:
        if self._cap0 is None:
            raise RuntimeError("no snapshot to reset to")
        self._cap[:] = self._cap0

    def max_flow(self, s: int, t: int) -> tuple[float, np.ndarray]:
        """Run Dinic from s to t.  Capacities become residual in place.

        Returns (flow value, side), where side[v] is 1 when v lies on the
        sink side of the certified minimum cut and 0 otherwise.  A node
        still able to reach the sink in the residual network is sink-side;
        nodes reachable from the source, and nodes connected to neither
        terminal, come out 0.
        """
        self.freeze()
        if s == t:
            raise ValueError("source and sink must differ")
        flow = _dinic(self._first, self._nxt_arr, self._to_arr, self._cap,
                      np.int64(s), np.int64(t), EPS)
        reach = _reach_sink(self._first, self._nxt_arr, self._to_arr,
                            self._cap, np.int64(t), EPS)
        return float(flow), reach.astype(np.int8)


def warmup() -> None:
    """Trigger kernel compilation on a throwaway two-node network."""
    net = FlowNet(2)
    net.add_arc(0, 1, 1.0)
    net.max_flow(0, 1)


def build_flownet(
    sub: CharGraph,
    weights: np.ndarray | None = None,
    extra_const: float = 0.0,
) -> tuple[FlowNet, float]:
    """Flow network whose min cut minimizes sub's cut+const plus a modular
    term sum_u weights[u]*x_u + extra_const.

    Node u keeps its id; source (the o terminal) is n, sink (o-bar) n+1.
    Every variable gets both terminal arc slots so that callers can rerun
    the same arena with different modular weights: per node the net weight
    w = ind_o - ind_obar + weights goes on the source arc when w >= 0,
    else on the sink arc as -w with w itself folded into the constant.
    Nonnegative variable edges become antiparallel arc pairs of equal
    capacity; a negative variable edge is an error here.

    Returns (net, const) with min_x (cut+const+modular) == max flow + const.
    """
    n = sub.n
    if weights is None:
        weights = np.zeros(n)
    if len(weights) != n:
        raise ValueError("weights length mismatch")
    net = FlowNet(n + 2)
    s, t = n, n + 1
    const = float(sub.const) + float(extra_const)
    src_arc = np.empty(n, dtype=np.int64)
    snk_arc = np.empty(n, dtype=np.int64)
    for u in range(n):
        w = float(sub.ind_o[u] - sub.ind_obar[u] + weights[u])
        const += float(sub.ind_obar[u])
        if w >= 0:
            src_arc[u] = net.add_arc(s, u, w)
            snk_arc[u] = net.add_arc(u, t, 0.0)
        else:
            src_arc[u] = net.add_arc(s, u, 0.0)
            snk_arc[u] = net.add_arc(u, t, -w)
            const += w
    for (u, v), c in sorted(sub.variable_edges().items()):
        if c < 0:
            raise ValueError(f"negative variable edge ({u}, {v}) in flow build")
        net.add_arc(u, v, c, rcap=c)
    net.source = s
    net.sink = t
    net.src_arc = src_arc
    net.snk_arc = snk_arc
    net.freeze()
    return net, const


def set_modular_weights(net: FlowNet, sub: CharGraph,
                        weights: np.ndarray) -> float:
    """Re-point the terminal arcs of a build_flownet arena at new modular
    weights, returning the matching constant shift (sub.const excluded).

    Caller is responsible for restoring edge capacities (net.reset()) if a
    flow has already consumed them.
    """
    const = 0.0
    for u in range(sub.n):
        w = float(sub.ind_o[u] - sub.ind_obar[u] + weights[u])
        const += float(sub.ind_obar[u])
        if w >= 0:
            net.cap[net.src_arc[u]] = w
            net.cap[net.snk_arc[u]] = 0.0
        else:
            net.cap[net.src_arc[u]] = 0.0
            net.cap[net.snk_arc[u]] = -w
            const += w
    return const
