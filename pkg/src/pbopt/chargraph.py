"""Undirected graph characterization of a QPBF.

The graph has one node per variable plus two indicator terminals: o (fixed
label 0) and o-bar (fixed label 1).  For every complete labeling, the total
capacity of cut edges plus the accumulated constant equals the energy of the
source function.  All transforms here (variable flips, indicator flips,
supermodular suppression, simplification under partial labelings) preserve
that identity, which the test suite checks exhaustively.

Capacity conventions: an indicator capacity on the o side contributes
cap * x_u to the cut, on the o-bar side cap * (1 - x_u); a variable edge
contributes cap * (x_u XOR x_v).  Indicator capacities are kept canonical
(at most one side nonzero, nonnegative) except transiently inside
flip_indicator, which is the raw reparameterization move itself.
"""

from __future__ import annotations

from typing import IO, Iterable

import numpy as np

from .qpbf import Labeling, Qpbf

O_SIDE = "o"
OBAR_SIDE = "ō"  # "ō", the label-1 terminal

_SUPPRESS_SAFETY_FACTOR = 10


class CharGraph:
    """Mutable graph characterization; clone with copy() for what-if transforms."""

    def __init__(self, n: int, const: float = 0.0):
        self.n = int(n)
        self.ind_o = np.zeros(self.n, dtype=np.float64)
        self.ind_obar = np.zeros(self.n, dtype=np.float64)
        self.adj: list[dict[int, float]] = [dict() for _ in range(self.n)]
        self.const = float(const)
        self.flipped = np.zeros(self.n, dtype=bool)

    # -- construction --------------------------------------------------------

    def add_variable_edge(self, u: int, v: int, cap: float) -> None:
        """Accumulate capacity on the unordered edge (u, v); zero edges drop."""
        if u == v:
            raise ValueError(f"self-edge on node {u}")
        cap = float(cap)
        new = self.adj[u].get(v, 0.0) + cap
        if new == 0.0:
            self.adj[u].pop(v, None)
            self.adj[v].pop(u, None)
        else:
            self.adj[u][v] = new
            self.adj[v][u] = new

    def add_indicator(self, u: int, side: str, cap: float) -> None:
        if side == O_SIDE:
            self.ind_o[u] += cap
        elif side == OBAR_SIDE:
            self.ind_obar[u] += cap
        else:
            raise ValueError(f"unknown terminal {side!r}")

    def variable_edges(self) -> dict[tuple[int, int], float]:
        return {
            (u, v): c
            for u in range(self.n)
            for v, c in self.adj[u].items()
            if u < v
        }

    @property
    def num_variable_edges(self) -> int:
        return sum(len(a) for a in self.adj) // 2

    def copy(self) -> "CharGraph":
        g = CharGraph(self.n, self.const)
        g.ind_o = self.ind_o.copy()
        g.ind_obar = self.ind_obar.copy()
        g.adj = [dict(a) for a in self.adj]
        g.flipped = self.flipped.copy()
        return g

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CharGraph):
            return NotImplemented
        return (
            self.n == other.n
            and self.const == other.const
            and np.array_equal(self.ind_o, other.ind_o)
            and np.array_equal(self.ind_obar, other.ind_obar)
            and np.array_equal(self.flipped, other.flipped)
            and self.adj == other.adj
        )

    # -- evaluation ----------------------------------------------------------

    def cut_value(self, x: Labeling) -> float:
        """Capacity crossing the cut induced by a complete labeling (no const)."""
        if x.n != self.n:
            raise ValueError(f"labeling length {x.n} != node count {self.n}")
        if not x.is_complete:
            raise ValueError("labeling must be complete")
        vals = x.values.astype(np.float64)
        total = float(self.ind_o @ vals + self.ind_obar @ (1.0 - vals))
        for u in range(self.n):
            xu = vals[u]
            for v, c in self.adj[u].items():
                if u < v and xu != vals[v]:
                    total += c
        return total

    def to_graph_labels(self, x_original: Labeling) -> Labeling:
        """Original-space labeling -> current (flipped) node labels."""
        out = x_original.values.copy()
        labeled = out >= 0
        out[labeled & self.flipped] = 1 - out[labeled & self.flipped]
        return Labeling(out)

    # flips form an involution, so both directions are the same XOR
    to_original_labels = to_graph_labels

    # -- canonical indicator form --------------------------------------------

    def _canon_indicator(self, u: int) -> None:
        net = self.ind_o[u] - self.ind_obar[u]
        if net >= 0.0:
            self.const += self.ind_obar[u]
            self.ind_o[u] = net
            self.ind_obar[u] = 0.0
        else:
            self.const += self.ind_o[u]
            self.ind_o[u] = 0.0
            self.ind_obar[u] = -net

    def normalize_indicators(self) -> None:
        """Fold every indicator capacity onto a single nonnegative side."""
        for u in range(self.n):
            self._canon_indicator(u)

    # -- transforms ----------------------------------------------------------

    def flip_variable(self, u: int) -> None:
        """Re-express node u in terms of its complement label.

        Incident variable-edge capacities are negated (their old sum moves to
        const), the two indicator capacities trade sides, and the flip mark
        toggles.  cut+const is preserved for every original labeling.
        """
        if not 0 <= u < self.n:
            raise ValueError(f"unknown node {u}")
        self.const += sum(self.adj[u].values())
        for v, c in list(self.adj[u].items()):
            self.adj[u][v] = -c
            self.adj[v][u] = -c
        self.ind_o[u], self.ind_obar[u] = self.ind_obar[u], self.ind_o[u]
        self._canon_indicator(u)
        self.flipped[u] = not self.flipped[u]

    def flip_indicator(self, subset: Iterable[int]) -> None:
        """Move each node's indicator capacity to the opposite terminal,
        negated, adding the moved capacity to const.  Raw move: the result
        may hold negative capacities until normalize_indicators() runs."""
        for u in subset:
            a, b = self.ind_o[u], self.ind_obar[u]
            self.ind_o[u] = -b
            self.ind_obar[u] = -a
            self.const += a + b

    def suppress_supermodular(self) -> tuple[list[int], int]:
        """Greedily flip variables dominated by negative edge mass.

        Each round recomputes, per node, the absolute sums of negative and of
        all incident variable-edge capacities; among nodes whose negative sum
        strictly exceeds the positive sum (ratio > 1/2), the highest ratio is
        flipped (ties to the lowest id) and the scan restarts.  On return the
        graph satisfies sum|negative| <= sum|positive| over variable edges.

        Returns (net flip-set as sorted ids, total number of flips applied).
        """
        eu, ev, cap = self._edge_arrays()
        incident: list[np.ndarray] = [
            np.flatnonzero((eu == u) | (ev == u)) for u in range(self.n)
        ]
        max_degree = max((len(a) for a in incident), default=0)
        safety = _SUPPRESS_SAFETY_FACTOR * self.n * max(max_degree, 1) + 64
        parity = np.zeros(self.n, dtype=bool)
        n_flips = 0
        while True:
            neg_part = np.minimum(cap, 0.0)
            pos_part = np.maximum(cap, 0.0)
            neg = np.zeros(self.n)
            pos = np.zeros(self.n)
            np.add.at(neg, eu, -neg_part)
            np.add.at(neg, ev, -neg_part)
            np.add.at(pos, eu, pos_part)
            np.add.at(pos, ev, pos_part)
            qualifying = np.flatnonzero(neg > pos)
            if qualifying.size == 0:
                break
            total = neg[qualifying] + pos[qualifying]
            ratio = neg[qualifying] / total
            u = int(qualifying[int(np.argmax(ratio))])
            idx = incident[u]
            self.const += float(cap[idx].sum())
            cap[idx] = -cap[idx]
            self.ind_o[u], self.ind_obar[u] = self.ind_obar[u], self.ind_o[u]
            self._canon_indicator(u)
            self.flipped[u] = not self.flipped[u]
            parity[u] = not parity[u]
            n_flips += 1
            if n_flips > safety:
                raise RuntimeError("suppression failed to terminate")
        for i in range(eu.size):
            u, v, c = int(eu[i]), int(ev[i]), float(cap[i])
            self.adj[u][v] = c
            self.adj[v][u] = c
        return [int(u) for u in np.flatnonzero(parity)], n_flips

    def _edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        edges = self.variable_edges()
        if not edges:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), np.zeros(0)
        keys = sorted(edges)
        eu = np.array([k[0] for k in keys], dtype=np.int64)
        ev = np.array([k[1] for k in keys], dtype=np.int64)
        cap = np.array([edges[k] for k in keys], dtype=np.float64)
        return eu, ev, cap

    def decompose(self) -> tuple["CharGraph", "CharGraph"]:
        """Split into (submodular part, supermodular part).

        The submodular graph keeps the indicator edges, the constant and all
        nonnegative variable edges; the supermodular graph holds exactly the
        negative variable edges.  Indicators are normalized first.
        """
        self.normalize_indicators()
        sub = CharGraph(self.n, self.const)
        sub.ind_o = self.ind_o.copy()
        sub.ind_obar = self.ind_obar.copy()
        sub.flipped = self.flipped.copy()
        sup = CharGraph(self.n)
        sup.flipped = self.flipped.copy()
        for (u, v), c in self.variable_edges().items():
            if c >= 0:
                sub.add_variable_edge(u, v, c)
            else:
                sup.add_variable_edge(u, v, c)
        return sub, sup

    def simplify(self, partial: Labeling) -> None:
        """Remove the labeled variables, folding their terms into indicator
        edges and the constant.

        `partial` is in original (un-flipped) space; flip marks of fixed
        nodes are consumed.  For a node fixed to graph-label 0, an incident
        edge (u, v) turns into o-side indicator capacity at v and the node's
        o-bar indicator joins const; symmetrically for graph-label 1.
        """
        if partial.n != self.n:
            raise ValueError("partial labeling length mismatch")
        ids = partial.labeled_ids()
        if ids.size == 0:
            raise ValueError("partial labeling fixes no variable")
        graph_vals = self.to_graph_labels(partial).values
        fixed = {int(u): int(graph_vals[u]) for u in ids}
        touched: set[int] = set()
        for u in sorted(fixed):
            a = fixed[u]
            for v, c in sorted(self.adj[u].items()):
                if v in fixed:
                    if u < v:
                        self.const += c * (a ^ fixed[v])
                else:
                    if a == 0:
                        self.ind_o[v] += c
                    else:
                        self.ind_obar[v] += c
                    touched.add(v)
                    del self.adj[v][u]
            self.adj[u] = {}
            self.const += self.ind_o[u] if a == 1 else self.ind_obar[u]
            self.ind_o[u] = 0.0
            self.ind_obar[u] = 0.0
            self.flipped[u] = False
        for v in sorted(touched):
            self._canon_indicator(v)

    # -- conversions -----------------------------------------------------------

    def to_qpbf(self) -> Qpbf:
        """Standard-form QPBF equal to cut+const over the graph's *current*
        node labels (flip marks are not applied)."""
        linear = self.ind_o - self.ind_obar
        const = self.const + float(self.ind_obar.sum())
        quad: dict[tuple[int, int], float] = {}
        for (u, v), c in self.variable_edges().items():
            quad[(u, v)] = -2.0 * c
            linear[u] += c
            linear[v] += c
        return Qpbf.from_standard(self.n, linear, quad, const)

    # -- debug dump ------------------------------------------------------------

    def dump(self, fh: IO[str] | None = None) -> str:
        lines = []
        for u in range(self.n):
            lines.append(f"node {u} flipped{int(self.flipped[u])}")
        for u in range(self.n):
            if self.ind_o[u] != 0.0:
                lines.append(f"iedge {u} {O_SIDE} {float(self.ind_o[u])!r}")
            if self.ind_obar[u] != 0.0:
                lines.append(f"iedge {u} {OBAR_SIDE} {float(self.ind_obar[u])!r}")
        for (u, v), c in sorted(self.variable_edges().items()):
            lines.append(f"vedge {u} {v} {float(c)!r}")
        lines.append(f"const {float(self.const)!r}")
        text = "\n".join(lines) + "\n"
        if fh is not None:
            fh.write(text)
        return text


def parse_dump(text: str) -> CharGraph:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    node_rows = [r for r in rows if r[0] == "node"]
    g = CharGraph(len(node_rows))
    for r in rows:
        if r[0] == "node":
            u = int(r[1])
            if r[2] not in ("flipped0", "flipped1"):
                raise ValueError(f"malformed node line: {' '.join(r)}")
            g.flipped[u] = r[2] == "flipped1"
        elif r[0] == "iedge":
            g.add_indicator(int(r[1]), r[2], float(r[3]))
        elif r[0] == "vedge":
            g.add_variable_edge(int(r[1]), int(r[2]), float(r[3]))
        elif r[0] == "const":
            g.const = float(r[1])
        else:
            raise ValueError(f"unknown dump record {r[0]!r}")
    return g


def characterize(f: Qpbf) -> CharGraph:
    """Build the cut-equivalent graph of a QPBF.

    Unary tables put their label difference on the o side; each pairwise
    table splits into two indicator contributions and one variable edge
    (half-sums of table entries); table corners at (0,0) accumulate into
    const.  Indicators end up canonical (single nonnegative side).
    """
    g = CharGraph(f.n, f.const)
    for u in range(f.n):
        t0, t1 = float(f.unary[u, 0]), float(f.unary[u, 1])
        g.ind_o[u] += t1 - t0
        g.const += t0
    for (u, v), (t00, t01, t10, t11) in sorted(f.pairwise.items()):
        c_u = 0.5 * (t10 + t11 - t01 - t00)
        c_v = 0.5 * (t01 + t11 - t00 - t10)
        c_uv = 0.5 * (t01 + t10 - t00 - t11)
        g.ind_o[u] += c_u
        g.ind_o[v] += c_v
        if c_uv != 0.0:
            g.add_variable_edge(u, v, c_uv)
        g.const += t00
    g.normalize_indicators()
    return g
