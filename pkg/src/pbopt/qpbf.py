"""Quadratic pseudo-Boolean functions over binary variables.

A QPBF assigns a real energy to every labeling in {0,1}^n through
per-variable tables, per-pair tables and a constant offset.  This module
holds the representation, evaluation, the reduction to standard
(multilinear) form, an exhaustive brute-force oracle, and the plain-text
interchange format used by the CLI and the service.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

UNLABELED = -1

# Hard cap for exhaustive enumeration; 2^25 evaluations is already ~30 s.
BRUTE_FORCE_MAX_VARS = 25

_ENUM_CHUNK = 1 << 15


class Labeling:
    """Assignment of {0,1} to n variables; UNLABELED (-1) marks unassigned slots."""

    __slots__ = ("values",)

    def __init__(self, values: Iterable[int]):
        arr = np.asarray(values, dtype=np.int8).copy()
        if arr.ndim != 1:
            raise ValueError("labeling must be one-dimensional")
        if arr.size and not np.isin(arr, (UNLABELED, 0, 1)).all():
            raise ValueError("labeling entries must be 0, 1 or UNLABELED (-1)")
        self.values = arr

    @classmethod
    def empty(cls, n: int) -> "Labeling":
        return cls(np.full(n, UNLABELED, dtype=np.int8))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def is_complete(self) -> bool:
        return bool((self.values >= 0).all())

    @property
    def labeled_fraction(self) -> float:
        if self.values.size == 0:
            return 1.0
        return float((self.values >= 0).sum() / self.values.size)

    def labeled_ids(self) -> np.ndarray:
        return np.flatnonzero(self.values >= 0)

    def complete_with(self, fill: int = 0) -> "Labeling":
        """Copy with every UNLABELED slot replaced by `fill`."""
        out = self.values.copy()
        out[out == UNLABELED] = fill
        return Labeling(out)

    def copy(self) -> "Labeling":
        return Labeling(self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Labeling):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))

    def __repr__(self) -> str:
        return f"Labeling({self.values.tolist()})"


def _normalize_pair(u: int, v: int, table: Sequence[float]):
    """Key pairs as (min, max); swapping endpoints transposes the table."""
    t00, t01, t10, t11 = (float(t) for t in table)
    if u == v:
        raise ValueError(f"pairwise table on identical endpoints {u}")
    if u < v:
        return (u, v), (t00, t01, t10, t11)
    return (v, u), (t00, t10, t01, t11)


class Qpbf:
    """Energy  const + sum_u theta_u(x_u) + sum_uv theta_uv(x_u, x_v).

    `unary` is an (n, 2) array of per-variable tables (value at label 0,
    value at label 1).  `pairwise` maps an unordered pair (u, v) with u < v
    to a 4-tuple (t00, t01, t10, t11) indexed by (x_u, x_v).  Instances are
    treated as immutable after construction.
    """

    def __init__(
        self,
        n: int,
        unary: Iterable | None = None,
        pairwise: Mapping[tuple, Sequence[float]] | Iterable[tuple] | None = None,
        const: float = 0.0,
    ):
        if n < 0:
            raise ValueError("variable count must be nonnegative")
        self.n = int(n)
        if unary is None:
            self.unary = np.zeros((self.n, 2), dtype=np.float64)
        else:
            self.unary = np.asarray(unary, dtype=np.float64).reshape(self.n, 2).copy()
        if not np.isfinite(self.unary).all():
            raise ValueError("unary tables must be finite")

        self.pairwise: dict[tuple[int, int], tuple[float, float, float, float]] = {}
        if pairwise is not None:
            items = pairwise.items() if isinstance(pairwise, Mapping) else pairwise
            for (u, v), table in items:
                u, v = int(u), int(v)
                if not (0 <= u < self.n and 0 <= v < self.n):
                    raise ValueError(f"pair ({u},{v}) out of range for n={self.n}")
                key, tab = _normalize_pair(u, v, table)
                if key in self.pairwise:
                    raise ValueError(f"duplicate pairwise table for {key}")
                if not all(np.isfinite(tab)):
                    raise ValueError(f"pairwise table for {key} must be finite")
                self.pairwise[key] = tab
        self.const = float(const)
        self._arrays: tuple | None = None

    # -- derived array views -------------------------------------------------

    def pair_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(u_ids, v_ids, tables[m,4]) in sorted pair order; cached."""
        if self._arrays is None:
            keys = sorted(self.pairwise)
            uu = np.array([k[0] for k in keys], dtype=np.int64)
            vv = np.array([k[1] for k in keys], dtype=np.int64)
            tables = np.array([self.pairwise[k] for k in keys], dtype=np.float64)
            tables = tables.reshape(len(keys), 4)
            self._arrays = (uu, vv, tables)
        return self._arrays

    @property
    def num_pairs(self) -> int:
        return len(self.pairwise)

    @classmethod
    def from_standard(
        cls,
        n: int,
        linear: Iterable[float],
        quad: Mapping[tuple, float],
        const: float = 0.0,
    ) -> "Qpbf":
        """Build from standard-form coefficients: unary (0, l_u), pairs (0,0,0,q_uv)."""
        lin = np.asarray(list(linear), dtype=np.float64)
        unary = np.zeros((n, 2))
        unary[:, 1] = lin
        pairs = {k: (0.0, 0.0, 0.0, float(q)) for k, q in quad.items()}
        return cls(n, unary, pairs, const)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Qpbf):
            return NotImplemented
        return (
            self.n == other.n
            and self.const == other.const
            and np.array_equal(self.unary, other.unary)
            and self.pairwise == other.pairwise
        )

    def __repr__(self) -> str:
        return f"Qpbf(n={self.n}, pairs={self.num_pairs}, const={self.const})"


@dataclass
class StdQpbf:
    """Standard form  const + sum_u linear_u x_u + sum_uv quad_uv x_u x_v."""

    n: int
    linear: np.ndarray
    quad: dict[tuple[int, int], float]
    const: float = 0.0

    def evaluate(self, x: Labeling) -> float:
        _check_complete(x, self.n)
        vals = x.values.astype(np.float64)
        e = self.const + float(self.linear @ vals)
        for (u, v), q in self.quad.items():
            e += q * vals[u] * vals[v]
        return e


def _check_complete(x: Labeling, n: int) -> None:
    if x.n != n:
        raise ValueError(f"labeling length {x.n} != variable count {n}")
    if not x.is_complete:
        raise ValueError("labeling must be complete (no UNLABELED entries)")


def evaluate(f: Qpbf, x: Labeling) -> float:
    """Energy of a complete labeling."""
    _check_complete(x, f.n)
    vals = x.values.astype(np.int64)
    e = f.const
    if f.n:
        e += float(f.unary[np.arange(f.n), vals].sum())
    uu, vv, tables = f.pair_arrays()
    if uu.size:
        idx = 2 * vals[uu] + vals[vv]
        e += float(tables[np.arange(uu.size), idx].sum())
    return e


def to_standard(f: Qpbf) -> StdQpbf:
    """Expand the tables into multilinear coefficients.

    Per pair: quad = t00 - t01 - t10 + t11, with t10 - t00 and t01 - t00
    folded into the endpoints' linear terms and t00 into the constant.
    Zero quad coefficients are dropped.
    """
    linear = (f.unary[:, 1] - f.unary[:, 0]).astype(np.float64).copy()
    const = f.const + float(f.unary[:, 0].sum())
    quad: dict[tuple[int, int], float] = {}
    for (u, v), (t00, t01, t10, t11) in sorted(f.pairwise.items()):
        q = t00 - t01 - t10 + t11
        linear[u] += t10 - t00
        linear[v] += t01 - t00
        const += t00
        if q != 0.0:
            quad[(u, v)] = q
    return StdQpbf(f.n, linear, quad, const)


def _std_batch_energies(std: StdQpbf, bits: np.ndarray) -> np.ndarray:
    """Energies of a (chunk, n) 0/1 matrix via two matmuls on standard form."""
    x = bits.astype(np.float64)
    e = std.const + x @ std.linear
    if std.quad:
        keys = sorted(std.quad)
        uu = np.array([k[0] for k in keys])
        vv = np.array([k[1] for k in keys])
        qq = np.array([std.quad[k] for k in keys])
        e = e + (x[:, uu] * x[:, vv]) @ qq
    return e


def _bit_matrix(start: int, stop: int, n: int) -> np.ndarray:
    ks = np.arange(start, stop, dtype=np.int64)
    return ((ks[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.int8)


def _mitm_energies(std: StdQpbf, n: int) -> np.ndarray:
    """All 2^n energies by splitting the variables into two halves.

    Half-energies are tabulated independently and combined through one
    (2^lo, 2^hi) matmul for the cross terms, turning the n * 2^n direct
    cost into roughly 2^n work total."""
    n_lo = n // 2
    n_hi = n - n_lo
    lo = _bit_matrix(0, 1 << n_lo, n_lo).astype(np.float64)
    hi = _bit_matrix(0, 1 << n_hi, n_hi).astype(np.float64)
    q_lo = np.zeros((n_lo, n_lo))
    q_hi = np.zeros((n_hi, n_hi))
    q_cross = np.zeros((n_lo, n_hi))
    for (u, v), q in std.quad.items():
        if v < n_lo:
            q_lo[u, v] = q
        elif u >= n_lo:
            q_hi[u - n_lo, v - n_lo] = q
        else:
            q_cross[u, v - n_lo] = q
    a = lo @ std.linear[:n_lo] + ((lo @ q_lo) * lo).sum(axis=1)
    b = hi @ std.linear[n_lo:] + ((hi @ q_hi) * hi).sum(axis=1)
    cross = (lo @ q_cross) @ hi.T
    e = cross + a[:, None] + b[None, :] + std.const
    # row-major flatten of the (hi, lo) layout restores k = k_hi<<n_lo | k_lo
    return np.ascontiguousarray(e.T).reshape(-1)


_MITM_MIN_VARS = 15


def all_energies(f: Qpbf, max_vars: int = 20) -> np.ndarray:
    """Energy of every labeling, indexed by the labeling read as an integer
    (variable 0 = least significant bit).  Exhaustive; guarded by max_vars."""
    if f.n > max_vars:
        raise ValueError(f"refusing exhaustive enumeration for n={f.n} > {max_vars}")
    std = to_standard(f)
    if f.n >= _MITM_MIN_VARS:
        return _mitm_energies(std, f.n)
    total = 1 << f.n
    out = np.empty(total, dtype=np.float64)
    for start in range(0, total, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, total)
        out[start:stop] = _std_batch_energies(std, _bit_matrix(start, stop, f.n))
    return out


def labeling_from_index(k: int, n: int) -> Labeling:
    return Labeling([(k >> u) & 1 for u in range(n)])


def brute_force_min(f: Qpbf) -> tuple[Labeling, float]:
    """Exhaustive minimizer.

    Ties break toward the lowest labeling-as-integer (variable 0 least
    significant).  The returned energy is recomputed with evaluate() on the
    winning labeling, so it is bit-identical to what any solver reports for
    the same labeling.
    """
    if f.n > BRUTE_FORCE_MAX_VARS:
        raise ValueError(
            f"n={f.n} exceeds brute-force cap {BRUTE_FORCE_MAX_VARS}"
        )
    if f.n <= 22:  # full energy table fits comfortably in memory
        best_k = int(np.argmin(all_energies(f, max_vars=22)))
        x = labeling_from_index(best_k, f.n)
        return x, evaluate(f, x)
    std = to_standard(f)
    total = 1 << f.n
    best_e = np.inf
    best_k = 0
    for start in range(0, total, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, total)
        e = _std_batch_energies(std, _bit_matrix(start, stop, f.n))
        i = int(np.argmin(e))
        # strict < keeps the earliest chunk's hit, preserving the tie order
        if e[i] < best_e:
            best_e = float(e[i])
            best_k = start + i
    x = labeling_from_index(best_k, f.n)
    return x, evaluate(f, x)


# -- text format -------------------------------------------------------------
#
#   qpbf <n> <num_pairs> <const>
#   u <id> <theta0> <theta1>
#   p <u> <v> <t00> <t01> <t10> <t11>
#
# Floats are written with repr() so write -> read round-trips exactly.


def write_qpbf(f: Qpbf, fh: IO[str]) -> None:
    fh.write(f"qpbf {f.n} {f.num_pairs} {f.const!r}\n")
    for u in range(f.n):
        t0, t1 = (float(t) for t in f.unary[u])
        fh.write(f"u {u} {t0!r} {t1!r}\n")
    for (u, v), (t00, t01, t10, t11) in sorted(f.pairwise.items()):
        fh.write(f"p {u} {v} {t00!r} {t01!r} {t10!r} {t11!r}\n")


def qpbf_to_text(f: Qpbf) -> str:
    import io

    buf = io.StringIO()
    write_qpbf(f, buf)
    return buf.getvalue()


def read_qpbf(fh: IO[str] | str) -> Qpbf:
    if isinstance(fh, str):
        lines = fh.splitlines()
    else:
        lines = fh.read().splitlines()
    rows = [ln.split() for ln in lines if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0][0] != "qpbf":
        raise ValueError("missing 'qpbf <n> <num_pairs> <const>' header")
    if len(rows[0]) != 4:
        raise ValueError("malformed qpbf header")
    n = int(rows[0][1])
    num_pairs = int(rows[0][2])
    const = float(rows[0][3])
    unary = np.zeros((n, 2))
    pairs: dict[tuple[int, int], tuple] = {}
    for row in rows[1:]:
        kind = row[0]
        if kind == "u":
            if len(row) != 4:
                raise ValueError(f"malformed unary line: {' '.join(row)}")
            u = int(row[1])
            if not 0 <= u < n:
                raise ValueError(f"unary id {u} out of range")
            unary[u] = (float(row[2]), float(row[3]))
        elif kind == "p":
            if len(row) != 7:
                raise ValueError(f"malformed pair line: {' '.join(row)}")
            u, v = int(row[1]), int(row[2])
            key, tab = _normalize_pair(u, v, tuple(float(t) for t in row[3:7]))
            if key in pairs:
                raise ValueError(f"duplicate pair line for {key}")
            pairs[key] = tab
        else:
            raise ValueError(f"unknown record kind {kind!r}")
    if len(pairs) != num_pairs:
        raise ValueError(f"header says {num_pairs} pairs, found {len(pairs)}")
    return Qpbf(n, unary, pairs, const)
