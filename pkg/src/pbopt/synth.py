"""Factor-controlled random instances.

Three hardness factors of a quadratic pseudo-Boolean function: connectivity
C_r (fraction 2e/n^2 of possible variable edges present), supermodularity
ratio S_r (fraction of variable edges with negative capacity), and unary
guidance U_g (indicator mass from the unary terms relative to mean edge
capacity).  generate() hits the requested factors by construction; the
sign split that realizes S_r and the single global rescale that realizes
U_g are declared design choices, since plain unsigned sampling can only
produce one corner of the factor space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chargraph import characterize
from .qpbf import Qpbf

DEFAULT_SCALE = 10.0
_DENSE_PAIR_LIMIT = 5_000_000


@dataclass
class FactorSpec:
    n: int
    cr: float
    sr: float
    ug: float
    scale: float = DEFAULT_SCALE
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two variables")
        if not 0.0 < self.cr <= 1.0:
            raise ValueError("cr must lie in (0, 1]")
        if not 0.0 <= self.sr <= 1.0:
            raise ValueError("sr must lie in [0, 1]")
        if not (np.isfinite(self.ug) and self.ug >= 0.0):
            raise ValueError("ug must be finite and nonnegative")
        if not (np.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError("scale must be positive")
        if self.num_pairs < 1:
            raise ValueError("cr targets fewer than one variable edge")

    @property
    def num_pairs(self) -> int:
        return int(round(self.cr * self.n * self.n / 2))


def _positive_uniform(rng: np.random.Generator, size: int,
                      scale: float) -> np.ndarray:
    out = rng.uniform(0.0, scale, size=size)
    mask = out == 0.0
    while mask.any():
        out[mask] = rng.uniform(0.0, scale, size=int(mask.sum()))
        mask = out == 0.0
    return out


def _sample_pairs(rng: np.random.Generator, n: int,
                  e: int) -> tuple[np.ndarray, np.ndarray]:
    total = n * (n - 1) // 2
    if total <= _DENSE_PAIR_LIMIT:
        iu, iv = np.triu_indices(n, k=1)
        pick = rng.choice(total, size=e, replace=False)
        return iu[pick], iv[pick]
    seen: set[tuple[int, int]] = set()
    while len(seen) < e:
        u = int(rng.integers(0, n))
        v = int(rng.integers(0, n))
        if u != v:
            seen.add((min(u, v), max(u, v)))
    ordered = sorted(seen)
    uu = np.array([p[0] for p in ordered], dtype=np.int64)
    vv = np.array([p[1] for p in ordered], dtype=np.int64)
    return uu, vv


def generate(spec: FactorSpec) -> Qpbf:
    """Standard-form instance realizing the spec's factors.

    Distinct variable pairs are drawn uniformly; quadratic magnitudes come
    from U(0, scale) with round(sr*e) pairs receiving the supermodular sign
    (positive standard-form coefficient, negative edge capacity).  Linear
    magnitudes come from U(0, scale) with fair random signs and one global
    scale factor chosen in closed form so the measured unary guidance lands
    on the target; a zero target zeroes the linear part outright.
    """
    n = spec.n
    e = spec.num_pairs
    if e > n * (n - 1) // 2:
        raise ValueError(
            f"cr={spec.cr} asks for {e} edges; only {n * (n - 1) // 2} exist")
    rng = np.random.default_rng(spec.seed)
    uu, vv = _sample_pairs(rng, n, e)
    qmag = _positive_uniform(rng, e, spec.scale)
    sign = np.full(e, -1.0)
    k_neg = int(round(spec.sr * e))
    if k_neg:
        sign[rng.choice(e, size=k_neg, replace=False)] = 1.0
    quad = {(int(u), int(v)): float(s * m)
            for u, v, s, m in zip(uu, vv, sign, qmag)}
    if spec.ug == 0.0:
        linear = np.zeros(n)
    else:
        lmag = _positive_uniform(rng, n, spec.scale)
        lsign = rng.choice(np.array([-1.0, 1.0]), size=n)
        s = spec.ug * float(qmag.mean()) / float(lmag.mean())
        linear = s * lsign * lmag
    return Qpbf.from_standard(n, linear, quad, 0.0)


def measure_factors(f: Qpbf) -> tuple[float, float, float]:
    """(C_r, S_r, U_g) of an instance, read off its normalized graph.

    C_r = 2e/n^2 over nonzero variable edges; S_r is the negative-capacity
    fraction of those; U_g divides the mean per-variable indicator mass
    contributed by the unary tables (half the |label difference|) by the
    mean absolute edge capacity.  An edgeless instance measures (0, 0, 0).
    Suppression is deliberately not applied first: the factors describe
    the input energy, not its flipped reformulation.
    """
    g = characterize(f)
    caps = np.array(list(g.variable_edges().values()))
    cr = 2.0 * caps.size / (f.n * f.n)
    if caps.size == 0:
        return 0.0, 0.0, 0.0
    sr = float((caps < 0).sum()) / caps.size
    den = float(np.abs(caps).mean())
    num = float(np.abs(f.unary[:, 1] - f.unary[:, 0]).mean()) / 2.0
    return float(cr), sr, num / den


_SPEC_KEYS = {"n", "cr", "sr", "ug", "scale", "seed"}
_REQUIRED_KEYS = {"n", "cr", "sr", "ug"}


def read_spec_file(path: str | Path) -> list[FactorSpec]:
    """Parse a spec file: one JSON object per line, keys n/cr/sr/ug plus
    optional scale and seed.  Blank lines are skipped."""
    specs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ValueError(f"{path}:{lineno}: expected a JSON object")
        unknown = set(obj) - _SPEC_KEYS
        if unknown:
            raise ValueError(
                f"{path}:{lineno}: unknown keys {sorted(unknown)}")
        missing = _REQUIRED_KEYS - set(obj)
        if missing:
            raise ValueError(
                f"{path}:{lineno}: missing keys {sorted(missing)}")
        try:
            specs.append(FactorSpec(**obj))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if not specs:
        raise ValueError(f"{path}: no instance specs found")
    return specs


def write_spec_file(specs: list[FactorSpec], path: str | Path) -> None:
    with open(path, "w") as fh:
        for s in specs:
            fh.write(json.dumps({
                "n": s.n, "cr": s.cr, "sr": s.sr, "ug": s.ug,
                "scale": s.scale, "seed": s.seed,
            }) + "\n")
