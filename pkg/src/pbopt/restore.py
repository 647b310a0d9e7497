"""Binary image restoration demo.

A dense pairwise prior is trained by counting, over a set of binary glyph
rasters, how often each unordered pixel pair takes each joint labeling.
Restoring a noisy raster Y then minimizes

    E(x) = alpha * sum_u -1 / (1 + |Y_u - x_u|) - beta * sum_uv f_uv(x_u, x_v)

so the data term pulls toward Y while frequent training co-labelings are
rewarded.  The instance is dense and heavily nonsubmodular, which is the
point of the demo.  Rasters are (height, width) arrays of {0, 1} with
1 = ink, stored on disk as plain-text PBM (P1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np

from .bench import solve_chain
from .qpbf import Labeling, Qpbf, evaluate

DEFAULT_FLOOR = 0.1
DEFAULT_ALPHA = 1.0
NOISE_FLIP_PROB = 0.2


def _check_raster(raster: np.ndarray, what: str = "raster") -> np.ndarray:
    arr = np.asarray(raster)
    if arr.ndim != 2:
        raise ValueError(f"{what} must be 2-D, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{what} entries must be 0 or 1")
    return arr.astype(np.int8)


@dataclass
class GlyphSet:
    width: int
    height: int
    images: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("glyph dimensions must be positive")
        checked = []
        for img in self.images:
            arr = _check_raster(img, "glyph image")
            if arr.shape != (self.height, self.width):
                raise ValueError(
                    f"glyph image shape {arr.shape} does not match "
                    f"({self.height}, {self.width})")
            checked.append(arr)
        self.images = checked

    @property
    def num_pixels(self) -> int:
        return self.width * self.height


@dataclass
class PriorModel:
    """Per-pair joint-labeling frequencies, floored at `floor`.

    pairs maps (u, v) with u < v (row-major pixel ids) to the frequency
    tuple (f00, f01, f10, f11); entries below the floor are zeroed and
    pairs with no surviving entry are dropped.
    """
    width: int
    height: int
    floor: float
    pairs: dict[tuple[int, int], tuple[float, float, float, float]]

    @property
    def num_pixels(self) -> int:
        return self.width * self.height


def train_prior(g: GlyphSet, floor: float = DEFAULT_FLOOR) -> PriorModel:
    """Count joint labeling frequencies for every unordered pixel pair.

    f_uv(a, b) is the fraction of training images with pixel u = a and
    pixel v = b; before flooring each pair's four frequencies sum to 1.
    """
    if len(g.images) < 2:
        raise ValueError("training needs at least 2 images")
    if not (0.0 <= floor < 1.0):
        raise ValueError("floor must be in [0, 1)")
    k = len(g.images)
    x = np.stack([img.reshape(-1) for img in g.images]).astype(np.float64)
    xb = 1.0 - x
    counts = (xb.T @ xb, xb.T @ x, x.T @ xb, x.T @ x)
    freqs = [c / k for c in counts]
    n = g.num_pixels
    iu, iv = np.triu_indices(n, k=1)
    table = np.stack([f[iu, iv] for f in freqs], axis=1)
    table[table < floor] = 0.0
    keep = table.any(axis=1)
    pairs = {
        (int(u), int(v)): tuple(float(t) for t in row)
        for u, v, row in zip(iu[keep], iv[keep], table[keep])
    }
    return PriorModel(width=g.width, height=g.height, floor=floor,
                      pairs=pairs)


def default_beta(prior: PriorModel) -> float:
    """Balance the two energy terms: 2 * num_pixels / num_retained_pairs."""
    if not prior.pairs:
        raise ValueError("prior has no retained pairs")
    return 2.0 * prior.num_pixels / len(prior.pairs)


def build_restoration_energy(prior: PriorModel, noisy: np.ndarray,
                             alpha: float = DEFAULT_ALPHA,
                             beta: float | None = None) -> Qpbf:
    """Energy whose minimizer restores `noisy` under the trained prior.

    Unary: alpha * (-1 / (1 + |Y_u - x_u|)), so agreeing with Y pays -alpha
    and disagreeing -alpha/2.  Pairwise: -beta * f_uv(a, b) per retained
    pair.  beta = 0 reduces to the data term alone, whose minimizer is Y.
    """
    y = _check_raster(noisy, "noisy raster")
    if y.shape != (prior.height, prior.width):
        raise ValueError(
            f"noisy raster shape {y.shape} does not match model "
            f"({prior.height}, {prior.width})")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if beta is None:
        beta = default_beta(prior)
    if beta < 0:
        raise ValueError("beta must be non-negative")
    flat = y.reshape(-1).astype(np.float64)
    unary = np.empty((prior.num_pixels, 2))
    unary[:, 0] = alpha * (-1.0 / (1.0 + flat))
    unary[:, 1] = alpha * (-1.0 / (1.0 + np.abs(flat - 1.0)))
    pairwise = {}
    if beta > 0:
        for (u, v), (f00, f01, f10, f11) in prior.pairs.items():
            pairwise[(u, v)] = (-beta * f00, -beta * f01,
                                -beta * f10, -beta * f11)
    return Qpbf(prior.num_pixels, unary=unary, pairwise=pairwise)


def term_lower_bound(f: Qpbf) -> float:
    """Sum of per-term minima: a valid lower bound on the minimum energy."""
    bound = f.const + float(np.minimum(f.unary[:, 0], f.unary[:, 1]).sum())
    for table in f.pairwise.values():
        bound += min(table)
    return bound


@dataclass
class RestoreResult:
    raster: np.ndarray
    energy: float
    trace: list[tuple[float, float]]
    lower_bound: float
    noisy_energy: float


def restore(prior: PriorModel, noisy: np.ndarray, alpha: float = DEFAULT_ALPHA,
            beta: float | None = None, solver: str = "essp", seed: int = 0,
            time_budget: float | None = None,
            solver_opts: dict[str, dict] | None = None) -> RestoreResult:
    """Build the restoration energy and minimize it with the named solver.

    The solver chain starts from Y itself, so descent solvers can only
    improve on the noisy raster's own energy.
    """
    f = build_restoration_energy(prior, noisy, alpha, beta)
    init = Labeling(_check_raster(noisy).reshape(-1))
    res = solve_chain(f, solver, seed_parts=(seed,), budget=time_budget,
                      opts_by_stage=solver_opts, init=init)
    raster = res.labeling.values.astype(np.int8).reshape(prior.height,
                                                         prior.width)
    return RestoreResult(raster=raster, energy=res.energy, trace=res.samples,
                         lower_bound=term_lower_bound(f),
                         noisy_energy=evaluate(f, init))


def model_payload(prior: PriorModel) -> dict:
    return {
        "width": prior.width,
        "height": prior.height,
        "floor": prior.floor,
        "pairs": [[u, v, *table] for (u, v), table in
                  sorted(prior.pairs.items())],
    }


def model_from_payload(obj, source: str = "model") -> PriorModel:
    if not isinstance(obj, dict):
        raise ValueError(f"{source}: model must be a JSON object")
    missing = {"width", "height", "floor", "pairs"} - set(obj)
    if missing:
        raise ValueError(f"{source}: missing model keys {sorted(missing)}")
    pairs = {}
    for entry in obj["pairs"]:
        if len(entry) != 6:
            raise ValueError(f"{source}: malformed pair entry {entry!r}")
        u, v, *table = entry
        pairs[(int(u), int(v))] = tuple(float(t) for t in table)
    return PriorModel(width=int(obj["width"]), height=int(obj["height"]),
                      floor=float(obj["floor"]), pairs=pairs)


def save_model(prior: PriorModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_payload(prior), indent=1))


def load_model(path: str | Path) -> PriorModel:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON: {exc}") from exc
    return model_from_payload(obj, source=str(path))


def write_pbm(raster: np.ndarray, fh: IO[str] | str | Path) -> None:
    """Plain-text PBM (P1); 1 = ink, one image row per line."""
    arr = _check_raster(raster)
    h, w = arr.shape
    lines = [f"P1", f"{w} {h}"]
    lines.extend("".join(str(int(b)) for b in row) for row in arr)
    text = "\n".join(lines) + "\n"
    if isinstance(fh, (str, Path)):
        Path(fh).write_text(text)
    else:
        fh.write(text)


def read_pbm(fh: IO[str] | str | Path) -> np.ndarray:
    if isinstance(fh, (str, Path)):
        text = Path(fh).read_text()
    else:
        text = fh.read()
    tokens = []
    for line in text.splitlines():
        body = line.split("#", 1)[0]
        tokens.extend(body.split())
    if not tokens or tokens[0] != "P1":
        raise ValueError("not a plain PBM (P1) file")
    try:
        w, h = int(tokens[1]), int(tokens[2])
    except (IndexError, ValueError) as exc:
        raise ValueError("PBM header must give width and height") from exc
    if w < 1 or h < 1:
        raise ValueError("PBM dimensions must be positive")
    bits = "".join(tokens[3:])
    if len(bits) != w * h:
        raise ValueError(
            f"PBM expects {w * h} bits, found {len(bits)}")
    if set(bits) - {"0", "1"}:
        raise ValueError("PBM bits must be 0 or 1")
    arr = np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
    return arr.reshape(h, w).astype(np.int8)


def _base_glyph(width: int, height: int, rng: np.random.Generator
                ) -> np.ndarray:
    """A stroke-drawn blob: a few seeded random walks of ink on the grid."""
    ink = np.zeros((height, width), dtype=np.int8)
    strokes = max(2, (width + height) // 8)
    steps = 2 * max(width, height)
    moves = np.array([(0, 1), (0, -1), (1, 0), (-1, 0)])
    for _ in range(strokes):
        r = int(rng.integers(0, height))
        c = int(rng.integers(0, width))
        heading = int(rng.integers(0, 4))
        for _ in range(steps):
            ink[r, c] = 1
            if rng.random() < 0.2:
                heading = int(rng.integers(0, 4))
            dr, dc = moves[heading]
            r = int(np.clip(r + dr, 0, height - 1))
            c = int(np.clip(c + dc, 0, width - 1))
    return ink


def make_glyph_set(width: int = 16, height: int = 16, num_images: int = 12,
                   flip_prob: float = 0.03, seed: int = 0) -> GlyphSet:
    """Perturbed copies of one seeded synthetic glyph."""
    if num_images < 2:
        raise ValueError("need at least 2 images")
    if not (0.0 <= flip_prob < 0.5):
        raise ValueError("flip_prob must be in [0, 0.5)")
    rng = np.random.default_rng(seed)
    base = _base_glyph(width, height, rng)
    images = []
    for _ in range(num_images):
        flips = rng.random(base.shape) < flip_prob
        images.append(np.where(flips, 1 - base, base).astype(np.int8))
    return GlyphSet(width=width, height=height, images=images)


def add_noise(raster: np.ndarray, p: float = NOISE_FLIP_PROB,
              seed: int = 0) -> np.ndarray:
    """Flip each pixel independently with probability p."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("flip probability must be in [0, 1]")
    arr = _check_raster(raster)
    rng = np.random.default_rng(seed)
    flips = rng.random(arr.shape) < p
    return np.where(flips, 1 - arr, arr).astype(np.int8)
