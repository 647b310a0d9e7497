"""Comparative benchmark harness.

Runs a solver list over a factor grid of synthetic instances, recording an
energy-vs-time trace per (solver, instance) pair.  Solver names compose
with "+": each stage hands its labeling to the next as the initialization,
and the whole chain shares one clock, so initialization cost shows up in
the composite's curve.  Marginal curves average the step-function traces
of one factor value on a shared log-spaced time grid, and reports land on
disk as CSV, JSON and self-contained SVG plots.

Energies in the outputs are reproducible run to run; elapsed times are
wall-clock and are not.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import (SolverOpts, bp_min_sum, icm, qpbo, qpbo_improve,
                        random_labeling)
from .essp import essp_minimize
from .qpbf import UNLABELED, Labeling, Qpbf, evaluate
from .synth import FactorSpec, generate

STAGE_NAMES = ("rand", "icm", "bp", "qpbo", "qpboi", "i", "essp")
FACTOR_INDEX = {"cr": 0, "sr": 1, "ug": 2}
BP_INIT_ITERATIONS = 50
MARGINAL_GRID_POINTS = 64
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f")


@dataclass
class RunTrace:
    solver: str
    instance: str
    samples: list[tuple[float, float]]
    labeling_hash: str
    seed: int
    factors: tuple[float, float, float]
    instance_spec: dict
    final_energy: float
    final_labeling: list[int]
    labeled_fraction: float | None = None

    def __post_init__(self):
        times = [t for t, _ in self.samples]
        if times != sorted(times):
            raise ValueError("trace samples must be time-sorted")
        energies = [e for _, e in self.samples]
        if any(b > a for a, b in zip(energies, energies[1:])):
            raise ValueError("trace energies must be non-increasing")


def validate_solver_opts(solver_opts: dict) -> None:
    """Per-stage option overrides: stage names only, no reserved keys."""
    unknown = set(solver_opts) - set(STAGE_NAMES)
    if unknown:
        raise ValueError(f"solver_opts for unknown stages {sorted(unknown)}")
    for stage, opts in solver_opts.items():
        if not isinstance(opts, dict):
            raise ValueError(f"solver_opts[{stage!r}] must be an object")
        reserved = {"seed", "time_budget", "on_improvement"} & set(opts)
        if reserved:
            raise ValueError(
                f"solver_opts[{stage!r}] may not set {sorted(reserved)}; "
                "the harness owns seeding and the time budget")


@dataclass
class BenchConfig:
    n: int = 200
    cr: list[float] = field(default_factory=lambda: [0.1, 0.3, 0.5])
    sr: list[float] = field(default_factory=lambda: [0.1, 0.3, 0.5])
    ug: list[float] = field(default_factory=lambda: [0.0, 0.1])
    instances_per_cell: int = 5
    solvers: list[str] = field(
        default_factory=lambda: ["icm", "bp", "rand+qpboi", "bp+essp"])
    solver_opts: dict[str, dict] = field(default_factory=dict)
    budget: float = 10.0
    out: str = "bench_out"
    seed: int = 0
    scale: float = 10.0

    def __post_init__(self):
        if not (self.cr and self.sr and self.ug):
            raise ValueError("factor grid must be non-empty on every axis")
        if not self.solvers:
            raise ValueError("solver list must be non-empty")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.instances_per_cell < 1:
            raise ValueError("instances_per_cell must be at least 1")
        for name in self.solvers:
            for stage in name.split("+"):
                if stage not in STAGE_NAMES:
                    raise ValueError(f"unknown solver stage {stage!r}")
        validate_solver_opts(self.solver_opts)

    @classmethod
    def from_payload(cls, obj, source: str = "config") -> "BenchConfig":
        if not isinstance(obj, dict):
            raise ValueError(f"{source}: config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"{source}: unknown config keys {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, path: str | Path) -> "BenchConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_payload(obj, source=str(path))

    def cells(self) -> list[tuple[float, float, float]]:
        return [(c, s, u) for c in self.cr for s in self.sr for u in self.ug]


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


class TraceRecorder:
    """Collects (elapsed, best-so-far energy) samples on a monotonic clock.

    Callback energies are re-measured with a fresh evaluate so every sample
    comes from the same instrument as the reported final energy; solvers'
    incremental accounting never leaks floating-point drift into the trace.
    """

    def __init__(self, f: Qpbf | None = None):
        self.f = f
        self.t0 = time.perf_counter()
        self.samples: list[tuple[float, float]] = []
        self.best = np.inf

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def record(self, energy: float) -> None:
        if energy < self.best:
            self.best = float(energy)
            self.samples.append((self.elapsed(), self.best))

    def callback(self, _iteration: int, energy: float, lab: Labeling) -> None:
        if self.f is not None and lab.is_complete:
            energy = evaluate(self.f, lab)
        self.record(energy)


@dataclass
class ChainResult:
    samples: list[tuple[float, float]]
    labeling: Labeling
    energy: float
    labeled_fraction: float | None
    certified: bool | None


def solve_chain(f: Qpbf, solver: str, *, seed_parts: tuple[int, ...],
                budget: float | None = None,
                opts_by_stage: dict[str, dict] | None = None,
                init: Labeling | None = None) -> ChainResult:
    """Run a "+"-joined solver chain on one instance.

    Each stage receives the previous stage's labeling as its initialization
    and the budget remaining on the shared clock.  The trailing sample
    always restates the final evaluate-backed energy; `certified` is set
    only when the chain ends in a certifying solver.
    """
    stages = solver.split("+")
    for stage in stages:
        if stage not in STAGE_NAMES:
            raise ValueError(f"unknown solver stage {stage!r}")
    rec = TraceRecorder(f)
    x: Labeling | None = init
    if init is not None:
        rec.record(evaluate(f, init))
    labeled_fraction = None
    certified = None
    for idx, stage in enumerate(stages):
        seed = _derived_seed(*seed_parts, idx)
        last = idx == len(stages) - 1
        remaining = None if budget is None else max(
            budget - rec.elapsed(), 1e-3)
        opts_kw = dict((opts_by_stage or {}).get(stage, {}))
        if stage == "rand":
            x = random_labeling(f.n, seed)
            rec.record(evaluate(f, x))
        elif stage == "icm":
            init = x if x is not None else random_labeling(f.n, seed)
            opts = SolverOpts(seed=seed, time_budget=remaining,
                              on_improvement=rec.callback, **opts_kw)
            x, e = icm(f, init, opts)
            rec.record(e)
        elif stage == "bp":
            opts_kw.setdefault("max_iterations",
                               500 if last else BP_INIT_ITERATIONS)
            opts = SolverOpts(seed=seed, time_budget=remaining,
                              on_improvement=rec.callback, **opts_kw)
            x, e = bp_min_sum(f, opts)
            rec.record(e)
        elif stage == "qpbo":
            partial = qpbo(f)
            labeled_fraction = partial.labeled_fraction
            x = partial.complete_with(0)
            rec.record(evaluate(f, x))
        elif stage in ("qpboi", "i"):
            init = x if x is not None else random_labeling(f.n, seed)
            opts = SolverOpts(seed=seed, time_budget=remaining,
                              on_improvement=rec.callback, **opts_kw)
            x, e = qpbo_improve(f, init, opts)
            rec.record(e)
        elif stage == "essp":
            report = essp_minimize(f, init=x, seed=seed,
                                   on_improvement=rec.callback,
                                   time_budget=remaining, **opts_kw)
            x = report.labeling
            if last:
                certified = report.certified
            rec.record(report.energy)
    final_energy = evaluate(f, x)
    rec.record(final_energy)
    return ChainResult(rec.samples, x, final_energy, labeled_fraction,
                       certified)


def _run_task(args) -> RunTrace:
    cfg, cell_idx, cell, inst_idx, solver_idx = args
    cr, sr, ug = cell
    spec = FactorSpec(n=cfg.n, cr=cr, sr=sr, ug=ug, scale=cfg.scale,
                      seed=_derived_seed(cfg.seed, cell_idx, inst_idx))
    f = generate(spec)
    solver = cfg.solvers[solver_idx]
    run_seed_parts = (cfg.seed, cell_idx, inst_idx, solver_idx)
    res = solve_chain(f, solver, seed_parts=run_seed_parts,
                      budget=cfg.budget, opts_by_stage=cfg.solver_opts)
    vals = res.labeling.values.astype(np.int8)
    return RunTrace(
        solver=solver,
        instance=f"cr{cr}_sr{sr}_ug{ug}_k{inst_idx}",
        samples=res.samples,
        labeling_hash=hashlib.sha256(vals.tobytes()).hexdigest(),
        seed=_derived_seed(*run_seed_parts),
        factors=(cr, sr, ug),
        instance_spec={"n": spec.n, "cr": spec.cr, "sr": spec.sr,
                       "ug": spec.ug, "scale": spec.scale, "seed": spec.seed},
        final_energy=res.energy,
        final_labeling=vals.tolist(),
        labeled_fraction=res.labeled_fraction,
    )


def run_matrix(cfg: BenchConfig) -> list[RunTrace]:
    """One trace per (solver, instance) over the whole factor grid.

    Instances are shared across solvers within a cell slot, and every seed
    derives from the master seed, so energy columns reproduce exactly.
    QPBF_THREADS > 1 runs tasks in a process pool; each task stays
    single-threaded for honest per-run timing.
    """
    tasks = []
    for cell_idx, cell in enumerate(cfg.cells()):
        for inst_idx in range(cfg.instances_per_cell):
            for solver_idx in range(len(cfg.solvers)):
                tasks.append((cfg, cell_idx, cell, inst_idx, solver_idx))
    workers = int(os.environ.get("QPBF_THREADS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_task, tasks))
    return [_run_task(t) for t in tasks]


def _resample(samples: list[tuple[float, float]],
              grid: np.ndarray) -> np.ndarray:
    times = np.array([t for t, _ in samples])
    energies = np.array([e for _, e in samples])
    idx = np.searchsorted(times, grid, side="right") - 1
    return energies[np.clip(idx, 0, len(samples) - 1)]


def marginalize(traces: list[RunTrace], factor: str, value: float
                ) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-solver mean energy-vs-time step curves at one factor value.

    Matching traces are resampled onto a common log-spaced grid (earliest
    sample to latest, best-so-far left-clamped) and averaged pointwise.
    """
    if factor not in FACTOR_INDEX:
        raise ValueError(f"unknown factor {factor!r}")
    fi = FACTOR_INDEX[factor]
    matching = [t for t in traces
                if np.isclose(t.factors[fi], value, rtol=1e-9, atol=1e-12)]
    if not matching:
        raise ValueError(f"no traces with {factor}={value}")
    lo = max(min(t.samples[0][0] for t in matching), 1e-6)
    hi = max(t.samples[-1][0] for t in matching)
    hi = max(hi, lo * 1.001)
    grid = np.geomspace(lo, hi, MARGINAL_GRID_POINTS)
    out = {}
    for solver in sorted({t.solver for t in matching}):
        rows = [_resample(t.samples, grid)
                for t in matching if t.solver == solver]
        out[solver] = (grid, np.mean(rows, axis=0))
    return out


def _svg_plot(title: str,
              curves: dict[str, tuple[np.ndarray, np.ndarray]]) -> str:
    width, height = 640, 420
    ml, mr, mt, mb = 60, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    xs = np.log10(np.concatenate([g for g, _ in curves.values()]))
    ys = np.concatenate([e for _, e in curves.values()])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 - x0 < 1e-12:
        x1 = x0 + 1.0
    if y1 - y0 < 1e-12:
        y1 = y0 + 1.0

    def px(logt):
        return ml + (logt - x0) / (x1 - x0) * pw

    def py(e):
        return mt + (y1 - e) / (y1 - y0) * ph

    root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                      width=str(width), height=str(height),
                      viewBox=f"0 0 {width} {height}")
    ET.SubElement(root, "rect", x="0", y="0", width=str(width),
                  height=str(height), fill="white")
    ET.SubElement(root, "text", x=str(ml), y="20",
                  attrib={"font-size": "14", "font-family": "sans-serif"}
                  ).text = title
    # axes
    ET.SubElement(root, "line", x1=str(ml), y1=str(mt + ph), x2=str(ml + pw),
                  y2=str(mt + ph), stroke="black")
    ET.SubElement(root, "line", x1=str(ml), y1=str(mt), x2=str(ml),
                  y2=str(mt + ph), stroke="black")
    for d in range(int(np.floor(x0)), int(np.ceil(x1)) + 1):
        if x0 <= d <= x1:
            x = px(d)
            ET.SubElement(root, "line", x1=f"{x:.1f}", y1=str(mt + ph),
                          x2=f"{x:.1f}", y2=str(mt + ph + 4), stroke="black")
            ET.SubElement(root, "text", x=f"{x:.1f}", y=str(mt + ph + 18),
                          attrib={"font-size": "11",
                                  "font-family": "sans-serif",
                                  "text-anchor": "middle"}).text = f"1e{d}"
    for k in range(5):
        e = y0 + (y1 - y0) * k / 4
        y = py(e)
        ET.SubElement(root, "line", x1=str(ml - 4), y1=f"{y:.1f}",
                      x2=str(ml), y2=f"{y:.1f}", stroke="black")
        ET.SubElement(root, "text", x=str(ml - 8), y=f"{y + 4:.1f}",
                      attrib={"font-size": "11", "font-family": "sans-serif",
                              "text-anchor": "end"}).text = f"{e:.4g}"
    ET.SubElement(root, "text", x=str(ml + pw // 2), y=str(height - 6),
                  attrib={"font-size": "12", "font-family": "sans-serif",
                          "text-anchor": "middle"}).text = "time (s)"
    ET.SubElement(root, "text", x="14", y=str(mt + ph // 2),
                  attrib={"font-size": "12", "font-family": "sans-serif",
                          "text-anchor": "middle",
                          "transform":
                          f"rotate(-90 14 {mt + ph // 2})"}).text = "energy"
    for i, (solver, (grid, means)) in enumerate(sorted(curves.items())):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(
            f"{px(np.log10(t)):.2f},{py(e):.2f}"
            for t, e in zip(grid, means))
        ET.SubElement(root, "polyline", points=pts, fill="none",
                      stroke=color, attrib={"stroke-width": "1.5"})
        ly = mt + 14 + 16 * i
        lx = ml + pw - 130
        ET.SubElement(root, "line", x1=str(lx), y1=str(ly - 4),
                      x2=str(lx + 22), y2=str(ly - 4), stroke=color,
                      attrib={"stroke-width": "2"})
        ET.SubElement(root, "text", x=str(lx + 28), y=str(ly),
                      attrib={"font-size": "11",
                              "font-family": "sans-serif"}).text = solver
    return ET.tostring(root, encoding="unicode")


def summary_payload(traces: list[RunTrace]) -> dict:
    groups: dict[tuple, list[RunTrace]] = {}
    for t in traces:
        groups.setdefault((t.factors, t.solver), []).append(t)
    cells = []
    for (factors, solver), members in sorted(
            groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        finals = [t.final_energy for t in members]
        fracs = [t.labeled_fraction for t in members
                 if t.labeled_fraction is not None]
        cells.append({
            "cr": factors[0], "sr": factors[1], "ug": factors[2],
            "solver": solver,
            "instances": len(members),
            "final_energy": {"mean": float(np.mean(finals)),
                             "min": float(np.min(finals)),
                             "max": float(np.max(finals))},
            "labeled_fraction": float(np.mean(fracs)) if fracs else None,
        })
    return {"cells": cells}


def emit_reports(curves: dict[tuple[str, float], dict],
                 traces: list[RunTrace], out_dir: str | Path) -> list[Path]:
    """Write traces.csv, traces.json, summary.json and one SVG per curve
    set.  Everything is rendered in memory before any file is created, so
    a bad input leaves no partial output behind."""
    if not curves:
        raise ValueError("no curves to report")
    if not traces:
        raise ValueError("no traces to report")
    csv_buf = io.StringIO()
    writer = csv.writer(csv_buf)
    writer.writerow(["solver", "instance", "time", "energy"])
    for t in traces:
        for elapsed, energy in t.samples:
            writer.writerow([t.solver, t.instance, repr(elapsed),
                             repr(energy)])
    traces_json = json.dumps([{
        "solver": t.solver, "instance": t.instance, "samples": t.samples,
        "labeling_hash": t.labeling_hash, "seed": t.seed,
        "factors": list(t.factors), "instance_spec": t.instance_spec,
        "final_energy": t.final_energy, "final_labeling": t.final_labeling,
        "labeled_fraction": t.labeled_fraction,
    } for t in traces], indent=1)
    summary_json = json.dumps(summary_payload(traces), indent=1)
    svgs = {}
    for (factor, value), solver_curves in sorted(curves.items()):
        name = f"bench_{factor}_{value}.svg"
        svgs[name] = _svg_plot(f"{factor} = {value}", solver_curves)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, payload in [("traces.csv", csv_buf.getvalue()),
                          ("traces.json", traces_json),
                          ("summary.json", summary_json),
                          *svgs.items()]:
        path = out / name
        path.write_text(payload)
        written.append(path)
    return written


def load_traces(out_dir: str | Path) -> list[RunTrace]:
    """Reload traces.json written by emit_reports."""
    path = Path(out_dir) / "traces.json"
    if not path.exists():
        raise ValueError(f"{path} not found")
    raw = json.loads(path.read_text())
    return [RunTrace(
        solver=o["solver"], instance=o["instance"],
        samples=[tuple(s) for s in o["samples"]],
        labeling_hash=o["labeling_hash"], seed=o["seed"],
        factors=tuple(o["factors"]), instance_spec=o["instance_spec"],
        final_energy=o["final_energy"], final_labeling=o["final_labeling"],
        labeled_fraction=o["labeled_fraction"],
    ) for o in raw]


def all_marginals(cfg: BenchConfig, traces: list[RunTrace]) -> dict:
    """Marginal curves for every factor value in the config grid."""
    curves = {}
    for factor, values in (("cr", cfg.cr), ("sr", cfg.sr), ("ug", cfg.ug)):
        for v in values:
            curves[(factor, v)] = marginalize(traces, factor, v)
    return curves
