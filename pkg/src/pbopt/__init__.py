"""Pseudo-Boolean optimization toolkit.

Minimizes quadratic pseudo-Boolean functions, including dense nonsubmodular
instances, via graph characterization, supermodular suppression and
iterated modular-bound submodular solves, alongside classical baselines,
a factor-controlled synthetic instance generator, a benchmark harness and
a binary image restoration demo.
"""

__version__ = "0.1.0"

from .baselines import (SolverOpts, bp_min_sum, icm, qpbo, qpbo_improve,
                        random_labeling)
from .bench import (BenchConfig, RunTrace, marginalize, run_matrix,
                    solve_chain)
from .chargraph import CharGraph, characterize
from .essp import EsspReport, essp_minimize, essp_refine_local
from .qpbf import (UNLABELED, Labeling, Qpbf, brute_force_min, evaluate,
                   qpbf_to_text, read_qpbf, write_qpbf)
from .restore import (GlyphSet, PriorModel, add_noise,
                      build_restoration_energy, make_glyph_set, read_pbm,
                      restore, train_prior, write_pbm)
from .synth import FactorSpec, generate, measure_factors

__all__ = [
    "BenchConfig",
    "CharGraph",
    "EsspReport",
    "FactorSpec",
    "GlyphSet",
    "Labeling",
    "PriorModel",
    "Qpbf",
    "RunTrace",
    "SolverOpts",
    "UNLABELED",
    "add_noise",
    "bp_min_sum",
    "brute_force_min",
    "build_restoration_energy",
    "characterize",
    "essp_minimize",
    "essp_refine_local",
    "evaluate",
    "generate",
    "icm",
    "make_glyph_set",
    "marginalize",
    "measure_factors",
    "qpbf_to_text",
    "qpbo",
    "qpbo_improve",
    "random_labeling",
    "read_pbm",
    "read_qpbf",
    "restore",
    "run_matrix",
    "solve_chain",
    "train_prior",
    "write_pbm",
    "write_qpbf",
]
