"""HTTP service exposing the toolkit.

Every endpoint is a thin wrapper over the library: QPBFs travel as the
plain-text format, rasters as PBM (P1) text, prior models as their JSON
payload.  Domain validation errors surface as HTTP 400 with a detail
message; malformed request shapes get FastAPI's usual 422.
"""

from __future__ import annotations

import io

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .bench import (BenchConfig, all_marginals, emit_reports, load_traces,
                    marginalize, run_matrix, solve_chain, summary_payload,
                    validate_solver_opts, _svg_plot)
from .qpbf import qpbf_to_text, read_qpbf
from .restore import (DEFAULT_ALPHA, DEFAULT_FLOOR, GlyphSet,
                      model_from_payload, model_payload, read_pbm, restore,
                      train_prior, write_pbm)
from .synth import FactorSpec, generate, measure_factors

from pathlib import Path


class SolveRequest(BaseModel):
    qpbf: str
    solver: str = "essp"
    init: str | None = None
    seed: int = 0
    time_budget: float | None = Field(default=None, gt=0)
    solver_opts: dict[str, dict] = Field(default_factory=dict)


class SolveResponse(BaseModel):
    solver: str
    labeling: list[int]
    energy: float
    certified: bool | None
    labeled_fraction: float | None
    trace: list[tuple[float, float]]


class SynthGenerateRequest(BaseModel):
    n: int
    cr: float
    sr: float
    ug: float
    scale: float = 10.0
    seed: int = 0


class MeasuredFactors(BaseModel):
    cr: float
    sr: float
    ug: float


class SynthGenerateResponse(BaseModel):
    qpbf: str
    measured: MeasuredFactors


class MeasureRequest(BaseModel):
    qpbf: str


class RestoreTrainRequest(BaseModel):
    glyphs: list[str]
    floor: float = DEFAULT_FLOOR


class RestoreRunRequest(BaseModel):
    model: dict
    noisy: str
    alpha: float = DEFAULT_ALPHA
    beta: float | None = None
    solver: str = "essp"
    seed: int = 0
    time_budget: float | None = Field(default=None, gt=0)


class RestoreRunResponse(BaseModel):
    restored: str
    energy: float
    lower_bound: float
    noisy_energy: float
    trace: list[tuple[float, float]]


class BenchRunRequest(BaseModel):
    config: dict


class BenchRunResponse(BaseModel):
    written: list[str]
    summary: dict


class BenchPlotRequest(BaseModel):
    traces_dir: str
    factor: str
    value: float
    out: str | None = None


class BenchPlotResponse(BaseModel):
    written: str
    solvers: list[str]


def create_app() -> FastAPI:
    app = FastAPI(title="pbopt", version=__version__)

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/solve", response_model=SolveResponse)
    def solve(req: SolveRequest) -> SolveResponse:
        f = read_qpbf(req.qpbf)
        chain = f"{req.init}+{req.solver}" if req.init else req.solver
        validate_solver_opts(req.solver_opts)
        res = solve_chain(f, chain, seed_parts=(req.seed,),
                          budget=req.time_budget,
                          opts_by_stage=req.solver_opts)
        return SolveResponse(
            solver=chain,
            labeling=[int(b) for b in res.labeling.values],
            energy=res.energy,
            certified=res.certified,
            labeled_fraction=res.labeled_fraction,
            trace=res.samples,
        )

    @app.post("/synth/generate", response_model=SynthGenerateResponse)
    def synth_generate(req: SynthGenerateRequest) -> SynthGenerateResponse:
        spec = FactorSpec(n=req.n, cr=req.cr, sr=req.sr, ug=req.ug,
                          scale=req.scale, seed=req.seed)
        f = generate(spec)
        cr, sr, ug = measure_factors(f)
        return SynthGenerateResponse(
            qpbf=qpbf_to_text(f),
            measured=MeasuredFactors(cr=cr, sr=sr, ug=ug),
        )

    @app.post("/synth/measure", response_model=MeasuredFactors)
    def synth_measure(req: MeasureRequest) -> MeasuredFactors:
        cr, sr, ug = measure_factors(read_qpbf(req.qpbf))
        return MeasuredFactors(cr=cr, sr=sr, ug=ug)

    @app.post("/restore/train")
    def restore_train(req: RestoreTrainRequest) -> dict:
        if not req.glyphs:
            raise ValueError("no glyph images supplied")
        images = [read_pbm(io.StringIO(text)) for text in req.glyphs]
        h, w = images[0].shape
        g = GlyphSet(width=w, height=h, images=images)
        prior = train_prior(g, floor=req.floor)
        return {"model": model_payload(prior)}

    @app.post("/restore/run", response_model=RestoreRunResponse)
    def restore_run(req: RestoreRunRequest) -> RestoreRunResponse:
        prior = model_from_payload(req.model)
        noisy = read_pbm(io.StringIO(req.noisy))
        result = restore(prior, noisy, alpha=req.alpha, beta=req.beta,
                         solver=req.solver, seed=req.seed,
                         time_budget=req.time_budget)
        buf = io.StringIO()
        write_pbm(result.raster, buf)
        return RestoreRunResponse(
            restored=buf.getvalue(),
            energy=result.energy,
            lower_bound=result.lower_bound,
            noisy_energy=result.noisy_energy,
            trace=result.trace,
        )

    @app.post("/bench/run", response_model=BenchRunResponse)
    def bench_run(req: BenchRunRequest) -> BenchRunResponse:
        cfg = BenchConfig.from_payload(req.config)
        traces = run_matrix(cfg)
        curves = all_marginals(cfg, traces)
        written = emit_reports(curves, traces, cfg.out)
        return BenchRunResponse(
            written=[str(p) for p in written],
            summary=summary_payload(traces),
        )

    @app.post("/bench/plot", response_model=BenchPlotResponse)
    def bench_plot(req: BenchPlotRequest) -> BenchPlotResponse:
        traces = load_traces(req.traces_dir)
        curves = marginalize(traces, req.factor, req.value)
        svg = _svg_plot(f"{req.factor} = {req.value}", curves)
        out = Path(req.out) if req.out else (
            Path(req.traces_dir) / f"bench_{req.factor}_{req.value}.svg")
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(svg)
        return BenchPlotResponse(written=str(out), solvers=sorted(curves))

    return app


app = create_app()
