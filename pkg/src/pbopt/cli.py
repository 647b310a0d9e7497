"""Command-line interface.

Every data-path command is a thin client over the HTTP service: by default
requests are dispatched to an in-process application instance, and
`--server URL` points the same commands at a remote deployment instead.
Exit status is 0 on success and 2 on any error (bad arguments, malformed
files, service-side validation failures).
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx


class ServiceClient:
    """Dispatches requests either in-process (ASGI) or to --server."""

    def __init__(self, server: str | None = None):
        self.server = server

    def request(self, method: str, path: str, payload: dict | None = None
                ) -> tuple[int, dict]:
        if self.server:
            with httpx.Client(base_url=self.server, timeout=None) as c:
                resp = c.request(method, path, json=payload)
                return resp.status_code, self._body(resp)

        async def go():
            from .service import create_app

            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://pbopt.internal",
                                         timeout=None) as c:
                resp = await c.request(method, path, json=payload)
                return resp.status_code, self._body(resp)

        return asyncio.run(go())

    @staticmethod
    def _body(resp: httpx.Response) -> dict:
        try:
            return resp.json()
        except ValueError:
            return {"detail": resp.text}


class CliError(Exception):
    """Raised for any failure the CLI should report and exit 2 on."""


def _call(client: ServiceClient, method: str, path: str,
          payload: dict | None = None) -> dict:
    try:
        status, body = client.request(method, path, payload)
    except httpx.HTTPError as exc:
        raise CliError(f"service request failed: {exc}") from exc
    if status != 200:
        detail = body.get("detail", body)
        raise CliError(f"{path} failed ({status}): {detail}")
    return body


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(str(exc)) from exc


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise CliError(str(exc)) from exc


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("pbopt.service:app", host=args.host, port=args.port)
    return 0


def cmd_solve(args, client: ServiceClient) -> int:
    payload = {
        "qpbf": _read_text(args.qpbf),
        "solver": args.solver,
        "seed": args.seed,
    }
    if args.init:
        payload["init"] = args.init
    if args.time_budget is not None:
        payload["time_budget"] = args.time_budget
    if args.solver_opts:
        try:
            payload["solver_opts"] = json.loads(args.solver_opts)
        except json.JSONDecodeError as exc:
            raise CliError(f"--solver-opts is not valid JSON: {exc}")
    body = _call(client, "POST", "/solve", payload)
    bits = "".join(str(b) for b in body["labeling"])
    print(f"solver {body['solver']}")
    print(f"energy {_fmt(body['energy'])}")
    print(f"certified {_fmt(body['certified'])}")
    print(f"labeled_fraction {_fmt(body['labeled_fraction'])}")
    print(f"labeling {bits}")
    if args.out:
        _write_text(Path(args.out), bits + "\n")
    return 0


def cmd_synth(args, client: ServiceClient) -> int:
    from .synth import read_spec_file

    try:
        specs = read_spec_file(args.spec)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out)
    for i, spec in enumerate(specs):
        body = _call(client, "POST", "/synth/generate", {
            "n": spec.n, "cr": spec.cr, "sr": spec.sr, "ug": spec.ug,
            "scale": spec.scale, "seed": spec.seed,
        })
        name = f"inst_{i:03d}.qpbf"
        _write_text(out / name, body["qpbf"])
        m = body["measured"]
        print(f"{name} n={spec.n} cr={m['cr']:.4f} sr={m['sr']:.4f} "
              f"ug={m['ug']:.4f}")
    return 0


def cmd_bench_run(args, client: ServiceClient) -> int:
    try:
        config = json.loads(_read_text(args.config))
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.config}: not valid JSON: {exc}") from exc
    body = _call(client, "POST", "/bench/run", {"config": config})
    for path in body["written"]:
        print(f"wrote {path}")
    return 0


def cmd_bench_plot(args, client: ServiceClient) -> int:
    payload = {"traces_dir": args.traces, "factor": args.factor,
               "value": args.value}
    if args.out:
        payload["out"] = args.out
    body = _call(client, "POST", "/bench/plot", payload)
    print(f"wrote {body['written']} ({', '.join(body['solvers'])})")
    return 0


def cmd_restore_train(args, client: ServiceClient) -> int:
    paths = sorted(Path(args.glyphs).glob("*.pbm"))
    if not paths:
        raise CliError(f"no .pbm files in {args.glyphs}")
    glyphs = [_read_text(str(p)) for p in paths]
    body = _call(client, "POST", "/restore/train",
                 {"glyphs": glyphs, "floor": args.floor})
    model = body["model"]
    _write_text(Path(args.out), json.dumps(model, indent=1))
    print(f"trained on {len(glyphs)} glyphs "
          f"({model['width']}x{model['height']}), "
          f"{len(model['pairs'])} pairs -> {args.out}")
    return 0


def cmd_restore_run(args, client: ServiceClient) -> int:
    try:
        model = json.loads(_read_text(args.model))
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.model}: not valid JSON: {exc}") from exc
    payload = {
        "model": model,
        "noisy": _read_text(args.noisy),
        "alpha": args.alpha,
        "solver": args.solver,
        "seed": args.seed,
    }
    if args.beta is not None:
        payload["beta"] = args.beta
    body = _call(client, "POST", "/restore/run", payload)
    out = Path(args.out) if args.out else Path(args.noisy).with_suffix(
        ".restored.pbm")
    _write_text(out, body["restored"])
    print(f"energy {_fmt(body['energy'])}")
    print(f"lower_bound {_fmt(body['lower_bound'])}")
    print(f"noisy_energy {_fmt(body['noisy_energy'])}")
    print(f"wrote {out}")
    return 0


def cmd_restore_glyphs(args) -> int:
    from .restore import make_glyph_set, write_pbm

    try:
        g = make_glyph_set(width=args.width, height=args.height,
                           num_images=args.count, flip_prob=args.flip_prob,
                           seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out)
    for i, img in enumerate(g.images):
        path = out / f"glyph_{i:02d}.pbm"
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w") as fh:
                write_pbm(img, fh)
        except OSError as exc:
            raise CliError(str(exc)) from exc
    print(f"wrote {len(g.images)} glyphs to {out}")
    return 0


def cmd_restore_noise(args) -> int:
    from .restore import add_noise, read_pbm, write_pbm

    try:
        img = read_pbm(args.image)
        noisy = add_noise(img, p=args.p, seed=args.seed)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out) if args.out else Path(args.image).with_suffix(
        ".noisy.pbm")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            write_pbm(noisy, fh)
    except OSError as exc:
        raise CliError(str(exc)) from exc
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbopt",
        description="Pseudo-Boolean optimization toolkit: solvers, synthetic "
                    "benchmarks and binary image restoration.")
    parser.add_argument("--server", default=None,
                        help="URL of a running service; default runs "
                             "in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    p = sub.add_parser("solve", help="minimize a QPBF from a text file")
    p.add_argument("--qpbf", required=True)
    p.add_argument("--solver", default="essp")
    p.add_argument("--init", default=None,
                   help="initializer chain run before the solver")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time-budget", type=float, default=None)
    p.add_argument("--solver-opts", default=None,
                   help="JSON object of per-stage option overrides")
    p.add_argument("--out", default=None,
                   help="write the labeling bits to this file")

    p = sub.add_parser("synth", help="generate instances from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="benchmark harness")
    bench_sub = p.add_subparsers(dest="bench_command", required=True)
    p = bench_sub.add_parser("run", help="run the benchmark matrix")
    p.add_argument("--config", required=True)
    p = bench_sub.add_parser("plot", help="replot a marginal curve")
    p.add_argument("--traces", required=True)
    p.add_argument("--factor", required=True, choices=["cr", "sr", "ug"])
    p.add_argument("--value", required=True, type=float)
    p.add_argument("--out", default=None)

    p = sub.add_parser("restore", help="binary image restoration")
    restore_sub = p.add_subparsers(dest="restore_command", required=True)
    p = restore_sub.add_parser("train", help="train a prior from glyphs")
    p.add_argument("--glyphs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--floor", type=float, default=0.1)
    p = restore_sub.add_parser("run", help="restore a noisy image")
    p.add_argument("--model", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--solver", default="essp")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p = restore_sub.add_parser("glyphs", help="write a synthetic glyph set")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--count", type=int, default=12)
    p.add_argument("--flip-prob", type=float, default=0.03)
    p.add_argument("--seed", type=int, default=0)
    p = restore_sub.add_parser("noise", help="flip pixels of a PBM image")
    p.add_argument("--image", required=True)
    p.add_argument("--p", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    client = ServiceClient(args.server)
    try:
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "solve":
            return cmd_solve(args, client)
        if args.command == "synth":
            return cmd_synth(args, client)
        if args.command == "bench":
            if args.bench_command == "run":
                return cmd_bench_run(args, client)
            return cmd_bench_plot(args, client)
        if args.command == "restore":
            if args.restore_command == "train":
                return cmd_restore_train(args, client)
            if args.restore_command == "run":
                return cmd_restore_run(args, client)
            if args.restore_command == "glyphs":
                return cmd_restore_glyphs(args)
            return cmd_restore_noise(args)
        raise CliError(f"unknown command {args.command!r}")
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
