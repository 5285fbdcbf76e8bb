"""Command-line front end.

The CLI is a thin client of the HTTP service: each subcommand builds a
request, sends it (to an in-process app instance by default, or to a remote
server via --server), and renders the response.  ``epinn serve`` starts the
service under uvicorn.

Exit codes: 0 success, 1 configuration/input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import yaml

from . import __version__
from .metrics import MetricsReport, format_report_table


class CliFailure(Exception):
    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


class ServiceClient:
    """Minimal JSON client; in-process by default, HTTP when --server is set."""

    def __init__(self, server: str | None = None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app)

    def request(self, method: str, path: str, payload: dict | None = None) -> dict:
        resp = self._client.request(method, path, json=payload)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail")
            except Exception:
                detail = resp.text
            if isinstance(detail, dict):
                code = detail.get("code", "internal")
                message = detail.get("message", str(detail))
            else:
                code, message = "config", str(detail)
            raise CliFailure(2 if code == "numerical" else 1, f"{code} error: {message}")
        return resp.json()


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            loaded = yaml.safe_load(f)
    except FileNotFoundError:
        raise CliFailure(1, f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise CliFailure(1, f"could not parse {path}: {exc}") from None
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise CliFailure(1, f"{path} must contain a mapping at top level")
    return loaded


def _common_payload(args) -> dict:
    return {
        "out_dir": args.out,
        "preset": args.preset,
        "problem": args.problem,
        "seed": args.seed,
        "config": _load_config_file(args.config),
    }


def cmd_generate(args, client: ServiceClient) -> int:
    out = client.request("POST", "/datasets", _common_payload(args))
    print(f"dataset: {out['dataset_csv']}")
    print(f"manifest: {out['manifest']}")
    print(
        f"points: {out['n_obs']} obs, {out['n_colloc']} colloc, "
        f"{out['n_boundary']} boundary, {out['n_test']} test"
    )
    return 0


def cmd_train(args, client: ServiceClient) -> int:
    payload = _common_payload(args)
    payload.update(method=args.method, epochs=args.epochs, dataset=args.dataset)
    out = client.request("POST", "/runs", payload)
    run_id = out["run_id"]
    print(f"run {run_id} started")
    while True:
        status = client.request("GET", f"/runs/{run_id}")
        if status["state"] == "running":
            p = status.get("progress") or {}
            if "epoch" in p:
                line = f"  epoch {p['epoch']}/{p['total_epochs']}"
                if "total_loss" in p:
                    line += (
                        f"  loss={p['total_loss']:.5g}"
                        f"  kappa={p['kappa_mean']:.4f}"
                        f"  sigma_kappa={p['kappa_sigma']:.4g}"
                    )
                print(line, flush=True)
            elif "members_done" in p:
                print(f"  ensemble members {p['members_done']}/{p['members_total']}", flush=True)
            time.sleep(args.poll)
            continue
        if status["state"] == "failed":
            raise CliFailure(
                2 if status.get("error_code") == "numerical" else 1,
                status.get("error", "training failed"),
            )
        summary = status["summary"]
        outputs = status["outputs"]
        print(f"done in {summary.get('runtime_s', 0):.1f}s")
        print(f"kappa_mean = {summary['kappa_mean']:.4f}")
        print(f"kappa_sigma = {summary['kappa_sigma']:.4g}")
        print(f"checkpoint: {outputs['checkpoint']}")
        if outputs.get("curves"):
            print(f"curves: {outputs['curves']}")
        return 0


def cmd_evaluate(args, client: ServiceClient) -> int:
    out = client.request(
        "POST", "/evaluate",
        {"checkpoint": args.checkpoint, "dataset": args.dataset, "out_dir": args.out},
    )
    print(format_report_table([MetricsReport.from_dict(out["report"])]))
    print(f"metrics: {out['metrics_json']}")
    for p in out["plots"]:
        print(f"plot: {p}")
    return 0


def cmd_report(args, client: ServiceClient) -> int:
    out = client.request("POST", "/report", {"run_dir": args.run_dir})
    print(out["text"])
    for p in out["plots"]:
        print(f"plot: {p}")
    return 0


def cmd_serve(args, _client) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epinn",
        description="Evidential physics-informed networks for inverse PDE problems",
    )
    parser.add_argument("--version", action="version", version=f"epinn {__version__}")
    parser.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--preset", default=None, choices=["table1", "table2", "table2_strong"])
        p.add_argument("--problem", default=None, choices=["poisson1d", "diffreact2d"])
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="runs/run", help="output directory")

    g = sub.add_parser("generate", help="generate a benchmark dataset (CSV + manifest)")
    add_config_flags(g)
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train a model and write checkpoint + learning curves")
    add_config_flags(t)
    t.add_argument("--method", default=None, choices=["epinn", "epinn_v", "plain_pinn", "deep_ensemble"])
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--dataset", default=None, help="existing dataset CSV (default: generate)")
    t.add_argument("--poll", type=float, default=5.0, help="status poll interval in seconds")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint against a dataset; write report + plots")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", default="runs/eval")
    e.set_defaults(fn=cmd_evaluate)

    r = sub.add_parser("report", help="re-render metric table and learning curves for a run directory")
    r.add_argument("run_dir")
    r.set_defaults(fn=cmd_report)

    s = sub.add_parser("serve", help="start the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that slot is reserved for
        # numerical failures here, so flag-level mistakes map to 1
        return 0 if exc.code in (0, None) else 1
    try:
        client = None if args.command == "serve" else ServiceClient(args.server)
        return args.fn(args, client)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
