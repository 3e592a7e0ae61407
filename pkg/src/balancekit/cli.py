"""Command-line front end.

The CLI is a thin client of the HTTP service: every subcommand except
`serve` builds a request, posts it to the API, and writes the returned
artifacts to the output directory.  Without --server the service app is
mounted in-process (no network, same wire format); with --server URL the
same requests go to a remote instance.

Environment overrides (these two only): BALANCEKIT_SEED for the run seed
and BALANCEKIT_OUT for the output directory, both beaten by explicit
flags.
"""
from __future__ import annotations

import argparse
import base64
import json
import os
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_SERVER = 4


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=None)
    # no server given: mount the service in-process behind the same API
    from starlette.testclient import TestClient

    from .service import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _fail_from_response(resp: httpx.Response) -> int:
    try:
        detail = resp.json().get("detail")
    except Exception:
        detail = resp.text
    if isinstance(detail, list):  # pydantic field errors
        for err in detail:
            loc = ".".join(str(p) for p in err.get("loc", []) if p != "body")
            print(f"config error at {loc or '<root>'}: {err.get('msg')}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    print(f"error: {detail}", file=sys.stderr)
    if isinstance(detail, str) and "diverged" in detail:
        return EXIT_DIVERGED
    return EXIT_BAD_CONFIG if resp.status_code == 422 else EXIT_SERVER


def _post(client: httpx.Client, path: str, payload: dict):
    resp = client.post(path, json=payload)
    if resp.status_code != 200:
        raise SystemExit(_fail_from_response(resp))
    return resp.json()


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("BALANCEKIT_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _seed(args, default: int) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("BALANCEKIT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            print(f"BALANCEKIT_SEED must be an integer, got {env!r}", file=sys.stderr)
            raise SystemExit(EXIT_BAD_CONFIG)
    return default


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        print(f"config file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_CONFIG)
    except json.JSONDecodeError as exc:
        print(f"config file is not valid JSON: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_CONFIG)


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)
    print(f"wrote {path}")


def cmd_simulate(args) -> int:
    config = _load_config_file(args.config)
    if args.gains_preset:
        config["gains"] = {"source": "stored", "name": args.gains_preset}
    if args.amplitude is not None:
        config.setdefault("reference", {"kind": "step"})
        if config["reference"].get("kind") != "step":
            print("--amplitude applies to step references only", file=sys.stderr)
            return EXIT_BAD_CONFIG
        config["reference"]["amplitude"] = args.amplitude
    if args.controller:
        config["controller"] = args.controller
    config["seed"] = _seed(args, config.get("seed", 42))
    out = _out_dir(args)
    with _client(args.server) as client:
        data = _post(client, "/simulate", {"config": config,
                                           "scenario_name": args.name})
    _write(out / "trace.csv", data["trace_csv"])
    _write(out / "report.json", json.dumps(data["report"], indent=2) + "\n")
    rep = data["report"]
    print(f"rise={rep['rise_time']} settle={rep['settling_time']} "
          f"overshoot={rep['overshoot']} ise={rep['ise']}")
    return EXIT_OK


def cmd_tune(args) -> int:
    config = _load_config_file(args.config)
    payload = {
        "objective": config.get("objective", {"kind": args.objective}),
        "nlta": config.get("nlta", {}),
        "seed": _seed(args, config.get("seed", 0)),
        "include_log": True,
    }
    if args.objective:
        payload["objective"]["kind"] = args.objective
    out = _out_dir(args)
    with _client(args.server) as client:
        data = _post(client, "/tune", payload)
    _write(out / "gains.json", json.dumps(data["best_gains"], indent=2) + "\n")
    _write(out / "nlta_log.csv", data["log_csv"])
    summary = {"best_cost": data["best_cost"], "runs": data["runs"]}
    _write(out / "tune_report.json", json.dumps(summary, indent=2) + "\n")
    print(f"best cost {data['best_cost']} with gains {data['best_gains']}")
    return EXIT_OK


def cmd_lqr(args) -> int:
    payload = {"q_diag": args.q_diag, "r": args.r}
    out = _out_dir(args)
    with _client(args.server) as client:
        data = _post(client, "/lqr", payload)
    _write(out / "lqr.json", json.dumps(data, indent=2) + "\n")
    print("K =", data["k"])
    print("ARE residual =", data["residual"])
    return EXIT_OK


def cmd_train_nn(args) -> int:
    payload = {"seed": _seed(args, 0), "max_epochs": args.max_epochs}
    if args.dt_nn is not None:
        payload["dt_nn"] = args.dt_nn
    out = _out_dir(args)
    with _client(args.server) as client:
        data = _post(client, "/train-nn", payload)
    blob = base64.b64decode(data["net_base64"])
    path = out / "policy_net.bin"
    with open(path, "wb") as fh:
        fh.write(blob)
    print(f"wrote {path}")
    _write(out / "training_report.json", json.dumps(data["report"], indent=2) + "\n")
    rep = data["report"]
    print(f"epochs={rep['epochs']} test_mse={rep['test_mse']} "
          f"normalized={rep['normalized_test_mse']}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    payload = {"seed": _seed(args, 42), "retune": bool(args.retune)}
    out = _out_dir(args)
    with _client(args.server) as client:
        data = _post(client, "/reproduce", payload)
    for name, text in data["files"].items():
        _write(out / name, text)
    print(f"reproduced benchmark tables with seed {payload['seed']}"
          + (" (retuned)" if payload["retune"] else " (stored gains)"))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("balancekit.service:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="balancekit",
        description="Inverted-pendulum balance-system toolkit (thin client "
                    "of the balancekit service)")
    parser.add_argument("--server", help="base URL of a running service; "
                        "defaults to an in-process instance")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="run seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="one closed-loop run -> trace CSV + report")
    common(p)
    p.add_argument("--config", help="scenario config file (JSON)")
    p.add_argument("--gains-preset", choices=["prasad", "ise", "ise-st", "ise-os", "ise-ab"],
                   help="use a stored gain set")
    p.add_argument("--amplitude", type=float, help="step amplitude [m]")
    p.add_argument("--controller", choices=["pid", "pid+lqr", "pid+nn"])
    p.add_argument("--name", default="scenario", help="scenario name for the report")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tune", help="NLTA gain search -> gains file + run log")
    common(p)
    p.add_argument("--config", help="tuner config file (JSON)")
    p.add_argument("--objective", choices=["ise", "ise-ab", "ise-st", "ise-os"],
                   default="ise")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("lqr", help="solve the Riccati equation -> K, P, residual")
    common(p)
    p.add_argument("--q-diag", type=float, nargs=4, default=[1.0, 1.0, 500.0, 250.0])
    p.add_argument("--r", type=float, default=1.0)
    p.set_defaults(func=cmd_lqr)

    p = sub.add_parser("train-nn", help="cost table -> policy -> trained network")
    common(p)
    p.add_argument("--dt-nn", type=float, help="one-step prediction horizon [s]")
    p.add_argument("--max-epochs", type=int, default=200)
    p.set_defaults(func=cmd_train_nn)

    p = sub.add_parser("reproduce", help="regenerate the benchmark tables and figures")
    common(p)
    p.add_argument("--retune", action="store_true",
                   help="rerun the tuner and network training instead of "
                        "using stored results")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except httpx.HTTPError as exc:
        print(f"could not reach the service: {exc}", file=sys.stderr)
        return EXIT_SERVER


if __name__ == "__main__":
    sys.exit(main())
