"""Command-line entry points: serve the hub, run the full simulation, or
benchmark a running hub."""

from __future__ import annotations

import argparse
import importlib.resources
import os
import sys
import threading
import time
from pathlib import Path

import uvicorn
import yaml

from . import bench, service, simnet
from .config import ConfigError, load_config

DEFAULT_PORT = 8080
DEFAULT_SIM_PORT = 8091


def _fixture_path(name: str) -> Path:
    return Path(str(importlib.resources.files("a2a_hub") / "fixtures" / name))


def _default_config_path() -> str:
    return os.environ.get("A2A_HUB_CONFIG", str(_fixture_path("hub-config.yaml")))


def _default_port() -> int:
    return int(os.environ.get("A2A_HUB_PORT", DEFAULT_PORT))


def _make_server(app, host: str, port: int) -> uvicorn.Server:
    return uvicorn.Server(uvicorn.Config(app, host=host, port=port,
                                         log_level="warning"))


def _run_servers(servers: list[uvicorn.Server]) -> None:
    """Run uvicorn servers in daemon threads until interrupted."""
    threads = [threading.Thread(target=s.run, daemon=True) for s in servers]
    for thread in threads:
        thread.start()
    try:
        while any(thread.is_alive() for thread in threads):
            time.sleep(0.2)
    except KeyboardInterrupt:
        for server in servers:
            server.should_exit = True
        for thread in threads:
            thread.join(timeout=5)


def _build_simulation(config_path: str, scenario_path: str | None):
    """Shared state for the hub and the simulator: the object store and the
    token issuer live in one SimulationState so admin mutations are visible
    to the hub's DocQa path."""
    config = load_config(config_path)
    agents: list[simnet.MockAgentSpec] = []
    lifetime = simnet.DEFAULT_TOKEN_LIFETIME_S
    if scenario_path is not None:
        raw = yaml.safe_load(Path(scenario_path).read_text(encoding="utf-8"))
        agents, lifetime = simnet.load_scenario(raw or {})
    state = simnet.SimulationState(
        agents=agents,
        objects=dict(config.corpus),
        read_grants={(e.doc_uri_prefix, e.reader_identity) for e in config.acl},
        issuer=simnet.SimTokenIssuer(lifetime_s=lifetime),
    )
    pipeline = service.build_pipeline(config, object_store=state,
                                      token_provider=state.issuer)
    return config, state, pipeline


def _cmd_serve(args: argparse.Namespace) -> int:
    try:
        config, _, pipeline = _build_simulation(args.config, None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    app = service.build_app(pipeline, config)
    print(f"hub listening on http://{args.host}:{args.port}/")
    _run_servers([_make_server(app, args.host, args.port)])
    return 0


def _cmd_sim(args: argparse.Namespace) -> int:
    try:
        config, state, pipeline = _build_simulation(args.config, args.scenario)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    hub_app = service.build_app(pipeline, config)
    sim_app = simnet.build_sim_app(state)
    print(f"hub listening on http://{args.host}:{args.port}/")
    print(f"simulator (mock agents + admin) on http://{args.host}:{args.sim_port}/")
    _run_servers([
        _make_server(hub_app, args.host, args.port),
        _make_server(sim_app, args.host, args.sim_port),
    ])
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    try:
        cases = bench.load_cases(args.cases)
    except bench.CaseFileError as exc:
        print(f"case file error: {exc}", file=sys.stderr)
        return bench.EXIT_INFRA
    try:
        report = bench.run_benchmark(args.hub_url, cases, channel=args.channel,
                                     fail_fast=args.fail_fast)
    except bench.HubUnreachable as exc:
        print(f"infrastructure error: {exc}", file=sys.stderr)
        return bench.EXIT_INFRA
    print(bench.render_report(report, args.format))
    return bench.exit_code_for(report)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="a2a-hub",
        description="Agent-to-agent orchestration hub, simulation, and benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the hub service")
    serve.add_argument("--config", default=_default_config_path(),
                       help="hub config file (or A2A_HUB_CONFIG)")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=_default_port(),
                       help="listen port (or A2A_HUB_PORT, default 8080)")
    serve.set_defaults(func=_cmd_serve)

    sim = sub.add_parser("sim", help="run the hub plus the simulated cloud")
    sim.add_argument("--config", default=_default_config_path())
    sim.add_argument("--scenario", default=str(_fixture_path("scenario.yaml")),
                     help="simulation scenario file")
    sim.add_argument("--host", default="127.0.0.1")
    sim.add_argument("--port", type=int, default=_default_port())
    sim.add_argument("--sim-port", type=int, default=DEFAULT_SIM_PORT)
    sim.set_defaults(func=_cmd_sim)

    bench_cmd = sub.add_parser("bench", help="benchmark a running hub")
    bench_cmd.add_argument("--hub-url", required=True)
    bench_cmd.add_argument("--cases", default=str(_fixture_path("bench-cases.yaml")))
    bench_cmd.add_argument("--channel", choices=list(bench.CHANNELS), default=None,
                           help="override the per-case channel")
    bench_cmd.add_argument("--format", choices=["text", "json"], default="text")
    bench_cmd.add_argument("--fail-fast", action="store_true")
    bench_cmd.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
