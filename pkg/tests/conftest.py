"""Shared fixtures: the packaged simulation setup, in-process clients, and
live uvicorn servers for the end-to-end tests."""

from __future__ import annotations

import dataclasses
import importlib.resources
import socket
import threading
import time
from pathlib import Path

import pytest
import uvicorn
import yaml
from starlette.testclient import TestClient

from a2a_hub import service, simnet
from a2a_hub.config import load_config


FIXTURES = Path(str(importlib.resources.files("a2a_hub") / "fixtures"))


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def load_scenario_agents(sim_base_url: str | None = None):
    """Scenario agents, optionally rebased onto a different simulator URL
    (IAM audiences must track the agent URL they protect)."""
    raw = yaml.safe_load((FIXTURES / "scenario.yaml").read_text(encoding="utf-8"))
    agents, lifetime = simnet.load_scenario(raw)
    if sim_base_url is not None:
        rebased = []
        for agent in agents:
            policy = agent.policy
            if isinstance(policy, simnet.IamPolicy):
                policy = dataclasses.replace(
                    policy, expected_audience=f"{sim_base_url}/agents/{agent.id}")
            rebased.append(dataclasses.replace(agent, policy=policy))
        agents = rebased
    return agents, lifetime


def rebase_targets(config, sim_base_url: str):
    """Point the config's downstream targets at a given simulator URL."""
    targets = []
    for target in config.targets:
        url = f"{sim_base_url}/agents/{target.id}"
        audience = url if target.audience is not None else None
        targets.append(dataclasses.replace(target, url=url, audience=audience))
    return dataclasses.replace(config, targets=targets)


def build_state(config, agents=(), lifetime=simnet.DEFAULT_TOKEN_LIFETIME_S,
                now=time.time) -> simnet.SimulationState:
    return simnet.SimulationState(
        agents=list(agents),
        objects=dict(config.corpus),
        read_grants={(e.doc_uri_prefix, e.reader_identity) for e in config.acl},
        issuer=simnet.SimTokenIssuer(lifetime_s=lifetime, now=now),
        now=now,
    )


@pytest.fixture
def hub_config():
    return load_config(FIXTURES / "hub-config.yaml")


@pytest.fixture
def sim_state(hub_config):
    agents, lifetime = load_scenario_agents()
    return build_state(hub_config, agents, lifetime)


@pytest.fixture
def pipeline(hub_config, sim_state):
    pipe = service.build_pipeline(
        hub_config, object_store=sim_state, token_provider=sim_state.issuer,
        transport=simnet.SimTransport(sim_state))
    yield pipe
    pipe.close()


@pytest.fixture
def hub_app(pipeline, hub_config):
    return service.build_app(pipeline, hub_config)


@pytest.fixture
def hub_client(hub_app):
    with TestClient(hub_app) as client:
        yield client


class ServerThread:
    """One uvicorn server on a loopback port, running in a daemon thread."""

    def __init__(self, app, port: int):
        self.port = port
        self.server = uvicorn.Server(uvicorn.Config(
            app, host="127.0.0.1", port=port, log_level="warning"))
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def start(self):
        self.thread.start()
        deadline = time.monotonic() + 10
        while not self.server.started:
            if time.monotonic() > deadline or not self.thread.is_alive():
                raise RuntimeError(f"server on port {self.port} failed to start")
            time.sleep(0.01)
        return self

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=5)


class LiveSimulation:
    """Hub + simulator on real sockets, sharing one SimulationState."""

    def __init__(self, timeout_ms: int | None = None):
        self.hub_port = free_port()
        self.sim_port = free_port()
        sim_base = f"http://127.0.0.1:{self.sim_port}"
        config = rebase_targets(load_config(FIXTURES / "hub-config.yaml"), sim_base)
        if timeout_ms is not None:
            config = dataclasses.replace(config, targets=[
                dataclasses.replace(t, timeout_s=timeout_ms / 1000.0)
                for t in config.targets
            ])
        agents, lifetime = load_scenario_agents(sim_base)
        self.config = config
        self.state = build_state(config, agents, lifetime)
        self.pipeline = service.build_pipeline(
            config, object_store=self.state, token_provider=self.state.issuer)
        self.hub_server = ServerThread(
            service.build_app(self.pipeline, config), self.hub_port)
        self.sim_server = ServerThread(
            simnet.build_sim_app(self.state), self.sim_port)

    @property
    def hub_url(self) -> str:
        return f"http://127.0.0.1:{self.hub_port}"

    @property
    def sim_url(self) -> str:
        return f"http://127.0.0.1:{self.sim_port}"

    def __enter__(self):
        self.hub_server.start()
        self.sim_server.start()
        return self

    def __exit__(self, *exc_info):
        self.hub_server.stop()
        self.sim_server.stop()
        self.pipeline.close()


@pytest.fixture
def live_sim():
    with LiveSimulation() as sim:
        yield sim


def pytest_terminal_summary(terminalreporter):
    """One visible line per passed acceptance criterion, capture or not.
    Failed criteria already surface as FAILED test lines."""
    try:
        from test_acceptance import PASSED_CRITERIA
    except ImportError:
        return
    if PASSED_CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in PASSED_CRITERIA:
            terminalreporter.write_line(line)
