"""CLI: argument parsing and bench exit codes end to end."""

import json
import subprocess
import sys

import pytest

from a2a_hub.cli import build_parser, main

from conftest import LiveSimulation, free_port


def test_parser_subcommands():
    parser = build_parser()
    args = parser.parse_args(["bench", "--hub-url", "http://127.0.0.1:1/"])
    assert args.command == "bench"
    assert args.channel is None
    args = parser.parse_args(["serve", "--port", "9001"])
    assert args.port == 9001
    args = parser.parse_args(["sim", "--sim-port", "9002"])
    assert args.sim_port == 9002


def test_bench_unreachable_hub_exits_2(capsys):
    port = free_port()  # nothing listening there
    code = main(["bench", "--hub-url", f"http://127.0.0.1:{port}"])
    assert code == 2
    assert "infrastructure error" in capsys.readouterr().err


def test_bench_bad_case_file_exits_2(tmp_path, capsys):
    bad = tmp_path / "cases.yaml"
    bad.write_text("cases: nope", encoding="utf-8")
    code = main(["bench", "--hub-url", "http://127.0.0.1:1", "--cases", str(bad)])
    assert code == 2


def test_bench_json_output_against_live_hub(capsys):
    with LiveSimulation() as sim:
        code = main(["bench", "--hub-url", sim.hub_url, "--format", "json"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["summary"] == {"passed_count": 4, "total": 4}


def test_bench_failure_exit_code_1(tmp_path, capsys):
    cases = tmp_path / "cases.yaml"
    cases.write_text(
        "cases:\n"
        "- name: misrouted\n"
        "  query: What is the height of Mount Fuji?\n"
        "  expected_route: expense\n",
        encoding="utf-8")
    with LiveSimulation() as sim:
        code = main(["bench", "--hub-url", sim.hub_url, "--cases", str(cases)])
    assert code == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "0/1 passed" in out


def test_module_entrypoint_help():
    result = subprocess.run(
        [sys.executable, "-m", "a2a_hub", "--help"],
        capture_output=True, text=True, timeout=30)
    assert result.returncode == 0
    for sub in ("serve", "sim", "bench"):
        assert sub in result.stdout


def test_serve_rejects_bad_config(tmp_path, capsys):
    bad = tmp_path / "hub.yaml"
    bad.write_text("targets: []", encoding="utf-8")  # missing identity
    code = main(["serve", "--config", str(bad)])
    assert code == 2
    assert "config error" in capsys.readouterr().err
