from __future__ import annotations

import pytest

from partaa.cli import EXIT_DOMAIN, EXIT_IO, EXIT_OK, main
from partaa.system import data_path

HANDSHAKE = str(data_path("handshake", "handshake.yaml"))
DEFAULT = str(data_path("default", "default.yaml"))


def kv(text: str) -> dict:
    out = {}
    for token in text.split():
        if "=" in token:
            k, v = token.split("=", 1)
            out[k] = v
    return out


def test_assemble_and_disassemble(tmp_path, capsys):
    src = tmp_path / "p.s"
    src.write_text(".data\n.word k 3\n.text\nLOADK r1, k\nHALT\n")
    out = tmp_path / "p.prta"
    assert main(["assemble", str(src), "-o", str(out)]) == EXIT_OK
    back = tmp_path / "back.s"
    assert main(["assemble", "-d", str(out), "-o", str(back)]) == EXIT_OK
    again = tmp_path / "again.prta"
    assert main(["assemble", str(back), "-o", str(again)]) == EXIT_OK
    assert again.read_bytes() == out.read_bytes()


def test_assemble_errors(tmp_path, capsys):
    src = tmp_path / "bad.s"
    src.write_text("NOP\nFROB r1\n")
    assert main(["assemble", str(src), "-o", str(tmp_path / "x")]) == EXIT_DOMAIN
    assert f"{src}:2:" in capsys.readouterr().err
    assert main(["assemble", str(tmp_path / "missing.s"), "-o", str(tmp_path / "x")]) == EXIT_IO


def test_validate(tmp_path, capsys):
    assert main(["validate", DEFAULT]) == EXIT_OK
    bad = tmp_path / "bad.yaml"
    bad.write_text("processors:\n  - id: 1\n    period: 10\n    partitions:\n"
                   "      - id: 1\n        windows: [[0, 8]]\n      - id: 2\n        windows: [[4, 6]]\n")
    assert main(["validate", str(bad)]) == EXIT_DOMAIN
    assert "contention" in capsys.readouterr().out
    assert main(["validate", str(tmp_path / "nope.yaml")]) == EXIT_IO


def test_run_handshake(tmp_path, capsys):
    trace = tmp_path / "t.trace"
    assert main(["run", HANDSHAKE, "--trace", str(trace)]) == EXIT_OK
    stats = kv(capsys.readouterr().out)
    assert stats["packets_received"] == "100" and stats["faults"] == "0"
    assert (tmp_path / "t.trace.mem").exists()
    assert main(["run", HANDSHAKE, "--trace", str(tmp_path / "u.trace")]) == EXIT_OK
    assert kv(capsys.readouterr().out)["trace_sha256"] == stats["trace_sha256"]
    assert main(["trace-diff", str(trace), str(tmp_path / "u.trace")]) == EXIT_OK


def test_run_zero_cycles(tmp_path, capsys):
    trace = tmp_path / "z.trace"
    assert main(["run", HANDSHAKE, "--cycles", "0", "--trace", str(trace)]) == EXIT_OK
    assert len(trace.read_text().splitlines()) == 1


def test_trace_diff_reports_divergence(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", HANDSHAKE, "--cycles", "500", "--trace", str(a)]) == EXIT_OK
    assert main(["run", HANDSHAKE, "--cycles", "900", "--trace", str(b)]) == EXIT_OK
    capsys.readouterr()
    assert main(["trace-diff", str(a), str(b)]) == EXIT_DOMAIN
    assert "diverge" in capsys.readouterr().out
    assert main(["trace-diff", str(a), str(tmp_path / "none")]) == EXIT_IO


@pytest.mark.parametrize("argv,expected", [
    (["analyze", "wcet", "--tau-a", "5", "--tau-p", "2", "--lambda-p", "6"], "13"),
    (["analyze", "case1", "--tasks", "5", "7", "--budget", "20"], "12"),
    (["analyze", "case2", "--tau-p1", "10", "--gamma-a", "4", "--gamma-b", "2",
      "--tau-b", "5", "--delta-so", "1"], "14"),
    (["analyze", "case3", "--wcet-a", "10", "--wcet-b", "10", "--budgets", "10", "10", "10"], "49"),
    (["analyze", "noc", "--s-total", "4", "--s-channel", "1", "--t-slot", "8"], "33"),
])
def test_analyze(argv, expected, capsys):
    assert main(argv) == EXIT_OK
    out = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    assert out["bound_cycles"] == expected
    assert float(out["bound_ms"]) == pytest.approx(int(expected) / 50_000)


def test_analyze_domain_error(capsys):
    assert main(["analyze", "wcet", "--tau-a", "5", "--tau-p", "9", "--lambda-p", "6"]) == EXIT_DOMAIN


def test_analyze_schedule(capsys):
    assert main(["analyze", "schedule", DEFAULT]) == EXIT_OK


def test_verify_noc_default_and_broken(capsys):
    assert main(["verify", DEFAULT, "--mode", "noc"]) == EXIT_OK
    assert main(["verify", DEFAULT, "--mode", "noc", "--broken-arbitration"]) != EXIT_OK


def test_verify_wcet_mode(capsys):
    assert main(["verify", "--mode", "wcet", "--count", "5"]) == EXIT_OK
