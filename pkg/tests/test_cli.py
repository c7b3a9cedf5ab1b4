import json
import subprocess
import sys
from pathlib import Path

from conftest import CORPUS, ROOT


def sdflow(*args):
    return subprocess.run([sys.executable, "-m", "sdflow.cli", *args],
                          capture_output=True, text=True, cwd=ROOT)


GOOD = str(CORPUS / "good" / "downsampler.sdf")
CYCLE = str(CORPUS / "rejected" / "undelayed_cycle.sdf")
BAD = str(CORPUS / "negative" / "n01_send_on_recv_polarity.sdf")


def test_check_accepts_downsampler():
    out = sdflow("check", GOOD)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "ok"


def test_check_rejects_with_rule_on_stderr():
    out = sdflow("check", BAD)
    assert out.returncode == 1
    assert "Val Send" in out.stderr
    assert out.stdout == ""


def test_schedule_emits_json():
    out = sdflow("schedule", GOOD, "--format", "json")
    assert out.returncode == 0
    payload = json.loads(out.stdout)
    actions = [s["action"] for s in payload["schedule"]]
    assert actions == ["produce", "consume", "produce", "consume"]


def test_schedule_cycle_exits_2():
    out = sdflow("schedule", CYCLE)
    assert out.returncode == 2
    assert "cycle" in out.stderr


def test_run_trace_counts():
    out = sdflow("run", GOOD, "--size", "s=8", "--scheduler", "roundRobin",
                 "--format", "json")
    assert out.returncode == 0, out.stderr
    payload = json.loads(out.stdout)
    recvs = [t for t in payload["trace"]
             if t["label"]["kind"] == "recv" and t["label"]["channel"] == "i"]
    sends = [t for t in payload["trace"]
             if t["label"]["kind"] == "send" and t["label"]["channel"] == "o"]
    assert len(recvs) == 8 and len(sends) == 4


def test_run_deadlock_exits_3():
    out = sdflow("run", CYCLE, "--size", "n=2")
    assert out.returncode == 3


def test_run_json_reproducible_with_seed():
    a = sdflow("run", GOOD, "--size", "s=4", "--scheduler", "random",
               "--seed", "7", "--format", "json")
    b = sdflow("run", GOOD, "--size", "s=4", "--scheduler", "random",
               "--seed", "7", "--format", "json")
    assert a.returncode == b.returncode == 0
    assert a.stdout == b.stdout


def test_run_multiple_firings_carry_buffers():
    out = sdflow("run", GOOD, "--size", "s=4", "--firings", "3",
                 "--format", "json")
    assert out.returncode == 0
    payload = json.loads(out.stdout)
    recvs = [t for t in payload["trace"]
             if t["label"]["kind"] == "recv" and t["label"]["channel"] == "i"]
    assert len(recvs) == 12


def test_conform_ok():
    out = sdflow("conform", GOOD, "--size", "s=4", "--format", "json")
    assert out.returncode == 0, out.stderr
    payload = json.loads(out.stdout)
    assert payload["preservation"]["violations"] == []
    assert payload["progress"]["complete"] is True


def test_usage_error_exits_64():
    out = sdflow("frobnicate", GOOD)
    assert out.returncode == 64


def test_bad_size_exits_64():
    out = sdflow("run", GOOD, "--size", "s=zero")
    assert out.returncode == 64
