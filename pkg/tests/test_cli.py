import json
import subprocess
import sys

import pytest

from vrjplab import cli
from vrjplab.report import ExperimentReport


def vrjplab(*args, env=None):
    return subprocess.run([sys.executable, "-m", "vrjplab", *map(str, args)], capture_output=True, text=True, env=env)


@pytest.fixture(scope="module")
def susy_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("susy")
    assert cli.main(["verify-susy", "--seed", "11", "--out", str(out)]) == 0
    return out


def test_run_writes_report_and_digests(susy_run):
    rep = ExperimentReport.read(susy_run / "report.jsonl")
    assert rep.kind == "verify-susy" and rep.seed == 11
    assert set(rep.files) == {"checks.csv"}
    assert rep.status == "pass"


def test_replay_is_byte_identical_across_threads(susy_run, tmp_path):
    _, match = cli.replay(susy_run / "report.jsonl", tmp_path / "r", threads=2)
    assert match == {"checks.csv": True}
    assert (tmp_path / "r" / "checks.csv").read_bytes() == (susy_run / "checks.csv").read_bytes()


def test_threaded_kinds_do_not_depend_on_thread_count(tmp_path):
    digests = []
    for threads in (1, 2):
        rc = cli.main(["verify-dynkin", "--quick", "--seed", "5", "--threads", str(threads),
                       "--out", str(tmp_path / str(threads))])
        assert rc == 0
        digests.append(ExperimentReport.read(tmp_path / str(threads) / "report.jsonl").files)
    assert digests[0] == digests[1]


def test_tampered_seed_is_rejected(susy_run, tmp_path):
    text = (susy_run / "report.jsonl").read_text()
    bad = tmp_path / "report.jsonl"
    bad.write_text(text.replace('"seed": 11', '"seed": 12', 1))
    assert cli.main(["replay", str(bad), "--out", str(tmp_path / "o")]) == 3


def test_version_mismatch_is_rejected(susy_run, tmp_path):
    lines = (susy_run / "report.jsonl").read_text().splitlines()
    head = json.loads(lines[0])
    head["version"] = "0.0.0"
    bad = tmp_path / "report.jsonl"
    bad.write_text("\n".join([json.dumps(head, sort_keys=True)] + lines[1:]) + "\n")
    assert cli.main(["replay", str(bad), "--out", str(tmp_path / "o")]) == 3


def test_changed_output_is_reported(susy_run, tmp_path):
    text = (susy_run / "report.jsonl").read_text()
    lines = text.splitlines()
    foot = json.loads(lines[-1])
    foot["files"]["checks.csv"] = "0" * 64
    bad = tmp_path / "report.jsonl"
    bad.write_text("\n".join(lines[:-1] + [json.dumps(foot, sort_keys=True)]) + "\n")
    assert cli.main(["replay", str(bad), "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize("body,msg", [
    ('kind = "scan-h"\n[scan]\nfoo = 1\n', "unknown key scan.foo"),
    ('kind = "scan-h"\n[scan]\nd = "x"\n', "expected int"),
    ('kind = "scan-h"\n[scan\n', "Expected"),
])
def test_config_errors_exit_3(tmp_path, capsys, body, msg):
    p = tmp_path / "c.toml"
    p.write_text(body)
    assert cli.main(["scan-h", "--config", str(p), "--seed", "1", "--out", str(tmp_path / "o")]) == 3
    assert msg in capsys.readouterr().err


def test_missing_seed_exit_3(tmp_path, capsys):
    assert cli.main(["verify-susy", "--out", str(tmp_path)]) == 3
    assert "seed" in capsys.readouterr().err


def test_usage_errors_exit_3(tmp_path):
    assert vrjplab("bogus", "--out", tmp_path).returncode == 3
    assert vrjplab("verify-susy", "--seed", "1").returncode == 3  # --out missing
    assert cli.main(["verify-susy", "--seed", "1", "--threads", "0", "--out", str(tmp_path)]) == 3


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.resolve_threads(None) == 3
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    with pytest.raises(cli.UsageError):
        cli.resolve_threads(None)


def test_unwritable_output(tmp_path):
    f = tmp_path / "file"
    f.write_text("")
    assert cli.main(["verify-susy", "--seed", "1", "--out", str(f / "sub")]) == 3


def test_failure_exit_code(tmp_path):
    # a scan whose fields cannot plateau on tiny tori is inconclusive (exit 2)
    p = tmp_path / "c.toml"
    p.write_text('kind = "scan-h"\n[scan]\nd = 1\nL_values = [8]\nh_values = [0.01]\n[vrjp]\nn_traj = 200\n')
    assert cli.main(["scan-h", "--config", str(p), "--seed", "1", "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("kind", ["simulate-vrjp", "sample-h22", "sample-hn"])
def test_quick_runs_pass(kind, tmp_path):
    assert cli.main([kind, "--quick", "--seed", "3", "--out", str(tmp_path)]) == 0


def test_module_entry_point(tmp_path):
    r = vrjplab("simulate-vrjp", "--quick", "--seed", "2", "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    assert r.stdout.startswith("simulate-vrjp: pass")
