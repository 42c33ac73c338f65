import subprocess
import sys

import pytest

from nested_karlin.cli import main


def run_cli(args, capsys):
    try:
        code = main(args)
    except SystemExit as exc:  # argparse usage errors exit directly
        code = exc.code
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSpecInvocations:
    def test_limits_cov_prints_value(self, capsys):
        code, out, _ = run_cli(
            ["limits", "cov", "--kind", "X", "--l1", "1", "--l2", "1", "--delta", "0"],
            capsys,
        )
        assert code == 0
        assert out.strip() == "0.75"

    def test_identities_check_summary(self, capsys):
        code, out, _ = run_cli(["identities", "check", "--max-l", "12", "--seed", "7"], capsys)
        assert code == 0
        assert out.startswith("identities ok:")
        assert "worst_rel=" in out

    def test_simulate_writes_replica_csv(self, tmp_path, capsys):
        out_file = tmp_path / "traj.csv"
        code, _, err = run_cli(
            [
                "simulate",
                "--family", "weibull", "--alpha", "0.5",
                "--t", "100",
                "--generations", "2", "--levels", "3",
                "--replicas", "10", "--seed", "1",
                "--out", str(out_file),
            ],
            capsys,
        )
        assert code == 0
        lines = out_file.read_text().strip().split("\n")
        assert lines[0] == "replica,j,l,grid_index,time,K,K_star,balls"
        replicas = {line.split(",")[0] for line in lines[1:]}
        assert replicas == {str(r) for r in range(10)}
        # effective configuration is echoed to stderr
        assert "# seed=1" in err


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        assert run_cli(["frobnicate"], capsys)[0] == 1

    def test_validation_error(self, capsys):
        code, _, err = run_cli(
            ["weights", "table", "--family", "weibull", "--alpha", "1.5"], capsys
        )
        assert code == 1
        assert "error:" in err

    def test_numeric_error(self, capsys):
        # white-noise mesh beyond the cell budget trips the numeric guard
        code, _, err = run_cli(
            [
                "sample", "whitenoise",
                "--u-grid", "0",
                "--x-step", "1e-4", "--y-step", "1e-5",
                "--n", "1", "--seed", "0",
            ],
            capsys,
        )
        assert code == 2
        assert "numeric error:" in err

    def test_geometric_trend_is_vacuous_pass(self, capsys):
        # geometric rows are diagnostic-only: nothing flagged -> exit 0
        code, out, _ = run_cli(
            [
                "verify", "trend",
                "--family", "geometric", "--p", "0.5",
                "--T-grid", "10,14",
                "--levels", "1", "--generations", "1",
            ],
            capsys,
        )
        assert code == 0
        assert "passed=True" in out

    def test_verify_failure_is_exit_three(self, capsys, monkeypatch):
        import nested_karlin.cli as cli_mod
        from nested_karlin.harness import CellResult, ExperimentReport

        def failing_runner(config):
            cell = CellResult(
                experiment="moment_check", cell_id="forced", j=1, l=1, l2=None,
                u=None, v=None, T=None, empirical=1.0, se=0.1, target=0.0,
                target_kind="exact", passed=False,
            )
            return ExperimentReport("moment_check", config, [cell])

        monkeypatch.setitem(cli_mod._VERIFY_RUNNERS, "moment", failing_runner)
        code, out, _ = run_cli(
            ["verify", "moment", "--t", "50", "--replicas", "100"], capsys
        )
        assert code == 3
        assert "passed=False" in out

    def test_help_everywhere(self, capsys):
        for args in (
            ["--help"],
            ["weights", "--help"],
            ["moments", "--help"],
            ["verify", "--help"],
        ):
            with pytest.raises(SystemExit) as exc:
                main(args)
            assert exc.value.code == 0
            assert capsys.readouterr().out


class TestDeterminism:
    def test_identical_invocations_identical_bytes(self, tmp_path, capsys):
        args = [
            "simulate", "--family", "geometric", "--p", "0.5",
            "--t", "50", "--generations", "1", "--levels", "2",
            "--replicas", "5", "--seed", "42",
        ]
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert run_cli(args + ["--out", str(a)], capsys)[0] == 0
        assert run_cli(args + ["--out", str(b)], capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()

    def test_verify_moment_stdout_csv(self, capsys):
        args = [
            "verify", "moment", "--t", "150", "--replicas", "100",
            "--generations", "1", "--levels", "2", "--seed", "9",
        ]
        code, out, err = run_cli(args, capsys)
        assert code == 0
        code2, out2, _ = run_cli(args, capsys)
        assert out == out2
        assert out.startswith("verify moment: passed=")
        header = out.strip().split("\n")[1]
        assert header == "experiment,cell_id,j,l,l2,u,v,T,empirical,se,target,target_kind,pass"


class TestConfigFile:
    def test_flags_override_config(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("t=120\nreplicas=120\nprune=1e-7\n")
        code, _, err = run_cli(
            [
                "verify", "moment", "--config", str(cfg),
                "--replicas", "150", "--generations", "1", "--levels", "1",
                "--seed", "4",
            ],
            capsys,
        )
        assert code == 0
        assert "# replicas=150" in err  # flag wins
        assert "# t=120.0" in err or "# t=120" in err  # config supplies the rest
        assert "# prune=1e-07" in err

    def test_missing_config_file(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["verify", "moment", "--config", str(tmp_path / "nope.cfg")], capsys
        )
        assert code == 1


class TestModuleEntryPoint:
    def test_python_dash_m(self):
        proc = subprocess.run(
            [sys.executable, "-m", "nested_karlin", "limits", "cov",
             "--kind", "Z", "--l1", "1", "--l2", "1", "--delta", "0"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout.strip() == "0.6931471805599453"

    def test_threads_env_fallback(self, tmp_path):
        env_run = subprocess.run(
            [sys.executable, "-m", "nested_karlin", "verify", "moment",
             "--t", "120", "--replicas", "100", "--generations", "1",
             "--levels", "1", "--seed", "2"],
            capture_output=True, text=True,
            env={"PATH": "/usr/bin:/bin", "NESTED_KARLIN_THREADS": "2"},
        )
        assert env_run.returncode == 0
        assert "# threads=2" in env_run.stderr
