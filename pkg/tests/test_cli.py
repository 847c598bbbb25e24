import pytest

from anovaselect.cli import main, read_config_file, write_csv


def run(args):
    return main(args)


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


SMALL_RISK_CFG = """
# small full-enumeration configuration
d = 12
s = 2
beta = 0.6
sigma = 1
epsilon = 0.01
grid_m = 3
truncation = rule
pattern = none
cycles = 2
mode = full
seed = 5
"""


class TestConfigHandling:
    def test_parse_types_and_comments(self, tmp_path):
        path = write_config(
            tmp_path,
            "d = 20   # ambient dimension\nalphas = 0.1,0.5,1\nquiet = true\n",
        )
        cfg = read_config_file(path)
        assert cfg == {"d": 20, "alphas": [0.1, 0.5, 1.0], "quiet": True}

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, "dee = 5\n")
        with pytest.raises(ValueError, match="unknown config key"):
            read_config_file(path)

    def test_bad_value_rejected(self, tmp_path):
        path = write_config(tmp_path, "d = twenty\n")
        with pytest.raises(ValueError, match="cannot parse"):
            read_config_file(path)

    def test_unknown_key_exits_2(self, tmp_path):
        path = write_config(tmp_path, "dee = 5\n")
        assert run(["table1", "--config", path, "--out", str(tmp_path)]) == 2

    def test_unknown_subcommand_exits_2(self, capsys):
        assert run(["tableau"]) == 2
        capsys.readouterr()

    def test_capacity_error_exits_3(self, tmp_path):
        # a tiny noise level pushes the calibrated support past the point budget
        path = write_config(
            tmp_path, "d = 10\ns = 1\nepsilon = 1e-12\ngrid_m = 2\ntruncation = rule\n"
        )
        assert run(["calibrate", "--config", path, "--out", str(tmp_path), "--quiet"]) == 3

    def test_env_override_and_flag_precedence(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, SMALL_RISK_CFG)
        out_env = tmp_path / "env"
        monkeypatch.setenv("ANOVASELECT_SEED", "9")
        assert run(["risk", "--config", cfg, "--out", str(out_env), "--quiet"]) == 0
        manifest = (out_env / "risk_manifest.txt").read_text()
        assert "seed = 9" in manifest
        out_flag = tmp_path / "flag"
        assert (
            run(["risk", "--config", cfg, "--out", str(out_flag), "--seed", "4", "--quiet"])
            == 0
        )
        assert "seed = 4" in (out_flag / "risk_manifest.txt").read_text()


class TestTable1:
    def test_reference_values(self, tmp_path):
        assert run(["table1", "--out", str(tmp_path), "--quiet"]) == 0
        lines = (tmp_path / "table1.csv").read_text().strip().splitlines()
        assert lines[0] == "d,k,n_active"
        rows = {tuple(map(int, line.split(",")[:2])): int(line.split(",")[2])
                for line in lines[1:]}
        expected = {
            (50, 1): 2, (50, 2): 3, (50, 3): 4, (50, 4): 5,
            (100, 1): 2, (100, 2): 3, (100, 3): 5, (100, 4): 7,
            (200, 1): 2, (200, 2): 3, (200, 3): 6, (200, 4): 10,
        }
        assert rows == expected

    def test_formula_fallback_off_bank(self, tmp_path):
        cfg = write_config(tmp_path, "beta = 0.5\nd_list = 10\nk_max = 2\n")
        assert run(["table1", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
        lines = (tmp_path / "table1.csv").read_text().strip().splitlines()
        assert lines[1] == "10,1,3"  # round(10^0.5)
        assert lines[2] == "10,2,7"  # round(45^0.5)


class TestCalibrate:
    def test_residuals_within_tolerance(self, tmp_path):
        cfg = write_config(tmp_path, "d = 50\ns = 1\nepsilon = 5e-5\ngrid_m = 20\n")
        assert run(["calibrate", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
        lines = (tmp_path / "calibrate.csv").read_text().strip().splitlines()
        header = lines[0].split(",")
        assert len(lines) == 21
        idx = header.index("residual")
        assert all(float(line.split(",")[idx]) <= 1e-8 for line in lines[1:])


class TestRiskAndReproducibility:
    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_RISK_CFG)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(["risk", "--config", cfg, "--out", str(out1), "--quiet"]) == 0
        assert run(["risk", "--config", cfg, "--out", str(out2), "--quiet"]) == 0
        assert (out1 / "risk.csv").read_bytes() == (out2 / "risk.csv").read_bytes()

    def test_manifest_reproduces_run(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_RISK_CFG)
        out1 = tmp_path / "orig"
        assert run(["risk", "--config", cfg, "--out", str(out1), "--quiet"]) == 0
        manifest = out1 / "risk_manifest.txt"
        out2 = tmp_path / "redo"
        assert (
            run(["risk", "--config", str(manifest), "--out", str(out2), "--quiet"]) == 0
        )
        assert (out1 / "risk.csv").read_bytes() == (out2 / "risk.csv").read_bytes()

    def test_output_round_trips(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_RISK_CFG)
        assert run(["risk", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
        path = tmp_path / "risk.csv"
        original = path.read_bytes()
        lines = path.read_text().strip().splitlines()
        header = lines[0].split(",")
        parsed = [[_reparse(v) for v in line.split(",")] for line in lines[1:]]
        write_csv(path, header, parsed)
        assert path.read_bytes() == original

    def test_quiet_suppresses_output(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SMALL_RISK_CFG)
        assert run(["risk", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
        assert capsys.readouterr().out == ""
        assert run(["risk", "--config", cfg, "--out", str(tmp_path)]) == 0
        assert "risk.csv" in capsys.readouterr().out


def _reparse(token):
    try:
        return int(token)
    except ValueError:
        try:
            return float(token)
        except ValueError:
            return token


class TestTable2:
    def test_smoke_run_at_benchmark_dimension(self, tmp_path):
        cfg = write_config(tmp_path, "cycles = 1\nalphas = 0.001,1\npool_size = 5\nseed = 3\n")
        assert run(["table2", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
        lines = (tmp_path / "table2.csv").read_text().strip().splitlines()
        assert lines[0] == "alpha,err,false_positives,loss_01"
        rows = [line.split(",") for line in lines[1:]]
        assert [row[0] for row in rows] == ["0.001", "1"]  # ascending alphas
        assert rows[1][1] == "0"  # full-strength signal fully recovered


class TestBoundaryAndAudit:
    def test_boundary_rows(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "d = 50\ns = 2\nbeta_steps = 5\nr_steps = 6\nk_list = 1,2\n",
        )
        assert run(["boundary", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
        lines = (tmp_path / "boundary.csv").read_text().strip().splitlines()
        assert lines[0] == "beta,sigma,d,k,r,ratio,verdict"
        assert len(lines) == 1 + 2 * 5 * 6
        verdicts = {line.split(",")[-1] for line in lines[1:]}
        assert verdicts <= {"selectable", "detectable_only", "undetectable", "boundary"}

    def test_audit_checks_pass(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "d = 12\ns = 2\nbeta = 0.6\nepsilon = 0.01\ngrid_m = 3\ntruncation = rule\n"
            "trials_null = 20000\ntrials_tail = 50000\naudit_k = 1\n",
        )
        assert run(["audit", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
        lines = (tmp_path / "audit.csv").read_text().strip().splitlines()
        rows = [line.split(",") for line in lines[1:]]
        checks = {row[0] for row in rows}
        assert {"weight_normalization", "truncation_coverage", "null_mean",
                "null_var", "tail_upper", "tail_regime"} <= checks
        # tail_regime and ellipsoid_membership rows are informational flags
        failures = [row for row in rows if row[-1] == "false"
                    and row[0] not in ("ellipsoid_membership", "tail_regime")]
        assert failures == []
