import json

import pytest

from flowtrace.cli import main
from flowtrace.dataio import read_report, read_session

FAST_PROTOCOL = [
    "--sessions", "1",
    "--trials-per-session", "30",
    "--probes-per-session", "4",
    "--min-gap", "6",
    "--skill-trials", "25",
]


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    code = main(["simulate", "--subjects", "3", "--seed", "5", "--out", str(out),
                 *FAST_PROTOCOL])
    assert code == 0
    return out


class TestSimulate:
    def test_writes_session_files(self, cohort_dir):
        files = sorted(cohort_dir.glob("*.json"))
        assert len(files) == 3
        data = read_session(files[0])
        assert len(data.sessions) == 1
        assert len(data.sessions[0]) == 30
        assert len(data.probes) == 4

    def test_reproducible_bytes(self, tmp_path, cohort_dir):
        again = tmp_path / "again"
        code = main(["simulate", "--subjects", "3", "--seed", "5", "--out", str(again),
                     *FAST_PROTOCOL])
        assert code == 0
        for name in ("sim000.json", "sim001.json", "sim002.json"):
            assert (again / name).read_bytes() == (cohort_dir / name).read_bytes()

    def test_zero_subjects_usage_error(self, tmp_path, capsys):
        code = main(["simulate", "--subjects", "0", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_json_summary(self, tmp_path, capsys):
        code = main(["simulate", "--subjects", "1", "--seed", "1", "--json",
                     "--out", str(tmp_path / "j"), *FAST_PROTOCOL])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["subjects"] == 1
        assert 0.0 <= summary["mean_success_rate"] <= 1.0


class TestDecode:
    def test_report_contents(self, cohort_dir, tmp_path):
        report_path = tmp_path / "report.json"
        code = main(["decode", "--input", str(cohort_dir), "--out", str(report_path),
                     "--replicates", "50", "--seed", "3"])
        assert code == 0
        report = read_report(report_path)
        assert report["parameters"]["replicates"] == 50
        assert len(report["subjects"]) + len(report["excluded"]) == 3
        for row in report["subjects"]:
            if "selected_subset" in row:
                assert 1 <= len(row["selected_subset"]) <= 4
                assert sum(row["contributions"].values()) == pytest.approx(1.0, abs=1e-9)
                assert len(row["probes"]) == 4

    def test_deterministic_reports(self, cohort_dir, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            assert main(["decode", "--input", str(cohort_dir), "--out", str(path),
                         "--replicates", "25", "--seed", "3"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_empty_input_dir(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["decode", "--input", str(empty), "--out", str(tmp_path / "r.json")])
        assert code == 1


class TestPsd:
    def test_summary(self, cohort_dir, tmp_path, capsys):
        code = main(["psd", "--input", str(cohort_dir), "--replicates", "25",
                     "--out", str(tmp_path / "psd.json"), "--json"])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert len(summary["subjects"]) == 3
        assert summary["fs_hz"] == pytest.approx(1 / 3)


class TestServeFlag:
    def test_bad_static_dir(self, tmp_path):
        code = main(["serve", "--static-dir", str(tmp_path / "missing"),
                     "--data-dir", str(tmp_path / "data")])
        assert code == 1
