import csv
import json
import subprocess
import sys

import pytest

from accbs.cli import CSV_HEADER, main, parse_sweep_spec, sweep_configs
from accbs.simulator import rerun_from_metadata, serialize_log
from accbs.instance_io import build_graph, parse_map


class TestRun:
    def test_writes_csv_metadata_log(self, tmp_path, empty8_map_path,
                                     empty8_scen_path, capsys):
        rc = main([
            "run", "--map", empty8_map_path, "--scen", empty8_scen_path,
            "--agents", "10", "--controller", "accbs", "--hmax", "64",
            "--budget-expansions", "100000", "--mode", "oneshot",
            "--seed", "1", "--out", str(tmp_path),
        ])
        assert rc == 0
        summary = capsys.readouterr().out
        assert "soc=" in summary and "mean_hr=" in summary
        with open(tmp_path / "episode.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == CSV_HEADER.split(",")
        assert rows[1][0] == "empty-8-8.map"
        assert rows[1][9].isdigit()  # soc column
        meta = json.loads((tmp_path / "metadata.json").read_text())
        assert meta["config"]["n_agents"] == 10
        assert meta["reproducible"] is True
        log_text = (tmp_path / "episode.log").read_text()
        assert log_text.startswith("0\t0\t")

    def test_missing_map_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--agents", "3", "--scen", "x.scen"])
        assert exc.value.code == 2

    def test_zero_agents_rejected(self, tmp_path, empty8_map_path,
                                  empty8_scen_path):
        rc = main([
            "run", "--map", empty8_map_path, "--scen", empty8_scen_path,
            "--agents", "0", "--out", str(tmp_path),
        ])
        assert rc == 2

    def test_metadata_rerun_is_bit_identical(self, tmp_path, empty8_map_path,
                                             capsys):
        rc = main([
            "run", "--map", empty8_map_path, "--agents-seed", "5",
            "--agents", "8", "--hmax", "16", "--budget-expansions", "2000",
            "--mode", "lifelong", "--max-steps", "40", "--seed", "9",
            "--out", str(tmp_path),
        ])
        assert rc == 0
        first = (tmp_path / "episode.log").read_text()
        log, _ = rerun_from_metadata(tmp_path / "metadata.json")
        graph = build_graph(parse_map(open(empty8_map_path).read()))
        assert serialize_log(log, graph) == first


class TestSweep:
    def spec_text(self, empty8_map_path, out):
        return (
            f"maps = {empty8_map_path}\n"
            "agents = 6\n"
            "controllers = accbs\n"
            "hmaxes = 16\n"
            "budgets = expansions:200 expansions:2000\n"
            "seeds = 1 2 3\n"
            "mode = oneshot\n"
            f"out = {out}\n"
        )

    def test_sweep_outputs(self, tmp_path, empty8_map_path, capsys):
        spec = tmp_path / "sweep.txt"
        out = tmp_path / "results"
        spec.write_text(self.spec_text(empty8_map_path, out))
        rc = main(["sweep", str(spec), "--workers", "1"])
        assert rc == 0
        with open(out / "runs.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 2 * 3  # header + budgets x seeds
        with open(out / "aggregate.csv") as fh:
            agg = list(csv.reader(fh))
        assert len(agg) == 1 + 2
        svg = (out / "soc_vs_budget.svg").read_text()
        assert svg.startswith("<svg") and "polyline" in svg

    def test_seed_count_contract(self, tmp_path, empty8_map_path):
        spec = tmp_path / "sweep.txt"
        out = tmp_path / "res"
        text = self.spec_text(empty8_map_path, out).replace(
            "seeds = 1 2 3", "seeds = 1 2 3 4 5 6 7 8 9 10"
        ).replace("budgets = expansions:200 expansions:2000",
                  "budgets = expansions:200")
        spec.write_text(text)
        rc = main(["sweep", str(spec), "--workers", "1"])
        assert rc == 0
        with open(out / "runs.csv") as fh:
            assert len(list(csv.reader(fh))) == 11  # exactly 10 rows + header

    def test_empty_value_list_rejected(self, tmp_path):
        spec = tmp_path / "sweep.txt"
        spec.write_text("maps =\n")
        assert main(["sweep", str(spec)]) == 2

    def test_unknown_key_rejected(self, tmp_path):
        spec = tmp_path / "sweep.txt"
        spec.write_text("planets = mars\n")
        assert main(["sweep", str(spec)]) == 2

    def test_cap_exceeded_reports_size(self, tmp_path, empty8_map_path,
                                       capsys):
        spec = tmp_path / "sweep.txt"
        text = self.spec_text(empty8_map_path, tmp_path / "x")
        text += "cap = 3\n"
        spec.write_text(text)
        rc = main(["sweep", str(spec)])
        assert rc == 2
        assert "expands to 6 episodes" in capsys.readouterr().err

    def test_spec_parser_requires_core_keys(self):
        with pytest.raises(ValueError, match="missing required key"):
            parse_sweep_spec("maps = a.map\n")

    def test_fhcbs_horizon_dimension(self, empty8_map_path):
        spec = parse_sweep_spec(
            f"maps = {empty8_map_path}\nagents = 4\ncontrollers = fhcbs\n"
            "hmaxes = 8\nhorizons = 1 3\nbudgets = expansions:100\n"
            "seeds = 1\n"
        )
        configs = sweep_configs(spec)
        assert len(configs) == 2
        assert sorted(c.horizon for c in configs) == [1, 3]


class TestConsoleEntryPoint:
    def test_module_invocation(self, empty8_map_path, empty8_scen_path,
                               tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "accbs.cli", "run",
             "--map", empty8_map_path, "--scen", empty8_scen_path,
             "--agents", "3", "--hmax", "8", "--budget-expansions", "500",
             "--out", str(tmp_path / "o")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "status=all-at-goal" in proc.stdout
