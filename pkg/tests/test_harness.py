import csv
import json
import subprocess
import sys

import pytest

from aevsim.harness import (
    LOAD_PROFILES,
    cmd_gen,
    cmd_run,
    compare_rows,
    generate_network,
    generate_scenario,
    main,
    RunConfig,
)
from aevsim.errors import InvalidParameter
from aevsim.kernel import load_scenario_file, run
from aevsim.network import load_network


class TestGen:
    def test_grid2_shape(self):
        doc = generate_network(2, seed=1)
        assert len(doc["nodes"]) == 4
        assert len(doc["edges"]) == 8
        net = load_network(doc)   # validates

    def test_no_signals_on_2x2(self):
        doc = generate_network(2, seed=1)
        assert all(not n["signalized"] for n in doc["nodes"])

    def test_interior_signals_on_4x4(self):
        doc = generate_network(4, seed=1)
        signalized = [n for n in doc["nodes"] if n["signalized"]]
        assert len(signalized) == 4
        for node in signalized:
            assert node["signal"]["cycle_s"] == 60.0
            assert node["signal"]["green_window"] == [0.0, 30.0]
            assert 0.0 <= node["signal"]["offset_s"] < 60.0

    def test_reverse_twins_mutual(self):
        doc = generate_network(3, seed=1)
        by_id = {e["id"]: e for e in doc["edges"]}
        for edge in doc["edges"]:
            twin = by_id[edge["reverse_twin"]]
            assert twin["from_node"] == edge["to_node"]
            assert twin["to_node"] == edge["from_node"]

    def test_byte_identical_for_same_seed(self, tmp_path):
        a = cmd_gen(3, 7, "default", str(tmp_path / "first" / "g"))
        b = cmd_gen(3, 7, "default", str(tmp_path / "second" / "g"))
        assert a[0].read_bytes() == b[0].read_bytes()
        assert a[1].read_bytes() == b[1].read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a = cmd_gen(3, 7, "default", str(tmp_path / "first" / "g"))
        b = cmd_gen(3, 8, "default", str(tmp_path / "second" / "g"))
        assert a[1].read_bytes() != b[1].read_bytes()

    def test_generated_scenario_validates_and_runs(self, tmp_path):
        _net, scn = cmd_gen(4, 11, "light", str(tmp_path / "g"))
        scenario = load_scenario_file(scn)
        trace = run(scenario, seed=1)
        assert trace.records

    def test_grid_too_small(self):
        with pytest.raises(InvalidParameter):
            generate_network(1, seed=0)

    def test_unknown_load_profile(self):
        with pytest.raises(InvalidParameter):
            generate_scenario(3, 0, "nope", "x.net.json")

    def test_requests_respect_release_margin(self):
        doc = generate_scenario(4, 3, "default", "x.net.json")
        profile = LOAD_PROFILES["default"]
        for request in doc["requests"]:
            assert request["release_time_s"] <= \
                profile.horizon_s - profile.release_margin_s

    def test_c0_requests_have_destinations(self):
        doc = generate_scenario(5, 9, "default", "x.net.json")
        for request in doc["requests"]:
            if request["criticality"] == "C0":
                assert request["mode"] == "E0"
                assert request["destination_node"] is not None
                assert request["destination_node"] != request["pickup_node"]


class TestCmdRun:
    def make_files(self, tmp_path, grid=3, seed=5, load="light"):
        _net, scn = cmd_gen(grid, seed, load, str(tmp_path / "scn"))
        return scn

    def test_happy_path_writes_three_files(self, tmp_path, capsys):
        scn = self.make_files(tmp_path)
        out = tmp_path / "out"
        code = cmd_run(RunConfig(scenario_path=str(scn), seed=42,
                                 out_dir=str(out)))
        assert code == 0
        assert (out / "trace.ndjson").exists()
        assert (out / "report.json").exists()
        assert (out / "report.csv").exists()
        summary = capsys.readouterr().out.strip()
        assert "mortality_delta=" in summary
        assert "veh-s" in summary
        assert "within" in summary or "served" in summary or "no requests" in summary

    def test_missing_scenario_names_path(self, tmp_path, capsys):
        code = cmd_run(RunConfig(scenario_path=str(tmp_path / "nope.scn.json"),
                                 seed=0, out_dir=str(tmp_path / "out")))
        assert code == 1
        assert "nope.scn.json" in capsys.readouterr().err

    def test_missing_network_names_path(self, tmp_path, capsys):
        scn = tmp_path / "s.scn.json"
        scn.write_text(json.dumps({
            "format": "mcrts-scn/1", "network": "ghost.net.json",
            "fleet": [], "requests": [], "horizon_s": 10}))
        code = cmd_run(RunConfig(scenario_path=str(scn), seed=0,
                                 out_dir=str(tmp_path / "out")))
        assert code == 1
        assert "ghost.net.json" in capsys.readouterr().err

    def test_io_failure_exit_2(self, tmp_path, capsys):
        scn = self.make_files(tmp_path)
        blocker = tmp_path / "blocker"
        blocker.write_text("file, not a directory")
        code = cmd_run(RunConfig(scenario_path=str(scn), seed=0,
                                 out_dir=str(blocker / "out")))
        assert code == 2

    def test_policy_preset_override(self, tmp_path, capsys):
        scn = self.make_files(tmp_path)
        code = cmd_run(RunConfig(scenario_path=str(scn), seed=0,
                                 out_dir=str(tmp_path / "out"), policy_override="uk"))
        assert code == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["policy"] == "uk"

    def test_csv_format_only(self, tmp_path):
        scn = self.make_files(tmp_path)
        out = tmp_path / "out"
        code = cmd_run(RunConfig(scenario_path=str(scn), seed=0,
                                 out_dir=str(out), formats=("csv",)))
        assert code == 0
        assert (out / "report.csv").exists()
        assert not (out / "report.json").exists()


class TestCompare:
    def test_two_variant_table(self, tmp_path):
        _net, scn = cmd_gen(3, 5, "light", str(tmp_path / "scn"))
        rows = compare_rows(str(scn), [1], ["mcrts", "no_preemption"])
        assert len(rows) == 3
        header = rows[0]
        assert header[:2] == ["seed", "variant"]
        assert header[-1] == "error"
        assert [r[1] for r in rows[1:]] == ["mcrts", "no_preemption"]
        assert all(r[-1] == "" for r in rows[1:])

    def test_duplicate_variant_rows_identical(self, tmp_path):
        _net, scn = cmd_gen(3, 5, "light", str(tmp_path / "scn"))
        rows = compare_rows(str(scn), [2], ["mcrts", "mcrts"])
        assert rows[1] == rows[2]

    def test_cells_match_independent_runs(self, tmp_path):
        from aevsim import metrics
        _net, scn = cmd_gen(3, 5, "light", str(tmp_path / "scn"))
        rows = compare_rows(str(scn), [3], ["mcrts", "no_preemption"])
        scenario = load_scenario_file(scn)
        for row in rows[1:]:
            trace = run(scenario, seed=3, variant=row[1])
            report = metrics.compliance(trace, scenario.policy)
            assert row[-2] == f"{report.disturbance_veh_s:.3f}"
            assert row[-3] == f"{report.mortality_delta:.6f}"


class TestCli:
    def test_gen_run_validate_roundtrip(self, tmp_path, capsys):
        assert main(["gen", "--grid-n", "3", "--seed", "4", "--load", "light",
                     "--out", str(tmp_path / "g")]) == 0
        scn = str(tmp_path / "g.scn.json")
        assert main(["validate", "--scenario", scn]) == 0
        assert main(["run", "--scenario", scn, "--seed", "1",
                     "--out", str(tmp_path / "out")]) == 0

    def test_validate_rejects_garbage(self, tmp_path, capsys):
        bad = tmp_path / "bad.scn.json"
        bad.write_text("{}")
        assert main(["validate", "--scenario", str(bad)]) == 1

    def test_compare_writes_csv(self, tmp_path):
        main(["gen", "--grid-n", "3", "--seed", "4", "--load", "light",
              "--out", str(tmp_path / "g")])
        out = tmp_path / "cmp.csv"
        code = main(["compare", "--scenario", str(tmp_path / "g.scn.json"),
                     "--seeds", "1", "2", "--variants", "mcrts", "no_preemption",
                     "--out", str(out)])
        assert code == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 5

    def test_compare_needs_two_variants(self, tmp_path, capsys):
        main(["gen", "--grid-n", "3", "--seed", "4", "--load", "light",
              "--out", str(tmp_path / "g")])
        assert main(["compare", "--scenario", str(tmp_path / "g.scn.json"),
                     "--seeds", "1", "--variants", "mcrts"]) == 1

    def test_module_entry_point(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "aevsim", "gen", "--grid-n", "2",
             "--seed", "1", "--out", str(tmp_path / "m")],
            capture_output=True, text=True)
        assert result.returncode == 0
        assert (tmp_path / "m.scn.json").exists()
