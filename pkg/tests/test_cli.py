import json

import pytest

from causalac.harness.cli import main


def records(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


class TestCli:
    def test_bench_writes_jsonl_and_figure(self, tmp_path):
        out = tmp_path / "bench.jsonl"
        code = main(["bench", "--mode", "central", "--net-delay-ms", "0", "10", "--scale", "200", "--out", str(out)])
        assert code == 0
        rows = records(out)
        assert [r["net_delay_ms"] for r in rows] == [0.0, 10.0]
        assert (tmp_path / "bench.png").exists()

    def test_bench_no_figure(self, tmp_path):
        out = tmp_path / "b.jsonl"
        assert main(["bench", "--mode", "local-acgregate", "--scale", "100", "--no-figure", "--out", str(out)]) == 0
        assert {r["mode"] for r in records(out)} == {"local"}
        assert not (tmp_path / "b.png").exists()

    def test_alicebob_exit_codes(self, tmp_path):
        assert main(["alicebob", "--out", str(tmp_path / "c.jsonl")]) == 0
        assert main(["alicebob", "--mode", "eventual", "--out", str(tmp_path / "e.jsonl")]) == 0
        assert records(tmp_path / "e.jsonl")[0]["leaks"] >= 1

    def test_charly(self, tmp_path):
        out = tmp_path / "c.jsonl"
        assert main(["charly", "--out", str(out)]) == 0
        assert records(out)[0]["both_granted_states"] == 0

    def test_modelcheck(self, tmp_path):
        out = tmp_path / "m.jsonl"
        assert main(["modelcheck", "--history-size", "3", "--replicas", "2", "--out", str(out)]) == 0
        assert records(out)[0]["ok"] is True

    def test_modelcheck_out_of_bounds(self, capsys):
        assert main(["modelcheck", "--history-size", "9"]) == 2
        assert "history_size" in capsys.readouterr().err

    def test_workload_to_stdout(self, capsys):
        assert main(["workload", "--scale", "100"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines and all(json.loads(line)["actor"] for line in lines)

    def test_verbose_after_subcommand(self, tmp_path):
        assert main(["charly", "-v", "--out", str(tmp_path / "x.jsonl")]) == 0

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            main(["fly"])

    @pytest.mark.parametrize(
        "argv",
        [
            ["bench", "--scale", "150", "--no-figure", "--seed", "4"],
            ["alicebob", "--mode", "eventual", "--schedules", "4", "--seed", "2"],
            ["charly", "--seed", "1"],
            ["modelcheck", "--history-size", "3", "--schedules", "5", "--seed", "7"],
            ["workload", "--scale", "120", "--seed", "3"],
        ],
    )
    def test_byte_identical_reruns(self, tmp_path, argv):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        main([*argv, "--out", str(a)])
        main([*argv, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
