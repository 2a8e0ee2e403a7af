import json

import pytest

from ckforms.cli import build_parser, main


# ---------------------------------------------------------------- exit codes


class TestExitCodes:
    def test_pass_is_zero(self, capsys):
        assert main(["--metric", "flat(4)", "--points", "1", "--suite", "curvature"]) == 0
        assert "PASS bianchi.bi1" in capsys.readouterr().out

    def test_mutation_is_one(self, capsys):
        argv = ["--metric", "random(4,1)", "--points", "2", "--suite", "curvature", "--mutate", "bianchi.bi1"]
        assert main(argv) == 1
        assert "FAIL bianchi.bi1" in capsys.readouterr().out

    @pytest.mark.parametrize(
        "argv",
        [
            ["--metric", "warp_drive(4)"],
            ["--metric", "flat(4)", "--dim", "5"],
            ["--metric", "flat(4)", "--k", "7"],
            ["--metric", "flat(4)", "--points", "0"],
            ["--metric", "flat(4)", "--mutate", "no.such.check"],
        ],
    )
    def test_config_errors_are_two(self, argv, capsys):
        assert main(argv + ["--quiet"]) == 2
        assert "configuration error" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [["--k", "x"], ["--k", "3,1"], ["--signature", "4"], ["--suite", "nope"]])
    def test_bad_arguments_are_two(self, argv):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 2


# ---------------------------------------------------------------- output


class TestOutput:
    def test_report_file(self, tmp_path):
        out = tmp_path / "report.json"
        argv = ["--metric", "schwarzschild(1)", "--points", "1", "--suite", "prolong", "--out", str(out), "--quiet"]
        assert main(argv) == 0
        d = json.loads(out.read_text())
        assert d["pass"] is True and d["metric"] == "schwarzschild(1.0)"
        assert {c["id"] for c in d["checks"]} >= {"main.parallel_iff_cke", "nonclosed_noninv.extract"}

    def test_list_checks(self, capsys):
        assert main(["--list-checks"]) == 0
        out = capsys.readouterr().out
        assert "coupKillthm.xy" in out and "[mutation:" in out

    def test_skips_are_printed(self, capsys):
        assert main(["--metric", "random(4,1)", "--points", "1", "--suite", "prolong"]) == 0
        assert "SKIP main.parallel_iff_cke" in capsys.readouterr().out

    def test_ranges(self):
        args = build_parser().parse_args(["--k", "1,3", "--l", "2", "--signature", "3,1"])
        assert args.k == (1, 2, 3) and args.l == (2,) and args.signature == (3, 1)
