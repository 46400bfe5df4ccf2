import json
import os
from unittest.mock import patch

import pytest

from cprd.core.errors import ConfigInvalid, IoFailure
from cprd.experiments.cli import (
    COMMANDS,
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    build_parser,
    load_grid,
    main,
)

PERCOLATION = {"kind": "percolation", "replicas": 2, "seed": 4, "params": {"d": 2, "p": 0.0, "n": 3}}


@pytest.fixture
def config_file(tmp_path):
    def write(record, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(record) if isinstance(record, dict) else record)
        return str(path)

    return write


class TestParser(object):
    def test_commands(self):
        parser = build_parser()
        for command in list(COMMANDS) + ["sweep"]:
            extra = ["--grid", "g.json"] if command == "sweep" else []
            args = parser.parse_args([command, "--config", "c.json"] + extra)
            assert args.command == command
            assert args.seed is None
            assert args.log_level == "INFO"

    def test_overrides(self):
        args = build_parser().parse_args(
            ["percolate", "--config", "c.json", "--seed", "9", "--replicas", "3", "--workers", "2", "--out", "o"]
        )
        assert (args.seed, args.replicas, args.workers, args.out) == (9, 3, 2, "o")


class TestMain(object):
    def test_run(self, config_file, tmp_path):
        out = tmp_path / "out"
        code = main(["percolate", "--config", config_file(PERCOLATION), "--out", str(out)])
        assert code == EXIT_OK
        assert sorted(os.listdir(out)) == ["percolation.csv", "percolation.summary.json", "percolation.timing.json"]

    @patch("cprd.experiments.cli.run_experiment")
    def test_overrides_reach_the_config(self, mock_run, config_file):
        code = main(["percolate", "--config", config_file(PERCOLATION), "--seed", "9", "--workers", "3"])
        assert code == EXIT_OK
        assert mock_run.call_count == 1
        config = mock_run.call_args[0][0]
        assert config.seed == 9
        assert config.workers == 3
        assert config.replicas == 2

    @pytest.mark.parametrize(
        "argv",
        [[], ["simulate"], ["teleport", "--config", "c.json"], ["percolate", "--config", "c.json", "--seed", "x"]],
    )
    def test_usage_errors(self, argv):
        assert main(argv) == EXIT_USAGE

    def test_help(self):
        assert main(["--help"]) == EXIT_OK

    def test_invalid_config(self, config_file):
        assert main(["percolate", "--config", config_file("{broken")]) == EXIT_USAGE
        assert main(["percolate", "--config", config_file({"kind": "percolation"})]) == EXIT_USAGE

    def test_kind_must_match_command(self, config_file):
        assert main(["simulate", "--config", config_file(PERCOLATION)]) == EXIT_USAGE

    def test_missing_config(self, tmp_path):
        assert main(["percolate", "--config", str(tmp_path / "missing.json")]) == EXIT_FAILURE

    @patch("cprd.experiments.cli.run_experiment", side_effect=IoFailure("disk full"))
    def test_io_failure(self, mock_run, config_file):
        assert main(["percolate", "--config", config_file(PERCOLATION)]) == EXIT_FAILURE

    def test_sweep(self, config_file, tmp_path):
        out = tmp_path / "out"
        grid = config_file({"params.p": [0.0, 0.05]}, name="grid.json")
        code = main(["sweep", "--config", config_file(PERCOLATION), "--grid", grid, "--out", str(out)])
        assert code == EXIT_OK
        assert os.path.exists(out / "sweep.csv")
        assert os.path.isdir(out / "grid_1")

    def test_sweep_bad_grid(self, config_file):
        grid = config_file({"params.p": 0.1}, name="grid.json")
        assert main(["sweep", "--config", config_file(PERCOLATION), "--grid", grid]) == EXIT_USAGE


class TestLoadGrid(object):
    def test_load(self, config_file):
        assert load_grid(config_file({"params.n": [2, 3]}, name="grid.json")) == {"params.n": [2, 3]}

    def test_errors(self, config_file, tmp_path):
        with pytest.raises(IoFailure):
            load_grid(str(tmp_path / "missing.json"))
        with pytest.raises(ConfigInvalid):
            load_grid(config_file("[1, 2]", name="grid.json"))
        with pytest.raises(ConfigInvalid):
            load_grid(config_file("{", name="grid.json"))
