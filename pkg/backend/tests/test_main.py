import json

import pandas as pd

from app.main import build_parser, main


def _write_config(tmp_path, **changes):
    data = {
        "experiment": "scaling",
        "domain": {"type": "square", "half_width": 1.0},
        "epsilons": [0.125],
        "dislocations": [{"b": [1, 0], "x": [0.0, 0.0]}],
    }
    data.update(changes)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_parser_knows_every_experiment():
    parser = build_parser()
    for command in ("scaling", "counterexamples", "flatnorm", "constraint-audit"):
        args = parser.parse_args([command, "--threads", "2"])
        assert args.command == command
        assert args.threads == 2


def test_scaling_command(tmp_path):
    out = tmp_path / "out.csv"
    code = main(["--log-file", str(tmp_path / "run.log"), "scaling",
                 "--config", _write_config(tmp_path), "--out", str(out)])
    assert code == 0
    assert len(pd.read_csv(out)) == 1
    assert (tmp_path / "out.config.json").exists()


def test_subcommand_overrides_the_configured_experiment(tmp_path):
    out = tmp_path / "audit.csv"
    config = _write_config(tmp_path, experiment="flatnorm")
    assert main(["--log-file", str(tmp_path / "run.log"), "constraint-audit", "--config", config,
                 "--out", str(out)]) == 0
    assert "condli_fraction" in pd.read_csv(out).columns


def test_bad_inputs_exit_with_two(tmp_path):
    log = str(tmp_path / "run.log")
    assert main(["--log-file", log, "scaling", "--config", str(tmp_path / "missing.json")]) == 2
    bad = _write_config(tmp_path, epsilons=[0.0625, 0.125])
    assert main(["--log-file", log, "scaling", "--config", bad]) == 2
    good = _write_config(tmp_path)
    assert main(["--log-file", log, "scaling", "--config", good, "--threads", "0"]) == 2
