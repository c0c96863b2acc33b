import glob
import json
import os

import pytest

from app.logic.errors import ConfigError
from app.services.experiment_config import (
    CONFIG_PATH,
    ExperimentConfig,
    load_experiment_config,
    parse_experiment_config,
    save_experiment_config,
)

CONFIG_DIR = os.path.join(os.path.dirname(CONFIG_PATH), "configs")

BASE = {
    "experiment": "scaling",
    "domain": {"type": "square", "half_width": 1.0},
    "epsilons": [0.125, 0.0625],
    "dislocations": [{"b": [1, 0], "x": [0.0, 0.0]}],
}


def _with(**changes):
    data = json.loads(json.dumps(BASE))
    data.update(changes)
    return data


def test_defaults():
    config = parse_experiment_config(BASE)
    assert config.threads == 1
    assert config.solver.tol == 1e-10
    assert config.flat_norm.n_directions == 720
    assert config.polygon().area == pytest.approx(4.0)
    [d] = config.targets()
    assert d.burgers.as_tuple() == (1, 0)
    assert d.burgers.is_unit


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CONFIG_DIR, "*.json"))) + [CONFIG_PATH])
def test_shipped_configs_validate(path):
    config = load_experiment_config(path)
    assert isinstance(config, ExperimentConfig)


@pytest.mark.parametrize("changes", [
    {"epsilons": [0.0625, 0.125]},
    {"epsilons": [0.125, -0.0625]},
    {"epsilons": []},
    {"dislocations": [{"b": [1, 0], "x": [1.0, 0.0]}]},
    {"dislocations": [{"b": [1.5, 0], "x": [0.0, 0.0]}]},
    {"domain": {"type": "polygon", "vertices": [[0, 0], [2, 0], [1, 0.2], [1, 2]]}},
    {"domain": {"type": "circle", "radius": 1.0}},
    {"dilation_lambda": 0},
    {"crack_sign": 2},
    {"threads": 0},
    {"unknown_key": 1},
    {"seed": 1},
])
def test_invalid_configs_raise(changes):
    with pytest.raises(ConfigError):
        parse_experiment_config(_with(**changes))


def test_polygon_domain():
    config = parse_experiment_config(_with(domain={"type": "polygon", "vertices": [[-1, -1], [1, -1], [0, 1]]},
                                           dislocations=[{"b": [0, 1], "x": [0.0, -0.2]}]))
    assert config.polygon().area == pytest.approx(2.0)


def test_sidecar_round_trip(tmp_path):
    config = parse_experiment_config(BASE)
    path = tmp_path / "nested" / "run.config.json"
    save_experiment_config(config, str(path), {"summary": {"slope": 0.1}})
    with open(path) as f:
        payload = json.load(f)
    assert payload["summary"] == {"slope": 0.1}
    assert load_experiment_config(str(path)) == config


def test_missing_and_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment_config(str(tmp_path / "absent.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_experiment_config(str(broken))


def test_default_path_is_used():
    assert load_experiment_config() == load_experiment_config(CONFIG_PATH)
