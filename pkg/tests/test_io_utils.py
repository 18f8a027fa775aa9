import json

import numpy as np
import pytest

from app.exceptions import ConfigError
from app.models.model_type import SolveConfig
from app.schemas import Cell
from app.utils.io_utils import dumps_json, load_config, read_table, write_table


def test_dumps_json_is_stable():
    payload = {"b": 1.0, "a": [0.1, float("nan"), 3], "cell": Cell(label="all"), "grid": np.array([0.5, 2.0])}
    text = dumps_json(payload)
    assert text == dumps_json(payload)
    assert text.endswith("}\n")
    assert '"a": [0.10000000000000001, null, 3]' in text
    assert '"grid": [0.5, 2.0]' in text
    assert json.loads(text)["cell"]["label"] == "all"


def test_dumps_json_with_fewer_digits():
    assert dumps_json({"x": 1 / 3}, digits=4) == '{\n  "x": 0.3333\n}\n'


def test_table_round_trip(tmp_path):
    path = tmp_path / "rows.csv"
    write_table(path, [{"cell": "a", "z": 0.25}, {"cell": "b", "z": 1.0}], ["cell", "z"])
    assert path.read_text(encoding="utf-8").splitlines() == ["cell,z", "a,0.25", "b,1"]
    assert read_table(path)["z"].tolist() == [0.25, 1.0]


def test_load_config_rejects_non_objects(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path, SolveConfig)
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(path, SolveConfig)
