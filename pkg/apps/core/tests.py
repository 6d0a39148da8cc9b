import json
import math

import pytest
import torch
from django.core.management.base import CommandError

from apps.core.exceptions import (
    ConfigError,
    CorruptCheckpointError,
    DatasetError,
    DimensionError,
    DivergenceError,
    ShapeError,
    UnsupportedScaleError,
    command_error,
)
from apps.core.jsonlog import JsonLinesWriter, read_json_lines, truncate_json_lines
from apps.core.manifest import CONFIG_SNAPSHOT_NAME, RunManifest
from apps.core.utils import parameter_digest, read_json, write_json


@pytest.mark.parametrize(
    "exc, code",
    [
        (ConfigError("bad"), 2),
        (UnsupportedScaleError("x3"), 2),
        (DatasetError("missing"), 2),
        (DimensionError("odd"), 3),
        (CorruptCheckpointError("short"), 3),
        (DivergenceError("nan"), 3),
        (RuntimeError("boom"), 3),
    ],
)
def test_command_error_exit_codes(exc, code):
    error = command_error(exc)
    assert isinstance(error, CommandError)
    assert error.returncode == code


def test_command_error_keeps_details():
    error = command_error(DatasetError("Dataset not found: /nowhere", path="/nowhere"))
    assert "/nowhere" in str(error)


def test_shape_errors_are_value_errors():
    assert issubclass(ShapeError, ValueError)
    assert issubclass(DimensionError, ValueError)


def test_json_lines_writer_sorts_keys_and_stringifies_non_finite(tmp_path):
    path = tmp_path / "log.jsonl"
    with JsonLinesWriter(path) as log:
        log.write({"b": 1.5, "a": math.inf, "iter": 0})
        log.write({"iter": 1, "a": 2.0, "b": math.nan})

    lines = path.read_text().splitlines()
    assert lines[0] == '{"a": "inf", "b": 1.5, "iter": 0}'
    assert json.loads(lines[1])["b"] == "nan"


def test_truncate_json_lines_drops_later_records(tmp_path):
    path = tmp_path / "log.jsonl"
    with JsonLinesWriter(path) as log:
        for iteration in range(5):
            log.write({"iter": iteration})
    truncate_json_lines(path, 2)
    assert [r["iter"] for r in read_json_lines(path)] == [0, 1, 2]


def test_parameter_digest_tracks_changes():
    layer = torch.nn.Linear(3, 2)
    before = parameter_digest(layer)
    assert parameter_digest(layer) == before
    with torch.no_grad():
        layer.bias.add_(1.0)
    assert parameter_digest(layer) != before


def test_write_json_is_sorted(tmp_path):
    path = write_json(tmp_path / "out.json", {"z": 1, "a": 2})
    assert path.read_text().index('"a"') < path.read_text().index('"z"')
    assert read_json(path) == {"a": 2, "z": 1}


def test_run_manifest_round_trip(tmp_path):
    manifest = RunManifest(
        command="train",
        output_dir=str(tmp_path / "run"),
        seed=7,
        dataset_paths=["/data"],
        version="abc123",
    )
    manifest.write(resolved_config={"batch": 4})

    assert RunManifest.read(tmp_path / "run") == manifest
    assert read_json(tmp_path / "run" / CONFIG_SNAPSHOT_NAME) == {"batch": 4}
