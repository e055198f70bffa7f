#!/usr/bin/env python3
"""Unit tests for run configuration - parsing, presets, overrides and environment."""

import os
import tempfile
from dataclasses import replace
from pathlib import Path

import pytest

from jointseg.config import (
    ENV_LISTEN,
    PRESETS,
    RunConfig,
    apply_overrides,
    dump_config,
    load_config,
    parse_config,
    parse_listen,
    preset,
    validate_config,
)
from jointseg.errors import ConfigError


def test_dump_parse_round_trip() -> None:
    """Unit: every preset survives dump → parse unchanged."""
    for name in PRESETS:
        config = preset(name)
        assert parse_config(dump_config(config)) == config


def test_dump_is_sorted_key_value_lines() -> None:
    """Unit: the canonical dump is one sorted `key = value` per line."""
    lines = dump_config(RunConfig()).splitlines()

    assert lines == sorted(lines)
    assert "model.dilations = 5,10,15" in lines
    assert "model.overparameterize = true" in lines
    assert all(" = " in line for line in lines)


def test_parse_comments_and_blank_lines() -> None:
    """Unit: comments and blank lines are skipped; values land in their section."""
    text = "# a run\n\nmodel.feature_maps = 32  # narrower\ntrain.alpha = 0.5\n"

    config = parse_config(text)

    assert config.model.feature_maps == 32
    assert config.train.alpha == 0.5
    assert config.data == RunConfig().data


def test_parse_reports_line_numbers() -> None:
    """Unit: unknown keys, bad values and missing '=' name the offending line."""
    with pytest.raises(ConfigError, match="line 2: unknown key 'model.bogus'"):
        parse_config("model.feature_maps = 8\nmodel.bogus = 1\n")
    with pytest.raises(ConfigError, match="line 1: bad value for train.alpha"):
        parse_config("train.alpha = high\n")
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("\n\njust words\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("model.overparameterize = maybe\n")


def test_validate_rejects_inconsistent_values() -> None:
    """Unit: geometry, α range, dilations and groups are checked together."""
    base = RunConfig()
    bad = [
        replace(base, data=replace(base.data, image_size=100)),
        replace(base, train=replace(base.train, alpha=1.0)),
        replace(base, train=replace(base.train, alpha=0.0)),
        replace(base, model=replace(base.model, dilations=(5, 5, 10))),
        replace(base, model=replace(base.model, feature_maps=30, groups=4)),
        replace(base, model=replace(base.model, repetitions=0)),
        replace(base, model=replace(base.model, num_classes=1)),
    ]
    for config in bad:
        with pytest.raises(ConfigError):
            validate_config(config)


def test_apply_overrides() -> None:
    """Unit: dotted overrides apply, None is skipped, tuples are accepted."""
    config = apply_overrides(
        RunConfig(),
        {"train.alpha": 0.25, "model.dilations": (6, 12, 18), "model.repetitions": None},
    )

    assert config.train.alpha == 0.25
    assert config.model.dilations == (6, 12, 18)
    assert config.model.repetitions == RunConfig().model.repetitions
    assert apply_overrides(config, {}) is config
    with pytest.raises(ConfigError):
        apply_overrides(config, {"train.alpha": 2.0})


def test_presets() -> None:
    """Unit: the full-scale presets carry their class counts and widths."""
    coco = preset("coco")
    cityscapes = preset("cityscapes")

    assert (coco.model.num_classes, coco.model.feature_maps) == (21, 256)
    assert (cityscapes.model.num_classes, cityscapes.model.repetitions) == (19, 3)
    assert coco.total_steps() == 42 * coco.steps_per_epoch()
    assert cityscapes.total_steps() == 80000
    with pytest.raises(ConfigError):
        preset("imagenet")


def test_load_config_file_and_environment() -> None:
    """Unit: preset, then file, then environment, in that order."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "run.cfg"
        path.write_text("endpoint.listen = 10.0.0.1:9000\nmodel.num_classes = 4\n")
        previous = os.environ.pop(ENV_LISTEN, None)
        try:
            config = load_config(path, "desk")
            assert config.endpoint.listen == "10.0.0.1:9000"
            assert config.model.num_classes == 4

            os.environ[ENV_LISTEN] = "0.0.0.0:7001"
            assert load_config(path, "desk").endpoint.listen == "0.0.0.0:7001"
        finally:
            os.environ.pop(ENV_LISTEN, None)
            if previous is not None:
                os.environ[ENV_LISTEN] = previous

        with pytest.raises(ConfigError):
            load_config(Path(tmpdir) / "missing.cfg")


def test_parse_listen() -> None:
    """Unit: host:port parsing with a loopback default host."""
    assert parse_listen("0.0.0.0:9000") == ("0.0.0.0", 9000)
    assert parse_listen(":7000") == ("127.0.0.1", 7000)
    with pytest.raises(ConfigError):
        parse_listen("localhost")
    with pytest.raises(ConfigError):
        parse_listen("localhost:http")


def run_config_tests() -> None:
    """Run all configuration unit tests."""
    tests = [
        ("Dump/parse round trip", test_dump_parse_round_trip),
        ("Dump format", test_dump_is_sorted_key_value_lines),
        ("Comments and blank lines", test_parse_comments_and_blank_lines),
        ("Line numbers in errors", test_parse_reports_line_numbers),
        ("Validation", test_validate_rejects_inconsistent_values),
        ("Overrides", test_apply_overrides),
        ("Presets", test_presets),
        ("File and environment", test_load_config_file_and_environment),
        ("parse_listen", test_parse_listen),
    ]

    print("Running Config Unit Tests...")
    print("=" * 60)

    passed = 0
    failed = 0

    for name, test_func in tests:
        try:
            test_func()
            print(f"✓ {name}")
            passed += 1
        except AssertionError as e:
            print(f"✗ {name}: {e}")
            failed += 1
        except Exception as e:
            print(f"✗ {name}: Unexpected error: {e}")
            failed += 1

    print("=" * 60)
    print(f"Config Unit Tests: {passed} passed, {failed} failed")

    if failed > 0:
        raise SystemExit(1)


if __name__ == "__main__":
    run_config_tests()
