#!/usr/bin/env python3
"""Integration tests for the jointseg command line - every command on a tiny model."""

import tempfile
from pathlib import Path
from typing import List

import numpy as np
from click.testing import CliRunner, Result

from jointseg.imaging import read_image, read_mask
from jointseg.main import main
from jointseg.networks.model import load_model
from jointseg.training.sweep import read_csv
from jointseg.wire.codec import segment_in_process

TINY_CONFIG = """\
# small enough to train in a test
model.num_classes = 3
model.feature_maps = 8
model.groups = 2
model.latent_channels = 8
model.encoder_stem = 4
model.encoder_widths = 4,8,8
model.encoder_blocks = 1
model.repetitions = 2
train.batch_size = 2
train.max_steps = 2
train.epochs = 0
train.log_every = 0
train.checkpoint_every = 1
data.image_size = 64
data.train_count = 4
data.eval_count = 2
"""


def jointseg(root: Path, *args: str) -> Result:
    """Run the CLI with the tiny config and logging off."""
    runner = CliRunner()
    return runner.invoke(
        main, ["--no-logging", "--config", str(root / "tiny.cfg"), *args], catch_exceptions=False
    )


def prepare(root: Path) -> Path:
    """Write the config and a gen-data directory; returns the data directory."""
    (root / "tiny.cfg").write_text(TINY_CONFIG)
    data = root / "data"
    result = jointseg(root, "gen-data", str(data))
    assert result.exit_code == 0, result.output
    return data


def train_run(root: Path, data: Path, *extra: str) -> Path:
    run = root / "run"
    result = jointseg(root, "train", "--data", str(data), "--out", str(run), *extra)
    assert result.exit_code == 0, result.output
    return run


def error_line(result: Result) -> str:
    lines: List[str] = [line for line in result.output.splitlines() if line.startswith("error ")]
    assert lines, result.output
    return lines[-1]


def test_gen_data_layout() -> None:
    """Integration: gen-data writes train and eval folders with a manifest."""
    with tempfile.TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        data = prepare(root)

        assert len(list((data / "train" / "images").glob("*.png"))) == 4
        assert len(list((data / "eval" / "labels").glob("*.png"))) == 2
        manifest = (data / "train" / "dataset.txt").read_text()
        assert "num_classes=3" in manifest
        labels = read_mask(data / "train" / "labels" / "00000.png")
        assert labels.shape == (64, 64)
        assert set(np.unique(labels)) <= {1, 2, 3}


def test_train_writes_run_directory() -> None:
    """Integration: train leaves checkpoints, the metrics log, the config and a model."""
    with tempfile.TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        run = train_run(root, prepare(root))

        assert (run / "model.jsdw").exists()
        assert (run / "checkpoint-000001.jsdw").exists()
        assert (run / "checkpoint-000002.jsdw").exists()
        assert len((run / "metrics.log").read_text().splitlines()) == 2
        assert "model.feature_maps = 8" in (run / "config.txt").read_text()

        model, config = load_model(run / "model.jsdw")
        assert config.model.repetitions == 2
        assert model.require_tables().hyper


def test_encode_then_segment() -> None:
    """Integration: encode to a container, segment it, and match the in-process mask."""
    with tempfile.TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        data = prepare(root)
        model_path = str(train_run(root, data, "--no-eval") / "model.jsdw")
        image = data / "eval" / "images" / "00000.png"
        container = root / "frame.jsdc"

        result = jointseg(root, "encode", str(image), "--model", model_path, "-o", str(container))
        assert result.exit_code == 0, result.output
        assert container.read_bytes()[:4] == b"JSDC"

        mask_path = str(root / "mask.png")
        result = jointseg(root, "segment", str(container), "--model", model_path, "-o", mask_path)
        assert result.exit_code == 0, result.output

        model, _ = load_model(model_path)
        expected = segment_in_process(model, read_image(image))
        np.testing.assert_array_equal(read_mask(mask_path), expected)

        direct = root / "direct.png"
        result = jointseg(root, "segment", str(image), "--model", model_path, "-o", str(direct))
        assert result.exit_code == 0, result.output
        np.testing.assert_array_equal(read_mask(direct), expected)


def test_segment_errors_report_code_and_kind() -> None:
    """Integration: failures print one `error code=... kind=...` line and exit with the code."""
    with tempfile.TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        data = prepare(root)
        run = train_run(root, data, "--no-eval")
        model_path = str(run / "model.jsdw")
        container = root / "frame.jsdc"
        image = str(data / "eval" / "images" / "00001.png")
        result = jointseg(root, "encode", image, "--model", model_path, "-o", str(container))
        assert result.exit_code == 0, result.output

        blob = bytearray(container.read_bytes())
        blob[-1] ^= 0xFF
        corrupt = root / "corrupt.jsdc"
        corrupt.write_bytes(bytes(blob))
        mask_path = str(root / "m.png")
        result = jointseg(root, "segment", str(corrupt), "--model", model_path, "-o", mask_path)
        assert result.exit_code == 4
        assert error_line(result).startswith("error code=4 kind=TransportError")

        result = jointseg(root, "segment", str(container), "-o", mask_path)
        assert result.exit_code == 2
        assert "kind=UsageError" in error_line(result)
        assert not (root / "m.png").exists()


def test_bad_config_exits_with_config_code() -> None:
    """Integration: an unknown config key is a configuration error (exit 2)."""
    with tempfile.TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        (root / "tiny.cfg").write_text("model.bogus = 1\n")

        result = jointseg(root, "bench")

        assert result.exit_code == 2
        assert "kind=ConfigError" in error_line(result)
        assert "line 1" in error_line(result)


def test_fuse_command() -> None:
    """Integration: fuse writes a smaller fused checkpoint."""
    with tempfile.TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        data = prepare(root)
        run = train_run(root, data, "--no-eval")
        fused_path = root / "fused.jsdw"

        result = jointseg(root, "fuse", str(run / "model.jsdw"), str(fused_path))
        assert result.exit_code == 0, result.output

        original, _ = load_model(run / "model.jsdw")
        fused, _ = load_model(fused_path)
        assert fused.fused and not original.fused
        assert fused.decoder.count_params() < original.decoder.count_params()


def test_bench_csv() -> None:
    """Integration: bench prints the table and writes the CSV rows."""
    with tempfile.TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        (root / "tiny.cfg").write_text(TINY_CONFIG)
        csv_path = root / "bench.csv"

        result = jointseg(root, "bench", "--height", "64", "--width", "64", "--csv", str(csv_path))

        assert result.exit_code == 0, result.output
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "network,params,flops,macs,height,width"
        names = [line.split(",")[0] for line in lines[1:]]
        assert names == ["E", "SE", "HD", "JD", "entropy", "edge", "cloud", "total"]


def test_sweep_then_plot() -> None:
    """Integration: a two-point α sweep feeds the RD and complexity plots."""
    with tempfile.TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)
        data = prepare(root)
        sweep_dir = root / "sweep"

        result = jointseg(
            root, "sweep", "--alphas", "0.5,0.9", "--data", str(data), "--out", str(sweep_dir)
        )
        assert result.exit_code == 0, result.output
        rows = read_csv(sweep_dir / "sweep.csv")
        assert sorted(row.alpha for row in rows) == [0.5, 0.9]
        assert all(row.bpp_actual > 0 for row in rows)

        rd_plot = root / "rd.svg"
        complexity_plot = root / "complexity.svg"
        result = jointseg(
            root,
            "plot",
            str(sweep_dir / "sweep.csv"),
            "-o",
            str(rd_plot),
            "--complexity",
            str(complexity_plot),
        )
        assert result.exit_code == 0, result.output
        assert rd_plot.read_text().lstrip().startswith("<?xml")
        assert complexity_plot.exists()


def run_cli_tests() -> None:
    """Run all command-line integration tests."""
    tests = [
        ("gen-data layout", test_gen_data_layout),
        ("train run directory", test_train_writes_run_directory),
        ("encode then segment", test_encode_then_segment),
        ("Error line and exit code", test_segment_errors_report_code_and_kind),
        ("Bad config", test_bad_config_exits_with_config_code),
        ("fuse", test_fuse_command),
        ("bench CSV", test_bench_csv),
        ("sweep then plot", test_sweep_then_plot),
    ]

    print("Running CLI Integration Tests...")
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
    print(f"CLI Integration Tests: {passed} passed, {failed} failed")

    if failed > 0:
        raise SystemExit(1)


if __name__ == "__main__":
    run_cli_tests()
