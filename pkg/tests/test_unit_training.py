#!/usr/bin/env python3
"""Unit tests for training - losses, optimizer, schedule, data and sweep tables."""

import math
import tempfile
from pathlib import Path

import numpy as np
import pytest

from jointseg.config import ModelConfig, RunConfig
from jointseg.errors import ConfigError, DataError, ValidationError
from jointseg.networks.model import build_model
from jointseg.tensor.autograd import Tensor
from jointseg.tensor.nn import Parameter
from jointseg.training.data import (
    FolderDataset,
    SyntheticDataset,
    batch_indices,
    iterate_batches,
    write_dataset,
)
from jointseg.training.losses import cross_entropy, one_hot, rd_objective
from jointseg.training.optim import Adam, clip_grad_norm, global_grad_norm, poly_lr
from jointseg.training.sweep import (
    SweepGrid,
    SweepRow,
    pareto_front,
    rd_correlation,
    read_csv,
    write_csv,
)
from jointseg.training.trainer import LossReport, partition_parameters


def row(alpha: float, bpp: float, miou: float, k: int = 1) -> SweepRow:
    return SweepRow(
        alpha=alpha,
        repetitions=k,
        feature_maps=64,
        dilations=(5, 10, 15),
        bpp_actual=bpp,
        bpp_estimate=bpp * 1.1,
        miou=miou,
        params=1000,
        flops=2_000_000,
    )


# === Losses ===


def test_one_hot_with_ignore_label() -> None:
    """Unit: label s sets channel s−1; label 0 gives an all-zero row."""
    labels = np.array([[[0, 1], [2, 3]]])

    encoded = one_hot(labels, 3)

    assert encoded.shape == (1, 3, 2, 2)
    np.testing.assert_array_equal(encoded[0, :, 0, 0], [0, 0, 0])
    np.testing.assert_array_equal(encoded[0, :, 1, 1], [0, 0, 1])
    assert encoded.sum() == 3
    with pytest.raises(ValidationError):
        one_hot(np.array([[4]]), 3)


def test_cross_entropy_uniform_logits() -> None:
    """Unit: uniform logits cost ln S per labelled pixel; ignored pixels do not count."""
    logits = Tensor(np.zeros((1, 3, 2, 2)))
    labelled = one_hot(np.array([[[1, 2], [3, 1]]]), 3)
    partly = one_hot(np.array([[[1, 0], [0, 0]]]), 3)
    nothing = one_hot(np.zeros((1, 2, 2), dtype=np.int64), 3)

    assert cross_entropy(logits, labelled).item() == pytest.approx(math.log(3), rel=1e-6)
    assert cross_entropy(logits, partly).item() == pytest.approx(math.log(3), rel=1e-6)
    assert cross_entropy(logits, nothing).item() == 0.0


def test_cross_entropy_validation() -> None:
    """Unit: targets must match the logits and be one-hot per pixel."""
    logits = Tensor(np.zeros((1, 3, 2, 2)))
    with pytest.raises(ValidationError):
        cross_entropy(logits, np.zeros((1, 3, 2, 3)))
    soft = np.full((1, 3, 2, 2), 1 / 3)
    with pytest.raises(ValidationError):
        cross_entropy(logits, soft)


def test_cross_entropy_gradient_is_softmax_minus_target() -> None:
    """Unit: d/dlogits = (softmax − target) / |I| on labelled pixels."""
    logits = Tensor(np.array([1.0, 2.0, 0.5]).reshape(1, 3, 1, 1), requires_grad=True)
    target = one_hot(np.array([[[2]]]), 3)

    cross_entropy(logits, target).backward()

    e = np.exp([1.0, 2.0, 0.5])
    expected = e / e.sum() - np.array([0.0, 1.0, 0.0])
    np.testing.assert_allclose(logits.grad.reshape(-1), expected, rtol=1e-5)


def test_rd_objective() -> None:
    """Unit: J = α·J_dist + (1−α)·J_rate, α strictly inside (0, 1)."""
    assert rd_objective(2.0, 4.0, 0.25) == pytest.approx(3.5)
    with pytest.raises(ConfigError):
        rd_objective(2.0, 4.0, 0.0)
    with pytest.raises(ConfigError):
        rd_objective(2.0, 4.0, 1.0)


# === Optimisation ===


def test_poly_lr_schedule() -> None:
    """Unit: η0·(1 − τ/τ_max)^0.9, zero at and past the end."""
    assert poly_lr(0, 0.01, 100) == pytest.approx(0.01)
    assert poly_lr(50, 0.01, 100) == pytest.approx(0.01 * 0.5**0.9)
    assert poly_lr(100, 0.01, 100) == 0.0
    assert poly_lr(150, 0.01, 100) == 0.0


def test_clip_grad_norm() -> None:
    """Unit: a global norm of 10 is scaled to the clip norm; small norms are untouched."""
    a = Parameter(np.zeros(2))
    b = Parameter(np.zeros(1))
    a.grad = np.array([6.0, 0.0], dtype=np.float32)
    b.grad = np.array([8.0], dtype=np.float32)

    assert clip_grad_norm([a, b], 1.0) == pytest.approx(10.0)
    assert global_grad_norm([a, b]) == pytest.approx(1.0, rel=1e-6)
    np.testing.assert_allclose(a.grad, [0.6, 0.0], rtol=1e-6)

    assert clip_grad_norm([a, b], 5.0) == pytest.approx(1.0, rel=1e-6)
    np.testing.assert_allclose(b.grad, [0.8], rtol=1e-6)


def test_adam_minimises_quadratic() -> None:
    """Unit: Adam drives (w − 3)² to its minimum."""
    w = Parameter(np.zeros(1))
    optimizer = Adam([w], lr=0.1)

    for _ in range(300):
        optimizer.zero_grad()
        ((w - 3.0) * (w - 3.0)).sum().backward()
        assert optimizer.step()

    assert abs(float(w.data[0]) - 3.0) < 0.1


def test_adam_rejects_non_finite_gradients() -> None:
    """Unit: a NaN gradient skips the whole update and is counted."""
    w = Parameter(np.ones(2))
    optimizer = Adam([w], lr=0.1)
    w.grad = np.array([np.nan, 1.0], dtype=np.float32)

    assert not optimizer.step()
    assert optimizer.rejected_steps == 1
    np.testing.assert_array_equal(w.data, [1.0, 1.0])


def test_partition_parameters() -> None:
    """Unit: the aux optimizer owns only the quantiles."""
    model = build_model(
        ModelConfig(
            num_classes=3,
            feature_maps=8,
            groups=2,
            latent_channels=8,
            encoder_stem=4,
            encoder_widths=(4, 8, 8),
            encoder_blocks=1,
        )
    )
    main, aux = partition_parameters(model)

    assert aux == [model.hyper_prior.quantiles]
    assert all(p is not model.hyper_prior.quantiles for p in main)
    assert len(main) + 1 == len(model.parameters())


def test_loss_report_line() -> None:
    """Unit: the metrics log line carries step and every loss term."""
    report = LossReport(
        step=3, j=1.5, j_dist=1.0, j_rate=2.0, alpha=0.5, lr=1e-3, grad_norm=0.4, aux_loss=7.0
    )
    line = report.log_line()

    assert line.startswith("step=3 ")
    for key in ("J=1.500000", "J_dist=1.000000", "J_rate=2.000000", "lr=0.001", "aux=7.0000"):
        assert key in line


# === Data ===


def test_synthetic_dataset_is_deterministic() -> None:
    """Unit: the same index renders the same sample; labels stay in 1..S."""
    dataset = SyntheticDataset(6, image_size=64, num_classes=4, seed=9)
    first, again = dataset[2], dataset[2]

    np.testing.assert_array_equal(first.image, again.image)
    np.testing.assert_array_equal(first.labels, again.labels)
    assert first.image.shape == (3, 64, 64) and first.image.dtype == np.float32
    assert 0.0 <= first.image.min() and first.image.max() <= 1.0
    for i in range(len(dataset)):
        labels = dataset[i].labels
        assert labels.min() >= 1 and labels.max() <= 4
    with pytest.raises(IndexError):
        dataset[6]


def test_synthetic_split_is_disjoint() -> None:
    """Unit: the held-out split continues the index sequence."""
    train = SyntheticDataset(3, image_size=64, num_classes=4, seed=9)
    held_out = train.split(2)

    assert len(held_out) == 2
    np.testing.assert_array_equal(held_out[0].image, SyntheticDataset(4, 64, 4, seed=9)[3].image)


def test_batch_indices_cover_each_epoch() -> None:
    """Unit: every epoch's batches are a permutation of the dataset."""
    plan = batch_indices(5, 5, 3, seed=0)
    for indices in plan:
        assert sorted(indices.tolist()) == [0, 1, 2, 3, 4]


def test_iterate_batches_shapes() -> None:
    """Unit: the producer thread yields exactly `steps` stacked batches."""
    dataset = SyntheticDataset(3, image_size=64, num_classes=3)
    batches = list(iterate_batches(dataset, batch_size=2, steps=4, seed=1))

    assert len(batches) == 4
    assert batches[0].images.shape == (2, 3, 64, 64)
    assert batches[0].labels.shape == (2, 64, 64)


def test_folder_dataset_round_trip() -> None:
    """Unit: written datasets read back with exact labels and 8-bit images."""
    source = SyntheticDataset(2, image_size=64, num_classes=4, seed=5)
    with tempfile.TemporaryDirectory() as tmpdir:
        write_dataset(source, tmpdir)
        loaded = FolderDataset(tmpdir)

        assert (len(loaded), loaded.num_classes, loaded.image_size) == (2, 4, 64)
        np.testing.assert_array_equal(loaded[1].labels, source[1].labels)
        assert np.max(np.abs(loaded[1].image - source[1].image)) <= 0.5 / 255 + 1e-6

        with pytest.raises(DataError):
            FolderDataset(Path(tmpdir) / "images")


# === Sweep tables ===


def test_pareto_front() -> None:
    """Unit: dominated rows drop out; the front is sorted by bpp."""
    rows = [
        row(0.5, 0.10, 0.40),
        row(0.6, 0.20, 0.35),
        row(0.7, 0.30, 0.55),
        row(0.8, 0.30, 0.50),
        row(0.9, 0.05, 0.20),
    ]

    front = pareto_front(rows)

    assert [(r.bpp_actual, r.miou) for r in front] == [(0.05, 0.20), (0.10, 0.40), (0.30, 0.55)]


def test_rd_correlation() -> None:
    """Unit: Spearman ρ between bpp and mIoU; NaN with fewer than three rows."""
    rising = [row(0.5, b, m) for b, m in ((0.1, 0.3), (0.2, 0.4), (0.3, 0.45), (0.4, 0.5))]

    assert rd_correlation(rising) == pytest.approx(1.0)
    assert rd_correlation(list(reversed(rising))) == pytest.approx(1.0)
    assert math.isnan(rd_correlation(rising[:2]))


def test_sweep_csv_round_trip() -> None:
    """Unit: write_csv and read_csv agree on every column."""
    rows = [row(0.5, 0.1234, 0.4, k=2), row(0.9, 0.5, 0.6)]
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "sweep.csv"
        text = write_csv(rows, path)

        assert text.splitlines()[0].startswith("alpha,repetitions,feature_maps,dilations")
        assert read_csv(path) == rows


def test_read_csv_errors() -> None:
    """Unit: missing files, columns or numbers are data errors."""
    with tempfile.TemporaryDirectory() as tmpdir:
        with pytest.raises(DataError):
            read_csv(Path(tmpdir) / "absent.csv")

        partial = Path(tmpdir) / "partial.csv"
        partial.write_text("alpha,miou\n0.5,0.4\n")
        with pytest.raises(DataError, match="missing columns"):
            read_csv(partial)

        broken = Path(tmpdir) / "broken.csv"
        broken.write_text(
            "alpha,repetitions,feature_maps,bpp_actual,miou\n0.5,1,64,abc,0.4\n"
        )
        with pytest.raises(DataError, match=":2:"):
            read_csv(broken)


def test_sweep_grid_points() -> None:
    """Unit: the grid is α × K × F × dilations with empty axes from the base config."""
    grid = SweepGrid(alphas=(0.5, 0.9), repetitions=(1, 2, 3))
    points = list(grid.points(RunConfig()))

    assert len(grid) == 6 == len(points)
    assert {(p.train.alpha, p.model.repetitions) for p in points} == {
        (a, k) for a in (0.5, 0.9) for k in (1, 2, 3)
    }
    assert all(p.model.feature_maps == RunConfig().model.feature_maps for p in points)


def run_training_tests() -> None:
    """Run all training unit tests."""
    tests = [
        ("one_hot", test_one_hot_with_ignore_label),
        ("Cross entropy uniform", test_cross_entropy_uniform_logits),
        ("Cross entropy validation", test_cross_entropy_validation),
        ("Cross entropy gradient", test_cross_entropy_gradient_is_softmax_minus_target),
        ("RD objective", test_rd_objective),
        ("Poly LR", test_poly_lr_schedule),
        ("Clip grad norm", test_clip_grad_norm),
        ("Adam quadratic", test_adam_minimises_quadratic),
        ("Adam non-finite", test_adam_rejects_non_finite_gradients),
        ("Partition parameters", test_partition_parameters),
        ("Loss report line", test_loss_report_line),
        ("Synthetic determinism", test_synthetic_dataset_is_deterministic),
        ("Synthetic split", test_synthetic_split_is_disjoint),
        ("Batch indices", test_batch_indices_cover_each_epoch),
        ("Iterate batches", test_iterate_batches_shapes),
        ("Folder dataset", test_folder_dataset_round_trip),
        ("Pareto front", test_pareto_front),
        ("RD correlation", test_rd_correlation),
        ("Sweep CSV", test_sweep_csv_round_trip),
        ("Sweep CSV errors", test_read_csv_errors),
        ("Sweep grid", test_sweep_grid_points),
    ]

    print("Running Training Unit Tests...")
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
    print(f"Training Unit Tests: {passed} passed, {failed} failed")

    if failed > 0:
        raise SystemExit(1)


if __name__ == "__main__":
    run_training_tests()
