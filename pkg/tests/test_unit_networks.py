#!/usr/bin/env python3
"""Unit tests for the networks - shapes, structural reparameterization and fusion."""

import numpy as np
import pytest

from jointseg.config import ModelConfig
from jointseg.errors import ConfigError, DimensionError, StateError
from jointseg.networks.joint_decoder import (
    POINTWISE,
    POOL,
    JointDecoder,
    dilated_name,
    predict_mask,
)
from jointseg.networks.model import build_model
from jointseg.networks.reparam import (
    FusedBlock,
    RepBlock,
    embed_center,
    fold_conv_bn,
    fuse,
    overparameterize,
)
from jointseg.networks.source_encoder import HyperDecoder
from jointseg.tensor import functional as F
from jointseg.tensor.autograd import Tensor, no_grad
from jointseg.tensor.nn import BatchNorm2d, Conv2d, Module

FUSION_ATOL = 1e-4


def tiny_config(**overrides: object) -> ModelConfig:
    """A model small enough to run in a unit test."""
    settings = dict(
        num_classes=3,
        feature_maps=8,
        groups=2,
        latent_channels=8,
        encoder_stem=4,
        encoder_widths=(4, 8, 8),
        encoder_blocks=1,
        overparameterize=False,
    )
    settings.update(overrides)
    return ModelConfig(**settings)  # type: ignore[arg-type]


def randomize_batchnorm(module: Module, rng: np.random.Generator) -> None:
    """Give every BN non-trivial affine parameters and running statistics."""
    for _, layer in module.named_modules():
        if isinstance(layer, BatchNorm2d):
            layer.weight.data = rng.uniform(0.5, 1.5, layer.channels).astype(np.float32)
            layer.bias.data = rng.normal(0.0, 0.5, layer.channels).astype(np.float32)
            layer.running_mean[...] = rng.normal(0.0, 0.5, layer.channels)
            layer.running_var[...] = rng.uniform(0.5, 2.0, layer.channels)


def decode(decoder: JointDecoder, r_hat: np.ndarray) -> np.ndarray:
    with no_grad():
        return decoder(Tensor(r_hat)).data


def test_model_forward_shapes() -> None:
    """Unit: logits at input size, r at stride 16 and h at stride 64."""
    config = tiny_config()
    model = build_model(config, seed=0)
    x = Tensor(np.random.default_rng(0).random((2, 3, 64, 128)).astype(np.float32))

    out = model.forward_train(x, np.random.default_rng(1))

    assert out.logits.shape == (2, config.num_classes, 64, 128)
    assert out.p_r.shape == (2, config.feature_maps, 4, 8)
    assert out.p_h.shape == (2, config.feature_maps, 1, 2)
    assert np.all(out.p_r.data > 0) and np.all(out.p_r.data <= 1)


def test_encoder_rejects_unpadded_input() -> None:
    """Unit: the encoder needs sizes divisible by its stride."""
    model = build_model(tiny_config())
    with pytest.raises(ConfigError):
        model.encoder(Tensor(np.zeros((1, 3, 40, 40), dtype=np.float32)))


def test_hyper_decoder_shape_check() -> None:
    """Unit: σ must match the latent it parameterizes."""
    decoder = HyperDecoder(tiny_config(), np.random.default_rng(0))
    h_hat = Tensor(np.zeros((1, 8, 1, 1), dtype=np.float32))

    assert decoder(h_hat, like=(1, 8, 4, 4)).shape == (1, 8, 4, 4)
    with pytest.raises(DimensionError):
        decoder(h_hat, like=(1, 8, 4, 6))


def test_fold_conv_bn_matches_eval_output() -> None:
    """Unit: conv→BN in eval mode equals the folded conv with bias."""
    rng = np.random.default_rng(3)
    conv = Conv2d(4, 4, 3, rng, dilation=2)
    bn = BatchNorm2d(4)
    randomize_batchnorm(bn, rng)
    bn.eval()
    x = Tensor(rng.normal(size=(1, 4, 7, 7)).astype(np.float32))

    weight, bias = fold_conv_bn(conv, bn)
    with no_grad():
        expected = bn(conv(x)).data
        folded = F.conv2d(x, Tensor(weight), Tensor(bias), dilation=2).data

    np.testing.assert_allclose(folded, expected, atol=1e-5)


def test_embed_center() -> None:
    """Unit: a 1×1 kernel lands on the centre tap of a zero 3×3 kernel."""
    kernel = np.arange(4, dtype=np.float64).reshape(2, 2, 1, 1) + 1
    embedded = embed_center(kernel, 3)

    assert embedded.shape == (2, 2, 3, 3)
    np.testing.assert_array_equal(embedded[:, :, 1, 1], kernel[:, :, 0, 0])
    assert embedded.sum() == kernel.sum()


def test_fusion_is_exact_for_every_k() -> None:
    """Unit: the fused decoder reproduces the K-branch decoder in eval mode."""
    config = tiny_config()
    r_hat = np.random.default_rng(42).normal(0.0, 2.0, (1, 8, 4, 4)).astype(np.float32)

    for k in range(1, 5):
        rng = np.random.default_rng(k)
        decoder = overparameterize(JointDecoder(config, rng), k, rng)
        randomize_batchnorm(decoder, rng)
        decoder.eval()

        fused = fuse(decoder)

        assert isinstance(getattr(fused.aspp, POOL).project, FusedBlock)
        subblocks = [getattr(fused.aspp, n) for n in fused.aspp.branch_names if n != POOL]
        assert all(isinstance(block, FusedBlock) for block in subblocks)
        reference = decode(decoder, r_hat)
        result = decode(fused, r_hat)
        scale = max(1.0, float(np.abs(reference).max()))
        assert np.max(np.abs(result - reference)) <= FUSION_ATOL * scale, f"K={k}"
        with no_grad():
            pool_reference = getattr(decoder.aspp, POOL)(Tensor(r_hat)).data
            pool_result = getattr(fused.aspp, POOL)(Tensor(r_hat)).data
        np.testing.assert_allclose(pool_result, pool_reference, atol=FUSION_ATOL * scale)


def test_fusion_without_overparameterization() -> None:
    """Unit: a plain decoder folds its ASPP batch norms just as exactly."""
    rng = np.random.default_rng(7)
    decoder = JointDecoder(tiny_config(), rng)
    randomize_batchnorm(decoder, rng)
    decoder.eval()
    r_hat = rng.normal(0.0, 2.0, (1, 8, 4, 4)).astype(np.float32)

    fused = fuse(decoder)

    reference = decode(decoder, r_hat)
    scale = max(1.0, float(np.abs(reference).max()))
    assert np.max(np.abs(decode(fused, r_hat) - reference)) <= FUSION_ATOL * scale
    assert isinstance(getattr(fused.aspp, POOL).project, FusedBlock)
    for block in (fused.project, fused.refine, fused.upsample, fused.classifier):
        assert isinstance(block[1], BatchNorm2d)


def test_fused_cost_is_independent_of_k() -> None:
    """Unit: deployed parameters and FLOPs do not depend on K; training parameters do."""
    config = tiny_config()
    shape = (config.feature_maps, 8, 8)
    fused_params = []
    fused_flops = []
    training_params = []
    for k in range(1, 5):
        rng = np.random.default_rng(k)
        decoder = overparameterize(JointDecoder(config, rng), k, rng)
        training_params.append(decoder.count_params())
        decoder.eval()
        fused = fuse(decoder)
        fused_params.append(fused.count_params())
        fused_flops.append(fused.profile(shape).flops)

    assert len(set(fused_params)) == 1
    assert len(set(fused_flops)) == 1
    assert training_params == sorted(training_params)
    assert training_params[0] < training_params[-1]


def test_overparameterize_builds_k_branches() -> None:
    """Unit: dilated subblocks gain a 1×1 branch; both pointwise subblocks get K branches."""
    rng = np.random.default_rng(0)
    decoder = overparameterize(JointDecoder(tiny_config(), rng), 3, rng)

    pointwise = getattr(decoder.aspp, POINTWISE)
    dilated = getattr(decoder.aspp, dilated_name(5))
    pool_project = getattr(decoder.aspp, POOL).project
    assert isinstance(pointwise, RepBlock) and len(pointwise.branches()) == 3
    assert isinstance(dilated, RepBlock) and len(dilated.branches()) == 4
    assert isinstance(pool_project, RepBlock) and len(pool_project.branches()) == 3
    assert pool_project.kernel_size == 1


def test_reparam_state_errors() -> None:
    """Unit: fusion needs eval mode and happens once; expansion happens once."""
    rng = np.random.default_rng(0)
    decoder = JointDecoder(tiny_config(), rng)

    with pytest.raises(ConfigError):
        overparameterize(JointDecoder(tiny_config(), rng), 0, rng)
    with pytest.raises(StateError):
        fuse(decoder)

    overparameterize(decoder, 2, rng)
    with pytest.raises(StateError):
        overparameterize(decoder, 2, rng)

    decoder.eval()
    fused = fuse(decoder)
    with pytest.raises(StateError):
        fuse(fused)
    with pytest.raises(StateError):
        overparameterize(fused, 2, rng)


def test_predict_mask_offsets_and_ties() -> None:
    """Unit: channel s is class s+1 and ties resolve to the lower class."""
    logits = np.zeros((1, 3, 1, 3), dtype=np.float32)
    logits[0, 2, 0, 0] = 1.0
    logits[0, 1, 0, 1] = 2.0
    logits[0, 2, 0, 1] = 2.0

    np.testing.assert_array_equal(predict_mask(logits), [[[3, 2, 1]]])


def test_inference_requires_eval_and_tables() -> None:
    """Unit: coding helpers refuse training mode and missing tables."""
    model = build_model(tiny_config())
    with pytest.raises(StateError):
        model.require_tables()
    model.eval()
    with pytest.raises(StateError):
        model.require_tables()
    model.update_tables()
    assert model.require_tables().latent


def run_networks_tests() -> None:
    """Run all network unit tests."""
    tests = [
        ("Model forward shapes", test_model_forward_shapes),
        ("Encoder rejects unpadded input", test_encoder_rejects_unpadded_input),
        ("Hyper decoder shape check", test_hyper_decoder_shape_check),
        ("Fold conv+BN", test_fold_conv_bn_matches_eval_output),
        ("Embed centre", test_embed_center),
        ("Fusion exact for K=1..4", test_fusion_is_exact_for_every_k),
        ("Fusion without expansion", test_fusion_without_overparameterization),
        ("Fused cost independent of K", test_fused_cost_is_independent_of_k),
        ("Over-parameterize branches", test_overparameterize_builds_k_branches),
        ("Reparam state errors", test_reparam_state_errors),
        ("predict_mask", test_predict_mask_offsets_and_ties),
        ("Inference preconditions", test_inference_requires_eval_and_tables),
    ]

    print("Running Networks Unit Tests...")
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
    print(f"Networks Unit Tests: {passed} passed, {failed} failed")

    if failed > 0:
        raise SystemExit(1)


if __name__ == "__main__":
    run_networks_tests()
