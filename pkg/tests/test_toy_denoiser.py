import sys
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from constants import ALL_BLOCKS, BlockId, HookMode
from exceptions import ConfigError, DomainError, ExperimentIOError, ShapeMismatchError
from freq_catalyst import AmplificationProfile, AmplificationSpec, FreeUSpec
from toy_denoiser import (
    ConditioningSpec,
    HookSet,
    Image,
    ModelConfig,
    SamplerConfig,
    build_model,
    ddim_timesteps,
    decode,
    decode_linear,
    embed_conditioning,
    export_weights,
    forward,
    guided_eps,
    import_weights,
    initial_latent,
    negative_conditioning,
    parameter_shapes,
    sample,
)

SMALL = ModelConfig(latent_size=16, widths=(8, 8, 16, 16), cond_dim=16, time_dim=16)
COND = ConditioningSpec(concept="chair")


@pytest.fixture(scope="module")
def model():
    return build_model(SMALL)


def c3_hooks(blocks, lam=1.8, rho=0.25, **kwargs):
    profile = AmplificationProfile(blocks={b: AmplificationSpec(lam=lam, rho=rho) for b in blocks})
    return HookSet(mode=HookMode.C3, c3_profile=profile, **kwargs)


def test_build_is_deterministic(model):
    again = build_model(SMALL)
    assert model.params.keys() == again.params.keys()
    for name in model.params:
        assert np.array_equal(model[name], again[name])
    other = build_model(SMALL.model_copy(update={"weight_seed": 1}))
    assert not np.array_equal(model["down0.conv"], other["down0.conv"])


def test_parameter_shapes(model):
    for name, shape in parameter_shapes(SMALL).items():
        assert model[name].shape == shape
    assert model["up0.conv"].shape == (8, 32, 3, 3)
    assert model["decoder"].shape == (3, 4)


@pytest.mark.parametrize(
    "update",
    [{"latent_size": 8}, {"latent_size": 24}, {"time_dim": 15}, {"widths": (8, 0, 16, 16)}],
)
def test_model_config_validation(update):
    with pytest.raises(ValidationError):
        ModelConfig(**{**SMALL.model_dump(), **update})


def test_sampler_config_validation():
    with pytest.raises(ValidationError):
        SamplerConfig(steps=4, step_range=(2, 4))
    with pytest.raises(ValidationError):
        SamplerConfig(cfg_scale=-1.0)
    with pytest.raises(ValidationError):
        ConditioningSpec(concept="  ")


def test_weight_export_import(tmp_path, model):
    export_weights(model, tmp_path / "w")
    loaded = import_weights(tmp_path / "w", SMALL)
    for name in model.params:
        assert np.array_equal(loaded[name], model[name])


def test_weight_import_shape_mismatch(tmp_path, model):
    export_weights(model, tmp_path / "w")
    wider = SMALL.model_copy(update={"widths": (16, 8, 16, 16)})
    with pytest.raises(ShapeMismatchError):
        import_weights(tmp_path / "w", wider)
    with pytest.raises(ExperimentIOError):
        import_weights(tmp_path / "missing", SMALL)


@pytest.mark.parametrize("steps, expected", [(1, [999]), (4, [999, 749, 499, 249])])
def test_ddim_timesteps(steps, expected):
    assert ddim_timesteps(steps) == expected


def test_conditioning_vectors():
    plain = embed_conditioning(COND, 16, 0)
    creative = embed_conditioning(ConditioningSpec(concept="chair", modifier="creative"), 16, 0)
    assert np.linalg.norm(plain) == pytest.approx(1.0)
    assert np.linalg.norm(creative) == pytest.approx(1.0)
    assert not np.allclose(plain, creative)
    assert np.array_equal(plain, embed_conditioning(COND, 16, 0))
    assert not negative_conditioning(COND, 16, 0).any()
    negative = negative_conditioning(ConditioningSpec(concept="chair", negative_concept="normal chair"), 16, 0)
    assert np.array_equal(negative, embed_conditioning(ConditioningSpec(concept="normal chair"), 16, 0))


def test_modifier_moves_but_keeps_the_concept():
    plain = embed_conditioning(COND, 64, 0)
    creative = embed_conditioning(ConditioningSpec(concept="chair", modifier="creative"), 64, 0)
    assert 0.3 < float(plain @ creative) < 0.99


def test_guided_eps_degenerate_scales():
    cond = np.random.default_rng(0).standard_normal((2, 2))
    neg = np.random.default_rng(1).standard_normal((2, 2))
    assert guided_eps(cond, neg, 0.0) is neg
    assert guided_eps(cond, neg, 1.0) is cond
    assert np.allclose(guided_eps(cond, neg, 3.0), neg + 3.0 * (cond - neg))


def test_sample_is_deterministic(model):
    image_a, latent_a = sample(model, SamplerConfig(steps=2), COND, 3, HookSet())
    image_b, latent_b = sample(model, SamplerConfig(steps=2), COND, 3, HookSet())
    assert np.array_equal(image_a.data, image_b.data)
    assert np.array_equal(latent_a, latent_b)
    image_c, _ = sample(model, SamplerConfig(steps=2), COND, 4, HookSet())
    assert not np.array_equal(image_a.data, image_c.data)
    assert image_a.data.shape == (3, 16, 16)
    assert image_a.data.min() >= 0.0 and image_a.data.max() <= 1.0


def test_identity_hooks_reproduce_plain_image(model):
    plain, _ = sample(model, SamplerConfig(steps=2), COND, 0, HookSet())
    hooked, _ = sample(model, SamplerConfig(steps=2), COND, 0, c3_hooks(ALL_BLOCKS, lam=1.0))
    assert np.max(np.abs(plain.data - hooked.data)) < 1e-4
    freeu, _ = sample(model, SamplerConfig(steps=2), COND, 0, HookSet(mode=HookMode.FREEU, freeu_spec=FreeUSpec()))
    assert np.max(np.abs(plain.data - freeu.data)) < 1e-4


def test_amplification_changes_image(model):
    plain, _ = sample(model, SamplerConfig(steps=2), COND, 0, HookSet())
    hooked, _ = sample(model, SamplerConfig(steps=2), COND, 0, c3_hooks([BlockId.DOWN0], lam=3.0))
    assert not np.array_equal(plain.data, hooked.data)


def test_hook_locality(model):
    latent = initial_latent(SMALL, 0)
    cond_vec = embed_conditioning(COND, SMALL.cond_dim, SMALL.weight_seed)
    _, plain = forward(model, latent, 0, cond_vec, HookSet(), capture=True)
    _, hooked = forward(model, latent, 0, cond_vec, c3_hooks([BlockId.UP1], lam=2.5), capture=True)
    for block in (BlockId.DOWN0, BlockId.DOWN1, BlockId.DOWN2, BlockId.MID, BlockId.UP0):
        assert np.max(np.abs(plain[block].data - hooked[block].data)) < 1e-4
    assert not np.allclose(plain[BlockId.UP1].data, hooked[BlockId.UP1].data)


def test_captured_shapes(model):
    latent = initial_latent(SMALL, 0)
    cond_vec = embed_conditioning(COND, SMALL.cond_dim, SMALL.weight_seed)
    eps, captured = forward(model, latent, 0, cond_vec, HookSet(), capture=True)
    assert eps.shape == SMALL.latent_shape
    assert captured[BlockId.DOWN2].shape == (16, 2, 2)
    assert captured[BlockId.UP2].shape == (8, 16, 16)


def test_step_range_excludes_other_steps(model):
    latent = initial_latent(SMALL, 1)
    cond_vec = embed_conditioning(COND, SMALL.cond_dim, SMALL.weight_seed)
    hooks = c3_hooks([BlockId.DOWN0, BlockId.MID], lam=3.0, step_range=(1, 3))
    plain, _ = forward(model, latent, 0, cond_vec, HookSet(), steps=4)
    outside, _ = forward(model, latent, 0, cond_vec, hooks, steps=4)
    inside, _ = forward(model, latent, 1, cond_vec, hooks, steps=4)
    assert np.array_equal(plain, outside)
    assert not np.array_equal(forward(model, latent, 1, cond_vec, HookSet(), steps=4)[0], inside)


def test_skip_reads_unamplified_output_when_configured(model):
    with_skip, _ = sample(model, SamplerConfig(steps=1), COND, 0, c3_hooks([BlockId.DOWN0], lam=3.0))
    without_skip, _ = sample(
        model, SamplerConfig(steps=1), COND, 0, c3_hooks([BlockId.DOWN0], lam=3.0, amplify_skips=False)
    )
    assert not np.array_equal(with_skip.data, without_skip.data)


def test_cfg_scale_one_matches_no_guidance(model):
    negative = ConditioningSpec(concept="chair", negative_concept="normal chair")
    off, _ = sample(model, SamplerConfig(steps=2, cfg_scale=0.0), negative, 2, HookSet())
    one, _ = sample(model, SamplerConfig(steps=2, cfg_scale=1.0), negative, 2, HookSet())
    high, _ = sample(model, SamplerConfig(steps=2, cfg_scale=7.5), negative, 2, HookSet())
    assert np.array_equal(off.data, one.data)
    assert not np.array_equal(off.data, high.data)


def test_bad_hook_step_range_is_config_error(model):
    with pytest.raises(ConfigError):
        sample(model, SamplerConfig(steps=2), COND, 0, c3_hooks([BlockId.DOWN0], step_range=(0, 5)))


def test_forward_rejects_wrong_latent(model):
    cond_vec = embed_conditioning(COND, SMALL.cond_dim, SMALL.weight_seed)
    with pytest.raises(ShapeMismatchError):
        forward(model, np.zeros((4, 8, 8)), 0, cond_vec, HookSet())


@pytest.mark.parametrize("data", [np.full((3, 4, 4), 1.5), np.zeros((4, 4, 4)), np.zeros((3, 4))])
def test_image_validation(data):
    with pytest.raises(ValidationError):
        Image(data=data)


@pytest.mark.parametrize("step_index, steps", [(1, 1), (4, 4), (-1, 4)])
def test_forward_rejects_step_outside_schedule(model, step_index, steps):
    latent = initial_latent(SMALL, 0)
    cond_vec = embed_conditioning(COND, SMALL.cond_dim, SMALL.weight_seed)
    with pytest.raises(DomainError):
        forward(model, latent, step_index, cond_vec, HookSet(), steps=steps)


def test_small_latent_message_names_the_mid_resolution():
    with pytest.raises(ValidationError, match="Mid at least 2x2"):
        ModelConfig(latent_size=8)


def test_default_model_block_shapes():
    cfg = ModelConfig()
    model = build_model(cfg)
    cond_vec = embed_conditioning(COND, cfg.cond_dim, cfg.weight_seed)
    _, captured = forward(model, initial_latent(cfg, 0), 0, cond_vec, HookSet(), capture=True)
    assert captured[BlockId.DOWN0].shape == (32, 16, 16)
    assert captured[BlockId.DOWN1].shape == (64, 8, 8)
    assert captured[BlockId.DOWN2].shape == (128, 4, 4)
    assert captured[BlockId.MID].shape == (128, 4, 4)


def test_all_pass_hook_doubles_first_block_output(model):
    latent = initial_latent(SMALL, 2)
    cond_vec = embed_conditioning(COND, SMALL.cond_dim, SMALL.weight_seed)
    _, plain = forward(model, latent, 0, cond_vec, HookSet(), capture=True)
    _, hooked = forward(model, latent, 0, cond_vec, c3_hooks([BlockId.DOWN0], lam=2.0, rho=1.0), capture=True)
    assert np.max(np.abs(hooked[BlockId.DOWN0].data - 2.0 * plain[BlockId.DOWN0].data)) < 1e-4


def test_zero_latent_decodes_to_flat_midpoint(model):
    image = decode(model, np.zeros(SMALL.latent_shape))
    assert np.all(image.data == np.float32(SMALL.decoder_offset))


def test_decoder_is_affine_before_clamp(model):
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=SMALL.latent_shape), rng.normal(size=SMALL.latent_shape)
    offset = SMALL.decoder_offset
    mixed = decode_linear(model, 2.0 * a - 0.5 * b) - offset
    parts = 2.0 * (decode_linear(model, a) - offset) - 0.5 * (decode_linear(model, b) - offset)
    assert np.allclose(mixed, parts, atol=1e-9)
