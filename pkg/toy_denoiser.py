"""
A deterministic, untrained block-structured denoiser with a DDIM sampler.

Three stride-2 down blocks, a middle block and three up blocks with skip
connections. Weights come from a seeded stream so two builds with the same
``weight_seed`` are bit-identical. C3 and FreeU transforms attach at the block
outputs through a ``HookSet``.
"""

import json
import logging
import math
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import expit

from constants import (
    BlockId,
    HookMode,
    LogMsg,
    NoiseSchedule,
    PathName,
    RngStreamId,
    FileExt,
)
from exceptions import ConfigError, DomainError, ExperimentIOError, ShapeMismatchError
from freq_catalyst import AmplificationProfile, FreeUSpec, amplify_low, freeu_transform
from log_utils import (
    ErrorPayload,
    ExperimentPayload,
    SamplingPayload,
    log_with_payload,
)
from tensor_core import (
    FeatureMap,
    RngStream,
    is_power_of_two,
    read_tensor_file,
    stable_hash64,
    write_tensor_file,
)

CONV_KERNEL = 3
MODIFIER_WEIGHT = 0.5
# three stride-2 blocks must leave Down2 at least 2x2
MIN_LATENT_SIZE = 16


class ModelConfig(BaseModel):
    """Architecture and weight seed of the toy denoiser."""

    model_config = ConfigDict(extra="forbid")

    latent_channels: int = Field(default=4)
    latent_size: int = Field(default=32)
    widths: tuple[int, int, int, int] = Field(default=(32, 64, 128, 128))
    cond_dim: int = Field(default=64)
    time_dim: int = Field(default=64)
    weight_seed: int = Field(default=20240607)
    net_gain: float = Field(default=1.0)
    decoder_scale: float = Field(default=0.3)
    decoder_offset: float = Field(default=0.5)

    @model_validator(mode="after")
    def validate_config(self) -> "ModelConfig":
        if not is_power_of_two(self.latent_size) or self.latent_size < MIN_LATENT_SIZE:
            raise ValueError(
                LogMsg.CONFIG_LATENT_TOO_SMALL.format(minimum=MIN_LATENT_SIZE, value=self.latent_size)
            )
        for name, value in (
            ("latent_channels", self.latent_channels),
            ("cond_dim", self.cond_dim),
            ("time_dim", self.time_dim),
            *((f"widths[{i}]", w) for i, w in enumerate(self.widths)),
        ):
            if value <= 0:
                raise ValueError(LogMsg.CONFIG_NON_POSITIVE.format(field=name, value=value))
        if self.time_dim % 2:
            raise ValueError(LogMsg.CONFIG_NOT_EVEN.format(field="time_dim", value=self.time_dim))
        return self

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        return (self.latent_channels, self.latent_size, self.latent_size)


class SamplerConfig(BaseModel):
    """DDIM (eta = 0) settings. ``step_range`` is inclusive over sampled step indices; None means all steps."""

    model_config = ConfigDict(extra="forbid")

    steps: int = Field(default=4)
    cfg_scale: float = Field(default=0.0)
    step_range: tuple[int, int] | None = None

    @model_validator(mode="after")
    def validate_config(self) -> "SamplerConfig":
        if not 1 <= self.steps <= NoiseSchedule.TRAIN_STEPS:
            raise ValueError(
                LogMsg.CONFIG_OUT_OF_RANGE.format(
                    field="steps", low=1, high=NoiseSchedule.TRAIN_STEPS, value=self.steps
                )
            )
        if not math.isfinite(self.cfg_scale) or self.cfg_scale < 0:
            raise ValueError(
                LogMsg.CONFIG_OUT_OF_RANGE.format(field="cfg_scale", low=0, high="inf", value=self.cfg_scale)
            )
        if self.step_range is not None:
            check_step_range(self.step_range, self.steps)
        return self


def check_step_range(step_range: tuple[int, int], steps: int) -> None:
    start, end = step_range
    if not (0 <= start <= end <= steps - 1):
        raise ValueError(LogMsg.CONFIG_BAD_STEP_RANGE.format(step_range=list(step_range), last=steps - 1))


class ConditioningSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    concept: str
    modifier: str | None = None
    negative_concept: str | None = None

    @field_validator("concept")
    @classmethod
    def _nonempty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError(LogMsg.CONFIG_EMPTY_CONCEPT)
        return value


class HookSet(BaseModel):
    """
    Where and how block outputs are transformed during sampling.

    ``amplify_skips`` decides whether the skip connection reads the amplified
    block output (True) or the output before amplification (False).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: HookMode = HookMode.NONE
    c3_profile: AmplificationProfile = Field(default_factory=AmplificationProfile)
    freeu_spec: FreeUSpec = Field(default_factory=FreeUSpec)
    step_range: tuple[int, int] | None = None
    amplify_skips: bool = True

    def is_active(self, step_index: int) -> bool:
        if self.mode == HookMode.NONE:
            return False
        if self.step_range is None:
            return True
        start, end = self.step_range
        return start <= step_index <= end


class Image(BaseModel):
    """An RGB image, channel-major, values in [0, 1]."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        array = np.array(value, dtype=np.float32, order="C", copy=True)
        if array.ndim != 3 or array.shape[0] != 3:
            raise ValueError(LogMsg.DIM_MISMATCH.format(left=array.shape, right="(3, H, W)"))
        if not np.all((array >= 0.0) & (array <= 1.0)):
            raise ValueError(LogMsg.CONFIG_OUT_OF_RANGE.format(field="pixel", low=0, high=1, value="outside"))
        array.setflags(write=False)
        return array

    @property
    def size(self) -> int:
        return int(self.data.shape[1])


class DenoiserModel:
    """Immutable weights of a built model, shareable across threads."""

    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray]) -> None:
        self.cfg = cfg
        self.params: dict[str, np.ndarray] = {}
        for name, value in params.items():
            array = np.array(value, dtype=np.float32, copy=True)
            array.setflags(write=False)
            self.params[name] = array

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]


def _block_plan(cfg: ModelConfig) -> list[tuple[BlockId, int, int, int]]:
    """(block, input channels, output channels, stride) in forward order."""
    w0, w1, w2, w3 = cfg.widths
    return [
        (BlockId.DOWN0, cfg.latent_channels, w0, 2),
        (BlockId.DOWN1, w0, w1, 2),
        (BlockId.DOWN2, w1, w2, 2),
        (BlockId.MID, w2, w3, 1),
        (BlockId.UP0, w3 + w2, w1, 1),
        (BlockId.UP1, w1 + w1, w0, 1),
        (BlockId.UP2, w0 + w0, w0, 1),
    ]


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for block, c_in, c_out, _ in _block_plan(cfg):
        key = block.lower()
        shapes[f"{key}.conv"] = (c_out, c_in, CONV_KERNEL, CONV_KERNEL)
        shapes[f"{key}.time"] = (c_out, cfg.time_dim)
        shapes[f"{key}.cond"] = (c_out, cfg.cond_dim)
    shapes["out.conv"] = (cfg.latent_channels, cfg.widths[0], 1, 1)
    shapes["decoder"] = (3, cfg.latent_channels)
    return shapes


def build_model(cfg: ModelConfig) -> DenoiserModel:
    """Fills every parameter from seeded streams; equal configs give bit-identical models."""
    weights = RngStream(cfg.weight_seed, RngStreamId.WEIGHTS)
    decoder = RngStream(cfg.weight_seed, RngStreamId.DECODER)
    params: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(cfg).items():
        if name == "decoder":
            params[name] = decoder.normal(shape, scale=1.0 / math.sqrt(cfg.latent_channels))
        elif name == "out.conv":
            params[name] = weights.normal(shape, scale=1.0 / math.sqrt(shape[1]))
        elif name.endswith(".conv"):
            fan_in = shape[1] * shape[2] * shape[3]
            params[name] = weights.normal(shape, scale=math.sqrt(2.0 / fan_in))
        elif name.endswith(".time"):
            params[name] = weights.normal(shape, scale=1.0 / math.sqrt(cfg.time_dim))
        else:
            params[name] = weights.normal(shape)
    log_with_payload(
        logging.DEBUG,
        LogMsg.MODEL_BUILT,
        seed=cfg.weight_seed,
        channels=cfg.latent_channels,
        size=cfg.latent_size,
    )
    return DenoiserModel(cfg, params)


def export_weights(model: DenoiserModel, directory: str | Path) -> Path:
    """Writes one tensor file per parameter plus a JSON manifest naming them."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries: dict[str, dict[str, object]] = {}
    for name, array in model.params.items():
        file_name = f"{name}{FileExt.TENSOR}"
        write_tensor_file(directory / file_name, array)
        entries[name] = {"file": file_name, "shape": list(array.shape)}
    manifest = {"model": model.cfg.model_dump(mode="json"), "tensors": entries}
    manifest_path = directory / PathName.WEIGHT_MANIFEST
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log_with_payload(
        logging.INFO,
        LogMsg.WEIGHTS_EXPORTED,
        payload=ExperimentPayload(file_path=str(directory), file_count=len(entries)),
        count=len(entries),
        path=directory,
    )
    return manifest_path


def import_weights(directory: str | Path, cfg: ModelConfig) -> DenoiserModel:
    """Loads externally supplied weights, checking every shape against ``cfg``."""
    directory = Path(directory)
    manifest_path = directory / PathName.WEIGHT_MANIFEST
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        message = LogMsg.EXPERIMENT_IO_FAIL.format(path=manifest_path, error=e)
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise ExperimentIOError(message) from e

    entries = manifest.get("tensors", {})
    params: dict[str, np.ndarray] = {}
    for name, expected in parameter_shapes(cfg).items():
        if name not in entries:
            message = LogMsg.WEIGHTS_SHAPE_MISMATCH.format(name=name, found=None, expected=expected)
            log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
            raise ShapeMismatchError(message)
        array = read_tensor_file(directory / entries[name]["file"])
        if tuple(array.shape) != expected:
            message = LogMsg.WEIGHTS_SHAPE_MISMATCH.format(
                name=name, found=tuple(array.shape), expected=expected
            )
            log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
            raise ShapeMismatchError(message)
        params[name] = array
    log_with_payload(
        logging.INFO,
        LogMsg.WEIGHTS_IMPORTED,
        payload=ExperimentPayload(file_path=str(directory), file_count=len(params)),
        count=len(params),
        path=directory,
    )
    return DenoiserModel(cfg, params)


def embed_conditioning(spec: ConditioningSpec, cond_dim: int, base_seed: int) -> np.ndarray:
    """Unit vector for a (concept, modifier) pair; each string seeds its own Gaussian draw."""
    vector = RngStream(base_seed, stable_hash64(f"concept:{spec.concept}")).normal(cond_dim)
    if spec.modifier:
        vector = vector + MODIFIER_WEIGHT * RngStream(
            base_seed, stable_hash64(f"modifier:{spec.modifier}")
        ).normal(cond_dim)
    return vector / np.linalg.norm(vector)


def negative_conditioning(spec: ConditioningSpec, cond_dim: int, base_seed: int) -> np.ndarray:
    """Guidance counterpart: the negative concept's embedding, or the empty (zero) vector."""
    if spec.negative_concept:
        return embed_conditioning(ConditioningSpec(concept=spec.negative_concept), cond_dim, base_seed)
    return np.zeros(cond_dim)


def alphas_cumprod() -> np.ndarray:
    betas = np.linspace(NoiseSchedule.BETA_START, NoiseSchedule.BETA_END, NoiseSchedule.TRAIN_STEPS)
    return np.cumprod(1.0 - betas)


def ddim_timesteps(steps: int) -> list[int]:
    """Trailing spacing: 1 step -> [999]; 4 steps -> [999, 749, 499, 249]."""
    total = NoiseSchedule.TRAIN_STEPS
    return [int(round(total - i * total / steps)) - 1 for i in range(steps)]


def timestep_embedding(timestep: int, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    angles = timestep * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])


def conv2d(x: np.ndarray, weight: np.ndarray, stride: int = 1) -> np.ndarray:
    """Zero-padded 'same' convolution of a (C, H, W) map with (O, C, k, k) kernels."""
    k = weight.shape[-1]
    pad = k // 2
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    return np.tensordot(weight, windows, axes=([1, 2, 3], [0, 3, 4]))


def silu(x: np.ndarray) -> np.ndarray:
    return x * expit(x)


def upsample2x(x: np.ndarray) -> np.ndarray:
    return x.repeat(2, axis=1).repeat(2, axis=2)


def _run_block(
    model: DenoiserModel,
    block: BlockId,
    x: np.ndarray,
    stride: int,
    t_emb: np.ndarray,
    cond_vec: np.ndarray,
) -> np.ndarray:
    key = block.lower()
    h = conv2d(x, model[f"{key}.conv"], stride)
    bias = model[f"{key}.time"] @ t_emb + model[f"{key}.cond"] @ cond_vec
    return silu(h + bias[:, None, None])


def forward(
    model: DenoiserModel,
    latent: np.ndarray,
    step_index: int,
    cond_vec: np.ndarray,
    hooks: HookSet,
    *,
    steps: int = 1,
    capture: bool = False,
) -> tuple[np.ndarray, dict[BlockId, FeatureMap] | None]:
    """
    One network evaluation at the ``step_index``-th of ``steps`` DDIM steps.

    Returns the noise prediction and, when ``capture`` is set, every block's
    output after hooks were applied.
    """
    cfg = model.cfg
    latent = np.asarray(latent, dtype=np.float64)
    if latent.shape != cfg.latent_shape:
        message = LogMsg.LATENT_SHAPE_MISMATCH.format(found=latent.shape, expected=cfg.latent_shape)
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise ShapeMismatchError(message)

    if not 0 <= step_index < steps:
        message = LogMsg.STEP_INDEX_OUT_OF_RANGE.format(step_index=step_index, steps=steps)
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise DomainError(message)
    timestep = ddim_timesteps(steps)[step_index]
    t_emb = timestep_embedding(timestep, cfg.time_dim)
    active = hooks.is_active(step_index)
    c3_blocks = hooks.c3_profile.blocks if active and hooks.mode == HookMode.C3 else {}
    freeu_on = active and hooks.mode == HookMode.FREEU
    captured: dict[BlockId, FeatureMap] = {}

    def finish(block: BlockId, out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        skip = out
        if block in c3_blocks:
            out = amplify_low(FeatureMap(data=out), c3_blocks[block]).data.astype(np.float64)
            if hooks.amplify_skips:
                skip = out
        if capture:
            captured[block] = FeatureMap(data=out)
        return out, skip

    plan = _block_plan(cfg)
    h = latent
    skips: list[np.ndarray] = []
    for block, _, _, stride in plan[:4]:
        h, skip = finish(block, _run_block(model, block, h, stride, t_emb, cond_vec))
        if block != BlockId.MID:
            skips.append(skip)

    for block, _, _, _ in plan[4:]:
        skip = skips.pop()
        if freeu_on:
            backbone_map, skip_map = freeu_transform(
                FeatureMap(data=h), FeatureMap(data=skip), hooks.freeu_spec
            )
            h, skip = backbone_map.data.astype(np.float64), skip_map.data.astype(np.float64)
        merged = np.concatenate([h, skip], axis=0)
        h, _ = finish(block, upsample2x(_run_block(model, block, merged, 1, t_emb, cond_vec)))

    net = conv2d(h, model["out.conv"])
    alpha_bar = alphas_cumprod()[timestep]
    eps = math.sqrt(1.0 - alpha_bar) * latent - math.sqrt(alpha_bar) * cfg.net_gain * net
    return eps, (captured if capture else None)


def guided_eps(eps_cond: np.ndarray, eps_neg: np.ndarray, g: float) -> np.ndarray:
    """eps_neg + g * (eps_cond - eps_neg); exact at g = 0 and g = 1."""
    if g == 0.0:
        return eps_neg
    if g == 1.0:
        return eps_cond
    return eps_neg + g * (eps_cond - eps_neg)


def initial_latent(cfg: ModelConfig, seed: int) -> np.ndarray:
    return RngStream(seed, RngStreamId.LATENT).normal(cfg.latent_shape)


def decode_linear(model: DenoiserModel, latent: np.ndarray) -> np.ndarray:
    """Decoder output before clamping."""
    cfg = model.cfg
    rgb = np.tensordot(model["decoder"], np.asarray(latent, dtype=np.float64), axes=([1], [0]))
    return cfg.decoder_scale * rgb + cfg.decoder_offset


def decode(model: DenoiserModel, latent: np.ndarray) -> Image:
    latent = np.asarray(latent)
    if latent.shape != model.cfg.latent_shape:
        message = LogMsg.LATENT_SHAPE_MISMATCH.format(found=latent.shape, expected=model.cfg.latent_shape)
        raise ShapeMismatchError(message)
    return Image(data=np.clip(decode_linear(model, latent), 0.0, 1.0))


def sample(
    model: DenoiserModel,
    sampler: SamplerConfig,
    cond: ConditioningSpec,
    seed: int,
    hooks: HookSet,
) -> tuple[Image, np.ndarray]:
    """
    Deterministic DDIM (eta = 0) generation.

    ``cfg_scale == 0`` disables guidance and uses the conditional prediction
    alone. Hooks without their own ``step_range`` inherit the sampler's.
    """
    cfg = model.cfg
    if hooks.step_range is None and sampler.step_range is not None:
        hooks = hooks.model_copy(update={"step_range": sampler.step_range})
    if hooks.step_range is not None:
        try:
            check_step_range(hooks.step_range, sampler.steps)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    cond_vec = embed_conditioning(cond, cfg.cond_dim, cfg.weight_seed)
    neg_vec = negative_conditioning(cond, cfg.cond_dim, cfg.weight_seed) if sampler.cfg_scale else None
    alpha_bars = alphas_cumprod()
    timesteps = ddim_timesteps(sampler.steps)

    x = initial_latent(cfg, seed)
    for i, t in enumerate(timesteps):
        eps, _ = forward(model, x, i, cond_vec, hooks, steps=sampler.steps)
        if neg_vec is not None:
            eps_neg, _ = forward(model, x, i, neg_vec, hooks, steps=sampler.steps)
            eps = guided_eps(eps, eps_neg, sampler.cfg_scale)
        a_t = alpha_bars[t]
        a_prev = alpha_bars[timesteps[i + 1]] if i + 1 < len(timesteps) else 1.0
        x0 = (x - math.sqrt(1.0 - a_t) * eps) / math.sqrt(a_t)
        x = math.sqrt(a_prev) * x0 + math.sqrt(1.0 - a_prev) * eps

    log_with_payload(
        logging.DEBUG,
        LogMsg.SAMPLE_DONE,
        payload=SamplingPayload(seed=seed, steps=sampler.steps, hook_mode=hooks.mode, concept=cond.concept),
        seed=seed,
        steps=sampler.steps,
        mode=hooks.mode,
    )
    return decode(model, x), x
