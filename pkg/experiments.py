"""
Experiment configuration and the runner behind every CLI subcommand.

Each subcommand writes into ``<out_dir>/<subcommand>/`` and finishes with a
``manifest.json`` listing what it emitted. Work is fanned out per seed on a
thread pool; results are gathered and written in seed order so the output does
not depend on ``jobs``.
"""

import json
import logging
import math
import re
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from tqdm import tqdm

from cache_manager import CacheManager
from config import CONFIG
from constants import (
    ALL_BLOCKS,
    C3_TARGET_BLOCKS,
    PRESET_STEPS,
    PRESET_TARGET_SUM,
    BlockId,
    CfgSetting,
    FormatStrings,
    HookMode,
    LogMsg,
    MiscValues,
    Modifier,
    PathName,
    Preset,
    ReportColumns,
    ScorerSource,
    Subcommand,
    SweepParam,
    Variant,
)
from creativity_metrics import (
    Embedder,
    MetricsConfig,
    build_report,
    embed_image,
    embed_images,
    frechet_features,
    knn_precision_recall,
    pairwise_diversity,
    split_half_frechet,
)
from exceptions import ConfigError, SelectionMissingError
from factor_selection import (
    BlockSelection,
    CombinationConfig,
    ScorerConfig,
    SearchConfig,
    UsabilityContext,
    combine,
    make_scorer_bundle,
    scan_grid,
    select_lambda,
)
from freq_catalyst import (
    DEFAULT_CUTOFF,
    FREEU_B_GRID,
    FREEU_S_GRID,
    AmplificationProfile,
    AmplificationSpec,
    FreeUSpec,
    high_band_energy,
)
from log_utils import ErrorPayload, ExperimentPayload, log_with_payload
from report_utils import (
    RunManifest,
    config_hash,
    read_json,
    write_csv,
    write_json,
    write_ppm,
    write_svg_plot,
)
from tensor_core import FeatureMap, write_tensor_file
from toy_denoiser import (
    ConditioningSpec,
    HookSet,
    Image,
    ModelConfig,
    SamplerConfig,
    build_model,
    check_step_range,
    import_weights,
    sample,
)

T = TypeVar("T")
R = TypeVar("R")


# ─── Configuration ──────────────────────────────────────────────────────────────


class AblationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    blocks: list[BlockId] = Field(default_factory=lambda: list(ALL_BLOCKS))
    lambdas: list[float] = Field(default_factory=lambda: [1.0, 1.25, 1.5, 2.0])
    rho: float = DEFAULT_CUTOFF


class FrequencyAblationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    block: BlockId = BlockId.DOWN0
    lam: float = 2.0
    rho_low: float = DEFAULT_CUTOFF


class SweepConfig(BaseModel):
    """One hyperparameter swept around a single-block profile (``block``, ``lam``)."""

    model_config = ConfigDict(extra="forbid")

    param: SweepParam = SweepParam.CUTOFF
    values: list[Any] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0])
    block: BlockId = BlockId.DOWN0
    lam: float = 2.0


class FreeUCompareConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    b_grid: list[float] = Field(default_factory=lambda: list(FREEU_B_GRID))
    s_grid: list[float] = Field(default_factory=lambda: list(FREEU_S_GRID))
    rho_skip: float = DEFAULT_CUTOFF


class CfgCompareConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    base_scale: float = 5.0
    high_scale: float = 30.0
    negative_template: str = MiscValues.NEGATIVE_TEMPLATE


class ModifierAblationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    modifier: str = Modifier.CREATIVE


class ExperimentConfig(BaseModel):
    """Everything a subcommand needs; canonical JSON of this model is what gets hashed."""

    model_config = ConfigDict(extra="forbid")

    model: ModelConfig = Field(default_factory=ModelConfig)
    weights_dir: Path | None = None
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    concepts: list[str] = Field(default_factory=lambda: ["chair", "car"])
    modifier: str | None = None
    ref_concepts: dict[str, str] = Field(default_factory=dict)
    seeds: int = Field(default=8)
    hooks: HookSet = Field(default_factory=lambda: HookSet(mode=HookMode.C3))
    search: SearchConfig = Field(default_factory=SearchConfig)
    combination: CombinationConfig = Field(default_factory=CombinationConfig)
    scorer: ScorerConfig = Field(default_factory=ScorerConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    ablation: AblationConfig = Field(default_factory=AblationConfig)
    frequency: FrequencyAblationConfig = Field(default_factory=FrequencyAblationConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    freeu: FreeUCompareConfig = Field(default_factory=FreeUCompareConfig)
    cfg_compare: CfgCompareConfig = Field(default_factory=CfgCompareConfig)
    modifier_ablation: ModifierAblationConfig = Field(default_factory=ModifierAblationConfig)
    hbe_rho: float = DEFAULT_CUTOFF
    out_dir: Path = Field(default_factory=lambda: CONFIG.out_dir)

    @model_validator(mode="after")
    def validate_config(self) -> "ExperimentConfig":
        if self.seeds < 1:
            raise ValueError(LogMsg.CONFIG_NON_POSITIVE.format(field="seeds", value=self.seeds))
        if not self.concepts or any(not c.strip() for c in self.concepts):
            raise ValueError(LogMsg.CONFIG_EMPTY_CONCEPT)
        if self.hooks.step_range is not None:
            check_step_range(self.hooks.step_range, self.sampler.steps)
        if not 0.0 <= self.hbe_rho <= 1.0:
            raise ValueError(LogMsg.CUTOFF_OUT_OF_RANGE.format(rho=self.hbe_rho))
        return self


def parse_override(item: str) -> tuple[list[str], Any]:
    """``a.b.c=value``; the value is read as JSON when it parses, else kept as a string."""
    if "=" not in item:
        raise ConfigError(LogMsg.CONFIG_BAD_OVERRIDE.format(item=item))
    key, raw = item.split("=", 1)
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ConfigError(LogMsg.CONFIG_BAD_OVERRIDE.format(item=item))
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_override(data: dict[str, Any], path: list[str], value: Any) -> None:
    node = data
    for part in path[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[path[-1]] = value


def apply_preset(data: dict[str, Any], preset: Preset | str) -> None:
    try:
        preset = Preset(preset)
    except ValueError as e:
        raise ConfigError(LogMsg.CONFIG_UNKNOWN_PRESET.format(preset=preset)) from e
    apply_override(data, ["sampler", "steps"], PRESET_STEPS[preset])
    apply_override(data, ["combination", "target_sum"], PRESET_TARGET_SUM[preset])


def load_experiment_config(
    path: Path | None = None,
    overrides: Sequence[str] = (),
    preset: Preset | str | None = None,
) -> ExperimentConfig:
    """Reads a JSON config, then applies the preset, then every ``--set`` override in order."""
    data: dict[str, Any] = read_json(path) if path is not None else {}
    if not isinstance(data, dict):
        raise ConfigError(LogMsg.CONFIG_INVALID.format(error="top level must be a JSON object"))
    if preset is not None:
        apply_preset(data, preset)
    for item in overrides:
        key_path, value = parse_override(item)
        log_with_payload(logging.DEBUG, LogMsg.CONFIG_OVERRIDE, key=".".join(key_path), value=value)
        apply_override(data, key_path, value)
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        message = LogMsg.CONFIG_INVALID.format(error=e)
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise ConfigError(message) from e
    log_with_payload(
        logging.INFO,
        LogMsg.CONFIG_LOADED,
        payload=ExperimentPayload(file_path=str(path) if path else None, config_hash=config_hash(config)),
        path=path,
        config_hash=config_hash(config)[:12],
    )
    return config


def slugify(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_") or "x"


def round_sig(value: float | None) -> float | None:
    """6 significant digits, the precision every report is written with."""
    return None if value is None else float(f"{value:.6g}")


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(1.0 - a @ b)


# ─── Runner ─────────────────────────────────────────────────────────────────────


class ExperimentRunner:
    """Holds the model, scorers and embedder shared by every subcommand of one invocation."""

    def __init__(
        self,
        config: ExperimentConfig,
        jobs: int = 1,
        svg: bool = False,
        profile_path: Path | None = None,
        dump_latents: bool = False,
        quiet: bool = True,
        endpoint_override: str | None = None,
    ) -> None:
        self.config = config
        self.jobs = max(1, jobs)
        self.svg = svg
        self.dump_latents = dump_latents
        self.quiet = quiet
        self.config_hash = config_hash(config)
        self.model = (
            import_weights(config.weights_dir, config.model)
            if config.weights_dir is not None
            else build_model(config.model)
        )
        self.embedder = Embedder(config.metrics.embed_seed)
        endpoint = endpoint_override or config.scorer.endpoint
        self.cache: CacheManager | None = None
        if config.scorer.source == ScorerSource.REMOTE and config.scorer.use_cache and endpoint:
            self.cache = CacheManager(CONFIG.cache_dir, endpoint)
        self.bundle = make_scorer_bundle(config.scorer, endpoint_override, self.cache)
        self.profile_override: AmplificationProfile | None = None
        if profile_path is not None:
            self.profile_override = self.load_profile(profile_path)

    def close(self) -> None:
        if self.cache is not None:
            self.cache.close()

    # ── plumbing ──

    def map(self, fn: Callable[[T], R], items: Iterable[T], desc: str | None = None) -> list[R]:
        """Order-preserving map, threaded when ``jobs > 1``."""
        items = list(items)
        if self.jobs == 1:
            return [fn(item) for item in tqdm(items, desc=desc, disable=self.quiet)]
        with ThreadPoolExecutor(max_workers=self.jobs) as executor:
            return list(tqdm(executor.map(fn, items), total=len(items), desc=desc, disable=self.quiet))

    def command_dir(self, command: Subcommand) -> Path:
        path = self.config.out_dir / command
        path.mkdir(parents=True, exist_ok=True)
        log_with_payload(
            logging.INFO,
            LogMsg.EXPERIMENT_START,
            payload=ExperimentPayload(command=command, config_hash=self.config_hash),
            command=command,
            out_dir=path,
        )
        return path

    def finish(self, command: Subcommand, out: Path, files: list[Path]) -> Path:
        manifest = RunManifest(
            command=command,
            config_hash=self.config_hash,
            files=[str(f.relative_to(out)) for f in files],
        )
        manifest_path = manifest.write(out / PathName.MANIFEST)
        log_with_payload(
            logging.INFO,
            LogMsg.EXPERIMENT_DONE,
            payload=ExperimentPayload(
                command=command, file_path=str(manifest_path), file_count=len(files)
            ),
            command=command,
            count=len(files),
            manifest=manifest_path,
        )
        return manifest_path

    def conditioning(
        self, concept: str, modifier: str | None = None, negative: str | None = None
    ) -> ConditioningSpec:
        return ConditioningSpec(concept=concept, modifier=modifier, negative_concept=negative)

    def render(
        self,
        cond: ConditioningSpec,
        seed: int,
        hooks: HookSet,
        sampler: SamplerConfig | None = None,
    ) -> tuple[Image, np.ndarray]:
        return sample(self.model, sampler or self.config.sampler, cond, seed, hooks)

    def no_hooks(self) -> HookSet:
        return HookSet()

    def profile_hooks(self, profile: AmplificationProfile) -> HookSet:
        base = self.config.hooks
        return HookSet(
            mode=HookMode.C3,
            c3_profile=profile,
            step_range=base.step_range,
            amplify_skips=base.amplify_skips,
        )

    def single_block_hooks(self, block: BlockId, lam: float, rho: float) -> HookSet:
        return self.profile_hooks(AmplificationProfile(blocks={block: AmplificationSpec(lam=lam, rho=rho)}))

    def configured_hooks(self) -> HookSet:
        if self.profile_override is not None:
            return self.profile_hooks(self.profile_override)
        return self.config.hooks

    def features(self, image: Image) -> np.ndarray:
        return embed_image(image, self.embedder)

    def distance(self, image: Image, baseline: Image) -> float:
        return cosine_distance(self.features(image), self.features(baseline))

    def hbe(self, image: Image) -> float:
        return high_band_energy(FeatureMap(data=image.data), self.config.hbe_rho)

    def usability(self, image: Image, cond: ConditioningSpec, baseline: Image) -> float:
        pair = self.bundle.score(image, UsabilityContext(conditioning=cond, baseline_image=baseline))
        return pair.aesthetic + pair.alignment

    def image_row(self, image: Image, cond: ConditioningSpec, baseline: Image) -> dict[str, float]:
        return {
            "usability": self.usability(image, cond, baseline),
            "distance": self.distance(image, baseline),
            "hbe": self.hbe(image),
        }

    def seeds(self) -> list[int]:
        return list(range(self.config.seeds))

    def image_name(self, concept: str, seed: int, variant: str) -> str:
        return FormatStrings.IMAGE_FILE.format(concept=slugify(concept), seed=seed, variant=variant)

    # ── profiles and selections ──

    @staticmethod
    def load_profile(path: Path) -> AmplificationProfile:
        if not Path(path).exists():
            message = LogMsg.PROFILE_MISSING.format(path=path)
            log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
            raise SelectionMissingError(message)
        try:
            return AmplificationProfile.model_validate(read_json(path))
        except ValidationError as e:
            raise ConfigError(LogMsg.CONFIG_INVALID.format(error=e)) from e

    def selections_dir(self) -> Path:
        return self.config.out_dir / Subcommand.SELECT / PathName.SELECTIONS_DIR

    def load_selections(self) -> list[BlockSelection]:
        directory = self.selections_dir()
        selections = []
        for block in C3_TARGET_BLOCKS:
            path = directory / FormatStrings.SELECTION_FILE.format(block=block)
            if path.exists():
                selections.append(BlockSelection.from_json_dict(read_json(path)))
        if not selections:
            message = LogMsg.SELECTION_MISSING.format(path=directory)
            log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
            raise SelectionMissingError(message)
        return selections

    def combined_profile(self, target_sum: float | None = None) -> AmplificationProfile:
        cfg = self.config.combination
        if target_sum is not None:
            cfg = cfg.model_copy(update={"target_sum": target_sum})
        return combine(self.load_selections(), cfg, self.config.sampler.steps, self.config.search.cutoffs)

    def c3_profile(self) -> AmplificationProfile:
        """--profile, else the config's own profile, else combine's output, else fresh from select."""
        if self.profile_override is not None:
            return self.profile_override
        if self.config.hooks.c3_profile.blocks:
            return self.config.hooks.c3_profile
        combined = self.config.out_dir / Subcommand.COMBINE / PathName.PROFILE
        if combined.exists():
            return self.load_profile(combined)
        return self.combined_profile()

    # ── subcommands ──

    def gen(self) -> Path:
        """Baseline and hooked image per (concept, seed), both from the same seed."""
        out = self.command_dir(Subcommand.GEN)
        hooks = self.configured_hooks()
        jobs = [(concept, seed) for concept in self.config.concepts for seed in self.seeds()]

        def work(job: tuple[str, int]) -> tuple[tuple[Image, np.ndarray], tuple[Image, np.ndarray]]:
            concept, seed = job
            cond = self.conditioning(concept, self.config.modifier)
            return self.render(cond, seed, self.no_hooks()), self.render(cond, seed, hooks)

        results = self.map(work, jobs, desc=Subcommand.GEN)
        files: list[Path] = []
        rows = []
        for (concept, seed), pair in zip(jobs, results):
            cond = self.conditioning(concept, self.config.modifier)
            baseline_image = pair[0][0]
            for variant, (image, latent) in zip((Variant.BASELINE, Variant.HOOKED), pair):
                name = self.image_name(concept, seed, variant)
                files.append(write_ppm(out / PathName.IMAGES_DIR / name, image))
                if self.dump_latents:
                    latent_path = out / PathName.LATENTS_DIR / FormatStrings.LATENT_FILE.format(
                        concept=slugify(concept), seed=seed, variant=variant
                    )
                    latent_path.parent.mkdir(parents=True, exist_ok=True)
                    write_tensor_file(latent_path, latent)
                    files.append(latent_path)
                score = self.bundle.score(
                    image, UsabilityContext(conditioning=cond, baseline_image=baseline_image)
                )
                rows.append(
                    {
                        "concept": concept,
                        "seed": seed,
                        "variant": variant,
                        "file": f"{PathName.IMAGES_DIR}/{name}",
                        "aesthetic": score.aesthetic,
                        "alignment": score.alignment,
                        "usability": score.aesthetic + score.alignment,
                    }
                )
        files.append(write_csv(out / PathName.INDEX_CSV, rows, ReportColumns.GEN_INDEX))
        return self.finish(Subcommand.GEN, out, files)

    def ablate_blocks(self) -> Path:
        """Single-block amplification of every listed block over the factor grid."""
        out = self.command_dir(Subcommand.ABLATE_BLOCKS)
        cfg = self.config.ablation
        cond = self.conditioning(self.config.concepts[0], self.config.modifier)
        seeds = self.seeds()
        baselines = self.map(lambda seed: self.render(cond, seed, self.no_hooks())[0], seeds)
        jobs = [(block, lam, seed) for block in cfg.blocks for lam in cfg.lambdas for seed in seeds]

        def work(job: tuple[BlockId, float, int]) -> Image:
            block, lam, seed = job
            return self.render(cond, seed, self.single_block_hooks(block, lam, cfg.rho))[0]

        images = self.map(work, jobs, desc=Subcommand.ABLATE_BLOCKS)
        files: list[Path] = []
        rows = []
        for (block, lam, seed), image in zip(jobs, images):
            name = FormatStrings.ABLATE_FILE.format(block=block, lam=lam, seed=seed)
            files.append(write_ppm(out / PathName.IMAGES_DIR / name, image))
            rows.append({"block": block, "lambda": lam, "seed": seed, **self.image_row(image, cond, baselines[seed])})
        files.append(write_csv(out / PathName.REPORT_CSV, rows, ReportColumns.ABLATE_BLOCKS))
        if self.svg:
            series = {
                str(block): [
                    (lam, float(np.mean([r["distance"] for r in rows if r["block"] == block and r["lambda"] == lam])))
                    for lam in cfg.lambdas
                ]
                for block in cfg.blocks
            }
            files.append(write_svg_plot(out / PathName.PLOT_SVG, series, Subcommand.ABLATE_BLOCKS, "lambda", "distance"))
        return self.finish(Subcommand.ABLATE_BLOCKS, out, files)

    def ablate_frequency(self) -> Path:
        """All-band versus low-band amplification of one block at the same factor."""
        out = self.command_dir(Subcommand.ABLATE_FREQUENCY)
        cfg = self.config.frequency
        cond = self.conditioning(self.config.concepts[0], self.config.modifier)
        variants = ((Variant.ALLBAND, 1.0), (Variant.LOWBAND, cfg.rho_low))
        jobs = [(seed, variant, rho) for seed in self.seeds() for variant, rho in variants]
        baselines = self.map(lambda seed: self.render(cond, seed, self.no_hooks())[0], self.seeds())

        def work(job: tuple[int, Variant, float]) -> Image:
            seed, _, rho = job
            return self.render(cond, seed, self.single_block_hooks(cfg.block, cfg.lam, rho))[0]

        images = self.map(work, jobs, desc=Subcommand.ABLATE_FREQUENCY)
        rows = [
            {
                "seed": seed,
                "variant": variant,
                "hbe": self.hbe(image),
                "usability": self.usability(image, cond, baselines[seed]),
            }
            for (seed, variant, _), image in zip(jobs, images)
        ]
        files = [write_csv(out / PathName.REPORT_CSV, rows, ReportColumns.ABLATE_FREQUENCY)]
        return self.finish(Subcommand.ABLATE_FREQUENCY, out, files)

    def _search_generator(self, block: BlockId, search: SearchConfig) -> tuple[
        Callable[[float, int], Image], Callable[[int, Image], UsabilityContext]
    ]:
        """Search sample ``i`` uses concept ``i mod n`` with seed ``i``."""
        concepts = self.config.concepts

        def cond_for(index: int) -> ConditioningSpec:
            return self.conditioning(concepts[index % len(concepts)], self.config.modifier)

        def generator(lam: float, index: int) -> Image:
            hooks = self.single_block_hooks(block, lam, search.cutoff_for(block))
            return self.render(cond_for(index), index, hooks)[0]

        def ctx_builder(index: int, baseline: Image) -> UsabilityContext:
            return UsabilityContext(conditioning=cond_for(index), baseline_image=baseline)

        return generator, ctx_builder

    def run_selection(self, block: BlockId, search: SearchConfig | None = None) -> BlockSelection:
        search = search or self.config.search
        generator, ctx_builder = self._search_generator(block, search)
        return select_lambda(block, search, generator, ctx_builder, self.bundle, mapper=self.map)

    def select(self) -> Path:
        """Runs the constrained factor search for every C3 target block."""
        out = self.command_dir(Subcommand.SELECT)
        files: list[Path] = []
        rows = []
        for block in C3_TARGET_BLOCKS:
            selection = self.run_selection(block)
            path = out / PathName.SELECTIONS_DIR / FormatStrings.SELECTION_FILE.format(block=block)
            files.append(write_json(path, selection.to_json_dict()))
            rows.append(
                {
                    "block": block,
                    "K_l": self.config.search.grid_for(block).cap,
                    "lambda_star": selection.lambda_star,
                    "baseline_use": selection.baseline_use,
                    "threshold": selection.threshold,
                }
            )
        files.append(write_csv(out / PathName.SELECT_SUMMARY, rows, ReportColumns.SELECT_SUMMARY))
        return self.finish(Subcommand.SELECT, out, files)

    def combine(self) -> Path:
        """Merges the saved selections into one profile and renders it for every (concept, seed)."""
        out = self.command_dir(Subcommand.COMBINE)
        profile = self.combined_profile()
        files = [write_json(out / PathName.PROFILE, profile.model_dump(mode="json"))]
        hooks = self.profile_hooks(profile)
        jobs = [(concept, seed) for concept in self.config.concepts for seed in self.seeds()]
        images = self.map(
            lambda job: self.render(self.conditioning(job[0], self.config.modifier), job[1], hooks)[0],
            jobs,
            desc=Subcommand.COMBINE,
        )
        for (concept, seed), image in zip(jobs, images):
            files.append(write_ppm(out / PathName.IMAGES_DIR / self.image_name(concept, seed, Variant.C3), image))
        return self.finish(Subcommand.COMBINE, out, files)

    def quant(self) -> Path:
        """Plain versus C3 metric battery per concept, mean/std aggregate, optional Real-to-Ref table."""
        k = self.config.metrics.k
        if self.config.seeds < k + 2:
            message = LogMsg.INSUFFICIENT_SEEDS.format(needed=k + 2, seeds=self.config.seeds)
            log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
            raise ConfigError(message)
        out = self.command_dir(Subcommand.QUANT)
        hooks = self.profile_hooks(self.c3_profile())
        plain_cache: dict[str, list[Image]] = {}

        def plain_set(concept: str) -> list[Image]:
            if concept not in plain_cache:
                cond = self.conditioning(concept, self.config.modifier)
                plain_cache[concept] = self.map(
                    lambda seed: self.render(cond, seed, self.no_hooks())[0], self.seeds(), desc=concept
                )
            return plain_cache[concept]

        rows = []
        reports: dict[str, Any] = {}
        for concept in self.config.concepts:
            cond = self.conditioning(concept, self.config.modifier)
            plain = plain_set(concept)
            c3 = self.map(lambda seed: self.render(cond, seed, hooks)[0], self.seeds(), desc=concept)
            report = build_report(plain, c3, plain, self.embedder, k, self.bundle, cond)
            # each half needs two points for a covariance
            split = split_half_frechet(embed_images(plain, self.embedder)) if len(plain) >= 4 else None
            rows.append({"concept": concept, **report.to_csv_row(), ReportColumns.PLAIN_SPLIT: split})
            reports[concept] = {**report.to_json_dict(), ReportColumns.PLAIN_SPLIT: round_sig(split)}

        metric_columns = [*ReportColumns.METRICS, ReportColumns.PLAIN_SPLIT]
        aggregate = []
        for label, reducer in ((MiscValues.AGGREGATE_MEAN, np.mean), (MiscValues.AGGREGATE_STD, np.std)):
            summary: dict[str, Any] = {"concept": label}
            for column in metric_columns:
                present = [row[column] for row in rows if row[column] is not None]
                summary[column] = float(reducer(present)) if present else None
            aggregate.append(summary)
        files = [
            write_csv(out / PathName.REPORT_CSV, rows + aggregate, ["concept", *metric_columns]),
            write_json(
                out / PathName.REPORT_JSON,
                {
                    "concepts": reports,
                    "aggregate": {
                        row["concept"]: {c: round_sig(row[c]) for c in metric_columns} for row in aggregate
                    },
                },
            ),
        ]

        if self.config.ref_concepts:
            ref_rows = []
            for concept, ref in self.config.ref_concepts.items():
                real = embed_images(plain_set(concept), self.embedder)
                fake = embed_images(plain_set(ref), self.embedder)
                precision, recall = knn_precision_recall(real, fake, k)
                ref_rows.append(
                    {
                        "concept": concept,
                        "ref_concept": ref,
                        "fid_star": frechet_features(real, fake),
                        "precision_star": precision,
                        "recall": recall,
                    }
                )
            files.append(write_csv(out / PathName.QUANT_REF_CSV, ref_rows, ReportColumns.QUANT_REF))
        return self.finish(Subcommand.QUANT, out, files)

    def sweep(self, param: SweepParam | str | None = None, values: Sequence[Any] | None = None) -> Path:
        """One row per (value, seed) around the single-block profile of ``config.sweep``."""
        cfg = self.config.sweep
        try:
            param = SweepParam(param if param is not None else cfg.param)
        except ValueError as e:
            message = LogMsg.UNKNOWN_SWEEP_PARAM.format(param=param)
            log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
            raise ConfigError(message) from e
        values = list(values if values is not None else cfg.values)
        out = self.command_dir(Subcommand.SWEEP)
        cond = self.conditioning(self.config.concepts[0], self.config.modifier)
        seeds = self.seeds()
        rho = self.config.search.cutoff_for(cfg.block)
        lambda_stars: dict[int, float] = {}

        if param == SweepParam.EPSILON:
            full = self.config.search.model_copy(update={"epsilon": 0.0, "early_stop": False})
            table = {p.lam: p.use for p in self.run_selection(cfg.block, full).trace}
            for index, value in enumerate(values):
                epsilon = self._sweep_float(param, value)
                lambda_stars[index], *_ = scan_grid(table.keys(), table.__getitem__, epsilon, early_stop=True)

        def setup(index: int, value: Any) -> tuple[HookSet, SamplerConfig]:
            sampler = self.config.sampler
            if param == SweepParam.CUTOFF:
                return self.single_block_hooks(cfg.block, cfg.lam, self._sweep_float(param, value)), sampler
            if param == SweepParam.EPSILON:
                return self.single_block_hooks(cfg.block, lambda_stars[index], rho), sampler
            if param == SweepParam.SCALE_SUM:
                return self.profile_hooks(self.combined_profile(self._sweep_float(param, value))), sampler
            if param == SweepParam.STEP_RANGE:
                try:
                    start, end = (int(v) for v in value)
                    check_step_range((start, end), sampler.steps)
                except (TypeError, ValueError) as e:
                    raise ConfigError(LogMsg.BAD_SWEEP_VALUE.format(value=value, param=param)) from e
                hooks = self.single_block_hooks(cfg.block, cfg.lam, rho)
                return hooks.model_copy(update={"step_range": (start, end)}), sampler
            scale = self._sweep_float(param, value)
            return self.single_block_hooks(cfg.block, cfg.lam, rho), sampler.model_copy(update={"cfg_scale": scale})

        setups = [setup(index, value) for index, value in enumerate(values)]
        jobs = [(index, seed) for index in range(len(values)) for seed in seeds]

        def work(job: tuple[int, int]) -> tuple[Image, Image]:
            index, seed = job
            hooks, sampler = setups[index]
            baseline = self.render(cond, seed, self.no_hooks(), sampler)[0]
            return self.render(cond, seed, hooks, sampler)[0], baseline

        results = self.map(work, jobs, desc=Subcommand.SWEEP)
        rows = []
        for (index, seed), (image, baseline) in zip(jobs, results):
            rows.append(
                {
                    "param": param,
                    "value": json.dumps(values[index]) if isinstance(values[index], list) else values[index],
                    "seed": seed,
                    "lambda_star": lambda_stars.get(index),
                    **self.image_row(image, cond, baseline),
                }
            )
        files = [write_csv(out / PathName.REPORT_CSV, rows, ReportColumns.SWEEP)]
        if self.svg:
            series: dict[str, list[tuple[float, float]]] = {"usability": [], "distance": []}
            for index, value in enumerate(values):
                x = float(value) if not isinstance(value, list) else float(index)
                chunk = rows[index * len(seeds) : (index + 1) * len(seeds)]
                series["usability"].append((x, float(np.mean([r["usability"] for r in chunk]))))
                series["distance"].append((x, float(np.mean([r["distance"] for r in chunk]))))
            files.append(write_svg_plot(out / PathName.PLOT_SVG, series, f"{Subcommand.SWEEP} {param}", str(param), "mean"))
        return self.finish(Subcommand.SWEEP, out, files)

    @staticmethod
    def _sweep_float(param: SweepParam, value: Any) -> float:
        try:
            number = float(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(LogMsg.BAD_SWEEP_VALUE.format(value=value, param=param)) from e
        if not math.isfinite(number):
            raise ConfigError(LogMsg.BAD_SWEEP_VALUE.format(value=value, param=param))
        return number

    def ablate_modifier(self) -> Path:
        """{modifier present, absent} x {C3 on, off} per concept, with FID* between on and off sets."""
        out = self.command_dir(Subcommand.ABLATE_MODIFIER)
        modifier = self.config.modifier_ablation.modifier
        hooks = self.profile_hooks(self.c3_profile())
        seeds = self.seeds()
        rows = []
        for concept in self.config.concepts:
            cells: dict[tuple[str | None, bool], list[Image]] = {}
            for mod in (modifier, None):
                cond = self.conditioning(concept, mod)
                for c3_on in (True, False):
                    cell_hooks = hooks if c3_on else self.no_hooks()
                    cells[(mod, c3_on)] = self.map(
                        lambda seed: self.render(cond, seed, cell_hooks)[0], seeds, desc=concept
                    )
            fids = {
                mod: frechet_features(
                    embed_images(cells[(mod, True)], self.embedder),
                    embed_images(cells[(mod, False)], self.embedder),
                )
                if len(seeds) >= 2
                else None
                for mod in (modifier, None)
            }
            for mod in (modifier, None):
                cond = self.conditioning(concept, mod)
                for c3_on in (True, False):
                    uses = [
                        self.usability(image, cond, baseline)
                        for image, baseline in zip(cells[(mod, c3_on)], cells[(mod, False)])
                    ]
                    rows.append(
                        {
                            "concept": concept,
                            "modifier": mod or "none",
                            "c3": c3_on,
                            "n_images": len(uses),
                            "mean_usability": float(np.mean(uses)),
                            "fid_on_off_with_modifier": fids[modifier],
                            "fid_on_off_without_modifier": fids[None],
                        }
                    )
        files = [write_csv(out / PathName.REPORT_CSV, rows, ReportColumns.ABLATE_MODIFIER)]
        return self.finish(Subcommand.ABLATE_MODIFIER, out, files)

    def freeu_compare(self) -> Path:
        """FreeU-style generations over the (b, s) grid next to the C3 profile, same seeds."""
        out = self.command_dir(Subcommand.FREEU_COMPARE)
        cfg = self.config.freeu
        cond = self.conditioning(self.config.concepts[0], self.config.modifier)
        seeds = self.seeds()
        base = self.config.hooks
        baselines = self.map(lambda seed: self.render(cond, seed, self.no_hooks())[0], seeds)
        jobs: list[tuple[str, float | None, float | None, int, HookSet]] = [
            (
                Variant.FREEU,
                b,
                s,
                seed,
                HookSet(
                    mode=HookMode.FREEU,
                    freeu_spec=FreeUSpec(b=b, s=s, rho_skip=cfg.rho_skip),
                    step_range=base.step_range,
                ),
            )
            for b in cfg.b_grid
            for s in cfg.s_grid
            for seed in seeds
        ]
        c3_hooks = self.profile_hooks(self.c3_profile())
        jobs += [(Variant.C3, None, None, seed, c3_hooks) for seed in seeds]

        images = self.map(lambda job: self.render(cond, job[3], job[4])[0], jobs, desc=Subcommand.FREEU_COMPARE)
        files: list[Path] = []
        rows = []
        for (method, b, s, seed, _), image in zip(jobs, images):
            variant = f"{method}_b{b:g}_s{s:g}" if method == Variant.FREEU else method
            files.append(
                write_ppm(out / PathName.IMAGES_DIR / self.image_name(cond.concept, seed, variant), image)
            )
            rows.append({"method": method, "b": b, "s": s, "seed": seed, **self.image_row(image, cond, baselines[seed])})
        files.append(write_csv(out / PathName.REPORT_CSV, rows, ReportColumns.FREEU_COMPARE))
        return self.finish(Subcommand.FREEU_COMPARE, out, files)

    def template_sweep(self) -> Path:
        """The C3 profile under each creativity modifier, same seeds."""
        out = self.command_dir(Subcommand.TEMPLATE_SWEEP)
        concept = self.config.concepts[0]
        hooks = self.profile_hooks(self.c3_profile())
        seeds = self.seeds()
        files: list[Path] = []
        rows = []
        summary = []
        for modifier in Modifier:
            cond = self.conditioning(concept, modifier)
            pairs = self.map(
                lambda seed: (self.render(cond, seed, hooks)[0], self.render(cond, seed, self.no_hooks())[0]),
                seeds,
                desc=modifier,
            )
            uses = []
            for seed, (image, baseline) in zip(seeds, pairs):
                name = self.image_name(concept, seed, f"{Variant.C3}_{modifier}")
                files.append(write_ppm(out / PathName.IMAGES_DIR / name, image))
                use = self.usability(image, cond, baseline)
                uses.append(use)
                rows.append({"modifier": modifier, "seed": seed, "file": f"{PathName.IMAGES_DIR}/{name}", "usability": use})
            images = [image for image, _ in pairs]
            summary.append(
                {
                    "modifier": modifier,
                    "mean_usability": float(np.mean(uses)),
                    "pairwise_diversity": pairwise_diversity(images, self.embedder) if len(images) >= 2 else None,
                }
            )
        files.append(write_csv(out / PathName.REPORT_CSV, rows, ReportColumns.TEMPLATE_SWEEP))
        files.append(write_csv(out / PathName.SUMMARY_CSV, summary, ReportColumns.TEMPLATE_SUMMARY))
        return self.finish(Subcommand.TEMPLATE_SWEEP, out, files)

    def cfg_compare(self) -> Path:
        """Guidance scale and negative prompt settings, each with C3 off and on."""
        out = self.command_dir(Subcommand.CFG_COMPARE)
        cfg = self.config.cfg_compare
        c3_hooks = self.profile_hooks(self.c3_profile())
        settings = {
            CfgSetting.DEFAULT: (cfg.base_scale, False),
            CfgSetting.HIGH_CFG: (cfg.high_scale, False),
            CfgSetting.NEGATIVE: (cfg.base_scale, True),
            CfgSetting.HIGH_CFG_NEGATIVE: (cfg.high_scale, True),
        }
        seeds = self.seeds()
        jobs = [
            (concept, setting, c3_on, seed)
            for concept in self.config.concepts
            for setting in settings
            for c3_on in (False, True)
            for seed in seeds
        ]

        def cond_for(concept: str, setting: CfgSetting) -> ConditioningSpec:
            negative = cfg.negative_template.format(concept=concept) if settings[setting][1] else None
            return self.conditioning(concept, self.config.modifier, negative)

        def work(job: tuple[str, CfgSetting, bool, int]) -> Image:
            concept, setting, c3_on, seed = job
            sampler = self.config.sampler.model_copy(update={"cfg_scale": settings[setting][0]})
            hooks = c3_hooks if c3_on else self.no_hooks()
            return self.render(cond_for(concept, setting), seed, hooks, sampler)[0]

        images = self.map(work, jobs, desc=Subcommand.CFG_COMPARE)
        reference = {
            (concept, seed): image
            for (concept, setting, c3_on, seed), image in zip(jobs, images)
            if setting == CfgSetting.DEFAULT and not c3_on
        }
        rows = []
        for (concept, setting, c3_on, seed), image in zip(jobs, images):
            baseline = reference[(concept, seed)]
            rows.append(
                {
                    "concept": concept,
                    "setting": setting,
                    "c3": c3_on,
                    "seed": seed,
                    **self.image_row(image, cond_for(concept, setting), baseline),
                }
            )
        files = [write_csv(out / PathName.REPORT_CSV, rows, ReportColumns.CFG_COMPARE)]
        return self.finish(Subcommand.CFG_COMPARE, out, files)

    def run(self, command: Subcommand | str, **kwargs: Any) -> Path:
        handlers: dict[Subcommand, Callable[..., Path]] = {
            Subcommand.GEN: self.gen,
            Subcommand.ABLATE_BLOCKS: self.ablate_blocks,
            Subcommand.ABLATE_FREQUENCY: self.ablate_frequency,
            Subcommand.SELECT: self.select,
            Subcommand.COMBINE: self.combine,
            Subcommand.QUANT: self.quant,
            Subcommand.SWEEP: self.sweep,
            Subcommand.ABLATE_MODIFIER: self.ablate_modifier,
            Subcommand.FREEU_COMPARE: self.freeu_compare,
            Subcommand.TEMPLATE_SWEEP: self.template_sweep,
            Subcommand.CFG_COMPARE: self.cfg_compare,
        }
        return handlers[Subcommand(command)](**kwargs)
