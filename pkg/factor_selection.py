"""
Usability scoring and automatic amplification-factor selection.

Usability is aesthetic + alignment, each on [0, 10]. For every target block a
descending scan over its grid keeps the largest factor whose mean usability
stays above a fraction (the bumper) of the unamplified baseline. Several
per-block selections are merged by distributing a budget of excess
amplification across the blocks.
"""

import base64
import logging
import math
from collections.abc import Callable, Iterable
from functools import lru_cache

import numpy as np
import requests
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit
from tenacity import RetryCallState, retry, retry_if_exception, stop_after_attempt, wait_fixed

from cache_manager import CacheManager, score_cache_key
from constants import (
    C3_TARGET_BLOCKS,
    BlockId,
    LogMsg,
    RngStreamId,
    ScorerKeys,
    ScorerSource,
    SelectionKeys,
)
from exceptions import (
    DomainError,
    InvariantViolationError,
    ScorerProtocolError,
    ScorerUnavailableError,
)
from freq_catalyst import DEFAULT_CUTOFF, AmplificationProfile, AmplificationSpec
from log_utils import ErrorPayload, ScorerPayload, SearchPayload, log_with_payload
from tensor_core import RngStream, box_resize
from toy_denoiser import ConditioningSpec, Image

SCORE_MAX = 10.0
ALIGNMENT_GRID = 16
ALIGNMENT_DIM = 64
ALIGNMENT_SEED = 7
Z_EPS = 1e-8
LUMA = (0.299, 0.587, 0.114)


class ScorerConfig(BaseModel):
    """Which scorers produce usability, and how the remote client behaves."""

    model_config = ConfigDict(extra="forbid")

    source: ScorerSource = ScorerSource.LOCAL_PROXY
    endpoint: str | None = None
    fallback: bool = True
    timeout: float = Field(default=10.0)
    retries: int = Field(default=2)
    backoff: float = Field(default=0.5)
    use_cache: bool = False
    aesthetic_coefficients: tuple[float, float, float, float, float] = (0.0, 6.0, 2.0, 12.0, 4.0)
    alignment_seed: int = ALIGNMENT_SEED

    @model_validator(mode="after")
    def validate_config(self) -> "ScorerConfig":
        if self.timeout <= 0:
            raise ValueError(LogMsg.CONFIG_NON_POSITIVE.format(field="timeout", value=self.timeout))
        if self.retries < 0:
            raise ValueError(LogMsg.CONFIG_OUT_OF_RANGE.format(field="retries", low=0, high="inf", value=self.retries))
        return self


class UsabilityContext(BaseModel):
    """The prompt and the unamplified same-seed image an amplified image is judged against."""

    model_config = ConfigDict(frozen=True)

    conditioning: ConditioningSpec
    baseline_image: Image | None = None


class ScorePair(BaseModel):
    aesthetic: float
    alignment: float
    blip: float | None = None


# ─── Local proxies ──────────────────────────────────────────────────────────────


def luminance(image: Image) -> np.ndarray:
    rgb = image.data.astype(np.float64)
    return LUMA[0] * rgb[0] + LUMA[1] * rgb[1] + LUMA[2] * rgb[2]


def colorfulness(image: Image) -> float:
    r, g, b = image.data.astype(np.float64)
    rg = r - g
    yb = 0.5 * (r + g) - b
    spread = math.sqrt(float(rg.var()) + float(yb.var()))
    offset = math.sqrt(float(rg.mean()) ** 2 + float(yb.mean()) ** 2)
    return spread + 0.3 * offset


def laplacian_noise(y: np.ndarray) -> float:
    """Mean absolute 4-neighbour Laplacian over interior pixels."""
    if y.shape[0] < 3 or y.shape[1] < 3:
        return 0.0
    centre = y[1:-1, 1:-1]
    lap = 4.0 * centre - y[:-2, 1:-1] - y[2:, 1:-1] - y[1:-1, :-2] - y[1:-1, 2:]
    return float(np.mean(np.abs(lap)))


def clip_fraction(image: Image) -> float:
    data = image.data
    return float(np.mean((data < 0.005) | (data > 0.995)))


def aesthetic_proxy(
    image: Image, coefficients: tuple[float, float, float, float, float] = (0.0, 6.0, 2.0, 12.0, 4.0)
) -> float:
    """Logistic blend of contrast, colorfulness, high-frequency noise and clipping, scaled to [0, 10]."""
    a0, a1, a2, a3, a4 = coefficients
    y = luminance(image)
    logit = (
        a0
        + a1 * float(y.std())
        + a2 * colorfulness(image)
        - a3 * laplacian_noise(y)
        - a4 * clip_fraction(image)
    )
    return SCORE_MAX * float(expit(logit))


@lru_cache(maxsize=8)
def _alignment_projection(seed: int) -> np.ndarray:
    matrix = RngStream(seed, RngStreamId.ALIGNMENT_EMBED).normal(
        (ALIGNMENT_DIM, ALIGNMENT_GRID * ALIGNMENT_GRID), scale=1.0 / ALIGNMENT_GRID
    )
    matrix.setflags(write=False)
    return matrix


def alignment_embed(image: Image, seed: int = ALIGNMENT_SEED) -> np.ndarray:
    small = box_resize(luminance(image), ALIGNMENT_GRID)
    z = (small - small.mean()) / (small.std() + Z_EPS)
    vector = _alignment_projection(seed) @ z.ravel()
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        return vector
    return vector / norm


def alignment_proxy(image: Image, ctx: UsabilityContext, seed: int = ALIGNMENT_SEED) -> float:
    """10 * max(0, cos) between the image's embedding and its same-seed baseline's."""
    if ctx.baseline_image is None:
        message = LogMsg.BASELINE_MISSING.format()
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise InvariantViolationError(message)
    cosine = float(alignment_embed(image, seed) @ alignment_embed(ctx.baseline_image, seed))
    return min(SCORE_MAX, SCORE_MAX * max(0.0, cosine))


# ─── Remote scorer ──────────────────────────────────────────────────────────────


def is_transient_error(exception: BaseException) -> bool:
    """Transport failures and non-200 answers are retried; malformed bodies are not."""
    return isinstance(exception, (requests.RequestException, ScorerUnavailableError))


def clamp_score(value: float) -> float:
    return min(SCORE_MAX, max(0.0, value))


class RemoteScorer:
    """HTTP client for ``POST {endpoint}/score``. Safe for concurrent use (no shared session)."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = 10.0,
        retries: int = 2,
        backoff: float = 0.5,
        cache: CacheManager | None = None,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.cache = cache

    @staticmethod
    def request_body(image: Image, concept: str) -> dict[str, object]:
        pixels = np.ascontiguousarray(image.data, dtype="<f4").tobytes()
        return {
            ScorerKeys.CONCEPT: concept,
            ScorerKeys.WIDTH: int(image.data.shape[2]),
            ScorerKeys.HEIGHT: int(image.data.shape[1]),
            ScorerKeys.PIXELS: base64.b64encode(pixels).decode("ascii"),
        }

    def _log_retry(self, retry_state: RetryCallState) -> None:
        log_with_payload(
            logging.WARNING,
            LogMsg.SCORER_RETRY,
            payload=ScorerPayload(endpoint=self.endpoint, attempt=retry_state.attempt_number),
            attempt=retry_state.attempt_number,
            error=retry_state.outcome.exception() if retry_state.outcome else None,
        )

    def _post_once(self, body: dict[str, object]) -> requests.Response:
        log_with_payload(
            logging.DEBUG,
            LogMsg.SCORER_REQUEST,
            payload=ScorerPayload(endpoint=self.endpoint, concept=str(body[ScorerKeys.CONCEPT])),
            concept=body[ScorerKeys.CONCEPT],
            endpoint=self.endpoint,
        )
        response = requests.post(
            f"{self.endpoint}{ScorerKeys.ROUTE}", json=body, timeout=self.timeout
        )
        if response.status_code != 200:
            raise ScorerUnavailableError(f"HTTP {response.status_code}")
        return response

    def _parse(self, response: requests.Response) -> ScorePair:
        try:
            data = response.json()
            aesthetic = float(data[ScorerKeys.AESTHETIC])
            alignment = float(data[ScorerKeys.ALIGNMENT])
            blip = data.get(ScorerKeys.BLIP)
            blip = None if blip is None else float(blip)
        except (ValueError, KeyError, TypeError, AttributeError) as e:
            message = LogMsg.SCORER_PROTOCOL.format(endpoint=self.endpoint, error=e)
            log_with_payload(
                logging.ERROR, message, payload=ScorerPayload(endpoint=self.endpoint)
            )
            raise ScorerProtocolError(message) from e
        if not (math.isfinite(aesthetic) and math.isfinite(alignment)):
            message = LogMsg.SCORER_PROTOCOL.format(endpoint=self.endpoint, error="non-finite score")
            raise ScorerProtocolError(message)
        return ScorePair(aesthetic=clamp_score(aesthetic), alignment=clamp_score(alignment), blip=blip)

    def score(self, image: Image, concept: str) -> ScorePair:
        """
        Scores one image, retrying transport failures.

        Raises:
            ScorerUnavailableError: after ``1 + retries`` failed attempts.
            ScorerProtocolError: when the answer is not the expected JSON object.
        """
        body = self.request_body(image, concept)
        key = None
        if self.cache is not None:
            key = score_cache_key(self.endpoint, concept, str(body[ScorerKeys.PIXELS]).encode("ascii"))
            if (cached := self.cache.get(key)) is not None:
                log_with_payload(
                    logging.DEBUG,
                    LogMsg.SCORER_CACHE_HIT,
                    payload=ScorerPayload(endpoint=self.endpoint, concept=concept),
                    concept=concept,
                )
                return ScorePair.model_validate(cached)

        post = retry(
            retry=retry_if_exception(is_transient_error),
            wait=wait_fixed(self.backoff),
            stop=stop_after_attempt(self.retries + 1),
            before_sleep=self._log_retry,
            reraise=True,
        )(self._post_once)
        try:
            response = post(body)
        except (requests.RequestException, ScorerUnavailableError) as e:
            message = LogMsg.SCORER_UNAVAILABLE.format(
                endpoint=self.endpoint, attempts=self.retries + 1, error=e
            )
            log_with_payload(logging.ERROR, message, payload=ScorerPayload(endpoint=self.endpoint))
            raise ScorerUnavailableError(message) from e

        pair = self._parse(response)
        if self.cache is not None and key is not None:
            self.cache.set(key, pair.model_dump())
        return pair


def score_remote(
    endpoint: str, image: Image, concept: str, timeout: float = 10.0, retries: int = 2
) -> tuple[float, float]:
    pair = RemoteScorer(endpoint, timeout=timeout, retries=retries).score(image, concept)
    return pair.aesthetic, pair.alignment


# ─── Scorer bundle and usability ────────────────────────────────────────────────


class ScorerBundle:
    """
    The pair of scorers behind usability.

    Local bundles call ``aesthetic(image)`` and ``alignment(image, ctx)``.
    Remote bundles ask the client for both scores at once and, when
    ``fallback`` is set, drop back to the local functions on failure.
    """

    def __init__(
        self,
        source: ScorerSource,
        aesthetic: Callable[[Image], float],
        alignment: Callable[[Image, UsabilityContext], float],
        client: RemoteScorer | None = None,
        fallback: bool = True,
    ) -> None:
        self.source = source
        self.aesthetic = aesthetic
        self.alignment = alignment
        self.client = client
        self.fallback = fallback

    def score(self, image: Image, ctx: UsabilityContext) -> ScorePair:
        if self.source == ScorerSource.REMOTE and self.client is not None:
            try:
                return self.client.score(image, ctx.conditioning.concept)
            except (ScorerUnavailableError, ScorerProtocolError) as e:
                if not self.fallback:
                    raise
                log_with_payload(
                    logging.WARNING,
                    LogMsg.SCORER_FALLBACK,
                    payload=ScorerPayload(endpoint=self.client.endpoint),
                    error=e,
                )
        return ScorePair(
            aesthetic=clamp_score(self.aesthetic(image)),
            alignment=clamp_score(self.alignment(image, ctx)),
        )


def make_scorer_bundle(
    cfg: ScorerConfig, endpoint_override: str | None = None, cache: CacheManager | None = None
) -> ScorerBundle:
    """Builds the bundle for a config; an endpoint override (environment) wins over the config's."""

    def aesthetic(image: Image) -> float:
        return aesthetic_proxy(image, cfg.aesthetic_coefficients)

    def alignment(image: Image, ctx: UsabilityContext) -> float:
        return alignment_proxy(image, ctx, cfg.alignment_seed)

    endpoint = endpoint_override or cfg.endpoint
    if cfg.source == ScorerSource.REMOTE and endpoint:
        client = RemoteScorer(
            endpoint,
            timeout=cfg.timeout,
            retries=cfg.retries,
            backoff=cfg.backoff,
            cache=cache if cfg.use_cache else None,
        )
        return ScorerBundle(ScorerSource.REMOTE, aesthetic, alignment, client, cfg.fallback)
    return ScorerBundle(ScorerSource.LOCAL_PROXY, aesthetic, alignment)


def usability(image: Image, ctx: UsabilityContext, bundle: ScorerBundle) -> float:
    pair = bundle.score(image, ctx)
    return pair.aesthetic + pair.alignment


# ─── Search ─────────────────────────────────────────────────────────────────────


class SearchGrid(BaseModel):
    """Candidate factors for one block: starts at 1, strictly increasing, ends at the cap."""

    model_config = ConfigDict(frozen=True)

    values: tuple[float, ...]

    @model_validator(mode="after")
    def validate_grid(self) -> "SearchGrid":
        values = self.values
        ok = (
            len(values) >= 2
            and values[0] == 1.0
            and all(b > a for a, b in zip(values, values[1:]))
        )
        if not ok:
            raise ValueError(LogMsg.CONFIG_BAD_GRID.format(block="grid", values=list(values)))
        return self

    @classmethod
    def evenly_spaced(cls, cap: float, count: int) -> "SearchGrid":
        return cls(values=tuple(float(v) for v in np.linspace(1.0, cap, count)))

    @property
    def cap(self) -> float:
        return self.values[-1]


def default_grids() -> dict[BlockId, SearchGrid]:
    return {
        BlockId.DOWN0: SearchGrid.evenly_spaced(2.0, 5),
        BlockId.DOWN1: SearchGrid.evenly_spaced(2.0, 5),
        BlockId.DOWN2: SearchGrid.evenly_spaced(10.0, 10),
        BlockId.MID: SearchGrid.evenly_spaced(10.0, 10),
    }


def default_cutoffs() -> dict[BlockId, float]:
    return {block: DEFAULT_CUTOFF for block in C3_TARGET_BLOCKS}


class SearchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epsilon: float = Field(default=0.85)
    grids: dict[BlockId, SearchGrid] = Field(default_factory=default_grids)
    cutoffs: dict[BlockId, float] = Field(default_factory=default_cutoffs)
    seeds_per_point: int = Field(default=4)
    early_stop: bool = True

    @model_validator(mode="after")
    def validate_config(self) -> "SearchConfig":
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(LogMsg.CONFIG_OUT_OF_RANGE.format(field="epsilon", low=0, high=1, value=self.epsilon))
        if self.seeds_per_point < 1:
            raise ValueError(LogMsg.CONFIG_NON_POSITIVE.format(field="seeds_per_point", value=self.seeds_per_point))
        for block, rho in self.cutoffs.items():
            if not 0.0 <= rho <= 1.0:
                raise ValueError(LogMsg.CUTOFF_OUT_OF_RANGE.format(rho=rho))
        return self

    def grid_for(self, block: BlockId) -> SearchGrid:
        return self.grids.get(block) or default_grids().get(block) or SearchGrid.evenly_spaced(2.0, 5)

    def cutoff_for(self, block: BlockId) -> float:
        return self.cutoffs.get(block, DEFAULT_CUTOFF)


class TracePoint(BaseModel):
    lam: float
    use: float
    feasible: bool


class BlockSelection(BaseModel):
    """The chosen factor for one block and every grid point evaluated on the way."""

    block: BlockId
    lambda_star: float
    trace: list[TracePoint]
    baseline_use: float
    threshold: float

    def check_optimality(self) -> None:
        """Raises InvariantViolationError unless lambda_star is feasible and nothing larger is."""
        chosen = [p for p in self.trace if p.lam == self.lambda_star]
        larger_feasible = [p.lam for p in self.trace if p.lam > self.lambda_star and p.feasible]
        if not chosen or not chosen[0].feasible or larger_feasible:
            message = LogMsg.INVARIANT_BROKEN.format(
                detail=f"selection for {self.block} is not the largest feasible factor"
            )
            log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
            raise InvariantViolationError(message)

    def to_json_dict(self) -> dict[str, object]:
        return {
            SelectionKeys.BLOCK: str(self.block),
            SelectionKeys.LAMBDA_STAR: self.lambda_star,
            SelectionKeys.TRACE: [[p.lam, p.use, p.feasible] for p in self.trace],
            "baseline_use": self.baseline_use,
            "threshold": self.threshold,
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, object]) -> "BlockSelection":
        trace = [TracePoint(lam=t[0], use=t[1], feasible=t[2]) for t in data[SelectionKeys.TRACE]]  # type: ignore[index, union-attr]
        lambda_star = float(data[SelectionKeys.LAMBDA_STAR])  # type: ignore[arg-type]
        baseline = next((p.use for p in trace if p.lam == 1.0), 0.0)
        return cls(
            block=BlockId(data[SelectionKeys.BLOCK]),
            lambda_star=lambda_star,
            trace=trace,
            baseline_use=float(data.get("baseline_use", baseline)),  # type: ignore[arg-type]
            threshold=float(data.get("threshold", 0.0)),  # type: ignore[arg-type]
        )


def scan_grid(
    values: Iterable[float],
    mean_use: Callable[[float], float],
    epsilon: float,
    early_stop: bool = True,
    block: BlockId | str = "",
) -> tuple[float, list[TracePoint], float, float]:
    """
    Largest grid value whose mean usability reaches ``epsilon`` times the value at 1.

    Scans from the top down. With ``early_stop`` the scan ends at the first
    feasible value; otherwise every value is evaluated and the result is the
    same. Returns (lambda_star, trace sorted by lambda, baseline_use, threshold).
    """
    values = sorted(values)
    baseline_use = mean_use(values[0])
    threshold = epsilon * baseline_use
    trace = [TracePoint(lam=values[0], use=baseline_use, feasible=True)]
    lambda_star: float | None = None
    for lam in reversed(values[1:]):
        use = mean_use(lam)
        feasible = use >= threshold
        trace.append(TracePoint(lam=lam, use=use, feasible=feasible))
        log_with_payload(
            logging.DEBUG,
            LogMsg.SEARCH_POINT,
            payload=SearchPayload(block=str(block), lambda_value=lam, usability=use, threshold=threshold, feasible=feasible),
            block=block,
            lam=lam,
            use=use,
            threshold=threshold,
            feasible=feasible,
        )
        if feasible and lambda_star is None:
            lambda_star = lam
            if early_stop:
                break
    if lambda_star is None:
        lambda_star = values[0]
    trace.sort(key=lambda p: p.lam)
    return lambda_star, trace, baseline_use, threshold


def select_lambda(
    block: BlockId,
    cfg: SearchConfig,
    generator: Callable[[float, int], Image],
    ctx_builder: Callable[[int, Image], UsabilityContext],
    bundle: ScorerBundle,
    mapper: Callable[..., Iterable] = map,
) -> BlockSelection:
    """
    Picks the amplification factor for one block.

    ``generator(lam, seed)`` renders the image with only this block amplified;
    ``ctx_builder(seed, baseline)`` wraps the factor-1 image of that seed.
    ``mapper`` runs the per-seed work (``map`` or an executor's ``map``) and must
    preserve order.
    """
    grid = cfg.grid_for(block)
    seeds = list(range(cfg.seeds_per_point))
    log_with_payload(
        logging.INFO,
        LogMsg.SEARCH_START,
        payload=SearchPayload(block=block),
        block=block,
        count=len(grid.values),
        epsilon=cfg.epsilon,
    )
    baselines = list(mapper(lambda seed: generator(grid.values[0], seed), seeds))
    contexts = [ctx_builder(seed, image) for seed, image in zip(seeds, baselines)]

    def mean_use(lam: float) -> float:
        if lam == grid.values[0]:
            images = baselines
        else:
            images = list(mapper(lambda seed: generator(lam, seed), seeds))
        uses = [usability(image, ctx, bundle) for image, ctx in zip(images, contexts)]
        return float(np.mean(uses))

    lambda_star, trace, baseline_use, threshold = scan_grid(
        grid.values, mean_use, cfg.epsilon, cfg.early_stop, block
    )
    selection = BlockSelection(
        block=block,
        lambda_star=lambda_star,
        trace=trace,
        baseline_use=baseline_use,
        threshold=threshold,
    )
    selection.check_optimality()
    log_with_payload(
        logging.INFO,
        LogMsg.SEARCH_DONE,
        payload=SearchPayload(block=block, lambda_value=lambda_star),
        lam=lambda_star,
        block=block,
    )
    return selection


# ─── Combination ────────────────────────────────────────────────────────────────


def default_target_sum(steps: int) -> float:
    """1.0 for single-step sampling, 0.6 for multi-step."""
    return 1.0 if steps == 1 else 0.6


class CombinationConfig(BaseModel):
    """Budget ``target_sum`` of excess amplification shared by the selected blocks, with optional weights."""

    model_config = ConfigDict(extra="forbid")

    target_sum: float | None = None
    weights: dict[BlockId, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_config(self) -> "CombinationConfig":
        if self.target_sum is not None and not self.target_sum > 0:
            raise ValueError(LogMsg.CONFIG_NON_POSITIVE.format(field="target_sum", value=self.target_sum))
        for block, weight in self.weights.items():
            if not (math.isfinite(weight) and weight > 0):
                raise ValueError(LogMsg.CONFIG_NON_POSITIVE.format(field=f"weights.{block}", value=weight))
        return self

    def resolved_sum(self, steps: int) -> float:
        return self.target_sum if self.target_sum is not None else default_target_sum(steps)


def combine(
    selections: list[BlockSelection],
    cfg: CombinationConfig,
    steps: int = 4,
    cutoffs: dict[BlockId, float] | None = None,
) -> AmplificationProfile:
    """
    Merges per-block selections into one profile.

    Each block gets a share ``s = S * w / sum(w)`` of the budget and the
    factor ``1 + s * (lambda_star - 1)``. Blocks without an explicit weight
    weigh 1 when no weights are configured at all.
    """
    if not selections:
        message = LogMsg.COMBINE_EMPTY.format()
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise DomainError(message)

    target_sum = cfg.resolved_sum(steps)
    weights: dict[BlockId, float] = {}
    for selection in selections:
        if cfg.weights:
            if selection.block not in cfg.weights:
                message = LogMsg.COMBINE_MISSING_WEIGHT.format(block=selection.block)
                log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
                raise DomainError(message)
            weight = cfg.weights[selection.block]
        else:
            weight = 1.0
        if not (math.isfinite(weight) and weight > 0):
            message = LogMsg.COMBINE_BAD_WEIGHT.format(block=selection.block, weight=weight)
            log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
            raise DomainError(message)
        weights[selection.block] = weight

    total = math.fsum(weights.values())
    cutoffs = cutoffs or {}
    blocks: dict[BlockId, AmplificationSpec] = {}
    shares: dict[BlockId, float] = {}
    for selection in selections:
        share = target_sum * weights[selection.block] / total
        lam = selection.lambda_star if share == 1.0 else 1.0 + share * (selection.lambda_star - 1.0)
        shares[selection.block] = share
        blocks[selection.block] = AmplificationSpec(
            lam=lam, rho=cutoffs.get(selection.block, DEFAULT_CUTOFF)
        )

    log_with_payload(
        logging.INFO,
        LogMsg.COMBINE_DONE,
        count=len(blocks),
        target_sum=target_sum,
    )
    return AmplificationProfile(blocks=blocks, scale_factors=shares, target_sum=target_sum)
