"""
Creativity metrics over a fixed multi-scale image embedder.

The plain (unamplified) set plays the role of real data. Higher FID* and
lower precision* mean the amplified set moved further from it; recall,
pairwise diversity and the Vendi score measure spread.
"""

import logging
import math
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import eigh, eigvalsh
from scipy.spatial.distance import cdist

from constants import LogMsg, ReportColumns, RngStreamId
from exceptions import DimensionError, DomainError
from factor_selection import ScorerBundle, UsabilityContext
from log_utils import ErrorPayload, log_with_payload
from tensor_core import RngStream, box_resize
from toy_denoiser import ConditioningSpec, Image

EMBED_SCALES: tuple[int, ...] = (32, 16, 8)
DIMS_PER_SCALE = 32
DEFAULT_EMBED_SEED = 11
MID_GRAY = 0.5
# slack for eigenvalue rounding in vendi
REPORT_TOLERANCE = 1e-6


class MetricsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k: int = Field(default=3)
    embed_seed: int = Field(default=DEFAULT_EMBED_SEED)

    @model_validator(mode="after")
    def validate_config(self) -> "MetricsConfig":
        if self.k < 1:
            raise ValueError(LogMsg.CONFIG_NON_POSITIVE.format(field="k", value=self.k))
        return self


class Embedder:
    """Seeded Gaussian projections of box-downsampled RGB at three scales, concatenated and L2-normalized."""

    def __init__(self, seed: int = DEFAULT_EMBED_SEED) -> None:
        self.seed = seed
        stream = RngStream(seed, RngStreamId.METRIC_EMBED)
        self.projections: list[np.ndarray] = []
        for scale in EMBED_SCALES:
            fan_in = 3 * scale * scale
            matrix = stream.normal((DIMS_PER_SCALE, fan_in), scale=1.0 / math.sqrt(fan_in))
            matrix.setflags(write=False)
            self.projections.append(matrix)

    @property
    def dim(self) -> int:
        return DIMS_PER_SCALE * len(EMBED_SCALES)


def normalize_rows(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=-1, keepdims=True)
    return np.divide(features, norms, out=np.zeros_like(features), where=norms > 0)


def embed_image(image: Image, e: Embedder) -> np.ndarray:
    rgb = image.data.astype(np.float64)
    parts = [
        projection @ (box_resize(rgb, scale) - MID_GRAY).ravel()
        for scale, projection in zip(EMBED_SCALES, e.projections)
    ]
    return normalize_rows(np.concatenate(parts))


def embed_images(images: Sequence[Image], e: Embedder) -> np.ndarray:
    if not images:
        return np.zeros((0, e.dim))
    return np.stack([embed_image(image, e) for image in images])


class GaussianMoments(BaseModel):
    """Mean and unbiased covariance of a feature set."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    cov: np.ndarray
    n: int = 0

    @classmethod
    def from_features(cls, features: np.ndarray) -> "GaussianMoments":
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[0] < 2:
            message = LogMsg.METRICS_TOO_FEW_IMAGES.format(minimum=2, count=features.shape[0])
            log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
            raise DomainError(message)
        cov = np.atleast_2d(np.cov(features, rowvar=False, ddof=1))
        return cls(mean=features.mean(axis=0), cov=0.5 * (cov + cov.T), n=features.shape[0])


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = eigh(0.5 * (matrix + matrix.T))
    values = np.clip(values, 0.0, None)
    return (vectors * np.sqrt(values)) @ vectors.T


def frechet(a: GaussianMoments, b: GaussianMoments) -> float:
    """Fréchet distance between two Gaussians, clamped at 0."""
    mean_a, mean_b = np.atleast_1d(a.mean), np.atleast_1d(b.mean)
    cov_a, cov_b = np.atleast_2d(a.cov), np.atleast_2d(b.cov)
    if mean_a.shape != mean_b.shape or cov_a.shape != cov_b.shape:
        message = LogMsg.DIM_MISMATCH.format(left=cov_a.shape, right=cov_b.shape)
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise DimensionError(message)
    root_a = _psd_sqrt(cov_a)
    inner = root_a @ cov_b @ root_a
    inner_values = np.clip(eigvalsh(0.5 * (inner + inner.T)), 0.0, None)
    diff = mean_a - mean_b
    value = (
        float(diff @ diff)
        + float(np.trace(cov_a))
        + float(np.trace(cov_b))
        - 2.0 * float(np.sum(np.sqrt(inner_values)))
    )
    return max(0.0, value)


def frechet_features(real: np.ndarray, fake: np.ndarray) -> float:
    return frechet(GaussianMoments.from_features(real), GaussianMoments.from_features(fake))


def _kth_radius(points: np.ndarray, k: int) -> np.ndarray:
    distances = cdist(points, points)
    np.fill_diagonal(distances, np.inf)
    return np.partition(distances, k - 1, axis=1)[:, k - 1]


def knn_precision_recall(real: np.ndarray, fake: np.ndarray, k: int) -> tuple[float, float]:
    """
    k-NN manifold precision and recall.

    Each point's ball has the radius of its k-th nearest neighbour within its
    own set. Precision is the share of fake points inside some real ball,
    recall the share of real points inside some fake ball.
    """
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if len(real) <= k or len(fake) <= k:
        message = LogMsg.METRICS_TOO_FEW.format(k=k, n_real=len(real), n_fake=len(fake))
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise DomainError(message)
    real_radius = _kth_radius(real, k)
    fake_radius = _kth_radius(fake, k)
    cross = cdist(fake, real)
    precision = float(np.mean(np.any(cross <= real_radius[None, :], axis=1)))
    recall = float(np.mean(np.any(cross.T <= fake_radius[None, :], axis=1)))
    return precision, recall


def pairwise_diversity_features(features: np.ndarray) -> float:
    """Mean cosine distance over all unordered pairs; in [0, 2]."""
    features = normalize_rows(np.asarray(features, dtype=np.float64))
    n = len(features)
    if n < 2:
        message = LogMsg.METRICS_TOO_FEW_IMAGES.format(minimum=2, count=n)
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise DomainError(message)
    gram = features @ features.T
    upper = gram[np.triu_indices(n, k=1)]
    return float(np.clip(np.mean(1.0 - upper), 0.0, 2.0))


def pairwise_diversity(images: Sequence[Image], e: Embedder) -> float:
    return pairwise_diversity_features(embed_images(images, e))


def vendi(features: np.ndarray) -> float:
    """exp of the Shannon entropy of the eigenvalues of the cosine Gram matrix divided by n."""
    features = normalize_rows(np.atleast_2d(np.asarray(features, dtype=np.float64)))
    n = len(features)
    if n == 0:
        return 0.0
    gram = features @ features.T / n
    values = np.clip(eigvalsh(0.5 * (gram + gram.T)), 0.0, None)
    total = values.sum()
    if total <= 0.0:
        return 1.0
    values = values / total
    nonzero = values[values > 0.0]
    return float(np.exp(-np.sum(nonzero * np.log(nonzero))))


def split_half_frechet(features: np.ndarray) -> float:
    """FID* between the first and second half of one set; the noise floor for a same-distribution pair."""
    half = len(features) // 2
    return frechet_features(features[:half], features[half : 2 * half])


class MetricsReport(BaseModel):
    """The metric battery for one plain-vs-amplified comparison."""

    n_real: int
    n_fake: int
    k: int
    fid_star: float
    precision_star: float
    recall: float
    lpips_mean: float
    vendi: float
    alignment_mean: float
    blip: float | None = None

    @model_validator(mode="after")
    def validate_report(self) -> "MetricsReport":
        for name in ("precision_star", "recall"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(LogMsg.CONFIG_OUT_OF_RANGE.format(field=name, low=0, high=1, value=value))
        if self.fid_star < 0:
            raise ValueError(LogMsg.CONFIG_OUT_OF_RANGE.format(field="fid_star", low=0, high="inf", value=self.fid_star))
        if not 0.0 <= self.lpips_mean <= 2.0:
            raise ValueError(LogMsg.CONFIG_OUT_OF_RANGE.format(field="lpips_mean", low=0, high=2, value=self.lpips_mean))
        if self.n_fake > 0 and not 1.0 - REPORT_TOLERANCE <= self.vendi <= self.n_fake + REPORT_TOLERANCE:
            raise ValueError(LogMsg.CONFIG_OUT_OF_RANGE.format(field="vendi", low=1, high=self.n_fake, value=self.vendi))
        return self

    def rounded(self) -> "MetricsReport":
        """Copy with every float cut to 6 significant digits, the precision written to disk."""
        update = {
            name: float(f"{value:.6g}")
            for name, value in self.model_dump().items()
            if isinstance(value, float)
        }
        return self.model_copy(update=update)

    def to_csv_row(self) -> dict[str, float | int]:
        data = self.model_dump()
        return {column: data[column] for column in ReportColumns.METRICS}

    def to_json_dict(self) -> dict[str, float | int | None]:
        return self.rounded().model_dump(exclude_none=True)


def report_from_features(
    real: np.ndarray,
    fake: np.ndarray,
    k: int,
    alignments: Sequence[float],
    blips: Sequence[float | None] = (),
) -> MetricsReport:
    precision, recall = knn_precision_recall(real, fake, k)
    blip_values = [b for b in blips if b is not None]
    report = MetricsReport(
        n_real=len(real),
        n_fake=len(fake),
        k=k,
        fid_star=frechet_features(real, fake),
        precision_star=precision,
        recall=recall,
        lpips_mean=pairwise_diversity_features(fake),
        vendi=vendi(fake),
        alignment_mean=float(np.mean(alignments)) if len(alignments) else 0.0,
        blip=float(np.mean(blip_values)) if blip_values and len(blip_values) == len(blips) else None,
    )
    log_with_payload(
        logging.INFO,
        LogMsg.METRICS_DONE,
        n_fake=report.n_fake,
        fid=report.fid_star,
        precision=report.precision_star,
        recall=report.recall,
    )
    return report


def build_report(
    real_images: Sequence[Image],
    fake_images: Sequence[Image],
    baselines: Sequence[Image],
    e: Embedder,
    k: int,
    bundle: ScorerBundle,
    conditioning: ConditioningSpec,
) -> MetricsReport:
    """
    Full report with the plain set as ``real_images`` and the amplified set as ``fake_images``.

    ``alignment_mean`` scores each fake image against the same-seed baseline.
    """
    scores = [
        bundle.score(image, UsabilityContext(conditioning=conditioning, baseline_image=baseline))
        for image, baseline in zip(fake_images, baselines)
    ]
    return report_from_features(
        embed_images(real_images, e),
        embed_images(fake_images, e),
        k,
        [s.alignment for s in scores],
        [s.blip for s in scores],
    )
