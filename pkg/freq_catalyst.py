"""Low-band amplification of feature maps in the frequency domain, plus the uniform and FreeU-style baselines."""

import logging
import math
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from constants import BlockId, LogMsg
from exceptions import DimensionError, DomainError
from log_utils import ErrorPayload, log_with_payload
from tensor_core import FeatureMap, Spectrum, check_spatial_dims, fft2, ifft2, spectral_energy

DEFAULT_CUTOFF = 0.25
FREEU_B_GRID: tuple[float, ...] = (0.8, 1.0, 1.2, 1.5)
FREEU_S_GRID: tuple[float, ...] = (0.5, 1.0, 1.5)


def check_cutoff(rho: float) -> None:
    if not (0.0 <= rho <= 1.0):
        message = LogMsg.CUTOFF_OUT_OF_RANGE.format(rho=rho)
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise DomainError(message)


class AmplificationSpec(BaseModel):
    """Amplification factor ``lam`` for the low band selected by cutoff ratio ``rho``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lam: float = Field(default=1.0)
    rho: float = Field(default=DEFAULT_CUTOFF)

    @model_validator(mode="after")
    def validate_spec(self) -> "AmplificationSpec":
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError(LogMsg.LAMBDA_INVALID.format(value=self.lam))
        if not (0.0 <= self.rho <= 1.0):
            raise ValueError(LogMsg.CUTOFF_OUT_OF_RANGE.format(rho=self.rho))
        return self


class FreeUSpec(BaseModel):
    """Uniform backbone scale ``b`` and skip low-band scale ``s``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    b: float = Field(default=1.0)
    s: float = Field(default=1.0)
    rho_skip: float = Field(default=DEFAULT_CUTOFF)

    @model_validator(mode="after")
    def validate_spec(self) -> "FreeUSpec":
        for name, value in (("b", self.b), ("s", self.s)):
            if not math.isfinite(value) or value <= 0:
                raise ValueError(LogMsg.CONFIG_NON_POSITIVE.format(field=name, value=value))
        if not (0.0 <= self.rho_skip <= 1.0):
            raise ValueError(LogMsg.CUTOFF_OUT_OF_RANGE.format(rho=self.rho_skip))
        return self


class AmplificationProfile(BaseModel):
    """
    Per-block amplification applied while sampling.

    ``scale_factors`` and ``target_sum`` are filled in when the profile comes
    out of the multi-block combination rule; hand-written profiles leave them empty.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    blocks: dict[BlockId, AmplificationSpec] = Field(default_factory=dict)
    scale_factors: dict[BlockId, float] = Field(default_factory=dict)
    target_sum: float | None = None

    def is_identity(self) -> bool:
        return all(spec.lam == 1.0 for spec in self.blocks.values())


class LowFreqMask(BaseModel):
    """Binary selector of the low band: True where a coefficient belongs to it."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    height: int
    width: int
    rho: float
    bits: np.ndarray

    @property
    def count(self) -> int:
        return int(self.bits.sum())


class SpectrumPair(BaseModel):
    model_config = ConfigDict(frozen=True)

    low: Spectrum
    high: Spectrum


def signed_frequency(n: int) -> np.ndarray:
    """Signed wrapped frequency of each DFT index: k for k <= n/2, else k - n."""
    k = np.arange(n)
    return np.where(k <= n // 2, k, k - n)


@lru_cache(maxsize=256)
def _mask_bits(height: int, width: int, rho: float) -> np.ndarray:
    fu = np.abs(2.0 * signed_frequency(height) / height)
    fv = np.abs(2.0 * signed_frequency(width) / width)
    bits = np.maximum(fu[:, None], fv[None, :]) <= rho
    bits.setflags(write=False)
    return bits


def build_low_mask(height: int, width: int, rho: float) -> LowFreqMask:
    """
    Square low-pass mask centered on DC.

    A coefficient (u, v) is kept when its larger normalized signed frequency,
    ``max(|2 u'/H|, |2 v'/W|)``, is at most ``rho``. Masks are memoized per
    ``(height, width, rho)``.
    """
    check_spatial_dims(height, width)
    check_cutoff(rho)
    return LowFreqMask(height=height, width=width, rho=rho, bits=_mask_bits(height, width, float(rho)))


def decompose(f: Spectrum, m: LowFreqMask) -> SpectrumPair:
    """Splits a spectrum into its low and high bands by exact selection."""
    _, height, width = f.shape
    if (height, width) != (m.height, m.width):
        message = LogMsg.DIM_MISMATCH.format(left=(height, width), right=(m.height, m.width))
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise DimensionError(message)
    zero = np.zeros((), dtype=f.data.dtype)
    low = np.where(m.bits[None, :, :], f.data, zero)
    high = np.where(m.bits[None, :, :], zero, f.data)
    return SpectrumPair(low=Spectrum(data=low), high=Spectrum(data=high))


def amplify_low(x: FeatureMap, spec: AmplificationSpec) -> FeatureMap:
    """Scales the low band of every channel by ``spec.lam`` and leaves the high band untouched."""
    mask = build_low_mask(x.height, x.width, spec.rho)
    pair = decompose(fft2(x), mask)
    amplified = spec.lam * pair.low.data.astype(np.complex128) + pair.high.data
    return ifft2(Spectrum(data=amplified))


def amplify_uniform(x: FeatureMap, lam: float) -> FeatureMap:
    """All-band amplification: a plain scalar multiply, no transform."""
    if lam == 1.0:
        return x
    return FeatureMap(data=x.data * lam)


def high_band_energy(x: FeatureMap, rho: float) -> float:
    """Share of spectral energy outside the low band of ``rho``; 0 for an all-zero map."""
    f = fft2(x)
    total = spectral_energy(f)
    if total == 0.0:
        return 0.0
    pair = decompose(f, build_low_mask(x.height, x.width, rho))
    return spectral_energy(pair.high) / total


def freeu_transform(
    backbone: FeatureMap, skip: FeatureMap, spec: FreeUSpec
) -> tuple[FeatureMap, FeatureMap]:
    """Scales the backbone uniformly by ``b`` and the low band of the skip feature by ``s``."""
    new_backbone = amplify_uniform(backbone, spec.b)
    if spec.s == 1.0:
        return new_backbone, skip
    new_skip = amplify_low(skip, AmplificationSpec(lam=spec.s, rho=spec.rho_skip))
    return new_backbone, new_skip
