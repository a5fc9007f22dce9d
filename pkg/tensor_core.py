"""Feature-map tensors, per-channel 2D DFT, seeded RNG streams and the C3TF tensor file format."""

import hashlib
import logging
import struct
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from constants import FileMode, LogMsg, TensorFileSpec, Tolerance
from exceptions import DimensionError, DomainError, SymmetryViolationError, TensorFormatError
from log_utils import ErrorPayload, TensorFilePayload, log_with_payload

HEADER_SIZE = struct.calcsize(TensorFileSpec.HEADER_FMT)
DIM_SIZE = struct.calcsize(TensorFileSpec.DIM_FMT)
VALUE_SIZE = np.dtype(TensorFileSpec.PAYLOAD_DTYPE).itemsize


def is_power_of_two(n: int) -> bool:
    """True for 2, 4, 8, ... (1 is rejected: a 1-pixel axis has no frequencies to split)."""
    return n >= 2 and (n & (n - 1)) == 0


def check_spatial_dims(height: int, width: int) -> None:
    if not (is_power_of_two(height) and is_power_of_two(width)):
        message = LogMsg.DIM_NOT_POW2.format(height=height, width=width)
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise DimensionError(message)


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class FeatureMap(BaseModel):
    """A real-valued block activation, shaped (channels, height, width), stored as float32."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        array = np.array(value, dtype=np.float32, order="C", copy=True)
        if array.ndim != 3:
            raise DimensionError(LogMsg.TENSOR_RANK.format(expected=3, rank=array.ndim))
        check_spatial_dims(array.shape[1], array.shape[2])
        if not np.all(np.isfinite(array)):
            raise DomainError(LogMsg.NON_FINITE)
        return _freeze(array)

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)


class Spectrum(BaseModel):
    """Per-channel 2D DFT coefficients in unshifted layout (index (0, 0) is DC), stored as complex64."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        array = np.array(value, dtype=np.complex64, order="C", copy=True)
        if array.ndim != 3:
            raise DimensionError(LogMsg.TENSOR_RANK.format(expected=3, rank=array.ndim))
        check_spatial_dims(array.shape[1], array.shape[2])
        return _freeze(array)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)  # type: ignore[return-value]


def fft2(x: FeatureMap) -> Spectrum:
    """Unnormalized forward DFT over the two spatial axes of every channel."""
    check_spatial_dims(x.height, x.width)
    coefficients = np.fft.fft2(x.data.astype(np.float64), axes=(-2, -1))
    return Spectrum(data=coefficients)


def ifft2(f: Spectrum) -> FeatureMap:
    """
    Inverse DFT with 1/(H*W) normalization, keeping the real part.

    Raises:
        SymmetryViolationError: if the discarded imaginary part exceeds
            ``Tolerance.IMAG_RESIDUAL`` times the RMS of the real part, which
            means the spectrum was not Hermitian.
    """
    _, height, width = f.shape
    check_spatial_dims(height, width)
    spatial = np.fft.ifft2(f.data.astype(np.complex128), axes=(-2, -1))
    real = spatial.real
    residual = float(np.max(np.abs(spatial.imag))) if spatial.size else 0.0
    rms = float(np.sqrt(np.mean(real * real))) if real.size else 0.0
    tolerance = Tolerance.IMAG_RESIDUAL * rms + 1e-12
    if residual > tolerance:
        message = LogMsg.SYMMETRY_VIOLATION.format(residual=residual, tolerance=tolerance)
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise SymmetryViolationError(message)
    return FeatureMap(data=real)


def spectral_energy(f: Spectrum) -> float:
    """Sum of squared magnitudes over all channels and coefficients."""
    coefficients = f.data.astype(np.complex128)
    return float(np.sum(coefficients.real**2 + coefficients.imag**2))


def stable_hash64(text: str) -> int:
    """Platform-independent 64-bit digest of a string, used to derive RNG stream ids."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """
    A seeded, single-owner random stream.

    Equal ``(seed, stream_id)`` pairs produce identical sequences on every
    platform; the counter tracks how many values were drawn so far.
    """

    def __init__(self, seed: int, stream_id: int) -> None:
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        self.counter = 0
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def normal(self, shape: int | tuple[int, ...], scale: float = 1.0) -> np.ndarray:
        values = self._generator.standard_normal(shape) * scale
        self.counter += int(np.prod(shape))
        return values

    def uniform(self, shape: int | tuple[int, ...]) -> np.ndarray:
        values = self._generator.random(shape)
        self.counter += int(np.prod(shape))
        return values


def _format_error(message: str, offset: int, path: Path) -> TensorFormatError:
    log_with_payload(
        logging.ERROR,
        message,
        payload=TensorFilePayload(file_path=str(path), offset=offset),
    )
    return TensorFormatError(message, offset)


def write_tensor_file(path: str | Path, array: np.ndarray) -> None:
    """Writes an array of any rank as a C3TF file (little-endian float32 payload)."""
    path = Path(path)
    values = np.ascontiguousarray(array, dtype=TensorFileSpec.PAYLOAD_DTYPE)
    header = struct.pack(
        TensorFileSpec.HEADER_FMT, TensorFileSpec.MAGIC, TensorFileSpec.VERSION, values.ndim
    )
    dims = b"".join(struct.pack(TensorFileSpec.DIM_FMT, d) for d in values.shape)
    with path.open(FileMode.WRITE_BINARY) as handle:
        handle.write(header + dims + values.tobytes(order="C"))
    log_with_payload(
        logging.DEBUG,
        LogMsg.TENSOR_SAVED,
        payload=TensorFilePayload(file_path=str(path), dims=list(values.shape)),
        dims=list(values.shape),
        path=path,
    )


def read_tensor_file(path: str | Path) -> np.ndarray:
    """
    Reads a C3TF file of any rank.

    Raises:
        TensorFormatError: on bad magic, unsupported version, truncated or
            oversized payload. ``offset`` is the byte position where parsing failed.
    """
    path = Path(path)
    with path.open(FileMode.READ_BINARY) as handle:
        raw = handle.read()

    if len(raw) < HEADER_SIZE:
        raise _format_error(
            LogMsg.TENSOR_TRUNCATED.format(expected=HEADER_SIZE, offset=0, found=len(raw)),
            0,
            path,
        )
    magic, version, rank = struct.unpack_from(TensorFileSpec.HEADER_FMT, raw, 0)
    if magic != TensorFileSpec.MAGIC:
        raise _format_error(LogMsg.TENSOR_BAD_MAGIC.format(magic=magic, offset=0), 0, path)
    if version != TensorFileSpec.VERSION:
        raise _format_error(LogMsg.TENSOR_BAD_VERSION.format(version=version, offset=4), 4, path)

    dims_end = HEADER_SIZE + rank * DIM_SIZE
    if len(raw) < dims_end:
        raise _format_error(
            LogMsg.TENSOR_TRUNCATED.format(
                expected=rank * DIM_SIZE, offset=HEADER_SIZE, found=len(raw) - HEADER_SIZE
            ),
            HEADER_SIZE,
            path,
        )
    dims = tuple(
        struct.unpack_from(TensorFileSpec.DIM_FMT, raw, HEADER_SIZE + i * DIM_SIZE)[0]
        for i in range(rank)
    )

    expected = int(np.prod(dims, dtype=np.int64)) * VALUE_SIZE
    found = len(raw) - dims_end
    if found < expected:
        raise _format_error(
            LogMsg.TENSOR_TRUNCATED.format(expected=expected, offset=dims_end, found=found),
            dims_end + found,
            path,
        )
    if found > expected:
        raise _format_error(
            LogMsg.TENSOR_TRAILING.format(expected=expected, offset=dims_end, found=found),
            dims_end + expected,
            path,
        )

    values = np.frombuffer(raw, dtype=TensorFileSpec.PAYLOAD_DTYPE, offset=dims_end)
    array = values.astype(np.float32).reshape(dims)
    log_with_payload(
        logging.DEBUG,
        LogMsg.TENSOR_LOADED,
        payload=TensorFilePayload(file_path=str(path), dims=list(dims)),
        dims=list(dims),
        path=path,
    )
    return array


def save_tensor(path: str | Path, x: FeatureMap) -> None:
    write_tensor_file(path, x.data)


def load_tensor(path: str | Path) -> FeatureMap:
    """Reads a rank-3 C3TF file into a FeatureMap."""
    array = read_tensor_file(path)
    if array.ndim != 3:
        raise _format_error(
            LogMsg.TENSOR_RANK.format(expected=3, rank=array.ndim), HEADER_SIZE - 1, Path(path)
        )
    return FeatureMap(data=array)


def box_resize(plane: np.ndarray, size: int) -> np.ndarray:
    """Box-average the last two (square, power-of-two) axes down to ``size``, or repeat them up when smaller."""
    n = plane.shape[-1]
    if n >= size:
        factor = n // size
        lead = plane.shape[:-2]
        return plane.reshape(*lead, size, factor, size, factor).mean(axis=(-3, -1))
    factor = size // n
    return plane.repeat(factor, axis=-2).repeat(factor, axis=-1)
