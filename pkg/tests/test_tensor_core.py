import struct
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from exceptions import DimensionError, DomainError, SymmetryViolationError, TensorFormatError
from tensor_core import (
    HEADER_SIZE,
    FeatureMap,
    RngStream,
    Spectrum,
    box_resize,
    fft2,
    ifft2,
    is_power_of_two,
    load_tensor,
    read_tensor_file,
    save_tensor,
    spectral_energy,
    stable_hash64,
    write_tensor_file,
)


def random_map(shape=(3, 8, 8), seed=0):
    return FeatureMap(data=np.random.default_rng(seed).standard_normal(shape))


@pytest.mark.parametrize("n, expected", [(1, False), (2, True), (6, False), (16, True), (0, False)])
def test_is_power_of_two(n, expected):
    assert is_power_of_two(n) is expected


@pytest.mark.parametrize("shape", [(2, 6, 8), (1, 8, 1), (4, 8)])
def test_feature_map_rejects_bad_shapes(shape):
    with pytest.raises(DimensionError):
        FeatureMap(data=np.zeros(shape))


def test_feature_map_rejects_non_finite():
    data = np.zeros((1, 4, 4))
    data[0, 1, 1] = np.nan
    with pytest.raises(DomainError):
        FeatureMap(data=data)


def test_feature_map_is_read_only_copy():
    source = np.ones((1, 4, 4))
    x = FeatureMap(data=source)
    source[0, 0, 0] = 5.0
    assert x.data[0, 0, 0] == 1.0
    assert x.data.dtype == np.float32
    with pytest.raises(ValueError):
        x.data[0, 0, 0] = 2.0


@pytest.mark.parametrize("shape", [(1, 2, 2), (3, 8, 8), (2, 16, 4)])
def test_fft_roundtrip(shape):
    x = random_map(shape)
    back = ifft2(fft2(x))
    assert np.max(np.abs(back.data - x.data)) < 1e-5


def test_fft_dc_of_constant_map():
    x = FeatureMap(data=np.full((1, 4, 4), 2.0))
    f = fft2(x).data
    assert f[0, 0, 0] == pytest.approx(32.0)
    assert np.max(np.abs(f[0].ravel()[1:])) < 1e-5


def test_parseval():
    x = random_map((2, 8, 8))
    energy = spectral_energy(fft2(x))
    assert energy == pytest.approx(64 * float(np.sum(x.data.astype(np.float64) ** 2)), rel=1e-5)


def test_ifft_rejects_non_hermitian_spectrum():
    data = np.zeros((1, 4, 4), dtype=np.complex64)
    data[0, 0, 1] = 10.0j
    with pytest.raises(SymmetryViolationError):
        ifft2(Spectrum(data=data))


def naive_dft(plane):
    height, width = plane.shape
    rows = np.arange(height)
    cols = np.arange(width)
    out = np.zeros((height, width), dtype=np.complex128)
    for k in range(height):
        for l in range(width):
            phase = np.exp(-2j * np.pi * np.add.outer(rows * k / height, cols * l / width))
            out[k, l] = np.sum(plane * phase)
    return out


def test_fft_matches_dft_by_definition():
    x = random_map((1, 8, 8), seed=3)
    expected = naive_dft(x.data[0].astype(np.float64))
    assert np.max(np.abs(fft2(x).data[0] - expected)) < 1e-4


def test_fft_of_unit_impulse_is_all_ones():
    data = np.zeros((1, 4, 4))
    data[0, 0, 0] = 1.0
    f = fft2(FeatureMap(data=data)).data
    assert np.max(np.abs(f - 1.0)) < 1e-6


def test_fft_of_all_ones_is_dc_delta():
    f = fft2(FeatureMap(data=np.ones((1, 8, 8)))).data.copy()
    assert f[0, 0, 0] == pytest.approx(64.0)
    f[0, 0, 0] = 0.0
    assert np.max(np.abs(f)) < 1e-5


def test_fft_is_linear():
    x, y = random_map((2, 8, 8), seed=1), random_map((2, 8, 8), seed=2)
    combined = FeatureMap(data=2.0 * x.data.astype(np.float64) - 3.0 * y.data.astype(np.float64))
    expected = 2.0 * fft2(x).data.astype(np.complex128) - 3.0 * fft2(y).data.astype(np.complex128)
    assert np.max(np.abs(fft2(combined).data - expected)) < 1e-3


def test_roundtrip_and_parseval_on_random_maps():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        x = FeatureMap(data=rng.standard_normal((8, 32, 32)))
        f = fft2(x)
        assert np.max(np.abs(ifft2(f).data - x.data)) < 1e-4
        spatial = 32 * 32 * float(np.sum(x.data.astype(np.float64) ** 2))
        assert abs(spectral_energy(f) - spatial) / spatial < 1e-5


def test_rng_streams_with_different_ids_disagree_almost_everywhere():
    a = RngStream(7, 1).normal(10_000)
    b = RngStream(7, 2).normal(10_000)
    assert np.mean(a != b) >= 0.99


def test_ifft_of_zero_spectrum_is_zero():
    back = ifft2(Spectrum(data=np.zeros((1, 4, 4), dtype=np.complex64)))
    assert not back.data.any()


def test_rng_stream_determinism_and_independence():
    a = RngStream(5, 1).normal(16)
    b = RngStream(5, 1).normal(16)
    c = RngStream(5, 2).normal(16)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rng_stream_counter():
    stream = RngStream(1, 1)
    stream.normal((2, 3))
    stream.uniform(4)
    assert stream.counter == 10


def test_stable_hash64_is_fixed():
    assert stable_hash64("chair") == stable_hash64("chair")
    assert stable_hash64("chair") != stable_hash64("car")
    assert 0 <= stable_hash64("chair") < 2**64


def test_tensor_file_layout(tmp_path):
    path = tmp_path / "x.c3t"
    x = random_map((2, 4, 8))
    save_tensor(path, x)
    raw = path.read_bytes()
    assert raw[:4] == b"C3TF"
    assert struct.unpack_from("<I", raw, 4)[0] == 1
    assert raw[8] == 3
    assert [struct.unpack_from("<I", raw, 9 + 4 * i)[0] for i in range(3)] == [2, 4, 8]
    assert len(raw) == HEADER_SIZE + 12 + 2 * 4 * 8 * 4
    assert np.array_equal(load_tensor(path).data, x.data)


def test_tensor_file_any_rank(tmp_path):
    path = tmp_path / "w.c3t"
    weights = np.arange(24, dtype=np.float32).reshape(2, 3, 2, 2)
    write_tensor_file(path, weights)
    assert np.array_equal(read_tensor_file(path), weights)


def write_valid(path):
    write_tensor_file(path, np.ones((1, 2, 2), dtype=np.float32))
    return path.read_bytes()


@pytest.mark.parametrize(
    "mutate, offset",
    [
        (lambda raw: b"XXXX" + raw[4:], 0),
        (lambda raw: raw[:4] + struct.pack("<I", 2) + raw[8:], 4),
        (lambda raw: raw[:5], 0),
        (lambda raw: raw[:12], HEADER_SIZE),
        (lambda raw: raw[:-4], HEADER_SIZE + 12 + 12),
        (lambda raw: raw + b"\x00\x00\x00\x00", HEADER_SIZE + 12 + 16),
    ],
)
def test_tensor_file_errors_carry_offset(tmp_path, mutate, offset):
    path = tmp_path / "bad.c3t"
    raw = write_valid(path)
    path.write_bytes(mutate(raw))
    with pytest.raises(TensorFormatError) as info:
        read_tensor_file(path)
    assert info.value.offset == offset


def test_load_tensor_requires_rank_three(tmp_path):
    path = tmp_path / "flat.c3t"
    write_tensor_file(path, np.zeros((4, 4), dtype=np.float32))
    with pytest.raises(TensorFormatError):
        load_tensor(path)


def test_box_resize_down_and_up():
    plane = np.arange(16, dtype=np.float64).reshape(4, 4)
    down = box_resize(plane, 2)
    assert down.shape == (2, 2)
    assert down[0, 0] == pytest.approx(np.mean([0, 1, 4, 5]))
    up = box_resize(down, 4)
    assert up.shape == (4, 4)
    assert up[1, 1] == down[0, 0]
