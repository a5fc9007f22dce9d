"""Artifact writers: PPM images, CSV/JSON reports, SVG line plots and run manifests."""

import hashlib
import json
import logging
from collections.abc import Iterator, Mapping, Sequence
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from config import CONFIG
from constants import FileMode, FormatStrings, LogMsg
from exceptions import ExperimentIOError
from log_utils import ErrorPayload, log_with_payload
from toy_denoiser import Image

SVG_WIDTH = 640
SVG_HEIGHT = 400
SVG_MARGIN = 56
SVG_TICKS = 5
SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@contextmanager
def guarded_write(path: Path) -> Iterator[Path]:
    """Turns OS-level failures while producing ``path`` into ExperimentIOError."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        yield path
    except OSError as e:
        message = LogMsg.EXPERIMENT_IO_FAIL.format(path=path, error=e)
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise ExperimentIOError(message) from e


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(config: BaseModel) -> str:
    """SHA-256 of the config's canonical JSON; key order does not matter."""
    canonical = canonical_json(config.model_dump(mode="json"))
    return hashlib.sha256(canonical.encode(FormatStrings.ENCODING_UTF8)).hexdigest()


def to_bytes(image: Image) -> np.ndarray:
    """8-bit pixels (H, W, 3), value = round(255 * v)."""
    scaled = np.round(255.0 * np.clip(image.data.astype(np.float64), 0.0, 1.0))
    return scaled.astype(np.uint8).transpose(1, 2, 0)


def write_ppm(path: Path, image: Image) -> Path:
    pixels = to_bytes(image)
    height, width, _ = pixels.shape
    with guarded_write(path):
        with path.open(FileMode.WRITE_BINARY) as handle:
            handle.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
            handle.write(np.ascontiguousarray(pixels).tobytes())
    return path


def read_ppm(path: Path) -> np.ndarray:
    """Reads a binary P6 file written by write_ppm back into (H, W, 3) uint8."""
    raw = Path(path).read_bytes()
    magic, size, maxval, payload = raw.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ExperimentIOError(LogMsg.EXPERIMENT_IO_FAIL.format(path=path, error="not an 8-bit P6 file"))
    width, height = (int(v) for v in size.split())
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)


def write_csv(path: Path, rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> Path:
    """Fixed column order, 6 significant digits, LF line endings."""
    frame = pd.DataFrame(list(rows), columns=list(columns))
    with guarded_write(path):
        frame.to_csv(
            path,
            index=False,
            float_format=CONFIG.csv_float_format,
            lineterminator="\n",
            encoding=FormatStrings.ENCODING_UTF8,
        )
    return path


def write_json(path: Path, data: Any) -> Path:
    with guarded_write(path):
        path.write_text(
            json.dumps(data, indent=CONFIG.json_indent) + "\n",
            encoding=FormatStrings.ENCODING_UTF8,
        )
    return path


def read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding=FormatStrings.ENCODING_UTF8))
    except (OSError, json.JSONDecodeError) as e:
        message = LogMsg.EXPERIMENT_IO_FAIL.format(path=path, error=e)
        log_with_payload(logging.ERROR, message, payload=ErrorPayload(error_message=message))
        raise ExperimentIOError(message) from e


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def write_svg_plot(
    path: Path,
    series: Mapping[str, Sequence[tuple[float, float]]],
    title: str,
    x_label: str,
    y_label: str,
) -> Path:
    """One polyline per series with ticks on both axes."""
    points = [p for values in series.values() for p in values]
    xs = [p[0] for p in points] or [0.0, 1.0]
    ys = [p[1] for p in points] or [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    plot_w = SVG_WIDTH - 2 * SVG_MARGIN
    plot_h = SVG_HEIGHT - 2 * SVG_MARGIN

    def sx(x: float) -> float:
        return SVG_MARGIN + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return SVG_HEIGHT - SVG_MARGIN - (y - y_lo) / (y_hi - y_lo) * plot_h

    bottom = SVG_HEIGHT - SVG_MARGIN
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<text x="{SVG_WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{SVG_MARGIN}" y1="{bottom}" x2="{SVG_WIDTH - SVG_MARGIN}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{SVG_MARGIN}" y1="{SVG_MARGIN}" x2="{SVG_MARGIN}" y2="{bottom}" stroke="black"/>',
    ]
    for i in range(SVG_TICKS + 1):
        x_value = x_lo + (x_hi - x_lo) * i / SVG_TICKS
        y_value = y_lo + (y_hi - y_lo) * i / SVG_TICKS
        tx, ty = sx(x_value), sy(y_value)
        lines.append(f'<line x1="{_fmt(tx)}" y1="{bottom}" x2="{_fmt(tx)}" y2="{bottom + 5}" stroke="black"/>')
        lines.append(f'<text x="{_fmt(tx)}" y="{bottom + 18}" text-anchor="middle">{_fmt(x_value)}</text>')
        lines.append(f'<line x1="{SVG_MARGIN - 5}" y1="{_fmt(ty)}" x2="{SVG_MARGIN}" y2="{_fmt(ty)}" stroke="black"/>')
        lines.append(f'<text x="{SVG_MARGIN - 8}" y="{_fmt(ty + 4)}" text-anchor="end">{_fmt(y_value)}</text>')
    lines.append(f'<text x="{SVG_WIDTH / 2}" y="{SVG_HEIGHT - 12}" text-anchor="middle">{x_label}</text>')
    lines.append(
        f'<text x="16" y="{SVG_HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 16 {SVG_HEIGHT / 2})">{y_label}</text>'
    )
    for index, (name, values) in enumerate(series.items()):
        color = SVG_COLORS[index % len(SVG_COLORS)]
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in values)
        lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        lines.append(
            f'<text x="{SVG_WIDTH - SVG_MARGIN + 4}" y="{SVG_MARGIN + 14 * index}" fill="{color}">{name}</text>'
        )
    lines.append("</svg>")
    with guarded_write(path):
        path.write_text("\n".join(lines) + "\n", encoding=FormatStrings.ENCODING_UTF8)
    return path


class RunManifest(BaseModel):
    """What a subcommand produced, and under which config."""

    command: str
    config_hash: str
    tool_version: str = Field(default_factory=lambda: CONFIG.tool_version)
    timestamp: str = Field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(
            timespec=FormatStrings.TIMESTAMP_ISO_SECONDS
        )
    )
    files: list[str] = Field(default_factory=list)

    def write(self, path: Path) -> Path:
        return write_json(path, self.model_dump(mode="json"))
