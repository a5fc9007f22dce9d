"""Structured log records: a formatted message plus a truncated pydantic payload in ``extra``."""

import json
import logging
from collections.abc import Mapping
from typing import Any

from pydantic import BaseModel

from config import CONFIG
from constants import FormatStrings, LogMsg

logger = logging.getLogger(__name__)

PAYLOAD_ATTR = "struct_payload"
RAW_PAYLOAD_KEY = "payload_data"


class LogPayloadBase(BaseModel):
    """Base for structured payloads; fields left at ``None`` stay out of the record."""

    def fields(self) -> dict[str, Any]:
        return self.model_dump(exclude_none=True)


class FileOperationPayload(LogPayloadBase):
    file_path: str | None = None


class TensorFilePayload(FileOperationPayload):
    """Tensor file reads and writes."""

    dims: list[int] | None = None
    offset: int | None = None


class SamplingPayload(LogPayloadBase):
    """One denoiser sampling run."""

    seed: int | None = None
    steps: int | None = None
    hook_mode: str | None = None
    concept: str | None = None


class SearchPayload(LogPayloadBase):
    """Amplification-factor search progress."""

    block: str | None = None
    lambda_value: float | None = None
    usability: float | None = None
    threshold: float | None = None
    feasible: bool | None = None


class ScorerPayload(LogPayloadBase):
    """Remote scorer calls."""

    endpoint: str | None = None
    concept: str | None = None
    attempt: int | None = None


class ExperimentPayload(FileOperationPayload):
    """Experiment subcommand runs."""

    command: str | None = None
    config_hash: str | None = None
    file_count: int | None = None


class ErrorPayload(LogPayloadBase):
    error_message: str | None = None


class FormatErrorPayload(ErrorPayload):
    """A log template that could not be formatted."""

    missing_key: str | None = None
    template: str | None = None


def truncate_string(text: str | bytes, max_length: int) -> str:
    """Text form of ``text`` cut to ``max_length`` characters, suffix included."""
    if isinstance(text, bytes):
        text = text.decode(FormatStrings.ENCODING_UTF8, errors=FormatStrings.ENCODING_ERRORS_REPLACE)
    text = str(text)
    if len(text) <= max_length:
        return text
    suffix = FormatStrings.TRUNCATION_SUFFIX
    keep = max(max_length, len(suffix)) - len(suffix)
    return text[:keep] + suffix


def _clip(value: Any, max_len: int) -> Any:
    if isinstance(value, (str, bytes)):
        return truncate_string(value, max_len)
    if isinstance(value, (list, tuple, set, dict)):
        return truncate_string(json.dumps(value, default=str), max_len)
    return value


def _prepare_log_payload(
    payload: LogPayloadBase | Mapping[str, Any] | None, max_len: int
) -> dict[str, Any]:
    """Flat dict for ``extra``: strings and containers truncated, ``None`` values dropped."""
    if payload is None:
        return {}
    if isinstance(payload, LogPayloadBase):
        fields = payload.fields()
    elif isinstance(payload, Mapping):
        fields = {key: value for key, value in payload.items() if value is not None}
    else:
        return {RAW_PAYLOAD_KEY: truncate_string(str(payload), max_len)}
    return {key: _clip(value, max_len) for key, value in fields.items()}


def _format_message(template: LogMsg | str, kwargs: dict[str, Any], max_len: int) -> str:
    try:
        return str(template).format(**kwargs)
    except (KeyError, IndexError, ValueError) as e:
        warning = LogMsg.LOG_MISSING_FORMAT_KEY.format(key=e, template=template)
        details = FormatErrorPayload(error_message=warning, missing_key=str(e), template=str(template))
        logger.warning(warning, extra={PAYLOAD_ATTR: _prepare_log_payload(details, max_len)})
        return str(template)


def log_with_payload(
    level: int,
    msg_template: LogMsg | str,
    payload: LogPayloadBase | Mapping[str, Any] | None = None,
    exc_info: bool = False,
    **kwargs: Any,
) -> None:
    """
    Logs ``msg_template`` formatted with ``kwargs`` and attaches ``payload``.

    The payload lands in ``record.struct_payload``. A template that cannot be
    formatted is logged verbatim after a warning; logging never raises.

    Args:
        level: Logging level, e.g. ``logging.INFO``.
        msg_template: A ``LogMsg`` member or a preformatted string.
        payload: Pydantic payload model or plain mapping.
        exc_info: Attach the active exception.
        **kwargs: Values for the template placeholders only.
    """
    if not logger.isEnabledFor(level):
        return
    max_len = CONFIG.log_config.truncate_length
    message = _format_message(msg_template, kwargs, max_len)
    logger.log(
        level,
        message,
        exc_info=exc_info,
        extra={PAYLOAD_ATTR: _prepare_log_payload(payload, max_len)},
    )
