import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from constants import LogMsg
from log_utils import (
    ErrorPayload,
    SearchPayload,
    _prepare_log_payload,
    log_with_payload,
    truncate_string,
)


def test_truncate_string():
    assert truncate_string("short", 10) == "short"
    assert truncate_string("x" * 20, 10) == "x" * 7 + "..."
    assert truncate_string(b"bytes", 10) == "bytes"


def test_prepare_payload_drops_none_and_truncates():
    payload = _prepare_log_payload(ErrorPayload(error_message="e" * 50), 10)
    assert payload == {"error_message": "e" * 7 + "..."}
    assert _prepare_log_payload(SearchPayload(block="Down0", lambda_value=None), 10) == {"block": "Down0"}
    assert _prepare_log_payload(None, 10) == {}


def test_log_with_payload_formats_and_attaches(caplog):
    with caplog.at_level(logging.INFO, logger="log_utils"):
        log_with_payload(
            logging.INFO,
            LogMsg.SEARCH_DONE,
            payload=SearchPayload(block="Mid", lambda_value=2.0),
            lam=2.0,
            block="Mid",
        )
    record = caplog.records[-1]
    assert record.getMessage() == "Selected lambda*=2 for Mid."
    assert record.struct_payload == {"block": "Mid", "lambda_value": 2.0}


def test_log_with_payload_missing_key_warns_without_raising(caplog):
    with caplog.at_level(logging.INFO, logger="log_utils"):
        log_with_payload(logging.INFO, LogMsg.SEARCH_DONE, block="Mid")
    levels = [r.levelno for r in caplog.records]
    assert logging.WARNING in levels
    assert caplog.records[-1].getMessage() == str(LogMsg.SEARCH_DONE)


def test_log_with_payload_survives_braces_in_preformatted_text(caplog):
    with caplog.at_level(logging.ERROR, logger="log_utils"):
        log_with_payload(logging.ERROR, "input_value={} was bad")
    assert caplog.records[-1].getMessage() == "input_value={} was bad"
