import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from config import AppConfig
from constants import PathName


def test_defaults(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("C3_SCORER_ENDPOINT", "C3_OUT_DIR", "C3_LOG_CONFIG__LEVEL"):
        monkeypatch.delenv(name, raising=False)
    cfg = AppConfig()
    assert cfg.scorer_endpoint is None
    assert cfg.out_dir == Path(PathName.OUT_DIR)
    assert cfg.csv_float_format == "%.6g"
    assert cfg.log_config.level == "INFO"


def test_environment_overrides_with_nested_keys(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("C3_SCORER_ENDPOINT", "http://127.0.0.1:9999")
    monkeypatch.setenv("C3_LOG_CONFIG__TRUNCATE_LENGTH", "40")
    cfg = AppConfig()
    assert cfg.scorer_endpoint == "http://127.0.0.1:9999"
    assert cfg.log_config.truncate_length == 40


def test_dotenv_file_is_read(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("C3_JSON_INDENT", raising=False)
    (tmp_path / ".env").write_text("C3_JSON_INDENT=4\n")
    assert AppConfig().json_indent == 4
