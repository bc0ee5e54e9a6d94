import logging
from collections.abc import Iterator
from pathlib import Path
from typing import Any

import pytest

from climadapt import logging as climadapt_logging


@pytest.fixture(autouse=True)
def reset_logging() -> Iterator[None]:
    """Reset logging configuration before each test."""
    root = logging.getLogger()
    original_handlers = root.handlers[:]
    original_level = root.level

    yield

    root.handlers = original_handlers
    root.setLevel(original_level)


def test_logging_level_production(reload_settings: Any) -> None:
    """The log level is INFO outside development."""
    reload_settings({"CLIMADAPT_ENVIRONMENT": "Production"})
    logging.getLogger().handlers.clear()

    climadapt_logging.setup_logging()

    assert logging.getLogger().level == logging.INFO


def test_logging_level_development(reload_settings: Any) -> None:
    reload_settings({"CLIMADAPT_ENVIRONMENT": "development"})
    logging.getLogger().handlers.clear()

    climadapt_logging.setup_logging()

    assert logging.getLogger().level == logging.DEBUG


def test_logging_level_override() -> None:
    climadapt_logging.setup_logging(log_level_override="WARNING")

    assert logging.getLogger().level == logging.WARNING


def test_console_only_when_file_logging_disabled(reload_settings: Any) -> None:
    reload_settings({"LOGGING__FILE_LOGGING": "false"})

    log_file = climadapt_logging.setup_logging()

    assert log_file is None
    handlers = logging.getLogger().handlers
    assert len(handlers) == 1
    assert not isinstance(handlers[0], logging.FileHandler)


def test_file_handler_writes_to_log_dir(reload_settings: Any, tmp_path: Path) -> None:
    reload_settings({"LOGGING__FILE_LOGGING": "true"})

    log_file = climadapt_logging.setup_logging(script_name="train", log_dir=tmp_path)

    assert log_file is not None
    assert log_file.parent == tmp_path
    assert log_file.name.startswith("train_")
    file_handlers = [
        h for h in logging.getLogger().handlers if isinstance(h, logging.FileHandler)
    ]
    assert len(file_handlers) == 1
    assert file_handlers[0].level == logging.DEBUG
    for handler in file_handlers:
        handler.close()


def test_noisy_loggers_are_quietened() -> None:
    climadapt_logging.setup_logging(log_level_override="DEBUG")

    assert logging.getLogger("urllib3").level == logging.WARNING
