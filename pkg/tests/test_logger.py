"""Tests for the logger module."""

import json
import logging
import sys

import pytest
from rich.logging import RichHandler

from tfcl.config import LoggingConfig
from tfcl.logger import JsonFormatter, get_logger, setup_logging


@pytest.fixture(autouse=True)
def reset_tfcl_logger():
    """Detach handlers added by a test."""
    yield
    logger = logging.getLogger("tfcl")
    for handler in logger.handlers:
        handler.close()
    logger.handlers.clear()
    logger.setLevel(logging.NOTSET)


class TestSetupLogging:
    """Test cases for setup_logging."""

    def test_configured_level(self):
        """Test that the configured level is applied."""
        logger = setup_logging(LoggingConfig(level="WARNING"))

        assert logger.name == "tfcl"
        assert logger.level == logging.WARNING

    def test_verbose_forces_debug(self):
        """Test that -v overrides the configured level."""
        logger = setup_logging(LoggingConfig(level="ERROR"), verbose_level=1)

        assert logger.level == logging.DEBUG

    def test_rich_console_handler(self):
        """Test that text formats log through Rich."""
        logger = setup_logging(LoggingConfig(format="detailed"))

        assert len(logger.handlers) == 1
        assert isinstance(logger.handlers[0], RichHandler)

    def test_json_console_handler(self):
        """Test that the JSON format uses a plain stream handler."""
        logger = setup_logging(LoggingConfig(format="json"))

        assert not isinstance(logger.handlers[0], RichHandler)
        assert isinstance(logger.handlers[0].formatter, JsonFormatter)

    def test_no_console(self):
        """Test that console=False attaches no handler."""
        logger = setup_logging(LoggingConfig(console=False))

        assert logger.handlers == []

    def test_file_handler(self, temp_dir):
        """Test that records reach the log file."""
        path = temp_dir / "logs" / "tfcl.log"
        setup_logging(LoggingConfig(format="simple", console=False, file=str(path)))

        get_logger("solver").info("Fit finished")
        for handler in logging.getLogger("tfcl").handlers:
            handler.flush()

        assert path.read_text(encoding="utf-8").strip() == "INFO: Fit finished"

    def test_repeated_setup_does_not_duplicate(self):
        """Test that a second call replaces the handlers."""
        setup_logging(LoggingConfig())
        logger = setup_logging(LoggingConfig())

        assert len(logger.handlers) == 1


class TestJsonFormatter:
    """Test cases for JsonFormatter."""

    def test_fields(self):
        """Test that a record becomes one JSON object."""
        record = logging.LogRecord(
            "tfcl.core", logging.WARNING, "core.py", 10, "gap %s", ("0",), None
        )

        data = json.loads(JsonFormatter().format(record))

        assert data["level"] == "WARNING"
        assert data["logger"] == "tfcl.core"
        assert data["message"] == "gap 0"
        assert data["line"] == 10
        assert "exception" not in data

    def test_exception(self):
        """Test that exception info is included."""
        try:
            raise ValueError("boom")
        except ValueError:
            record = logging.LogRecord(
                "tfcl", logging.ERROR, "x.py", 1, "failed", None, sys.exc_info()
            )

        data = json.loads(JsonFormatter().format(record))

        assert "ValueError: boom" in data["exception"]


class TestGetLogger:
    """Test cases for get_logger."""

    @pytest.mark.parametrize("name", ["solver", "tfcl.solver"])
    def test_namespace(self, name):
        """Test that loggers live under tfcl."""
        assert get_logger(name).name == "tfcl.solver"
