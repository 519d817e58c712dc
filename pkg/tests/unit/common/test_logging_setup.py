"""Tests for logging setup functionality."""

import logging
import logging.handlers
import os
import sys
from unittest.mock import Mock, patch

import pytest

from common.logging_setup import (
    DEFAULT_LOG_BACKUP_COUNT,
    DEFAULT_LOG_FILENAME_FORMAT,
    DEFAULT_LOG_MAX_BYTES,
    setup_logging,
)


def _close_handlers(logger: logging.Logger) -> None:
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()


class TestLoggingSetup:
    """Test logging setup and file output."""

    def test_should_setup_logging_with_default_values(self, temp_dir):
        """Should set up a file handler and a console handler."""
        # Arrange & Act
        logger = setup_logging("test_app", log_dir=temp_dir)

        # Assert
        assert logger.level == logging.INFO
        assert logger.name == "test_app"
        assert len(logger.handlers) == 2
        _close_handlers(logger)

    def test_should_use_custom_filename_format(self, temp_dir):
        """Should name the log file from the given strftime format."""
        # Arrange & Act
        logger = setup_logging(
            app_name="custom_app",
            log_filename_format="custom_%Y.log",
            log_max_bytes=5 * 1024 * 1024,
            log_backup_count=3,
            log_dir=temp_dir,
        )

        # Assert
        log_files = [f for f in os.listdir(temp_dir) if f.endswith(".log")]
        assert len(log_files) == 1
        assert log_files[0].startswith("custom_")
        file_handler = next(
            h for h in logger.handlers if isinstance(h, logging.handlers.RotatingFileHandler)
        )
        assert file_handler.maxBytes == 5 * 1024 * 1024
        assert file_handler.backupCount == 3
        _close_handlers(logger)

    def test_should_create_log_directory_if_not_exists(self, temp_dir):
        """Should create a missing log directory."""
        # Arrange
        log_dir = os.path.join(temp_dir, "logs", "subdir")

        # Act
        logger = setup_logging("test_app", log_dir=log_dir)

        # Assert
        assert os.path.isdir(log_dir)
        _close_handlers(logger)

    def test_should_send_console_output_to_stderr(self, temp_dir):
        """Should keep stdout free for reports."""
        # Arrange & Act
        logger = setup_logging("test_app", log_dir=temp_dir)

        # Assert
        streams = [
            h.stream
            for h in logger.handlers
            if isinstance(h, logging.StreamHandler)
            and not isinstance(h, logging.handlers.RotatingFileHandler)
        ]
        assert streams == [sys.stderr]
        _close_handlers(logger)

    @pytest.mark.parametrize(
        "message_content",
        [
            "Test message",
            "iter 100: primal=1.0 dual=0.99 gap=1.000e-02",
            "Γ faces: 128, φ⁰ ≤ 1",  # Unicode
            "A" * 10000,  # Very long message
        ],
    )
    def test_should_write_various_log_messages_to_file(self, temp_dir, message_content):
        """Should write log messages to the log file."""
        # Arrange
        logger = setup_logging("test_app", log_dir=temp_dir)

        # Act
        logger.info(message_content)
        for handler in logger.handlers:
            handler.flush()

        # Assert
        log_files = [f for f in os.listdir(temp_dir) if f.endswith(".log")]
        assert len(log_files) == 1
        with open(os.path.join(temp_dir, log_files[0]), "r", encoding="utf-8") as f:
            assert message_content[:100] in f.read()
        _close_handlers(logger)


class TestLoggingConfiguration:
    """Test logging configuration defaults and repeated setup."""

    def test_should_use_default_constants(self):
        """Should expose the documented defaults."""
        # Assert
        assert DEFAULT_LOG_FILENAME_FORMAT == "application_%Y%m%d_%H%M%S.log"
        assert DEFAULT_LOG_MAX_BYTES == 10 * 1024 * 1024  # 10MB
        assert DEFAULT_LOG_BACKUP_COUNT == 5

    def test_should_clear_existing_handlers(self, temp_dir):
        """Should not accumulate handlers on repeated setup."""
        # Arrange
        logger1 = setup_logging("test_app", log_dir=temp_dir)
        initial_handler_count = len(logger1.handlers)

        # Act
        logger2 = setup_logging("test_app", log_dir=temp_dir)

        # Assert
        assert logger1 is logger2
        assert len(logger2.handlers) == initial_handler_count
        _close_handlers(logger2)

    def test_should_respect_console_level(self, temp_dir):
        """Should apply the console threshold to the console handler only."""
        # Arrange & Act
        logger = setup_logging("test_app", log_dir=temp_dir, console_level=logging.WARNING)

        # Assert
        levels = {type(h).__name__: h.level for h in logger.handlers}
        assert levels["StreamHandler"] == logging.WARNING
        assert levels["RotatingFileHandler"] == logging.INFO
        _close_handlers(logger)

    @patch("common.logging_setup.datetime")
    def test_should_use_timestamped_log_filename(self, mock_datetime, temp_dir):
        """Should build the filename from the current time."""
        # Arrange
        mock_now = Mock()
        mock_now.strftime.return_value = "test_20240101_120000.log"
        mock_datetime.datetime.now.return_value = mock_now

        # Act
        logger = setup_logging("test_app", log_dir=temp_dir)

        # Assert
        mock_now.strftime.assert_called_once()
        call_args = mock_now.strftime.call_args[0][0]
        assert "%Y" in call_args and "%m" in call_args and "%d" in call_args
        assert os.path.exists(os.path.join(temp_dir, "test_20240101_120000.log"))
        _close_handlers(logger)
