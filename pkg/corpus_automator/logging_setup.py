import json
import logging
import os
import sys
import time
from datetime import datetime
from logging.handlers import RotatingFileHandler
from typing import Any, Dict, Optional

from .config import Config

LOGGER_NAME = "corpus_automator"


class ColoredFormatter(logging.Formatter):
    """Colored console output formatter."""

    COLORS = {
        'DEBUG': '\033[36m',    # Cyan
        'INFO': '\033[32m',     # Green
        'WARNING': '\033[33m',  # Yellow
        'ERROR': '\033[31m',    # Red
        'CRITICAL': '\033[35m', # Magenta
    }
    RESET = '\033[0m'

    def format(self, record):
        # Work on a copy so the JSONL handler sees the plain level name
        record = logging.makeLogRecord(record.__dict__)
        color = self.COLORS.get(record.levelname, '')
        record.levelname = f"{color}{record.levelname}{self.RESET}"
        return super().format(record)


class JsonlEventFormatter(logging.Formatter):
    """One JSON object per line for records carrying an ``event`` attribute."""

    def format(self, record):
        payload: Dict[str, Any] = {
            "ts": datetime.fromtimestamp(record.created, Config.UTC).isoformat(timespec="milliseconds"),
            "level": record.levelname,
            "event": record.event,
        }
        payload.update(getattr(record, "fields", {}) or {})
        return json.dumps(payload, ensure_ascii=False, sort_keys=True, default=str)


class EventFilter(logging.Filter):
    def filter(self, record):
        return hasattr(record, 'event')


class CorpusLogger:
    """Logging setup with rotation, JSONL event accounting and timing records."""

    def __init__(self, name: str = LOGGER_NAME, level: int = logging.INFO):
        self.name = name
        self.level = level
        self.logger = logging.getLogger(self.name)
        self.logger.setLevel(self.level)
        self.logger.propagate = True

    def configure(self, log_dir: Optional[str] = None, events_path: Optional[str] = None,
                  console: bool = True):
        """Attach file, console and event handlers. Safe to call repeatedly."""
        self.close()
        self.logger.setLevel(self.level)

        if log_dir:
            Config.ensure_directories(log_dir)
            self._add_file_handler(log_dir)
        if console:
            self._add_console_handler()
        if events_path:
            self._add_event_handler(events_path)

        # Our own handlers print; avoid duplicates through the root logger
        self.logger.propagate = not self.logger.handlers
        self.logger.debug(f"Logger configured: {self.name}")

    def _add_file_handler(self, log_dir: str):
        """Add rotating file handler for general logs."""
        handler = RotatingFileHandler(
            Config.get_log_file_path(log_dir),
            maxBytes=Config.MAX_LOG_SIZE_MB * 1024 * 1024,
            backupCount=Config.LOG_BACKUP_COUNT,
            encoding='utf-8'
        )
        formatter = logging.Formatter(
            '%(asctime)s [%(levelname)-8s] [%(threadName)-12s] %(name)s: %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        handler.setFormatter(formatter)
        handler.setLevel(logging.DEBUG)
        self.logger.addHandler(handler)

    def _add_console_handler(self):
        """Add colored console handler."""
        handler = logging.StreamHandler(sys.stderr)
        formatter = ColoredFormatter(
            '%(asctime)s [%(levelname)-8s] %(name)s: %(message)s',
            datefmt='%H:%M:%S'
        )
        handler.setFormatter(formatter)
        handler.setLevel(self.level)
        self.logger.addHandler(handler)

    def _add_event_handler(self, events_path: str):
        """Add JSONL handler for machine-checkable skip/error accounting."""
        directory = os.path.dirname(events_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        handler = logging.FileHandler(events_path, encoding='utf-8')
        handler.setFormatter(JsonlEventFormatter())
        handler.addFilter(EventFilter())
        handler.setLevel(logging.DEBUG)
        self.logger.addHandler(handler)

    def close(self):
        for handler in list(self.logger.handlers):
            self.logger.removeHandler(handler)
            handler.close()

    def log_event(self, event: str, level: int = logging.INFO, message: Optional[str] = None, **fields):
        """Log a structured event; the console shows ``message`` or a summary."""
        if message is None:
            details = " ".join(f"{k}={v}" for k, v in fields.items())
            message = f"{event} {details}".strip()
        self.logger.log(level, message, extra={'event': event, 'fields': fields})

    def log_performance(self, operation: str, duration: float, subject: Optional[str] = None, **kwargs):
        """Log a timing record as a ``timing`` event."""
        self.log_event("timing", logging.DEBUG,
                       message=f"{operation} took {duration:.3f}s" + (f" for {subject}" if subject else ""),
                       operation=operation, duration_s=round(duration, 6), subject=subject, **kwargs)

    def get_logger(self):
        """Get the configured logger instance."""
        return self.logger


class TimingContext:
    """Context manager for timing operations and logging performance."""

    def __init__(self, logger_instance: CorpusLogger, operation: str, subject: Optional[str] = None):
        self.logger = logger_instance
        self.operation = operation
        self.subject = subject
        self.start_time = None

    def __enter__(self):
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        duration = time.perf_counter() - self.start_time
        if exc_type is None:
            self.logger.log_performance(self.operation, duration, self.subject)
        else:
            self.logger.logger.debug(f"Failed {self.operation} after {duration:.3f}s"
                                     + (f" for {self.subject}" if self.subject else "")
                                     + f": {exc_val}")
        return False


_logger_manager = CorpusLogger()
logger = _logger_manager.get_logger()


def setup_logger(level: int = logging.INFO, log_dir: Optional[str] = None,
                 events_path: Optional[str] = None, console: bool = True) -> logging.Logger:
    """Configure and return the package logger."""
    _logger_manager.level = level
    _logger_manager.configure(log_dir=log_dir, events_path=events_path, console=console)
    return _logger_manager.get_logger()


def shutdown_logger():
    _logger_manager.close()
    _logger_manager.logger.propagate = True


def log_event(event: str, level: int = logging.INFO, message: Optional[str] = None, **fields):
    _logger_manager.log_event(event, level, message, **fields)


def timing_context(operation: str, subject: Optional[str] = None):
    """Create a timing context for performance logging."""
    return TimingContext(_logger_manager, operation, subject)
