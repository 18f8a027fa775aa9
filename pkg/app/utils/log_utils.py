import logging
import sys

LOG_FORMAT = "[%(name)s] %(levelname)s %(message)s"

_configured = False


class StderrHandler(logging.StreamHandler):
    """Writes to whatever sys.stderr is when a record is emitted."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def configure_logging(level: str = "INFO") -> None:
    """Route every subsystem logger to stderr with the tagged format."""
    global _configured
    root = logging.getLogger()
    if not _configured:
        handler = StderrHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
        _configured = True
    root.setLevel(level.upper())


def get_logger(tag: str) -> logging.Logger:
    return logging.getLogger(tag.upper())
