"""
Logging setup: loguru sinks for the console and run directories, with stdlib logging routed in
"""

import logging
from contextlib import contextmanager
from typing import Iterator, Optional

from loguru import logger
from tqdm import tqdm

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
    "<level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} | {message}"

# Third-party loggers that flood DEBUG with per-chunk or per-font chatter
NOISY_LOGGERS = ("PIL", "matplotlib", "urllib3", "filelock", "huggingface_hub")


class InterceptHandler(logging.Handler):
    """Forward stdlib records (torch, PIL, open_clip) to loguru"""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = logging.currentframe(), 2
        while frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        logger.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())


def _console(message: str) -> None:
    # tqdm.write keeps an active progress bar on its own line
    tqdm.write(message, end="")


def setup_logging(
    level: str = "INFO",
    log_file: Optional[str] = None,
    rotation: str = "10 MB",
    retention: str = "7 days",
) -> None:
    """
    Reset loguru to a colorized stderr sink and an optional rotating file

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Extra log file shared by every command (optional)
        rotation: Log rotation size
        retention: Log retention period
    """
    logger.remove()
    logger.add(_console, level=level, format=CONSOLE_FORMAT, colorize=True)
    if log_file:
        add_file_sink(log_file, level=level, rotation=rotation, retention=retention)

    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)
    for name in logging.root.manager.loggerDict:
        logging.getLogger(name).handlers = []
        logging.getLogger(name).propagate = True
    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


def add_file_sink(
    log_file: str,
    level: str = "INFO",
    rotation: str = "10 MB",
    retention: str = "7 days",
) -> int:
    """Attach a plain-text file sink, returning its handler id"""
    return logger.add(
        log_file,
        level=level,
        format=FILE_FORMAT,
        rotation=rotation,
        retention=retention,
        compression="zip",
    )


@contextmanager
def run_log_sink(log_file: str, level: str = "INFO") -> Iterator[int]:
    """File sink scoped to one run; detached when the block exits"""
    handler_id = logger.add(log_file, level=level, format=FILE_FORMAT)
    try:
        yield handler_id
    finally:
        logger.remove(handler_id)


def get_logger(name: str) -> logger:
    """Logger bound to a module name (usually __name__)"""
    return logger.bind(name=name)
