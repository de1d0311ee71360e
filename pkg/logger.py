import glob
import logging
import os
import time
from datetime import datetime

from colorama import Fore, Style, init

from config import Config

# Initialize colorama for cross-platform colored output
init()

_RUN_TIMESTAMP = datetime.now().strftime("%Y%m%d_%H%M%S")


class ColoredFormatter(logging.Formatter):
    """Custom formatter to add colors to log levels"""

    COLORS = {
        'DEBUG': Fore.CYAN,
        'INFO': Fore.GREEN,
        'WARNING': Fore.YELLOW,
        'ERROR': Fore.RED,
        'CRITICAL': Fore.MAGENTA
    }

    def format(self, record):
        levelname = record.levelname
        if levelname in self.COLORS:
            record.levelname = f"{self.COLORS[levelname]}{levelname}{Style.RESET_ALL}"
        try:
            return super().format(record)
        finally:
            record.levelname = levelname


class DelayedFileHandler(logging.FileHandler):
    """File handler that creates its file on the first record only"""

    def __init__(self, filename, mode='a', encoding='utf-8'):
        super().__init__(filename, mode, encoding, delay=True)

    def emit(self, record):
        if self.stream is None:
            os.makedirs(os.path.dirname(self.baseFilename), exist_ok=True)
            self.stream = self._open()
        super().emit(record)


def setup_logger(name="radar", level=None):
    """Set up logger with both file and console output"""
    level = (level or Config.LOG_LEVEL).upper()

    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    # Clear any existing handlers
    logger.handlers = []

    log_file = os.path.join(Config.LOG_DIR, f"radar_{_RUN_TIMESTAMP}.log")
    file_handler = DelayedFileHandler(log_file)
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    ))

    console_handler = logging.StreamHandler()
    console_handler.setLevel(getattr(logging, level))
    console_handler.setFormatter(ColoredFormatter(
        '%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%H:%M:%S'
    ))

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    return logger


def set_console_level(level):
    """Change the console level of every logger created by setup_logger"""
    numeric = getattr(logging, level.upper())
    for logger in logging.Logger.manager.loggerDict.values():
        if not isinstance(logger, logging.Logger):
            continue
        for handler in logger.handlers:
            if type(handler) is logging.StreamHandler:
                handler.setLevel(numeric)


def cleanup_old_logs(keep_recent=5, logs_dir=None):
    """
    Clean up old log files, keeping only:
    - The most recent logs
    - All logs that contain ERROR or CRITICAL messages
    Also removes empty log files
    """
    logs_dir = logs_dir or Config.LOG_DIR
    try:
        if not os.path.exists(logs_dir):
            return 0

        removed = remove_empty_log_files(logs_dir)

        log_files = glob.glob(os.path.join(logs_dir, "radar_*.log"))
        if len(log_files) <= keep_recent:
            return removed

        # Newest first
        log_files.sort(key=os.path.getmtime, reverse=True)
        files_to_keep = set(log_files[:keep_recent])
        files_to_keep |= {f for f in log_files[keep_recent:] if has_errors_in_log(f)}

        for log_file in log_files:
            if log_file not in files_to_keep:
                try:
                    os.remove(log_file)
                    removed += 1
                except OSError:
                    pass

        return removed

    except Exception:
        # Log housekeeping never fails a run
        return 0


def has_errors_in_log(log_file):
    """Check if a log file contains ERROR or CRITICAL messages"""
    try:
        with open(log_file, 'r', encoding='utf-8') as f:
            content = f.read()
            return 'ERROR' in content or 'CRITICAL' in content
    except Exception:
        return False


def remove_empty_log_files(logs_dir, min_age_seconds=10):
    """Remove empty log files older than min_age_seconds"""
    removed_count = 0
    current_time = time.time()

    for log_file in glob.glob(os.path.join(logs_dir, "*.log")):
        try:
            if os.path.getsize(log_file) == 0 and current_time - os.path.getmtime(log_file) > min_age_seconds:
                os.remove(log_file)
                removed_count += 1
        except OSError:
            pass

    return removed_count
