"""
Logging configuration for EventKernel.
"""

import logging
import os
import sys
from datetime import datetime
from utils.constants import __version__, LOG_DIR


def setup_logging(log_dir=LOG_DIR, level=logging.INFO, log_to_file=True):
    """
    Configure logging to file and standard error.

    Standard output is reserved for JSON run records, so the console
    handler writes to stderr.

    Returns:
        str or None: Path to the current log file
    """
    handlers = [logging.StreamHandler(sys.stderr)]
    log_filename = None

    if log_to_file:
        if not os.path.exists(log_dir):
            os.makedirs(log_dir)
        log_filename = os.path.join(
            log_dir,
            f"eventkernel_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
        )
        handlers.insert(0, logging.FileHandler(log_filename, encoding='utf-8'))

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )

    logging.info("=" * 80)
    logging.info(f"EventKernel v{__version__} - Session Started")
    logging.info("=" * 80)

    return log_filename
