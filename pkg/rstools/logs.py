"""
Logging setup shared by the command line entry point and the acceptance runner
"""

import os
import sys
import logging
from datetime import datetime

from dotenv import load_dotenv

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def setup_logging(name="rsclt", level=None, log_dir=None, log_to_file=True, quiet=False):
    """Set up root logging: a timestamped file under logs/ plus stdout"""
    load_dotenv()
    if level is None:
        level = os.getenv('RSCLT_LOG_LEVEL', 'INFO')
    if log_dir is None:
        log_dir = os.getenv('RSCLT_LOG_DIR', 'logs')

    handlers = []
    log_file = None
    if log_to_file:
        if not os.path.exists(log_dir):
            os.makedirs(log_dir)
        log_file = os.path.join(log_dir, f"{name}_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log")
        handlers.append(logging.FileHandler(log_file))

    stream = logging.StreamHandler(sys.stdout)
    if quiet:
        stream.setLevel(logging.WARNING)
    handlers.append(stream)

    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True
    )
    return log_file
