import logging
import sys

from dinosaur_readout.cli import LOG_FORMAT, run
from dinosaur_readout.config import default_log_level

logging.basicConfig(
    level=default_log_level(),
    format=LOG_FORMAT,
)

if __name__ == "__main__":
    sys.exit(run())
