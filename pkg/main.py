"""
conecast - command-line entry point.
"""
import sys
import logging

from conecast.config import setup_logging

# Setup logging
setup_logging()
logger = logging.getLogger(__name__)

from conecast.cli.commands import main

if __name__ == "__main__":
    sys.exit(main())
