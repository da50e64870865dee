#!/usr/bin/env python3
"""Entry script for the ``dbar`` command line."""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
