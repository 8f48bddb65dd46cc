"""Module entry point: ``python -m mortsynth``."""

import sys

from .cli import main

sys.exit(main())
