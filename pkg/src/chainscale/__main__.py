"""Module entry point: ``python -m chainscale`` runs the experiment CLI."""

import sys

from .cli import main

sys.exit(main())
