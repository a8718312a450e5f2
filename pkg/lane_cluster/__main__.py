"""
CLI entry point for lane-cluster.

Usage:
    uv run lane-cluster generate --spec spec.json --seed 7 --out scene.json
    uv run lane-cluster assign --scene scene.json --out membership.json
    uv run python -m lane_cluster eval --pred fit.json --gt scene.json --out report.json
"""

import sys

from .main import main

if __name__ == "__main__":
    sys.exit(main())
