#!/usr/bin/env python3
"""End-to-end demo on the bundled toy workspace.

Copies the toy_uart workspace to a scratch directory, records mock-backend
fixtures, runs the full pipeline through the CLI, and prints the reports.
"""

import argparse
import shutil
import sys
from importlib import resources
from pathlib import Path

from uvmforge.cli import main as uvmforge_main
from uvmforge.fixture_tools import record_fixtures


def materialize_toy_workspace(target: Path) -> Path:
    source = resources.files("uvmforge.data") / "toy_uart"
    if target.exists():
        shutil.rmtree(target)
    shutil.copytree(source, target)
    return target


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--workdir",
        type=Path,
        default=Path("demo_workspace"),
        help="scratch directory for the demo workspace (recreated each run)",
    )
    args = parser.parse_args()

    ws_root = materialize_toy_workspace(args.workdir)
    fixtures = record_fixtures(ws_root)
    print(f"workspace ready at {ws_root} with {len(fixtures)} fixtures")

    rc = uvmforge_main(
        [
            "run",
            "--workspace", str(ws_root),
            "--backend", "mock",
            "--adapter", "mock",
        ]
    )
    reports_dir = ws_root / "out" / "reports"
    for name in ("timing.md", "coverage_report.md", "error_report.md"):
        path = reports_dir / name
        if path.is_file():
            print(f"\n--- {name} ---")
            print(path.read_text(encoding="utf-8"), end="")
    return rc


if __name__ == "__main__":
    sys.exit(main())
