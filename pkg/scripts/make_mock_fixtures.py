#!/usr/bin/env python3
"""Record mock-backend fixtures for a workspace.

Replays the planning and generation prompts that a first-pass pipeline run
will issue and writes one canned response per prompt, named
<role>-<prompt digest>.txt, into the fixture directory.
"""

import argparse
import sys
from pathlib import Path

from uvmforge.fixture_tools import record_fixtures


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("workspace", type=Path, help="workspace root directory")
    parser.add_argument(
        "--fixtures",
        type=Path,
        help="fixture directory (default: <workspace>/fixtures)",
    )
    args = parser.parse_args()

    written = record_fixtures(args.workspace, args.fixtures)
    for path in written:
        print(path)
    print(f"{len(written)} fixtures recorded")
    return 0


if __name__ == "__main__":
    sys.exit(main())
