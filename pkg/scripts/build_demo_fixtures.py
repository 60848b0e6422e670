#!/usr/bin/env python3
"""Regenerate the bundled demo workspace under fixtures/demo.

The workspace (documents, QA data, config, fixture archive) is rebuilt
from the rule-based responder; rerun this after changing the demo
content or the request canonicalization.
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

from ontoweave.demo import build_demo_workspace

DEST = Path(__file__).resolve().parent.parent / "fixtures" / "demo"


def main() -> int:
    if DEST.exists():
        shutil.rmtree(DEST)
    build_demo_workspace(DEST)
    files = sorted(p.relative_to(DEST) for p in DEST.rglob("*") if p.is_file())
    print(f"rebuilt {DEST} ({len(files)} files):")
    for path in files:
        print(f"  {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
