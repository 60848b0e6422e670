#!/usr/bin/env python3
"""Run the bundled demo pipeline end to end from the fixture archive.

Builds the workspace under fixtures/demo if it is missing, then replays
the whole pipeline with the scripted backend and prints the manifest
summary plus the QA report.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from ontoweave.demo import build_demo_workspace
from ontoweave.pipeline import PipelineConfig, run_pipeline

WORKSPACE = Path(__file__).resolve().parent.parent / "fixtures" / "demo"


def main() -> int:
    if not (WORKSPACE / "config.json").exists():
        print("demo workspace missing; building it first")
        build_demo_workspace(WORKSPACE)
    config = PipelineConfig.from_file(WORKSPACE / "config.json")
    manifest = run_pipeline(config)
    for record in manifest.phases:
        line = f"{record['name']:<10} {record['status']}"
        if "wall_seconds" in record:
            line += f" ({record['wall_seconds']}s)"
        print(line)
    report_path = Path(manifest.run_dir) / "evaluate" / "qa_report.json"
    if report_path.exists():
        report = json.loads(report_path.read_text(encoding="utf-8"))
        print(f"QA accuracy: {report['accuracy']:.3f} "
              f"({report['correct']}/{report['total']})")
    print(f"artifacts: {manifest.run_dir}")
    return 0 if all(r["status"] in ("complete", "skipped")
                    for r in manifest.phases) else 1


if __name__ == "__main__":
    sys.exit(main())
