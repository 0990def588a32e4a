"""Replay the reversing-vehicle sample through the full pipeline with mock backends.

Usage: python3 demos/sample_replay.py [output_dir]
"""

import json
import sys
import tempfile
from pathlib import Path

from pvir.cli import main
from pvir.sample import write_sample_dataset
from pvir.synthesis import render_report_text, report_from_dict

root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="pvir-"))
config = write_sample_dataset(root)
print(f"sample dataset written to {root}\n")

code = main(["run", "--config", str(config)])
main(["evaluate", "--config", str(config)])

out = root / "runs" / "default" / "reversing-collision"
report = json.loads((out / "synthesis.json").read_text())["report"]
print()
print(render_report_text(report_from_dict(report)))
sys.exit(code)
