"""Run one or more pipeline configs and print their comparison tables.

    python3 scripts/run_pipeline.py scripts/configs/aviles_giga.json [more.json ...] [--workers N]

Outputs go to each config's ``output_dir`` (relative to the current
directory). The exit status is the worst CLI exit code seen.
"""
import argparse
import csv
import json
import sys
from pathlib import Path

from telab.cli import run


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    worst = 0
    for path in args.configs:
        out = json.loads(Path(path).read_text()).get("output_dir", "telab_out")
        code = run(path, workers=args.workers)
        worst = max(worst, code)
        print(f"== {path} -> {out} (exit {code})")
        table = Path(out) / "compare.csv"
        if table.exists():
            with open(table) as fh:
                for row in csv.DictReader(fh):
                    print(f"  {row['method']:<16} {row['kind']:<9} {float(row['value']):.10f}")
    return worst


if __name__ == "__main__":
    sys.exit(main())
