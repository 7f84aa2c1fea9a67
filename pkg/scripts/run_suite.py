"""Run every experiment config under configs/ and write the consolidated summary.
Run this from the project root:
    python scripts/run_suite.py [--out reports/suite] [--workers 4]
"""
import argparse
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.append(str(ROOT))

from config import CONFIG_DIR, REPORT_DIR
from utils.experiment import EXIT_OK, run_suite


def main():
    parser = argparse.ArgumentParser(description="Run the acceptance suite")
    parser.add_argument("--configs", default=str(CONFIG_DIR))
    parser.add_argument("--out", default=str(REPORT_DIR / "suite"))
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args()

    start = time.perf_counter()
    results = run_suite(args.configs, args.out, workers=args.workers)
    failed = 0
    for name, result in results.items():
        print(f"{name:40s} exit={result.exit_code} {result.status_line()}")
        failed += result.exit_code != EXIT_OK and not name.startswith("negative_")
    print(f"\n{len(results)} configs in {time.perf_counter() - start:.1f}s, {failed} unexpected exits")
    print(f"Summary: {Path(args.out) / 'summary.csv'}")
    return 1 if failed else 0


if __name__ == '__main__':
    sys.exit(main())
