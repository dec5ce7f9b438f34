"""Batch-size sensitivity of cMIM against InfoNCE on the desk grid.

Trains every (dataset, variant, batch size, seed) cell of the desk preset,
then writes eval_report.csv, runs.csv, slopes.csv, slopes.svg and summary.txt
under runs/sensitivity.  Extra arguments are passed to ``cmim sensitivity``.
"""
import sys

from cmim.cli import main

if __name__ == "__main__":
    sys.exit(main(["sensitivity", "--preset", "desk", "--out", "runs/sensitivity", "-v", *sys.argv[1:]]))
