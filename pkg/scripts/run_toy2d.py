"""Angular-spreading experiment on the 2D toy set, three seeds, default schedule.

Writes runs/toy2d/seed{0,1,2}/ with snapshot CSVs, SVG triptychs and summary.csv.
"""
import sys

from cmim.cli import main

if __name__ == "__main__":
    sys.exit(main(["toy2d", "--seeds", "0,1,2", "--out", "runs/toy2d", *sys.argv[1:]]))
