"""cMIM against MIM on the desk dataset: downstream z-scores, informative
embeddings and reconstruction parity.

summary.txt lists mean z, probe accuracy per embedding kind and the final
validation reconstruction NLL per model; runs.csv has the per-run values.
"""
import sys

from cmim.cli import main
from cmim.presets import DESK

if __name__ == "__main__":
    args = ["sensitivity", "--preset", "desk", "--variants", ",".join(DESK.downstream_variants),
            "--datasets", DESK.datasets[0], "--out", "runs/downstream", "-v"]
    sys.exit(main([*args, *sys.argv[1:]]))
