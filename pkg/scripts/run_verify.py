"""Full mathematical self-check; exits non-zero if any check fails."""
import sys

from cmim.cli import main

if __name__ == "__main__":
    sys.exit(main(["verify", "--out", "runs/verify", *sys.argv[1:]]))
