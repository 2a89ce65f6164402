"""Estimation accuracy for each of the six odd-graph orderings."""

import sys

from _common import main

if __name__ == "__main__":
    # pass the ordering id first, e.g. `run_setting2.py 4 --replicates 50`
    perm = int(sys.argv.pop(1)) if len(sys.argv) > 1 and sys.argv[1].isdigit() else 1
    main("setting2", permutation=perm)
