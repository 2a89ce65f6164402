"""Power of the permutation test as the two weight vectors separate."""

from _common import main

if __name__ == "__main__":
    main("power")
