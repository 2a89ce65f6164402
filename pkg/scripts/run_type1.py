"""Type I error of the permutation test under equal weights."""

from _common import main

if __name__ == "__main__":
    main("null-typeI")
