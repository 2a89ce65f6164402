"""Estimation accuracy with a shared weight ordering (K in 2..50)."""

from _common import main

if __name__ == "__main__":
    main("setting1")
