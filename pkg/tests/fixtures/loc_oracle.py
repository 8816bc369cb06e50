#!/usr/bin/env python3
"""Standalone non-blank line counter, kept independent of the package.

Counts byte-wise: split the raw file on newline bytes and count chunks that
contain anything outside the ASCII whitespace set. Used to pin the expected
count for the fixture next to this script.

Usage: python3 loc_oracle.py FILE
"""

import sys

WHITESPACE = set(b" \t\r\f\v")


def main(path: str) -> int:
    data = open(path, "rb").read()
    return sum(1 for chunk in data.split(b"\n") if any(b not in WHITESPACE for b in chunk))


if __name__ == "__main__":
    print(main(sys.argv[1]))
