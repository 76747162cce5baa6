"""Rebuild golden tables from their oracles.

Usage: ``python -m tests.support.regenerate [case-id ...]`` from the
repository root. Without ids every case is rebuilt. A case whose main path
disagrees with its oracle is refused and its difference report printed;
the exit status is then 1.
"""
from __future__ import annotations

import argparse
import sys
import time

from floquetcomb.golden import Corpus, GoldenMismatch, regenerate_golden

from .cases import CASES, GOLDEN_DIR


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("ids", nargs="*", help="case ids (default: all)")
    args = parser.parse_args(argv)
    ids = args.ids or list(CASES)
    unknown = [i for i in ids if i not in CASES]
    if unknown:
        parser.error(f"unknown case(s): {', '.join(unknown)}")
    corpus = Corpus(GOLDEN_DIR)
    failed = 0
    for cid in ids:
        case, oracle = CASES[cid]
        t0 = time.perf_counter()
        try:
            dig = regenerate_golden(case, oracle, corpus)
        except GoldenMismatch as exc:
            failed += 1
            print(f"REFUSED {exc}", file=sys.stderr)
            continue
        print(f"{cid:28s} {dig}  ({time.perf_counter() - t0:.1f} s)")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
