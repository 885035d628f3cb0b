#!/usr/bin/env python3
"""Convert the UCI "Anonymous Microsoft Web Data" logs into dataset files.

The distribution (https://archive.ics.uci.edu/dataset/120) ships two files in
a sparse log format:

    anonymous-msweb.data   32711 training users
    anonymous-msweb.test    5000 held-out users

Each `A,<id>,...` line declares a page area (vroot), each `C,...` line starts
a user, and each `V,<id>,1` line marks a visit by the current user. This
script turns them into the dense comma-separated format the `aclearn` CLI
loads: one binary column per vroot (sorted by id, shared across both files),
an arity header of `2`s, and one row per user with 1 where the user visited.

Usage:
    python3 scripts/msweb_prepare.py anonymous-msweb.data anonymous-msweb.test out_dir

then point the learner (or the gated acceptance check) at the results:
    ACLEARN_MSWEB=out_dir cargo test --test acceptance criterion_10 -- --nocapture
"""

import argparse
import csv
import sys
from pathlib import Path


def read_cases(path: Path):
    """Yields (attribute_ids_declared, list_of_visit_sets)."""
    attrs = set()
    cases = []
    with open(path, newline="", encoding="latin-1") as fh:
        for record in csv.reader(fh):
            if not record:
                continue
            kind = record[0]
            if kind == "A":
                attrs.add(int(record[1]))
            elif kind == "C":
                cases.append(set())
            elif kind == "V":
                if not cases:
                    sys.exit(f"{path}: visit line before any case line")
                cases[-1].add(int(record[1]))
    return attrs, cases


def write_dataset(path: Path, columns: list[int], cases: list[set[int]]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(["2"] * len(columns)) + "\n")
        for visits in cases:
            fh.write(",".join("1" if c in visits else "0" for c in columns) + "\n")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("train", type=Path, help="anonymous-msweb.data from the UCI archive")
    ap.add_argument("test", type=Path, help="anonymous-msweb.test from the UCI archive")
    ap.add_argument("out_dir", type=Path, help="directory for msweb.{train,test}.data")
    args = ap.parse_args()

    train_attrs, train_cases = read_cases(args.train)
    test_attrs, test_cases = read_cases(args.test)
    columns = sorted(train_attrs | test_attrs)
    if not columns or not train_cases or not test_cases:
        sys.exit("inputs do not look like the MSWeb log format (no A/C lines found)")

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_dataset(args.out_dir / "msweb.train.data", columns, train_cases)
    write_dataset(args.out_dir / "msweb.test.data", columns, test_cases)
    print(
        f"{len(columns)} variables, {len(train_cases)} train rows, "
        f"{len(test_cases)} test rows -> {args.out_dir}/msweb.{{train,test}}.data"
    )


if __name__ == "__main__":
    main()
