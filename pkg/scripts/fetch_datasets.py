#!/usr/bin/env python3
"""Fetch and prepare the six benchmark datasets.

The repository does not vendor any raw benchmark data; this script
downloads the public sources and writes the prepared CSVs the benchmark
harness expects into data/.  Each prepared file is numeric features plus
one label column, ready for `gpclassify bench` configs and for the
real-data acceptance tests (which skip when these files are absent).

Sources and preparation rules
-----------------------------
cancer.csv      UCI breast-cancer-wisconsin (original, 9 attributes).
                Drop the id column and the 16 rows with missing values.
                Label: 4 (malignant) -> "malignant" (positive),
                2 (benign) -> "benign".
crab.csv        Campbell & Mahon crabs (shipped with R's MASS package).
                Features: species (B -> 0, O -> 1) plus the five shell
                measurements FL, RW, CL, CW, BD; the within-group index
                column is dropped.  Label: sex, positive "M".
glass.csv       UCI glass identification.  Drop the id column.
                Binary groups: window glass (types 1-4) vs non-window
                (types 5-7).  Label "window"/"nonwindow", positive
                "window".
ionosphere.csv  UCI ionosphere.  The second attribute is identically
                zero and is dropped, leaving 33 features.  Label g/b,
                positive "g".
thyroid.csv     UCI new-thyroid (215 points, 5 attributes).  Binary
                groups: class 1 (normal) vs classes 2 and 3 (hyper/hypo).
                Label "normal"/"abnormal", positive "normal".
housing.csv     Boston housing (506 points, 13 attributes).  Binary
                groups: median home value above the dataset median of
                MEDV -> "high", otherwise "low"; positive "high".
                MEDV itself is excluded from the features.

Run:  python scripts/fetch_datasets.py [--out data/]
"""

from __future__ import annotations

import argparse
import csv
import io
import statistics
import sys
import urllib.request
from pathlib import Path

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
SOURCES = {
    "cancer": f"{UCI}/breast-cancer-wisconsin/breast-cancer-wisconsin.data",
    "crab": "https://raw.githubusercontent.com/vincentarelbundock/Rdatasets/master/csv/MASS/crabs.csv",
    "glass": f"{UCI}/glass/glass.data",
    "ionosphere": f"{UCI}/ionosphere/ionosphere.data",
    "thyroid": f"{UCI}/thyroid-disease/new-thyroid.data",
    "housing": f"{UCI}/housing/housing.data",
}


def download(url: str) -> str:
    print(f"  downloading {url}")
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read().decode("utf-8")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"  wrote {path} ({len(rows)} rows)")


def prepare_cancer(text: str, out: Path) -> None:
    rows = []
    for line in text.splitlines():
        parts = [p.strip() for p in line.strip().split(",")]
        if len(parts) != 11 or "?" in parts:
            continue
        label = "malignant" if parts[10] == "4" else "benign"
        rows.append(parts[1:10] + [label])
    header = [f"a{i}" for i in range(1, 10)] + ["class"]
    write_csv(out / "cancer.csv", header, rows)


def prepare_crab(text: str, out: Path) -> None:
    reader = csv.reader(io.StringIO(text))
    raw = list(reader)
    header = raw[0]
    cols = {name: i for i, name in enumerate(header)}
    rows = []
    for r in raw[1:]:
        r = [c.strip() for c in r]
        sp = "0" if r[cols["sp"]] == "B" else "1"
        rows.append([
            sp, r[cols["FL"]], r[cols["RW"]], r[cols["CL"]],
            r[cols["CW"]], r[cols["BD"]], r[cols["sex"]],
        ])
    write_csv(out / "crab.csv", ["sp", "FL", "RW", "CL", "CW", "BD", "sex"], rows)


def prepare_glass(text: str, out: Path) -> None:
    rows = []
    for line in text.splitlines():
        parts = [p.strip() for p in line.strip().split(",")]
        if len(parts) != 11:
            continue
        label = "window" if int(float(parts[10])) <= 4 else "nonwindow"
        rows.append(parts[1:10] + [label])
    header = ["ri", "na", "mg", "al", "si", "k", "ca", "ba", "fe", "class"]
    write_csv(out / "glass.csv", header, rows)


def prepare_ionosphere(text: str, out: Path) -> None:
    rows = []
    for line in text.splitlines():
        parts = [p.strip() for p in line.strip().split(",")]
        if len(parts) != 35:
            continue
        rows.append(parts[:1] + parts[2:34] + [parts[34]])  # drop constant col 2
    header = [f"a{i}" for i in range(1, 34)] + ["class"]
    write_csv(out / "ionosphere.csv", header, rows)


def prepare_thyroid(text: str, out: Path) -> None:
    rows = []
    for line in text.splitlines():
        parts = [p.strip() for p in line.strip().split(",")]
        if len(parts) != 6:
            continue
        label = "normal" if parts[0] == "1" else "abnormal"
        rows.append(parts[1:6] + [label])
    header = ["t3resin", "thyroxin", "triiodo", "tsh", "tsh_diff", "class"]
    write_csv(out / "thyroid.csv", header, rows)


def prepare_housing(text: str, out: Path) -> None:
    numeric = []
    for line in text.splitlines():
        parts = line.split()
        if len(parts) == 14:
            numeric.append([float(v) for v in parts])
    medv_median = statistics.median(r[13] for r in numeric)
    rows = [
        [f"{v:g}" for v in r[:13]] + ["high" if r[13] > medv_median else "low"]
        for r in numeric
    ]
    header = ["crim", "zn", "indus", "chas", "nox", "rm", "age", "dis", "rad",
              "tax", "ptratio", "b", "lstat", "value"]
    write_csv(out / "housing.csv", header, rows)


PREPARERS = {
    "cancer": prepare_cancer,
    "crab": prepare_crab,
    "glass": prepare_glass,
    "ionosphere": prepare_ionosphere,
    "thyroid": prepare_thyroid,
    "housing": prepare_housing,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    parser.add_argument("--only", nargs="*", choices=sorted(SOURCES),
                        help="fetch a subset of the datasets")
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    wanted = args.only or sorted(SOURCES)
    failures = []
    for name in wanted:
        print(f"[{name}]")
        try:
            text = download(SOURCES[name])
            PREPARERS[name](text, out)
        except Exception as exc:
            failures.append(name)
            print(f"  FAILED: {exc}", file=sys.stderr)
    if failures:
        print(
            f"\ncould not fetch: {', '.join(failures)}.\n"
            "If this machine has no outbound network access, download the\n"
            "source files listed in SOURCES on another machine, then rerun\n"
            "the matching prepare_* function on the raw text.",
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
