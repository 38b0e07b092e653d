#!/usr/bin/env python3
"""Writes the UCI Multiple Features (handwritten digits) dataset as a manifest.

The six feature sets ship inside the mvlearn 0.5.0 wheel as CSV files with a
header row and the digit label in the last column. This script pulls that
wheel with pip (or uses one given with --wheel) and writes headerless view
CSVs, labels.csv and manifest.json under the output directory. Cell text is
copied verbatim.
"""

import argparse
import json
import pathlib
import subprocess
import sys
import tempfile
import zipfile

VIEWS = ["fou", "fac", "kar", "pix", "zer", "mor"]
INNER = "mvlearn/datasets/UCImultifeature/mfeat-{}.csv"


def locate_wheel(explicit, scratch):
    if explicit:
        return pathlib.Path(explicit)
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "mvlearn==0.5.0", "--no-deps", "-d", scratch],
        check=True,
    )
    return next(pathlib.Path(scratch).glob("mvlearn-0.5.0-*.whl"))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--wheel", help="path to mvlearn-0.5.0-py3-none-any.whl")
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "handwritten"))
    args = parser.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labels = None
    with tempfile.TemporaryDirectory() as scratch:
        with zipfile.ZipFile(locate_wheel(args.wheel, scratch)) as wheel:
            for name in VIEWS:
                rows = wheel.read(INNER.format(name)).decode().splitlines()[1:]
                cells = [r.split(",") for r in rows if r]
                view_labels = [int(float(c[-1])) for c in cells]
                if labels is None:
                    labels = view_labels
                elif labels != view_labels:
                    sys.exit(f"label column of {name} disagrees with {VIEWS[0]}")
                (out / f"{name}.csv").write_text("".join(",".join(c[:-1]) + "\n" for c in cells))

    (out / "labels.csv").write_text("".join(f"{y}\n" for y in labels))
    manifest = {
        "k": 10,
        "views": [{"name": n, "path": f"{n}.csv"} for n in VIEWS],
        "labels": "labels.csv",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(labels)} samples, {len(VIEWS)} views to {out}")


if __name__ == "__main__":
    main()
