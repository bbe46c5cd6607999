#!/usr/bin/env python3
"""Export the benchmark datasets used by the acceptance suite as plain CSV.

Sources (all bundled inside pip packages, no network needed once installed):
  iris          scikit-learn            sklearn/datasets/data/iris.csv
  breast_cancer rdatasets (MASS)        biopsy: Wisconsin breast cancer, 699 rows x 9 features
  ionosphere    keel-ds                 balanced/raw/ionosphere.dat

    pip install scikit-learn rdatasets keel-ds
    python3 scripts/export_uci.py data/uci
"""
import csv
import os
import sys

import keel_ds
import rdatasets
from sklearn.datasets import load_iris


def write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def export_iris(out):
    iris = load_iris()
    header = ["sepal_length", "sepal_width", "petal_length", "petal_width", "class"]
    rows = [[*map(repr, map(float, x)), iris.target_names[t]] for x, t in zip(iris.data, iris.target)]
    write(os.path.join(out, "iris.csv"), header, rows)


def export_breast_cancer(out):
    df = rdatasets.data("MASS", "biopsy")
    cols = [f"V{i}" for i in range(1, 10)]
    # 16 missing bare-nuclei (V6) readings; filled with the column median so the
    # row count stays at 699.
    df["V6"] = df["V6"].fillna(df["V6"].median())
    header = [
        "clump_thickness", "cell_size", "cell_shape", "adhesion", "epithelial_size",
        "bare_nuclei", "chromatin", "nucleoli", "mitoses", "class",
    ]
    rows = [[*(repr(float(r[c])) for c in cols), r["class"]] for _, r in df.iterrows()]
    write(os.path.join(out, "breast_cancer.csv"), header, rows)


def export_ionosphere(out):
    raw = os.path.join(os.path.dirname(keel_ds.__file__), "data", "balanced", "raw", "ionosphere.dat")
    rows = []
    with open(raw) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("@"):
                continue
            parts = [p.strip() for p in line.split(",")]
            values = [float(p) for p in parts[:-1]]
            # KEEL drops the second attribute (identically zero in the UCI file);
            # restore it so the 34-feature layout matches the original.
            values.insert(1, 0.0)
            label = {"b": "bad", "g": "good"}[parts[-1]]
            rows.append([*map(repr, values), label])
    header = [f"a{i:02d}" for i in range(1, 35)] + ["class"]
    write(os.path.join(out, "ionosphere.csv"), header, rows)


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "data/uci"
    os.makedirs(out, exist_ok=True)
    export_iris(out)
    export_breast_cancer(out)
    export_ionosphere(out)
