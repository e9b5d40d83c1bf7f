#!/usr/bin/env python3
"""Materialize the bundled benchmark datasets under data/.

wine.csv and breast.csv come from scikit-learn's offline copies of the UCI
wine and breast-cancer (WDBC) tables. housing.csv and enb.csv are seeded
synthetic surrogates with a latent-factor correlation structure, provided so
that every experiment script runs without network access; see data/README.md.
"""
import pathlib

import numpy as np
from sklearn.datasets import load_breast_cancer, load_wine

OUT = pathlib.Path(__file__).resolve().parent.parent / "data"


def write_csv(path, names, values):
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in values:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
    print(f"wrote {path} shape={values.shape}")


def sklearn_sets():
    wine = load_wine()
    names = [n.replace("/", "_").replace(" ", "_") for n in wine.feature_names]
    write_csv(OUT / "wine.csv", names, wine.data)

    breast = load_breast_cancer()
    names = [n.replace(" ", "_") for n in breast.feature_names]
    write_csv(OUT / "breast.csv", names, breast.data)


def factor_surrogate(rng, n, spec):
    """Columns driven by shared latent factors plus independent noise."""
    k = max(len(s[0]) for s in spec)
    z = rng.standard_normal((n, k))
    cols = []
    for weights, bias, scale, noise, transform in spec:
        w = np.zeros(k)
        w[: len(weights)] = weights
        base = z @ w
        if transform == "quad":
            base = base + 0.35 * base**2
        elif transform == "tanh":
            base = np.tanh(base)
        col = bias + scale * base + noise * rng.standard_normal(n)
        cols.append(col)
    return np.column_stack(cols)


def housing_surrogate():
    rng = np.random.default_rng(20240501)
    spec = [
        ([1.0, 0.2, 0.0], 3.6, 2.8, 0.9, "quad"),
        ([-0.8, 0.5, 0.0], 11.0, 6.0, 2.5, "none"),
        ([0.9, -0.3, 0.2], 11.1, 3.2, 1.2, "none"),
        ([0.0, 0.0, 1.0], 0.55, 0.12, 0.04, "tanh"),
        ([0.7, 0.0, 0.6], 6.3, 0.7, 0.25, "none"),
        ([-0.6, 0.4, 0.1], 68.0, 12.0, 6.0, "none"),
        ([0.5, 0.8, 0.0], 3.8, 1.0, 0.5, "quad"),
        ([0.85, -0.2, 0.1], 9.5, 4.0, 1.5, "none"),
        ([0.95, 0.1, 0.0], 408.0, 80.0, 25.0, "none"),
        ([0.4, 0.9, 0.0], 18.4, 1.6, 0.7, "none"),
        ([-0.3, 0.2, 0.9], 357.0, 45.0, 20.0, "none"),
        ([0.75, -0.5, 0.2], 12.6, 4.5, 1.8, "quad"),
        ([-0.9, 0.3, -0.2], 22.5, 6.5, 2.2, "none"),
        ([0.6, 0.6, 0.3], 5.4, 1.3, 0.5, "none"),
    ]
    data = factor_surrogate(rng, 506, spec)
    names = [f"c{j:02d}" for j in range(data.shape[1])]
    write_csv(OUT / "housing.csv", names, data)


def enb_surrogate():
    rng = np.random.default_rng(20240502)
    spec = [
        ([1.0, 0.0], 0.76, 0.09, 0.02, "none"),
        ([-0.95, 0.1], 672.0, 85.0, 12.0, "none"),
        ([0.7, 0.5], 319.0, 42.0, 9.0, "none"),
        ([-0.85, 0.4], 177.0, 40.0, 7.0, "none"),
        ([0.9, -0.2], 5.25, 1.6, 0.3, "tanh"),
        ([0.0, 1.0], 3.5, 1.1, 0.4, "none"),
        ([0.2, 0.9], 0.23, 0.11, 0.03, "none"),
        ([0.1, 0.8], 2.8, 1.4, 0.5, "quad"),
        ([0.95, 0.3], 22.3, 9.5, 1.5, "quad"),
        ([0.9, 0.35], 24.6, 9.0, 1.8, "quad"),
    ]
    data = factor_surrogate(rng, 768, spec)
    names = [f"c{j:02d}" for j in range(data.shape[1])]
    write_csv(OUT / "enb.csv", names, data)


def main():
    OUT.mkdir(exist_ok=True)
    sklearn_sets()
    housing_surrogate()
    enb_surrogate()


if __name__ == "__main__":
    main()
