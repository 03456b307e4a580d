#!/usr/bin/env python3
"""Regenerate tests/fixtures/svm_oracle.json.

Solves the exact dual the coordinate-descent trainer optimizes -- hinge loss,
bias as an augmented always-one feature, so Q_ij = y_i y_j (x_i.x_j + 1) --
with cvxopt's interior-point QP solver, and stores the problems together with
the reference weights and training accuracy.  The C++ test replays each
problem through train_linear_svm and demands identical accuracy and matching
weights.

Features are rounded through float32 before solving so the oracle sees
bit-identical inputs to the float32 FeatureMatrix on the C++ side.
"""

import json
import pathlib

import numpy as np
from cvxopt import matrix, solvers

solvers.options["show_progress"] = False
solvers.options["abstol"] = 1e-12
solvers.options["reltol"] = 1e-12
solvers.options["feastol"] = 1e-12


def make_problem(seed, classes, n, C):
    rng = np.random.default_rng(seed)
    radius = 10.0
    angles = 2.0 * np.pi * np.arange(classes) / classes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    labels = rng.integers(0, classes, size=n)
    x = centers[labels] + rng.normal(size=(n, 2))
    x = x.astype(np.float32).astype(np.float64)  # match the float32 feature path
    return x, labels


def solve_dual(x, y_signed, C):
    """min 0.5 a'Qa - 1'a  s.t. 0 <= a <= C, Q_ij = y_i y_j (x_i.x_j + 1)."""
    n = x.shape[0]
    z = np.hstack([x, np.ones((n, 1))])
    q_mat = (y_signed[:, None] * z) @ (y_signed[:, None] * z).T
    p = matrix(q_mat)
    q = matrix(-np.ones(n))
    g = matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = matrix(np.hstack([np.zeros(n), C * np.ones(n)]))
    sol = solvers.qp(p, q, g, h)
    assert sol["status"] == "optimal", sol["status"]
    alpha = np.array(sol["x"]).ravel()
    w = (alpha * y_signed) @ z  # (dim+1,), bias last
    return w


def main():
    problems = []
    specs = [(s, 2) for s in range(101, 111)] + [(201, 3), (202, 3)]
    for seed, classes in specs:
        C = 1.0
        x, labels = make_problem(seed, classes, n=50, C=C)
        z = np.hstack([x, np.ones((len(x), 1))])
        weights = []
        for k in range(classes):
            y_signed = np.where(labels == k, 1.0, -1.0)
            weights.append(solve_dual(x, y_signed, C))
        weights = np.stack(weights)  # (classes, 3)
        scores = z @ weights.T
        pred = np.argmax(scores, axis=1)  # np.argmax ties -> lowest index
        acc = float(np.mean(pred == labels))
        assert acc == 1.0, f"seed {seed}: oracle problems must be separable, got {acc}"
        problems.append(
            {
                "seed": seed,
                "classes": classes,
                "C": C,
                "x": [[float(v) for v in row] for row in x],
                "y": [int(v) for v in labels],
                "qp_weights": [[float(v) for v in row] for row in weights],
                "qp_accuracy": acc,
            }
        )

    out = pathlib.Path(__file__).parent / "fixtures" / "svm_oracle.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"problems": problems}, indent=1) + "\n")
    print(f"wrote {out} ({len(problems)} problems)")


if __name__ == "__main__":
    main()
