"""
Dataset persistence: CSV (x1..xp, y) with a JSON sidecar for the ground truth
"""

import json
from pathlib import Path
from typing import Optional

import numpy as np

from models import Dataset, GroundTruth


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_dataset(dataset: Dataset, path, seed: Optional[int] = None) -> Path:
    """Write the CSV and, when the truth is known, its sidecar"""
    path = Path(path)
    header = ",".join([f"x{j + 1}" for j in range(dataset.p)] + ["y"])
    table = np.column_stack([dataset.X, dataset.y])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")
    except OSError as e:
        raise OSError(f"cannot write dataset to {path}: {e.strerror or e}") from e

    meta = {"n": dataset.n, "p": dataset.p, "seed": seed, "sigma": dataset.sigma_hint}
    truth = dataset.truth
    if truth is not None:
        meta.update({
            "s": truth.s,
            "o": truth.o,
            "sigma": truth.sigma,
            "beta_star": truth.beta_star.tolist(),
            "theta_star": truth.theta_star.tolist(),
            "xi": truth.xi.tolist(),
            "support_S": list(truth.support_S),
            "support_O": list(truth.support_O),
        })
    with open(sidecar_path(path), "w") as f:
        json.dump(meta, f, indent=2)
    return path


def load_dataset(path) -> Dataset:
    """Read a dataset CSV; the sidecar, if present, restores the truth"""
    path = Path(path)
    with open(path) as f:
        header = f.readline().strip().split(",")
    if not header or header[-1] != "y":
        raise ValueError(f"{path}: last column must be 'y', got header {header}")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    X, y = table[:, :-1], table[:, -1]

    meta_path = sidecar_path(path)
    if not meta_path.exists():
        return Dataset(X=X, y=y)
    with open(meta_path) as f:
        meta = json.load(f)
    truth = None
    if "beta_star" in meta:
        truth = GroundTruth(
            beta_star=meta["beta_star"],
            support_S=tuple(meta["support_S"]),
            theta_star=meta["theta_star"],
            support_O=tuple(meta["support_O"]),
            xi=meta["xi"],
            sigma=meta["sigma"],
        )
    return Dataset(X=X, y=y, truth=truth, sigma_hint=meta.get("sigma"))


def load_matrix(path) -> np.ndarray:
    """Plain numeric CSV; a non-numeric first row is treated as a header"""
    path = Path(path)
    with open(path) as f:
        first = f.readline().strip().split(",")
    try:
        [float(x) for x in first]
        skip = 0
    except ValueError:
        skip = 1
    return np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
