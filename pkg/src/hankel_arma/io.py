"""CSV and JSON serialization for trajectories, models and matrices."""

import csv
import json
import os

import numpy as np

from hankel_arma.arma import ArmaModel, StateSpaceModel, Trajectory


def dumps(obj):
    """Canonical JSON text (sorted keys, two-space indent, trailing newline)."""
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(obj, path):
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_trajectory(traj, path):
    """Columns ``index, x, e`` with round-trip float formatting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "e"])
        for i, (x, e) in enumerate(zip(traj.x, traj.e)):
            w.writerow([i, repr(float(x)), repr(float(e))])


def read_trajectory(path, seed=None):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ValueError(f"{path}: expected columns index, x, e")
    if not np.array_equal(data[:, 0], np.arange(data.shape[0])):
        raise ValueError(f"{path}: index column must be 0..T")
    return Trajectory(x=data[:, 1].copy(), e=data[:, 2].copy(), seed=seed)


def write_model(model, path):
    write_json(model.to_dict(), path)


def model_from_dict(d):
    """``ArmaModel`` for ``p, q, a, b`` keys, ``StateSpaceModel`` for ``A, B, K``."""
    if "A" in d:
        return StateSpaceModel.from_dict(d)
    if "a" in d or "p" in d:
        return ArmaModel.from_dict(d)
    raise ValueError("model JSON needs either p, q, a, b or A, B, K keys")


def read_model(path):
    return model_from_dict(read_json(path))


def write_matrix(M, path):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in M:
            w.writerow([repr(float(v)) for v in row])


def read_matrix(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_hankel(hs, directory):
    """One CSV per matrix plus ``manifest.json`` with ``t, T, n_cols, seed``."""
    os.makedirs(directory, exist_ok=True)
    files = {"X_past": "X_past.csv", "X_future": "X_future.csv", "E": "E.csv"}
    for name, fname in files.items():
        write_matrix(getattr(hs, name), os.path.join(directory, fname))
    manifest = dict(hs.to_manifest(), files=files)
    write_json(manifest, os.path.join(directory, "manifest.json"))
    return manifest
