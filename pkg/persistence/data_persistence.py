# persistence/data_persistence.py

import json
import logging
import os
import tempfile
import threading

import numpy as np

from calculus.crp import ControlledPath
from errors import ConfigError
from paths.grid_control import DiscretePath, Grid
from paths.tensor_rough import RoughPath, Tensor2

CSV_FORMAT = '%.17g'


def path_to_csv(path):
    """
    Renders a DiscretePath as CSV text: header t,x1,...,xd and one row per grid instant at full precision.
    """
    flat = path.flat_values
    header = ",".join(["t"] + [f"x{k + 1}" for k in range(flat.shape[1])])
    rows = np.column_stack([path.grid.times, flat])
    lines = [header] + [",".join(CSV_FORMAT % v for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def path_from_csv(text):
    lines = [line for line in text.strip().splitlines() if line.strip()]
    if len(lines) < 3 or not lines[0].startswith("t"):
        raise ConfigError("A path CSV needs a 't,x1,...' header and at least two rows.")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return DiscretePath(Grid(data[:, 0]), data[:, 1:])


def rough_path_to_dict(X, increments=None):
    """
    JSON form of a rough path: dim, p, grid, start and one {lvl1, lvl2} object per step.
    Optional redundant increments (i, j) are written as {i, j, lvl1, lvl2} for later Chen validation.
    """
    out = {
        "dim": X.d,
        "p": X.p,
        "grid": X.grid.times.tolist(),
        "start": X.start.tolist(),
        "steps": [{"lvl1": l1.tolist(), "lvl2": l2.tolist()} for l1, l2 in zip(X.lvl1, X.lvl2)],
    }
    if increments:
        out["increments"] = []
        for i, j in increments:
            inc = X.increment(i, j)
            out["increments"].append({"i": int(i), "j": int(j), "lvl1": inc.level1.tolist(),
                                      "lvl2": inc.level2.tolist()})
    return out


def rough_path_from_dict(data):
    try:
        grid = Grid(data["grid"])
        dim = int(data["dim"])
        steps = data["steps"]
        lvl1 = np.array([s["lvl1"] for s in steps], dtype=float).reshape(len(steps), dim)
        lvl2 = np.array([s["lvl2"] for s in steps], dtype=float).reshape(len(steps), dim, dim)
        stored = {(int(e["i"]), int(e["j"])): Tensor2(e["lvl1"], e["lvl2"]) for e in data.get("increments", [])}
        return RoughPath(grid, data["start"], lvl1, lvl2, float(data["p"]), stored_increments=stored)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"Malformed rough path document: {e}") from e


def controlled_path_to_dict(Y, rough_ref):
    return {"rough_ref": rough_ref, "value_shape": list(Y.value_shape), "y": Y.y.values.tolist(),
            "ydag": Y.ydag.tolist(), "p": Y.p, "q": Y.q, "r": Y.r}


def controlled_path_from_dict(data, base):
    try:
        shape = tuple(data.get("value_shape", ()))
        y = np.array(data["y"], dtype=float)
        if shape:
            y = y.reshape((-1,) + shape)
        return ControlledPath(base, y, np.array(data["ydag"], dtype=float), data["p"], data["q"], data["r"])
    except (KeyError, TypeError) as e:
        raise ConfigError(f"Malformed controlled path document: {e}") from e


class ArtifactStore:
    """
    Writes the artifacts of one run under an output prefix: '<prefix>_<name>.<ext>'.
    Writes are atomic (temporary file + rename) and serialized by a threading lock, so sweep workers can share a store.
    """
    def __init__(self, prefix):
        """
        Parameters:
        - prefix (str): Output path prefix, e.g. 'artifacts/solve'. Its directory is created on demand.
        """
        self.prefix = prefix
        self.written = []
        self.data_lock = threading.Lock()

    def path_for(self, name, ext):
        return f"{self.prefix}_{name}.{ext}"

    def _write(self, target, text):
        directory = os.path.dirname(os.path.abspath(target))
        with self.data_lock:
            os.makedirs(directory, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=os.path.basename(target))
            try:
                with os.fdopen(fd, "w") as f:
                    f.write(text)
                os.replace(tmp, target)
            except OSError:
                if os.path.exists(tmp):
                    os.remove(tmp)
                raise
            self.written.append(target)
        logging.info(f"Artifact written to {target}")
        return target

    def save_json(self, name, document):
        return self._write(self.path_for(name, "json"), json.dumps(document, indent=2) + "\n")

    def save_path(self, name, path, fmt="csv"):
        if fmt == "json":
            return self.save_json(name, {"grid": path.grid.times.tolist(), "values": path.values.tolist()})
        return self._write(self.path_for(name, "csv"), path_to_csv(path))

    def save_rough_path(self, name, X, increments=None):
        return self.save_json(name, rough_path_to_dict(X, increments))

    def save_controlled_path(self, name, Y, rough_ref):
        return self.save_json(name, controlled_path_to_dict(Y, rough_ref))

    def save_report(self, name, report):
        document = report.to_dict() if hasattr(report, "to_dict") else report
        return self.save_json(name, document)

    def save_manifest(self, manifest):
        return self.save_json("manifest", manifest)


def load_json(file_path):
    with open(file_path, "r") as f:
        return json.load(f)


def load_path(file_path):
    with open(file_path, "r") as f:
        return path_from_csv(f.read())


def load_rough_path(file_path):
    return rough_path_from_dict(load_json(file_path))


def load_controlled_path(file_path, base=None):
    """
    Loads a controlled path; its rough path is read from the file named by rough_ref unless given.
    """
    data = load_json(file_path)
    if base is None:
        ref = data.get("rough_ref")
        if not ref:
            raise ConfigError(f"{file_path} names no rough path and none was given.")
        if not os.path.isabs(ref):
            ref = os.path.join(os.path.dirname(os.path.abspath(file_path)), ref)
        base = load_rough_path(ref)
    return controlled_path_from_dict(data, base)


def load_manifest(file_path):
    """
    Loads a run manifest. A missing or corrupt manifest is logged and read as empty.
    """
    try:
        manifest = load_json(file_path)
        logging.info(f"Manifest loaded from {file_path}")
        return manifest
    except FileNotFoundError:
        logging.info(f"No manifest found at {file_path}.")
        return {}
    except json.JSONDecodeError as e:
        logging.error(f"Error decoding JSON from {file_path}: {e}")
        return {}
