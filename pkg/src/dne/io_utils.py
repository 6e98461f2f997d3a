"""CSV/JSON serialization with atomic writes."""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .meshing import DiscreteField, Mesh


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def field_to_csv(field: DiscreteField) -> str:
    cols = "x,value" if field.mesh.dimension == 1 else "x,y,value"
    lines = [f"# columns: {cols}"]
    for coords, value in zip(field.mesh.vertices, field.values):
        lines.append(",".join(repr(float(c)) for c in coords) + "," + repr(float(value)))
    return "\n".join(lines) + "\n"


def write_field_csv(field: DiscreteField, path: str) -> None:
    atomic_write_text(path, field_to_csv(field))


def read_field_csv(path: str):
    """Returns (coords array, values array) from a field CSV."""
    coords, values = [], []
    try:
        with open(path) as handle:
            for line in handle:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = [float(p) for p in line.split(",")]
                coords.append(parts[:-1])
                values.append(parts[-1])
    except OSError as exc:
        raise OSError(f"cannot read field file {path}: {exc}") from exc
    return np.asarray(coords), np.asarray(values)


def field_from_csv(mesh: Mesh, path: str, tol: float = 1e-12) -> DiscreteField:
    coords, values = read_field_csv(path)
    if coords.shape != mesh.vertices.shape or np.max(np.abs(coords - mesh.vertices)) > tol:
        raise ValueError(f"field file {path} does not match the mesh vertices")
    return DiscreteField(mesh, values)


def write_json(payload, path: str) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
