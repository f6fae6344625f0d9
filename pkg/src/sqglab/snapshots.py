"""Raw field snapshots: little-endian float64 payload plus a JSON sidecar."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, SnapshotError
from .spectral import Grid, PhysicalField


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_snapshot(path, field: PhysicalField, time: float = 0.0, name: str = "theta") -> Path:
    path = Path(path)
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")
    meta = dict(field.grid.to_dict(), time=float(time), name=str(name))
    atomic_write_bytes(path, payload)
    atomic_write_text(sidecar_path(path), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_snapshot(path) -> tuple[PhysicalField, dict]:
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise SnapshotError(f"missing sidecar {side}")
    if not path.exists():
        raise SnapshotError(f"missing snapshot {path}")
    try:
        meta = json.loads(side.read_text())
        grid = Grid(int(meta["n"]), float(meta["length"]), int(meta["d"]))
    except (ValueError, KeyError, TypeError, ConfigurationError) as exc:
        raise SnapshotError(f"corrupt sidecar {side}: {exc}") from exc
    raw = path.read_bytes()
    expected = 8 * grid.n**grid.d
    if len(raw) != expected:
        raise SnapshotError(f"{path} holds {len(raw)} bytes, expected {expected}")
    values = np.frombuffer(raw, dtype="<f8").reshape(grid.shape)
    if not np.all(np.isfinite(values)):
        raise SnapshotError(f"{path} contains non-finite samples")
    return PhysicalField(grid, values), meta
