"""Output files: trajectory CSV, binary snapshots, JSON reports and tables.

Every text file starts with `# key: value` metadata lines (config hash,
seed, versions). Floats are written with 17 significant digits so a file
reproduces the in-memory values exactly. Snapshots are a 16-byte header
(8-byte magic, little-endian uint64 K) followed by K little-endian doubles.
"""

import csv
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from repton.shared_libraries import constants
from repton.shared_libraries.errors import ConfigurationError
from repton.shared_libraries.types import Trajectory

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<8sQ")


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def _metadata_lines(metadata: Optional[Mapping[str, Any]]) -> List[str]:
    return [f"# {key}: {metadata[key]}" for key in sorted(metadata or {})]


def write_trajectory_csv(
    path: Path,
    trajectory: Trajectory,
    metadata: Optional[Mapping[str, Any]] = None,
    include_coefficients: bool = False,
) -> Path:
    """Write the monitors (and optionally the coefficients) of a trajectory."""
    path = Path(path)
    columns = list(constants.TRAJECTORY_COLUMNS)
    n_modes = trajectory.states[0].shape[-1] if trajectory.states else 0
    if include_coefficients:
        columns += [f"c{k}" for k in range(n_modes)]
    with path.open("w", encoding="utf-8", newline="") as handle:
        for line in _metadata_lines(metadata):
            handle.write(line + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for t, state, monitors, penalty in zip(
            trajectory.times, trajectory.states, trajectory.monitors, trajectory.penalty_mass
        ):
            row = [t, monitors["mass"], monitors["l2_norm"], monitors["free_energy"],
                   monitors["min_value"], penalty]
            if include_coefficients:
                row += list(state)
            writer.writerow([format_float(v) for v in row])
    logger.info(f"Wrote {len(trajectory)} trajectory rows to {path}")
    return path


def read_trajectory_csv(path: Path) -> Tuple[Dict[str, str], List[str], np.ndarray]:
    """Return (metadata, column names, data rows)."""
    metadata: Dict[str, str] = {}
    body: List[str] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            metadata[key] = value
        elif line:
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise ConfigurationError(f"{path} has no header row")
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    return metadata, rows[0], data.reshape(len(rows) - 1, len(rows[0]))


def write_snapshot(path: Path, coeffs: np.ndarray) -> Path:
    coeffs = np.ascontiguousarray(coeffs, dtype="<f8")
    if coeffs.ndim != 1:
        raise ConfigurationError("snapshots hold a single coefficient vector")
    with Path(path).open("wb") as handle:
        handle.write(_HEADER.pack(constants.SNAPSHOT_MAGIC, coeffs.size))
        handle.write(coeffs.tobytes())
    return Path(path)


def read_snapshot(path: Path) -> np.ndarray:
    """Read a snapshot written by `write_snapshot`.

    Raises:
        ConfigurationError: Bad magic or truncated payload.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ConfigurationError(f"{path} is too short for a snapshot header")
    magic, n_modes = _HEADER.unpack_from(raw)
    if magic != constants.SNAPSHOT_MAGIC:
        raise ConfigurationError(f"{path} is not a snapshot (magic {magic!r})")
    payload = raw[_HEADER.size:]
    if len(payload) != 8 * n_modes:
        raise ConfigurationError(f"{path} holds {len(payload)} bytes for K={n_modes}")
    return np.frombuffer(payload, dtype="<f8").astype(float)


def write_json(path: Path, document: Mapping[str, Any]) -> Path:
    """Sorted-key, indented JSON with a trailing newline."""
    path = Path(path)
    path.write_text(json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_table_csv(
    path: Path,
    rows: Sequence[Mapping[str, Any]],
    metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Write report rows as CSV; the columns are the union of row keys in first-seen order."""
    columns: List[str] = []
    for row in rows:
        columns += [key for key in row if key not in columns]
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        for line in _metadata_lines(metadata):
            handle.write(line + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(key, "")) for key in columns])
    return Path(path)


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, (list, tuple)):
        return " ".join(_cell(v) for v in value)
    return str(value)
