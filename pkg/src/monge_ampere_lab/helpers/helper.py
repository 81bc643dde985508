"""
Helper functions
"""
import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence
import numpy as np
import yaml
from logger.logger import logger
from models.config_processor import deep_merge_dicts

_MASK64 = (1 << 64) - 1


def splitmix64(value: int) -> int:
    """One splitmix64 output for the given 64-bit state."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *indices: int) -> int:
    """
    Derives a child seed from a parent seed and a path of indices.

    Each index is folded in with splitmix64(parent ^ splitmix64(index)), so
    (seed, trial) pairs map to well-separated, reproducible child seeds.
    """
    child = seed & _MASK64
    for index in indices:
        child = splitmix64(child ^ splitmix64(index & _MASK64))
    return child


def make_rng(seed: int, *indices: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *indices))


def format_value(value: Any) -> str:
    """Round-trip decimal formatting for CSV cells."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Writes rows under the exact header; floats use repr so they round-trip."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(
                    f"row {count} has {len(row)} cells, header has {len(header)}"
                )
            writer.writerow([format_value(cell) for cell in row])
            count += 1
    logger.debug(f"Wrote {count} rows to {path}")
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", newline="") as f:
        header, *rows = list(csv.reader(f))
    return header, rows


def load_yaml(path: str | Path) -> dict:
    """Loads a YAML (or JSON) mapping; a missing file is an error."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file {path} does not exist")
    with open(path, "r") as file:
        data = yaml.safe_load(file.read())
    return data or {}


def merge_yaml(path: str | Path, data: dict) -> dict:
    """Merges a YAML file on top of an existing configuration mapping."""
    if not path or not Path(path).exists():
        logger.error(f"File {path} does not exist")
        return data
    return deep_merge_dicts(data, load_yaml(path))


def dump_json(data: Any, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path
