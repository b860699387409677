"""
Utility functions for the PMU event classification system.

Contains helper functions for seeding, angle handling, file output and
argument parsing.
"""

import os
import tempfile
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from dotenv import dotenv_values

from .errors import DataFileError, InvalidInputError


def derive_seed(*keys: int) -> int:
    """
    Derive an independent 32-bit seed from a sequence of integer keys.

    Args:
        keys: Integers identifying the stream (master seed, fold index, ...)

    Returns:
        Seed usable with numpy.random.default_rng
    """
    if not keys:
        raise InvalidInputError("derive_seed needs at least one key")
    entropy = [int(k) & 0xFFFFFFFF for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def wrap_angle(degrees):
    """
    Wrap angles in degrees into (-180, 180].

    Values already inside the interval are returned unchanged.

    Args:
        degrees: Scalar or array of angles in degrees

    Returns:
        Wrapped angles, same shape as the input
    """
    degrees = np.asarray(degrees, dtype=float)
    return degrees - 360.0 * np.ceil((degrees - 180.0) / 360.0)


def atomic_write_text(path: Union[str, Path], text: str):
    """
    Write UTF-8 text to a file through a temporary file and a rename.

    Args:
        path: Destination path
        text: Content to write
    """
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    tmp_name = None
    try:
        directory.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as file:
            file.write(text)
        os.replace(tmp_name, path)
    except OSError as e:
        if tmp_name is not None and os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise DataFileError(f"Error writing file {path}: {str(e)}") from e


def format_percentage(fraction: float) -> str:
    """
    Format a fraction as a percentage with two decimals.

    Args:
        fraction: Value in [0, 1]

    Returns:
        Percentage string, e.g. "23.56%"
    """
    return f"{100.0 * fraction:.2f}%"


def format_count_percentage(count: int, total: int) -> str:
    """
    Render a confusion-matrix cell as "count (pp.pp%)".

    Args:
        count: Cell count
        total: Number of test cases

    Returns:
        Formatted cell, e.g. "53 (23.56%)"
    """
    fraction = count / total if total else 0.0
    return f"{int(count)} ({format_percentage(fraction)})"


def parse_int_list(value: str) -> List[int]:
    """
    Parse "1..5" (inclusive range) or "1,2,3" into a list of integers.

    Args:
        value: Range or comma-separated string

    Returns:
        List of integers
    """
    value = value.strip()
    try:
        if ".." not in value:
            return [int(item) for item in value.split(",") if item.strip()]
        low, high = (int(part) for part in value.split("..", 1))
    except ValueError as e:
        raise InvalidInputError(f"Invalid integer list: '{value}'") from e
    if high < low:
        raise InvalidInputError(f"Empty range: '{value}'")
    return list(range(low, high + 1))


def parse_float_list(value: str) -> List[float]:
    """
    Parse a comma-separated list of reals.

    Args:
        value: Comma-separated string, e.g. "0.2,0.5"

    Returns:
        List of floats
    """
    try:
        return [float(item) for item in value.split(",") if item.strip()]
    except ValueError as e:
        raise InvalidInputError(f"Invalid list of numbers: '{value}'") from e


def read_key_value_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Read a flat KEY=VALUE file (comments with #).

    Args:
        path: Path to the file

    Returns:
        Dictionary with lower-cased keys
    """
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"Config file not found: {path}")
    values = dotenv_values(path)
    return {key.strip().lower(): (val or "").strip() for key, val in values.items()}
