"""
Utility functions and exceptions used throughout the package.

These are largely small wrappers for filesystem operations, CSV output, and
the exception types raised by the numerical modules.
"""

import os
import csv
import warnings
from pathlib import Path
import numpy as np
import yaml


class RomforgeError(Exception):
    """Any sort of romforge-related exception."""


class ConfigError(RomforgeError):
    """Invalid configuration, usage, or mismatched pipeline artifacts."""


class DegenerateStateError(RomforgeError):
    """A FEM state with an inverted element or non-finite assembly output."""


class ConvergenceError(RomforgeError):
    """An iterative solve that did not reach its tolerance.

    residual_norm is the last residual norm seen and trace, if given, is the
    list of per-iteration records collected so far."""

    def __init__(self, msg, residual_norm=None, trace=None):
        super().__init__(msg)
        self.residual_norm = residual_norm
        self.trace = trace or []


class SingularSystemError(ConvergenceError):
    """A reduced system too ill-conditioned to solve."""

    def __init__(self, msg, condition=None, residual_norm=None, trace=None):
        super().__init__(msg, residual_norm, trace)
        self.condition = condition


class RankDeficiencyError(RomforgeError):
    """More modes requested than the snapshot matrix can support."""


class FormatError(RomforgeError):
    """A binary or text file that doesn't match its expected format."""


class DimensionMismatchError(FormatError):
    """File or array dimensions that don't agree with each other."""


class DatasetError(RomforgeError):
    """Too many failed FOM solves while building a dataset."""


class TrainingError(RomforgeError):
    """Training hit a non-finite loss or a degenerate batch."""


class ArtifactExistsError(RomforgeError):
    """Refusing to overwrite existing output without being forced."""


def mkparent(path):
    """Create the parent directory for a filesystem path."""
    # os.makedirs copes with other threads creating the same directory at the
    # same moment.
    parent = Path(path).parent
    os.makedirs(parent, exist_ok=True)

def frozen(arr, dtype=None):
    """A read-only copy of an array."""
    arr = np.array(arr, dtype=dtype)
    arr.flags.writeable = False
    return arr

def yaml_load(path):
    """Load YAML from a file, assuming a dictionary if empty."""
    with open(path) as fin:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", category=DeprecationWarning)
            data = yaml.safe_load(fin)
    # A file with only comments gives None; treat that as an empty dict.
    data = data or {}
    return data

def yaml_dump(data, path):
    """Write a dictionary to a YAML file, making the parent if needed."""
    mkparent(path)
    with open(path, "w") as fout:
        fout.write(yaml.safe_dump(data, default_flow_style=False))

def write_csv(path, fieldnames, rows):
    """Write a list of dictionaries to a CSV file with the given columns.

    Floats are written with repr so the text round-trips exactly."""
    mkparent(path)
    with open(path, "w", newline="") as fout:
        write_csv_handle(fout, fieldnames, rows)

def write_csv_handle(fout, fieldnames, rows):
    """Write a list of dictionaries as CSV to an open file handle."""
    writer = csv.DictWriter(fout, lineterminator="\n", fieldnames=fieldnames)
    writer.writeheader()
    for row in rows:
        row = {key: _csv_text(row.get(key, "")) for key in fieldnames}
        writer.writerow(row)

def load_csv(path):
    """Load a CSV file with a header row as a list of dictionaries."""
    with open(path, newline="", encoding="utf-8-sig") as fin:
        return list(csv.DictReader(fin))

def check_overwrite(path, force=False):
    """Raise ArtifactExistsError if path exists and force isn't set."""
    if Path(path).exists() and not force:
        raise ArtifactExistsError(
            "output exists (use --force to overwrite): %s" % path)

def _csv_text(val):
    if isinstance(val, float):
        return repr(float(val))
    return str(val)
