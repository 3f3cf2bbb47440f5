"""
Parameter sampling, FOM snapshot datasets, and their file formats.

Training, validation and test loads are consecutive pieces of one 2D Halton
stream mapped onto the load box.  Each snapshot stores the converged FOM
state and its residual at a fixed parameter mu_res.
"""

import struct
import logging
from collections import namedtuple
import numpy as np
from scipy.stats import qmc
from .fem import LoadParams, solve_fom
from .processor import BatchProcessor
from .util import (
    mkparent, frozen, write_csv, load_csv, FormatError, DimensionMismatchError,
    DatasetError)

LOGGER = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"ROMF"
SNAPSHOT_VERSION = 1

# Snapshot file layout, little-endian throughout:
# Byte 0   Magic "ROMF"                                       4 bytes
# Byte 4   Format version                                     uint32
# Byte 8   N, free dof count                                  uint64
# Byte 16  M, sample count                                    uint64
# Byte 24  mu_res px                                          double
# Byte 32  mu_res py                                          double
# Byte 40  U_star, N x M column-major                         double
#          R_star, N x M column-major                         double
#          params, M rows of (px, py)                         double
SNAPSHOT_HEADER = "<4sIQQdd"

DatasetSplit = namedtuple("DatasetSplit", ["train", "validation", "test"])


class SnapshotSet:
    """FOM solutions, their loads, and their residuals at mu_res.

    U_star and R_star are N x M with one sample per column; params is M x 2.
    Arrays are read-only after construction.
    """

    def __init__(self, U_star, R_star, params, mu_res, excluded=None):
        # pylint: disable=invalid-name
        U_star = frozen(np.atleast_2d(np.asarray(U_star, dtype=float)))
        R_star = frozen(np.atleast_2d(np.asarray(R_star, dtype=float)))
        params = frozen(np.asarray(params, dtype=float).reshape(-1, 2))
        if U_star.shape != R_star.shape:
            raise DimensionMismatchError(
                "snapshot and residual matrices differ in shape: %s vs %s" % (
                    U_star.shape, R_star.shape))
        if params.shape[0] != U_star.shape[1]:
            raise DimensionMismatchError(
                "%d parameter rows for %d snapshot columns" % (
                    params.shape[0], U_star.shape[1]))
        self.U_star = U_star
        self.R_star = R_star
        self.params = params
        self.mu_res = LoadParams(float(mu_res[0]), float(mu_res[1]))
        self.excluded = list(excluded or [])

    @property
    def n_dof(self):
        """N, the state length."""
        return self.U_star.shape[0]

    @property
    def n_samples(self):
        """M, the number of snapshots."""
        return self.U_star.shape[1]

    def load(self, idx):
        """The LoadParams of sample idx."""
        return LoadParams(float(self.params[idx, 0]), float(self.params[idx, 1]))

    @property
    def loads(self):
        """Every sample's LoadParams, in column order."""
        return [self.load(idx) for idx in range(self.n_samples)]

    def __len__(self):
        return self.n_samples

    def __repr__(self):
        return "SnapshotSet(N=%d, M=%d, mu_res=(%g, %g))" % (
            self.n_dof, self.n_samples, self.mu_res.px, self.mu_res.py)


def halton_point(index):
    """The index-th point (index >= 1) of the 2D Halton sequence in bases 2, 3."""
    if index < 1:
        raise ValueError("Halton index must be at least 1")
    return halton_points(index, 1)[0]

def halton_points(start, count):
    """count consecutive Halton points beginning at index start."""
    engine = qmc.Halton(d=2, scramble=False)
    engine.fast_forward(int(start))
    return engine.random(int(count))

def domain_bounds(domain):
    """((px_min, px_max), (py_min, py_max)) from a config dict or a pair of pairs."""
    if hasattr(domain, "keys"):
        domain = (domain["px"], domain["py"])
    (px_lo, px_hi), (py_lo, py_hi) = domain
    return (float(px_lo), float(px_hi)), (float(py_lo), float(py_hi))

def sample_parameters(count, domain, start=1):
    """count Halton loads mapped affinely onto the load box, from index start."""
    if count < 1:
        raise ValueError("need at least one sample")
    (px_lo, px_hi), (py_lo, py_hi) = domain_bounds(domain)
    points = halton_points(start, count)
    return [LoadParams(px_lo + (px_hi - px_lo) * hx, py_lo + (py_hi - py_lo) * hy)
            for hx, hy in points]

def sample_extrapolation(count, domain, band, seed):
    """count uniform random loads in the band of width band around the box.

    Points are drawn from the enlarged box and kept only if they fall
    outside the original one."""
    (px_lo, px_hi), (py_lo, py_hi) = domain_bounds(domain)
    if band <= 0:
        raise ValueError("extrapolation band must be positive")
    rng = np.random.default_rng(seed)
    lower = np.array([px_lo - band, py_lo - band])
    upper = np.array([px_hi + band, py_hi + band])
    found = []
    while len(found) < count:
        points = rng.uniform(lower, upper, size=(max(count, 16), 2))
        inside = ((points[:, 0] >= px_lo) & (points[:, 0] <= px_hi) &
                  (points[:, 1] >= py_lo) & (points[:, 1] <= py_hi))
        found.extend(points[~inside].tolist())
    return [LoadParams(px, py) for px, py in found[:count]]

def split_parameters(sampling):
    """Train/validation/test loads from a "sampling" config section.

    The three lists are consecutive, disjoint pieces of the Halton stream."""
    sizes = [int(sampling[key]) for key in ["n_train", "n_validation", "n_test"]]
    params = sample_parameters(sum(sizes), sampling["domain"])
    train = params[:sizes[0]]
    validation = params[sizes[0]:sizes[0] + sizes[1]]
    test = params[sizes[0] + sizes[1]:]
    return train, validation, test

def generate_dataset(model, params, mu_res, cfg, nthreads=1, max_failure_fraction=0.1):
    """Solve the FOM at every load and store states plus residuals at mu_res.

    Failed solves are logged with their load and left out; their indices are
    kept on the returned set's excluded list.  More than max_failure_fraction
    failures raises DatasetError."""
    params = list(params)
    mu_res = LoadParams(*mu_res)
    def solve_one(load):
        state = solve_fom(model, load, cfg)
        return state, model.residual(state, mu_res)
    LOGGER.info("Solving %d FOM samples", len(params))
    results = BatchProcessor(nthreads).run(solve_one, params)
    columns_u, columns_r, kept, excluded = [], [], [], []
    for result, load in zip(results, params):
        if result.ok:
            columns_u.append(result.value[0])
            columns_r.append(result.value[1])
            kept.append(load)
        else:
            LOGGER.warning("Excluding sample %d at load (%g, %g): %s",
                           result.index, load[0], load[1], result.error)
            excluded.append(result.index)
    if not kept or len(excluded) > max_failure_fraction * len(params):
        raise DatasetError("%d of %d FOM solves failed" % (len(excluded), len(params)))
    return SnapshotSet(
        np.column_stack(columns_u), np.column_stack(columns_r),
        np.array(kept, dtype=float), mu_res, excluded)

def subset(snapshots, indices):
    """A new SnapshotSet holding only the given sample columns."""
    indices = np.asarray(indices, dtype=np.int64)
    return SnapshotSet(
        snapshots.U_star[:, indices], snapshots.R_star[:, indices],
        snapshots.params[indices], snapshots.mu_res)

def save_snapshots(snapshots, path):
    """Write a SnapshotSet in the binary snapshot format."""
    mkparent(path)
    header = struct.pack(
        SNAPSHOT_HEADER, SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
        snapshots.n_dof, snapshots.n_samples,
        snapshots.mu_res.px, snapshots.mu_res.py)
    with open(path, "wb") as f_out:
        f_out.write(header)
        f_out.write(_f8_bytes(snapshots.U_star.ravel(order="F")))
        f_out.write(_f8_bytes(snapshots.R_star.ravel(order="F")))
        f_out.write(_f8_bytes(snapshots.params.ravel(order="C")))

def load_snapshots(path):
    """Read a SnapshotSet from the binary snapshot format.

    Raises FormatError for a wrong magic or version and
    DimensionMismatchError if the payload size disagrees with the header."""
    with open(path, "rb") as f_in:
        raw = f_in.read()
    hsize = struct.calcsize(SNAPSHOT_HEADER)
    if raw[:4] != SNAPSHOT_MAGIC:
        raise FormatError("not a snapshot file (bad magic): %s" % path)
    if len(raw) < hsize:
        raise DimensionMismatchError("truncated snapshot header: %s" % path)
    _, version, n_dof, n_samples, mu_px, mu_py = struct.unpack(
        SNAPSHOT_HEADER, raw[:hsize])
    if version != SNAPSHOT_VERSION:
        raise FormatError("unsupported snapshot format version %d: %s" % (version, path))
    expected = hsize + 8 * (2 * n_dof * n_samples + 2 * n_samples)
    if len(raw) != expected:
        raise DimensionMismatchError(
            "snapshot file %s has %d bytes, header implies %d" % (path, len(raw), expected))
    data = np.frombuffer(raw, dtype="<f8", offset=hsize).astype(float)
    size = n_dof * n_samples
    return SnapshotSet(
        data[:size].reshape((n_dof, n_samples), order="F"),
        data[size:2 * size].reshape((n_dof, n_samples), order="F"),
        data[2 * size:].reshape((n_samples, 2)),
        (mu_px, mu_py))

def save_params_csv(params, path):
    """Write loads as CSV with columns index, px, py."""
    rows = [{"index": idx, "px": float(load[0]), "py": float(load[1])}
            for idx, load in enumerate(params)]
    write_csv(path, ["index", "px", "py"], rows)

def load_params_csv(path):
    """Read loads written by save_params_csv."""
    return [LoadParams(float(row["px"]), float(row["py"])) for row in load_csv(path)]

def _f8_bytes(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()
