"""
POD bases from a snapshot SVD, scaled encode/decode, and baseline errors.

The primary basis phi holds the first n left singular vectors and the
secondary basis phi_bar the next n_bar.  Coordinates are scaled by
xi_i = sigma_i / sqrt(M) (and xi_bar likewise) so every mode spans a similar
range:

    q     = xi^-1 phi^T u
    u_lin = phi xi q
    u_sec = phi_bar xi_bar q_bar
"""

import struct
import logging
import numpy as np
import scipy.linalg
from .processor import BatchProcessor
from .util import (
    mkparent, frozen, FormatError, DimensionMismatchError, RankDeficiencyError)

LOGGER = logging.getLogger(__name__)

BASES_MAGIC = b"ROMB"
BASES_VERSION = 1
# magic, version, N, n, n_bar, M; then phi and phi_bar column-major, xi,
# xi_bar, e_pod_d, e_pod_r, all little-endian doubles.
BASES_HEADER = "<4sIQQQQ"

# Modes with sigma_i / sigma_1 below this count as outside the numerical rank.
RANK_TOLERANCE = 1e-12


class SvdFactors:
    """Thin SVD S = U diag(sigma) V^T with sigma descending."""

    # pylint: disable=too-few-public-methods,invalid-name

    def __init__(self, U, sigma, V):
        self.U = np.asarray(U, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)
        self.V = np.asarray(V, dtype=float)

    @property
    def rank(self):
        """Numerical rank under RANK_TOLERANCE."""
        if not self.sigma.size or self.sigma[0] == 0:
            return 0
        return int(np.sum(self.sigma > RANK_TOLERANCE * self.sigma[0]))


class RomBases:
    """Primary/secondary orthonormal bases with their diagonal scalings.

    e_pod_d and e_pod_r are the POD-baseline mean squared errors used to
    normalize the training losses; they're None until computed.
    """

    def __init__(self, phi, phi_bar, xi, xi_bar, n_samples, e_pod_d=None, e_pod_r=None):
        self.phi = frozen(phi, float)
        self.phi_bar = frozen(phi_bar, float)
        self.xi = frozen(xi, float)
        self.xi_bar = frozen(xi_bar, float)
        self.n_samples = int(n_samples)
        self.e_pod_d = e_pod_d
        self.e_pod_r = e_pod_r
        if self.phi.shape[0] != self.phi_bar.shape[0]:
            raise DimensionMismatchError("primary and secondary bases differ in N")
        if self.xi.shape != (self.n,) or self.xi_bar.shape != (self.n_bar,):
            raise DimensionMismatchError("scalings don't match the basis sizes")
        if np.any(self.xi <= 0) or np.any(self.xi_bar <= 0):
            raise RankDeficiencyError("basis scalings must be positive")

    @property
    def n_dof(self):
        """N."""
        return self.phi.shape[0]

    @property
    def n(self):
        """Primary size."""
        return self.phi.shape[1]

    @property
    def n_bar(self):
        """Secondary size."""
        return self.phi_bar.shape[1]

    def with_errors(self, e_pod_d=None, e_pod_r=None):
        """A copy of these bases with the baseline errors filled in."""
        return RomBases(
            self.phi, self.phi_bar, self.xi, self.xi_bar, self.n_samples,
            self.e_pod_d if e_pod_d is None else float(e_pod_d),
            self.e_pod_r if e_pod_r is None else float(e_pod_r))

    def scaled(self, factor):
        """A copy with both scalings multiplied by factor."""
        return RomBases(
            self.phi, self.phi_bar, self.xi * factor, self.xi_bar * factor,
            self.n_samples, self.e_pod_d, self.e_pod_r)

    def __repr__(self):
        return "RomBases(N=%d, n=%d, n_bar=%d, M=%d)" % (
            self.n_dof, self.n, self.n_bar, self.n_samples)


def compute_svd(snapshot_matrix):
    """Thin SVD of an N x M snapshot matrix, r = min(N, M) modes."""
    smat = np.asarray(snapshot_matrix, dtype=float)
    if smat.ndim != 2 or min(smat.shape) < 1:
        raise ValueError("need a nonempty 2D snapshot matrix")
    if not np.all(np.isfinite(smat)):
        raise ValueError("snapshot matrix has non-finite entries")
    umat, sigma, vtmat = scipy.linalg.svd(
        smat, full_matrices=False, lapack_driver="gesvd")
    LOGGER.info("SVD of %dx%d snapshots: sigma_1 = %g, numerical rank %d",
                smat.shape[0], smat.shape[1], sigma[0],
                SvdFactors(umat, sigma, vtmat.T).rank)
    return SvdFactors(umat, sigma, vtmat.T)

def build_bases(svd, n, n_bar, n_samples):
    """Split the leading n + n_bar left singular vectors into phi and phi_bar.

    Raises RankDeficiencyError if sigma_{n+n_bar} is below the numerical rank
    threshold."""
    if n < 1 or n_bar < 0:
        raise ValueError("need n >= 1 and n_bar >= 0")
    total = n + n_bar
    if total > svd.sigma.size or svd.sigma[total - 1] <= RANK_TOLERANCE * svd.sigma[0]:
        raise RankDeficiencyError(
            "n + n_bar = %d exceeds the numerical rank %d of the snapshots" % (
                total, svd.rank))
    scale = np.sqrt(n_samples)
    return RomBases(
        svd.U[:, :n], svd.U[:, n:total],
        svd.sigma[:n] / scale, svd.sigma[n:total] / scale, n_samples)

def encode(bases, u):
    """q = xi^-1 phi^T u, for one vector or the columns of a matrix."""
    u = np.asarray(u, dtype=float)
    proj = bases.phi.T @ u
    return proj / (bases.xi if u.ndim == 1 else bases.xi[:, None])

def encode_secondary(bases, u):
    """q_bar = xi_bar^-1 phi_bar^T u, the scaled secondary coordinates of u."""
    u = np.asarray(u, dtype=float)
    proj = bases.phi_bar.T @ u
    return proj / (bases.xi_bar if u.ndim == 1 else bases.xi_bar[:, None])

def decode_linear_part(bases, q):
    """phi xi q."""
    q = np.asarray(q, dtype=float)
    return bases.phi @ (q * (bases.xi if q.ndim == 1 else bases.xi[:, None]))

def lift_secondary(bases, q_bar):
    """phi_bar xi_bar q_bar."""
    q_bar = np.asarray(q_bar, dtype=float)
    return bases.phi_bar @ (q_bar * (bases.xi_bar if q_bar.ndim == 1 else bases.xi_bar[:, None]))

def project(bases, u):
    """phi phi^T u, the POD projection on the primary basis."""
    return bases.phi @ (bases.phi.T @ np.asarray(u, dtype=float))

def compute_e_pod_d(bases, train):
    """Mean squared POD reconstruction error (1/(M N)) sum_j |phi phi^T u_j - u_j|^2."""
    umat = train.U_star
    if not umat.shape[1]:
        raise ValueError("need a nonempty training set")
    diff = project(bases, umat) - umat
    return float(np.sum(diff * diff) / umat.size)

def compute_e_pod_r(bases, model, train, nthreads=1):
    """Mean squared residual error of POD projections at the training mu_res.

    (1/(M N)) sum_j |R(phi phi^T u_j; mu_res) - R(u_j; mu_res)|^2, using the
    stored R_star columns for the second term."""
    umat = train.U_star
    if not umat.shape[1]:
        raise ValueError("need a nonempty training set")
    projected = project(bases, umat)
    def sq_error(idx):
        diff = model.residual(projected[:, idx], train.mu_res) - train.R_star[:, idx]
        return float(diff @ diff)
    errors = BatchProcessor(nthreads).map(sq_error, range(umat.shape[1]))
    return float(np.sum(errors) / umat.size)

def coordinate_statistics(bases, snapshots):
    """Per-mode mean, variance, min and max of the reduced coordinates.

    Returns one dict per mode with keys kind, mode (1-based), mean, variance,
    min, max.  kind "original" is the unscaled phi^T u*, whose spread falls
    with the singular values; "primary" and "secondary" are the scaled
    coordinates, whose spread is roughly uniform across modes."""
    rows = []
    for kind, coords in [("original", bases.phi.T @ snapshots.U_star),
                         ("primary", encode(bases, snapshots.U_star)),
                         ("secondary", encode_secondary(bases, snapshots.U_star))]:
        for idx, values in enumerate(coords):
            rows.append({
                "kind": kind, "mode": idx + 1,
                "mean": float(np.mean(values)),
                "variance": float(np.var(values, ddof=1)) if values.size > 1 else 0.0,
                "min": float(np.min(values)), "max": float(np.max(values))})
    return rows

def singular_value_rows(svd):
    """Singular value spectrum rows: index, sigma, relative sigma, cumulative energy."""
    energy = np.cumsum(svd.sigma ** 2)
    energy = energy / energy[-1] if energy[-1] > 0 else energy
    return [{"index": idx + 1, "sigma": float(sig),
             "relative": float(sig / svd.sigma[0]) if svd.sigma[0] > 0 else 0.0,
             "energy": float(eng)}
            for idx, (sig, eng) in enumerate(zip(svd.sigma, energy))]

def save_svd(svd, path):
    """Store SVD factors as a numpy .npz archive."""
    mkparent(path)
    with open(path, "wb") as f_out:
        np.savez(f_out, U=svd.U, sigma=svd.sigma, V=svd.V)

def load_svd(path):
    """Read SVD factors written by save_svd."""
    with np.load(path) as data:
        return SvdFactors(data["U"], data["sigma"], data["V"])

def save_bases(bases, path):
    """Write RomBases in the binary bases format."""
    mkparent(path)
    header = struct.pack(
        BASES_HEADER, BASES_MAGIC, BASES_VERSION,
        bases.n_dof, bases.n, bases.n_bar, bases.n_samples)
    errors = [np.nan if val is None else val for val in (bases.e_pod_d, bases.e_pod_r)]
    payload = np.concatenate([
        bases.phi.ravel(order="F"), bases.phi_bar.ravel(order="F"),
        bases.xi, bases.xi_bar, np.array(errors, dtype=float)])
    with open(path, "wb") as f_out:
        f_out.write(header)
        f_out.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())

def load_bases(path):
    """Read RomBases from the binary bases format."""
    with open(path, "rb") as f_in:
        raw = f_in.read()
    hsize = struct.calcsize(BASES_HEADER)
    if raw[:4] != BASES_MAGIC:
        raise FormatError("not a bases file (bad magic): %s" % path)
    if len(raw) < hsize:
        raise DimensionMismatchError("truncated bases header: %s" % path)
    _, version, n_dof, n, n_bar, n_samples = struct.unpack(BASES_HEADER, raw[:hsize])
    if version != BASES_VERSION:
        raise FormatError("unsupported bases format version %d: %s" % (version, path))
    count = n_dof * n + n_dof * n_bar + n + n_bar + 2
    if len(raw) != hsize + 8 * count:
        raise DimensionMismatchError(
            "bases file %s has %d bytes, header implies %d" % (
                path, len(raw), hsize + 8 * count))
    data = np.frombuffer(raw, dtype="<f8", offset=hsize).astype(float)
    pos = [n_dof * n, n_dof * n_bar, n, n_bar]
    cuts = np.cumsum(pos)
    e_pod_d, e_pod_r = [None if np.isnan(val) else float(val) for val in data[cuts[-1]:]]
    return RomBases(
        data[:cuts[0]].reshape((n_dof, n), order="F"),
        data[cuts[0]:cuts[1]].reshape((n_dof, n_bar), order="F"),
        data[cuts[1]:cuts[2]], data[cuts[2]:cuts[3]], n_samples, e_pod_d, e_pod_r)
