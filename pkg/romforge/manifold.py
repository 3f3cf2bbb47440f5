"""
Nonlinear manifold decoders built from POD bases and a network.

The scaled variant works in unit-range coordinates with no reference state:

    E(u) = xi^-1 phi^T u
    D(q) = phi xi q + phi_bar xi_bar N(q)

so D(E(0)) = 0 and E(D(q)) = q.  The original variant subtracts a reference
state u_ref (the training mean) and skips the scalings:

    E(u) = phi^T (u - u_ref)
    D(q) = u_ref + phi q + phi_bar N(q)

PodManifold is the plain linear decoder D(q) = phi q used as the POD
baseline.  State batches are N x m matrices (one sample per column) and
coordinate batches are (m, n) arrays (one sample per row), matching the
network's convention.
"""

import numpy as np
from . import ann

VARIANTS = ("scaled", "original")


class PromAnnManifold:
    """Encoder/decoder pair composing RomBases with an MlpModel."""

    def __init__(self, bases, net, variant="scaled", u_ref=None):
        if variant not in VARIANTS:
            raise ValueError("variant must be one of %s" % ", ".join(VARIANTS))
        if net.n_in != bases.n or net.n_out != bases.n_bar:
            raise ValueError("network maps %d -> %d but bases have n=%d, n_bar=%d" % (
                net.n_in, net.n_out, bases.n, bases.n_bar))
        self.bases = bases
        self.net = net
        self.variant = variant
        if variant == "original":
            u_ref = np.zeros(bases.n_dof) if u_ref is None else np.asarray(u_ref, dtype=float)
            if u_ref.shape != (bases.n_dof,):
                raise ValueError("reference state must have length %d" % bases.n_dof)
            self.u_ref = u_ref
            self._primary = bases.phi
            self._secondary = bases.phi_bar
        else:
            self.u_ref = None
            self._primary = bases.phi * bases.xi
            self._secondary = bases.phi_bar * bases.xi_bar

    @property
    def n(self):
        """Latent size."""
        return self.bases.n

    @property
    def n_dof(self):
        """State size N."""
        return self.bases.n_dof

    @property
    def secondary_basis(self):
        """The N x n_bar matrix multiplying N(q) in the decoder."""
        return self._secondary

    def with_net(self, net):
        """The same manifold with a different network."""
        return PromAnnManifold(self.bases, net, self.variant, self.u_ref)

    def encode(self, u):
        """Latent coordinates of one state (N,) or of the columns of N x m."""
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            return self.encode(u[:, None])[:, 0]
        if self.variant == "original":
            return self.bases.phi.T @ (u - self.u_ref[:, None])
        return (self.bases.phi.T @ u) / self.bases.xi[:, None]

    def encode_batch(self, umat):
        """(m, n) latent rows for the N x m state columns."""
        return self.encode(umat).T

    def secondary_targets(self, umat):
        """(m, n_bar) secondary coordinates the network should predict."""
        umat = np.asarray(umat, dtype=float)
        if self.variant == "original":
            return (self.bases.phi_bar.T @ (umat - self.u_ref[:, None])).T
        return ((self.bases.phi_bar.T @ umat) / self.bases.xi_bar[:, None]).T

    def decode(self, q):
        """State for one latent vector (n,)."""
        return self.decode_batch(np.asarray(q, dtype=float)[None, :])[:, 0]

    def decode_batch(self, batch_q):
        """N x m states for (m, n) latent rows."""
        batch_q = np.atleast_2d(np.asarray(batch_q, dtype=float))
        umat = self._primary @ batch_q.T + self._secondary @ ann.forward(self.net, batch_q).T
        if self.u_ref is not None:
            umat = umat + self.u_ref[:, None]
        return umat

    def decode_jacobian(self, q):
        """dD/dq, an N x n matrix."""
        return self._primary + self._secondary @ ann.input_jacobian(self.net, q)

    def reconstruct_batch(self, umat):
        """D(E(u_j)) for every column u_j of an N x m matrix."""
        return self.decode_batch(self.encode_batch(umat))

    def net_cotangents(self, cotangents):
        """Map N x m state-space cotangents onto (m, n_bar) network outputs.

        Only the secondary term of D depends on the weights, so c . D(q)
        changes with the weights through (secondary_basis^T c) . N(q)."""
        return (self._secondary.T @ np.asarray(cotangents, dtype=float)).T

    def __repr__(self):
        return "PromAnnManifold(%s, n=%d, n_bar=%d, net=%r)" % (
            self.variant, self.bases.n, self.bases.n_bar, self.net)


class PodManifold:
    """Linear decoder D(q) = phi q on an orthonormal basis."""

    def __init__(self, phi):
        self.phi = np.asarray(phi, dtype=float)
        if self.phi.ndim != 2:
            raise ValueError("basis must be an N x n matrix")

    @property
    def n(self):
        """Latent size."""
        return self.phi.shape[1]

    @property
    def n_dof(self):
        """State size N."""
        return self.phi.shape[0]

    def encode(self, u):
        """phi^T u."""
        return self.phi.T @ np.asarray(u, dtype=float)

    def encode_batch(self, umat):
        """(m, n) latent rows for N x m state columns."""
        return self.encode(umat).T

    def decode(self, q):
        """phi q."""
        return self.phi @ np.asarray(q, dtype=float)

    def decode_batch(self, batch_q):
        """N x m states for (m, n) latent rows."""
        return self.phi @ np.atleast_2d(np.asarray(batch_q, dtype=float)).T

    def decode_jacobian(self, q):
        """phi, independent of q."""
        # pylint: disable=unused-argument
        return self.phi

    def reconstruct_batch(self, umat):
        """phi phi^T u_j for every column."""
        return self.decode_batch(self.encode_batch(umat))

    def __repr__(self):
        return "PodManifold(N=%d, n=%d)" % self.phi.shape


def original_manifold(bases, net, train):
    """Unscaled manifold whose reference state is the mean training snapshot."""
    return PromAnnManifold(bases, net, "original", np.mean(train.U_star, axis=1))

def encode(manifold, u):
    """E(u)."""
    return manifold.encode(u)

def decode(manifold, q):
    """D(q)."""
    return manifold.decode(q)

def decode_jacobian(manifold, q):
    """dD/dq."""
    return manifold.decode_jacobian(q)

def reconstruct_batch(manifold, umat):
    """D(E(u_j)) column by column."""
    return manifold.reconstruct_batch(umat)
