"""
Plane-strain compressible Neo-Hookean cantilever on linear triangles.

A FemModel defines the discrete residual R(u; load) = f_int(u) - f_ext(load)
on the free degrees of freedom only, its sparse Jacobian, and vector-Jacobian
products.  Displacement vectors everywhere are free-dof vectors of length
free_dof_count; the clamped left-edge dofs are zeros that only get reinserted
by full_vector.

Element kinematics use one-point (constant strain) quadrature, so each
triangle has one deformation gradient F.  With J = det F the first
Piola-Kirchhoff stress is

    P = mu (F - F^-T) + lambda ln(J) F^-T
"""

import logging
from collections import namedtuple
import numpy as np
import scipy.sparse
from ..util import DegenerateStateError

LOGGER = logging.getLogger(__name__)

# Shape function gradients of the reference triangle with respect to the
# natural coordinates (xi, eta), one row per node.
_DN_DNATURAL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


class LoadParams(namedtuple("LoadParams", ["px", "py"])):
    """Constant edge traction (px, py) in N/m applied on the right edge."""

    __slots__ = ()

    def scaled(self, factor):
        """This load multiplied by a scalar factor."""
        return LoadParams(self.px * factor, self.py * factor)

    def as_array(self):
        """The load as a length-2 float array."""
        return np.array([self.px, self.py], dtype=float)


def lame_parameters(youngs_modulus, poisson_ratio):
    """Lame constants (mu, lambda) from Young's modulus and Poisson's ratio."""
    mu = youngs_modulus / (2.0 * (1.0 + poisson_ratio))
    lam = youngs_modulus * poisson_ratio / (
        (1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio))
    return mu, lam


class FemModel:
    """Discrete hyperelastic cantilever: mesh, material, and clamped dofs.

    Node n owns dofs 2n (x) and 2n+1 (y).  Everything set up here is read-only
    afterwards, so residual, jacobian and vjp may be called concurrently on
    distinct states.
    """

    def __init__(self, mesh, youngs_modulus=3.0e6, poisson_ratio=0.40):
        if not youngs_modulus > 0:
            raise ValueError("Young's modulus must be positive")
        if not 0 < poisson_ratio < 0.5:
            raise ValueError("Poisson's ratio must be in (0, 0.5)")
        self.mesh = mesh
        self.youngs_modulus = float(youngs_modulus)
        self.poisson_ratio = float(poisson_ratio)
        self.mu, self.lam = lame_parameters(self.youngs_modulus, self.poisson_ratio)
        self.n_total = 2 * mesh.n_nodes
        dirichlet = np.zeros(self.n_total, dtype=bool)
        dirichlet[2 * mesh.left_edge_nodes] = True
        dirichlet[2 * mesh.left_edge_nodes + 1] = True
        dirichlet.flags.writeable = False
        self.dirichlet_dofs = dirichlet
        self.free_dofs = np.flatnonzero(~dirichlet)
        free_index = np.full(self.n_total, -1, dtype=np.int64)
        free_index[self.free_dofs] = np.arange(self.free_dofs.size)
        # (ntri, 6) global dof numbers per element, ordered x0 y0 x1 y1 x2 y2
        tri = mesh.triangles
        self._edofs = np.stack(
            [2 * tri[:, 0], 2 * tri[:, 0] + 1,
             2 * tri[:, 1], 2 * tri[:, 1] + 1,
             2 * tri[:, 2], 2 * tri[:, 2] + 1], axis=1)
        self._efree = free_index[self._edofs]
        self._area, self._grad = self._shape_gradients()
        rows = np.broadcast_to(self._efree[:, :, None], (tri.shape[0], 6, 6))
        cols = np.broadcast_to(self._efree[:, None, :], (tri.shape[0], 6, 6))
        self._pattern = (rows >= 0) & (cols >= 0)
        self._rows = rows[self._pattern]
        self._cols = cols[self._pattern]
        self._unit_loads = self._edge_load_vectors()
        LOGGER.debug("FemModel: %d nodes, %d free dofs, mu=%g, lambda=%g",
                     mesh.n_nodes, self.free_dof_count, self.mu, self.lam)

    @property
    def free_dof_count(self):
        """N, the length of every state and residual vector."""
        return self.free_dofs.size

    def full_vector(self, u_free):
        """Length-N_total vector with Dirichlet zeros reinserted."""
        full = np.zeros(self.n_total)
        full[self.free_dofs] = u_free
        return full

    def nodal_displacements(self, u_free):
        """(n_nodes, 2) array of x/y displacement per node."""
        return self.full_vector(u_free).reshape(-1, 2)

    def external_force(self, load):
        """Consistent nodal forces of the right-edge traction, free dofs only."""
        unit_x, unit_y = self._unit_loads
        return load[0] * unit_x + load[1] * unit_y

    def tributary_lengths(self):
        """Right-edge length attributed to each right-edge node, as a dict."""
        coords = self.mesh.node_coordinates
        nodes = self.mesh.right_edge_nodes
        nodes = nodes[np.argsort(coords[nodes, 1], kind="stable")]
        lengths = dict.fromkeys(nodes.tolist(), 0.0)
        for node_a, node_b in zip(nodes[:-1], nodes[1:]):
            seg = float(np.linalg.norm(coords[node_b] - coords[node_a]))
            lengths[int(node_a)] += seg / 2.0
            lengths[int(node_b)] += seg / 2.0
        return lengths

    def deformation_gradients(self, u_free):
        """Per-element deformation gradient F, shape (ntri, 2, 2).

        Raises DegenerateStateError for non-finite input or det F <= 0."""
        u_free = np.asarray(u_free, dtype=float)
        if u_free.shape != (self.free_dof_count,):
            raise ValueError("state must have length %d, not %s" % (
                self.free_dof_count, u_free.shape))
        if not np.all(np.isfinite(u_free)):
            raise DegenerateStateError("state has non-finite entries")
        uel = self.full_vector(u_free)[self._edofs].reshape(-1, 3, 2)
        defgrad = np.einsum("eai,eaJ->eiJ", uel, self._grad)
        defgrad[:, 0, 0] += 1.0
        defgrad[:, 1, 1] += 1.0
        det = np.linalg.det(defgrad)
        bad = np.flatnonzero(~(det > 0))
        if bad.size:
            raise DegenerateStateError(
                "%d inverted element(s), first %d with det F = %g" % (
                    bad.size, bad[0], det[bad[0]]))
        return defgrad

    def internal_force(self, u_free):
        """Internal nodal forces at the free dofs."""
        defgrad = self.deformation_gradients(u_free)
        finv_t = np.transpose(np.linalg.inv(defgrad), (0, 2, 1))
        log_j = np.log(np.linalg.det(defgrad))
        stress = self.mu * (defgrad - finv_t) + self.lam * log_j[:, None, None] * finv_t
        fel = np.einsum("eiJ,eaJ->eai", stress, self._grad) * self._area[:, None, None]
        return self._scatter(fel.reshape(-1, 6))

    def residual(self, u_free, load):
        """R(u; load) = f_int(u) - f_ext(load) on the free dofs."""
        res = self.internal_force(u_free) - self.external_force(load)
        if not np.all(np.isfinite(res)):
            raise DegenerateStateError("residual has non-finite entries")
        return res

    def element_stiffness(self, u_free):
        """Consistent tangent stiffness of every element, shape (ntri, 6, 6)."""
        defgrad = self.deformation_gradients(u_free)
        finv = np.linalg.inv(defgrad)
        log_j = np.log(np.linalg.det(defgrad))
        eye = np.eye(2)
        # dP_iJ/dF_kL
        tangent = (
            self.mu * np.einsum("ik,JL->iJkL", eye, eye)[None]
            + (self.mu - self.lam * log_j)[:, None, None, None, None]
            * np.einsum("eLi,eJk->eiJkL", finv, finv)
            + self.lam * np.einsum("eJi,eLk->eiJkL", finv, finv))
        kel = np.einsum("eaJ,eiJkL,ebL->eaibk", self._grad, tangent, self._grad)
        kel *= self._area[:, None, None, None, None]
        kel = kel.reshape(-1, 6, 6)
        if not np.all(np.isfinite(kel)):
            raise DegenerateStateError("element stiffness has non-finite entries")
        return kel

    def jacobian(self, u_free, load=None):
        """Sparse CSR Jacobian dR/du on the free dofs.

        The external force doesn't depend on u, so load is accepted only for a
        uniform call signature and ignored."""
        # pylint: disable=unused-argument
        return self._assemble(self.element_stiffness(u_free))

    def vjp(self, u_free, load, w_free):
        """w^T J(u) as a free-dof vector, assembled element by element."""
        # pylint: disable=unused-argument
        kel = self.element_stiffness(u_free)
        wel = self.full_vector(w_free)[self._edofs]
        return self._scatter(np.einsum("eab,ea->eb", kel, wel))

    def linear_stiffness(self):
        """Small-strain stiffness matrix from the plane-strain B-matrix form."""
        ntri = self.mesh.n_triangles
        bmat = np.zeros((ntri, 3, 6))
        bmat[:, 0, 0::2] = self._grad[:, :, 0]
        bmat[:, 1, 1::2] = self._grad[:, :, 1]
        bmat[:, 2, 0::2] = self._grad[:, :, 1]
        bmat[:, 2, 1::2] = self._grad[:, :, 0]
        lam, mu = self.lam, self.mu
        dmat = np.array([
            [lam + 2 * mu, lam, 0.0],
            [lam, lam + 2 * mu, 0.0],
            [0.0, 0.0, mu]])
        kel = np.einsum("eia,ij,ejb->eab", bmat, dmat, bmat) * self._area[:, None, None]
        return self._assemble(kel)

    def _assemble(self, kel):
        nfree = self.free_dof_count
        return scipy.sparse.coo_matrix(
            (kel[self._pattern], (self._rows, self._cols)),
            shape=(nfree, nfree)).tocsr()

    def _scatter(self, fel):
        """Sum (ntri, 6) element vectors into a free-dof vector."""
        full = np.bincount(
            self._edofs.ravel(), weights=fel.ravel(), minlength=self.n_total)
        return full[self.free_dofs]

    def _shape_gradients(self):
        xyz = self.mesh.node_coordinates[self.mesh.triangles]
        jac = np.stack([xyz[:, 1] - xyz[:, 0], xyz[:, 2] - xyz[:, 0]], axis=2)
        area = 0.5 * np.linalg.det(jac)
        grad = np.einsum("ak,ekJ->eaJ", _DN_DNATURAL, np.linalg.inv(jac))
        return area, grad

    def _edge_load_vectors(self):
        unit_x = np.zeros(self.n_total)
        unit_y = np.zeros(self.n_total)
        for node, length in self.tributary_lengths().items():
            unit_x[2 * node] = length
            unit_y[2 * node + 1] = length
        return unit_x[self.free_dofs], unit_y[self.free_dofs]


def assemble_residual(model, state, load):
    """R(u; load) on the free dofs."""
    return model.residual(state, load)

def assemble_jacobian(model, state, load=None):
    """Sparse CSR dR/du on the free dofs."""
    return model.jacobian(state, load)

def residual_vjp(model, state, load, w):
    """w^T dR/du on the free dofs."""
    return model.vjp(state, load, w)

def assemble_linear_stiffness(model):
    """Linear-elastic stiffness of the same mesh and material."""
    return model.linear_stiffness()
