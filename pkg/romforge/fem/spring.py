"""
A fixed-end chain of cubic-hardening springs.

This is a small nonlinear model with the same interface as FemModel
(free_dof_count, residual, jacobian, vjp), so the training, reduced-order
and evaluation code can be checked against closed-form answers.  The load is
a single end force, taken from the px component of a LoadParams.
"""

import numpy as np
import scipy.sparse


def spring_chain_residual(k, alpha, n_dof, state, load_scalar):
    """Residual of an n_dof chain fixed at its left end with an end force.

    Spring i connects dof i-1 (or the wall) to dof i with elongation
    d_i = u_i - u_{i-1} and tension s_i = k d_i + alpha d_i^3.  The residual at
    dof i is s_i - s_{i+1} (no spring beyond the last dof) minus the load on
    the last dof.
    """
    state = np.asarray(state, dtype=float).reshape(n_dof)
    tension = _tensions(k, alpha, state)
    res = tension.copy()
    res[:-1] -= tension[1:]
    res[-1] -= load_scalar
    return res


def _tensions(k, alpha, state):
    elong = np.diff(state, prepend=0.0)
    return k * elong + alpha * elong ** 3


class SpringChain:
    """Spring chain with the FemModel interface."""

    def __init__(self, k=1.0, alpha=1.0, n_dof=1):
        if n_dof < 1:
            raise ValueError("need at least one degree of freedom")
        self.k = float(k)
        self.alpha = float(alpha)
        self.n_dof = int(n_dof)

    @property
    def free_dof_count(self):
        """Number of dofs in the chain."""
        return self.n_dof

    def internal_force(self, u_free):
        """Residual without the end load."""
        return spring_chain_residual(self.k, self.alpha, self.n_dof, u_free, 0.0)

    def residual(self, u_free, load):
        """Residual for the end force load[0]."""
        return spring_chain_residual(self.k, self.alpha, self.n_dof, u_free, load[0])

    def jacobian(self, u_free, load=None):
        """Tridiagonal CSR Jacobian of the residual."""
        # pylint: disable=unused-argument
        elong = np.diff(np.asarray(u_free, dtype=float), prepend=0.0)
        stiff = self.k + 3.0 * self.alpha * elong ** 2
        diag = stiff.copy()
        diag[:-1] += stiff[1:]
        off = -stiff[1:]
        idx = np.arange(self.n_dof)
        rows = np.concatenate([idx, idx[1:], idx[:-1]])
        cols = np.concatenate([idx, idx[:-1], idx[1:]])
        return scipy.sparse.coo_matrix(
            (np.concatenate([diag, off, off]), (rows, cols)),
            shape=(self.n_dof, self.n_dof)).tocsr()

    def vjp(self, u_free, load, w_free):
        """w^T J as a vector."""
        return self.jacobian(u_free, load).T @ np.asarray(w_free, dtype=float)
