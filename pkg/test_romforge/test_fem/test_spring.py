"""
Tests for the spring chain model.
"""

import numpy as np
from romforge.fem import SpringChain, spring_chain_residual, LoadParams
from ..test_common import TestBase


class TestSpringChain(TestBase):
    """Test spring chain residuals, Jacobians and vjps."""

    def test_zero(self):
        """u = 0 and no load gives R = 0."""
        chain = SpringChain(1.0, 1.0, 3)
        self.assertAllClose(chain.residual(np.zeros(3), LoadParams(0, 0)), np.zeros(3))

    def test_linear(self):
        """With alpha = 0 one dof gives R = u - f."""
        self.assertAlmostEqual(spring_chain_residual(1.0, 0.0, 1, [2.5], 1.0)[0], 1.5)

    def test_residual_by_hand(self):
        """Two dofs, u = (1, 3): tensions 2 and 10."""
        res = spring_chain_residual(1.0, 1.0, 2, [1.0, 3.0], 4.0)
        self.assertAllClose(res, [2.0 - 10.0, 10.0 - 4.0])

    def test_jacobian(self):
        """The Jacobian matches central differences."""
        chain = SpringChain(1.5, 0.7, 4)
        state = np.array([0.1, 0.3, 0.2, 0.6])
        jac = chain.jacobian(state).toarray()
        step = 1e-6
        for col in range(4):
            shift = np.zeros(4)
            shift[col] = step
            fdiff = (chain.internal_force(state + shift) -
                     chain.internal_force(state - shift)) / (2 * step)
            self.assertAllClose(jac[:, col], fdiff, rtol=1e-7, atol=1e-9)
        self.assertAllClose(jac, jac.T)

    def test_one_dof(self):
        """A single dof gives a 1x1 Jacobian k + 3 alpha u^2."""
        chain = SpringChain(1.0, 1.0, 1)
        self.assertAlmostEqual(chain.jacobian(np.array([2.0])).toarray()[0, 0], 13.0)
        self.assertAllClose(chain.vjp(np.array([2.0]), None, np.array([0.5])), [6.5])
