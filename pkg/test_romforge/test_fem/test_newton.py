"""
Tests for the load-stepping Newton solver.
"""

import numpy as np
import scipy.sparse.linalg
from romforge.fem import (
    LoadParams, NewtonConfig, solve_fom, SpringChain, assemble_linear_stiffness)
from romforge.util import ConvergenceError, ConfigError
from ..test_common import TestBase, tiny_model


class TestNewtonConfig(TestBase):
    """Test NewtonConfig validation."""

    def test_from_conf(self):
        """Missing keys keep their defaults."""
        cfg = NewtonConfig.from_conf({"tolerance": 1e-6})
        self.assertEqual(cfg.tolerance, 1e-6)
        self.assertEqual(cfg.max_iter, 25)
        self.assertEqual(cfg.load_steps, 5)

    def test_invalid(self):
        """Bad values raise ConfigError."""
        with self.assertRaises(ConfigError):
            NewtonConfig(tolerance=0)
        with self.assertRaises(ConfigError):
            NewtonConfig(load_steps=0)


class TestSolveFom(TestBase):
    """Test FOM solves on a coarse cantilever."""

    def setUp(self):
        self.model = tiny_model()

    def test_zero_load(self):
        """A zero load gives u = 0 with no Newton corrections."""
        trace = []
        state = solve_fom(self.model, LoadParams(0.0, 0.0), trace=trace)
        self.assertTrue(np.all(state == 0))
        self.assertEqual(len(trace), 5)
        self.assertTrue(all(row["iter"] == 0 for row in trace))

    def test_converged(self):
        """The returned state satisfies the tolerance at the full load."""
        cfg = NewtonConfig()
        load = LoadParams(1000.0, 500.0)
        trace = []
        state = solve_fom(self.model, load, cfg, trace)
        self.assertLessEqual(np.linalg.norm(self.model.residual(state, load)), cfg.tolerance)
        self.assertEqual(trace[-1]["step"], cfg.load_steps)
        self.assertLessEqual(trace[-1]["residual_norm"], cfg.tolerance)

    def test_load_path(self):
        """One load step and five reach the same equilibrium."""
        load = LoadParams(1000.0, 500.0)
        single = solve_fom(self.model, load, NewtonConfig(tolerance=1e-10, load_steps=1))
        ramped = solve_fom(self.model, load, NewtonConfig(tolerance=1e-10, load_steps=5))
        self.assertLessEqual(np.linalg.norm(single - ramped), 1e-8 * np.linalg.norm(ramped))

    def test_symmetry(self):
        """Flipping py mirrors the y displacements on the symmetric mesh."""
        up = self.model.nodal_displacements(solve_fom(self.model, LoadParams(800.0, 1500.0)))
        down = self.model.nodal_displacements(solve_fom(self.model, LoadParams(800.0, -1500.0)))
        coords = self.model.mesh.node_coordinates
        # node (i, j) mirrors to node (i, ny - j)
        nx, ny = 4, 2
        mirror = [(ny - idx // (nx + 1)) * (nx + 1) + idx % (nx + 1)
                  for idx in range(coords.shape[0])]
        self.assertAllClose(up[:, 0], down[mirror, 0], atol=1e-8)
        self.assertAllClose(up[:, 1], -down[mirror, 1], atol=1e-8)

    def test_linear_regime(self):
        """A tiny load matches one linear solve."""
        load = LoadParams(1.0, 1.0)
        state = solve_fom(self.model, load)
        stiffness = assemble_linear_stiffness(self.model)
        linear = scipy.sparse.linalg.spsolve(stiffness.tocsc(), self.model.external_force(load))
        self.assertAllClose(state, linear, rtol=1e-4, atol=1e-4 * np.abs(linear).max())

    def test_no_convergence(self):
        """Too few iterations raise ConvergenceError with the residual norm."""
        cfg = NewtonConfig(tolerance=1e-14, max_iter=1, load_steps=1)
        with self.assertRaises(ConvergenceError) as context:
            solve_fom(self.model, LoadParams(3000.0, 3000.0), cfg)
        self.assertGreater(context.exception.residual_norm, 0)
        self.assertTrue(context.exception.trace)


class TestSpringChainNewton(TestBase):
    """Test the Newton solver on the spring chain."""

    def test_cubic_root(self):
        """u + u^3 = 2 has the root u = 1."""
        state = solve_fom(SpringChain(1.0, 1.0, 1), LoadParams(2.0, 0.0), NewtonConfig(
            tolerance=1e-12))
        self.assertAlmostEqual(state[0], 1.0, places=10)

    def test_linear_spring(self):
        """With alpha = 0 the root is u = f."""
        state = solve_fom(SpringChain(1.0, 0.0, 1), LoadParams(3.5, 0.0))
        self.assertAlmostEqual(state[0], 3.5, places=10)

    def test_chain(self):
        """Every spring in a chain carries the end force."""
        chain = SpringChain(2.0, 0.5, 4)
        state = solve_fom(chain, LoadParams(3.0, 0.0), NewtonConfig(tolerance=1e-12))
        elong = np.diff(state, prepend=0.0)
        self.assertAllClose(2.0 * elong + 0.5 * elong ** 3, np.full(4, 3.0), rtol=1e-10)
