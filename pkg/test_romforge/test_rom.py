"""
Tests for Galerkin reduced-order solves.
"""

import time
from unittest import mock
from tempfile import TemporaryDirectory
from pathlib import Path
import numpy as np
from romforge import ann, pod, rom
from romforge import manifold as mf
from romforge.fem import SpringChain, LoadParams, NewtonConfig, solve_fom
from romforge.util import ConfigError, ConvergenceError, SingularSystemError, load_csv
from .test_common import TestBase, tiny_model, tiny_dataset


class TestRomConfig(TestBase):
    """Test RomConfig."""

    def test_defaults(self):
        """Defaults follow the rom config section."""
        cfg = rom.RomConfig()
        self.assertEqual((cfg.tolerance, cfg.max_iter, cfg.load_steps), (1e-8, 25, 5))
        self.assertEqual(cfg.initial_guess, "zero")
        cfg = rom.RomConfig.from_conf({"load_steps": 1, "unrelated": True})
        self.assertEqual(cfg.load_steps, 1)

    def test_invalid(self):
        """Bad values are configuration errors."""
        for kwargs in [{"tolerance": 0}, {"max_iter": 0}, {"load_steps": 0},
                       {"initial_guess": "random"}]:
            with self.subTest(kwargs=kwargs), self.assertRaises(ConfigError):
                rom.RomConfig(**kwargs)


class TestRomSolveSpring(TestBase):
    """Test rom_solve on spring chains, where answers are known."""

    def test_scalar(self):
        """One spring, one mode: q solves q + q^3 = 2."""
        result = rom.pod_rom_solve(
            np.ones((1, 1)), SpringChain(1.0, 1.0, 1), LoadParams(2.0, 0.0),
            rom.RomConfig(load_steps=1))
        self.assertAlmostEqual(result.q[0], 1.0, places=8)
        self.assertAlmostEqual(result.u[0], 1.0, places=8)
        self.assertGreater(result.n_iter, 0)
        self.assertLessEqual(result.trace[-1]["reduced_residual_norm"], 1e-8)
        self.assertIsNone(result.trace[-1]["solve_ms"])

    def test_max_iter(self):
        """Running out of iterations raises with the trace attached."""
        cfg = rom.RomConfig(max_iter=1, load_steps=1)
        with self.assertRaises(ConvergenceError) as context:
            rom.pod_rom_solve(
                np.ones((1, 1)), SpringChain(1.0, 1.0, 1), LoadParams(50.0, 0.0), cfg)
        self.assertEqual(len(context.exception.trace), 2)
        self.assertGreater(context.exception.residual_norm, 1e-8)

    def test_singular(self):
        """A repeated basis vector makes the reduced matrix singular."""
        phi = np.array([[0.0, 0.0], [1.0, 1.0]])
        with self.assertRaises(SingularSystemError) as context:
            rom.pod_rom_solve(phi, SpringChain(1.0, 0.0, 2), LoadParams(1.0, 0.0))
        self.assertGreaterEqual(context.exception.condition, rom.MAX_CONDITION)

    def test_encode_guess(self):
        """Encoding the true solution needs no iterations."""
        chain = SpringChain(2.0, 0.5, 3)
        load = LoadParams(1.5, 0.0)
        state = solve_fom(chain, load, NewtonConfig(tolerance=1e-12))
        cfg = rom.RomConfig(load_steps=1, initial_guess="encode")
        result = rom.pod_rom_solve(np.eye(3), chain, load, cfg, u_initial=state)
        self.assertEqual(result.n_iter, 0)
        self.assertAllClose(result.u, state)
        with self.assertRaises(ConfigError):
            rom.pod_rom_solve(np.eye(3), chain, load, cfg)


class TestRomSolveFem(TestBase):
    """Test rom_solve on the coarse cantilever."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.model = tiny_model()
        cls.train = tiny_dataset()
        cls.bases = pod.build_bases(pod.compute_svd(cls.train.U_star), 2, 3, cls.train.n_samples)

    def test_zero_load(self):
        """No load gives q = 0 without any update."""
        manifold = mf.PromAnnManifold(self.bases, ann.init_mlp([2, 4, 3], 0))
        result = rom.rom_solve(manifold, self.model, LoadParams(0.0, 0.0))
        self.assertTrue(np.all(result.q == 0))
        self.assertEqual(result.n_iter, 0)
        self.assertEqual([row["step"] for row in result.trace], [1, 2, 3, 4, 5])

    def test_full_basis(self):
        """With the identity as basis the ROM is the FOM."""
        load = LoadParams(600.0, -900.0)
        state = solve_fom(self.model, load)
        result = rom.pod_rom_solve(np.eye(self.model.free_dof_count), self.model, load)
        self.assertAllClose(result.u, state, rtol=1e-6, atol=1e-10)

    def test_zero_net_matches_pod(self):
        """A zero-weight network gives the POD iterates."""
        load = LoadParams(500.0, -800.0)
        cfg = rom.RomConfig(load_steps=1)
        manifold = mf.PromAnnManifold(self.bases, ann.init_mlp([2, 4, 3], 0).zeroed())
        result_ann = rom.rom_solve(manifold, self.model, load, cfg, record_iterates=True)
        result_pod = rom.pod_rom_solve(
            self.bases.phi, self.model, load, cfg, record_iterates=True)
        # the reduced residual norms differ by the mode scalings, so the two
        # runs may stop one iteration apart
        count = min(len(result_ann.iterates), len(result_pod.iterates)) - 1
        self.assertGreater(count, 0)
        for it_ann, it_pod in zip(result_ann.iterates[:count], result_pod.iterates[:count]):
            self.assertLessEqual(np.linalg.norm(it_ann["u"] - it_pod["u"]),
                                 1e-10 * np.linalg.norm(it_pod["u"]))
        self.assertAllClose(result_ann.u, result_pod.u, rtol=1e-6, atol=1e-12)
        self.assertAllClose(result_ann.q * self.bases.xi, result_pod.q, rtol=1e-6)

    def test_reduced_systems(self):
        """Every update solves its reduced system."""
        net = ann.init_mlp([2, 4, 3], 0)
        manifold = mf.PromAnnManifold(self.bases, net.with_parameters(0.1 * net.parameters()))
        load = LoadParams(60.0, -80.0)
        for solver in [
                lambda: rom.rom_solve(manifold, self.model, load, record_iterates=True),
                lambda: rom.pod_rom_solve(self.bases.phi, self.model, load,
                                          record_iterates=True)]:
            result = solver()
            updates = [it for it in result.iterates if it["delta"] is not None]
            self.assertTrue(updates)
            for it in updates:
                self.assertLessEqual(np.linalg.norm(it["matrix"] @ it["delta"] + it["rhs"]),
                                     1e-10 * np.linalg.norm(it["rhs"]))

    def test_small_load_monotone(self):
        """At small loads |W^T R| never grows between iterations."""
        for load in [LoadParams(60.0, -80.0), LoadParams(-60.0, 80.0), LoadParams(80.0, 60.0)]:
            result = rom.pod_rom_solve(
                self.bases.phi, self.model, load, rom.RomConfig(load_steps=1))
            norms = [row["reduced_residual_norm"] for row in result.trace]
            self.assertGreater(len(norms), 1)
            for before, after in zip(norms[:-1], norms[1:]):
                self.assertLessEqual(after, before)

    def test_solve_time(self):
        """The condition estimate stays out of the timed linear solve."""
        cond = np.linalg.cond
        def slow_cond(matrix):
            time.sleep(0.05)
            return cond(matrix)
        with mock.patch("numpy.linalg.cond", side_effect=slow_cond) as patched:
            result = rom.pod_rom_solve(
                self.bases.phi, self.model, LoadParams(300.0, 300.0),
                rom.RomConfig(load_steps=1))
        self.assertTrue(patched.called)
        solve_ms = [row["solve_ms"] for row in result.trace if row["solve_ms"] is not None]
        self.assertTrue(solve_ms)
        self.assertLess(max(solve_ms), 50.0)

    def test_write_trace(self):
        """Trace CSV has one row per residual check, blank solve time when converged."""
        result = rom.pod_rom_solve(
            self.bases.phi, self.model, LoadParams(300.0, 300.0), rom.RomConfig(load_steps=2))
        with TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "trace.csv"
            rom.write_trace(result.trace, path)
            rows = load_csv(path)
        self.assertEqual(list(rows[0].keys()), rom.TRACE_FIELDS)
        self.assertEqual(len(rows), len(result.trace))
        self.assertEqual(rows[-1]["solve_ms"], "")
        self.assertEqual(rows[-1]["step"], "2")
