"""
Tests for PROM-ANN and POD manifolds.
"""

import numpy as np
from romforge import ann, pod
from romforge import manifold as mf
from romforge.snapshots import SnapshotSet
from .test_common import TestBase, random_orthonormal


def make_bases(n_dof=10, n=2, n_bar=3, seed=0):
    """RomBases on random orthonormal columns with unequal scalings."""
    both = random_orthonormal(n_dof, n + n_bar, seed)
    xi = np.linspace(2.0, 1.0, n)
    xi_bar = np.linspace(0.5, 0.1, n_bar)
    return pod.RomBases(both[:, :n], both[:, n:], xi, xi_bar, 20)


class TestPromAnnManifold(TestBase):
    """Test the scaled and original PROM-ANN decoders."""

    def setUp(self):
        self.bases = make_bases()
        self.net = ann.init_mlp([2, 6, 3], 0)
        self.manifold = mf.PromAnnManifold(self.bases, self.net)

    def test_zero(self):
        """The scaled variant maps 0 to 0 both ways."""
        self.assertTrue(np.all(mf.encode(self.manifold, np.zeros(10)) == 0))
        self.assertTrue(np.all(mf.decode(self.manifold, np.zeros(2)) == 0))

    def test_original_reference(self):
        """The original variant encodes u_ref to 0."""
        u_ref = np.arange(10.0)
        manifold = mf.PromAnnManifold(self.bases, self.net, "original", u_ref)
        self.assertAllClose(manifold.encode(u_ref), np.zeros(2))
        self.assertAllClose(manifold.decode(np.zeros(2)), u_ref)

    def test_original_manifold(self):
        """original_manifold uses the training mean as reference."""
        rng = np.random.default_rng(1)
        umat = rng.standard_normal((10, 4))
        train = SnapshotSet(umat, umat, np.zeros((4, 2)), (0, 0))
        manifold = mf.original_manifold(self.bases, self.net, train)
        self.assertEqual(manifold.variant, "original")
        self.assertAllClose(manifold.u_ref, umat.mean(axis=1))

    def test_zero_weights(self):
        """A zero network leaves pure POD on the primary modes."""
        manifold = self.manifold.with_net(self.net.zeroed())
        q = np.array([0.3, -0.8])
        expected = self.bases.phi @ (self.bases.xi * q)
        self.assertAllClose(manifold.decode(q), expected, rtol=1e-14, atol=1e-15)
        self.assertAllClose(manifold.decode_jacobian(q), self.bases.phi * self.bases.xi,
                            rtol=1e-14, atol=1e-15)
        rng = np.random.default_rng(2)
        umat = rng.standard_normal((10, 5))
        self.assertAllClose(
            mf.reconstruct_batch(manifold, umat), self.bases.phi @ (self.bases.phi.T @ umat),
            atol=1e-12)

    def test_decode_jacobian(self):
        """The decoder Jacobian matches central differences."""
        net = ann.init_mlp([2, 6, 3], 4)
        manifold = self.manifold.with_net(net)
        q = np.array([0.4, -0.2])
        jac = mf.decode_jacobian(manifold, q)
        step = 1e-6
        for col in range(2):
            shift = np.zeros(2)
            shift[col] = step
            fdiff = (manifold.decode(q + shift) - manifold.decode(q - shift)) / (2 * step)
            self.assertAllClose(jac[:, col], fdiff, rtol=1e-6, atol=1e-9)

    def test_batch_consistency(self):
        """A batch of one gives the single-sample results exactly."""
        q = np.array([0.1, 0.7])
        self.assertTrue(np.array_equal(
            self.manifold.decode_batch(q[None, :])[:, 0], self.manifold.decode(q)))
        state = self.manifold.decode(q)
        self.assertTrue(np.array_equal(
            self.manifold.encode_batch(state[:, None])[0], self.manifold.encode(state)))

    def test_on_manifold(self):
        """States on the manifold reconstruct exactly."""
        rng = np.random.default_rng(3)
        batch_q = rng.standard_normal((6, 2))
        umat = self.manifold.decode_batch(batch_q)
        self.assertAllClose(self.manifold.encode_batch(umat), batch_q, atol=1e-12)
        self.assertAllClose(self.manifold.reconstruct_batch(umat), umat, atol=1e-12)
        self.assertAllClose(self.manifold.secondary_targets(umat),
                            ann.forward(self.net, batch_q), atol=1e-12)

    def test_net_cotangents(self):
        """c . D(q) changes with the weights like (phi_bar xi_bar)^T c . N(q)."""
        rng = np.random.default_rng(4)
        cotan = rng.standard_normal((10, 3))
        out = self.manifold.net_cotangents(cotan)
        self.assertEqual(out.shape, (3, 3))
        self.assertAllClose(out, (self.manifold.secondary_basis.T @ cotan).T)

    def test_mismatch(self):
        """Network and bases sizes must agree."""
        with self.assertRaises(ValueError):
            mf.PromAnnManifold(self.bases, ann.init_mlp([3, 4, 3], 0))
        with self.assertRaises(ValueError):
            mf.PromAnnManifold(self.bases, self.net, "other")


class TestPodManifold(TestBase):
    """Test the linear POD decoder."""

    def test_pod(self):
        """phi^T and phi, with a constant Jacobian."""
        phi = random_orthonormal(8, 3, 5)
        manifold = mf.PodManifold(phi)
        self.assertEqual((manifold.n, manifold.n_dof), (3, 8))
        q = np.array([1.0, 2.0, -1.0])
        self.assertAllClose(manifold.encode(manifold.decode(q)), q, atol=1e-12)
        self.assertIs(manifold.decode_jacobian(q), manifold.phi)
        umat = np.random.default_rng(0).standard_normal((8, 2))
        self.assertAllClose(manifold.reconstruct_batch(umat), phi @ phi.T @ umat)
