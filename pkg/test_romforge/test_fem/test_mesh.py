"""
Tests for structured cantilever meshes.
"""

from tempfile import TemporaryDirectory
from pathlib import Path
import numpy as np
from romforge.fem import Mesh, build_cantilever_mesh
from ..test_common import TestBase


class TestBuildCantileverMesh(TestBase):
    """Test mesh construction and its invariants."""

    def test_unit_square(self):
        """A single cell should give two triangles of area 0.5."""
        mesh = build_cantilever_mesh(1, 1, 1.0, 1.0)
        self.assertEqual(mesh.n_nodes, 4)
        self.assertEqual(mesh.n_triangles, 2)
        self.assertAllClose(mesh.areas, [0.5, 0.5])

    def test_counts(self):
        """Node and triangle counts follow (nx+1)(ny+1) and 2 nx ny."""
        mesh = build_cantilever_mesh(40, 10, 2.0, 0.5)
        self.assertEqual(mesh.n_nodes, 451)
        self.assertEqual(mesh.n_triangles, 800)
        self.assertTrue(np.all(mesh.areas > 0))
        self.assertAlmostEqual(mesh.areas.sum(), 1.0)

    def test_edges(self):
        """The edge node sets hold the nodes at x=0 and x=length."""
        mesh = build_cantilever_mesh(2, 1, 2.0, 0.5)
        self.assertEqual(list(mesh.left_edge_nodes), [0, 3])
        self.assertEqual(list(mesh.right_edge_nodes), [2, 5])
        coords = mesh.node_coordinates
        self.assertTrue(np.all(coords[mesh.left_edge_nodes, 0] == 0))
        self.assertTrue(np.all(coords[mesh.right_edge_nodes, 0] == 2.0))

    def test_symmetry(self):
        """With ny even the triangles mirror about mid-height."""
        mesh = build_cantilever_mesh(3, 4, 2.0, 0.5)
        coords = mesh.node_coordinates
        centroids = coords[mesh.triangles].mean(axis=1)
        mirrored = centroids.copy()
        mirrored[:, 1] = 0.5 - mirrored[:, 1]
        key = lambda pts: sorted(map(tuple, np.round(pts, 12)))
        self.assertEqual(key(centroids), key(mirrored))

    def test_read_only(self):
        """Mesh arrays can't be modified."""
        mesh = build_cantilever_mesh(2, 2, 1.0, 1.0)
        with self.assertRaises(ValueError):
            mesh.node_coordinates[0, 0] = 5.0

    def test_invalid(self):
        """Bad dimensions and inverted triangles are rejected."""
        with self.assertRaises(ValueError):
            build_cantilever_mesh(0, 1, 1.0, 1.0)
        with self.assertRaises(ValueError):
            build_cantilever_mesh(1, 1, -1.0, 1.0)
        coords = [[0, 0], [1, 0], [0, 1]]
        with self.assertRaises(ValueError):
            Mesh(coords, [[0, 2, 1]], [0], [1])
        with self.assertRaises(ValueError):
            Mesh(coords, [[0, 1, 2]], [0], [0])

    def test_export(self):
        """export should write node and triangle blocks."""
        mesh = build_cantilever_mesh(1, 1, 1.0, 1.0)
        with TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "sub" / "mesh.txt"
            mesh.export(path)
            lines = path.read_text().splitlines()
        self.assertEqual(lines[0], "# nodes 4")
        self.assertEqual(lines[1], "0 0.0 0.0")
        self.assertEqual(lines[5], "# triangles 2")
        self.assertEqual(lines[6], "0 0 1 3")
        self.assertEqual(len(lines), 8)
