"""
Structured triangle meshes of a rectangular cantilever.

See build_cantilever_mesh for usage.
"""

import logging
import numpy as np
from ..util import mkparent, frozen

LOGGER = logging.getLogger(__name__)


class Mesh:
    """A 2D mesh of 3-node triangles with the two clamped/loaded edges marked.

    Arrays are made read-only so a Mesh can be shared between threads.
    """

    def __init__(self, node_coordinates, triangles, left_edge_nodes, right_edge_nodes):
        self.node_coordinates = frozen(np.asarray(node_coordinates, dtype=float))
        self.triangles = frozen(np.asarray(triangles, dtype=np.int64))
        self.left_edge_nodes = frozen(np.unique(np.asarray(left_edge_nodes, dtype=np.int64)))
        self.right_edge_nodes = frozen(np.unique(np.asarray(right_edge_nodes, dtype=np.int64)))
        self._check()

    @property
    def n_nodes(self):
        """Number of mesh nodes."""
        return self.node_coordinates.shape[0]

    @property
    def n_triangles(self):
        """Number of triangles."""
        return self.triangles.shape[0]

    @property
    def areas(self):
        """Signed area of every triangle."""
        xyz = self.node_coordinates[self.triangles]
        edge1 = xyz[:, 1] - xyz[:, 0]
        edge2 = xyz[:, 2] - xyz[:, 0]
        return 0.5 * (edge1[:, 0] * edge2[:, 1] - edge1[:, 1] * edge2[:, 0])

    def to_text(self):
        """Plain-text listing: one "id x y" line per node, then one
        "id n1 n2 n3" line per triangle, each block after a comment header."""
        lines = ["# nodes %d" % self.n_nodes]
        for idx, (xval, yval) in enumerate(self.node_coordinates):
            lines.append("%d %r %r" % (idx, float(xval), float(yval)))
        lines.append("# triangles %d" % self.n_triangles)
        for idx, tri in enumerate(self.triangles):
            lines.append("%d %d %d %d" % (idx, tri[0], tri[1], tri[2]))
        return "\n".join(lines) + "\n"

    def export(self, path):
        """Write the plain-text listing to a file."""
        mkparent(path)
        with open(path, "w") as fout:
            fout.write(self.to_text())

    def _check(self):
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must be an (ntri, 3) index array")
        if np.any(self.areas <= 0):
            raise ValueError("every triangle needs a positive signed area")
        used = np.zeros(self.n_nodes, dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise ValueError("every node must belong to a triangle")
        if not self.left_edge_nodes.size or not self.right_edge_nodes.size:
            raise ValueError("left and right edge node sets must be nonempty")
        if np.intersect1d(self.left_edge_nodes, self.right_edge_nodes).size:
            raise ValueError("left and right edge node sets must be disjoint")


def build_cantilever_mesh(nx, ny, length, height):
    """Triangulate a length x height rectangle with nx x ny cells.

    Node (i, j) sits at (i*length/nx, j*height/ny) with index j*(nx+1) + i.
    Each cell is split into two counter-clockwise triangles.  Cells in the
    lower half use the diagonal from their lower-left corner and cells in the
    upper half the mirrored one, so with ny even the mesh is symmetric about
    the mid-height line.
    """
    if nx < 1 or ny < 1:
        raise ValueError("need at least one cell in each direction")
    if length <= 0 or height <= 0:
        raise ValueError("cantilever dimensions must be positive")
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    xgrid, ygrid = np.meshgrid(xs, ys)
    coords = np.column_stack([xgrid.ravel(), ygrid.ravel()])
    node = lambda i, j: j * (nx + 1) + i
    triangles = []
    for j in range(ny):
        for i in range(nx):
            n00, n10 = node(i, j), node(i + 1, j)
            n01, n11 = node(i, j + 1), node(i + 1, j + 1)
            if 2 * j < ny:
                triangles += [(n00, n10, n11), (n00, n11, n01)]
            else:
                triangles += [(n00, n10, n01), (n10, n11, n01)]
    left = [node(0, j) for j in range(ny + 1)]
    right = [node(nx, j) for j in range(ny + 1)]
    LOGGER.debug("Built %dx%d cantilever mesh: %d nodes, %d triangles",
                 nx, ny, len(coords), len(triangles))
    return Mesh(coords, triangles, left, right)

