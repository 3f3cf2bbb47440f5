"""
Physics-informed training of projection-based reduced-order models.

Brief package structure overview:

The fem sub-package holds the full-order model: a structured cantilever
mesh, a plane-strain Neo-Hookean FemModel supplying residuals, sparse
Jacobians and vector-Jacobian products, a load-stepping Newton solver, and a
small spring-chain model with the same interface.  snapshots samples loads
and builds FOM datasets; pod computes the snapshot SVD and the scaled
primary/secondary bases; ann is a bias-free numpy MLP with AdamW; manifold
composes bases and network into encoder/decoder pairs; training holds the
snapshot and residual losses and the epoch loop; rom runs Galerkin reduced
solves; evaluation computes error metrics, experiment grids and timings.
pipeline.Pipeline lays out the artifacts on disk and does the public-facing
work when the package is called as a script.
"""

from . import config
CONFIG = config.layer_configs([config.path_for_config()])

def __deduce_version():
    """Return version string for this package, if installed.

    This uses the installed distribution metadata to determine the version
    originally defined in setup.py, but only if it can find an installed
    package and the filesystem path for the loaded package agrees with it.
    """
    from importlib import metadata
    from pathlib import Path
    try:
        res = metadata.distribution(__package__)
    except metadata.PackageNotFoundError:
        pass
    else:
        location_pkg = Path(res.locate_file("")).resolve()
        location_self = Path(__file__).resolve()
        if location_pkg in location_self.parents:
            return res.version
    return ""

__version__ = __deduce_version()
