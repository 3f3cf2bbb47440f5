"""
Full-order models: meshes, the hyperelastic FEM kernel, and Newton solves.
"""

from .mesh import Mesh, build_cantilever_mesh
from .hyperelastic import (
    LoadParams, FemModel, lame_parameters,
    assemble_residual, assemble_jacobian, residual_vjp, assemble_linear_stiffness)
from .newton import NewtonConfig, solve_fom
from .spring import SpringChain, spring_chain_residual


def model_from_conf(conf):
    """Build the cantilever FemModel described by a "fem" config section."""
    mesh = build_cantilever_mesh(
        int(conf["nx"]), int(conf["ny"]), float(conf["length"]), float(conf["height"]))
    return FemModel(mesh, float(conf["youngs_modulus"]), float(conf["poisson_ratio"]))
