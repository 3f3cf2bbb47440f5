"""
Galerkin reduced-order solves on a manifold decoder.

At each iteration with u = D(q) and W = dD/dq the reduced Newton system

    (W^T J(u) W) dq = -W^T R(u; load)

is solved densely and q is updated, until |W^T R| drops below the
tolerance.  The load is ramped in steps as for the full-order solve.
"""

import time
import logging
import numpy as np
import scipy.linalg
from .manifold import PodManifold
from .util import (
    write_csv, ConfigError, ConvergenceError, SingularSystemError, DegenerateStateError)

LOGGER = logging.getLogger(__name__)

TRACE_FIELDS = ["step", "iter", "reduced_residual_norm", "wall_ms", "w_ms", "solve_ms"]

# Reduced matrices with a larger condition estimate are treated as singular.
MAX_CONDITION = 1e14


class RomConfig:
    """Tolerance, iteration limit, load ramping and initial guess for ROM solves."""

    # pylint: disable=too-few-public-methods

    def __init__(self, tolerance=1e-8, max_iter=25, load_steps=5,
                 initial_guess="zero", max_halvings=10):
        self.tolerance = float(tolerance)
        self.max_iter = int(max_iter)
        self.load_steps = int(load_steps)
        self.initial_guess = initial_guess
        self.max_halvings = int(max_halvings)
        if not self.tolerance > 0:
            raise ConfigError("rom.tolerance: must be positive")
        if self.max_iter < 1:
            raise ConfigError("rom.max_iter: must be at least 1")
        if self.load_steps < 1:
            raise ConfigError("rom.load_steps: must be at least 1")
        if initial_guess not in ("zero", "encode"):
            raise ConfigError("rom.initial_guess: must be zero or encode")

    @classmethod
    def from_conf(cls, conf):
        """Build from the "rom" section of a configuration dict."""
        conf = conf or {}
        keys = ["tolerance", "max_iter", "load_steps", "initial_guess", "max_halvings"]
        return cls(**{key: conf[key] for key in keys if key in conf})


class RomResult:
    """Final latent and full states of a ROM solve plus its iteration trace.

    iterates is filled only when requested and holds one dict per iteration
    with the state u, the reduced matrix, right-hand side, and update."""

    # pylint: disable=too-few-public-methods

    def __init__(self, q, u, trace, iterates=None):
        self.q = q
        self.u = u
        self.trace = trace
        self.iterates = iterates or []

    @property
    def n_iter(self):
        """Number of reduced Newton updates over all load steps."""
        return sum(1 for row in self.trace if row["solve_ms"] is not None)


def rom_solve(manifold, model, load, cfg=None, u_initial=None, record_iterates=False):
    """Solve the reduced Galerkin system for one load.

    With cfg.initial_guess "encode", u_initial must be given and the first
    iterate is its encoding; otherwise q starts at zero.  Raises
    ConvergenceError (with the trace) after cfg.max_iter iterations in a
    load step and SingularSystemError (with a condition estimate) for an
    unsolvable reduced system."""
    cfg = cfg or RomConfig()
    if cfg.initial_guess == "encode":
        if u_initial is None:
            raise ConfigError("rom.initial_guess is encode but no state was given")
        q = np.asarray(manifold.encode(u_initial), dtype=float)
    else:
        q = np.zeros(manifold.n)
    trace, iterates = [], []
    time_start = time.perf_counter()
    for step in range(1, cfg.load_steps + 1):
        load_step = load.scaled(step / cfg.load_steps)
        u = manifold.decode(q)
        res = model.residual(u, load_step)
        iteration = 0
        while True:
            time_w = time.perf_counter()
            wmat = manifold.decode_jacobian(q)
            w_ms = 1000 * (time.perf_counter() - time_w)
            rhs = wmat.T @ res
            norm = float(np.linalg.norm(rhs))
            row = {"step": step, "iter": iteration, "reduced_residual_norm": norm,
                   "wall_ms": 1000 * (time.perf_counter() - time_start),
                   "w_ms": w_ms, "solve_ms": None}
            trace.append(row)
            LOGGER.debug("ROM step %d iter %d: |W^T R| = %g", step, iteration, norm)
            if norm <= cfg.tolerance:
                break
            if iteration >= cfg.max_iter:
                raise ConvergenceError(
                    "ROM did not converge for load (%g, %g) at step %d/%d: |W^T R| = %g" % (
                        load[0], load[1], step, cfg.load_steps, norm),
                    residual_norm=norm, trace=trace)
            # J W as n sparse matrix-vector products
            jw = model.jacobian(u, load_step) @ wmat
            reduced = wmat.T @ jw
            condition = _check_reduced(reduced, norm, trace)
            time_solve = time.perf_counter()
            delta = _reduced_solve(reduced, rhs, condition, norm, trace)
            row["solve_ms"] = 1000 * (time.perf_counter() - time_solve)
            if record_iterates:
                iterates.append({"u": u, "matrix": reduced, "rhs": rhs, "delta": delta})
            q, u, res = _backtrack(manifold, model, q, delta, load_step, cfg.max_halvings)
            iteration += 1
    u = manifold.decode(q)
    if record_iterates:
        iterates.append({"u": u, "matrix": None, "rhs": None, "delta": None})
    return RomResult(q, u, trace, iterates)

def pod_rom_solve(phi, model, load, cfg=None, u_initial=None, record_iterates=False):
    """rom_solve on the linear decoder D(q) = phi q."""
    return rom_solve(PodManifold(phi), model, load, cfg, u_initial, record_iterates)

def write_trace(trace, path):
    """Write ROM trace rows as CSV."""
    rows = [dict(row, solve_ms="" if row["solve_ms"] is None else row["solve_ms"])
            for row in trace]
    write_csv(path, TRACE_FIELDS, rows)

def _check_reduced(reduced, norm, trace):
    """Condition estimate of the reduced matrix, raising if it's singular."""
    if not np.all(np.isfinite(reduced)):
        raise SingularSystemError(
            "non-finite reduced matrix", condition=np.inf, residual_norm=norm, trace=trace)
    condition = float(np.linalg.cond(reduced))
    if not condition < MAX_CONDITION:
        raise SingularSystemError(
            "singular reduced system (condition estimate %g)" % condition,
            condition=condition, residual_norm=norm, trace=trace)
    return condition

def _reduced_solve(reduced, rhs, condition, norm, trace):
    try:
        return scipy.linalg.solve(reduced, -rhs)
    except (scipy.linalg.LinAlgError, ValueError) as exception:
        raise SingularSystemError(
            "reduced solve failed: %s" % exception,
            condition=condition, residual_norm=norm, trace=trace)

def _backtrack(manifold, model, q, delta, load, max_halvings):
    scale = 1.0
    for halving in range(max_halvings + 1):
        trial = q + scale * delta
        try:
            u = manifold.decode(trial)
            res = model.residual(u, load)
        except DegenerateStateError:
            LOGGER.debug("Degenerate ROM trial state, halving step (%d)", halving + 1)
            scale /= 2.0
            continue
        return trial, u, res
    raise DegenerateStateError(
        "ROM update still degenerate after %d halvings" % max_halvings)
