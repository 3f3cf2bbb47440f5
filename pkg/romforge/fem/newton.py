"""
Newton solver with load stepping for the full-order model.

Works with any model exposing free_dof_count, residual(u, load) and
jacobian(u, load), so both FemModel and SpringChain can be solved.
"""

import time
import logging
import numpy as np
import scipy.sparse.linalg
from ..util import ConvergenceError, DegenerateStateError, ConfigError

LOGGER = logging.getLogger(__name__)


class NewtonConfig:
    """Newton tolerance, iteration limit, and load ramping for FOM solves."""

    # pylint: disable=too-few-public-methods

    def __init__(self, tolerance=1e-9, max_iter=25, load_steps=5, max_halvings=10):
        self.tolerance = float(tolerance)
        self.max_iter = int(max_iter)
        self.load_steps = int(load_steps)
        self.max_halvings = int(max_halvings)
        if not self.tolerance > 0:
            raise ConfigError("newton.tolerance: must be positive")
        if self.max_iter < 1 or self.load_steps < 1:
            raise ConfigError("newton.max_iter and newton.load_steps must be at least 1")
        if self.max_halvings < 0:
            raise ConfigError("newton.max_halvings: must be >= 0")

    @classmethod
    def from_conf(cls, conf):
        """Build from the "newton" section of a configuration dict."""
        conf = conf or {}
        return cls(**{key: conf[key] for key in
                      ["tolerance", "max_iter", "load_steps", "max_halvings"]
                      if key in conf})

    def __repr__(self):
        return "NewtonConfig(tolerance=%g, max_iter=%d, load_steps=%d, max_halvings=%d)" % (
            self.tolerance, self.max_iter, self.load_steps, self.max_halvings)


def solve_fom(model, load, cfg=None, trace=None):
    """Solve R(u; load) = 0 for u, ramping the load in cfg.load_steps steps.

    Each load step runs Newton from the previous step's solution until the
    residual 2-norm is at most cfg.tolerance.  An update that inverts an
    element is halved up to cfg.max_halvings times.  If trace is a list,
    one dict per residual check (step, iter, residual_norm, wall_ms,
    solve_ms) is appended to it.

    Raises ConvergenceError (with the last residual norm) if a step needs
    more than cfg.max_iter iterations, and DegenerateStateError if halving
    can't rescue an update.
    """
    cfg = cfg or NewtonConfig()
    trace = trace if trace is not None else []
    state = np.zeros(model.free_dof_count)
    time_start = time.perf_counter()
    for step in range(1, cfg.load_steps + 1):
        load_step = load.scaled(step / cfg.load_steps)
        res = model.residual(state, load_step)
        norm = np.linalg.norm(res)
        iteration = 0
        while True:
            trace.append({
                "step": step, "iter": iteration, "residual_norm": norm,
                "wall_ms": 1000 * (time.perf_counter() - time_start), "solve_ms": 0.0})
            LOGGER.debug("FOM step %d iter %d: |R| = %g", step, iteration, norm)
            if norm <= cfg.tolerance:
                break
            if iteration >= cfg.max_iter:
                raise ConvergenceError(
                    "FOM Newton did not converge for load (%g, %g) at step %d/%d: |R| = %g" % (
                        load[0], load[1], step, cfg.load_steps, norm),
                    residual_norm=norm, trace=trace)
            jac = model.jacobian(state, load_step)
            time_solve = time.perf_counter()
            delta = np.atleast_1d(scipy.sparse.linalg.spsolve(jac.tocsc(), -res))
            trace[-1]["solve_ms"] = 1000 * (time.perf_counter() - time_solve)
            if not np.all(np.isfinite(delta)):
                raise ConvergenceError(
                    "singular FOM Jacobian for load (%g, %g)" % (load[0], load[1]),
                    residual_norm=norm, trace=trace)
            state, res = _backtrack(model, state, delta, load_step, cfg.max_halvings)
            norm = np.linalg.norm(res)
            iteration += 1
    return state


def _backtrack(model, state, delta, load, max_halvings):
    """Take the largest step delta/2^k (k <= max_halvings) giving a valid state."""
    scale = 1.0
    for halving in range(max_halvings + 1):
        trial = state + scale * delta
        try:
            res = model.residual(trial, load)
        except DegenerateStateError:
            LOGGER.debug("Degenerate trial state, halving step (%d)", halving + 1)
            scale /= 2.0
            continue
        return trial, res
    raise DegenerateStateError(
        "Newton update still degenerate after %d halvings" % max_halvings)
