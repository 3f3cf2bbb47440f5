"""
Error metrics, the model/size/mode experiment grid, and runtime benchmarks.

Both error metrics are geometric means of per-sample relative errors, so a
few badly reconstructed samples don't dominate them:

    e_u = exp(mean_j ln(|u_j - u*_j| / |u*_j|))

and e_R is the same over FEM residuals at a fixed load.
"""

import time
import logging
from collections import namedtuple
import numpy as np
from . import training
from .fem import solve_fom, NewtonConfig
from .processor import BatchProcessor
from .rom import rom_solve, RomConfig
from .util import write_csv, RomforgeError, ConvergenceError, DegenerateStateError

LOGGER = logging.getLogger(__name__)

REPORT_FIELDS = ["model", "n", "nbar", "mode", "e_u", "e_R", "n_samples", "mean_iter", "notes"]
FIGURE_FIELDS = ["model", "n", "value"]
TRAIN_TIMING_FIELDS = ["loss", "mean_batch_s", "n_batches"]
SOLVE_TIMING_FIELDS = ["model", "n", "mean_solve_s", "mean_iter", "mean_total_s", "n_solves"]

# Relative errors below this count as this, so exact samples don't send the
# log mean to minus infinity.
ERROR_FLOOR = 1e-300

GridCell = namedtuple("GridCell", ["model", "n", "n_bar", "loader"])
GridCell.__doc__ = """One row source of the experiment grid.

loader() returns the manifold to evaluate, or raises OSError/RomforgeError
if it's unavailable, in which case the rows are skipped with a note."""


def geometric_relative_error(predictions, truths):
    """Geometric mean over columns of |p_j - t_j| / |t_j|.

    Columns with a zero truth are excluded with a warning.  Returns nan if
    nothing is left and 0 if every remaining error is exactly 0."""
    predictions = np.atleast_2d(np.asarray(predictions, dtype=float))
    truths = np.atleast_2d(np.asarray(truths, dtype=float))
    if predictions.shape != truths.shape:
        raise ValueError("predictions %s and truths %s differ in shape" % (
            predictions.shape, truths.shape))
    norms = np.linalg.norm(truths, axis=0)
    keep = norms > 0
    if not keep.all():
        LOGGER.warning("Excluding %d sample(s) with zero-norm truth", np.sum(~keep))
    if not keep.any():
        return np.nan
    rel = np.linalg.norm(predictions[:, keep] - truths[:, keep], axis=0) / norms[keep]
    if not np.any(rel):
        return 0.0
    return float(np.exp(np.mean(np.log(np.maximum(rel, ERROR_FLOOR)))))

def metric_e_u(predictions, truths):
    """Geometric-mean relative state error over N x m columns."""
    return geometric_relative_error(predictions, truths)

def metric_e_r(model, predictions, truths, mu_eval, nthreads=1):
    """Geometric-mean relative residual error at the load(s) mu_eval.

    mu_eval is one load for every sample or a list with one per column."""
    predictions = np.atleast_2d(np.asarray(predictions, dtype=float))
    truths = np.atleast_2d(np.asarray(truths, dtype=float))
    count = predictions.shape[1]
    loads = list(mu_eval) if _is_load_list(mu_eval) else [mu_eval] * count
    def residual_pair(idx):
        return (model.residual(predictions[:, idx], loads[idx]),
                model.residual(truths[:, idx], loads[idx]))
    pairs = BatchProcessor(nthreads).map(residual_pair, range(count))
    res_pred = np.column_stack([pair[0] for pair in pairs])
    res_true = np.column_stack([pair[1] for pair in pairs])
    return geometric_relative_error(res_pred, res_true)

def _is_load_list(mu_eval):
    return len(mu_eval) > 0 and hasattr(mu_eval[0], "__len__")


class EvalReport:
    """Rows of the experiment grid, one per (model, n, mode)."""

    def __init__(self, rows=None):
        self.rows = list(rows or [])

    def add(self, model, n, n_bar, mode, e_u="", e_r="", n_samples=0, mean_iter="", notes=""):
        """Append one row."""
        for val in (e_u, e_r):
            if isinstance(val, float) and val < 0:
                raise ValueError("error metrics must be nonnegative")
        row = {"model": model, "n": n, "nbar": n_bar, "mode": mode, "e_u": e_u,
               "e_R": e_r, "n_samples": n_samples, "mean_iter": mean_iter, "notes": notes}
        self.rows.append(row)
        return row

    def extend(self, other):
        """Append every row of another report."""
        self.rows.extend(other.rows)

    def select(self, **kwargs):
        """Rows whose fields equal all the given values."""
        return [row for row in self.rows
                if all(row.get(key) == val for key, val in kwargs.items())]

    def figure_rows(self, mode, metric):
        """Plot-data rows (model, n, value) of one metric in one mode."""
        return [{"model": row["model"], "n": row["n"], "value": row[metric]}
                for row in self.rows if row["mode"] == mode and row[metric] != ""]

    def write(self, path):
        """Write the report CSV."""
        write_csv(path, REPORT_FIELDS, self.rows)

    def __len__(self):
        return len(self.rows)


def evaluate_reconstruction(manifold, model, test, nthreads=1):
    """(e_u, e_R) of D(E(u*)) over the test columns, e_R at the test mu_res."""
    preds = manifold.reconstruct_batch(test.U_star)
    e_u = metric_e_u(preds, test.U_star)
    e_r = metric_e_r(model, preds, test.U_star, test.mu_res, nthreads)
    return e_u, e_r

def evaluate_rom(manifold, model, test, rom_cfg=None, nthreads=1):
    """ROM solves at every test load.

    Returns (e_u, e_R, n_solved, mean_iter, failures); failed solves are
    logged and left out of the metrics."""
    rom_cfg = rom_cfg or RomConfig()
    def solve(idx):
        u_initial = test.U_star[:, idx] if rom_cfg.initial_guess == "encode" else None
        return rom_solve(manifold, model, test.load(idx), rom_cfg, u_initial)
    results = BatchProcessor(nthreads).run(solve, range(test.n_samples))
    good = [res for res in results if res.ok]
    failures = len(results) - len(good)
    for res in results:
        if not res.ok:
            LOGGER.warning("ROM solve failed for test sample %d: %s", res.index, res.error)
    if not good:
        return np.nan, np.nan, 0, np.nan, failures
    idx = [res.index for res in good]
    preds = np.column_stack([res.value.u for res in good])
    truths = test.U_star[:, idx]
    e_u = metric_e_u(preds, truths)
    e_r = metric_e_r(model, preds, truths, test.mu_res, nthreads)
    mean_iter = float(np.mean([res.value.n_iter for res in good]))
    return e_u, e_r, len(good), mean_iter, failures

def run_experiment_grid(cells, model, test, modes=("reconstruction", "rom"),
                        rom_cfg=None, nthreads=1):
    """Evaluate every grid cell in every mode on the test set.

    Cells whose loader fails, or whose evaluation hits a degenerate state,
    produce rows with empty metrics and a note."""
    report = EvalReport()
    for cell in cells:
        try:
            manifold = cell.loader()
        except (OSError, RomforgeError) as exception:
            LOGGER.warning("Skipping %s n=%d: %s", cell.model, cell.n, exception)
            for mode in modes:
                report.add(cell.model, cell.n, cell.n_bar, mode,
                           notes="skipped: %s" % exception)
            continue
        LOGGER.info("Evaluating %s n=%d", cell.model, cell.n)
        for mode in modes:
            try:
                _evaluate_cell_mode(report, cell, manifold, mode, model, test,
                                    rom_cfg, nthreads)
            except RomforgeError as exception:
                LOGGER.warning("Evaluation of %s n=%d (%s) failed: %s",
                               cell.model, cell.n, mode, exception)
                report.add(cell.model, cell.n, cell.n_bar, mode,
                           notes="failed: %s" % exception)
    return report

def _evaluate_cell_mode(report, cell, manifold, mode, model, test, rom_cfg, nthreads):
    if mode == "reconstruction":
        e_u, e_r = evaluate_reconstruction(manifold, model, test, nthreads)
        report.add(cell.model, cell.n, cell.n_bar, mode, e_u, e_r, test.n_samples)
    elif mode == "rom":
        e_u, e_r, solved, mean_iter, failures = evaluate_rom(
            manifold, model, test, rom_cfg, nthreads)
        notes = "%d solve(s) failed" % failures if failures else ""
        report.add(cell.model, cell.n, cell.n_bar, mode, e_u, e_r,
                   solved, mean_iter, notes)
    else:
        raise ValueError("unknown evaluation mode: %s" % mode)

def time_training_batches(manifold, model, train, batch_size, n_batches,
                          n_naive_batches=None, scale_losses=True, seed=0):
    """Mean wall time of one training batch for the three gradient paths.

    Rows: snapshot (data loss only), residual (cotangent path), and
    residual_naive (explicit parameter Jacobians).  Only gradients are
    computed; no optimizer step is taken."""
    scalings = training.loss_scalings(manifold.bases, scale_losses)
    rng = np.random.default_rng(seed)
    order = rng.permutation(train.n_samples)
    n_naive_batches = n_batches if n_naive_batches is None else n_naive_batches
    batches = []
    for start in range(0, batch_size * n_batches, batch_size):
        idx = np.take(order, np.arange(start, start + batch_size), mode="wrap")
        batches.append(training.BatchView(train, idx))
    all_q = [manifold.encode_batch(batch.U_star) for batch in batches]
    snapshot_cfg = training.TrainConfig(omega_d=1.0, omega_r=0.0, loss_mode="s_loss")
    residual_cfg = training.TrainConfig(omega_d=0.0, omega_r=1.0, loss_mode="r_loss")
    def timed(func, count):
        time_start = time.perf_counter()
        for idx in range(count):
            func(batches[idx], all_q[idx])
        return (time.perf_counter() - time_start) / max(count, 1)
    rows = [
        {"loss": "snapshot", "n_batches": n_batches, "mean_batch_s": timed(
            lambda b, q: training.batch_gradient(
                manifold, model, b, q, snapshot_cfg, scalings), n_batches)},
        {"loss": "residual", "n_batches": n_batches, "mean_batch_s": timed(
            lambda b, q: training.batch_gradient(
                manifold, model, b, q, residual_cfg, scalings), n_batches)},
        {"loss": "residual_naive", "n_batches": n_naive_batches, "mean_batch_s": timed(
            lambda b, q: training.naive_residual_gradient(
                manifold, model, b, scalings.e_pod_r, q), n_naive_batches)},
        ]
    for row in rows:
        LOGGER.info("Batch time %s: %g s", row["loss"], row["mean_batch_s"])
    return rows

def time_reduced_solves(entries, model, loads, rom_cfg=None, newton_cfg=None):
    """Mean linear-solve and total time of ROM solves plus the FOM baseline.

    entries is a list of (label, manifold); the FOM row comes last.  ROM solves
    that fail are logged and left out, so n_solves can fall short of the
    number of loads."""
    rom_cfg = rom_cfg or RomConfig()
    newton_cfg = newton_cfg or NewtonConfig()
    rows = []
    for label, manifold in entries:
        solve_ms, iters, totals = [], [], []
        for load in loads:
            time_start = time.perf_counter()
            try:
                result = rom_solve(manifold, model, load, rom_cfg)
            except (ConvergenceError, DegenerateStateError) as exception:
                LOGGER.warning("Leaving %s n=%d at load (%g, %g) out of timings: %s",
                               label, manifold.n, load[0], load[1], exception)
                continue
            totals.append(time.perf_counter() - time_start)
            solve_ms.extend(row["solve_ms"] for row in result.trace
                            if row["solve_ms"] is not None)
            iters.append(result.n_iter)
        rows.append(_solve_row(label, manifold.n, solve_ms, iters, totals))
    solve_ms, iters, totals = [], [], []
    for load in loads:
        trace = []
        time_start = time.perf_counter()
        solve_fom(model, load, newton_cfg, trace)
        totals.append(time.perf_counter() - time_start)
        solved = [row for row in trace if row["solve_ms"]]
        solve_ms.extend(row["solve_ms"] for row in solved)
        iters.append(len(solved))
    rows.append(_solve_row("FOM", model.free_dof_count, solve_ms, iters, totals))
    for row in rows:
        LOGGER.info("Solve time %s n=%d: %g s per system", row["model"], row["n"],
                    row["mean_solve_s"])
    return rows

def _solve_row(label, n, solve_ms, iters, totals):
    return {"model": label, "n": n,
            "mean_solve_s": float(np.mean(solve_ms)) / 1000 if solve_ms else 0.0,
            "mean_iter": float(np.mean(iters)) if iters else np.nan,
            "mean_total_s": float(np.mean(totals)) if totals else np.nan,
            "n_solves": len(totals)}

def runtime_benchmark(train_case, solve_entries, model, loads, batch_size=16,
                      n_batches=10, n_naive_batches=None, rom_cfg=None, newton_cfg=None):
    """Training-batch and reduced-solve timing tables, single-threaded.

    train_case is (manifold, train SnapshotSet); solve_entries a list of
    (label, manifold), usually PROM-ANN and POD at two sizes each."""
    manifold, train = train_case
    train_rows = time_training_batches(
        manifold, model, train, batch_size, n_batches, n_naive_batches)
    solve_rows = time_reduced_solves(solve_entries, model, loads, rom_cfg, newton_cfg)
    return train_rows, solve_rows
