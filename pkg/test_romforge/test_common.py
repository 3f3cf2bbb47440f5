"""
Common test code shared with the real tests.  Not much to see here.
"""

import datetime
import functools
import time
import unittest
import logging
from pathlib import Path
import numpy as np
from romforge import util
from romforge.fem import build_cantilever_mesh, FemModel, NewtonConfig
from romforge import snapshots

PATH_ROOT = Path(__file__).parent
PATH_CONFIG = PATH_ROOT / ".." / "test_config.yml"

CONFIG = util.yaml_load(PATH_CONFIG)

TESTLOGGER = logging.getLogger(__name__)
TESTLOGGER.propagate = False
TESTLOGGER.setLevel(logging.DEBUG)
if CONFIG["logfile"]:
    TESTLOGGER.addHandler(
        logging.StreamHandler(open(CONFIG["logfile"], "at", buffering=1)))

# Small enough that a full pipeline run takes seconds.
TINY_CONF = {
    "output": None,
    "nthreads": 1,
    "seed": 0,
    "fem": {"nx": 4, "ny": 2, "length": 2.0, "height": 0.5},
    "sampling": {
        "n_train": 8, "n_validation": 4, "n_test": 3,
        "extrapolation": {"count": 3, "band": 500.0, "seed": 1234}},
    "svd": {"n_total": 6, "n": 2, "grid": [2, 3]},
    "ann": {"hidden": [5]},
    "training": {
        "batch_size": 4,
        "checkpoint_every": 0,
        "regimes": {
            "qloss": {"epochs": 3},
            "sloss": {"epochs": 5},
            "rloss": {"epochs": 2}}},
    "eval": {
        "models": ["pod", "sloss"],
        "appendix_a": {"n_train": 7},
        "appendix_b": {"grid": [2]},
        "appendix_c": {"n": 2, "hidden": [[4]], "batch_size": [2]}},
    "bench": {"n_batches": 1, "n_naive_batches": 1, "n_loads": 2,
              "prom_ann_n": [2], "pod_n": [3]},
    }


class DumbLogHandler(logging.Handler):
    """A log handler that just stacks log records into a list."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.records = []

    def emit(self, record):
        self.records.append(record)

    def has_message_text(self, txt):
        """Does some text appear in any of the records?"""
        return True in [txt in rec.getMessage() for rec in self.records]

TIMINGS = {}

def log_start(name):
    """Store a global time reference under a given name."""
    TIMINGS[name] = time.perf_counter()

def log_stop(name):
    """Log elapsed time since log_start(name) and del name reference."""
    then = TIMINGS.get(name)
    if then:
        now = datetime.datetime.now()
        delta = time.perf_counter() - then
        TESTLOGGER.info("%s, %12.8f seconds, %s", now, delta, name)
        del TIMINGS[name]

def tiny_model(nx=4, ny=2):
    """A coarse cantilever FemModel."""
    return FemModel(build_cantilever_mesh(nx, ny, 2.0, 0.5))

@functools.lru_cache(maxsize=None)
def tiny_dataset(count=8, start=1):
    """FOM snapshots of the coarse cantilever at count Halton loads.

    Cached across test modules."""
    domain = {"px": [-3000.0, 3000.0], "py": [-3000.0, 3000.0]}
    params = snapshots.sample_parameters(count, domain, start)
    return snapshots.generate_dataset(tiny_model(), params, (0.0, 0.0), NewtonConfig())

def random_orthonormal(nrows, ncols, seed=0):
    """nrows x ncols matrix with orthonormal columns."""
    rng = np.random.default_rng(seed)
    qmat, _ = np.linalg.qr(rng.standard_normal((nrows, ncols)))
    return qmat

def smooth_state(model, scale=1e-3, seed=0):
    """A small random free-dof displacement that keeps every element valid."""
    rng = np.random.default_rng(seed)
    coords = model.mesh.node_coordinates
    coef = rng.uniform(-1, 1, size=4)
    disp = np.column_stack([
        coef[0] * coords[:, 0] ** 2 + coef[1] * coords[:, 0] * coords[:, 1],
        coef[2] * coords[:, 0] ** 2 + coef[3] * coords[:, 1]])
    full = scale * disp.ravel()
    return full[model.free_dofs]


class TestBase(unittest.TestCase):
    """Helper for test cases

    This tracks test case duration by logging the time between class setup and
    teardown, and adds an array comparison.
    """

    setUpClass = classmethod(lambda cls: log_start(cls.__module__ + "." + cls.__name__))
    tearDownClass = classmethod(lambda cls: log_stop(cls.__module__ + "." + cls.__name__))

    def assertAllClose(self, actual, expected, rtol=1e-7, atol=0.0):
        """numpy allclose with a readable failure message."""
        # pylint: disable=invalid-name
        actual = np.asarray(actual, dtype=float)
        expected = np.asarray(expected, dtype=float)
        self.assertEqual(actual.shape, expected.shape)
        if not np.allclose(actual, expected, rtol=rtol, atol=atol):
            diff = np.max(np.abs(actual - expected))
            self.fail("arrays differ (max abs diff %g, rtol %g, atol %g)" % (
                diff, rtol, atol))
