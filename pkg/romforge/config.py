"""
Configuration file handling.

Configuration is a nested dictionary layered together from YAML files (JSON
files work too, since JSON is valid YAML).  The package default in
data/config.yml documents every option.
"""

import os
import json
import hashlib
import logging
import collections.abc
from pathlib import Path
import yaml.parser
from .util import yaml_load, ConfigError

__ENV_CONFIG = os.getenv("ROMFORGE_SYSTEM_CONFIG")
if __ENV_CONFIG is not None:
    SYSTEM_CONFIG = __ENV_CONFIG
else:
    SYSTEM_CONFIG = "/etc/romforge.yml"

# Sections each pipeline stage depends on, for artifact hashes.
STAGE_SECTIONS = {
    "dataset": ["fem", "newton", "sampling"],
    "bases": ["fem", "newton", "sampling", "svd"],
    "bundle": ["fem", "newton", "sampling", "svd", "ann", "optimizer"],
    }

# Adapted from
# https://stackoverflow.com/a/3233356
def update_tree(tree_orig, tree_new):
    """Recursively update one dict with another.

    Note that the original is modified in place."""
    for key, val in tree_new.items():
        if isinstance(val, collections.abc.Mapping):
            tree_orig[key] = update_tree(tree_orig.get(key, {}), val)
        else:
            tree_orig[key] = val
    return tree_orig

def layer_configs(paths):
    """Load configuration for each path given, merging all options.

    The later paths take priority.  Empty/None entries are ignored."""
    config = {}
    logger = logging.getLogger()
    for path in paths:
        if not path:
            continue
        if Path(path).exists():
            try:
                cfg = yaml_load(path)
                logger.info(
                    "Configuration loaded from %s", path)
            except yaml.parser.ParserError as exception:
                logger.critical(
                    "Configuration parse error while loading %s", path)
                raise exception
        else:
            logger.info("Configuration file not found at %s", path)
            cfg = {}
        update_tree(config, cfg)
    return config

def path_for_config(suffix=None):
    """Return config file path relative to package data directory."""
    if suffix:
        name = "config_%s.yml" % suffix
    else:
        name = "config.yml"
    path = Path(__file__).parent / "data" / name
    return path

def default_text():
    """The commented package default configuration, as text."""
    return path_for_config().read_text()

def config_hash(conf, sections):
    """SHA-256 hex digest over the canonical JSON of the named sections."""
    subset = {key: conf.get(key) for key in sorted(sections)}
    text = json.dumps(subset, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()

def get_path(conf, dotted):
    """Look up a value by dotted path, raising ConfigError if missing."""
    node = conf
    for key in dotted.split("."):
        if not isinstance(node, collections.abc.Mapping) or key not in node:
            raise ConfigError("missing configuration field: %s" % dotted)
        node = node[key]
    return node

def validate(conf):
    """Check cross-field consistency before any work is done.

    Raises ConfigError naming the first offending field.  Checks needing the
    data itself (like n + nbar against the snapshot rank) happen later."""
    def need(cond, field, msg):
        if not cond:
            raise ConfigError("%s: %s" % (field, msg))
    for field in ["fem.nx", "fem.ny"]:
        need(int(get_path(conf, field)) >= 1, field, "must be at least 1")
    for field in ["fem.length", "fem.height", "fem.youngs_modulus"]:
        need(float(get_path(conf, field)) > 0, field, "must be positive")
    nu = float(get_path(conf, "fem.poisson_ratio"))
    need(0 < nu < 0.5, "fem.poisson_ratio", "must be in (0, 0.5)")
    need(float(get_path(conf, "newton.tolerance")) > 0,
         "newton.tolerance", "must be positive")
    for field in ["newton.max_iter", "newton.load_steps"]:
        need(int(get_path(conf, field)) >= 1, field, "must be at least 1")
    domain = get_path(conf, "sampling.domain")
    for axis in ["px", "py"]:
        field = "sampling.domain.%s" % axis
        need(axis in domain and len(domain[axis]) == 2, field,
             "must be a [min, max] pair")
        need(domain[axis][0] <= domain[axis][1], field, "min > max")
    for field in ["sampling.n_train", "sampling.n_validation", "sampling.n_test"]:
        need(int(get_path(conf, field)) >= 1, field, "must be at least 1")
    need(len(get_path(conf, "sampling.mu_res")) == 2,
         "sampling.mu_res", "must be a [px, py] pair")
    n_total = int(get_path(conf, "svd.n_total"))
    for n in get_path(conf, "svd.grid") + [get_path(conf, "svd.n")]:
        need(1 <= int(n) < n_total, "svd.grid",
             "each n must satisfy 1 <= n < n_total (%d)" % n_total)
    hidden = get_path(conf, "ann.hidden")
    need(len(hidden) >= 1 and all(int(h) >= 1 for h in hidden),
         "ann.hidden", "need at least one hidden layer of positive width")
    need(int(get_path(conf, "training.batch_size")) >= 1,
         "training.batch_size", "must be at least 1")
    for regime in ["qloss", "sloss", "rloss"]:
        prefix = "training.regimes.%s" % regime
        omega_d = float(get_path(conf, prefix + ".omega_d"))
        omega_r = float(get_path(conf, prefix + ".omega_r"))
        need(omega_d >= 0 and omega_r >= 0, prefix, "loss weights must be >= 0")
        need(omega_d + omega_r > 0, prefix, "loss weights must not both be 0")
        need(int(get_path(conf, prefix + ".epochs")) >= 0,
             prefix + ".epochs", "must be >= 0")
    need(float(get_path(conf, "rom.tolerance")) > 0,
         "rom.tolerance", "must be positive")
    need(int(get_path(conf, "rom.max_iter")) >= 1,
         "rom.max_iter", "must be at least 1")
    need(get_path(conf, "rom.initial_guess") in ("zero", "encode"),
         "rom.initial_guess", "must be zero or encode")
    return conf
