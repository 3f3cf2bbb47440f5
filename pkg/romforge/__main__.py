"""
Executable interface for use as a script.

See the main function for usage.
"""

import sys
import argparse
import logging
import yaml
from .pipeline import Pipeline
from . import config
from .util import (
    RomforgeError, ConfigError, RankDeficiencyError, ConvergenceError,
    DegenerateStateError, DatasetError, TrainingError, FormatError, ArtifactExistsError)
from . import __version__ as VERSION

DOCS = {}
DOCS["description"] = "Train and run physics-informed reduced-order models."
DOCS["epilog"] = """
The commands are, in pipeline order:

mesh:     Write the node and triangle listing of the configured cantilever.
generate: Sample loads and solve the full-order model for the training,
          validation, test, and extrapolation sets.
svd:      Decompose the training snapshots and write primary/secondary bases
          for every size in the svd grid, plus singular value and reduced
          coordinate tables.
train:    Train one manifold bundle.  --mode rloss fine-tunes an existing
          bundle given with --from.
rom:      Run one reduced solve for a load (--load px py) or a test sample
          (--test-index) with a trained bundle or the POD baseline.
eval:     Evaluate the model/size grid on the test set and write report and
          plot-data CSVs.  --appendix adds the reduced-dataset (a),
          extrapolation (b), and network/batch size (c) studies.
bench:    Time training batches and reduced solves.
config:   Print the merged configuration, or with --dump-defaults the
          commented package defaults.

Exit codes: 0 success, 2 configuration or usage error, 3 convergence failure,
4 file error.
"""

EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4

PARSER = argparse.ArgumentParser(
    description=DOCS["description"],
    epilog=DOCS["epilog"],
    formatter_class=argparse.RawDescriptionHelpFormatter)
PARSER.add_argument("-c", "--config", help="path to configuration file")
PARSER.add_argument("-V", "--version", action="store_true",
                    help="Print installed version of romforge package")
PARSER.add_argument("-v", "--verbose", action="count", default=0,
                    help="Increment log verbosity")
PARSER.add_argument("-q", "--quiet", action="count", default=0,
                    help="Decrement log verbosity")
PARSER.add_argument("-t", "--threads", type=int,
                    help="worker threads (1 for reproducible runs)")
PARSER.add_argument("-o", "--out", help="output directory (overrides ROMFORGE_OUT)")
PARSER.add_argument("-f", "--force", action="store_true",
                    help="overwrite existing outputs")
PARSER.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config value by dotted path, e.g. training.batch_size=8")
SUBPARSERS = PARSER.add_subparsers(dest="command", metavar="command")
SUBPARSERS.add_parser("mesh", help="write the mesh listing")
SUBPARSERS.add_parser("generate", help="generate snapshot datasets")
SUBPARSERS.add_parser("svd", help="compute bases")
__TRAIN = SUBPARSERS.add_parser("train", help="train a manifold bundle")
__TRAIN.add_argument("-m", "--mode", required=True, choices=["qloss", "sloss", "rloss"],
                     help="training regime")
__TRAIN.add_argument("--from", dest="warm_from", help="bundle tag or path to start from")
__TRAIN.add_argument("-n", type=int, help="primary size (default: svd.n)")
__TRAIN.add_argument("--hidden", type=int, nargs="+", help="hidden layer widths")
__TRAIN.add_argument("--batch-size", type=int, help="training batch size")
__TRAIN.add_argument("--reduced", action="store_true",
                     help="train on the reduced training set")
__TRAIN.add_argument("--tag", help="bundle name (default derived from the options)")
__ROM = SUBPARSERS.add_parser("rom", help="run one reduced solve")
__ROM_MODEL = __ROM.add_mutually_exclusive_group(required=True)
__ROM_MODEL.add_argument("-b", "--bundle", help="bundle tag or path")
__ROM_MODEL.add_argument("--pod", type=int, metavar="N", help="POD baseline of size N")
__ROM_LOAD = __ROM.add_mutually_exclusive_group(required=True)
__ROM_LOAD.add_argument("-l", "--load", type=float, nargs=2, metavar=("PX", "PY"),
                        help="edge traction in N/m")
__ROM_LOAD.add_argument("-i", "--test-index", type=int, help="test sample index")
__EVAL = SUBPARSERS.add_parser("eval", help="evaluate the experiment grid")
__EVAL.add_argument("-a", "--appendix", default="",
                    help="comma-separated extra studies (a, b, c)")
SUBPARSERS.add_parser("bench", help="run the timing benchmarks")
__CONFIG = SUBPARSERS.add_parser("config", help="show configuration")
__CONFIG.add_argument("--dump-defaults", action="store_true",
                      help="print the commented package defaults")

LOGGER = logging.getLogger()

def _setup_log(verbose, quiet):
    # Handle warnings via logging
    logging.captureWarnings(True)
    # Configure the root logger
    # each -v or -q decreases or increases the log level by 10, starting from
    # WARNING by default.
    lvl_current = LOGGER.getEffectiveLevel()
    lvl_subtract = (verbose - quiet) * 10
    verbosity = max(0, lvl_current - lvl_subtract)
    logging.basicConfig(stream=sys.stderr, level=verbosity)

def overrides_from_args(pairs):
    """Nested config dict from KEY=VALUE strings, values parsed as YAML."""
    tree = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError("override must look like key=value: %s" % pair)
        key, val = pair.split("=", 1)
        keys = key.strip().split(".")
        node = tree
        for part in keys[:-1]:
            node = node.setdefault(part, {})
        node[keys[-1]] = yaml.safe_load(val)
    return tree

def run_command(args, conf):
    """Run one subcommand with a merged configuration."""
    if args.command == "config":
        if args.dump_defaults:
            sys.stdout.write(config.default_text())
        else:
            config.validate(conf)
            sys.stdout.write(yaml.safe_dump(conf, default_flow_style=False))
        return
    proc = Pipeline(args.out, conf, args.threads, args.force)
    if args.command == "mesh":
        print(proc.cmd_mesh())
    elif args.command == "generate":
        manifest = proc.cmd_generate()
        for split, info in manifest["splits"].items():
            print("%s\t%d\t%d excluded" % (split, info["n_samples"], len(info["excluded"])))
    elif args.command == "svd":
        proc.cmd_svd()
        print(proc.paths["bases"])
    elif args.command == "train":
        outdir, _ = proc.cmd_train(
            args.mode, args.n, args.warm_from, args.hidden, args.batch_size,
            args.reduced, args.tag)
        print(outdir)
    elif args.command == "rom":
        summary = proc.cmd_rom(args.bundle, args.pod, args.load, args.test_index)
        print(summary["path"])
        if "e_u" in summary:
            print("e_u\t%r" % summary["e_u"])
    elif args.command == "eval":
        written = proc.cmd_eval(args.appendix.split(","))
        for path in written.values():
            print(path)
    elif args.command == "bench":
        proc.cmd_bench()
        print(proc.paths["reports"])

def exit_code(exception):
    """Process exit code for a failure."""
    if isinstance(exception, (ConfigError, RankDeficiencyError)):
        return EXIT_CONFIG
    if isinstance(exception, (
            ConvergenceError, DegenerateStateError, DatasetError, TrainingError)):
        return EXIT_CONVERGENCE
    if isinstance(exception, (OSError, FormatError, ArtifactExistsError)):
        return EXIT_IO
    return 1

def main(args_raw=None):
    """Executable interface for use as a script.

    Command-line arguments are defined by PARSER.  Run with --help to see from
    the command-line."""
    try:
        if args_raw:
            args = PARSER.parse_args(args_raw)
        else:
            args = PARSER.parse_args()
        _setup_log(args.verbose, args.quiet)
        if args.version:
            print(VERSION or "Not installed")
            return
        if not args.command:
            PARSER.print_usage(sys.stderr)
            sys.exit(EXIT_CONFIG)
        # In order, layer together the package default, system default, and
        # command-line config path (if present), then any --set overrides.
        cpaths = [
            config.path_for_config(),
            config.SYSTEM_CONFIG,
            args.config]
        try:
            conf = config.layer_configs(cpaths)
            config.update_tree(conf, overrides_from_args(args.set))
            # If specific in the config, modify the log level.  Call _setup_log
            # again so that the command-line flags are applied after the new
            # level is set.
            newlevel = conf.get("loglevel")
            if not newlevel is None: # (since 0 is distinct from not set)
                LOGGER.setLevel(newlevel)
                _setup_log(args.verbose, args.quiet)
            run_command(args, conf)
        except BrokenPipeError:
            raise
        except (RomforgeError, OSError, yaml.YAMLError) as exception:
            if isinstance(exception, yaml.YAMLError):
                exception = ConfigError(str(exception))
            LOGGER.critical("%s: %s", type(exception).__name__, exception)
            sys.exit(exit_code(exception))
    except BrokenPipeError:
        pass

if __name__ == '__main__':
    main()
