"""
Tests for the command-line interface.
"""

import io
import contextlib
from tempfile import TemporaryDirectory
import yaml
from romforge import __main__ as cli
from romforge.util import (
    ConfigError, ConvergenceError, SingularSystemError, TrainingError, FormatError,
    ArtifactExistsError, RomforgeError)
from .test_common import TestBase


def run_main(args):
    """Call main, returning (exit code, stdout text)."""
    out = io.StringIO()
    code = 0
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(io.StringIO()):
        try:
            cli.main(args)
        except SystemExit as exception:
            code = exception.code
    return code, out.getvalue()


class TestOverrides(TestBase):
    """Test --set parsing."""

    def test_overrides(self):
        """Dotted keys nest and values are parsed as YAML."""
        tree = cli.overrides_from_args(["training.batch_size=8", "svd.grid=[2, 3]", "output=x"])
        self.assertEqual(tree, {
            "training": {"batch_size": 8}, "svd": {"grid": [2, 3]}, "output": "x"})
        with self.assertRaises(ConfigError):
            cli.overrides_from_args(["training.batch_size"])


class TestExitCodes(TestBase):
    """Test the exception to exit code mapping."""

    def test_exit_code(self):
        """Configuration 2, convergence 3, files 4, anything else 1."""
        self.assertEqual(cli.exit_code(ConfigError("x")), 2)
        self.assertEqual(cli.exit_code(ConvergenceError("x")), 3)
        self.assertEqual(cli.exit_code(SingularSystemError("x", condition=1e20)), 3)
        self.assertEqual(cli.exit_code(TrainingError("x")), 3)
        self.assertEqual(cli.exit_code(FileNotFoundError("x")), 4)
        self.assertEqual(cli.exit_code(FormatError("x")), 4)
        self.assertEqual(cli.exit_code(ArtifactExistsError("x")), 4)
        self.assertEqual(cli.exit_code(RomforgeError("x")), 1)


class TestMain(TestBase):
    """Test main end to end for the cheap commands."""

    def test_no_command(self):
        """Without a command the usage goes to stderr with exit code 2."""
        code, out = run_main(["-v"])
        self.assertEqual(code, 2)
        self.assertEqual(out, "")

    def test_version(self):
        """-V prints something and exits cleanly."""
        code, out = run_main(["-V"])
        self.assertEqual(code, 0)
        self.assertTrue(out.strip())

    def test_dump_defaults(self):
        """The commented package defaults are printed verbatim."""
        code, out = run_main(["config", "--dump-defaults"])
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith("# Default run-time configuration options."))
        self.assertEqual(yaml.safe_load(out)["svd"]["grid"], [6, 10, 14, 18, 20])

    def test_config_set(self):
        """--set overrides show up in the merged configuration."""
        code, out = run_main(["-s", "training.batch_size=8", "config"])
        self.assertEqual(code, 0)
        conf = yaml.safe_load(out)
        self.assertEqual(conf["training"]["batch_size"], 8)
        self.assertEqual(conf["svd"]["n"], 6)

    def test_config_errors(self):
        """Bad overrides and invalid values exit with code 2."""
        self.assertEqual(run_main(["-s", "oops", "config"])[0], 2)
        self.assertEqual(run_main(["-s", "fem.poisson_ratio=0.7", "config"])[0], 2)
        self.assertEqual(run_main(["-s", "svd.grid=[", "config"])[0], 2)

    def test_usage_error(self):
        """argparse rejects incomplete commands with code 2."""
        self.assertEqual(run_main(["rom", "--pod", "2"])[0], 2)

    def test_rloss_without_warm_start(self):
        """rloss training needs --from."""
        with TemporaryDirectory() as tmpdir:
            code, _ = run_main(["-o", tmpdir, "train", "-m", "rloss"])
        self.assertEqual(code, 2)

    def test_missing_bundle(self):
        """A bundle that isn't there is a file error."""
        with TemporaryDirectory() as tmpdir:
            code, _ = run_main(["-o", tmpdir, "rom", "-b", "nope", "-l", "0", "0"])
        self.assertEqual(code, 4)
