"""
Lay out pipeline artifacts on disk and run each stage.

See Pipeline class for usage.
"""

import os
import copy
import json
import logging
from pathlib import Path
import numpy as np
from . import CONFIG
from . import config
from . import ann
from . import pod
from . import snapshots
from . import training
from . import evaluation
from .config import update_tree
from .fem import model_from_conf, NewtonConfig, LoadParams
from .manifold import PromAnnManifold, PodManifold, original_manifold
from .rom import RomConfig, rom_solve, write_trace
from .util import (
    mkparent, write_csv, load_csv, check_overwrite, ConfigError, FormatError)

LOGGER = logging.getLogger(__name__)

SPLITS = ["train", "validation", "test", "extrapolation"]


def bundle_tag(regime, n, hidden=None, batch_size=None, reduced=False):
    """Directory name for a trained bundle, like sloss_n06."""
    tag = "%s_n%02d%s" % (regime, int(n), variant_suffix(hidden, batch_size))
    if reduced:
        tag += "_reduced"
    return tag

def variant_suffix(hidden=None, batch_size=None):
    """Tag suffix for a non-default width or batch size, like _h200x200_b8."""
    suffix = ""
    if hidden is not None:
        suffix += "_h" + "x".join(str(int(h)) for h in hidden)
    if batch_size is not None:
        suffix += "_b%d" % int(batch_size)
    return suffix

def save_bundle(path, manifold, manifest):
    """Write a manifold bundle directory: bases, weights, u_ref, manifest.json."""
    path = Path(path)
    pod.save_bases(manifold.bases, path / "bases.romb")
    ann.save_weights(manifold.net, path / "weights.json", manifest.get("optimizer"))
    if manifold.u_ref is not None:
        with open(path / "u_ref.npy", "wb") as f_out:
            np.save(f_out, manifold.u_ref)
    manifest = dict(manifest, variant=manifold.variant,
                    n=manifold.bases.n, n_bar=manifold.bases.n_bar)
    write_json(manifest, path / "manifest.json")

def load_bundle(path):
    """Read a bundle directory, returning (manifold, manifest)."""
    path = Path(path)
    manifest = read_json(path / "manifest.json")
    bases = pod.load_bases(path / "bases.romb")
    net = ann.load_weights(path / "weights.json")
    u_ref = None
    if manifest.get("variant") == "original":
        u_ref = np.load(path / "u_ref.npy")
    try:
        manifold = PromAnnManifold(bases, net, manifest.get("variant", "scaled"), u_ref)
    except ValueError as exception:
        raise FormatError("inconsistent bundle %s: %s" % (path, exception))
    return manifold, manifest

def write_json(data, path):
    """Write a dict as indented JSON, making the parent if needed."""
    mkparent(path)
    with open(path, "w") as f_out:
        json.dump(data, f_out, indent=2, sort_keys=True)
        f_out.write("\n")

def read_json(path):
    """Read a JSON file, raising FormatError if malformed."""
    with open(path) as f_in:
        try:
            return json.load(f_in)
        except json.JSONDecodeError as exception:
            raise FormatError("malformed JSON in %s: %s" % (path, exception))


class Pipeline:
    """
    Run the stages of the reduced-order modeling pipeline in one directory.

    Layout under the output directory:

        mesh.txt
        data/{train,validation,test,extrapolation}.romf, params_<split>.csv,
            manifest.json
        bases/svd.npz, bases/n<NN>_nbar<MM>.romb, manifest.json
        bundles/<tag>/ with bases.romb, weights.json, manifest.json,
            history.csv, checkpoints/epoch_<EEEE>/
        rom/<tag>/solution.csv, trace.csv
        reports/*.csv

    Every manifest records the configuration hash of the stage that made it,
    and reading an artifact whose hash disagrees with the current
    configuration raises ConfigError.
    """

    def __init__(self, path=None, conf=None, nthreads=None, force=False):
        LOGGER.debug("Pipeline initializing...")
        self.conf = copy.deepcopy(CONFIG)
        update_tree(self.conf, conf or {})
        config.validate(self.conf)
        path = path or os.getenv("ROMFORGE_OUT") or self.conf.get("output", "romforge-out")
        self.path = Path(path).resolve()
        self.nthreads = int(nthreads or self.conf.get("nthreads", 1) or 1)
        self.force = force
        self.paths = {
            "mesh": self.path / "mesh.txt",
            "data": self.path / "data",
            "bases": self.path / "bases",
            "bundles": self.path / "bundles",
            "rom": self.path / "rom",
            "reports": self.path / "reports",
            }
        self._model = None
        self._svd = {}
        self._datasets = {}
        LOGGER.debug("Pipeline initialized at %s", self.path)

    @property
    def model(self):
        """The FemModel described by the fem config section."""
        if self._model is None:
            self._model = model_from_conf(self.conf["fem"])
        return self._model

    @property
    def newton_cfg(self):
        """NewtonConfig from the newton config section."""
        return NewtonConfig.from_conf(self.conf["newton"])

    @property
    def rom_cfg(self):
        """RomConfig from the rom config section."""
        return RomConfig.from_conf(self.conf["rom"])

    def stage_hash(self, stage):
        """Configuration hash of the sections a pipeline stage depends on."""
        return config.config_hash(self.conf, config.STAGE_SECTIONS[stage])

    ### Mesh and data

    def cmd_mesh(self):
        """Write the mesh listing to mesh.txt."""
        path = self.paths["mesh"]
        check_overwrite(path, self.force)
        self.model.mesh.export(path)
        LOGGER.info("Mesh written to %s", path)
        return path

    def cmd_generate(self):
        """Solve the FOM for every split and write snapshot files and a manifest."""
        manifest_path = self.paths["data"] / "manifest.json"
        check_overwrite(manifest_path, self.force)
        sampling = self.conf["sampling"]
        train, validation, test = snapshots.split_parameters(sampling)
        extra = sampling.get("extrapolation", {})
        extrapolation = snapshots.sample_extrapolation(
            int(extra.get("count", 50)), sampling["domain"],
            float(extra.get("band", 500.0)), extra.get("seed", 1234))
        mu_res = LoadParams(*[float(val) for val in sampling["mu_res"]])
        manifest = {"stage": "dataset", "config_hash": self.stage_hash("dataset"),
                    "mu_res": list(mu_res), "splits": {}}
        for split, params in zip(SPLITS, [train, validation, test, extrapolation]):
            LOGGER.info("Generating %s split (%d samples)", split, len(params))
            snaps = snapshots.generate_dataset(
                self.model, params, mu_res, self.newton_cfg, self.nthreads,
                float(sampling.get("max_failure_fraction", 0.1)))
            snapshots.save_snapshots(snaps, self.paths["data"] / ("%s.romf" % split))
            snapshots.save_params_csv(
                snaps.loads, self.paths["data"] / ("params_%s.csv" % split))
            manifest["splits"][split] = {
                "file": "%s.romf" % split, "n_samples": snaps.n_samples,
                "excluded": snaps.excluded}
            self._datasets[split] = snaps
        write_json(manifest, manifest_path)
        return manifest

    def dataset(self, split):
        """Load one split, checking the data manifest hash."""
        if split not in self._datasets:
            manifest_path = self.paths["data"] / "manifest.json"
            if not manifest_path.exists():
                raise ConfigError(
                    "no dataset at %s (run the generate command first)" % self.paths["data"])
            manifest = read_json(manifest_path)
            if manifest.get("config_hash") != self.stage_hash("dataset"):
                raise ConfigError(
                    "dataset at %s was made with a different configuration" % self.paths["data"])
            self._datasets[split] = snapshots.load_snapshots(
                self.paths["data"] / ("%s.romf" % split))
        return self._datasets[split]

    def training_set(self, reduced=False):
        """The training split, or its leading columns for the reduced study."""
        train = self.dataset("train")
        if reduced:
            count = min(int(self.conf["eval"]["appendix_a"]["n_train"]), train.n_samples)
            train = snapshots.subset(train, np.arange(count))
        return train

    ### Bases

    def cmd_svd(self):
        """SVD the training snapshots and write bases for every grid size."""
        manifest_path = self.paths["bases"] / "manifest.json"
        check_overwrite(manifest_path, self.force)
        svd = self.svd(reuse=False)
        sizes = sorted(set(int(n) for n in self.conf["svd"]["grid"] + [self.conf["svd"]["n"]]))
        for n in sizes:
            self.bases(n, rebuild=True)
        reports = self.paths["reports"]
        write_csv(reports / "singular_values.csv",
                  ["index", "sigma", "relative", "energy"], pod.singular_value_rows(svd))
        default = self.bases(int(self.conf["svd"]["n"]))
        write_csv(reports / "coordinate_ranges.csv",
                  ["kind", "mode", "mean", "variance", "min", "max"],
                  pod.coordinate_statistics(default, self.dataset("train")))
        return sizes

    def svd(self, reduced=False, reuse=True):
        """SVD factors of the (possibly reduced) training matrix, cached on disk."""
        key = "reduced" if reduced else "full"
        if key in self._svd:
            return self._svd[key]
        path = self.paths["bases"] / ("svd_reduced.npz" if reduced else "svd.npz")
        if reuse and path.exists():
            self._check_bases_manifest()
            svd = pod.load_svd(path)
        else:
            svd = pod.compute_svd(self.training_set(reduced).U_star)
            pod.save_svd(svd, path)
            self._write_bases_manifest()
        self._svd[key] = svd
        return svd

    def bases(self, n, reduced=False, rebuild=False):
        """RomBases with n primary and n_total - n secondary modes.

        Loaded from bases/ when present; otherwise built (with both baseline
        errors) and saved."""
        n = int(n)
        n_bar = int(self.conf["svd"]["n_total"]) - n
        name = "%sn%02d_nbar%02d.romb" % ("reduced_" if reduced else "", n, n_bar)
        path = self.paths["bases"] / name
        if path.exists() and not rebuild:
            self._check_bases_manifest()
            return pod.load_bases(path)
        train = self.training_set(reduced)
        svd = self.svd(reduced)
        bases = pod.build_bases(svd, n, n_bar, train.n_samples)
        bases = bases.with_errors(
            pod.compute_e_pod_d(bases, train),
            pod.compute_e_pod_r(bases, self.model, train, self.nthreads))
        LOGGER.info("Bases n=%d n_bar=%d: e_pod_d=%g e_pod_r=%g",
                    n, n_bar, bases.e_pod_d, bases.e_pod_r)
        pod.save_bases(bases, path)
        self._write_bases_manifest()
        return bases

    def _write_bases_manifest(self):
        write_json({"stage": "bases", "config_hash": self.stage_hash("bases")},
                   self.paths["bases"] / "manifest.json")

    def _check_bases_manifest(self):
        path = self.paths["bases"] / "manifest.json"
        if not path.exists() or read_json(path).get("config_hash") != self.stage_hash("bases"):
            raise ConfigError(
                "bases at %s were made with a different configuration" % self.paths["bases"])

    ### Training

    def cmd_train(self, mode, n=None, warm_from=None, hidden=None, batch_size=None,
                  reduced=False, tag=None):
        """Train one bundle for a regime (qloss, sloss, rloss).

        rloss needs warm_from, a bundle tag or directory to start from."""
        training.regime_mode(mode)
        if mode == "rloss" and not warm_from:
            raise ConfigError("rloss training needs a warm start (--from an sloss bundle)")
        n = int(n or self.conf["svd"]["n"])
        cfg = training.TrainConfig.from_conf(self.conf, mode)
        if batch_size is not None:
            cfg.batch_size = int(batch_size)
        tag = tag or bundle_tag(mode, n, hidden, batch_size, reduced)
        outdir = self.paths["bundles"] / tag
        check_overwrite(outdir / "manifest.json", self.force)
        bases = self.bases(n, reduced)
        train = self.training_set(reduced)
        datasets = snapshots.DatasetSplit(train, self.dataset("validation"), None)
        if warm_from:
            manifold, _ = self.load_bundle(warm_from)
            if manifold.bases.n != n or manifold.variant != "scaled":
                raise ConfigError("warm start bundle %s doesn't match n=%d scaled" % (
                    warm_from, n))
            manifold = PromAnnManifold(bases, manifold.net)
        else:
            hidden = [int(h) for h in (hidden or self.conf["ann"]["hidden"])]
            net = init_net(n, bases.n_bar, hidden, self.conf.get("seed", 0),
                           self.conf["ann"].get("activation", "elu"))
            if mode == "qloss":
                manifold = original_manifold(bases, net, train)
            else:
                manifold = PromAnnManifold(bases, net)
        optimizer = ann.AdamWConfig.from_conf(self.conf.get("optimizer"))
        manifest = {
            "stage": "bundle", "regime": mode, "tag": tag,
            "config_hash": self.stage_hash("bundle"),
            "dataset_hash": self.stage_hash("dataset"),
            "bases_hash": self.stage_hash("bases"),
            "reduced": bool(reduced), "warm_from": str(warm_from) if warm_from else None,
            "layer_dims": manifold.net.layer_dims,
            "training": cfg.to_dict(), "optimizer": optimizer.to_dict()}
        def checkpoint(epoch, current):
            save_bundle(outdir / "checkpoints" / ("epoch_%04d" % epoch), current,
                        dict(manifest, epoch=epoch))
        model = None if cfg.loss_mode == "q_loss" else self.model
        manifold, history = training.train(
            manifold, datasets, model, cfg, optimizer, self.nthreads, checkpoint)
        save_bundle(outdir, manifold, manifest)
        write_csv(outdir / "history.csv", training.HISTORY_FIELDS, history)
        LOGGER.info("Bundle written to %s", outdir)
        return outdir, history

    def bundle_path(self, tag_or_path):
        """Directory for a bundle tag, or the path itself if it's a directory."""
        path = Path(tag_or_path)
        if path.is_dir() and (path / "manifest.json").exists():
            return path
        return self.paths["bundles"] / str(tag_or_path)

    def load_bundle(self, tag_or_path):
        """Load a bundle, checking it was built from the current dataset and bases."""
        path = self.bundle_path(tag_or_path)
        if not (path / "manifest.json").exists():
            raise FileNotFoundError("no bundle at %s" % path)
        manifold, manifest = load_bundle(path)
        for key, stage in [("dataset_hash", "dataset"), ("bases_hash", "bases")]:
            if manifest.get(key) != self.stage_hash(stage):
                raise ConfigError("bundle %s was trained under a different %s configuration" % (
                    path, stage))
        return manifold, manifest

    def bundle(self, mode, n, hidden=None, batch_size=None, reduced=False):
        """A bundle's manifold, trained first if missing and eval.train_missing is set.

        rloss bundles are trained from the matching sloss bundle."""
        tag = bundle_tag(mode, n, hidden, batch_size, reduced)
        path = self.paths["bundles"] / tag
        if not (path / "manifest.json").exists():
            if not self.conf["eval"].get("train_missing", True):
                raise FileNotFoundError("no bundle at %s" % path)
            warm = None
            if mode == "rloss":
                self.bundle("sloss", n, hidden, batch_size, reduced)
                warm = bundle_tag("sloss", n, hidden, batch_size, reduced)
            self.cmd_train(mode, n, warm, hidden, batch_size, reduced)
        return self.load_bundle(tag)[0]

    ### Online solves

    def cmd_rom(self, bundle=None, pod_n=None, load=None, test_index=None, tag=None):
        """Run one ROM solve and write the solution and trace.

        Use either a bundle or pod_n (the POD baseline of that size), and
        either an explicit load (px, py) or the index of a test sample.  With
        a test sample the result's e_u against the stored FOM is included."""
        if (bundle is None) == (pod_n is None):
            raise ConfigError("give exactly one of a bundle or a POD size")
        if (load is None) == (test_index is None):
            raise ConfigError("give exactly one of a load or a test sample index")
        if bundle is not None:
            manifold, _ = self.load_bundle(bundle)
            tag = tag or self.bundle_path(bundle).name
        else:
            manifold = PodManifold(self.bases(pod_n).phi)
            tag = tag or "pod_n%02d" % int(pod_n)
        truth = None
        if test_index is not None:
            test = self.dataset("test")
            load = test.load(int(test_index))
            truth = test.U_star[:, int(test_index)]
            tag += "_test%03d" % int(test_index)
        load = LoadParams(float(load[0]), float(load[1]))
        outdir = self.paths["rom"] / tag
        check_overwrite(outdir / "solution.csv", self.force)
        result = rom_solve(manifold, self.model, load, self.rom_cfg, truth)
        self.write_solution(result.u, outdir / "solution.csv")
        write_trace(result.trace, outdir / "trace.csv")
        summary = {"tag": tag, "px": load.px, "py": load.py,
                   "iterations": result.n_iter, "path": str(outdir)}
        if truth is not None:
            summary["e_u"] = evaluation.metric_e_u(result.u[:, None], truth[:, None])
        return summary

    def write_solution(self, u_free, path):
        """Nodal displacement CSV with the clamped nodes' zeros reinserted."""
        coords = self.model.mesh.node_coordinates
        disp = self.model.nodal_displacements(u_free)
        rows = [{"node": idx, "x": float(coords[idx, 0]), "y": float(coords[idx, 1]),
                 "ux": float(disp[idx, 0]), "uy": float(disp[idx, 1])}
                for idx in range(coords.shape[0])]
        write_csv(path, ["node", "x", "y", "ux", "uy"], rows)

    ### Evaluation and benchmarks

    def grid_cells(self, models, sizes, hidden=None, batch_size=None, reduced=False):
        """GridCell entries for every model tag and primary size."""
        n_total = int(self.conf["svd"]["n_total"])
        cells = []
        for model in models:
            for n in sizes:
                n = int(n)
                if model == "pod":
                    loader = lambda n=n: PodManifold(self.bases(n, reduced).phi)
                    label = "pod"
                else:
                    loader = lambda model=model, n=n: self.bundle(
                        model, n, hidden, batch_size, reduced)
                    label = model + variant_suffix(hidden, batch_size)
                cells.append(evaluation.GridCell(label, n, n_total - n, loader))
        return cells

    def cmd_eval(self, appendices=()):
        """Evaluate the model/size grid on the test set, plus optional studies.

        appendices can hold "a" (reduced training set), "b" (extrapolation
        loads), and "c" (network width and batch size variants).  Returns a
        dict of report name to path."""
        evalconf = self.conf["eval"]
        reports = self.paths["reports"]
        grid_path = reports / "grid.csv"
        check_overwrite(grid_path, self.force)
        modes = evalconf.get("modes", ["reconstruction", "rom"])
        written = {}
        report = evaluation.run_experiment_grid(
            self.grid_cells(evalconf["models"], self.conf["svd"]["grid"]),
            self.model, self.dataset("test"), modes, self.rom_cfg, self.nthreads)
        report.write(grid_path)
        written["grid"] = grid_path
        for name, mode, metric in [("fig_reconstruction", "reconstruction", "e_u"),
                                   ("fig_rom", "rom", "e_u"),
                                   ("fig_residual", "reconstruction", "e_R")]:
            path = reports / ("%s.csv" % name)
            write_csv(path, evaluation.FIGURE_FIELDS, report.figure_rows(mode, metric))
            written[name] = path
        for appendix in appendices:
            appendix = appendix.strip().lower()
            if not appendix:
                continue
            if appendix not in ("a", "b", "c"):
                raise ConfigError("unknown appendix study: %s" % appendix)
            path = reports / ("appendix_%s.csv" % appendix)
            getattr(self, "_appendix_%s" % appendix)(modes).write(path)
            written["appendix_%s" % appendix] = path
        return written

    def _appendix_a(self, modes):
        cells = self.grid_cells(["pod", "sloss"], self.conf["svd"]["grid"], reduced=True)
        return evaluation.run_experiment_grid(
            cells, self.model, self.dataset("test"), modes, self.rom_cfg, self.nthreads)

    def _appendix_b(self, modes):
        sizes = self.conf["eval"]["appendix_b"]["grid"]
        cells = self.grid_cells(self.conf["eval"]["models"], sizes)
        return evaluation.run_experiment_grid(
            cells, self.model, self.dataset("extrapolation"), modes, self.rom_cfg,
            self.nthreads)

    def _appendix_c(self, modes):
        appc = self.conf["eval"]["appendix_c"]
        report = evaluation.EvalReport()
        for hidden in appc["hidden"]:
            for batch_size in appc["batch_size"]:
                cells = self.grid_cells(["sloss"], [appc["n"]], hidden, batch_size)
                report.extend(evaluation.run_experiment_grid(
                    cells, self.model, self.dataset("test"), modes, self.rom_cfg,
                    self.nthreads))
                tag = bundle_tag("sloss", appc["n"], hidden, batch_size)
                history = self.paths["bundles"] / tag / "history.csv"
                if history.exists():
                    best = _best_validation(history)
                    for row in report.rows[-len(modes):]:
                        row["notes"] = (row["notes"] + " " if row["notes"] else "") + \
                            "best_val_loss=%r" % best
        return report

    def cmd_bench(self):
        """Time training batches and reduced solves; write two report CSVs."""
        bench = self.conf["bench"]
        reports = self.paths["reports"]
        check_overwrite(reports / "bench_solve.csv", self.force)
        prom_sizes = [int(n) for n in bench["prom_ann_n"]]
        pod_sizes = [int(n) for n in bench["pod_n"]]
        entries = [("PROM-ANN", self.bundle("sloss", n)) for n in prom_sizes]
        entries += [("POD", PodManifold(self.bases(n).phi)) for n in pod_sizes]
        test = self.dataset("test")
        loads = test.loads[:int(bench.get("n_loads", 5))]
        train_rows, solve_rows = evaluation.runtime_benchmark(
            (entries[0][1], self.dataset("train")), entries, self.model, loads,
            int(self.conf["training"]["batch_size"]), int(bench.get("n_batches", 10)),
            int(bench.get("n_naive_batches", 2)), self.rom_cfg, self.newton_cfg)
        write_csv(reports / "bench_train.csv", evaluation.TRAIN_TIMING_FIELDS, train_rows)
        write_csv(reports / "bench_solve.csv", evaluation.SOLVE_TIMING_FIELDS, solve_rows)
        return train_rows, solve_rows


def init_net(n, n_bar, hidden, seed, activation="elu"):
    """Fresh network n -> hidden... -> n_bar."""
    net = ann.init_mlp([n] + list(hidden) + [n_bar], seed)
    if activation != net.activation:
        raise ConfigError("ann.activation: only elu is supported, not %s" % activation)
    return net

def _best_validation(history_path):
    values = [float(row["val_loss"]) for row in load_csv(history_path)
              if row["val_loss"] not in ("", "nan")]
    return min(values) if values else float("nan")
