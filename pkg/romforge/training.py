"""
Losses, gradients, and the epoch loop for manifold training.

Three regimes are supported, matching the training.regimes config section:

 * q_loss: fit the network outputs to the secondary coordinates of the
   snapshots (compact loss, any manifold variant)
 * s_loss: snapshot loss on the decoded states
 * r_loss: FEM residual loss at mu_res, normally warm-started from s_loss

For the snapshot and residual terms the gradient is never formed through
per-sample parameter Jacobians.  The error vectors of a batch are frozen as
state-space cotangents, combined, pulled back through the secondary basis,
and fed to one reverse sweep of the network:

    C_j = 2/(m N) (omega_r/e_pod_r v_R,j + omega_d/e_pod_d v_d,j)
    grad = d/dTheta sum_j (secondary_basis^T C_j) . N(q_j)

naive_residual_gradient does the same computation the expensive way and is
kept as a benchmark baseline and test oracle.
"""

import time
import logging
from collections import namedtuple
import numpy as np
from . import ann
from .processor import BatchProcessor
from .util import ConfigError, TrainingError

LOGGER = logging.getLogger(__name__)

LOSS_MODES = ("q_loss", "s_loss", "r_loss")

HISTORY_FIELDS = [
    "epoch", "lr", "train_loss", "val_loss", "val_aux_loss", "grad_mean", "wall_ms"]

LossScalings = namedtuple("LossScalings", ["e_pod_d", "e_pod_r"])


class TrainConfig:
    """Loss weights, schedule, and batching for one training run."""

    # pylint: disable=too-many-instance-attributes,too-many-arguments

    def __init__(self, omega_d=1.0, omega_r=0.0, epochs=800, batch_size=16, lr0=1e-3,
                 seed=0, loss_mode="s_loss", checkpoint_every=0, lr_min=1e-6,
                 scale_losses=True):
        self.omega_d = float(omega_d)
        self.omega_r = float(omega_r)
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.lr0 = float(lr0)
        self.seed = seed
        self.loss_mode = loss_mode
        self.checkpoint_every = int(checkpoint_every or 0)
        self.lr_min = float(lr_min)
        self.scale_losses = bool(scale_losses)
        if self.omega_d < 0 or self.omega_r < 0:
            raise ConfigError("training: loss weights must be >= 0")
        if self.omega_d + self.omega_r <= 0:
            raise ConfigError("training: loss weights must not both be 0")
        if self.batch_size < 1:
            raise ConfigError("training.batch_size: must be at least 1")
        if self.epochs < 0:
            raise ConfigError("training: epochs must be >= 0")
        if loss_mode not in LOSS_MODES:
            raise ConfigError("training: loss mode must be one of %s" % ", ".join(LOSS_MODES))

    @classmethod
    def from_conf(cls, conf, regime):
        """Build for a regime (qloss, sloss, rloss) from a full config dict."""
        training = conf.get("training", {})
        regimes = training.get("regimes", {})
        if regime not in regimes:
            raise ConfigError("training.regimes.%s: unknown regime" % regime)
        reg = regimes[regime]
        return cls(
            omega_d=reg.get("omega_d", 1.0),
            omega_r=reg.get("omega_r", 0.0),
            epochs=reg.get("epochs", 800),
            batch_size=training.get("batch_size", 16),
            lr0=reg.get("lr0", 1e-3),
            seed=conf.get("seed", 0),
            loss_mode=regime_mode(regime),
            checkpoint_every=training.get("checkpoint_every", 0),
            lr_min=conf.get("optimizer", {}).get("lr_min", 1e-6),
            scale_losses=training.get("scale_losses", True))

    def to_dict(self):
        """Plain dict for manifests."""
        return dict(vars(self))


class BatchWork:
    """Per-sample predictions, error vectors, and cotangents of one batch.

    All state-space quantities are N x m matrices with one column per sample.
    v_d is e_d itself; e_r and v_r are None when the residual term is off."""

    # pylint: disable=too-few-public-methods,too-many-instance-attributes

    def __init__(self, batch_q, predictions, e_d, e_r=None, v_r=None):
        self.batch_q = batch_q
        self.predictions = predictions
        self.e_d = e_d
        self.v_d = e_d
        self.e_r = e_r
        self.v_r = v_r

    @property
    def size(self):
        """Batch size m."""
        return self.predictions.shape[1]

    @property
    def n_dof(self):
        """State size N."""
        return self.predictions.shape[0]


def regime_mode(regime):
    """Loss mode for a config regime name (qloss -> q_loss, ...)."""
    mode = "%s_loss" % regime.replace("loss", "").rstrip("_")
    if mode not in LOSS_MODES:
        raise ConfigError("unknown training regime: %s" % regime)
    return mode

def loss_scalings(bases, scale_losses=True):
    """The global loss normalizers from the bases, or ones when disabled."""
    if not scale_losses:
        return LossScalings(1.0, 1.0)
    return LossScalings(bases.e_pod_d, bases.e_pod_r)

def _check_scale(value, name):
    if value is None or not value > 0:
        raise ConfigError(
            "%s must be positive (is n + n_bar at the snapshot rank?): %s" % (name, value))
    return float(value)

def data_loss(manifold, batch, e_pod_d, batch_q=None):
    """(1/(m N e_pod_d)) sum_j |D(E(u*_j)) - u*_j|^2 over the batch columns."""
    e_pod_d = _check_scale(e_pod_d, "e_pod_d")
    umat = batch.U_star
    batch_q = manifold.encode_batch(umat) if batch_q is None else batch_q
    diff = manifold.decode_batch(batch_q) - umat
    return float(np.sum(diff * diff) / (umat.size * e_pod_d))

def _compact_terms(manifold, batch, batch_q=None):
    umat = batch.U_star
    batch_q = manifold.encode_batch(umat) if batch_q is None else batch_q
    diff = ann.forward(manifold.net, batch_q) - manifold.secondary_targets(umat)
    if manifold.variant == "original":
        weight = np.ones(manifold.bases.n_bar) / umat.shape[1]
    else:
        weight = manifold.bases.xi_bar ** 2 / umat.size
    return batch_q, diff, weight

def compact_q_loss(manifold, batch, batch_q=None):
    """Loss on the secondary coordinates.

    Scaled variant: (1/(m N)) sum_j |xi_bar (N(q_j) - q_bar*_j)|^2, which
    differs from the snapshot loss (with e_pod_d = 1) only by a constant.
    Original variant: (1/m) sum_j |N(q_j) - q_bar*_j|^2."""
    _, diff, weight = _compact_terms(manifold, batch, batch_q)
    return float(np.sum(weight * diff * diff))

def compact_q_loss_gradient(manifold, batch, batch_q=None):
    """Weight gradient of compact_q_loss, as a list per layer."""
    batch_q, diff, weight = _compact_terms(manifold, batch, batch_q)
    return ann.grad_from_cotangents(manifold.net, batch_q, 2.0 * weight * diff)

def _residual_terms(manifold, model, batch, mu_res, predictions, nthreads=1, with_vjp=True):
    """Residual errors e_R,j and pulled-back cotangents v_R,j = e_R,j^T J(u_j).

    With with_vjp False only the errors are assembled and v_R is None."""
    def one_sample(idx):
        u_j = predictions[:, idx]
        err = model.residual(u_j, mu_res) - batch.R_star[:, idx]
        return err, (model.vjp(u_j, mu_res, err) if with_vjp else None)
    results = BatchProcessor(nthreads).run(one_sample, range(predictions.shape[1]))
    failed = [result for result in results if not result.ok]
    if failed:
        for result in failed:
            LOGGER.warning("Residual assembly failed for batch sample %d: %s",
                           result.index, result.error)
        raise TrainingError(
            "degenerate FEM state for %d batch sample(s), first %d: %s" % (
                len(failed), failed[0].index, failed[0].error))
    e_r = np.column_stack([result.value[0] for result in results])
    if not with_vjp:
        return e_r, None
    v_r = np.column_stack([result.value[1] for result in results])
    return e_r, v_r

def residual_loss_and_cotangents(manifold, model, batch, mu_res, e_pod_r,
                                 batch_q=None, nthreads=1):
    """Scaled residual loss and the N x m matrix of cotangents v_R.

    L_R = (1/(m N e_pod_r)) sum_j |R(u_j; mu_res) - R*_j|^2 with
    u_j = D(E(u*_j)) and R*_j the stored residual of the snapshot."""
    e_pod_r = _check_scale(e_pod_r, "e_pod_r")
    batch_q = manifold.encode_batch(batch.U_star) if batch_q is None else batch_q
    predictions = manifold.decode_batch(batch_q)
    e_r, v_r = _residual_terms(manifold, model, batch, mu_res, predictions, nthreads)
    return float(np.sum(e_r * e_r) / (e_r.size * e_pod_r)), v_r

def residual_loss(manifold, model, batch, mu_res, e_pod_r, batch_q=None, nthreads=1):
    """L_R alone, assembling residuals but no vector-Jacobian products."""
    e_pod_r = _check_scale(e_pod_r, "e_pod_r")
    batch_q = manifold.encode_batch(batch.U_star) if batch_q is None else batch_q
    predictions = manifold.decode_batch(batch_q)
    e_r, _ = _residual_terms(
        manifold, model, batch, mu_res, predictions, nthreads, with_vjp=False)
    return float(np.sum(e_r * e_r) / (e_r.size * e_pod_r))

def batch_work(manifold, model, batch, batch_q, with_residual, nthreads=1):
    """Collect predictions, errors and cotangents for one batch."""
    predictions = manifold.decode_batch(batch_q)
    e_d = predictions - batch.U_star
    e_r = v_r = None
    if with_residual:
        e_r, v_r = _residual_terms(
            manifold, model, batch, batch.mu_res, predictions, nthreads)
    return BatchWork(batch_q, predictions, e_d, e_r, v_r)

def combined_gradient(manifold, work, weights, scalings):
    """Gradient of omega_d L_d + omega_r L_R from frozen batch cotangents.

    weights is (omega_d, omega_r) and scalings (e_pod_d, e_pod_r)."""
    omega_d, omega_r = weights
    e_pod_d, e_pod_r = scalings
    factor = 2.0 / (work.size * work.n_dof)
    cotan = np.zeros_like(work.predictions)
    if omega_d:
        cotan += (omega_d / _check_scale(e_pod_d, "e_pod_d")) * work.v_d
    if omega_r:
        if work.v_r is None:
            raise ValueError("residual cotangents missing from batch work")
        cotan += (omega_r / _check_scale(e_pod_r, "e_pod_r")) * work.v_r
    cotan *= factor
    return ann.grad_from_cotangents(
        manifold.net, work.batch_q, manifold.net_cotangents(cotan))

def combined_loss(work, weights, scalings):
    """omega_d L_d + omega_r L_R from the error vectors of a batch."""
    omega_d, omega_r = weights
    total = 0.0
    if omega_d:
        total += omega_d * np.sum(work.e_d * work.e_d) / (work.e_d.size * scalings[0])
    if omega_r:
        total += omega_r * np.sum(work.e_r * work.e_r) / (work.e_r.size * scalings[1])
    return float(total)

def naive_residual_gradient(manifold, model, batch, e_pod_r, batch_q=None, chunk=2048):
    """Residual-loss gradient through explicit per-sample parameter Jacobians.

    For each sample the full dN/dTheta matrix is built, lifted to state space,
    and multiplied by the explicit FEM Jacobian, chunk parameters at a time.
    Returns a list per layer like combined_gradient."""
    e_pod_r = _check_scale(e_pod_r, "e_pod_r")
    batch_q = manifold.encode_batch(batch.U_star) if batch_q is None else batch_q
    predictions = manifold.decode_batch(batch_q)
    mu_res = batch.mu_res
    net = manifold.net
    grad = np.zeros(net.n_params)
    factor = 2.0 / (predictions.size * e_pod_r)
    for idx in range(predictions.shape[1]):
        u_j = predictions[:, idx]
        err = model.residual(u_j, mu_res) - batch.R_star[:, idx]
        jac = model.jacobian(u_j, mu_res)
        pjac = ann.parameter_jacobian(net, batch_q[idx])
        for start in range(0, net.n_params, chunk):
            stop = min(start + chunk, net.n_params)
            du_dtheta = manifold.secondary_basis @ pjac[:, start:stop]
            dres_dtheta = jac @ du_dtheta
            grad[start:stop] += factor * (err @ dres_dtheta)
    return net.with_parameters(grad).weights

def batch_gradient(manifold, model, batch, batch_q, cfg, scalings, nthreads=1):
    """Loss and gradient of one batch for the configured loss mode."""
    if cfg.loss_mode == "q_loss":
        loss = compact_q_loss(manifold, batch, batch_q)
        return loss, compact_q_loss_gradient(manifold, batch, batch_q)
    with_residual = cfg.omega_r > 0
    if with_residual and model is None:
        raise ConfigError("residual training needs a FEM model")
    work = batch_work(manifold, model, batch, batch_q, with_residual, nthreads)
    weights = (cfg.omega_d, cfg.omega_r)
    loss = combined_loss(work, weights, scalings)
    return loss, combined_gradient(manifold, work, weights, scalings)

def validation_losses(manifold, model, validation, cfg, scalings, nthreads=1):
    """(val_loss, val_aux_loss) for the configured loss mode.

    s_loss selects on the snapshot loss and reports the residual loss as the
    auxiliary value when a model is given, nan if any validation state is
    degenerate; r_loss selects on the residual loss and reports the snapshot
    loss."""
    if validation is None or not validation.n_samples:
        return np.nan, np.nan
    batch_q = manifold.encode_batch(validation.U_star)
    if cfg.loss_mode == "q_loss":
        return compact_q_loss(manifold, validation, batch_q), np.nan
    snap = data_loss(manifold, validation, scalings.e_pod_d, batch_q)
    res = np.nan
    if model is not None and cfg.loss_mode == "r_loss":
        res = residual_loss(manifold, model, validation, validation.mu_res,
                            scalings.e_pod_r, batch_q, nthreads)
    elif model is not None and scalings.e_pod_r:
        try:
            res = residual_loss(manifold, model, validation, validation.mu_res,
                                scalings.e_pod_r, batch_q, nthreads)
        except TrainingError as exception:
            LOGGER.warning("Validation residual loss left as nan: %s", exception)
    if cfg.loss_mode == "r_loss":
        return res, snap
    return snap, res

def train(manifold, datasets, model, cfg, optimizer_cfg=None, nthreads=1, checkpoint=None):
    """Run the epoch loop and return (best manifold, history rows).

    datasets needs train and validation SnapshotSets.  Each epoch the training
    columns are shuffled with a generator seeded by cfg.seed, every batch
    takes one AdamW step at the epoch's learning rate, and the validation loss
    is recorded.  The weights with the lowest validation loss are returned.
    If checkpoint is callable it's called as checkpoint(epoch, manifold) every
    cfg.checkpoint_every epochs.

    Raises TrainingError on a non-finite loss or a degenerate residual batch.
    """
    train_set = datasets.train
    validation = getattr(datasets, "validation", None)
    scalings = loss_scalings(manifold.bases, cfg.scale_losses)
    if cfg.loss_mode != "q_loss":
        _check_scale(scalings.e_pod_d, "e_pod_d")
        if cfg.omega_r > 0 or cfg.loss_mode == "r_loss":
            _check_scale(scalings.e_pod_r, "e_pod_r")
            if model is None:
                raise ConfigError("residual training needs a FEM model")
    optimizer_cfg = optimizer_cfg or ann.AdamWConfig(lr_min=cfg.lr_min)
    state = ann.OptimizerState(manifold.net, optimizer_cfg, cfg.lr0)
    all_q = manifold.encode_batch(train_set.U_star)
    n_samples = train_set.n_samples
    rng = np.random.default_rng(cfg.seed)
    history = []
    best = (np.inf, manifold)
    LOGGER.info("Training %s (%s) for %d epochs on %d samples, batch size %d",
                manifold, cfg.loss_mode, cfg.epochs, n_samples, cfg.batch_size)
    for epoch in range(cfg.epochs):
        time_start = time.perf_counter()
        lr_epoch = ann.lr_at_epoch(cfg, epoch)
        order = rng.permutation(n_samples)
        losses, grad_means = [], []
        for start in range(0, n_samples, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = BatchView(train_set, idx)
            loss, grads = batch_gradient(
                manifold, model, batch, all_q[idx], cfg, scalings, nthreads)
            if not np.isfinite(loss):
                raise TrainingError(
                    "non-finite training loss at epoch %d, batch starting %d" % (
                        epoch + 1, start))
            manifold = manifold.with_net(ann.adamw_step(state, manifold.net, grads, lr_epoch))
            losses.append(loss)
            grad_means.append(float(np.mean(np.abs(ann.flatten(grads)))))
        val_loss, val_aux = validation_losses(
            manifold, model, validation, cfg, scalings, nthreads)
        row = {
            "epoch": epoch + 1,
            "lr": lr_epoch,
            "train_loss": float(np.mean(losses)),
            "val_loss": float(val_loss),
            "val_aux_loss": float(val_aux),
            "grad_mean": float(np.mean(grad_means)),
            "wall_ms": 1000 * (time.perf_counter() - time_start)}
        history.append(row)
        LOGGER.debug("epoch %d: lr %g train %g val %g", epoch + 1, lr_epoch,
                     row["train_loss"], row["val_loss"])
        if not np.isfinite(row["train_loss"]):
            raise TrainingError("non-finite training loss at epoch %d" % (epoch + 1))
        # A missing validation set keeps the latest weights.
        if np.isnan(val_loss) or val_loss < best[0]:
            best = (val_loss if not np.isnan(val_loss) else np.inf, manifold)
        if checkpoint and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            LOGGER.info("Checkpoint at epoch %d (train %g, val %g)",
                        epoch + 1, row["train_loss"], row["val_loss"])
            checkpoint(epoch + 1, manifold)
    return best[1], history


class BatchView:
    """Columns of a SnapshotSet selected by index, without copying metadata."""

    # pylint: disable=too-few-public-methods,invalid-name

    def __init__(self, snapshots, idx):
        self.U_star = snapshots.U_star[:, idx]
        self.R_star = snapshots.R_star[:, idx]
        self.mu_res = snapshots.mu_res
