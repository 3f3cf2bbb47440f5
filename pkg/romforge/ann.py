"""
Bias-free multilayer perceptron mapping primary to secondary coordinates.

Hidden layers use ELU and the output layer is linear.  With no bias terms
the network maps 0 to 0 for any weights.  Weights are stored as one
(out, in) matrix per layer; batches are (m, in) arrays with one sample per
row.

Gradients come from injecting constant output cotangents c_j and running a
single reverse sweep for the scalar sum_j c_j . N(q_j), see
grad_from_cotangents.
"""

import json
import math
import logging
import numpy as np
from .util import mkparent, ConfigError, FormatError

LOGGER = logging.getLogger(__name__)


def elu(x):
    """x for x >= 0, exp(x) - 1 otherwise."""
    return np.where(x >= 0, x, np.expm1(np.minimum(x, 0.0)))

def elu_derivative(x):
    """1 for x >= 0, exp(x) otherwise."""
    return np.where(x >= 0, 1.0, np.exp(np.minimum(x, 0.0)))


class MlpModel:
    """Layer dimensions (n, h_1, ..., h_L, n_bar) and their weight matrices."""

    def __init__(self, layer_dims, weights, activation="elu", seed=None):
        self.layer_dims = [int(dim) for dim in layer_dims]
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.activation = activation
        self.seed = seed
        if activation != "elu":
            raise ConfigError("ann.activation: only elu is supported, not %s" % activation)
        if len(self.layer_dims) < 3:
            raise ConfigError("ann.hidden: need at least one hidden layer")
        if len(self.weights) != len(self.layer_dims) - 1:
            raise ValueError("need one weight matrix per layer")
        for idx, weight in enumerate(self.weights):
            shape = (self.layer_dims[idx + 1], self.layer_dims[idx])
            if weight.shape != shape:
                raise ValueError("layer %d weights are %s, expected %s" % (
                    idx, weight.shape, shape))

    @property
    def n_in(self):
        """Input size n."""
        return self.layer_dims[0]

    @property
    def n_out(self):
        """Output size n_bar."""
        return self.layer_dims[-1]

    @property
    def n_params(self):
        """Total number of weights."""
        return sum(w.size for w in self.weights)

    def parameters(self):
        """All weights concatenated into one flat vector, layer by layer."""
        return np.concatenate([w.ravel() for w in self.weights])

    def with_parameters(self, flat):
        """A new model with weights taken from a flat parameter vector."""
        weights = []
        pos = 0
        for weight in self.weights:
            weights.append(np.asarray(flat[pos:pos + weight.size]).reshape(weight.shape))
            pos += weight.size
        return self.with_weights(weights)

    def with_weights(self, weights):
        """A new model with the same architecture and the given weights."""
        return MlpModel(self.layer_dims, weights, self.activation, self.seed)

    def copy(self):
        """A deep copy."""
        return self.with_weights([w.copy() for w in self.weights])

    def zeroed(self):
        """The same architecture with every weight zero."""
        return self.with_weights([np.zeros_like(w) for w in self.weights])

    def __repr__(self):
        return "MlpModel(%s)" % "x".join(str(dim) for dim in self.layer_dims)


def init_mlp(layer_dims, seed):
    """Glorot-uniform initialized network, deterministic given seed."""
    layer_dims = [int(dim) for dim in layer_dims]
    if len(layer_dims) < 3:
        raise ConfigError("ann.hidden: need at least one hidden layer")
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
    return MlpModel(layer_dims, weights, seed=seed)

def _forward_cache(model, batch_q):
    """Forward pass over an (m, n) batch keeping each layer's input and
    pre-activation for the reverse sweep."""
    act = np.asarray(batch_q, dtype=float)
    inputs, preacts = [], []
    for idx, weight in enumerate(model.weights):
        inputs.append(act)
        pre = act @ weight.T
        preacts.append(pre)
        act = pre if idx == len(model.weights) - 1 else elu(pre)
    return act, inputs, preacts

def forward(model, q):
    """N(q) for one vector (n,) or a batch (m, n)."""
    q = np.asarray(q, dtype=float)
    out, _, _ = _forward_cache(model, np.atleast_2d(q))
    return out[0] if q.ndim == 1 else out

def input_jacobian(model, q):
    """dN/dq at one input, an (n_bar, n) matrix."""
    q = np.asarray(q, dtype=float)
    _, _, preacts = _forward_cache(model, q[None, :])
    jac = model.weights[0]
    for idx in range(1, len(model.weights)):
        jac = model.weights[idx] @ (elu_derivative(preacts[idx - 1][0])[:, None] * jac)
    return jac

def grad_from_cotangents(model, batch_q, cotangents):
    """Gradient of sum_j c_j . N(q_j) with respect to every weight matrix.

    batch_q is (m, n) and cotangents (m, n_bar).  Returns a list of arrays
    matching model.weights."""
    batch_q = np.atleast_2d(np.asarray(batch_q, dtype=float))
    cotan = np.atleast_2d(np.asarray(cotangents, dtype=float))
    if batch_q.shape[0] != cotan.shape[0] or not batch_q.shape[0]:
        raise ValueError("need matching, nonempty batches of inputs and cotangents")
    if cotan.shape[1] != model.n_out:
        raise ValueError("cotangents must have %d columns" % model.n_out)
    _, inputs, preacts = _forward_cache(model, batch_q)
    grads = [None] * len(model.weights)
    back = cotan
    for idx in reversed(range(len(model.weights))):
        if idx < len(model.weights) - 1:
            back = back * elu_derivative(preacts[idx])
        grads[idx] = back.T @ inputs[idx]
        back = back @ model.weights[idx]
    return grads

def parameter_jacobian(model, q):
    """dN(q)/dTheta for one input, an (n_bar, n_params) matrix.

    Columns follow the ordering of MlpModel.parameters()."""
    q = np.asarray(q, dtype=float)
    _, inputs, preacts = _forward_cache(model, q[None, :])
    blocks = [None] * len(model.weights)
    back = np.eye(model.n_out)
    for idx in reversed(range(len(model.weights))):
        if idx < len(model.weights) - 1:
            back = back * elu_derivative(preacts[idx])
        blocks[idx] = (back[:, :, None] * inputs[idx][0][None, None, :]).reshape(
            model.n_out, -1)
        back = back @ model.weights[idx]
    return np.hstack(blocks)

def flatten(grads):
    """Concatenate a list of per-layer arrays into one vector."""
    return np.concatenate([np.ravel(g) for g in grads])


class AdamWConfig:
    """AdamW hyperparameters plus the learning-rate floor of the schedule."""

    # pylint: disable=too-few-public-methods

    def __init__(self, beta1=0.9, beta2=0.999, epsilon=1e-7, weight_decay=4e-3, lr_min=1e-6):
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.weight_decay = float(weight_decay)
        self.lr_min = float(lr_min)
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("optimizer.beta1/beta2: must be in [0, 1)")
        if self.epsilon <= 0 or self.weight_decay < 0 or self.lr_min < 0:
            raise ConfigError("optimizer: epsilon must be positive, "
                              "weight_decay and lr_min nonnegative")

    @classmethod
    def from_conf(cls, conf):
        """Build from the "optimizer" section of a configuration dict."""
        conf = conf or {}
        keys = ["beta1", "beta2", "epsilon", "weight_decay", "lr_min"]
        return cls(**{key: conf[key] for key in keys if key in conf})

    def to_dict(self):
        """Plain dict for manifests and weight files."""
        return {"beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon,
                "weight_decay": self.weight_decay, "lr_min": self.lr_min}


class OptimizerState:
    """First/second moment accumulators and the step counter."""

    # pylint: disable=too-few-public-methods

    def __init__(self, model, cfg=None, lr=1e-3):
        self.cfg = cfg or AdamWConfig()
        self.lr = float(lr)
        self.step = 0
        self.moment1 = [np.zeros_like(w) for w in model.weights]
        self.moment2 = [np.zeros_like(w) for w in model.weights]

    @property
    def weight_decay(self):
        """Decoupled weight decay coefficient."""
        return self.cfg.weight_decay


def adamw_step(state, model, gradient, lr=None):
    """One AdamW update.  Returns the updated model; state is advanced in place.

    With bias-corrected moments m_hat, v_hat each weight becomes
    w - lr (m_hat / (sqrt(v_hat) + eps) + weight_decay w)."""
    if len(gradient) != len(model.weights):
        raise ValueError("gradient has %d layers, model %d" % (
            len(gradient), len(model.weights)))
    cfg = state.cfg
    lr = state.lr if lr is None else float(lr)
    state.step += 1
    corr1 = 1.0 - cfg.beta1 ** state.step
    corr2 = 1.0 - cfg.beta2 ** state.step
    weights = []
    for idx, (weight, grad) in enumerate(zip(model.weights, gradient)):
        state.moment1[idx] = cfg.beta1 * state.moment1[idx] + (1 - cfg.beta1) * grad
        state.moment2[idx] = cfg.beta2 * state.moment2[idx] + (1 - cfg.beta2) * grad * grad
        m_hat = state.moment1[idx] / corr1
        v_hat = state.moment2[idx] / corr2
        weights.append(weight - lr * (
            m_hat / (np.sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * weight))
    return model.with_weights(weights)

def lr_at_epoch(cfg, epoch):
    """Half-cosine decay from cfg.lr0 at epoch 0 to cfg.lr_min at cfg.epochs."""
    if cfg.epochs <= 0:
        return cfg.lr0
    frac = min(max(epoch / cfg.epochs, 0.0), 1.0)
    return cfg.lr0 - (cfg.lr0 - cfg.lr_min) * (1.0 - math.cos(math.pi * frac)) / 2.0

def save_weights(model, path, optimizer=None):
    """Write the network as JSON: dims, row-major weights, activation, seed,
    and an optional optimizer config dict."""
    mkparent(path)
    data = {
        "layer_dims": model.layer_dims,
        "activation": model.activation,
        "seed": model.seed,
        "weights": [w.tolist() for w in model.weights],
        "optimizer": optimizer.to_dict() if hasattr(optimizer, "to_dict") else optimizer,
        }
    with open(path, "w") as f_out:
        json.dump(data, f_out)
        f_out.write("\n")

def load_weights(path):
    """Read a network written by save_weights."""
    with open(path) as f_in:
        try:
            data = json.load(f_in)
        except json.JSONDecodeError as exception:
            raise FormatError("malformed weights file %s: %s" % (path, exception))
    try:
        return MlpModel(
            data["layer_dims"], data["weights"], data.get("activation", "elu"),
            data.get("seed"))
    except (KeyError, ValueError) as exception:
        raise FormatError("bad weights file %s: %s" % (path, exception))
