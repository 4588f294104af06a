"""Two-layer graph convolutional classifier trained by hand-written backprop.

Forward pass: probs = softmax(A_hat ReLU(A_hat X W1) W2) with the self-loop
normalization.  Training minimizes mean cross-entropy over the labeled nodes
plus an L2 penalty on the first layer, full batch, with Adam.  Dropout uses
inverted scaling on the input of each layer, training mode only.

Feature matrices that are mostly zeros (bag-of-words style) are pushed through
CSR products instead of dense ones; zero entries contribute exact zeros either
way, and dropout only has to mask stored entries since dropping a zero is a
no-op.  The route is a pure function of the matrix, so runs stay reproducible.
"""

import json
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import FeatureMatrix, _frozen, spmm

ADAM_B1 = 0.9
ADAM_B2 = 0.999
ADAM_EPS = 1e-8
_SPARSE_CUTOFF = 0.25  # store as CSR below this density


@dataclass
class GcnModel:
    """Weights plus Adam state; mutated in place by train_step (single owner)."""

    w1: np.ndarray
    w2: np.ndarray
    dropout_p: float
    lam: float
    reg_both: bool
    seed: int
    rng: np.random.Generator
    m1: np.ndarray
    v1: np.ndarray
    m2: np.ndarray
    v2: np.ndarray
    t: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.w1).all() and np.isfinite(self.w2).all()):
            raise ValueError("non-finite model weights")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.m1.shape != self.w1.shape or self.m2.shape != self.w2.shape:
            raise ValueError("adam moment shapes must match weights")

    @classmethod
    def init(cls, d, k, h=16, dropout_p=0.5, lam=5e-4, seed=0, reg_both=False):
        """Glorot-uniform weights; a fresh generator drives init and dropout."""
        rng = np.random.default_rng(seed)
        lim1 = np.sqrt(6.0 / (d + h))
        lim2 = np.sqrt(6.0 / (h + k))
        w1 = rng.uniform(-lim1, lim1, size=(d, h))
        w2 = rng.uniform(-lim2, lim2, size=(h, k))
        return cls(w1, w2, dropout_p, lam, reg_both, seed, rng,
                   np.zeros_like(w1), np.zeros_like(w1),
                   np.zeros_like(w2), np.zeros_like(w2))

    @property
    def h(self):
        return self.w1.shape[1]


@dataclass(frozen=True)
class Posterior:
    """Output of one forward pass."""

    probs: np.ndarray   # n x k, rows on the simplex
    logits: np.ndarray  # n x k pre-softmax
    hidden: np.ndarray  # n x h post-ReLU layer-1 activations (pre-dropout)

    def __post_init__(self):
        for a in (self.probs, self.logits, self.hidden):
            _frozen(a)
        if np.abs(self.probs.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("posterior rows must sum to 1")


_FEAT_CACHE = {}


def _prep_features(x):
    """Dense array or CSR form, decided once per underlying array."""
    arr = x.data if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)
    hit = _FEAT_CACHE.get(id(arr))
    if hit is not None and hit[0]() is arr:
        return hit[1]
    if len(_FEAT_CACHE) > 8:
        for key in [k for k, v in _FEAT_CACHE.items() if v[0]() is None]:
            del _FEAT_CACHE[key]
    density = np.count_nonzero(arr) / max(arr.size, 1)
    prepped = sp.csr_matrix(arr) if density < _SPARSE_CUTOFF else arr
    _FEAT_CACHE[id(arr)] = (weakref.ref(arr), prepped)
    return prepped


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z):
    s = z - z.max(axis=1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def _pass(model, adj, xs, train_mode):
    """Shared forward plumbing; returns intermediates needed by backprop."""
    p = model.dropout_p
    if train_mode and p > 0.0:
        if sp.issparse(xs):
            x_in = xs.copy()
            keep = (model.rng.random(x_in.data.shape) >= p) / (1.0 - p)
            x_in.data = x_in.data * keep
        else:
            x_in = xs * ((model.rng.random(xs.shape) >= p) / (1.0 - p))
    else:
        x_in = xs
    z1 = spmm(adj, x_in @ model.w1)
    h1 = np.maximum(z1, 0.0)
    if train_mode and p > 0.0:
        mask2 = (model.rng.random(h1.shape) >= p) / (1.0 - p)
        h_in = h1 * mask2
    else:
        mask2 = None
        h_in = h1
    with np.errstate(over="ignore"):  # overflow surfaces as the isfinite raise
        logits = spmm(adj, h_in @ model.w2)
    if not np.isfinite(logits).all():
        raise FloatingPointError("non-finite activations; training diverged")
    return x_in, z1, h1, mask2, h_in, logits


def forward(model, adj, x, train_mode=False) -> Posterior:
    """Full forward pass. Inference mode is deterministic and read-only."""
    xs = _prep_features(x)
    _, _, h1, _, _, logits = _pass(model, adj, xs, train_mode)
    return Posterior(_softmax(logits), logits, h1)


def loss(post: Posterior, state, model: GcnModel):
    """Mean negative log-likelihood over labeled nodes plus the L2 penalty."""
    if len(state.v_l) == 0:
        raise ValueError("loss needs at least one labeled node")
    logp = _log_softmax(post.logits)
    nll = -logp[state.v_l, state.labels[state.v_l]].mean()
    reg = model.lam * (model.w1 ** 2).sum()
    if model.reg_both:
        reg += model.lam * (model.w2 ** 2).sum()
    return float(nll + reg)


def _gradients(model, adj, x, state):
    """Loss and exact backprop gradients on one dropout draw.

    Returns (value, dw1, dw2). Shared by train_step and the gradient tests;
    with dropout_p = 0 the value is deterministic and differentiable, which is
    what finite-difference checking needs.
    """
    v_l = state.v_l
    if len(v_l) == 0:
        raise ValueError("cannot train with an empty labeled set")
    xs = _prep_features(x)
    x_in, z1, h1, mask2, h_in, logits = _pass(model, adj, xs, True)

    n_l = len(v_l)
    logp = _log_softmax(logits)
    value = -logp[v_l, state.labels[v_l]].mean() + model.lam * (model.w1 ** 2).sum()
    if model.reg_both:
        value += model.lam * (model.w2 ** 2).sum()
    if not np.isfinite(value):
        raise FloatingPointError("training loss diverged")

    probs = _softmax(logits)
    dlogits = np.zeros_like(logits)
    dlogits[v_l] = probs[v_l]
    dlogits[v_l, state.labels[v_l]] -= 1.0
    dlogits[v_l] /= n_l

    g2 = spmm(adj, dlogits)         # adjoint of the output aggregation (symmetric)
    dw2 = h_in.T @ g2
    if model.reg_both:
        dw2 += 2.0 * model.lam * model.w2
    dh = g2 @ model.w2.T
    if mask2 is not None:
        dh = dh * mask2
    dz1 = dh * (z1 > 0.0)
    g1 = spmm(adj, dz1)
    dw1 = x_in.T @ g1 + 2.0 * model.lam * model.w1
    return float(value), dw1, dw2


def train_step(model, adj, x, state, lr=0.01):
    """One full-batch Adam step; the model mutates in place, loss is returned."""
    value, dw1, dw2 = _gradients(model, adj, x, state)

    model.t += 1
    for w, g, m, v in ((model.w1, dw1, model.m1, model.v1),
                       (model.w2, dw2, model.m2, model.v2)):
        m *= ADAM_B1
        m += (1.0 - ADAM_B1) * g
        v *= ADAM_B2
        v += (1.0 - ADAM_B2) * g * g
        mhat = m / (1.0 - ADAM_B1 ** model.t)
        vhat = v / (1.0 - ADAM_B2 ** model.t)
        w -= lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
    return value


# ---------------------------------------------------------------------------
# metrics


def f1_scores(truth, pred, k):
    """(macro_f1, micro_f1) over k classes.

    One-vs-rest per class; a class absent from both truth and prediction
    counts as F1 = 0 in the macro average.  Micro pools tp/fp/fn globally.
    """
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    conf = np.bincount(truth * k + pred, minlength=k * k).reshape(k, k)
    tp = np.diag(conf).astype(np.float64)
    fp = conf.sum(axis=0) - tp
    fn = conf.sum(axis=1) - tp
    denom = 2.0 * tp + fp + fn
    f1 = np.divide(2.0 * tp, denom, out=np.zeros(k), where=denom > 0)
    macro = float(f1.mean())
    pooled = 2.0 * tp.sum() + fp.sum() + fn.sum()
    micro = float(2.0 * tp.sum() / pooled) if pooled > 0 else 0.0
    return macro, micro


def evaluate(post: Posterior, truth, mask):
    """Macro/micro F1 of argmax predictions on the masked nodes.

    `truth` is the full ground-truth label vector; it lives with the
    experiment oracle, not in LabelState, so leak checks stay possible.
    """
    idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
    if len(idx) == 0:
        raise ValueError("empty evaluation mask")
    pred = post.probs[idx].argmax(axis=1)
    return f1_scores(np.asarray(truth)[idx], pred, post.probs.shape[1])


# ---------------------------------------------------------------------------
# checkpointing (debug aid; format documented, not stability-guaranteed)


def save_checkpoint(model, path):
    """Weights, Adam state, and a hyperparameter header in one npz file."""
    header = json.dumps({
        "dropout_p": model.dropout_p, "lam": model.lam,
        "reg_both": model.reg_both, "seed": model.seed, "t": model.t,
    })
    np.savez(path, w1=model.w1, w2=model.w2, m1=model.m1, v1=model.v1,
             m2=model.m2, v2=model.v2, header=np.array(header))


def load_checkpoint(path):
    """Rebuild a model from save_checkpoint output.

    The dropout stream restarts from the stored seed; resumed training is
    valid but not bitwise-continuous with the original run.
    """
    with np.load(path) as z:
        header = json.loads(str(z["header"]))
        model = GcnModel(
            z["w1"].copy(), z["w2"].copy(), header["dropout_p"], header["lam"],
            header["reg_both"], header["seed"],
            np.random.default_rng(header["seed"]),
            z["m1"].copy(), z["v1"].copy(), z["m2"].copy(), z["v2"].copy(),
            header["t"],
        )
    return model
