"""Dense ReLU feed-forward training losses in abs-normal form.

relu(x) = (x + |x|)/2 exactly, so every hidden pre-activation is one
switching variable.  The specialized builder assembles the abs-normal
data of a per-sample loss directly from the layer structure; the same
loss is also exportable as a generic tape so the two construction paths
can cross-check each other.  Batch gradients use one a-priori slope
policy shared by all samples, and the batch entry direction through the
shared right-inverse certifies that every sample attains the prescribed
kink signs.
"""

from dataclasses import dataclass

import numpy as np

from .absnormal import DEFAULT_KINK_TOL, AbsNormalPoint, as_signature, signature
from .gradients import grad_xi, xi_from_policy
from .tape import Node, Tape

HEADS = ("identity", "softmax")
LOSSES = ("squared_error", "cross_entropy")
_PAIRS = {("identity", "squared_error"), ("softmax", "cross_entropy")}


class TrainingDivergedError(RuntimeError):
    def __init__(self, iteration, loss):
        super().__init__(f"training diverged at iteration {iteration}: "
                         f"loss {loss:.3e}")
        self.iteration = iteration
        self.loss = loss


@dataclass
class ReluNetSpec:
    """Architecture of a dense ReLU network with biases in every layer.

    layer_dims = (N_0, ..., N_{T+1}) with at least one hidden layer.
    init_weights/init_biases optionally carry parameter values (used as
    training start and written by checkpoints).
    """

    layer_dims: tuple
    head: str = "identity"
    loss: str = "squared_error"
    init_weights: list | None = None
    init_biases: list | None = None

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 3:
            raise ValueError("need at least one hidden layer")
        if any(d < 1 for d in self.layer_dims):
            raise ValueError("layer dimensions must be positive")
        if (self.head, self.loss) not in _PAIRS:
            raise ValueError(
                f"unsupported head/loss pair ({self.head}, {self.loss}); "
                f"supported: identity+squared_error, softmax+cross_entropy")
        if self.init_weights is not None:
            ws = [np.asarray(w, dtype=np.float64) for w in self.init_weights]
            bs = [np.asarray(b, dtype=np.float64) for b in self.init_biases or []]
            if len(ws) != self.T + 1 or len(bs) != self.T + 1:
                raise ValueError("need one weight matrix and one bias vector "
                                 "per layer")
            for t, (w, b) in enumerate(zip(ws, bs)):
                shape = (self.layer_dims[t + 1], self.layer_dims[t])
                if w.shape != shape or b.shape != (shape[0],):
                    raise ValueError(f"layer {t + 1}: expected weights {shape} "
                                     f"and biases ({shape[0]},)")
            self.init_weights = ws
            self.init_biases = bs

    @property
    def T(self):
        """Number of hidden layers."""
        return len(self.layer_dims) - 2

    @property
    def s(self):
        """Number of switching variables (hidden neurons)."""
        return sum(self.layer_dims[1:-1])

    @property
    def n_weights(self):
        return sum(self.layer_dims[t + 1] * self.layer_dims[t]
                   for t in range(self.T + 1))

    @property
    def n_params(self):
        return self.n_weights + sum(self.layer_dims[1:])

    def weight_offset(self, t):
        """Flat offset of W^{(t+1)} (0-based layer t)."""
        return sum(self.layer_dims[r + 1] * self.layer_dims[r]
                   for r in range(t))

    def bias_offset(self, t):
        """Flat offset of b^{(t+1)} (0-based layer t)."""
        return self.n_weights + sum(self.layer_dims[r + 1] for r in range(t))

    def unpack(self, params):
        """Split a flat parameter vector into (weights, biases) views."""
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ValueError(f"params must have length {self.n_params}")
        Ws, bs = [], []
        for t in range(self.T + 1):
            rows, cols = self.layer_dims[t + 1], self.layer_dims[t]
            off = self.weight_offset(t)
            Ws.append(params[off:off + rows * cols].reshape(rows, cols))
            off = self.bias_offset(t)
            bs.append(params[off:off + rows])
        return Ws, bs

    def pack(self, weights, biases):
        """Flatten weights (layer-major, row-major) then biases (layer-major)."""
        parts = [np.asarray(w, dtype=np.float64).ravel() for w in weights]
        parts += [np.asarray(b, dtype=np.float64).ravel() for b in biases]
        params = np.concatenate(parts)
        if params.shape != (self.n_params,):
            raise ValueError("weight/bias shapes do not match layer_dims")
        return params

    def initial_params(self, rng=None):
        if self.init_weights is not None:
            return self.pack(self.init_weights, self.init_biases)
        if rng is None:
            raise ValueError("spec carries no initial values; pass an rng")
        Ws, bs = [], []
        for t in range(self.T + 1):
            rows, cols = self.layer_dims[t + 1], self.layer_dims[t]
            scale = 1.0 / np.sqrt(cols)
            Ws.append(rng.uniform(-0.5, 0.5, (rows, cols)) * scale)
            bs.append(rng.uniform(-0.5, 0.5, rows) * scale)
        return self.pack(Ws, bs)

    def to_document(self, params=None):
        doc = {"layer_dims": list(self.layer_dims), "head": self.head,
               "loss": self.loss, "weights": None, "biases": None}
        if params is not None:
            Ws, bs = self.unpack(params)
            doc["weights"] = [w.tolist() for w in Ws]
            doc["biases"] = [b.tolist() for b in bs]
        elif self.init_weights is not None:
            doc["weights"] = [w.tolist() for w in self.init_weights]
            doc["biases"] = [b.tolist() for b in self.init_biases]
        return doc

    @classmethod
    def from_document(cls, doc):
        return cls(layer_dims=doc["layer_dims"],
                   head=doc.get("head", "identity"),
                   loss=doc.get("loss", "squared_error"),
                   init_weights=doc.get("weights"),
                   init_biases=doc.get("biases"))


@dataclass
class Dataset:
    inputs: np.ndarray      # (J, N)
    labels: np.ndarray      # (J, M)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.labels = np.atleast_2d(np.asarray(self.labels, dtype=np.float64))
        if len(self.inputs) != len(self.labels) or len(self.inputs) < 1:
            raise ValueError("need equally many inputs and labels, at least one")

    def __len__(self):
        return len(self.inputs)

    def to_document(self):
        return {"inputs": self.inputs.tolist(), "labels": self.labels.tolist()}

    @classmethod
    def from_document(cls, doc):
        return cls(inputs=doc["inputs"], labels=doc["labels"])


def bundled_1d_dataset():
    """Small 1-D training set, classes separated at zero, fit by a 1-1-1 net."""
    u = np.array([-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0])
    v = np.maximum(u, 0.0)
    return Dataset(inputs=u[:, None], labels=v[:, None])


def _forward(spec, Ws, bs, u):
    acts = [np.asarray(u, dtype=np.float64)]
    zs = []
    for t in range(spec.T):
        z = Ws[t] @ acts[-1] + bs[t]
        zs.append(z)
        acts.append(0.5 * (z + np.abs(z)))
    pre = Ws[spec.T] @ acts[-1] + bs[spec.T]
    return zs, acts, pre


def _head_loss(spec, pre, label):
    """Loss value and its gradient with respect to the output pre-activation."""
    if spec.head == "identity":
        diff = pre - label
        return 0.5 * float(diff @ diff), diff
    shift = pre - np.max(pre)
    e = np.exp(shift)
    total = e.sum()
    p = e / total
    mass = float(label.sum())
    value = mass * np.log(total) - float(label @ shift)
    return value, mass * p - label


def sample_loss(spec, params, u, v):
    Ws, bs = spec.unpack(params)
    _, _, pre = _forward(spec, Ws, bs, u)
    return _head_loss(spec, pre, np.asarray(v, dtype=np.float64))[0]


def batch_loss(spec, params, dataset, batch=None):
    batch = range(len(dataset)) if batch is None else batch
    idx = list(batch)
    total = sum(sample_loss(spec, params, dataset.inputs[j], dataset.labels[j])
                for j in idx)
    return total / len(idx)


def build_absnormal(spec, dataset, index, params, kink_tol=DEFAULT_KINK_TOL):
    """Abs-normal data of one per-sample loss over the parameter space."""
    return _build_point(spec, dataset.inputs[index], dataset.labels[index],
                        params, kink_tol)


def _build_point(spec, u, v, params, kink_tol):
    params = np.asarray(params, dtype=np.float64)
    Ws, bs = spec.unpack(params)
    zs, acts, pre = _forward(spec, Ws, bs, u)
    _, g = _head_loss(spec, pre, np.asarray(v, dtype=np.float64))

    n, s, T = spec.n_params, spec.s, spec.T
    z = np.concatenate(zs)

    a = np.zeros(n)
    off = spec.weight_offset(T)
    a[off:off + g.size * acts[T].size] = np.outer(g, acts[T]).ravel()
    off = spec.bias_offset(T)
    a[off:off + g.size] = g

    b = np.zeros(s)
    d = np.zeros(s)
    last = s - spec.layer_dims[T]
    b[last:] = 0.5 * (Ws[T].T @ g)
    d[last:] = 0.5 * (Ws[T].T @ g)

    Z = np.zeros((s, n))
    row = 0
    for t in range(T):
        rows, cols = spec.layer_dims[t + 1], spec.layer_dims[t]
        woff = spec.weight_offset(t)
        for i in range(rows):
            Z[row + i, woff + i * cols:woff + (i + 1) * cols] = acts[t]
        boff = spec.bias_offset(t)
        Z[row:row + rows, boff:boff + rows] = np.eye(rows)
        row += rows

    L = np.zeros((s, s))
    row = spec.layer_dims[1]
    col = 0
    for t in range(1, T):
        rows, cols = spec.layer_dims[t + 1], spec.layer_dims[t]
        L[row:row + rows, col:col + cols] = 0.5 * Ws[t]
        row += rows
        col += cols
    M = L.copy()

    return AbsNormalPoint._trusted(x=params, z=z, sigma=signature(z, kink_tol),
                                   a=a, b=b, d=d, Z=Z, L=L, M=M)


def shared_right_inverse(points, spec):
    """The bias-coordinate selector; a right inverse of Z for every sample.

    The switching rows read their own bias directly, so the bias columns
    of Z form an exact identity and one selector works batch-wide.
    """
    if not points:
        raise ValueError("empty batch")
    n, s = spec.n_params, spec.s
    zdag = np.zeros((n, s))
    zdag[spec.n_weights:spec.n_weights + s] = np.eye(s)
    eye = np.eye(s)
    for j, p in enumerate(points):
        product = p.Z @ zdag
        assert np.allclose(product, eye, atol=1e-12), \
            f"sample {j}: bias columns of Z are not the identity"
    return zdag


@dataclass
class BatchContext:
    """Per-sample abs-normal data plus one shared a-priori slope policy."""

    spec: ReluNetSpec
    params: np.ndarray
    indices: tuple
    points: list
    zeta: np.ndarray

    def __post_init__(self):
        if not self.points:
            raise ValueError("empty batch")
        self.params = np.asarray(self.params, dtype=np.float64)
        zeta = np.asarray(self.zeta, dtype=np.float64)
        if zeta.ndim == 0:
            zeta = np.full(self.spec.s, float(zeta))
        if zeta.ndim != 1 or zeta.shape != (self.spec.s,):
            raise ValueError(
                "zeta must be a single policy vector of length s, shared by "
                "all samples; per-sample policies are not supported")
        if np.any(np.abs(zeta) > 1.0):
            raise ValueError("zeta entries must lie in [-1, 1]")
        self.zeta = zeta
        self.indices = tuple(int(j) for j in self.indices)

    @classmethod
    def build(cls, spec, dataset, indices, params, zeta=0.0,
              kink_tol=DEFAULT_KINK_TOL):
        points = [build_absnormal(spec, dataset, j, params, kink_tol)
                  for j in indices]
        return cls(spec=spec, params=params, indices=tuple(indices),
                   points=points, zeta=zeta)


def batch_gradient(ctx):
    """Average of the per-sample slope-policy gradients.

    Each sample substitutes the shared policy at its own active kinks and
    its definite signs elsewhere.
    """
    total = np.zeros(ctx.spec.n_params)
    for p in ctx.points:
        total += grad_xi(p, xi_from_policy(p.sigma, ctx.zeta))
    return total / len(ctx.points)


def tau_direction(ctx, tau):
    """Parameter direction driving every sample's kinks to the signs in tau.

    The magnitude recursion (forward over switching order, well defined by
    triangularity) dominates the cross terms of every sample, so
    tau_k * (Dz d)_k >= 1 holds batch-wide; the certificate is asserted.
    """
    s = ctx.spec.s
    tau = as_signature(tau, s)
    if np.any(tau == 0):
        raise ValueError("tau must be definite (+-1)")
    zdag = shared_right_inverse(ctx.points, ctx.spec)

    sig_taus = [np.where(p.sigma == 0, tau, p.sigma).astype(np.float64)
                for p in ctx.points]
    v = np.zeros(s)
    sols = [np.zeros(s) for _ in ctx.points]
    for k in range(s):
        worst = 0.0
        for p, st, w in zip(ctx.points, sig_taus, sols):
            if k:
                coupling = np.abs(p.M[k, :k] + p.L[k, :k] * st[:k])
                worst = max(worst, float(coupling @ np.abs(w[:k])))
        v[k] = tau[k] * (1.0 + worst)
        for p, st, w in zip(ctx.points, sig_taus, sols):
            w[k] = v[k] + (p.M[k, :k] + p.L[k, :k] * st[:k]) @ w[:k]

    for j, w in enumerate(sols):
        assert np.all(tau * w >= 1.0 - 1e-9), \
            f"sample {j}: sign certificate violated"
    return zdag @ v


def forward_switching(spec, params, u):
    """Switching values of one sample at the given parameters."""
    Ws, bs = spec.unpack(params)
    zs, _, _ = _forward(spec, Ws, bs, u)
    return np.concatenate(zs)


@dataclass
class Trajectory:
    params: np.ndarray
    iterations: np.ndarray
    losses: np.ndarray
    grad_norms: np.ndarray

    @property
    def initial_loss(self):
        return float(self.losses[0])

    @property
    def final_loss(self):
        return float(self.losses[-1])

    def to_csv(self):
        lines = ["iteration,loss,grad_norm"]
        for it, lo, gn in zip(self.iterations, self.losses, self.grad_norms):
            lines.append(f"{int(it)},{lo:.17g},{gn:.17g}")
        return "\n".join(lines) + "\n"


def sgd_train(spec, dataset, step, iterations, batch_size=1, zeta=0.0,
              seed=0, init=None, kink_tol=DEFAULT_KINK_TOL,
              divergence_limit=1e12):
    """Plain stochastic subgradient descent on the batch-average loss.

    step: constant, per-iteration sequence, or callable of the iteration.
    Batches are consecutive chunks of a per-epoch shuffle; everything is
    deterministic for a fixed seed.  The full training loss is recorded
    once per iteration (before the update) and once after the last one.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if callable(step):
        step_at = step
    elif np.ndim(step) == 0:
        if step < 0:
            raise ValueError("step size must be non-negative")
        step_at = lambda it: float(step)
    else:
        steps = np.asarray(step, dtype=np.float64)
        if np.any(steps < 0) or len(steps) < iterations:
            raise ValueError("need a non-negative step per iteration")
        step_at = lambda it: float(steps[it])

    rng = np.random.default_rng(seed)
    params = np.array(spec.initial_params(rng) if init is None else init,
                      dtype=np.float64)
    J = len(dataset)
    order = rng.permutation(J)
    pos = 0
    its, losses, norms = [], [], []
    for it in range(iterations):
        if pos + batch_size > J:
            order = rng.permutation(J)
            pos = 0
        batch = order[pos:pos + batch_size]
        pos += batch_size
        ctx = BatchContext.build(spec, dataset, batch, params, zeta, kink_tol)
        g = batch_gradient(ctx)
        loss = batch_loss(spec, params, dataset)
        if loss > divergence_limit:
            raise TrainingDivergedError(it, loss)
        its.append(it)
        losses.append(loss)
        norms.append(float(np.linalg.norm(g)))
        params = params - step_at(it) * g
    its.append(iterations)
    losses.append(batch_loss(spec, params, dataset))
    norms.append(0.0)
    return Trajectory(params=params, iterations=np.asarray(its),
                      losses=np.asarray(losses), grad_norms=np.asarray(norms))


def sample_tape(spec, u, v):
    """The per-sample loss as a generic tape over the flat parameters.

    Cross-check path: extracting abs-normal data from this tape must
    reproduce the specialized builder exactly.
    """
    nodes = []

    def add(op_name, args=(), value=None):
        nodes.append(Node(op_name, tuple(args), value))
        return len(nodes) - 1

    pid = [add("input", value=k) for k in range(spec.n_params)]
    out = _emit_sample(spec, add, pid, u, v)
    return Tape(spec.n_params, nodes, out)


def batch_tape(spec, dataset, batch=None):
    """The batch-average loss as one tape (per-sample subgraphs concatenated)."""
    batch = range(len(dataset)) if batch is None else batch
    idx = list(batch)
    nodes = []

    def add(op_name, args=(), value=None):
        nodes.append(Node(op_name, tuple(args), value))
        return len(nodes) - 1

    pid = [add("input", value=k) for k in range(spec.n_params)]
    phis = [_emit_sample(spec, add, pid, dataset.inputs[j], dataset.labels[j])
            for j in idx]
    acc = phis[0]
    for p in phis[1:]:
        acc = add("add", (acc, p))
    scale = add("const", value=1.0 / len(idx))
    out = add("mul", (acc, scale))
    return Tape(spec.n_params, nodes, out)


def _emit_sample(spec, add, pid, u, v):
    act = [add("const", value=float(x)) for x in np.asarray(u).ravel()]
    for t in range(spec.T + 1):
        rows, cols = spec.layer_dims[t + 1], spec.layer_dims[t]
        woff, boff = spec.weight_offset(t), spec.bias_offset(t)
        pre = []
        for i in range(rows):
            acc = None
            for k in range(cols):
                term = add("mul", (pid[woff + i * cols + k], act[k]))
                acc = term if acc is None else add("add", (acc, term))
            pre.append(add("add", (acc, pid[boff + i])))
        if t < spec.T:
            half = add("const", value=0.5)
            nxt = []
            for zn in pre:
                an = add("abs", (zn,))
                total = add("add", (zn, an))    # read after the abs: z-use
                nxt.append(add("mul", (total, half)))
            act = nxt
        else:
            act = pre

    label = np.asarray(v, dtype=np.float64).ravel()
    if spec.head == "identity":
        acc = None
        for i, out_i in enumerate(act):
            diff = add("sub", (out_i, add("const", value=float(label[i]))))
            term = add("sqr", (diff,))
            acc = term if acc is None else add("add", (acc, term))
        return add("mul", (acc, add("const", value=0.5)))
    # softmax head with cross-entropy: mass*log(sum exp(o)) - sum v_i o_i
    exps = [add("exp", (o,)) for o in act]
    acc = exps[0]
    for e in exps[1:]:
        acc = add("add", (acc, e))
    lse = add("log", (acc,))
    mass = float(label.sum())
    left = add("mul", (lse, add("const", value=mass)))
    dot = None
    for i, o in enumerate(act):
        term = add("mul", (o, add("const", value=float(label[i]))))
        dot = term if dot is None else add("add", (dot, term))
    return add("sub", (left, dot))
