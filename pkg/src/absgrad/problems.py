"""Built-in problems and seeded random instance generators.

The two-variable three-kink family phimu is the worked example shipped
with the CLI (mu scales the third, curved kink).  The random generators
produce tapes with a prescribed number of exact kinks at a known anchor,
raw abs-normal instances for algebra-only checks, and ReLU-net batch
instances with engineered active kinks.
"""

import numpy as np

from .absnormal import AbsNormalPoint
from .relunet import Dataset, ReluNetSpec
from .tape import Node, Tape


def phimu_document(mu):
    """Tape document for |x1| + |x2 - x1| + mu*|1 - cos(x1) - sin(x2)|."""
    return {
        "n_inputs": 2,
        "nodes": [
            {"op": "input", "value": 0},            # 0: x1
            {"op": "input", "value": 1},            # 1: x2
            {"op": "abs", "args": [0]},             # 2: |x1|
            {"op": "sub", "args": [1, 0]},          # 3: x2 - x1
            {"op": "abs", "args": [3]},             # 4: |x2 - x1|
            {"op": "const", "value": 1.0},          # 5
            {"op": "cos", "args": [0]},             # 6
            {"op": "sin", "args": [1]},             # 7
            {"op": "sub", "args": [5, 6]},          # 8: 1 - cos(x1)
            {"op": "sub", "args": [8, 7]},          # 9: 1 - cos(x1) - sin(x2)
            {"op": "abs", "args": [9]},             # 10
            {"op": "const", "value": float(mu)},    # 11
            {"op": "mul", "args": [11, 10]},        # 12
            {"op": "add", "args": [2, 4]},          # 13
            {"op": "add", "args": [13, 12]},        # 14: output
        ],
        "output": 14,
    }


def phimu_tape(mu):
    return Tape.from_document(phimu_document(mu))


def phimu_candidate(mu, sigma):
    """Closed-form selection gradient of phimu at the origin."""
    s1, s2, s3 = sigma
    return np.array([s1 - s2, s2 - mu * s3], dtype=np.float64)


class _Builder:
    """Incremental tape construction mirroring node values at one anchor."""

    def __init__(self, x):
        self.x = np.asarray(x, dtype=np.float64)
        self.nodes = []
        self.values = []

    def add(self, op_name, args=(), value=None):
        self.nodes.append(Node(op_name, tuple(args), value))
        v = None
        if op_name == "input":
            v = self.x[value]
        elif op_name == "const":
            v = float(value)
        else:
            ops = [self.values[a] for a in args]
            v = {
                "add": lambda: ops[0] + ops[1],
                "sub": lambda: ops[0] - ops[1],
                "mul": lambda: ops[0] * ops[1],
                "div": lambda: ops[0] / ops[1],
                "neg": lambda: -ops[0],
                "sin": lambda: np.sin(ops[0]),
                "cos": lambda: np.cos(ops[0]),
                "exp": lambda: np.exp(ops[0]),
                "log": lambda: np.log(ops[0]),
                "sqr": lambda: ops[0] * ops[0],
                "abs": lambda: abs(ops[0]),
            }[op_name]()
        self.values.append(float(v))
        return len(self.nodes) - 1

    def combine(self, terms):
        """Sum of coefficient*node terms as a const/mul/add chain."""
        acc = None
        for coeff, node in terms:
            c = self.add("const", value=float(coeff))
            term = self.add("mul", (c, node))
            acc = term if acc is None else self.add("add", (acc, term))
        return acc


def random_tape(rng, n_inputs=3, n_switch=3, n_active=0, nonlinear=True,
                z_reuse=True):
    """Seeded random tape plus an anchor point with exact kink structure.

    Exactly n_active switching values vanish at the anchor; the others
    keep a margin of at least 0.3.  Active kink arguments are built from
    rows of a random orthonormal matrix, so the active rows of the
    switching Jacobian are orthonormal and the kink qualification holds
    at the anchor by construction.  Returns (tape, anchor).
    """
    if n_active > min(n_switch, n_inputs):
        raise ValueError("n_active must fit both n_switch and n_inputs")
    x = rng.uniform(-1.0, 1.0, n_inputs)
    tb = _Builder(x)
    inputs = [tb.add("input", value=k) for k in range(n_inputs)]

    active = set(rng.choice(n_switch, size=n_active, replace=False).tolist())
    q_mat, _ = np.linalg.qr(rng.standard_normal((n_inputs, n_inputs)))
    q_rows = iter(q_mat[:n_active])

    pool = list(inputs)          # candidate operands for later expressions
    abs_nodes = []
    abs_args = []
    for j in range(n_switch):
        if j in active:
            row = next(q_rows)
            expr = tb.combine([(row[k], inputs[k]) for k in range(n_inputs)])
            arg = tb.add("sub", (expr, tb.add("const", value=tb.values[expr])))
        else:
            n_terms = int(rng.integers(1, 4))
            picks = rng.choice(len(pool), size=n_terms)
            terms = [(rng.uniform(-1.5, 1.5), pool[p]) for p in picks]
            expr = tb.combine(terms)
            if nonlinear and rng.random() < 0.5:
                wrap = rng.choice(["sin", "cos", "sqr"])
                expr = tb.add(str(wrap), (expr,))
            margin = float(rng.uniform(0.3, 1.0) * rng.choice([-1.0, 1.0]))
            shift = tb.add("const", value=tb.values[expr] - margin)
            arg = tb.add("sub", (expr, shift))
        an = tb.add("abs", (arg,))
        abs_nodes.append(an)
        abs_args.append(arg)
        pool.append(an)
        if z_reuse and rng.random() < 0.4:
            pool.append(arg)     # consumed later than the abs: a z-use

    terms = [(rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0]), an)
             for an in abs_nodes]
    for _ in range(int(rng.integers(1, 3))):
        node = pool[int(rng.integers(0, len(pool)))]
        if nonlinear and rng.random() < 0.5:
            node = tb.add(str(rng.choice(["sin", "sqr"])), (node,))
        terms.append((rng.uniform(-1.0, 1.0), node))
    out = tb.combine(terms)
    return Tape(n_inputs, tb.nodes, out), x


def random_abs_normal(rng, n=4, s=6, n_active=2, coupling=0.3):
    """Raw abs-normal instance with random data; kept well conditioned."""
    if n_active > s:
        raise ValueError("n_active must not exceed s")
    sigma = rng.choice([-1, 1], size=s).astype(np.int8)
    active = rng.choice(s, size=n_active, replace=False)
    sigma[active] = 0
    z = sigma * rng.uniform(0.2, 2.0, s)
    strict = np.tril(np.ones((s, s), dtype=bool), -1)
    L = np.where(strict, rng.normal(0.0, coupling, (s, s)), 0.0)
    M = np.where(strict, rng.normal(0.0, coupling, (s, s)), 0.0)
    return AbsNormalPoint(
        x=rng.standard_normal(n), z=z, sigma=sigma,
        a=rng.standard_normal(n), b=rng.standard_normal(s),
        d=rng.standard_normal(s), Z=rng.standard_normal((s, n)), L=L, M=M)


def random_relunet(rng, max_hidden_layers=3, max_width=8, scale=0.8):
    """Random architecture plus parameters; (spec, params)."""
    T = int(rng.integers(1, max_hidden_layers + 1))
    dims = [int(rng.integers(1, 5))]
    dims += [int(rng.integers(1, max_width + 1)) for _ in range(T)]
    dims.append(int(rng.integers(1, 4)))
    head, loss = ("identity", "squared_error") if rng.random() < 0.5 \
        else ("softmax", "cross_entropy")
    spec = ReluNetSpec(tuple(dims), head=head, loss=loss)
    params = rng.normal(0.0, scale, spec.n_params)
    return spec, params


def random_net_dataset(rng, spec, count):
    inputs = rng.uniform(-1.0, 1.0, (count, spec.layer_dims[0]))
    m = spec.layer_dims[-1]
    if spec.loss == "cross_entropy":
        labels = np.zeros((count, m))
        labels[np.arange(count), rng.integers(0, m, count)] = 1.0
    else:
        labels = rng.normal(0.0, 1.0, (count, m))
    return Dataset(inputs=inputs, labels=labels)


def random_net_batch(rng, batch_size=2, s_max=12):
    """Net batch instance with at least one exact kink per sample.

    Each sample gets its own first-layer neuron whose bias is shifted so
    the pre-activation vanishes exactly for that sample.  Requires the
    first hidden layer to be at least batch_size wide.
    Returns (spec, params, dataset, batch_indices).
    """
    while True:
        T = int(rng.integers(1, 3))
        n1 = int(rng.integers(batch_size, 7))
        dims = [int(rng.integers(1, 4)), n1]
        if T == 2:
            dims.append(int(rng.integers(1, 7)))
        dims.append(int(rng.integers(1, 4)))
        spec = ReluNetSpec(tuple(dims))
        if spec.s <= s_max:
            break
    params = rng.normal(0.0, 0.8, spec.n_params)
    data = random_net_dataset(rng, spec, batch_size)
    neurons = rng.choice(n1, size=batch_size, replace=False)
    Ws, bs = spec.unpack(params)
    for j, i in enumerate(neurons):
        bs[0][i] = -float(Ws[0][i] @ data.inputs[j])   # z1_i(sample j) = 0 exactly
    return spec, params, data, tuple(range(batch_size))
