"""Straight-line scalar expression tapes with abs as an elementary op.

A Tape encodes a single real-valued function of n inputs built from the
fixed op set in _opcodes.  Every abs node introduces one switching
variable z_i (the value of its argument); tape order of the abs nodes
fixes the switching index, which makes the derivative matrices of the
switching system strictly lower triangular by construction.
"""

from dataclasses import dataclass
import json

import numpy as np

from . import _opcodes as op
from . import backend

NULLARY = (op.CONST, op.INPUT)


class TapeError(ValueError):
    """Structural problem in a tape document; carries the node index."""

    def __init__(self, message, node=None):
        super().__init__(message if node is None else f"node {node}: {message}")
        self.node = node


class EvalDomainError(ArithmeticError):
    """A guarded op (div, log) hit its domain boundary at a node."""

    def __init__(self, message, node):
        super().__init__(f"node {node}: {message}")
        self.node = node


@dataclass(frozen=True)
class Node:
    op: str
    args: tuple = ()
    value: float | None = None


class Tape:
    """Validated straight-line program; immutable after construction."""

    def __init__(self, n_inputs, nodes, output):
        self.n_inputs = int(n_inputs)
        self.nodes = tuple(nodes)
        self.output = int(output)
        self._validate()
        self._compile()

    def _validate(self):
        if self.n_inputs < 0:
            raise TapeError("n_inputs must be non-negative")
        if not self.nodes:
            raise TapeError("empty tape")
        if not 0 <= self.output < len(self.nodes):
            raise TapeError(f"output index {self.output} out of range")
        for k, node in enumerate(self.nodes):
            if node.op not in op.NAMES:
                raise TapeError(f"unknown op {node.op!r}", node=k)
            code = op.NAMES[node.op]
            if len(node.args) != op.ARITY[code]:
                raise TapeError(
                    f"op {node.op!r} takes {op.ARITY[code]} args, "
                    f"got {len(node.args)}", node=k)
            for a in node.args:
                if not isinstance(a, (int, np.integer)):
                    raise TapeError(f"non-integer arg reference {a!r}", node=k)
                if a < 0 or a >= k:
                    raise TapeError(
                        f"forward or out-of-range reference to node {a}", node=k)
            if code == op.INPUT:
                v = node.value
                if not isinstance(v, (int, np.integer)) or not 0 <= v < self.n_inputs:
                    raise TapeError(
                        f"input slot must be an integer in [0, {self.n_inputs}), "
                        f"got {v!r}", node=k)
            elif code == op.CONST:
                if not isinstance(node.value, (int, float, np.floating, np.integer)):
                    raise TapeError(f"const needs a numeric value, got "
                                    f"{node.value!r}", node=k)
            elif node.value is not None:
                raise TapeError(f"op {node.op!r} takes no value field", node=k)

    def _compile(self):
        n_nodes = len(self.nodes)
        ops = np.empty(n_nodes, dtype=np.int32)
        arg0 = np.full(n_nodes, -1, dtype=np.int32)
        arg1 = np.full(n_nodes, -1, dtype=np.int32)
        cval = np.zeros(n_nodes)
        iaux = np.full(n_nodes, -1, dtype=np.int32)
        abs_pos = []
        abs_arg = []
        for k, node in enumerate(self.nodes):
            code = op.NAMES[node.op]
            ops[k] = code
            if len(node.args) > 0:
                arg0[k] = node.args[0]
            if len(node.args) > 1:
                arg1[k] = node.args[1]
            if code == op.CONST:
                cval[k] = float(node.value)
            elif code == op.INPUT:
                iaux[k] = int(node.value)
            elif code == op.ABS:
                iaux[k] = len(abs_pos)
                abs_pos.append(k)
                abs_arg.append(node.args[0])

        # owner[m] = first switching variable whose abs argument is node m;
        # reads of m placed after that abs node count as z-uses.  Inputs and
        # constants stay leaf reads: their switching variable is a pure
        # alias, and the alias-free form is the canonical one.
        owner = np.full(n_nodes, -1, dtype=np.int32)
        owner_pos = np.full(n_nodes, -1, dtype=np.int32)
        for j, (q, p) in enumerate(zip(abs_pos, abs_arg)):
            if owner[p] < 0 and ops[p] not in NULLARY:
                owner[p] = j
                owner_pos[p] = q

        self._ops = ops
        self._arg0 = arg0
        self._arg1 = arg1
        self._cval = cval
        self._iaux = iaux
        self._abs_pos = np.asarray(abs_pos, dtype=np.int32)
        self._abs_arg = np.asarray(abs_arg, dtype=np.int32)
        self._owner = owner
        self._owner_pos = owner_pos

    @property
    def n_switch(self):
        """Number of switching variables (abs nodes)."""
        return len(self._abs_pos)

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return (f"Tape(n_inputs={self.n_inputs}, nodes={len(self.nodes)}, "
                f"switch={self.n_switch})")

    @classmethod
    def from_document(cls, doc):
        if not isinstance(doc, dict):
            raise TapeError("document must be a JSON object")
        for key in ("n_inputs", "nodes", "output"):
            if key not in doc:
                raise TapeError(f"missing field {key!r}")
        raw = doc["nodes"]
        if not isinstance(raw, list):
            raise TapeError("'nodes' must be a list")
        nodes = []
        for k, entry in enumerate(raw):
            if not isinstance(entry, dict) or "op" not in entry:
                raise TapeError("node entry must be an object with 'op'", node=k)
            nodes.append(Node(op=entry["op"],
                              args=tuple(entry.get("args", ())),
                              value=entry.get("value")))
        return cls(doc["n_inputs"], nodes, doc["output"])

    def to_document(self):
        nodes = []
        for node in self.nodes:
            entry = {"op": node.op}
            if node.args:
                entry["args"] = list(node.args)
            if node.value is not None:
                entry["value"] = node.value
            nodes.append(entry)
        return {"n_inputs": self.n_inputs, "nodes": nodes, "output": self.output}


def parse_tape(document):
    """Parse the JSON problem format into a validated Tape."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise TapeError(f"malformed JSON: {exc}") from None
    return Tape.from_document(doc)


@dataclass
class EvalTrace:
    """Per-call result of a forward sweep at one point."""

    values: np.ndarray      # value of every node
    z: np.ndarray           # abs arguments in switching order
    abs_values: np.ndarray  # abs outputs actually used (|z| or xi*z)
    output: int

    @property
    def phi(self):
        return float(self.values[self.output])


def forward_eval(tape, x, xi=None):
    """Evaluate the tape at x; the sweep is a closed-form back-substitution.

    Without xi the switching values satisfy z = c(x, |z|, z) exactly.  With
    xi (entries in [-1, 1], one per switching variable) every abs output is
    replaced by xi_i * z_i, solving the frozen-slope variant of the system.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tape.n_inputs,):
        raise ValueError(f"x must have shape ({tape.n_inputs},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    use_xi = xi is not None
    if use_xi:
        xi = np.asarray(xi, dtype=np.float64)
        if xi.shape != (tape.n_switch,):
            raise ValueError(f"xi must have shape ({tape.n_switch},)")
        if np.any(np.abs(xi) > 1.0):
            raise ValueError("xi entries must lie in [-1, 1]")
    else:
        xi = np.empty(0)

    values, z, err = backend.forward_sweep(
        tape._ops, tape._arg0, tape._arg1, tape._cval, tape._iaux,
        x, xi, use_xi, tape.n_switch)
    if err >= 0:
        name = tape.nodes[err].op
        raise EvalDomainError(f"domain violation in {name!r}", node=err)
    abs_values = values[tape._abs_pos] if tape.n_switch else np.empty(0)
    return EvalTrace(values=values, z=z, abs_values=abs_values,
                     output=tape.output)


@dataclass
class StructuralReport:
    n_switch: int
    depth: int                 # longest chain in the switching dependency DAG
    deps: list                 # per switching variable: sorted earlier indices

    def __str__(self):
        lines = [f"switching variables: {self.n_switch}, depth: {self.depth}"]
        for i, js in enumerate(self.deps):
            shown = ", ".join(f"z{j}" for j in js) if js else "-"
            lines.append(f"  z{i} depends on: {shown}")
        return "\n".join(lines)


def structural_check(tape):
    """Audit the switching dependency structure.

    Walks each abs argument's subgraph with the same cuts the adjoint
    sweep uses and reports which earlier switching variables it reads.
    Post-parse this can never surface a forward dependency; the assertion
    is a belt-and-braces guard.
    """
    deps = []
    for i in range(tape.n_switch):
        seen = set()
        found = set()
        p = int(tape._abs_arg[i])
        if 0 <= tape._owner[p] != i:
            found.add(int(tape._owner[p]))
        else:
            _collect_switch_reads(tape, p, seen, found)
        assert all(j < i for j in found), "forward switching dependency"
        deps.append(tuple(sorted(found)))

    depth = 0
    chain = [0] * tape.n_switch
    for i in range(tape.n_switch):
        chain[i] = 1 + max((chain[j] for j in deps[i]), default=0)
        depth = max(depth, chain[i])
    return StructuralReport(n_switch=tape.n_switch, depth=depth, deps=deps)


def _collect_switch_reads(tape, start, seen, found):
    stack = [start]
    seen.add(start)
    while stack:
        k = stack.pop()
        code = tape._ops[k]
        if code == op.ABS:
            found.add(int(tape._iaux[k]))
            continue
        if code in NULLARY:
            continue
        for m in (tape._arg0[k], tape._arg1[k]):
            if m < 0:
                continue
            m = int(m)
            j = tape._owner[m]
            if j >= 0 and k > tape._owner_pos[m]:
                found.add(int(j))
            elif m not in seen:
                seen.add(m)
                stack.append(m)
