"""Point-local abs-normal data extracted from a tape.

extract() runs one forward sweep plus s+1 adjoint sweeps and returns the
full first-order local model at a point: switching values z, signature
sigma, and the six derivative blocks (a, b, d) of the scalar output and
(Z, L, M) of the switching system, with the kink variables |z| and z
treated as independent intermediate inputs.
"""

from dataclasses import dataclass
import itertools
import json

import numpy as np

from . import backend
from .tape import forward_eval

DEFAULT_KINK_TOL = 1e-12
DEFAULT_CAP = 2 ** 20


class CapExceededError(ValueError):
    """An enumeration would exceed its combinatorial guard."""


def signature(z, kink_tol=DEFAULT_KINK_TOL):
    """Componentwise sign of z with |z_i| <= kink_tol classified active (0)."""
    z = np.asarray(z, dtype=np.float64)
    sig = np.sign(z).astype(np.int8)
    sig[np.abs(z) <= kink_tol] = 0
    return sig


def as_signature(sigma, length=None):
    sig = np.asarray(sigma)
    if sig.ndim != 1 or (length is not None and sig.shape != (length,)):
        raise ValueError(f"signature must be a vector of length {length}")
    if sig.dtype != np.int8:
        cast = sig.astype(np.int8)
        if np.issubdtype(sig.dtype, np.floating) and not np.array_equal(cast, sig):
            raise ValueError("signature entries must be -1, 0 or 1")
        sig = cast
    if sig.size and np.abs(sig).max() > 1:
        raise ValueError("signature entries must be -1, 0 or 1")
    return sig


def precedes(sigma_bar, sigma):
    """True iff sigma agrees with sigma_bar wherever sigma_bar is nonzero."""
    sigma_bar = as_signature(sigma_bar)
    sigma = as_signature(sigma, len(sigma_bar))
    fixed = sigma_bar != 0
    return bool(np.all(sigma[fixed] == sigma_bar[fixed]))


def active_indices(sigma_bar):
    return tuple(int(i) for i in np.flatnonzero(as_signature(sigma_bar) == 0))


def definite_successors(sigma_bar, cap=DEFAULT_CAP):
    """All definite signatures preceding from sigma_bar, as an (m, s) array.

    Rows are ordered lexicographically over the active positions with -1
    before +1.  Raises CapExceededError when 2^|alpha| > cap; callers are
    expected to switch to the sampling oracle in that case.
    """
    sigma_bar = as_signature(sigma_bar)
    alpha = np.flatnonzero(sigma_bar == 0)
    count = 2 ** len(alpha)
    if count > cap:
        raise CapExceededError(
            f"2^{len(alpha)} definite signatures exceed cap {cap}")
    out = np.tile(sigma_bar, (count, 1))
    for row, combo in enumerate(itertools.product((-1, 1), repeat=len(alpha))):
        out[row, alpha] = combo
    return out


@dataclass
class AbsNormalPoint:
    """First-order local model of an abs-smooth function at one point.

    Vectors a, b, d are the output gradients with respect to the inputs,
    the |z| block and the z block; matrices Z, L, M are the corresponding
    derivatives of the switching system (L and M strictly lower
    triangular).
    """

    x: np.ndarray
    z: np.ndarray
    sigma: np.ndarray
    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    Z: np.ndarray
    L: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.z = np.asarray(self.z, dtype=np.float64)
        self.sigma = as_signature(self.sigma, len(self.z))
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.d = np.asarray(self.d, dtype=np.float64)
        self.Z = np.atleast_2d(np.asarray(self.Z, dtype=np.float64))
        self.L = np.atleast_2d(np.asarray(self.L, dtype=np.float64))
        self.M = np.atleast_2d(np.asarray(self.M, dtype=np.float64))
        n, s = len(self.x), len(self.z)
        if self.a.shape != (n,):
            raise ValueError("a must have length n")
        if self.b.shape != (s,) or self.d.shape != (s,):
            raise ValueError("b and d must have length s")
        if self.Z.shape != (s, n) and not (s == 0 and self.Z.size == 0):
            raise ValueError(f"Z must be {s}x{n}")
        for name, mat in (("L", self.L), ("M", self.M)):
            if mat.shape != (s, s) and not (s == 0 and mat.size == 0):
                raise ValueError(f"{name} must be {s}x{s}")
            if s and np.count_nonzero(np.triu(mat)) != 0:
                raise ValueError(f"{name} must be strictly lower triangular")
        bad = (self.sigma != 0) & (np.sign(self.z) != self.sigma)
        if np.any(bad):
            raise ValueError("sigma inconsistent with z at nonactive indices")

    @property
    def n(self):
        return len(self.x)

    @property
    def s(self):
        return len(self.z)

    @property
    def alpha(self):
        """Sorted active index set {i : sigma_i = 0}."""
        return active_indices(self.sigma)

    def to_json(self):
        return json.dumps({
            "x": self.x.tolist(),
            "z": self.z.tolist(),
            "sigma": self.sigma.tolist(),
            "alpha": list(self.alpha),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "d": self.d.tolist(),
            "Z": self.Z.tolist(),
            "L": self.L.tolist(),
            "M": self.M.tolist(),
        })

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(x=doc["x"], z=doc["z"], sigma=doc["sigma"], a=doc["a"],
                   b=doc["b"], d=doc["d"], Z=doc["Z"], L=doc["L"], M=doc["M"])

    @classmethod
    def _trusted(cls, x, z, sigma, a, b, d, Z, L, M):
        # construction sites that guarantee the invariants (extraction, the
        # net builder) skip __post_init__; everything is already float64
        point = object.__new__(cls)
        point.x, point.z, point.sigma = x, z, sigma
        point.a, point.b, point.d = a, b, d
        point.Z, point.L, point.M = Z, L, M
        return point


def extract(tape, x, kink_tol=DEFAULT_KINK_TOL):
    """Extract the abs-normal data of a tape at x.

    One forward sweep fixes the point; one adjoint sweep per switching row
    plus one for the output produce exact derivatives.  The abs output is
    the |z|-use and reads of the abs argument placed after the abs node
    are the z-use, except that input and constant arguments stay leaf
    reads (their switching variable is a pure alias).  A switching row
    whose abs argument is shared with an earlier abs node collapses to an
    exact unit z-dependency.
    """
    if kink_tol < 0:
        raise ValueError("kink_tol must be non-negative")
    trace = forward_eval(tape, x)
    x = np.asarray(x, dtype=np.float64)
    s, n = tape.n_switch, tape.n_inputs

    a, b, d = backend.reverse_sweep(
        tape._ops, tape._arg0, tape._arg1, tape._iaux, tape._owner,
        tape._owner_pos, trace.values, tape.output, n, s)

    Z = np.zeros((s, n))
    L = np.zeros((s, s))
    M = np.zeros((s, s))
    for i in range(s):
        p = int(tape._abs_arg[i])
        if 0 <= tape._owner[p] != i:
            M[i, tape._owner[p]] = 1.0
            continue
        Z[i], L[i], M[i] = backend.reverse_sweep(
            tape._ops, tape._arg0, tape._arg1, tape._iaux, tape._owner,
            tape._owner_pos, trace.values, p, n, s)

    if s:  # the sweep cuts guarantee this; belt-and-braces audit
        assert not np.triu(L).any() and not np.triu(M).any()

    return AbsNormalPoint._trusted(x=x, z=trace.z,
                                   sigma=signature(trace.z, kink_tol),
                                   a=a, b=b, d=d, Z=Z, L=L, M=M)
