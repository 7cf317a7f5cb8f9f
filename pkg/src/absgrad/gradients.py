"""Generalized gradients from abs-normal data.

Gradients of the smoothed selections, the kink qualification test and its
rank stability audit, enumeration of the limiting-gradient candidates,
directional sign attainment, and convex-hull membership with
certificates.  All solves with the switching matrix use the explicit
triangular recursion, mirroring an adjoint sweep.
"""

from dataclasses import dataclass
import itertools
import json

import numpy as np

from .absnormal import (CapExceededError, DEFAULT_CAP, as_signature,
                        definite_successors, precedes, signature)
from .tape import forward_eval

DEFAULT_RANK_TOL = 1e-9

CANDIDATE_LABEL = "candidate set, may contain spurious gradients"


class PrecedenceError(ValueError):
    """A signature or slope choice contradicts the anchor signature."""


def xi_from_policy(sigma_bar, zeta):
    """Slope vector for backward propagation: zeta at kinks, sign elsewhere.

    zeta may be a scalar or a per-switching-variable vector; entries must
    lie in [-1, 1].
    """
    sigma_bar = as_signature(sigma_bar)
    zeta = np.broadcast_to(np.asarray(zeta, dtype=np.float64),
                           sigma_bar.shape).copy()
    if np.any(np.abs(zeta) > 1.0):
        raise ValueError("policy entries must lie in [-1, 1]")
    xi = sigma_bar.astype(np.float64)
    xi[sigma_bar == 0] = zeta[sigma_bar == 0]
    return xi


def validate_xi(sigma_bar, xi):
    """Check a slope choice: |xi| <= 1 and xi = sigma at nonactive indices.

    Inconsistent slopes at indices with a definite sign are rejected, not
    clamped.
    """
    sigma_bar = as_signature(sigma_bar)
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != sigma_bar.shape:
        raise ValueError(f"xi must have shape {sigma_bar.shape}")
    if np.any(np.abs(xi) > 1.0):
        raise ValueError("xi entries must lie in [-1, 1]")
    fixed = sigma_bar != 0
    if not np.all(xi[fixed] == sigma_bar[fixed]):
        raise PrecedenceError("xi must equal sign(z) at nonactive indices")
    return xi


def _adjoint_recursion(L, M, coeffs, b, d):
    """Solve (I - M - L*diag(c))^T y = c*b + d columnwise for every c.

    coeffs has one column per slope vector; the strictly lower triangular
    structure makes this an exact back-substitution from the last
    switching variable to the first.
    """
    s, m = coeffs.shape
    Y = np.empty((s, m))
    for k in range(s - 1, -1, -1):
        acc = b[k] * coeffs[k] + d[k]
        if k + 1 < s:
            tail = Y[k + 1:]
            acc = acc + M[k + 1:, k] @ tail + (L[k + 1:, k] @ tail) * coeffs[k]
        Y[k] = acc
    return Y


def grad_sigma_batch(point, sigmas):
    """Gradients of the selection functions for several signatures at once.

    sigmas is an (m, s) array of signatures, each preceding point.sigma;
    returns the (m, n) array of gradients.
    """
    sigmas = np.atleast_2d(np.asarray(sigmas))
    fixed = point.sigma != 0
    if not np.all(sigmas[:, fixed] == point.sigma[fixed]):
        bad = np.flatnonzero(
            ~np.all(sigmas[:, fixed] == point.sigma[fixed], axis=1))[0]
        raise PrecedenceError(
            f"signature {tuple(int(v) for v in sigmas[bad])} does not "
            f"precede the anchor signature")
    if point.s == 0:
        return np.tile(point.a, (len(sigmas), 1))
    Y = _adjoint_recursion(point.L, point.M, sigmas.T.astype(np.float64),
                           point.b, point.d)
    return point.a[None, :] + Y.T @ point.Z


def grad_sigma(point, sigma):
    """Gradient of the selection with frozen signs sigma (sigma >= sigma_bar)."""
    sigma = as_signature(sigma, point.s)
    return grad_sigma_batch(point, sigma[None, :])[0]


def grad_xi(point, xi):
    """Backward-propagated gradient for a slope choice xi in [-1, 1]^s.

    xi must equal the anchor signs at nonactive indices; at active indices
    any value in [-1, 1] is admitted.
    """
    xi = validate_xi(point.sigma, xi)
    if point.s == 0:
        return point.a.copy()
    Y = _adjoint_recursion(point.L, point.M, xi[:, None], point.b, point.d)
    return point.a + Y[:, 0] @ point.Z


def beta_coefficients(sigma_bar, xi, cap=DEFAULT_CAP):
    """Product-form convex weights tying a slope choice to definite signatures.

    Returns {signature tuple: weight} over all definite successors of
    sigma_bar; the weights are non-negative, sum to one, and reproduce xi
    as the signature average.
    """
    sigma_bar = as_signature(sigma_bar)
    xi = validate_xi(sigma_bar, xi)
    alpha = np.flatnonzero(sigma_bar == 0)
    sigmas = definite_successors(sigma_bar, cap=cap)
    weights = np.prod((sigmas[:, alpha] * xi[alpha] + 1.0) / 2.0, axis=1)
    return {tuple(int(v) for v in sig): float(w)
            for sig, w in zip(sigmas, weights)}


def switching_jacobian(point, sigma=None):
    """Jacobian of the switching values for frozen signs sigma.

    Solves (I - L*diag(sigma) - M) U = Z by forward substitution; sigma
    defaults to the anchor signature.
    """
    sigma = point.sigma if sigma is None else as_signature(sigma, point.s)
    U = point.Z.copy()
    for k in range(point.s):
        if k:
            U[k] += (point.L[k, :k] * sigma[:k] + point.M[k, :k]) @ U[:k]
    return U


@dataclass
class LikqReport:
    holds: bool
    rank: int
    n_active: int
    singular_values: np.ndarray
    matrix: np.ndarray          # active rows of the switching Jacobian

    def __str__(self):
        if self.holds:
            return f"holds: rank {self.rank} = {self.n_active}"
        return f"fails: rank {self.rank} < {self.n_active}"


def check_likq(point, rank_tol=DEFAULT_RANK_TOL):
    """Test whether the active rows of the switching Jacobian have full rank.

    Rank is decided from singular values above rank_tol times the largest
    one.  An empty active set holds vacuously.
    """
    alpha = list(point.alpha)
    A = switching_jacobian(point)[alpha]
    if not alpha:
        return LikqReport(holds=True, rank=0, n_active=0,
                          singular_values=np.empty(0), matrix=A)
    sv = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(sv > rank_tol * sv[0])) if sv.size and sv[0] > 0 else 0
    return LikqReport(holds=rank == len(alpha), rank=rank,
                      n_active=len(alpha), singular_values=sv, matrix=A)


@dataclass
class RankStabilityReport:
    ranks: dict                 # signature tuple -> rank of the active rows
    n_active: int
    all_full: bool
    likq_holds: bool


def check_rank_stability(point, rank_tol=DEFAULT_RANK_TOL, cap=DEFAULT_CAP):
    """Rank of the active rows for every signature preceding the anchor.

    Enumerates all 3^|alpha| sign patterns (including zeros) on the active
    set.  Full rank for every pattern is equivalent to the kink
    qualification at the anchor; the equivalence is asserted.
    """
    alpha = list(point.alpha)
    if 3 ** len(alpha) > cap:
        raise CapExceededError(f"3^{len(alpha)} sign patterns exceed cap {cap}")
    likq = check_likq(point, rank_tol)
    ranks = {}
    for combo in itertools.product((-1, 0, 1), repeat=len(alpha)):
        sigma = point.sigma.copy()
        sigma[alpha] = combo
        A = switching_jacobian(point, sigma)[alpha]
        if not alpha:
            ranks[tuple()] = 0
            continue
        sv = np.linalg.svd(A, compute_uv=False)
        rank = int(np.sum(sv > rank_tol * sv[0])) if sv[0] > 0 else 0
        ranks[tuple(int(v) for v in sigma)] = rank
    all_full = all(r == len(alpha) for r in ranks.values())
    assert all_full == likq.holds, "rank stability contradicts the kink test"
    return RankStabilityReport(ranks=ranks, n_active=len(alpha),
                               all_full=all_full, likq_holds=likq.holds)


@dataclass
class GradientSet:
    """A finite set of (signature, gradient) pairs anchored at one point."""

    anchor: np.ndarray
    gradients: list             # [(signature tuple, gradient array), ...]
    likq: str = "unknown"       # holds | fails | unknown
    label: str = ""

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=np.float64)
        seen = set()
        clean = []
        for sig, vec in self.gradients:
            key = tuple(int(v) for v in sig)
            if key in seen:
                raise ValueError(f"duplicate signature {key}")
            seen.add(key)
            clean.append((key, np.asarray(vec, dtype=np.float64)))
        self.gradients = clean

    def __len__(self):
        return len(self.gradients)

    def vectors(self):
        return np.array([vec for _, vec in self.gradients])

    def signatures(self):
        return np.array([sig for sig, _ in self.gradients], dtype=np.int8)

    def find(self, sigma):
        key = tuple(int(v) for v in sigma)
        for sig, vec in self.gradients:
            if sig == key:
                return vec
        raise KeyError(key)

    def to_json(self):
        return json.dumps({
            "anchor": self.anchor.tolist(),
            "likq": self.likq,
            "label": self.label,
            "gradients": [{"sigma": list(sig), "gradient": vec.tolist()}
                          for sig, vec in self.gradients],
        })

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(anchor=doc["anchor"],
                   gradients=[(g["sigma"], g["gradient"])
                              for g in doc["gradients"]],
                   likq=doc.get("likq", "unknown"), label=doc.get("label", ""))

    def to_csv(self):
        """One row per gradient: signature columns then gradient columns."""
        s = len(self.gradients[0][0]) if self.gradients else 0
        n = len(self.anchor)
        header = [f"sigma_{i + 1}" for i in range(s)]
        header += [f"g_{k + 1}" for k in range(n)]
        lines = [",".join(header)]
        for sig, vec in self.gradients:
            cells = [str(v) for v in sig] + [f"{v:.17g}" for v in vec]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def limiting_gradients(point, cap=DEFAULT_CAP, rank_tol=DEFAULT_RANK_TOL):
    """Gradients of all definite successors of the anchor signature.

    Under the kink qualification this is exactly the limiting-gradient
    set; otherwise the result is only a candidate set and is labeled as
    such (it may contain vectors that no nearby smooth point produces).
    """
    sigmas = definite_successors(point.sigma, cap=cap)
    grads = grad_sigma_batch(point, sigmas)
    likq = check_likq(point, rank_tol)
    return GradientSet(
        anchor=point.x,
        gradients=[(sig, vec) for sig, vec in zip(sigmas, grads)],
        likq="holds" if likq.holds else "fails",
        label="bouligand" if likq.holds else CANDIDATE_LABEL)


def verify_essential_direction(point, tape, sigma, eps,
                               rank_tol=DEFAULT_RANK_TOL):
    """Check sign attainment along the constructed entry direction.

    Builds the direction that pushes every active switching value to the
    sign prescribed by sigma (least-norm solution through the active rows
    of the switching Jacobian) and evaluates whether sign(z) equals sigma
    at the probe point anchor + eps * direction.  True for all
    sufficiently small eps; callers sweep eps over a geometric grid.
    """
    sigma = as_signature(sigma, point.s)
    if not precedes(point.sigma, sigma) or np.any(sigma == 0):
        raise PrecedenceError("sigma must be a definite successor")
    likq = check_likq(point, rank_tol)
    if not likq.holds:
        raise ValueError(f"kink qualification not verified: {likq}")
    alpha = list(point.alpha)
    A = switching_jacobian(point, sigma)[alpha]
    direction = np.linalg.pinv(A, rcond=rank_tol) @ sigma[alpha]
    trace = forward_eval(tape, point.x + eps * direction)
    return bool(np.all(signature(trace.z, kink_tol=0.0) == sigma))


@dataclass
class HullResult:
    inside: bool
    coefficients: np.ndarray | None   # convex weights over the set when inside
    hyperplane: tuple | None          # (normal, offset) separating when outside
    gap: float                        # l1 infeasibility of the membership system

    def __bool__(self):
        return self.inside


def hull_membership(gradient_set, g, tol=1e-9):
    """Decide whether g lies in the convex hull of a gradient set.

    Solves the membership system with a dense phase-1 simplex.  Inside:
    the certificate is a vector of convex weights reproducing g.  Outside:
    the certificate is a hyperplane (w, c) with w.p + c <= 0 on every set
    member and w.g + c > 0.
    """
    if isinstance(gradient_set, GradientSet):
        points = gradient_set.vectors()
    else:
        points = np.atleast_2d(np.asarray(gradient_set, dtype=np.float64))
    g = np.asarray(g, dtype=np.float64)
    if points.size == 0:
        raise ValueError("empty gradient set")
    m, n = points.shape
    if g.shape != (n,):
        raise ValueError(f"query point must have length {n}")

    # exact vertex hit: certify with weight one on the first match
    exact = np.flatnonzero(np.all(points == g, axis=1))
    if exact.size:
        lam = np.zeros(m)
        lam[exact[0]] = 1.0
        return HullResult(inside=True, coefficients=lam, hyperplane=None,
                          gap=0.0)

    A = np.vstack([points.T, np.ones(m)])
    rhs = np.concatenate([g, [1.0]])
    obj, lam, dual = _phase1_simplex(A, rhs)
    if obj <= tol:
        lam = np.clip(lam, 0.0, None)
        total = lam.sum()
        if total > 0:
            lam /= total
        return HullResult(inside=True, coefficients=lam, hyperplane=None,
                          gap=float(obj))
    w, c = dual[:n], float(dual[n])
    return HullResult(inside=False, coefficients=None, hyperplane=(w, c),
                      gap=float(obj))


def _phase1_simplex(A, rhs, tol=1e-11):
    """min 1't  s.t.  A lam + D t = rhs, lam >= 0, t >= 0, D = diag(+-1).

    Dense tableau with Bland's rule (no cycling).  Returns the optimal
    objective, the structural solution lam, and the dual vector y with
    y'A_j <= 0 at an infeasible optimum.
    """
    r, m = A.shape
    flip = np.where(rhs < 0, -1.0, 1.0)
    tab = np.hstack([A * flip[:, None], np.eye(r)])
    b = rhs * flip
    cost = np.concatenate([np.zeros(m), np.ones(r)])
    basis = np.arange(m, m + r)

    for _ in range(200 * (m + r) + 200):
        y_b = cost[basis] @ tab
        reduced = cost - y_b
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            break
        enter = int(candidates[0])                     # Bland: smallest index
        col = tab[:, enter]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            break                                      # defensively; obj >= 0
        ratios = b[rows] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-15]
        leave = int(ties[np.argmin(basis[ties])])      # Bland tie-break
        piv = tab[leave, enter]
        tab[leave] /= piv
        b[leave] /= piv
        for i in range(r):
            if i != leave and tab[i, enter] != 0.0:
                f = tab[i, enter]
                tab[i] -= f * tab[leave]
                b[i] -= f * b[leave]
        basis[leave] = enter

    obj = float(cost[basis] @ b)
    lam = np.zeros(m)
    for i, bi in enumerate(basis):
        if bi < m:
            lam[bi] = b[i]
    # dual from the artificial columns: those hold B^{-1} (up to row flips)
    dual = (cost[basis] @ tab[:, m:]) * flip
    return obj, lam, dual
