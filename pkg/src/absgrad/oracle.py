"""Brute-force verification oracles.

Central finite differences for smooth points, and a sampling
approximation of the limiting-gradient set: draw points in a small ball
around the anchor, keep the ones with a definite signature, evaluate the
selection gradient there, and merge the results by single-linkage
clustering.  Both paths are independent of the enumeration machinery they
are used to validate.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .absnormal import DEFAULT_KINK_TOL, extract, precedes, signature
from .gradients import GradientSet, grad_sigma
from .tape import forward_eval


class KinkCrossingError(RuntimeError):
    """A finite-difference stencil straddles a kink; shrink h or resample."""

    def __init__(self, coord):
        super().__init__(f"stencil crosses a kink along coordinate {coord}")
        self.coord = coord


class DegenerateSamplingError(RuntimeError):
    """No differentiable sample was found; the plan is degenerate."""


@dataclass
class SamplingPlan:
    radius: float = 1e-3
    count: int = 4096
    seed: int = 0
    kink_tol: float = DEFAULT_KINK_TOL
    cluster_tol: float | None = None    # default: 1e-3 * (1 + max gradient norm)
    at_anchor: bool = False

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if self.kink_tol < 0:
            raise ValueError("kink_tol must be non-negative")
        if self.cluster_tol is not None and self.cluster_tol <= 0:
            raise ValueError("cluster_tol must be positive")


def fd_gradient(tape, x, h=1e-5, kink_tol=DEFAULT_KINK_TOL):
    """Central-difference gradient at a differentiable point.

    Raises KinkCrossingError when a stencil endpoint sits on a kink or the
    signature changes across the stencil.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty(tape.n_inputs)
    for k in range(tape.n_inputs):
        step = np.zeros(tape.n_inputs)
        step[k] = h
        plus = forward_eval(tape, x + step)
        minus = forward_eval(tape, x - step)
        if (np.any(np.abs(plus.z) <= kink_tol)
                or np.any(np.abs(minus.z) <= kink_tol)
                or np.any(signature(plus.z, kink_tol)
                          != signature(minus.z, kink_tol))):
            raise KinkCrossingError(k)
        grad[k] = (plus.phi - minus.phi) / (2.0 * h)
    return grad


def _ball_samples(rng, center, radius, count):
    n = len(center)
    dirs = rng.standard_normal((count, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.random(count) ** (1.0 / n)
    return center[None, :] + dirs * radii[:, None]


def sample_bouligand(tape, x_bar, plan, samples_out=None):
    """Sampled approximation of the limiting-gradient set at x_bar.

    Uniform samples in the ball of radius plan.radius; samples with a
    definite signature contribute the gradient of their selection,
    evaluated at the sample point or — with plan.at_anchor — at x_bar
    itself.  Single-linkage clusters within cluster_tol become one entry,
    carrying the lexicographically smallest member signature.
    Deterministic for a fixed seed.  samples_out, when given a list,
    receives (x, sigma, gradient) per kept sample.
    """
    x_bar = np.asarray(x_bar, dtype=np.float64)
    rng = np.random.default_rng(plan.seed)
    xs = _ball_samples(rng, x_bar, plan.radius, plan.count)

    anchor_point = extract(tape, x_bar, plan.kink_tol) if plan.at_anchor else None
    anchor_cache = {}

    sigs = []
    grads = []
    for x in xs:
        trace = forward_eval(tape, x)
        if np.any(np.abs(trace.z) <= plan.kink_tol):
            continue
        sig = signature(trace.z, plan.kink_tol)
        if plan.at_anchor:
            if not precedes(anchor_point.sigma, sig):
                continue
            key = tuple(int(v) for v in sig)
            if key not in anchor_cache:
                anchor_cache[key] = grad_sigma(anchor_point, sig)
            g = anchor_cache[key]
        else:
            g = grad_sigma(extract(tape, x, plan.kink_tol), sig)
        sigs.append(sig)
        grads.append(g)
        if samples_out is not None:
            samples_out.append((x.copy(), sig, g))
    if not grads:
        raise DegenerateSamplingError(
            f"no differentiable sample among {plan.count} draws")

    grads = np.asarray(grads)
    ctol = plan.cluster_tol
    if ctol is None:
        ctol = 1e-3 * (1.0 + float(np.max(np.linalg.norm(grads, axis=1))))

    members = _single_linkage(grads, ctol)
    entries = []
    for idx in members:
        center = grads[idx].mean(axis=0)
        rep = min(tuple(int(v) for v in sigs[i]) for i in idx)
        entries.append((rep, center))
    return GradientSet(anchor=x_bar, gradients=entries, likq="unknown",
                       label="sampled")


def _single_linkage(points, tol):
    """Connected components of the tol-neighborhood graph.

    Returns member index lists ordered by first appearance, so the result
    is deterministic for a fixed sample order.
    """
    # collapse exact duplicates first; at-anchor sampling produces many
    uniq = {}
    for i, p in enumerate(points):
        uniq.setdefault(p.tobytes(), []).append(i)
    reps = [v[0] for v in uniq.values()]
    rep_points = points[reps]

    parent = list(range(len(reps)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    # union by minimum keeps every root at its component's smallest index,
    # so the result does not depend on the pair iteration order
    for i, j in cKDTree(rep_points).query_pairs(tol):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    groups = {}
    for i in range(len(reps)):
        groups.setdefault(find(i), []).append(i)
    clusters = []
    for root in sorted(groups):
        idx = []
        for i in groups[root]:
            idx.extend(uniq[rep_points[i].tobytes()])
        clusters.append(sorted(idx))
    clusters.sort(key=lambda idx: idx[0])
    return clusters
