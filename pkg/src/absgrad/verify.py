"""Randomized verification suites for the two structural identities.

convex_combination_suite: on raw abs-normal instances, the backward
gradient for any admissible slope vector equals the product-weighted
average of the definite-signature gradients, and the weights behave like
convex coefficients reproducing the slopes.

batch_decomposition_suite: on ReLU-net batches with shared slope policy,
the batch gradient decomposes over definite sign policies with
product-form weights, and the batch entry direction attains the
prescribed signs for every sample.
"""

from dataclasses import dataclass, field

import numpy as np

from .absnormal import definite_successors
from .gradients import (grad_sigma_batch, grad_xi, switching_jacobian,
                        xi_from_policy)
from .problems import random_abs_normal, random_net_batch
from .relunet import (BatchContext, batch_gradient, forward_switching,
                      tau_direction)

IDENTITY_TOL = 1e-10
COEFF_TOL = 1e-12
CERT_TOL = 1e-9


@dataclass
class SuiteReport:
    name: str
    passed: bool
    checks: list = field(default_factory=list)   # (label, passed, detail)

    def lines(self):
        out = []
        for label, ok, detail in self.checks:
            out.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        out.append(f"{'PASS' if self.passed else 'FAIL'}  suite {self.name}")
        return out


def convex_combination_suite(n_instances=200, seed=0, s_max=20, active_max=10,
                             identity_tol=IDENTITY_TOL, coeff_tol=COEFF_TOL):
    """Slope gradients as convex combinations of signature gradients."""
    rng = np.random.default_rng(seed)
    worst_identity = 0.0
    worst_sum = 0.0
    worst_moment = 0.0
    for _ in range(n_instances):
        s = int(rng.integers(2, s_max + 1))
        n_active = int(rng.integers(1, min(active_max, s) + 1))
        n = int(rng.integers(2, 7))
        point = random_abs_normal(rng, n=n, s=s, n_active=n_active)
        xi = xi_from_policy(point.sigma, rng.uniform(-1.0, 1.0, s))

        sigmas = definite_successors(point.sigma)
        alpha = list(point.alpha)
        weights = np.prod((sigmas[:, alpha] * xi[alpha] + 1.0) / 2.0, axis=1)
        grads = grad_sigma_batch(point, sigmas)

        g_xi = grad_xi(point, xi)
        err = np.linalg.norm(weights @ grads - g_xi)
        worst_identity = max(worst_identity,
                             err / (1.0 + np.linalg.norm(g_xi)))
        worst_sum = max(worst_sum, abs(weights.sum() - 1.0))
        moments = weights @ sigmas.astype(np.float64)
        worst_moment = max(worst_moment, float(np.max(np.abs(moments - xi))))
        if np.any(weights < 0):
            worst_sum = np.inf

    checks = [
        ("slope gradient equals weighted signature gradients",
         worst_identity <= identity_tol,
         f"max relative error {worst_identity:.3e} (tol {identity_tol:.1e}, "
         f"{n_instances} instances)"),
        ("weights are convex and sum to one",
         worst_sum <= coeff_tol,
         f"max |sum - 1| {worst_sum:.3e} (tol {coeff_tol:.1e})"),
        ("weights reproduce the slope vector",
         worst_moment <= coeff_tol,
         f"max componentwise error {worst_moment:.3e} (tol {coeff_tol:.1e})"),
    ]
    return SuiteReport(name="convex-combination",
                       passed=all(ok for _, ok, _ in checks), checks=checks)


def batch_decomposition_suite(n_instances=20, seed=0, batch_size=2, s_max=12,
                              identity_tol=IDENTITY_TOL, cert_tol=CERT_TOL,
                              eps=1e-4):
    """Batch gradients decompose over definite sign policies; signs attained."""
    rng = np.random.default_rng(seed)
    worst_identity = 0.0
    worst_cert = np.inf
    signs_ok = True
    kinks_ok = True
    for _ in range(n_instances):
        spec, params, data, batch = random_net_batch(rng, batch_size=batch_size,
                                                     s_max=s_max)
        zeta = rng.uniform(-1.0, 1.0, spec.s)
        ctx = BatchContext.build(spec, data, batch, params, zeta=zeta)
        kinks_ok &= all(np.any(p.sigma == 0) for p in ctx.points)

        taus = definite_successors(np.zeros(spec.s, dtype=np.int8))
        gamma = np.prod((taus * zeta + 1.0) / 2.0, axis=1)
        mean_grads = np.zeros((len(taus), spec.n_params))
        for p in ctx.points:
            merged = np.where(p.sigma[None, :] == 0, taus, p.sigma[None, :])
            mean_grads += grad_sigma_batch(p, merged)
        mean_grads /= len(ctx.points)

        g_batch = batch_gradient(ctx)
        err = np.linalg.norm(gamma @ mean_grads - g_batch)
        worst_identity = max(worst_identity,
                             err / (1.0 + np.linalg.norm(g_batch)))

        tau = taus[int(rng.integers(0, len(taus)))]
        d_tau = tau_direction(ctx, tau)
        for j, p in enumerate(ctx.points):
            sig_tau = np.where(p.sigma == 0, tau, p.sigma)
            rates = switching_jacobian(p, sig_tau) @ d_tau
            worst_cert = min(worst_cert, float(np.min(tau * rates)))
            z_probe = forward_switching(spec, params + eps * d_tau,
                                        data.inputs[batch[j]])
            signs_ok &= bool(np.all(np.sign(z_probe) == sig_tau))

    checks = [
        ("every sample carries an active kink", bool(kinks_ok),
         f"{n_instances} instances, batch size {batch_size}"),
        ("batch gradient equals weighted definite-policy average",
         worst_identity <= identity_tol,
         f"max relative error {worst_identity:.3e} (tol {identity_tol:.1e})"),
        ("entry direction rate certificate",
         worst_cert >= 1.0 - cert_tol,
         f"min rate {worst_cert:.12f} (lower bound 1 - {cert_tol:.1e})"),
        ("prescribed kink signs attained at the probe point", bool(signs_ok),
         f"step {eps:.1e}"),
    ]
    return SuiteReport(name="batch-decomposition",
                       passed=all(ok for _, ok, _ in checks), checks=checks)
