import numpy as np
import pytest

from absgrad.absnormal import CapExceededError, definite_successors, extract
from absgrad.gradients import (GradientSet, PrecedenceError, beta_coefficients,
                               check_likq, check_rank_stability, grad_sigma,
                               grad_xi, hull_membership, limiting_gradients,
                               switching_jacobian, verify_essential_direction,
                               xi_from_policy)
from absgrad.oracle import fd_gradient
from absgrad.problems import (phimu_candidate, phimu_tape, random_abs_normal,
                              random_relunet, random_net_dataset, random_tape)
from absgrad.relunet import build_absnormal
from absgrad.tape import Node, Tape

from conftest import rel_err


def abs_sum_tape():
    """phi(x) = |x1| + |x2|, separable kinks."""
    return Tape(2, [Node("input", value=0), Node("input", value=1),
                    Node("abs", args=(0,)), Node("abs", args=(1,)),
                    Node("add", args=(2, 3))], 4)


class TestGradSigma:
    def test_phimu_closed_form(self):
        point = extract(phimu_tape(1.0), [0.0, 0.0])
        assert grad_sigma(point, [1, -1, 1]).tolist() == [2.0, -2.0]
        assert grad_sigma(point, [1, 1, 1]).tolist() == [0.0, 0.0]

    def test_all_phimu_signatures_match_formula(self):
        for mu in (1.0, 0.0, -1.0, 0.7):
            point = extract(phimu_tape(mu), [0.0, 0.0])
            for sig in definite_successors(point.sigma):
                assert np.array_equal(grad_sigma(point, sig),
                                      phimu_candidate(mu, sig))

    def test_smooth_point_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        tape, x = random_tape(rng, n_inputs=3, n_switch=3, n_active=0)
        point = extract(tape, x)
        grad = grad_sigma(point, point.sigma)
        assert rel_err(fd_gradient(tape, x), grad) < 1e-6

    def test_precedence_violation_rejected(self):
        point = extract(phimu_tape(1.0), [0.5, 0.25])   # sigma (1,-1,-1)
        with pytest.raises(PrecedenceError):
            grad_sigma(point, [-1, -1, -1])


class TestGradXi:
    def test_centered_slopes_cancel_on_phimu(self):
        for mu in (1.0, -1.0, 0.3):
            point = extract(phimu_tape(mu), [0.0, 0.0])
            assert grad_xi(point, [0.0, 0.0, 0.0]).tolist() == [0.0, 0.0]

    def test_definite_slopes_equal_signature_gradient(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            point = random_abs_normal(rng, n=3, s=5, n_active=2)
            sig = definite_successors(point.sigma)[0]
            assert np.array_equal(grad_xi(point, sig.astype(float)),
                                  grad_sigma(point, sig))

    def test_inconsistent_slope_at_nonactive_index_rejected(self):
        point = extract(phimu_tape(1.0), [0.5, 0.25])   # sigma (1,-1,-1)
        with pytest.raises(PrecedenceError):
            grad_xi(point, [1.0, -1.0, 1.0])

    def test_is_convex_combination_of_signature_gradients(self):
        # pure algebra: holds with or without the kink qualification
        rng = np.random.default_rng(9)
        for _ in range(50):
            s = int(rng.integers(2, 12))
            point = random_abs_normal(
                rng, n=int(rng.integers(2, 6)), s=s,
                n_active=int(rng.integers(1, min(s, 8) + 1)))
            xi = xi_from_policy(point.sigma, rng.uniform(-1.0, 1.0, s))
            combo = np.zeros(point.n)
            for sig, beta in beta_coefficients(point.sigma, xi).items():
                combo += beta * grad_sigma(point, np.array(sig))
            assert rel_err(combo, grad_xi(point, xi)) < 1e-10


class TestBetaCoefficients:
    def test_uniform_at_zero_policy(self):
        betas = beta_coefficients([0, 0, 0], [0.0, 0.0, 0.0])
        assert len(betas) == 8
        assert all(b == pytest.approx(1 / 8) for b in betas.values())

    def test_vertex_policy_is_degenerate(self):
        betas = beta_coefficients([0], [1.0])
        assert betas[(1,)] == 1.0
        assert betas[(-1,)] == 0.0

    def test_product_form(self):
        betas = beta_coefficients([0, 0], [0.5, -0.5])
        assert betas[(1, 1)] == pytest.approx(0.75 * 0.25)
        assert betas[(1, -1)] == pytest.approx(0.75 * 0.75)
        assert betas[(-1, 1)] == pytest.approx(0.25 * 0.25)
        assert betas[(-1, -1)] == pytest.approx(0.25 * 0.75)

    def test_weights_sum_to_one_and_reproduce_the_slopes(self):
        rng = np.random.default_rng(10)
        for _ in range(40):
            s = int(rng.integers(1, 9))
            sigma = rng.choice([-1, 0, 1], size=s)
            xi = xi_from_policy(sigma, rng.uniform(-1.0, 1.0, s))
            betas = beta_coefficients(sigma, xi)
            values = np.array(list(betas.values()))
            sigs = np.array(list(betas.keys()), dtype=np.float64)
            assert np.all(values >= 0)
            assert abs(values.sum() - 1.0) <= 1e-12
            assert np.max(np.abs(values @ sigs - xi)) <= 1e-12

    def test_cap_guard(self):
        with pytest.raises(CapExceededError):
            beta_coefficients([0, 0, 0], [0.0, 0.0, 0.0], cap=4)


class TestCheckLikq:
    def test_phimu_fails_with_rank_two(self):
        report = check_likq(extract(phimu_tape(1.0), [0.0, 0.0]))
        assert not report.holds
        assert report.rank == 2
        assert report.n_active == 3
        assert str(report) == "fails: rank 2 < 3"

    def test_abs_x_holds_at_kink(self, abs_x_tape):
        report = check_likq(extract(abs_x_tape, [0.0]))
        assert report.holds
        assert report.matrix.tolist() == [[1.0]]

    def test_relu_net_holds_for_any_weights(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            spec, params = random_relunet(rng)
            data = random_net_dataset(rng, spec, 1)
            point = build_absnormal(spec, data, 0, params)
            assert check_likq(point).holds

    def test_empty_active_set_holds_vacuously(self, abs_x_tape):
        report = check_likq(extract(abs_x_tape, [2.0]))
        assert report.holds and report.n_active == 0


class TestRankStability:
    def test_phimu_all_ranks_two(self):
        report = check_rank_stability(extract(phimu_tape(1.0), [0.0, 0.0]))
        assert len(report.ranks) == 27
        assert set(report.ranks.values()) == {2}
        assert not report.all_full and not report.likq_holds

    def test_abs_x_all_ranks_one(self, abs_x_tape):
        report = check_rank_stability(extract(abs_x_tape, [0.0]))
        assert set(report.ranks.values()) == {1}
        assert report.all_full

    def test_random_instances_with_likq_have_stable_full_rank(self):
        rng = np.random.default_rng(13)
        done = 0
        while done < 15:
            s = int(rng.integers(2, 7))
            point = random_abs_normal(rng, n=6, s=s,
                                      n_active=int(rng.integers(1, min(s, 4) + 1)))
            if not check_likq(point).holds:
                continue
            report = check_rank_stability(point)
            assert report.all_full
            assert len(report.ranks) == 3 ** len(point.alpha)
            done += 1

    def test_cap_guard(self):
        point = random_abs_normal(np.random.default_rng(0), n=6, s=6,
                                  n_active=4)
        with pytest.raises(CapExceededError):
            check_rank_stability(point, cap=10)


class TestLimitingGradients:
    def test_phimu_candidate_list(self):
        point = extract(phimu_tape(-1.0), [0.0, 0.0])
        gset = limiting_gradients(point)
        assert len(gset) == 8
        assert gset.likq == "fails"
        assert "spurious" in gset.label
        assert gset.find([1, 1, 1]).tolist() == [0.0, 2.0]
        assert gset.find([-1, -1, -1]).tolist() == [0.0, -2.0]
        assert gset.find([1, 1, -1]).tolist() == [0.0, 0.0]

    def test_abs_x_at_kink(self, abs_x_tape):
        gset = limiting_gradients(extract(abs_x_tape, [0.0]))
        assert sorted(v[0] for _, v in gset.gradients) == [-1.0, 1.0]
        assert gset.likq == "holds"
        assert gset.label == "bouligand"

    def test_smooth_point_is_a_singleton_matching_fd(self):
        rng = np.random.default_rng(14)
        tape, x = random_tape(rng, n_inputs=3, n_switch=3, n_active=0)
        gset = limiting_gradients(extract(tape, x))
        assert len(gset) == 1
        assert rel_err(fd_gradient(tape, x), gset.gradients[0][1]) < 1e-6

    def test_cap_guard(self):
        point = extract(phimu_tape(1.0), [0.0, 0.0])
        with pytest.raises(CapExceededError):
            limiting_gradients(point, cap=4)

    def test_csv_and_json_roundtrip(self):
        gset = limiting_gradients(extract(phimu_tape(-1.0), [0.0, 0.0]))
        again = GradientSet.from_json(gset.to_json())
        assert [s for s, _ in again.gradients] == [s for s, _ in gset.gradients]
        csv = gset.to_csv()
        assert csv.splitlines()[0] == "sigma_1,sigma_2,sigma_3,g_1,g_2"
        assert len(csv.splitlines()) == 9

    def test_duplicate_signatures_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            GradientSet(anchor=[0.0], gradients=[((1,), [1.0]), ((1,), [2.0])])


class TestSwitchingJacobian:
    def test_triangular_solve_matches_dense_inverse(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            point = random_abs_normal(rng, n=4, s=6, n_active=3)
            sig = definite_successors(point.sigma)[1]
            got = switching_jacobian(point, sig)
            dense = np.linalg.solve(
                np.eye(6) - point.L * sig.astype(float) - point.M, point.Z)
            assert np.allclose(got, dense, atol=1e-12)


class TestEssentialDirections:
    def test_separable_kinks(self):
        tape = abs_sum_tape()
        point = extract(tape, [0.0, 0.0])
        assert verify_essential_direction(point, tape, [1, -1], eps=1e-3)
        assert verify_essential_direction(point, tape, [-1, 1], eps=1e-3)

    def test_requires_the_kink_qualification(self):
        tape = phimu_tape(1.0)
        point = extract(tape, [0.0, 0.0])
        with pytest.raises(ValueError, match="qualification"):
            verify_essential_direction(point, tape, [1, 1, 1], eps=1e-3)

    def test_requires_definite_successor(self):
        tape = abs_sum_tape()
        point = extract(tape, [0.0, 0.0])
        with pytest.raises(PrecedenceError):
            verify_essential_direction(point, tape, [1, 0], eps=1e-3)

    def test_random_likq_tapes_attain_signs_for_small_eps(self):
        rng = np.random.default_rng(16)
        done = 0
        while done < 8:
            tape, x = random_tape(rng, n_inputs=4, n_switch=4,
                                  n_active=int(rng.integers(1, 4)))
            point = extract(tape, x)
            if not check_likq(point).holds:
                continue
            for sig in definite_successors(point.sigma):
                assert any(verify_essential_direction(point, tape, sig, eps)
                           for eps in (1e-2, 1e-3, 1e-4, 1e-5))
            done += 1


class TestHullMembership:
    def phimu_true_limiting(self, mu):
        point = extract(phimu_tape(mu), [0.0, 0.0])
        gset = limiting_gradients(point)
        spurious = {(1, 1, 1), (-1, -1, -1)}
        return np.array([v for s, v in gset.gradients if s not in spurious])

    def test_spurious_candidates_outside_for_negative_mu(self):
        pts = self.phimu_true_limiting(-1.0)
        for query in ([0.0, 2.0], [0.0, -2.0]):
            res = hull_membership(pts, query)
            assert not res.inside
            w, c = res.hyperplane
            assert np.max(pts @ w + c) <= 1e-9
            assert w @ np.asarray(query) + c > 1e-6

    def test_origin_inside_for_convex_case(self):
        pts = self.phimu_true_limiting(1.0)
        res = hull_membership(pts, [0.0, 0.0])
        assert res.inside
        assert np.allclose(res.coefficients @ pts, [0.0, 0.0], atol=1e-9)
        assert res.coefficients.sum() == pytest.approx(1.0)

    def test_member_certifies_with_unit_weight(self):
        pts = self.phimu_true_limiting(-1.0)
        res = hull_membership(pts, pts[2])
        assert res.inside
        assert res.coefficients[2] == 1.0
        assert res.coefficients.sum() == 1.0

    def test_accepts_gradient_set(self):
        gset = limiting_gradients(extract(phimu_tape(1.0), [0.0, 0.0]))
        assert hull_membership(gset, [0.0, 0.0]).inside

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            hull_membership(np.empty((0, 2)), [0.0, 0.0])

    def test_random_certificates_are_valid(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            m, n = int(rng.integers(1, 12)), int(rng.integers(1, 5))
            pts = rng.normal(0.0, 1.0, (m, n))
            query = rng.normal(0.0, 1.5, n)
            res = hull_membership(pts, query, tol=1e-9)
            if res.inside:
                lam = res.coefficients
                assert np.all(lam >= 0)
                assert lam.sum() == pytest.approx(1.0, abs=1e-9)
                assert np.allclose(lam @ pts, query, atol=1e-7)
            else:
                w, c = res.hyperplane
                assert np.max(pts @ w + c) <= 1e-8
                assert w @ query + c > 0
