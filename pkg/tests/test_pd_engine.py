import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import condat_vu, grid_max_theta, soft, theta_formula
from rpd.activation import ActivationSchedule
from rpd.exceptions import ClosureError, ConditionError, InapplicableError
from rpd.linalg import BlockOperatorMatrix, BlockVector, DiagonalMetric
from rpd.operators import MonotoneOp, ProxFn, SmoothFn
from rpd.pd_engine import (PDProblem, PDState, alpha_hat, check_alg1, check_alg2,
                           effective_constants, run_pd, step_alg1, step_alg1_sym, step_alg2,
                           theta_alpha)

STEPS = {"alg1": step_alg1, "alg1_sym": step_alg1_sym, "alg2": step_alg2}
CLOSURE = {"alg1": "primal_follows_dual", "alg1_sym": "dual_follows_primal",
           "alg2": "dual_follows_primal"}


def scalar_problem(w=1.0, u=0.5, l=1.0, f=None, g=None, h=None, lconj=None):
    L = BlockOperatorMatrix({(0, 0): [[l]]}, [1], [1])
    return PDProblem.convex(L, DiagonalMetric.scalar(w, [1]), DiagonalMetric.scalar(u, [1]),
                            [f or ProxFn.zero(1)], [g or ProxFn.zero(1)],
                            None if h is None else [h], None if lconj is None else [lconj])


def two_by_two(rng, f_kind="l1", scale=0.05):
    """p = q = 2 with supports L_0* = {0}, L_1* = {0, 1}."""
    L = BlockOperatorMatrix({(0, 0): rng.standard_normal((2, 2)),
                             (0, 1): rng.standard_normal((2, 3)),
                             (1, 1): rng.standard_normal((1, 3))}, [2, 1], [2, 3])
    f = ([ProxFn.l1(2, 0.1), ProxFn.l1(3, 0.1)] if f_kind == "l1"
         else [ProxFn.zero(2), ProxFn.zero(3)])
    g = [ProxFn.sq_distance(rng.standard_normal(2)), ProxFn.l1(1, 0.5)]
    h = [SmoothFn.quadratic(rng.standard_normal((3, 2))), SmoothFn.sq_norm(3, 1.0)]
    W = DiagonalMetric((np.full(2, scale), np.full(3, scale)))
    U = DiagonalMetric((np.full(2, scale), np.full(1, scale)))
    return PDProblem.convex(L, W, U, f, g, h)


def random_state(rng, prob):
    return PDState(BlockVector.from_flat(rng.standard_normal(sum(prob.L.col_dims)),
                                         prob.L.col_dims),
                   BlockVector.from_flat(rng.standard_normal(sum(prob.L.row_dims)),
                                         prob.L.row_dims))


class TestConstants:
    def test_effective_constants(self):
        h = SmoothFn.sq_norm(1, 1.0)
        assert effective_constants(scalar_problem(w=1.0, h=h))[0] == 1.0
        assert effective_constants(scalar_problem(w=2.0, h=h))[0] == 0.5
        L = BlockOperatorMatrix({(0, 0): [[1.0]], (0, 1): [[1.0]]}, [1], [1, 1])
        prob = PDProblem(L, DiagonalMetric.scalar(1.0, [1, 1]), DiagonalMetric.scalar(1.0, [1]),
                         [MonotoneOp.zero(1)] * 2, [MonotoneOp.zero(1)], mu_tilde=[1.0, 3.0])
        mu, nu = effective_constants(prob)
        assert mu == 1.0 and math.isinf(nu)

    def test_theta_alpha_examples(self):
        assert theta_alpha(0.0, 1.0, 1.0, 3.7) == 1.0
        for n in (0.1, 0.5, 0.9):
            assert theta_alpha(n, 2.0, 2.0, 1.0) == pytest.approx((1 - n) * 2.0, rel=1e-14)
        assert theta_alpha(1.0, 1.0, 1.0, 1.0) == 0.0
        assert theta_alpha(0.5, 2.0, math.inf, 1.0) == pytest.approx(0.75 * 2.0)

    def test_alpha_hat_examples(self):
        assert alpha_hat(0.3, 1.5, 1.5) == pytest.approx(1.0, rel=1e-14)
        assert alpha_hat(0.5, 2.0, 1.0) == pytest.approx(2.7320508075688772, abs=1e-12)
        assert alpha_hat(0.0, 1.0, 1.0) is None
        al, val = grid_max_theta(0.5, 2.0, 1.0)
        assert theta_alpha(0.5, 2.0, 1.0, alpha_hat(0.5, 2.0, 1.0)) == pytest.approx(val,
                                                                                     abs=1e-8)

    @given(st.floats(0.01, 0.99), st.floats(0.05, 50), st.floats(0.05, 50))
    def test_alpha_hat_dominates_grid(self, norm, mu, nu):
        th = theta_alpha(norm, mu, nu, alpha_hat(norm, mu, nu))
        for al in np.logspace(-3, 3, 200):
            assert th >= theta_formula(norm, mu, nu, al) - 1e-12 * th


class TestCheckers:
    def test_alg1_pass(self):
        prob = scalar_problem(w=0.04, u=0.04, h=SmoothFn.sq_norm(1),
                              lconj=SmoothFn.sq_norm(1))
        rep = check_alg1(prob)
        assert rep.norm == pytest.approx(0.04, rel=1e-12)
        assert rep.mu == pytest.approx(25) and rep.nu == pytest.approx(25)
        # direct plug-in: (1 - n^2) * mu / (1 + n) at alpha = 1
        assert rep.theta_hat == pytest.approx((1 - 0.04 ** 2) * 25 / 1.04, rel=1e-12)
        assert rep.verdict

    def test_alg1_norm_fail(self):
        rep = check_alg1(scalar_problem(w=1.0, u=1.0, l=1.5, h=SmoothFn.sq_norm(1, 0.1)))
        assert not rep.verdict and rep.reason == "norm"

    def test_alg1_boundary_half(self):
        prob = scalar_problem(w=2.0, u=2.0, l=0.1, h=SmoothFn.sq_norm(1),
                              lconj=SmoothFn.sq_norm(1))
        rep = check_alg1(prob)
        assert rep.mu == 0.5 and rep.nu == 0.5
        assert not rep.verdict

    def test_alg1_ter_when_dinv_zero(self):
        rep = check_alg1(scalar_problem(w=0.5, u=0.5, h=SmoothFn.sq_norm(1)))
        assert "ter" in rep.conditions and math.isinf(rep.nu)

    def test_alg2_examples(self):
        # mu = 1, nu = 1, norm = 0.5
        prob = scalar_problem(w=0.5, u=0.5, h=SmoothFn.sq_norm(1, 2.0),
                              lconj=SmoothFn.sq_norm(1, 2.0))
        rep = check_alg2(prob)
        assert rep.norm == pytest.approx(0.5) and rep.mu == pytest.approx(1.0)
        assert rep.verdict
        bad = scalar_problem(w=0.5, u=0.5, h=SmoothFn.sq_norm(1, 5.0))
        assert check_alg2(bad).mu == pytest.approx(0.4)
        assert not check_alg2(bad).verdict

    def test_alg2_inapplicable(self):
        with pytest.raises(InapplicableError):
            check_alg2(scalar_problem(f=ProxFn.l1(1)))

    def test_alg2_less_restrictive_witness(self):
        rng = np.random.default_rng(1)
        found = 0
        for _ in range(200):
            w, u, l = rng.uniform(0.1, 2.0, 3)
            prob = scalar_problem(w=w, u=u, l=l, h=SmoothFn.sq_norm(1, rng.uniform(0.1, 2)))
            r1, r2 = check_alg1(prob), check_alg2(prob)
            if r2.verdict and not r1.conditions["ter"]:
                found += 1
            # the converse never happens
            assert not (r1.conditions["ter"] and not r2.verdict)
        assert found > 0


class TestSteps:
    def test_fixed_point_zero(self):
        prob = scalar_problem(f=ProxFn.sq_distance([0.0]))
        for name in ("alg1", "alg1_sym"):
            out = STEPS[name](prob, PDState.zeros(prob), np.array([1, 1]))
            assert np.array_equal(out.x.flat(), [0.0]) and np.array_equal(out.v.flat(), [0.0])

    def test_one_iteration_by_hand(self):
        prob = scalar_problem(w=1.0, u=0.5, f=ProxFn.sq_distance([0.0]))
        s = PDState(BlockVector([[1.0]]), BlockVector([[0.0]]))
        out = step_alg1(prob, s, np.array([1, 1]))
        assert out.x.flat()[0] == 0.5 and out.v.flat()[0] == 0.0

    def test_inactive_dual_unchanged(self, rng):
        prob = scalar_problem(w=0.3, u=0.3, f=ProxFn.l1(1), g=ProxFn.l1(1, 0.2))
        s = random_state(rng, prob)
        out = step_alg1(prob, s, np.array([1, 0]))
        assert np.array_equal(out.v.flat(), s.v.flat())

    def test_alg1_closure_violation(self, rng):
        prob = two_by_two(rng)
        with pytest.raises(ClosureError):
            step_alg1(prob, random_state(rng, prob), np.array([1, 0, 0, 1]))
        with pytest.raises(ClosureError):
            step_alg1_sym(prob, random_state(rng, prob), np.array([0, 1, 1, 0]))

    def test_sym_dual_only_keeps_primals(self, rng):
        prob = two_by_two(rng)
        s = random_state(rng, prob)
        out = step_alg1_sym(prob, s, np.array([0, 0, 1, 1]))
        assert out.x.equal(s.x)

    def test_alg2_zero_operators(self, rng):
        L = BlockOperatorMatrix({(0, 0): rng.standard_normal((2, 3))}, [2], [3])
        prob = PDProblem(L, DiagonalMetric.scalar(0.1, [3]), DiagonalMetric.scalar(0.1, [2]),
                         [MonotoneOp.zero(3)], [MonotoneOp.subdiff(ProxFn.zero(2))])
        s = PDState(BlockVector([rng.standard_normal(3)]), BlockVector.zeros([2]))
        out = step_alg2(prob, s, np.array([1, 1]))
        assert np.array_equal(out.x.flat(), s.x.flat()) and not np.any(out.v.flat())

    def test_alg2_inactive_dual(self, rng):
        prob = two_by_two(rng, f_kind="zero")
        s = random_state(rng, prob)
        out = step_alg2(prob, s, np.array([0, 0, 1, 0]))
        assert np.array_equal(out.v.blocks[1], s.v.blocks[1])

    def test_alg2_inapplicable(self, rng):
        prob = two_by_two(rng)
        with pytest.raises(InapplicableError):
            step_alg2(prob, random_state(rng, prob), np.ones(4))

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["alg1", "alg1_sym", "alg2"]))
    def test_inactive_immutability(self, seed, name):
        rng = np.random.default_rng(seed)
        prob = two_by_two(rng, f_kind="zero" if name == "alg2" else "l1")
        sched = ActivationSchedule("bernoulli", prob.structure, CLOSURE[name], probs=0.4)
        s = random_state(rng, prob)
        eps = sched.sample(rng)
        out = STEPS[name](prob, s, eps)
        for j in np.flatnonzero(eps[:2] == 0):
            assert np.array_equal(out.x.blocks[j], s.x.blocks[j])
        for k in np.flatnonzero(eps[2:] == 0):
            assert np.array_equal(out.v.blocks[k], s.v.blocks[k])

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["alg1", "alg1_sym", "alg2"]))
    def test_constructed_fixed_point(self, seed, name):
        # choose (x, v) first, then data making them primal-dual optimal
        rng = np.random.default_rng(seed)
        Lm = rng.standard_normal((2, 3))
        L = BlockOperatorMatrix({(0, 0): Lm}, [2], [3])
        xh = rng.standard_normal(3)
        xh[0] = 0.0
        vh = rng.standard_normal(2)
        tau = 0.0 if name == "alg2" else 0.3
        s = np.sign(xh)
        s[0] = rng.uniform(-1, 1)
        # 0 = tau s + (x - b) + L^T v  and  v = L x - c
        b = xh + Lm.T @ vh + tau * s
        c = Lm @ xh - vh
        f = ProxFn.zero(3) if name == "alg2" else ProxFn.l1(3, tau)
        prob = PDProblem.convex(L, DiagonalMetric.scalar(0.2, [3]),
                                DiagonalMetric.scalar(0.2, [2]), [f],
                                [ProxFn.sq_distance(c)], [SmoothFn.quadratic(np.eye(3), b)])
        st0 = PDState(BlockVector([xh]), BlockVector([vh]))
        out = STEPS[name](prob, st0, np.array([1, 1]))
        assert np.allclose(out.x.flat(), xh, atol=1e-10)
        assert np.allclose(out.v.flat(), vh, atol=1e-10)


def lasso_instance(seed=0, n=12, k=20, tau=0.1):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((k, n)) / np.sqrt(k)
    b = rng.standard_normal(k)
    return A, b, tau


def lasso_residual(A, b, tau, x):
    g = A.T @ (A @ x - b)
    r = np.where(x != 0, g + tau * np.sign(x), np.maximum(np.abs(g) - tau, 0.0))
    return float(np.linalg.norm(r))


class TestConvergence:
    def test_sym_full_activation_lasso_optimality(self):
        A, b, tau = lasso_instance()
        n = A.shape[1]
        w = 1.0 / np.linalg.norm(A, 2) ** 2
        L = BlockOperatorMatrix({(0, 0): np.eye(n)}, [n], [n])
        prob = PDProblem.convex(L, DiagonalMetric.scalar(w, [n]),
                                DiagonalMetric.scalar(0.5 / w, [n]), [ProxFn.l1(n, tau)],
                                [ProxFn.zero(n)], [SmoothFn.quadratic(A, b)])
        sched = ActivationSchedule("full", prob.structure, "dual_follows_primal")
        res = run_pd(prob, "alg1_sym", sched, max_iters=20000, tol=1e-13)
        assert lasso_residual(A, b, tau, res.state.x.flat()) < 1e-6

    def test_alg2_ridge_closed_form(self):
        rng = np.random.default_rng(3)
        M = rng.standard_normal((15, 6))
        bb = rng.standard_normal(15)
        reg = 0.5
        xs = np.linalg.solve(M.T @ M + reg * np.eye(6), M.T @ bb)
        L = BlockOperatorMatrix({(0, 0): M}, [15], [6])
        nrm = np.linalg.norm(M, 2)
        prob = PDProblem.convex(L, DiagonalMetric.scalar(1.0 / reg * 0.9, [6]),
                                DiagonalMetric.scalar(0.5 * reg / nrm ** 2, [15]),
                                [ProxFn.zero(6)], [ProxFn.sq_distance(bb)],
                                [SmoothFn.sq_norm(6, reg)])
        assert check_alg2(prob).verdict
        sched = ActivationSchedule("full", prob.structure, "dual_follows_primal")
        res = run_pd(prob, "alg2", sched, max_iters=50000, tol=1e-14)
        assert np.max(np.abs(res.state.x.flat() - xs)) < 1e-8

    def test_trivial_problem_stops_at_window(self):
        prob = scalar_problem(f=ProxFn.sq_distance([0.0]))
        sched = ActivationSchedule("full", prob.structure, "primal_follows_dual")
        res = run_pd(prob, "alg1", sched, window=10)
        assert res.stop_reason == "converged" and res.iterations == 10
        assert len(res.rows) == res.iterations + 1

    def test_condition_failure_and_force(self):
        prob = scalar_problem(w=2.0, u=2.0, h=SmoothFn.sq_norm(1))
        sched = ActivationSchedule("full", prob.structure, "primal_follows_dual")
        with pytest.raises(ConditionError) as info:
            run_pd(prob, "alg1", sched, max_iters=5)
        assert info.value.report is not None
        res = run_pd(prob, "alg1", sched, max_iters=5, force=True)
        assert res.condition_forced

    def test_closure_mismatch_rejected(self, rng):
        prob = two_by_two(rng)
        sched = ActivationSchedule("bernoulli", prob.structure, "dual_follows_primal", probs=0.5)
        with pytest.raises(ClosureError):
            run_pd(prob, "alg1", sched, max_iters=5)

    def test_same_seed_bitwise(self, rng):
        prob = two_by_two(rng)
        sched = ActivationSchedule("bernoulli", prob.structure, "primal_follows_dual", probs=0.5)
        r1 = run_pd(prob, "alg1", sched, seed=4, max_iters=200)
        r2 = run_pd(prob, "alg1", sched, seed=4, max_iters=200)
        assert r1.rows == r2.rows and r1.state.equal(r2.state)

    def test_accounting(self, rng):
        prob = two_by_two(rng)
        sched = ActivationSchedule("bernoulli", prob.structure, "primal_follows_dual", probs=0.3)
        res = run_pd(prob, "alg1", sched, seed=2, max_iters=100)
        active = [r[5] for r in res.rows]
        assert res.rows[-1][6] == sum(active)

    def test_full_vs_random_lasso_blocks(self):
        from rpd.harness.reference import solve_lasso
        rng = np.random.default_rng(7)
        A = rng.standard_normal((30, 12)) / np.sqrt(30)
        b = rng.standard_normal(30)
        tau = 0.05
        ref = solve_lasso(A, b, tau)
        chunks = np.array_split(np.arange(12), 4)
        L = BlockOperatorMatrix({(0, j): A[:, c] for j, c in enumerate(chunks)}, [30],
                                [c.size for c in chunks])
        prob = PDProblem.convex(L, DiagonalMetric.scalar(0.5, [3] * 4),
                                DiagonalMetric.scalar(0.5, [30]),
                                [ProxFn.l1(3, tau)] * 4, [ProxFn.sq_distance(b)])
        out = {}
        for kind in ("full", "bernoulli"):
            sched = ActivationSchedule(kind, prob.structure, "primal_follows_dual",
                                       probs=0.5 if kind == "bernoulli" else None)
            res = run_pd(prob, "alg1", sched, seed=1, max_iters=20000, tol=1e-11)
            gap = res.rows[-1][1] - ref.objective
            out[kind] = (gap, res.iterations, res.rows[-1][6] / res.iterations)
        assert out["full"][0] < 1e-6 and out["bernoulli"][0] < 1e-6
        assert out["bernoulli"][1] > out["full"][1]
        assert out["bernoulli"][2] < out["full"][2]


def test_matches_condat_vu_lasso():
    A, b, tau = lasso_instance(seed=5)
    n = A.shape[1]
    w, u = 0.5 / np.linalg.norm(A, 2) ** 2, 0.8
    L = BlockOperatorMatrix({(0, 0): np.eye(n)}, [n], [n])
    prob = PDProblem.convex(L, DiagonalMetric.scalar(w, [n]), DiagonalMetric.scalar(u, [n]),
                            [ProxFn.l1(n, tau)], [ProxFn.zero(n)], [SmoothFn.quadratic(A, b)])
    rng = np.random.default_rng(0)
    x0, v0 = rng.standard_normal(n), rng.standard_normal(n)
    ref = condat_vu(x0, v0, np.eye(n), w, u, lambda x: A.T @ (A @ x - b),
                    lambda z, t: soft(z, t * tau), lambda z, s: np.zeros_like(z), 0.9, 50)
    s = PDState(BlockVector([x0]), BlockVector([v0]))
    for xr, vr in ref[1:]:
        s = step_alg1(prob, s, np.array([1, 1]), lam=0.9)
        assert np.allclose(s.x.flat(), xr, atol=1e-12, rtol=0)
        assert np.allclose(s.v.flat(), vr, atol=1e-12, rtol=0)
