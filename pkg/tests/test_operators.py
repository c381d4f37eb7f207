import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import conj_prox_table, golden_argmin, separable_prox
from rpd.exceptions import StructureError, UnsupportedOperation
from rpd.operators import (MonotoneOp, ProxFn, SmoothFn, dual_resolvent, gradient_check,
                           project_consensus, prox_conjugate, prox_metric, resolvent)

DIM = 4


def library_functions(rng, dim=DIM):
    """One instance of every ProxFn kind with random parameters."""
    lo = rng.uniform(-1.0, 0.0, dim)
    return {
        "l1": ProxFn.l1(dim, rng.uniform(0.2, 2.0)),
        "sq_distance": ProxFn.sq_distance(rng.standard_normal(dim), rng.uniform(0.2, 2.0)),
        "box": ProxFn.box(lo, lo + rng.uniform(0.0, 2.0, dim)),
        "zero": ProxFn.zero(dim),
        "point": ProxFn.point(rng.standard_normal(dim)),
    }


def oracle_prox(f, w, x):
    """Metric prox by scalar golden-section search (indicators handled by clipping)."""
    if f.kind == "point":
        return np.array(f.center)
    if f.kind == "box":
        # minimize the quadratic over [lo_i, hi_i]
        return np.array([golden_argmin(lambda y: (xi - y) ** 2, lo, hi) if hi > lo else lo
                         for xi, lo, hi in zip(x, f.lo, f.hi)])
    if f.kind == "l1":
        return separable_prox(lambda i, y: f.tau * abs(y), w, x)
    if f.kind == "sq_distance":
        return separable_prox(lambda i, y: 0.5 * f.tau * (y - f.center[i]) ** 2, w, x)
    return separable_prox(lambda i, y: 0.0, w, x)


def conj_oracle(f, u, v):
    return conj_prox_table(f.kind, u, v, tau=f.tau, center=f.center, lo=f.lo, hi=f.hi)


class TestProxMetric:
    def test_zero_is_identity(self, rng):
        x = rng.standard_normal(3)
        assert np.array_equal(prox_metric(ProxFn.zero(3), rng.uniform(0.1, 2, 3), x), x)

    def test_soft_threshold_example(self):
        out = prox_metric(ProxFn.l1(2, 1.0), np.ones(2), np.array([2.0, -0.5]))
        assert np.allclose(out, [1.0, 0.0], atol=1e-12)
        # golden-section oracle agrees
        assert np.allclose(oracle_prox(ProxFn.l1(2, 1.0), np.ones(2), np.array([2.0, -0.5])),
                           [1.0, 0.0], atol=1e-8)

    def test_box_projection_metric_independent(self, rng):
        f = ProxFn.box(0.0, 1.0, 3)
        x = np.array([2.0, -1.0, 0.5])
        for _ in range(3):
            assert np.array_equal(prox_metric(f, rng.uniform(0.1, 5.0, 3), x), [1.0, 0.0, 0.5])

    @pytest.mark.parametrize("kind", ["l1", "sq_distance", "box", "zero", "point"])
    def test_matches_scalar_oracle(self, rng, kind):
        for _ in range(5):
            f = library_functions(rng)[kind]
            w = rng.uniform(0.1, 3.0, DIM)
            x = 2.0 * rng.standard_normal(DIM)
            assert np.allclose(prox_metric(f, w, x), oracle_prox(f, w, x), atol=1e-7)

    def test_identity_metric_textbook(self, rng):
        x = rng.standard_normal(6)
        tau = 0.7
        assert np.allclose(prox_metric(ProxFn.l1(6, tau), np.ones(6), x),
                           np.sign(x) * np.maximum(np.abs(x) - tau, 0), atol=1e-12)
        assert np.allclose(prox_metric(ProxFn.sq_distance(np.zeros(6), tau), np.ones(6), x),
                           x / (1 + tau), atol=1e-12)
        assert np.allclose(prox_metric(ProxFn.box(-0.3, 0.3, 6), np.ones(6), x),
                           np.clip(x, -0.3, 0.3), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(StructureError):
            prox_metric(ProxFn.l1(3), np.ones(2), np.ones(2))

    def test_constructor_validation(self):
        with pytest.raises(StructureError):
            ProxFn.l1(3, 0.0)
        with pytest.raises(StructureError):
            ProxFn.box(1.0, 0.0, 2)


class TestProxConjugate:
    def test_point_zero_conjugate_is_zero_function(self, rng):
        v = rng.standard_normal(3)
        assert np.allclose(prox_conjugate(ProxFn.point(np.zeros(3)), rng.uniform(0.1, 2, 3), v),
                           v, atol=1e-15)

    def test_zero_function_conjugate_is_origin_indicator(self, rng):
        v = rng.standard_normal(3)
        assert np.array_equal(prox_conjugate(ProxFn.zero(3), rng.uniform(0.1, 2, 3), v),
                              np.zeros(3))

    def test_l1_conjugate_projects(self):
        out = prox_conjugate(ProxFn.l1(2, 1.0), np.ones(2), np.array([0.4, 3.0]))
        assert np.allclose(out, [0.4, 1.0], atol=1e-15)

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["l1", "sq_distance", "box", "zero",
                                                        "point"]))
    def test_moreau_decomposition_matches_closed_form_conjugates(self, seed, kind):
        rng = np.random.default_rng(seed)
        f = library_functions(rng)[kind]
        u = rng.uniform(0.1, 3.0, DIM)
        v = 3.0 * rng.standard_normal(DIM)
        assert np.allclose(prox_conjugate(f, u, v), conj_oracle(f, u, v), atol=1e-10)


class TestResolvent:
    def test_zero_operator(self, rng):
        x = rng.standard_normal(3)
        assert np.array_equal(resolvent(MonotoneOp.zero(3), np.ones(3), x), x)

    def test_half_square_norm(self, rng):
        tau = 0.4
        x = rng.standard_normal(3)
        A = MonotoneOp.subdiff(ProxFn.sq_distance(np.zeros(3), 1.0), strong_monotonicity=1.0)
        out = resolvent(A, np.full(3, tau), x)
        assert np.allclose(out, x / (1 + tau), atol=1e-14)
        grid = np.array([golden_argmin(lambda y: 0.5 * y * y + (xi - y) ** 2 / (2 * tau),
                                       -10, 10) for xi in x])
        assert np.allclose(out, grid, atol=1e-8)

    def test_consensus_dispatch(self):
        A = MonotoneOp.consensus(2, 1)
        assert np.allclose(resolvent(A, np.ones(2), np.array([1.0, 3.0])), [2.0, 2.0])

    def test_weighted_consensus_is_metric_projection(self, rng):
        # J_{W N}(x) minimizes sum (x_i - y)^2 / w_i over consensual y
        A = MonotoneOp.consensus(3, 1)
        w = np.array([0.5, 1.0, 2.0])
        x = np.array([1.0, -2.0, 4.0])
        y = golden_argmin(lambda t: np.sum((x - t) ** 2 / w), -10, 10)
        assert np.allclose(resolvent(A, w, x), np.full(3, y), atol=1e-8)

    def test_user_resolvent(self):
        A = MonotoneOp.from_resolvent(2, lambda w, x: x / (1 + w))
        assert np.allclose(resolvent(A, np.full(2, 1.0), np.array([2.0, 4.0])), [1.0, 2.0])

    def test_unsupported_kind(self):
        with pytest.raises(UnsupportedOperation):
            resolvent(MonotoneOp("mystery", 2), np.ones(2), np.ones(2))

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["l1", "sq_distance", "box", "zero",
                                                        "point", "consensus"]))
    def test_firmly_nonexpansive(self, seed, kind):
        rng = np.random.default_rng(seed)
        if kind == "consensus":
            A = MonotoneOp.consensus(2, DIM // 2)
            w = np.full(DIM, rng.uniform(0.1, 3.0))
        else:
            A = MonotoneOp.subdiff(library_functions(rng)[kind])
            w = rng.uniform(0.1, 3.0, DIM)
        # the resolvent J_{WA} is firmly nonexpansive in the metric W^{-1}
        x, y = 3 * rng.standard_normal(DIM), 3 * rng.standard_normal(DIM)
        Jx, Jy = resolvent(A, w, x), resolvent(A, w, y)
        d = Jx - Jy
        assert np.sum(d * d / w) <= np.sum((x - y) * d / w) + 1e-10

    @given(st.integers(0, 2**32 - 1))
    def test_dual_resolvent_matches_moreau_route(self, seed):
        rng = np.random.default_rng(seed)
        f = library_functions(rng)["sq_distance"]
        u = rng.uniform(0.1, 2.0, DIM)
        v = rng.standard_normal(DIM)
        via_user = MonotoneOp.from_resolvent(DIM, lambda w, x: prox_metric(f, w, x))
        assert np.allclose(dual_resolvent(via_user, u, v),
                           dual_resolvent(MonotoneOp.subdiff(f), u, v), atol=1e-12)


def falsify_strong_monotonicity(A, beta, rng, n_pairs=200, dim=DIM):
    """Return a violating pair count for ``<Jx - Jy, a - b> >= beta |Jx - Jy|^2``."""
    bad = 0
    w = np.ones(dim)
    for _ in range(n_pairs):
        x, y = 3 * rng.standard_normal(dim), 3 * rng.standard_normal(dim)
        px, py = resolvent(A, w, x), resolvent(A, w, y)
        # x - Jx lies in A(Jx) for the unit metric
        a, b = x - px, y - py
        d = px - py
        if d @ (a - b) < beta * (d @ d) - 1e-12:
            bad += 1
    return bad


class TestStrongMonotonicityMetadata:
    def test_correct_constant_survives(self, rng):
        A = MonotoneOp.subdiff(ProxFn.sq_distance(np.zeros(DIM), 2.0), strong_monotonicity=2.0)
        assert falsify_strong_monotonicity(A, A.strong_monotonicity, rng) == 0

    def test_overstated_constant_rejected(self, rng):
        A = MonotoneOp.subdiff(ProxFn.sq_distance(np.zeros(DIM), 2.0), strong_monotonicity=3.0)
        assert falsify_strong_monotonicity(A, A.strong_monotonicity, rng) > 0


class TestProjectConsensus:
    def test_mean(self):
        assert np.array_equal(project_consensus(np.array([1.0, 3.0]), 2), [2.0, 2.0])

    def test_fixes_consensus(self):
        z = np.tile([1.5, -2.0], 3)
        assert np.array_equal(project_consensus(z, 3), z)

    def test_bad_kappa(self):
        with pytest.raises(StructureError):
            project_consensus(np.ones(5), 2)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
    def test_orthogonal_projector(self, seed, kappa, d):
        rng = np.random.default_rng(seed)
        z, y = rng.standard_normal(kappa * d), rng.standard_normal(kappa * d)
        Pz = project_consensus(z, kappa)
        assert np.allclose(project_consensus(Pz, kappa), Pz, atol=1e-14)
        assert abs(Pz @ y - z @ project_consensus(y, kappa)) < 1e-12


class TestSmooth:
    def test_zero_gradient_check(self, rng):
        assert gradient_check(SmoothFn.zero(3), rng.standard_normal(3)) == 0.0

    def test_quadratic_gradient_check(self, rng):
        f = SmoothFn.quadratic(rng.standard_normal((5, 3)), rng.standard_normal(5))
        assert gradient_check(f, rng.standard_normal(3), h=1e-5) < 1e-5

    def test_affine_exact(self, rng):
        f = SmoothFn.quadratic(np.zeros((1, 3)), c=rng.standard_normal(3))
        assert gradient_check(f, rng.standard_normal(3), h=1e-3) < 1e-12

    def test_bad_step(self):
        with pytest.raises(ValueError):
            gradient_check(SmoothFn.zero(2), np.zeros(2), h=0.0)

    @given(st.integers(0, 2**32 - 1))
    def test_lipschitz_constant(self, seed):
        rng = np.random.default_rng(seed)
        f = SmoothFn.quadratic(rng.standard_normal((4, 3)), rng.standard_normal(4),
                               weight=rng.uniform(0.1, 3))
        x, y = rng.standard_normal(3), rng.standard_normal(3)
        assert (np.linalg.norm(f.grad(x) - f.grad(y))
                <= f.lipschitz * np.linalg.norm(x - y) * (1 + 1e-12) + 1e-14)

    @given(st.integers(0, 2**32 - 1))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        f = SmoothFn.quadratic(rng.standard_normal((4, 3)), rng.standard_normal(4),
                               c=rng.standard_normal(3))
        assert gradient_check(f, rng.standard_normal(3)) < 1e-5
