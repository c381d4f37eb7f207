import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpd.activation import (COUPLINGS, ActivationSchedule, Structure, check_closure,
                            validate)
from rpd.exceptions import ClosureError, StructureError

PD = Structure.primal_dual(2, 2, [[0], [0, 1]])
DIST = Structure.distributed(4, [[0, 1], [1, 2], [2, 3], [3, 0]])


def implications_hold(pattern, structure, coupling):
    return all(not pattern[s] or pattern[t] for s, t in structure.implications(coupling))


def brute_marginals(s: ActivationSchedule):
    """Exact marginals by enumerating every raw draw with its probability."""
    n = s.raw_size
    if s.kind == "full":
        return s.close(np.ones(n, dtype=np.int8)).astype(float)
    if s.kind == "single":
        acc = np.zeros(s.size)
        for c in s.seeds:
            raw = np.zeros(n, dtype=np.int8)
            raw[c] = 1
            acc += s.close(raw)
        return acc / len(s.seeds)
    pr = np.asarray(s.probs)
    acc, total = np.zeros(s.size), 0.0
    for bits in itertools.product([0, 1], repeat=n):
        b = np.array(bits, dtype=np.int8)
        if not b.any():
            continue
        w = float(np.prod(np.where(b == 1, pr, 1 - pr)))
        acc += w * s.close(b)
        total += w
    return acc / total


class TestSample:
    def test_full_is_all_ones(self, rng):
        s = ActivationSchedule("full", PD, "primal_follows_dual")
        assert np.array_equal(s.sample(rng), np.ones(4))

    def test_primal_follows_dual_closure_example(self):
        st1 = Structure.primal_dual(1, 1, [[0]])
        s = ActivationSchedule("bernoulli", st1, "primal_follows_dual", probs=0.5)
        assert np.array_equal(s.close(np.array([0, 1])), [1, 1])

    def test_dual_follows_primal(self):
        s = ActivationSchedule("bernoulli", PD, "dual_follows_primal", probs=0.5)
        assert np.array_equal(s.close(np.array([0, 1, 0, 0])), [0, 1, 1, 1])

    def test_distributed_closure(self):
        s = ActivationSchedule("single", DIST, "distributed")
        out = s.close(np.eye(12, dtype=np.int8)[1])
        # agent 1, its dual, and edges {0,1} and {1,2}
        assert np.flatnonzero(out).tolist() == [1, 5, 8, 9]

    def test_tied_closure_draws_agents_only(self, rng):
        s = ActivationSchedule("bernoulli", DIST, "distributed_tied", probs=0.5)
        assert s.raw_size == 4
        for _ in range(50):
            e = s.sample(rng)
            assert np.array_equal(e[4:8], e[:4])
            assert implications_hold(e, DIST, "distributed")

    def test_three_bit_bernoulli_enumeration(self, rng):
        st3 = Structure.primal_dual(2, 1, [[0], [0]])
        for coupling in ("none", "primal_follows_dual", "dual_follows_primal"):
            s = ActivationSchedule("bernoulli", st3, coupling, probs=0.5)
            for _ in range(10_000):
                e = s.sample(rng)
                assert e.any()
                assert implications_hold(e, st3, coupling)

    def test_determinism(self):
        s = ActivationSchedule("bernoulli", DIST, "distributed", probs=0.3)
        r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
        assert all(np.array_equal(s.sample(r1), s.sample(r2)) for _ in range(200))

    def test_bad_kind_or_coupling(self):
        with pytest.raises(StructureError):
            ActivationSchedule("cyclic", PD)
        with pytest.raises(StructureError):
            ActivationSchedule("full", PD, "distributed")
        with pytest.raises(StructureError):
            ActivationSchedule("bernoulli", PD, probs=0.0)


class TestMarginals:
    @pytest.mark.parametrize("kind,coupling", [
        ("full", "primal_follows_dual"), ("bernoulli", "primal_follows_dual"),
        ("bernoulli", "dual_follows_primal"), ("single", "none"),
        ("single", "dual_follows_primal")])
    def test_pd_exact(self, kind, coupling):
        s = ActivationSchedule(kind, PD, coupling,
                               probs=[0.2, 0.5, 0.7, 0.4] if kind == "bernoulli" else None)
        assert np.allclose(s.marginals(), brute_marginals(s), atol=1e-14)

    @pytest.mark.parametrize("kind,coupling", [
        ("bernoulli", "distributed"), ("single", "distributed"),
        ("bernoulli", "distributed_tied")])
    def test_distributed_exact(self, kind, coupling):
        s = ActivationSchedule(kind, DIST, coupling,
                               probs=0.3 if kind == "bernoulli" else None)
        assert np.allclose(s.marginals(), brute_marginals(s), atol=1e-14)

    def test_single_seed_ring_of_four(self):
        s = ActivationSchedule("single", DIST, "distributed")
        marg = s.marginals()
        assert np.all(marg >= 0.25)
        assert np.allclose(marg[:4], 0.25) and np.allclose(marg[8:], 0.5)
        assert validate(s, "dist1").valid


class TestValidate:
    def test_full_valid_everywhere(self):
        s = ActivationSchedule("full", PD, "none")
        for algo in ("alg1", "alg1_sym", "alg2"):
            rep = validate(s, algo)
            assert rep.valid and np.all(rep.marginals == 1.0)

    def test_zero_dual_probability_invalid(self):
        s = ActivationSchedule("bernoulli", PD, "primal_follows_dual", probs=[0.5, 0.5, 0.0, 0.5])
        rep = validate(s, "alg1")
        assert not rep.marginals_positive
        assert not rep.valid
        assert any("never activated" in p for p in rep.problems)

    def test_closure_mismatch_reported(self):
        s = ActivationSchedule("bernoulli", PD, "dual_follows_primal", probs=0.5)
        rep = validate(s, "alg1")
        assert not rep.closure_matches

    def test_tied_serves_distributed(self):
        s = ActivationSchedule("bernoulli", DIST, "distributed_tied", probs=0.5)
        assert validate(s, "dist_opt").closure_matches

    def test_expected_fraction(self):
        s = ActivationSchedule("full", PD, "none")
        assert validate(s).expected_active_fraction == 1.0


class TestCheckClosure:
    def test_rejects_zero_and_violations(self):
        with pytest.raises(ClosureError):
            check_closure(np.zeros(4), PD, "primal_follows_dual")
        with pytest.raises(ClosureError):
            check_closure(np.array([0, 0, 1, 0]), PD, "primal_follows_dual")
        check_closure(np.array([1, 1, 1, 0]), PD, "primal_follows_dual")

    @given(st.integers(0, 2**32 - 1), st.sampled_from(COUPLINGS[:4]),
           st.floats(0.05, 1.0))
    def test_closure_soundness(self, seed, coupling, p):
        structure = DIST if coupling == "distributed" else PD
        s = ActivationSchedule("bernoulli", structure, coupling, probs=p)
        rng = np.random.default_rng(seed)
        for _ in range(20):
            e = s.sample(rng)
            assert e.any()
            check_closure(e, structure, coupling)
