"""Random activation patterns and the coupling closures the algorithms need.

A pattern is a 0/1 ``int8`` vector, never all zero. Raw draws come from one of
three laws (full, i.i.d. Bernoulli, single uniform seed); the configured
coupling closure is applied afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import ActivationError, ClosureError, StructureError

MAX_RESAMPLES = 10_000

COUPLINGS = ("none", "primal_follows_dual", "dual_follows_primal", "distributed",
             "distributed_tied")

# closure each algorithm needs; "distributed" is also satisfied by the tied variant
REQUIRED_COUPLING = {
    "alg1": "primal_follows_dual",
    "alg1_sym": "dual_follows_primal",
    "alg2": "dual_follows_primal",
    "dist1": "distributed",
    "dist2": "distributed",
    "dist_opt": "distributed",
    "dist_pairwise": "distributed_tied",
}


@dataclass(frozen=True)
class Structure:
    """Coordinate layout a schedule acts on.

    For primal-dual problems: ``p``, ``q`` and the column supports (duals
    touching each primal block). For distributed problems: ``m`` agents and
    the hyperedge member lists; the pattern then has ``2m + r`` bits.
    """

    size: int
    p: int = 0
    q: int = 0
    col_support: tuple = ()
    m: int = 0
    edges: tuple = ()

    @classmethod
    def primal_dual(cls, p: int, q: int, col_support: Sequence[Sequence[int]]) -> "Structure":
        cs = tuple(tuple(int(k) for k in s) for s in col_support)
        if len(cs) != p:
            raise StructureError("need one support set per primal block")
        return cls(size=p + q, p=p, q=q, col_support=cs)

    @classmethod
    def distributed(cls, m: int, edges: Sequence[Sequence[int]]) -> "Structure":
        es = tuple(tuple(sorted(int(i) for i in e)) for e in edges)
        return cls(size=2 * m + len(es), m=m, edges=es)

    @property
    def is_distributed(self) -> bool:
        return self.m > 0

    def implications(self, coupling: str) -> list:
        """List of (source, target) pairs: source active forces target active."""
        pairs = []
        if coupling == "primal_follows_dual":
            for j, ks in enumerate(self.col_support):
                pairs += [(self.p + k, j) for k in ks]
        elif coupling == "dual_follows_primal":
            for j, ks in enumerate(self.col_support):
                pairs += [(j, self.p + k) for k in ks]
        elif coupling in ("distributed", "distributed_tied"):
            m = self.m
            pairs += [(i, m + i) for i in range(m)]
            for l, e in enumerate(self.edges):
                pairs += [(i, 2 * m + l) for i in e]
        return pairs


@dataclass(frozen=True)
class ActivationSchedule:
    """Generator of identically distributed activation patterns.

    Parameters
    ----------
    kind : {"full", "bernoulli", "single"}
        ``single`` picks one seed coordinate uniformly at random.
    structure : Structure
    coupling : str
        One of ``COUPLINGS``. ``distributed_tied`` draws only agent bits and
        sets each agent-dual bit equal to its agent bit and each edge bit to
        the max over the edge members.
    probs : sequence of float, optional
        Bernoulli probabilities, one per raw coordinate (a scalar broadcasts).
    seeds : sequence of int, optional
        Coordinates eligible as the single seed. Defaults to the agent bits
        for distributed structures and to all bits otherwise.
    """

    kind: str
    structure: Structure
    coupling: str = "none"
    probs: Optional[tuple] = None
    seeds: Optional[tuple] = None
    _impl: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("full", "bernoulli", "single"):
            raise StructureError(f"unknown schedule kind {self.kind!r}")
        if self.coupling not in COUPLINGS:
            raise StructureError(f"unknown coupling {self.coupling!r}")
        if self.coupling.startswith("distributed") and not self.structure.is_distributed:
            raise StructureError("distributed coupling needs a distributed structure")
        n_raw = self.raw_size
        if self.kind == "bernoulli":
            pr = np.broadcast_to(np.asarray(self.probs if self.probs is not None else 0.5,
                                            dtype=float), (n_raw,)).copy()
            if np.any(pr < 0) or np.any(pr > 1):
                raise StructureError("probabilities must lie in [0, 1]")
            if not np.any(pr > 0):
                raise StructureError("at least one probability must be positive")
            object.__setattr__(self, "probs", tuple(float(x) for x in pr))
        if self.kind == "single":
            if self.seeds is None:
                sd = tuple(range(self.structure.m)) if self.structure.is_distributed \
                    else tuple(range(n_raw))
            else:
                sd = tuple(sorted(set(int(s) for s in self.seeds)))
            if not sd or min(sd) < 0 or max(sd) >= n_raw:
                raise StructureError("seed coordinates out of range")
            object.__setattr__(self, "seeds", sd)
        # per-target list of sources, used by the vectorized closure
        impl = self.structure.implications(self.coupling)
        src = np.array([s for s, _ in impl], dtype=np.intp)
        dst = np.array([t for _, t in impl], dtype=np.intp)
        object.__setattr__(self, "_impl", (src, dst))

    @property
    def size(self) -> int:
        return self.structure.size

    @property
    def raw_size(self) -> int:
        # tied closures only draw agent bits
        return self.structure.m if self.coupling == "distributed_tied" else self.structure.size

    def _raw(self, rng: np.random.Generator) -> np.ndarray:
        n = self.raw_size
        if self.kind == "full":
            return np.ones(n, dtype=np.int8)
        if self.kind == "single":
            out = np.zeros(n, dtype=np.int8)
            out[self.seeds[int(rng.integers(len(self.seeds)))]] = 1
            return out
        pr = np.asarray(self.probs)
        for _ in range(MAX_RESAMPLES):
            out = (rng.random(n) < pr).astype(np.int8)
            if out.any():
                return out
        raise ActivationError(f"no nonzero pattern after {MAX_RESAMPLES} draws")

    def close(self, raw: np.ndarray) -> np.ndarray:
        """Apply the coupling closure to a raw draw."""
        if self.coupling == "distributed_tied":
            full = np.zeros(self.size, dtype=np.int8)
            full[: self.structure.m] = raw
            raw = full
        else:
            raw = np.array(raw, dtype=np.int8)
        src, dst = self._impl
        if src.size:
            np.maximum.at(raw, dst, raw[src])
        return raw

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.close(self._raw(rng))

    def marginals(self) -> np.ndarray:
        """Exact per-coordinate activation probabilities after closure."""
        n, size = self.raw_size, self.size
        sources = [{c} if c < n else set() for c in range(size)]
        src, dst = self._impl
        for s, t in zip(src, dst):
            if s < n:
                sources[t].add(int(s))
        if self.kind == "full":
            return np.array([1.0 if s else 0.0 for s in sources])
        if self.kind == "single":
            seeds = set(self.seeds)
            return np.array([len(s & seeds) / len(seeds) for s in sources])
        pr = np.asarray(self.probs)
        p_nonzero = 1.0 - np.prod(1.0 - pr)
        return np.array([(1.0 - np.prod(1.0 - pr[sorted(s)])) / p_nonzero if s else 0.0
                         for s in sources])


@dataclass
class ValidationReport:
    marginals: np.ndarray
    marginals_positive: bool
    closure_matches: bool
    expected_active_fraction: float
    problems: list

    @property
    def valid(self) -> bool:
        return not self.problems


def validate(s: ActivationSchedule, algorithm: Optional[str] = None) -> ValidationReport:
    """Check marginal positivity and that the closure suits ``algorithm``.

    Every marginal is required to be positive, including the ones the
    convergence results leave free.
    """
    marg = s.marginals()
    problems = []
    positive = bool(np.all(marg > 0))
    if not positive:
        zero = [int(i) for i in np.flatnonzero(marg <= 0)]
        problems.append(f"coordinates {zero} are never activated")
    matches = True
    if algorithm is not None:
        if algorithm not in REQUIRED_COUPLING:
            raise StructureError(f"unknown algorithm {algorithm!r}")
        need = REQUIRED_COUPLING[algorithm]
        if s.kind == "full":
            matches = True
        elif need == "distributed":
            matches = s.coupling in ("distributed", "distributed_tied")
        else:
            matches = s.coupling == need
        if not matches:
            problems.append(f"{algorithm} needs closure {need!r}, schedule uses {s.coupling!r}")
    return ValidationReport(marg, positive, matches, float(marg.mean()), problems)


def check_closure(pattern: np.ndarray, structure: Structure, coupling: str) -> None:
    """Raise ``ClosureError`` if ``pattern`` breaks the coupling implications."""
    pattern = np.asarray(pattern)
    if pattern.shape != (structure.size,):
        raise ClosureError(f"pattern length {pattern.size} != {structure.size}")
    if not pattern.any():
        raise ClosureError("the zero pattern is not allowed")
    for s, t in structure.implications(coupling):
        if pattern[s] and not pattern[t]:
            raise ClosureError(f"coordinate {s} is active but {t} is not")
