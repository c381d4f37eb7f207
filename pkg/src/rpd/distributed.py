"""Asynchronous distributed primal-dual algorithms over hypergraphs.

``m`` agents hold copies ``x_i`` of a common variable in ``R^d``; each
hyperedge ``V_l`` asks its members to agree. Agreement is enforced through
the normal cone of the consensus subspace of each edge, weighted by
``theta_l``. The steps below are the agent-level specializations of the
primal-dual iterations in ``pd_engine`` applied to the lifted problem built
by ``lift_problem``.

Activation patterns have ``2m + r`` bits ordered as agents, agent duals and
edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .activation import ActivationSchedule, Structure, validate
from .errors import ErrorStreams
from .exceptions import (ClosureError, ConditionError, InapplicableError, StructureError)
from .linalg import BlockOperatorMatrix, BlockVector, DiagonalMetric
from .operators import MonotoneOp, ProxFn, SmoothFn, dual_resolvent, prox_metric, resolvent
from .pd_engine import (ConditionReport, PDProblem, PDState, RunResult, _alg1_report,
                        _alg2_report, _error_norm, converged, split_seed)

DIST_ALGORITHMS = ("dist1", "dist2", "dist_opt", "dist_pairwise")

# tolerance on |sum_j v_{m+l,j}| accepted as zero, relative to the dual scale
SUM_ZERO_TOL = 1e-9


class Hypergraph:
    """Agents ``0..m-1`` and hyperedges given as member lists.

    Members of each edge are sorted increasingly; ``member(l, j)`` is the
    ``j``-th smallest agent of edge ``l`` and ``incidence[i]`` lists the
    ``(l, j)`` pairs with ``member(l, j) == i``.
    """

    def __init__(self, m: int, edges: Sequence[Sequence[int]]):
        self.m = int(m)
        if self.m < 1:
            raise StructureError("need at least one agent")
        es = []
        for e in edges:
            s = sorted(int(i) for i in e)
            if not s:
                raise StructureError("hyperedges must be nonempty")
            if len(set(s)) != len(s):
                raise StructureError(f"edge {s} repeats an agent")
            if s[0] < 0 or s[-1] >= self.m:
                raise StructureError(f"edge {s} references an agent outside 0..{self.m - 1}")
            es.append(tuple(s))
        if not es:
            raise StructureError("need at least one hyperedge")
        self.edges = tuple(es)
        self.members = tuple(np.array(e, dtype=np.intp) for e in es)
        self.kappa = tuple(len(e) for e in es)
        inc = [[] for _ in range(self.m)]
        for l, e in enumerate(es):
            for j, i in enumerate(e):
                inc[i].append((l, j))
        self.incidence = tuple(tuple(x) for x in inc)
        self.edges_of = tuple(tuple(l for l, _ in x) for x in inc)
        # all member pairs sharing an edge, for the disagreement metric
        pa, pb = [], []
        for e in es:
            for a in range(len(e)):
                for b in range(a + 1, len(e)):
                    pa.append(e[a])
                    pb.append(e[b])
        self.pairs = (np.array(pa, dtype=np.intp), np.array(pb, dtype=np.intp))

    @property
    def r(self) -> int:
        return len(self.edges)

    def member(self, l: int, j: int) -> int:
        return self.edges[l][j]

    @classmethod
    def ring(cls, m: int) -> "Hypergraph":
        return cls(m, [(i, (i + 1) % m) for i in range(m)])

    def __repr__(self):
        return f"Hypergraph(m={self.m}, edges={list(self.edges)})"


def check_connectivity(h: Hypergraph) -> bool:
    """True iff every agent is covered and the agent/edge incidence graph is connected."""
    if any(not inc for inc in h.incidence):
        return False
    rows, cols = [], []
    for l, e in enumerate(h.edges):
        for i in e:
            rows.append(i)
            cols.append(h.m + l)
    n = h.m + h.r
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, _ = connected_components(g, directed=False)
    return ncomp == 1


class DistProblem:
    """Per-agent operators, metrics and edge weights.

    Parameters
    ----------
    graph : Hypergraph
    d : int
        Dimension of every agent variable.
    A, B : sequence of MonotoneOp
        ``A_i`` on ``R^d`` and ``B_i`` on the range of ``M_i``.
    M : sequence of 2-D arrays
        Nonzero ``M_i`` of shape ``(g_i, d)``.
    W, U : DiagonalMetric
        ``m`` blocks each, of sizes ``d`` and ``g_i``.
    theta : sequence of float
        Positive edge weights.
    C, Dinv : sequence of SmoothFn, optional
    mu_tilde, nu_tilde : sequence of float, optional
    """

    def __init__(self, graph: Hypergraph, d: int, A, B, M, W: DiagonalMetric,
                 U: DiagonalMetric, theta, C=None, Dinv=None, mu_tilde=None, nu_tilde=None):
        self.graph = graph
        self.d = int(d)
        m = graph.m
        self.M = []
        for Mi in M:
            Mi = np.array(Mi, dtype=float, ndmin=2)
            if Mi.shape[1] != self.d:
                raise StructureError("every M_i must have d columns")
            if not np.any(Mi):
                raise StructureError("every M_i must be nonzero")
            Mi.setflags(write=False)
            self.M.append(Mi)
        self.M = tuple(self.M)
        self.MT = tuple(Mi.T for Mi in self.M)
        self.gdims = tuple(Mi.shape[0] for Mi in self.M)
        self.A = tuple(A)
        self.B = tuple(B)
        self.C = tuple(C) if C is not None else tuple(SmoothFn.zero(self.d) for _ in range(m))
        self.Dinv = (tuple(Dinv) if Dinv is not None
                     else tuple(SmoothFn.zero(g) for g in self.gdims))
        for name, ops in (("A", self.A), ("B", self.B), ("C", self.C), ("Dinv", self.Dinv),
                          ("M", self.M)):
            if len(ops) != m:
                raise StructureError(f"{name} needs one entry per agent")
        for i in range(m):
            if self.A[i].dim != self.d or self.C[i].dim != self.d:
                raise StructureError(f"agent {i}: primal operators must act on R^{self.d}")
            if self.B[i].dim != self.gdims[i] or self.Dinv[i].dim != self.gdims[i]:
                raise StructureError(f"agent {i}: dual operators do not match M_i")
        if tuple(W.dims) != (self.d,) * m or tuple(U.dims) != self.gdims:
            raise StructureError("metric dimensions do not match the agents")
        self.W, self.U = W, U
        th = np.asarray(theta, dtype=float).reshape(-1)
        if th.size == 1 and graph.r > 1:
            th = np.full(graph.r, th[0])
        if th.size != graph.r or not np.all(th > 0):
            raise StructureError("need one positive weight per edge")
        self.theta = th
        self.theta_bar = np.array([sum(th[l] for l in graph.edges_of[i]) for i in range(m)])
        mt = [c.cocoercivity for c in self.C] if mu_tilde is None else list(mu_tilde)
        nt = [x.cocoercivity for x in self.Dinv] if nu_tilde is None else list(nu_tilde)
        if len(mt) != m or len(nt) != m or not all(v > 0 for v in list(mt) + list(nt)):
            raise StructureError("need one positive constant per agent")
        self.mu_tilde = tuple(float(v) for v in mt)
        self.nu_tilde = tuple(float(v) for v in nt)
        self.f = self.h = self.g = self.lconj = None
        self.structure = Structure.distributed(m, graph.edges)
        src, dst = [], []
        for s, t in self.structure.implications("distributed"):
            src.append(s)
            dst.append(t)
        self._impl = (np.array(src, dtype=np.intp), np.array(dst, dtype=np.intp))

    @classmethod
    def convex(cls, graph: Hypergraph, d: int, f, g, M, W, U, theta, h=None, lconj=None):
        """``min_x sum_i f_i(x) + h_i(x) + (g_i [] l_i)(M_i x)``; ``lconj`` holds ``l_i^*``."""
        prob = cls(graph, d, [MonotoneOp.subdiff(fi) for fi in f],
                   [MonotoneOp.subdiff(gi) for gi in g], M, W, U, theta, h, lconj)
        prob.f, prob.g = tuple(f), tuple(g)
        prob.h, prob.lconj = prob.C, prob.Dinv
        return prob

    @property
    def m(self) -> int:
        return self.graph.m

    @property
    def r(self) -> int:
        return self.graph.r

    @property
    def is_convex(self) -> bool:
        return self.f is not None

    def with_theta(self, theta) -> "DistProblem":
        """Copy of the problem with new edge weights."""
        out = DistProblem(self.graph, self.d, self.A, self.B, self.M, self.W, self.U, theta,
                          self.C, self.Dinv, self.mu_tilde, self.nu_tilde)
        out.f, out.g, out.h, out.lconj = self.f, self.g, self.h, self.lconj
        return out

    def objective(self, z) -> float:
        """Objective at a common point ``z``; ``nan`` without convex data or with smooth ``l_i^*``."""
        if not self.is_convex or not all(x.is_zero for x in self.lconj):
            return math.nan
        z = np.asarray(z, dtype=float)
        return float(sum(self.f[i].value(z) + self.h[i].value(z) + self.g[i].value(self.M[i] @ z)
                         for i in range(self.m)))


@dataclass
class DistState:
    """Agent variables, agent duals, edge duals and cached edge averages.

    ``x`` and ``xbar`` are arrays of shapes ``(m, d)`` and ``(r, d)``;
    ``v[i]`` is the dual of ``M_i`` and ``ve[l]`` has shape ``(kappa_l, d)``.
    """

    x: np.ndarray
    v: list
    ve: list
    xbar: np.ndarray

    @classmethod
    def initial(cls, prob: DistProblem, x0=None, v0=None, ve0=None) -> "DistState":
        """Start point with ``xbar`` set to the edge means of ``x0``; zeros by default."""
        m, d = prob.m, prob.d
        x = np.zeros((m, d)) if x0 is None else np.array(x0, dtype=float).reshape(m, d)
        v = ([np.zeros(g) for g in prob.gdims] if v0 is None
             else [np.array(b, dtype=float).reshape(-1) for b in v0])
        ve = ([np.zeros((k, d)) for k in prob.graph.kappa] if ve0 is None
              else [np.array(b, dtype=float).reshape(k, d)
                    for b, k in zip(ve0, prob.graph.kappa)])
        xbar = np.array([x[mem].sum(axis=0) / len(mem) for mem in prob.graph.members])
        return cls(x, v, ve, xbar)

    def copy(self) -> "DistState":
        return DistState(self.x.copy(), [b.copy() for b in self.v], [b.copy() for b in self.ve],
                         self.xbar.copy())

    def equal(self, other: "DistState") -> bool:
        return (np.array_equal(self.x, other.x) and np.array_equal(self.xbar, other.xbar)
                and all(np.array_equal(a, b) for a, b in zip(self.v, other.v))
                and all(np.array_equal(a, b) for a, b in zip(self.ve, other.ve)))

    def max_deviation(self, other: "DistState") -> float:
        """Largest absolute entrywise difference over all variables."""
        parts = [np.abs(self.x - other.x).max(), np.abs(self.xbar - other.xbar).max()]
        parts += [np.abs(a - b).max() for a, b in zip(self.v, other.v)]
        parts += [np.abs(a - b).max() for a, b in zip(self.ve, other.ve)]
        return float(max(parts))

    def edge_sums(self) -> np.ndarray:
        """``sum_j v_{m+l,j}`` for every edge, shape ``(r, d)``."""
        return np.array([b.sum(axis=0) for b in self.ve])


def consensus_disagreement(prob: DistProblem, x: np.ndarray) -> float:
    """Largest distance between two members of a common edge."""
    pa, pb = prob.graph.pairs
    if len(pa) == 0:
        return 0.0
    diff = x[pa] - x[pb]
    return float(np.sqrt(np.einsum("ij,ij->i", diff, diff).max()))


# ---------------------------------------------------------------- conditions

def _agent_coupling_sq(prob: DistProblem, i: int) -> float:
    S = np.sqrt(prob.U[i])[:, None] * prob.M[i] * np.sqrt(prob.W[i])[None, :]
    return float(np.linalg.norm(S, 2) ** 2)


def chi(prob: DistProblem, drop_coupling: bool = False) -> float:
    """``max_i ||U_i^{1/2} M_i W_i^{1/2}||^2 + theta_bar_i ||W_i||``.

    With ``drop_coupling`` the first term is omitted, which is admissible
    when every ``B_i`` and ``D_i^{-1}`` is zero since ``M_i`` may then be
    scaled down at will.
    """
    wn = prob.W.block_norms()
    vals = [(0.0 if drop_coupling else _agent_coupling_sq(prob, i)) + prob.theta_bar[i] * wn[i]
            for i in range(prob.m)]
    return float(max(vals))


def effective_constants(prob: DistProblem) -> tuple:
    wn, un = prob.W.block_norms(), prob.U.block_norms()
    mu = min(mt / w for mt, w in zip(prob.mu_tilde, wn))
    nu = min(nt / u for nt, u in zip(prob.nu_tilde, un))
    return float(mu), float(nu)


def _coupling_free(prob: DistProblem) -> bool:
    return all(b.is_zero for b in prob.B) and all(x.is_zero for x in prob.Dinv)


def check_dist1(prob: DistProblem, alpha: Optional[float] = None,
                reduced: bool = False) -> ConditionReport:
    """Condition for ``step_dist1`` and ``step_dist_opt``: ``theta_alpha`` with norm ``sqrt(chi)``.

    ``reduced`` drops the ``M_i`` term from ``chi`` (only valid when every
    ``B_i`` and ``D_i^{-1}`` is zero).
    """
    if reduced and not _coupling_free(prob):
        raise InapplicableError("the reduced check needs B_i = 0 and D_i^{-1} = 0")
    c = chi(prob, drop_coupling=reduced)
    mu, nu = effective_constants(prob)
    return _alg1_report("dist1", math.sqrt(c), math.sqrt(c), mu, nu, alpha, bound_sq=c)


def check_dist2(prob: DistProblem) -> ConditionReport:
    """``min{mu, nu (1 - chi)} > 1/2`` for ``step_dist2``."""
    if not all(a.is_zero for a in prob.A):
        raise InapplicableError("step_dist2 needs every A_i = 0")
    c = chi(prob)
    mu, nu = effective_constants(prob)
    return _alg2_report("dist2", c, c, mu, nu)


# ---------------------------------------------------------------- steps

def _check_pattern(prob: DistProblem, pattern, check: bool) -> np.ndarray:
    eps = np.asarray(pattern)
    n = 2 * prob.m + prob.r
    if eps.shape != (n,):
        raise ClosureError(f"pattern must have {n} entries")
    if check:
        if not eps.any():
            raise ClosureError("the zero pattern is not allowed")
        src, dst = prob._impl
        bad = np.flatnonzero((eps[src] != 0) & (eps[dst] == 0))
        if bad.size:
            raise ClosureError(f"coordinate {src[bad[0]]} is active but {dst[bad[0]]} is not")
    return eps


def _check_sum_zero(prob: DistProblem, state: DistState):
    scale = 1.0 + max(float(np.abs(b).max()) for b in state.ve)
    worst = float(np.abs(state.edge_sums()).max())
    if worst > SUM_ZERO_TOL * scale:
        raise StructureError(f"edge duals do not sum to zero (max |sum| = {worst:.3e})")


def _err(errors, ch, i):
    if not errors:
        return None
    e = errors.get(ch)
    return None if e is None else e[i]


def _agent_dual(prob: DistProblem, i: int, vi, Mz, errors):
    # J_{U_i B_i^{-1}}(v_i + U_i(M_i z - D_i^{-1} v_i + d_i)) + b_i
    s = Mz
    Di = prob.Dinv[i]
    if not Di.is_zero:
        s = s - Di.grad(vi)
    di = _err(errors, "d", i)
    if di is not None:
        s = s + di
    u = dual_resolvent(prob.B[i], prob.U[i], vi + prob.U[i] * s)
    bi = _err(errors, "b", i)
    return u if bi is None else u + bi


def _forward(prob: DistProblem, i: int, xi, agg, errors):
    # x_i - W_i (agg + C_i x_i + c_i)
    g = agg
    Ci = prob.C[i]
    if not Ci.is_zero:
        g = g + Ci.grad(xi)
    ci = _err(errors, "c", i)
    if ci is not None:
        g = g + ci
    return xi - prob.W[i] * g


def _refresh_xbar(prob: DistProblem, eps_agents, xn, xbar):
    G = prob.graph
    touched = {l for i in np.flatnonzero(eps_agents) for l in G.edges_of[i]}
    xb = xbar.copy()
    for l in touched:
        xb[l] = xn[G.members[l]].sum(axis=0) / G.kappa[l]
    return xb


def step_dist1(prob: DistProblem, state: DistState, pattern, lam: float = 1.0,
               errors: Optional[dict] = None, sum_zero: bool = False,
               check: bool = True) -> DistState:
    """One step of the distributed dual-first iteration.

    Edge pre-phase computes the messages ``w_l``; the agent phase updates
    ``v_i`` and ``x_i``; the edge post-phase relaxes ``v_{m+l}`` with factor
    ``lam/2`` and refreshes ``xbar_l`` when a member moved. In ``sum_zero``
    mode the messages use the simplified form valid when every edge dual
    sums to zero.
    """
    eps = _check_pattern(prob, pattern, check)
    if sum_zero and check:
        _check_sum_zero(prob, state)
    m, G = prob.m, prob.graph
    ea, ed, ee = eps[:m], eps[m:2 * m], eps[2 * m:]
    x, v, ve, xbar = state.x, state.v, state.ve, state.xbar
    w = {}
    for l in np.flatnonzero(ee):
        V, th = ve[l], prob.theta[l]
        X = x[G.members[l]]
        if sum_zero:
            w[l] = 2.0 * th * (X - xbar[l]) + V
        else:
            ubar = V.sum(axis=0) / G.kappa[l] + th * xbar[l]
            w[l] = 2.0 * (th * X - ubar) + V
    vn = list(v)
    u = {}
    for i in np.flatnonzero(ed):
        u[i] = _agent_dual(prob, i, v[i], prob.M[i] @ x[i], errors)
        vn[i] = v[i] + lam * (u[i] - v[i])
    xn = x.copy()
    for i in np.flatnonzero(ea):
        agg = prob.MT[i] @ (2.0 * u[i] - v[i])
        for l, j in G.incidence[i]:
            agg = agg + w[l][j]
        y = resolvent(prob.A[i], prob.W[i], _forward(prob, i, x[i], agg, errors))
        ai = _err(errors, "a", i)
        if ai is not None:
            y = y + ai
        xn[i] = x[i] + lam * (y - x[i])
    ven = list(ve)
    for l in w:
        ven[l] = ve[l] + (lam / 2.0) * (w[l] - ve[l])
    return DistState(xn, vn, ven, _refresh_xbar(prob, ea, xn, xbar))


def step_dist2(prob: DistProblem, state: DistState, pattern, lam: float = 1.0,
               errors: Optional[dict] = None, check: bool = True) -> DistState:
    """One step of the distributed forward-only iteration (every ``A_i = 0``).

    Needs edge duals summing to zero. Channel ``a`` is ignored.
    """
    if not all(a.is_zero for a in prob.A):
        raise InapplicableError("step_dist2 needs every A_i = 0")
    eps = _check_pattern(prob, pattern, check)
    if check:
        _check_sum_zero(prob, state)
    m, G = prob.m, prob.graph
    ea, ed, ee = eps[:m], eps[m:2 * m], eps[2 * m:]
    x, v, ve = state.x, state.v, state.ve
    w, wt = {}, {}
    for i in range(m):
        if not (ed[i] or any(ee[l] for l in G.edges_of[i])):
            continue
        w[i] = _forward(prob, i, x[i], 0.0, errors)
        agg = prob.MT[i] @ v[i]
        for l, j in G.incidence[i]:
            agg = agg + ve[l][j]
        wt[i] = w[i] - prob.W[i] * agg
    vn = list(v)
    u = {}
    for i in np.flatnonzero(ed):
        u[i] = _agent_dual(prob, i, v[i], prob.M[i] @ wt[i], errors)
        vn[i] = v[i] + lam * (u[i] - v[i])
    ven = list(ve)
    ue = {}
    for l in np.flatnonzero(ee):
        th = prob.theta[l]
        Wt = np.array([wt[i] for i in G.edges[l]])
        wbar = (th / G.kappa[l]) * Wt.sum(axis=0)
        ue[l] = ve[l] + th * Wt - wbar
        ven[l] = ve[l] + lam * (ue[l] - ve[l])
    xn = x.copy()
    for i in np.flatnonzero(ea):
        agg = prob.MT[i] @ u[i]
        for l, j in G.incidence[i]:
            agg = agg + ue[l][j]
        xn[i] = x[i] + lam * (w[i] - prob.W[i] * agg - x[i])
    return DistState(xn, vn, ven, _refresh_xbar(prob, ea, xn, state.xbar))


def step_dist_opt(prob: DistProblem, state: DistState, pattern, lam: float = 1.0,
                  errors: Optional[dict] = None, check: bool = True) -> DistState:
    """Distributed proximal iteration for the convex program.

    Proximity operators of ``f_i`` under ``W_i`` and of ``g_i^*`` (through
    the Moreau decomposition) replace the resolvents; edge duals must sum
    to zero.
    """
    if not prob.is_convex:
        raise InapplicableError("step_dist_opt needs convex-program data")
    return step_dist1(prob, state, pattern, lam, errors, sum_zero=True, check=check)


def _check_pairwise(prob: DistProblem, state: DistState):
    if any(k != 2 for k in prob.graph.kappa):
        raise InapplicableError("the pairwise scheme needs every edge to have two members")
    if not prob.is_convex or not _coupling_free(prob):
        raise InapplicableError("the pairwise scheme needs g_i = 0 and l_i = indicator of {0}")
    if any(np.any(b) for b in state.v):
        raise InapplicableError("the pairwise scheme needs zero agent duals")
    for b in state.ve:
        if not np.array_equal(b[1], -b[0]):
            raise InapplicableError("edge duals must be antisymmetric")


def step_dist_pairwise(prob: DistProblem, state: DistState, pattern, lam: float = 1.0,
                       errors: Optional[dict] = None, check: bool = True) -> DistState:
    """Reduced pairwise scheme (graphs with two-member edges, ``g_i = 0``).

    Only the first edge dual is propagated; the second is its negative.
    Agent duals stay zero. The pattern must tie agent duals to agents and
    edges to the max over their members.
    """
    eps = _check_pattern(prob, pattern, check)
    m, G = prob.m, prob.graph
    ea = eps[:m]
    if check:
        _check_pairwise(prob, state)
        eta = np.array([ea[mem].max() for mem in G.members])
        if not (np.array_equal(eps[m:2 * m], ea) and np.array_equal(eps[2 * m:], eta)):
            raise ClosureError("the pairwise scheme needs the tied activation")
    x, ve = state.x, state.ve
    ven = list(ve)
    for l, (i1, i2) in enumerate(G.edges):
        if ea[i1] or ea[i2]:
            a = ve[l][0] + (lam / 2.0) * prob.theta[l] * (x[i1] - x[i2])
            ven[l] = np.array([a, -a])
    xn = x.copy()
    for i in np.flatnonzero(ea):
        Wi = prob.W[i]
        s = 0.0
        for l, j in G.incidence[i]:
            other = G.edges[l][1 - j]
            s = s + (ve[l][j] - prob.theta[l] * x[other])
        g = s
        if not prob.h[i].is_zero:
            g = g + prob.h[i].grad(x[i])
        ci = _err(errors, "c", i)
        if ci is not None:
            g = g + ci
        z = (1.0 - Wi * prob.theta_bar[i]) * x[i] - Wi * g
        y = prox_metric(prob.f[i], Wi, z)
        ai = _err(errors, "a", i)
        if ai is not None:
            y = y + ai
        xn[i] = x[i] + lam * (y - x[i])
    return DistState(xn, list(state.v), ven, _refresh_xbar(prob, ea, xn, state.xbar))


STEPS = {"dist1": step_dist1, "dist2": step_dist2, "dist_opt": step_dist_opt,
         "dist_pairwise": step_dist_pairwise}


# ---------------------------------------------------------------- lifting

def lift_problem(prob: DistProblem) -> PDProblem:
    """Product-space primal-dual problem equivalent to ``prob``.

    ``p = m`` primal blocks, ``q = m + r`` dual blocks: ``L_{i,i} = M_i``,
    ``L_{m+l, member(l,j)}`` selects copy ``j``, ``B_{m+l}`` is the normal
    cone of the consensus subspace, ``D_{m+l}^{-1} = 0`` and
    ``U_{m+l} = theta_l Id``.
    """
    m, r, d, G = prob.m, prob.r, prob.d, prob.graph
    blocks = {}
    for i in range(m):
        blocks[(i, i)] = prob.M[i]
    for l in range(r):
        k = G.kappa[l]
        for j, i in enumerate(G.edges[l]):
            S = np.zeros((k * d, d))
            S[j * d:(j + 1) * d, :] = np.eye(d)
            blocks[(m + l, i)] = S
    row_dims = list(prob.gdims) + [k * d for k in G.kappa]
    L = BlockOperatorMatrix(blocks, row_dims, [d] * m)
    U = DiagonalMetric(tuple(prob.U.diags) +
                       tuple(np.full(k * d, prob.theta[l]) for l, k in enumerate(G.kappa)))
    B = list(prob.B) + [MonotoneOp.consensus(k, d) for k in G.kappa]
    Dinv = list(prob.Dinv) + [SmoothFn.zero(k * d) for k in G.kappa]
    nu = list(prob.nu_tilde) + [math.inf] * r
    return PDProblem(L, prob.W, U, prob.A, B, prob.C, Dinv, prob.mu_tilde, nu)


def lift_state(prob: DistProblem, state: DistState) -> PDState:
    x = BlockVector(list(state.x))
    v = BlockVector(list(state.v) + [b.reshape(-1) for b in state.ve])
    return PDState(x, v)


def lower_state(prob: DistProblem, ps: PDState) -> DistState:
    """Agent-level state from a lifted one; ``xbar`` is recomputed as edge means."""
    m = prob.m
    x = np.array(ps.x.blocks)
    v = [b.copy() for b in ps.v.blocks[:m]]
    ve = [b.reshape(k, prob.d).copy() for b, k in zip(ps.v.blocks[m:], prob.graph.kappa)]
    xbar = np.array([x[mem].sum(axis=0) / len(mem) for mem in prob.graph.members])
    return DistState(x, v, ve, xbar)


# ---------------------------------------------------------------- runner

def check(prob: DistProblem, algorithm: str, alpha: Optional[float] = None) -> ConditionReport:
    if algorithm in ("dist1", "dist_opt"):
        rep = check_dist1(prob, alpha)
    elif algorithm == "dist_pairwise":
        rep = check_dist1(prob, alpha, reduced=True)
    elif algorithm == "dist2":
        rep = check_dist2(prob)
    else:
        raise StructureError(f"unknown algorithm {algorithm!r}")
    rep.algorithm = algorithm
    return rep


def _dual_change(a: DistState, b: DistState) -> float:
    # untouched blocks are shared between consecutive states
    s = 0.0
    for x, y in zip(a.v + a.ve, b.v + b.ve):
        if x is not y:
            s += float(np.sum((x - y) ** 2))
    return math.sqrt(s)


def run_dist(prob: DistProblem, algorithm: str, schedule: ActivationSchedule, seed: int = 0,
             lam: float = 1.0, injectors: Optional[dict] = None, max_iters: int = 1000,
             tol: float = 1e-10, window: int = 10, force: bool = False,
             state0: Optional[DistState] = None, alpha: Optional[float] = None,
             sum_zero: bool = False) -> RunResult:
    """Seeded distributed run; rows follow ``pd_engine.RECORD_COLUMNS``.

    The objective column is evaluated at the average of the agent
    variables. Error channels ``a``, ``c`` act on agents and ``b``, ``d``
    on agent duals; edge duals are error free.
    """
    if algorithm not in DIST_ALGORITHMS:
        raise StructureError(f"unknown algorithm {algorithm!r}")
    if not 0 < lam <= 1:
        raise StructureError("relaxation must lie in (0, 1]")
    if not check_connectivity(prob.graph):
        raise StructureError("the hypergraph must cover every agent and be connected")
    if schedule.structure != prob.structure:
        raise StructureError("schedule structure does not match the problem")
    vr = validate(schedule, algorithm)
    if not vr.closure_matches:
        raise ClosureError("; ".join(vr.problems))
    report = check(prob, algorithm, alpha)
    forced = False
    if not report.verdict:
        if not force:
            raise ConditionError(f"{algorithm} condition fails ({report.reason})", report)
        forced = True
    state = state0.copy() if state0 is not None else DistState.initial(prob)
    if algorithm in ("dist2", "dist_opt") or sum_zero:
        _check_sum_zero(prob, state)
    if algorithm == "dist_pairwise":
        _check_pairwise(prob, state)
    step = STEPS[algorithm]
    kw = {"sum_zero": sum_zero} if algorithm == "dist1" else {}
    act_ss, err_seed = split_seed(seed)
    rng = np.random.default_rng(act_ss)
    streams = ErrorStreams(injectors or {}, err_seed)
    m, d = prob.m, prob.d
    pdims, gdims = (d,) * m, prob.gdims

    def objective(x):
        return prob.objective(x.sum(axis=0) / m)

    rows = [(0, objective(state.x), 0.0, 0.0, consensus_disagreement(prob, state.x), 0, 0, 0.0)]
    cum = 0
    for n in range(max_iters):
        eps = schedule.sample(rng)
        errs = None
        if streams.active:
            errs = {"a": streams.draw("a", n, pdims), "c": streams.draw("c", n, pdims),
                    "b": streams.draw("b", n, gdims), "d": streams.draw("d", n, gdims)}
        new = step(prob, state, eps, lam, errs, check=False, **kw)
        active = int(eps.sum())
        cum += active
        rows.append((n + 1, objective(new.x), float(np.linalg.norm(new.x - state.x)),
                     _dual_change(new, state), consensus_disagreement(prob, new.x), active, cum,
                     _error_norm(errs)))
        state = new
        if converged(rows, window, tol):
            return RunResult(state, rows, "converged", n + 1, forced, report)
    return RunResult(state, rows, "max_iters", max_iters, forced, report)
