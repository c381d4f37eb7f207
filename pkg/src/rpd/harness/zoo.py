"""Problem zoo: deterministic instance generation and metric selection.

Every family draws its data from ``params.data_seed`` only, so a spec
always maps to the same instance. Metrics marked ``"auto"`` are chosen as
follows:

* primal metric ``W_j = tau_j Id`` with ``tau_j`` the cocoercivity constant
  of the smooth term (1 if there is none), so that ``mu = 1``;
* primal-dual problems: a uniform dual metric ``U = rho Id`` with ``rho`` the
  largest value meeting the algorithm's condition with a 10% margin;
* distributed problems: ``W_i`` is a tenth of the rule above,
  ``U_i = rho_i Id`` with ``||U_i^{1/2} M_i W_i^{1/2}||^2 = 0.4`` and a
  uniform edge weight ``theta`` chosen as the largest value meeting the
  condition with a 10% margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..distributed import DistProblem, Hypergraph, check_connectivity, chi
from ..distributed import effective_constants as dist_constants
from ..exceptions import SpecError, StructureError
from ..linalg import BlockOperatorMatrix, DiagonalMetric, scaled_norm
from ..operators import MonotoneOp, ProxFn, SmoothFn
from ..pd_engine import PDProblem, alpha_hat, theta_alpha
from .spec import ProblemSpec

# condition margin: 2*theta >= MARGIN (alg1 family) or min{...} >= MARGIN/2 (alg2 family)
MARGIN = 1.1
# share of the unit budget given to the agent coupling term in distributed metrics
AGENT_COUPLING_SHARE = 0.4
# distributed primal steps are this fraction of the cocoercivity constant; smaller
# steps leave room for a larger edge weight theta, which drives consensus
DIST_PRIMAL_SHARE = 0.1
_BISECT_STEPS = 200


@dataclass
class Instance:
    """Built problem plus the raw data the reference solvers need."""

    family: str
    problem: object
    data: dict = field(default_factory=dict)

    @property
    def is_distributed(self) -> bool:
        return isinstance(self.problem, DistProblem)


# ---------------------------------------------------------------- data

def lasso_data(n_samples: int, n_features: int, data_seed: int, sparsity: int = 5,
               noise: float = 0.01):
    rng = np.random.default_rng(data_seed)
    A = rng.standard_normal((n_samples, n_features)) / math.sqrt(n_samples)
    x_true = np.zeros(n_features)
    idx = rng.choice(n_features, size=min(sparsity, n_features), replace=False)
    x_true[idx] = rng.standard_normal(idx.size)
    b = A @ x_true + noise * rng.standard_normal(n_samples)
    return A, b


def tv1d_data(d: int, data_seed: int, noise: float = 0.1):
    rng = np.random.default_rng(data_seed)
    cuts = np.sort(rng.choice(np.arange(1, d), size=min(3, d - 1), replace=False))
    levels = rng.standard_normal(cuts.size + 1)
    clean = np.repeat(levels, np.diff(np.concatenate([[0], cuts, [d]])))
    return clean + noise * rng.standard_normal(d)


def difference_matrix(d: int) -> np.ndarray:
    """``(d-1) x d`` forward first-difference operator."""
    D = np.zeros((d - 1, d))
    i = np.arange(d - 1)
    D[i, i] = -1.0
    D[i, i + 1] = 1.0
    return D


def ridge_data(m: int, d: int, n_per_agent: int, data_seed: int, noise: float = 0.1):
    rng = np.random.default_rng(data_seed)
    x_true = rng.standard_normal(d)
    Ms, bs = [], []
    for _ in range(m):
        Mi = rng.standard_normal((n_per_agent, d)) / math.sqrt(n_per_agent)
        Ms.append(Mi)
        bs.append(Mi @ x_true + noise * rng.standard_normal(n_per_agent))
    return Ms, bs


def _graph(spec_graph, m: int) -> Hypergraph:
    g = Hypergraph.ring(m) if spec_graph == "ring" else Hypergraph(m, spec_graph)
    if not check_connectivity(g):
        raise SpecError("the hypergraph must cover every agent and be connected")
    return g


def _prox_from(doc: dict, dim: int) -> ProxFn:
    k = doc["kind"]
    try:
        if k == "l1":
            return ProxFn.l1(dim, doc.get("tau", 1.0))
        if k == "sq_distance":
            c = doc.get("center", np.zeros(dim))
            f = ProxFn.sq_distance(c, doc.get("tau", 1.0))
        elif k == "box":
            f = ProxFn.box(doc.get("lo", -np.inf), doc.get("hi", np.inf), dim)
        elif k == "zero":
            return ProxFn.zero(dim)
        else:
            f = ProxFn.point(doc["center"])
    except (KeyError, StructureError) as exc:
        raise SpecError(f"bad function spec {doc}: {exc}") from exc
    if f.dim != dim:
        raise SpecError(f"function of dimension {f.dim} where {dim} is needed")
    return f


def _smooth_from(doc, dim: int) -> SmoothFn:
    if doc is None:
        return SmoothFn.zero(dim)
    try:
        s = SmoothFn.quadratic(doc["M"], doc.get("b"), doc.get("weight", 1.0), doc.get("c"))
    except StructureError as exc:
        raise SpecError(f"bad smooth term: {exc}") from exc
    if s.dim != dim:
        raise SpecError(f"smooth term of dimension {s.dim} where {dim} is needed")
    return s


# ---------------------------------------------------------------- metrics

def _primal_taus(smooth: list, setting) -> list:
    if setting != "auto":
        return [float(setting)] * len(smooth)
    return [s.cocoercivity if math.isfinite(s.cocoercivity) else 1.0 for s in smooth]


def _bisect_largest(ok: Callable[[float], bool], lo: float = 1e-12, hi: float = 1e12) -> float:
    """Largest value in ``[lo, hi]`` with ``ok`` true, assuming ``ok`` is monotone."""
    if not ok(lo):
        raise SpecError("no admissible metric value: the step-size condition cannot be met, "
                        "set the metrics explicitly")
    if ok(hi):
        return hi
    a, b = math.log(lo), math.log(hi)
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (a + b)
        if ok(math.exp(mid)):
            a = mid
        else:
            b = mid
        if b - a < 1e-12:
            break
    return math.exp(a)


def _alg1_ok(norm: float, mu: float, nu: float) -> bool:
    if norm * norm > 1.0 / MARGIN:
        return False
    ah = alpha_hat(norm, mu, nu)
    return 2.0 * theta_alpha(norm, mu, nu, ah if ah is not None else 1.0) >= MARGIN


def _alg2_ok(norm_sq: float, mu: float, nu: float) -> bool:
    if norm_sq > 1.0 / MARGIN:
        return False
    return min(mu, nu * (1.0 - norm_sq)) >= MARGIN / 2.0


def pd_metrics(L: BlockOperatorMatrix, C: list, Dinv: list, algorithm: str, metrics: dict):
    """Resolve primal and dual metrics for a primal-dual problem."""
    taus = _primal_taus(C, metrics["primal"])
    W = DiagonalMetric.scalars(taus, L.col_dims)
    if metrics["dual"] != "auto":
        return W, DiagonalMetric.scalar(metrics["dual"], L.row_dims)
    ones = DiagonalMetric.scalar(1.0, L.row_dims)
    n1 = scaled_norm(L, W, ones)
    mu = min(c.cocoercivity / t for c, t in zip(C, taus))
    nut = [x.cocoercivity for x in Dinv]

    def ok(rho):
        norm = math.sqrt(rho) * n1
        nu = min(v / rho for v in nut)
        if algorithm == "alg2":
            return _alg2_ok(norm * norm, mu, nu)
        return _alg1_ok(norm, mu, nu)

    return W, DiagonalMetric.scalar(_bisect_largest(ok), L.row_dims)


def dist_metrics(graph: Hypergraph, d: int, M: list, C: list, B: list, Dinv: list,
                 algorithm: str, metrics: dict):
    """Resolve ``W``, ``U`` and the uniform edge weight for a distributed problem."""
    m = graph.m
    taus = _primal_taus(C, metrics["primal"])
    if metrics["primal"] == "auto":
        taus = [DIST_PRIMAL_SHARE * t for t in taus]
    W = DiagonalMetric.scalars(taus, [d] * m)
    gd = [Mi.shape[0] for Mi in M]
    if metrics["dual"] == "auto":
        rhos = [AGENT_COUPLING_SHARE / (t * np.linalg.norm(Mi, 2) ** 2)
                for t, Mi in zip(taus, M)]
        U = DiagonalMetric.scalars(rhos, gd)
    else:
        U = DiagonalMetric.scalar(metrics["dual"], gd)
    if metrics["theta"] != "auto":
        return W, U, float(metrics["theta"])
    reduced = algorithm == "dist_pairwise"
    A0 = [MonotoneOp.zero(d)] * m

    def ok(theta):
        prob = DistProblem(graph, d, A0, B, M, W, U, theta, C, Dinv)
        c = chi(prob, drop_coupling=reduced)
        mu, nu = dist_constants(prob)
        if algorithm == "dist2":
            return _alg2_ok(c, mu, nu)
        return _alg1_ok(math.sqrt(c), mu, nu)

    return W, U, _bisect_largest(ok)


# ---------------------------------------------------------------- builders

def build_instance(spec: ProblemSpec) -> Instance:
    """Instantiate the problem described by ``spec`` with resolved metrics."""
    fam, P, algo, met = spec.family, spec.params, spec.algorithm, spec["metrics"]
    try:
        if fam == "lasso":
            return _build_lasso(P, algo, met)
        if fam == "tv1d":
            return _build_tv1d(P, algo, met)
        if fam == "box_ls":
            return _build_box(P, algo, met)
        if fam == "ridge_consensus":
            return _build_ridge(P, algo, met)
        if fam == "custom-pd":
            return _build_custom_pd(P, algo, met)
        return _build_custom_dist(P, algo, met)
    except StructureError as exc:
        raise SpecError(str(exc)) from exc


def build_problem(spec: ProblemSpec):
    """``PDProblem`` or ``DistProblem`` for ``spec``."""
    return build_instance(spec).problem


def _pd(L, f, g, h, algo, met) -> PDProblem:
    lconj = [SmoothFn.zero(d) for d in L.row_dims]
    if algo == "alg2" and any(fj.kind != "zero" for fj in f):
        raise SpecError("alg2 needs every f_j = 0")
    W, U = pd_metrics(L, h, lconj, algo, met)
    return PDProblem.convex(L, W, U, f, g, h, lconj)


def _build_lasso(P, algo, met) -> Instance:
    n, nb = P["n_features"], P["n_blocks"]
    if nb > n:
        raise SpecError("n_blocks cannot exceed n_features")
    A, b = lasso_data(P["n_samples"], n, P["data_seed"], P["sparsity"], P["noise"])
    if nb == 1:
        L = BlockOperatorMatrix({(0, 0): np.eye(n)}, [n], [n])
        prob = _pd(L, [ProxFn.l1(n, P["tau"])], [ProxFn.zero(n)],
                   [SmoothFn.quadratic(A, b)], algo, met)
    else:
        chunks = np.array_split(np.arange(n), nb)
        L = BlockOperatorMatrix({(0, j): A[:, c] for j, c in enumerate(chunks)},
                                [A.shape[0]], [c.size for c in chunks])
        prob = _pd(L, [ProxFn.l1(c.size, P["tau"]) for c in chunks],
                   [ProxFn.sq_distance(b, 1.0)], [SmoothFn.zero(c.size) for c in chunks],
                   algo, met)
    return Instance("lasso", prob, {"A": A, "b": b, "tau": P["tau"], "n_blocks": nb})


def _build_tv1d(P, algo, met) -> Instance:
    d = P["d"]
    y = tv1d_data(d, P["data_seed"], P["noise"])
    D = difference_matrix(d)
    L = BlockOperatorMatrix({(0, 0): D}, [d - 1], [d])
    prob = _pd(L, [ProxFn.zero(d)], [ProxFn.l1(d - 1, P["tau"])],
               [SmoothFn.quadratic(np.eye(d), y)], algo, met)
    return Instance("tv1d", prob, {"y": y, "D": D, "tau": P["tau"]})


def _build_box(P, algo, met) -> Instance:
    n = P["n_features"]
    if not P["lo"] <= P["hi"]:
        raise SpecError("box_ls needs lo <= hi")
    A, b = lasso_data(P["n_samples"], n, P["data_seed"])
    L = BlockOperatorMatrix({(0, 0): np.eye(n)}, [n], [n])
    prob = _pd(L, [ProxFn.box(P["lo"], P["hi"], n)], [ProxFn.zero(n)],
               [SmoothFn.quadratic(A, b)], algo, met)
    return Instance("box_ls", prob, {"A": A, "b": b, "lo": P["lo"], "hi": P["hi"]})


def _dist(graph, d, f, g, h, M, algo, met) -> DistProblem:
    m = graph.m
    lconj = [SmoothFn.zero(Mi.shape[0]) for Mi in M]
    B = [MonotoneOp.subdiff(gi) for gi in g]
    if algo == "dist2" and any(fi.kind != "zero" for fi in f):
        raise SpecError("dist2 needs every f_i = 0")
    if algo == "dist_pairwise":
        if any(k != 2 for k in graph.kappa):
            raise SpecError("dist_pairwise needs two-member edges")
        if any(gi.kind != "zero" for gi in g):
            raise SpecError("dist_pairwise needs every g_i = 0")
    W, U, theta = dist_metrics(graph, d, M, h, B, lconj, algo, met)
    return DistProblem.convex(graph, d, f, g, M, W, U, [theta] * graph.r, h, lconj)


def _build_ridge(P, algo, met) -> Instance:
    m, d = P["m"], P["d"]
    graph = _graph(P["graph"], m)
    Ms, bs = ridge_data(m, d, P["n_per_agent"], P["data_seed"], P["noise"])
    reg = P["reg"]
    f = [ProxFn.zero(d) for _ in range(m)]
    g = [ProxFn.sq_distance(bi, 1.0) for bi in bs]
    h = [SmoothFn.sq_norm(d, reg / m) for _ in range(m)]
    prob = _dist(graph, d, f, g, h, Ms, algo, met)
    return Instance("ridge_consensus", prob, {"M": Ms, "b": bs, "reg": reg})


def _build_custom_pd(P, algo, met) -> Instance:
    pd_, qd = P["primal_dims"], P["dual_dims"]
    blocks = {}
    for e in P["L"]:
        key = (e["row"], e["col"])
        if key in blocks:
            raise SpecError(f"duplicate L block {key}")
        blocks[key] = np.array(e["matrix"], dtype=float)
    L = BlockOperatorMatrix(blocks, qd, pd_)
    if len(P["f"]) != len(pd_) or len(P["g"]) != len(qd):
        raise SpecError("need one f per primal block and one g per dual block")
    hs = P.get("h") or [None] * len(pd_)
    if len(hs) != len(pd_):
        raise SpecError("need one h entry per primal block")
    f = [_prox_from(doc, n) for doc, n in zip(P["f"], pd_)]
    g = [_prox_from(doc, n) for doc, n in zip(P["g"], qd)]
    h = [_smooth_from(doc, n) for doc, n in zip(hs, pd_)]
    prob = _pd(L, f, g, h, algo, met)
    return Instance("custom-pd", prob, {"reference": P.get("reference")})


def _build_custom_dist(P, algo, met) -> Instance:
    m, d = P["m"], P["d"]
    graph = _graph(P["graph"], m)
    if not (len(P["M"]) == len(P["f"]) == len(P["g"]) == m):
        raise SpecError("need one M, f and g per agent")
    Ms = [np.array(Mi, dtype=float) for Mi in P["M"]]
    hs = P.get("h") or [None] * m
    if len(hs) != m:
        raise SpecError("need one h entry per agent")
    f = [_prox_from(doc, d) for doc in P["f"]]
    g = [_prox_from(doc, Mi.shape[0]) for doc, Mi in zip(P["g"], Ms)]
    h = [_smooth_from(doc, d) for doc in hs]
    prob = _dist(graph, d, f, g, h, Ms, algo, met)
    return Instance("custom-dist", prob, {"reference": P.get("reference")})
