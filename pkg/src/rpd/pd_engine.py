"""Random block-coordinate primal-dual algorithms.

The problem couples ``p`` primal blocks and ``q`` dual blocks through a sparse
block operator ``L``::

    find x with  0 in A_j x_j + C_j x_j + sum_k L_kj^* (B_k [] D_k)(sum_j L_kj x_j)

Three iterations are provided. ``step_alg1`` updates the primal blocks first
and feeds the extrapolated ``2y - x`` to the duals, ``step_alg1_sym`` does the
reverse, and ``step_alg2`` (for ``A = 0``) uses forward steps on the primal
side only. Every step reads pre-step state only, so block updates within a
step are order independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .activation import REQUIRED_COUPLING, ActivationSchedule, Structure, validate
from .errors import ErrorStreams
from .exceptions import ClosureError, ConditionError, InapplicableError, StructureError
from .linalg import (BlockOperatorMatrix, BlockVector, DiagonalMetric, scaled_norm,
                     scaled_norm_bound)
from .operators import MonotoneOp, ProxFn, SmoothFn, dual_resolvent, resolvent

RECORD_COLUMNS = ("n", "objective", "primal_residual", "dual_residual",
                  "consensus_disagreement", "active_blocks", "cum_block_evals", "err_norm")

PD_ALGORITHMS = ("alg1", "alg1_sym", "alg2")


class PDProblem:
    """Structured monotone inclusion with per-block operators and metrics.

    Parameters
    ----------
    L : BlockOperatorMatrix
        q-by-p coupling operator.
    W, U : DiagonalMetric
        Primal (p blocks) and dual (q blocks) preconditioners.
    A, B : sequence of MonotoneOp
        Operators handled through (dual) resolvents.
    C, Dinv : sequence of SmoothFn, optional
        Cocoercive primal terms and inverse dual terms; zero when omitted.
    mu_tilde, nu_tilde : sequence of float, optional
        Cocoercivity constants of ``C_j`` and strong monotonicity constants
        of ``D_k``. Derived from the Lipschitz constants when omitted;
        ``inf`` marks a zero operator.
    """

    def __init__(self, L: BlockOperatorMatrix, W: DiagonalMetric, U: DiagonalMetric,
                 A: Sequence[MonotoneOp], B: Sequence[MonotoneOp],
                 C: Optional[Sequence[SmoothFn]] = None,
                 Dinv: Optional[Sequence[SmoothFn]] = None,
                 mu_tilde: Optional[Sequence[float]] = None,
                 nu_tilde: Optional[Sequence[float]] = None):
        self.L, self.W, self.U = L, W, U
        p, q = L.p, L.q
        if tuple(W.dims) != L.col_dims or tuple(U.dims) != L.row_dims:
            raise StructureError("metric dimensions do not match L")
        self.A = tuple(A)
        self.B = tuple(B)
        self.C = tuple(C) if C is not None else tuple(SmoothFn.zero(d) for d in L.col_dims)
        self.Dinv = (tuple(Dinv) if Dinv is not None
                     else tuple(SmoothFn.zero(d) for d in L.row_dims))
        for name, ops, dims in (("A", self.A, L.col_dims), ("C", self.C, L.col_dims),
                                ("B", self.B, L.row_dims), ("Dinv", self.Dinv, L.row_dims)):
            if len(ops) != len(dims):
                raise StructureError(f"{name} needs {len(dims)} blocks, got {len(ops)}")
            for op, d in zip(ops, dims):
                if op.dim != d:
                    raise StructureError(f"{name} block has dim {op.dim}, expected {d}")
        mt = [c.cocoercivity for c in self.C] if mu_tilde is None else list(mu_tilde)
        nt = [d.cocoercivity for d in self.Dinv] if nu_tilde is None else list(nu_tilde)
        if len(mt) != p or len(nt) != q:
            raise StructureError("one constant per block is required")
        if not all(m > 0 for m in mt) or not all(n > 0 for n in nt):
            raise StructureError("cocoercivity and strong monotonicity constants must be positive")
        self.mu_tilde = tuple(float(m) for m in mt)
        self.nu_tilde = tuple(float(n) for n in nt)
        self.f = self.h = self.g = self.lconj = None
        self.structure = Structure.primal_dual(p, q, L.col_support)
        # adjacency with dense blocks, looked up once per step
        self._col = [[(k, L.block(k, j).T) for k in L.col_support[j]] for j in range(p)]
        self._row = [[(j, L.block(k, j)) for j in L.row_support[k]] for k in range(q)]
        self._impl = {}

    @classmethod
    def monotone(cls, L, W, U, A, B, C=None, Dinv=None, mu_tilde=None, nu_tilde=None):
        return cls(L, W, U, A, B, C, Dinv, mu_tilde, nu_tilde)

    @classmethod
    def convex(cls, L: BlockOperatorMatrix, W: DiagonalMetric, U: DiagonalMetric,
               f: Sequence[ProxFn], g: Sequence[ProxFn],
               h: Optional[Sequence[SmoothFn]] = None,
               lconj: Optional[Sequence[SmoothFn]] = None) -> "PDProblem":
        """Convex program ``min sum_j f_j + h_j + sum_k (g_k [] l_k)(L x)_k``.

        ``lconj`` holds the smooth conjugates ``l_k^*``; omitted means
        ``l_k = indicator of {0}``, so that ``g_k [] l_k = g_k``.
        """
        prob = cls(L, W, U, [MonotoneOp.subdiff(fj) for fj in f],
                   [MonotoneOp.subdiff(gk) for gk in g], h, lconj)
        prob.f, prob.g = tuple(f), tuple(g)
        prob.h = prob.C
        prob.lconj = prob.Dinv
        return prob

    @property
    def p(self) -> int:
        return self.L.p

    @property
    def q(self) -> int:
        return self.L.q

    @property
    def is_convex(self) -> bool:
        return self.f is not None

    @property
    def dinv_zero(self) -> bool:
        return all(d.is_zero for d in self.Dinv)

    def objective(self, x: BlockVector) -> float:
        """Primal objective; ``nan`` for monotone problems or smooth ``l_k^*``."""
        if not self.is_convex or not self.dinv_zero:
            return math.nan
        val = 0.0
        for j in range(self.p):
            val += self.f[j].value(x.blocks[j]) + self.h[j].value(x.blocks[j])
        Lx = self.L.apply(x)
        for k in range(self.q):
            val += self.g[k].value(Lx.blocks[k])
        return float(val)

    def implications(self, coupling: str):
        if coupling not in self._impl:
            pairs = self.structure.implications(coupling)
            self._impl[coupling] = (np.array([s for s, _ in pairs], dtype=np.intp),
                                    np.array([t for _, t in pairs], dtype=np.intp))
        return self._impl[coupling]


@dataclass
class PDState:
    x: BlockVector
    v: BlockVector

    @classmethod
    def zeros(cls, prob: PDProblem) -> "PDState":
        return cls(BlockVector.zeros(prob.L.col_dims), BlockVector.zeros(prob.L.row_dims))

    def copy(self) -> "PDState":
        return PDState(self.x.copy(), self.v.copy())

    def equal(self, other: "PDState") -> bool:
        return self.x.equal(other.x) and self.v.equal(other.v)


# ---------------------------------------------------------------- conditions

def effective_constants(prob: PDProblem) -> tuple:
    """``(mu, nu)`` after metric scaling; ``nu = inf`` when every ``D_k^{-1}`` is zero."""
    wn, un = prob.W.block_norms(), prob.U.block_norms()
    mu = min(m / w for m, w in zip(prob.mu_tilde, wn))
    nu = min(n / u for n, u in zip(prob.nu_tilde, un))
    return float(mu), float(nu)


def theta_alpha(norm: float, mu: float, nu: float, alpha: float) -> float:
    """Cocoercivity constant of the primal-dual forward operator for a given ``alpha``.

    ``(1 - norm^2) min{mu/(1 + alpha norm), nu/(1 + norm/alpha)}``. When
    ``nu`` is infinite ``alpha`` may be taken arbitrarily small, which gives
    ``(1 - norm^2) mu`` (and symmetrically for infinite ``mu``). A norm of
    1 or more yields 0.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if norm < 0:
        raise ValueError("norm must be nonnegative")
    if norm >= 1:
        return 0.0
    s = 1.0 - norm * norm
    if math.isinf(mu) and math.isinf(nu):
        return math.inf
    if math.isinf(nu):
        return s * mu
    if math.isinf(mu):
        return s * nu
    return s * min(mu / (1.0 + alpha * norm), nu / (1.0 + norm / alpha))


def alpha_hat(norm: float, mu: float, nu: float) -> Optional[float]:
    """Maximizer of ``theta_alpha`` over ``alpha``.

    Returns ``None`` when the constant does not depend on ``alpha`` (zero
    norm or an infinite constant).
    """
    if norm <= 0 or math.isinf(mu) or math.isinf(nu):
        return None
    d = mu - nu
    return (d + math.sqrt(d * d + 4.0 * mu * nu * norm * norm)) / (2.0 * nu * norm)


@dataclass
class ConditionReport:
    """Outcome of a step-size condition check.

    ``conditions`` maps a condition name to its verdict; ``verdict`` is the
    verdict of the main condition and ``reason`` is ``"norm"`` or
    ``"theta"`` when it fails.
    """

    algorithm: str
    norm: float
    norm_bound: float
    mu: float
    nu: float
    alpha: Optional[float] = None
    alpha_hat: Optional[float] = None
    theta_alpha: Optional[float] = None
    theta_hat: Optional[float] = None
    conditions: dict = field(default_factory=dict)
    verdict: bool = False
    reason: str = ""

    def to_dict(self) -> dict:
        def num(x):
            if x is None:
                return None
            return x if math.isfinite(x) else str(x)
        return {
            "algorithm": self.algorithm, "norm": num(self.norm),
            "norm_bound": num(self.norm_bound), "mu": num(self.mu), "nu": num(self.nu),
            "alpha": num(self.alpha), "alpha_hat": num(self.alpha_hat),
            "theta_alpha": num(self.theta_alpha), "theta_hat": num(self.theta_hat),
            "conditions": dict(self.conditions), "verdict": self.verdict,
            "reason": self.reason,
        }


def _alg1_report(name: str, norm: float, bound: float, mu: float, nu: float,
                 alpha: Optional[float], bound_sq: Optional[float] = None) -> ConditionReport:
    # shared by the primal-dual and distributed checkers; bound_sq overrides bound**2
    ah = alpha_hat(norm, mu, nu)
    a = alpha if alpha is not None else (ah if ah is not None else 1.0)
    th = theta_alpha(norm, mu, nu, a)
    th_hat = theta_alpha(norm, mu, nu, ah if ah is not None else 1.0)
    bsq = bound * bound if bound_sq is None else bound_sq
    conds = {
        "main": bool(2.0 * th > 1.0),
        "bis": bool(bound < 1 and (1.0 - bound) * min(mu, nu) > 0.5),
    }
    if math.isinf(nu):
        conds["ter"] = bool(bsq < 1 and (1.0 - bsq) * mu > 0.5)
    rep = ConditionReport(name, norm, bound, mu, nu, a, ah, th, th_hat, conds, conds["main"])
    if not rep.verdict:
        rep.reason = "norm" if norm >= 1 else "theta"
    return rep


def check_alg1(prob: PDProblem, alpha: Optional[float] = None) -> ConditionReport:
    """Check ``2 theta_alpha > 1`` at ``alpha`` (default: the maximizer).

    Also reports the block-sum sufficient condition ``bis`` and, when every
    ``D_k^{-1}`` is zero, the looser condition ``ter``.
    """
    if alpha is not None and not alpha > 0:
        raise ValueError("alpha must be positive")
    mu, nu = effective_constants(prob)
    norm = scaled_norm(prob.L, prob.W, prob.U)
    bound = scaled_norm_bound(prob.L, prob.W, prob.U)
    return _alg1_report("alg1", norm, bound, mu, nu, alpha)


def _alg2_report(name: str, norm_sq: float, bound_sq: float, mu: float,
                 nu: float) -> ConditionReport:
    def crit(s):
        if s >= 1:
            return False
        return min(mu, nu * (1.0 - s)) > 0.5
    conds = {"main": bool(crit(norm_sq)), "block_bound": bool(crit(bound_sq))}
    rep = ConditionReport(name, math.sqrt(norm_sq), math.sqrt(bound_sq), mu, nu,
                          conditions=conds, verdict=conds["main"])
    if not rep.verdict:
        rep.reason = "norm" if norm_sq >= 1 else "theta"
    return rep


def check_alg2(prob: PDProblem) -> ConditionReport:
    """Check ``min{mu, nu (1 - ||U^{1/2} L W^{1/2}||^2)} > 1/2``.

    With every ``D_k^{-1}`` zero this reduces to ``norm < 1`` and ``mu > 1/2``.
    """
    if not all(a.is_zero for a in prob.A):
        raise InapplicableError("the forward-only primal iteration needs every A_j = 0")
    mu, nu = effective_constants(prob)
    norm = scaled_norm(prob.L, prob.W, prob.U)
    bound = scaled_norm_bound(prob.L, prob.W, prob.U)
    return _alg2_report("alg2", norm * norm, bound * bound, mu, nu)


def check(prob: PDProblem, algorithm: str, alpha: Optional[float] = None) -> ConditionReport:
    if algorithm in ("alg1", "alg1_sym"):
        rep = check_alg1(prob, alpha)
        rep.algorithm = algorithm
        return rep
    if algorithm == "alg2":
        return check_alg2(prob)
    raise StructureError(f"unknown algorithm {algorithm!r}")


# ---------------------------------------------------------------- steps

def _pattern(prob: PDProblem, pattern, coupling: str, check: bool) -> np.ndarray:
    eps = np.asarray(pattern)
    if eps.shape != (prob.p + prob.q,):
        raise ClosureError(f"pattern must have {prob.p + prob.q} entries")
    if check:
        if not eps.any():
            raise ClosureError("the zero pattern is not allowed")
        src, dst = prob.implications(coupling)
        bad = np.flatnonzero((eps[src] != 0) & (eps[dst] == 0))
        if bad.size:
            i = bad[0]
            raise ClosureError(f"coordinate {src[i]} is active but {dst[i]} is not")
    return eps


def _err(errors: Optional[dict], ch: str, i: int):
    if not errors:
        return None
    e = errors.get(ch)
    return None if e is None else e[i]


def _primal_point(prob: PDProblem, j: int, xj: np.ndarray, dual_sum, errors) -> np.ndarray:
    # x_j - W_j (dual_sum + C_j x_j + c_j)
    g = dual_sum
    C = prob.C[j]
    if not C.is_zero:
        g = g + C.grad(xj)
    cj = _err(errors, "c", j)
    if cj is not None:
        g = g + cj
    return xj - prob.W[j] * g


def _dual_point(prob: PDProblem, k: int, vk: np.ndarray, primal_sum, errors) -> np.ndarray:
    # v_k + U_k (primal_sum - D_k^{-1} v_k + d_k)
    s = primal_sum
    Dk = prob.Dinv[k]
    if not Dk.is_zero:
        s = s - Dk.grad(vk)
    dk = _err(errors, "d", k)
    if dk is not None:
        s = s + dk
    return vk + prob.U[k] * s


def _primal_resolvent(prob: PDProblem, j: int, z: np.ndarray, errors) -> np.ndarray:
    y = resolvent(prob.A[j], prob.W[j], z)
    aj = _err(errors, "a", j)
    return y if aj is None else y + aj


def _dual_resolvent(prob: PDProblem, k: int, z: np.ndarray, errors) -> np.ndarray:
    u = dual_resolvent(prob.B[k], prob.U[k], z)
    bk = _err(errors, "b", k)
    return u if bk is None else u + bk


def step_alg1(prob: PDProblem, state: PDState, pattern, lam: float = 1.0,
              errors: Optional[dict] = None, check: bool = True) -> PDState:
    """Primal-first step; duals see the extrapolation ``2 y_j - x_j``.

    Parameters
    ----------
    pattern : array of {0, 1}
        ``p + q`` activation bits; an active dual must have all its primal
        neighbours active.
    errors : dict, optional
        Channel ``a``/``c`` (p blocks) and ``b``/``d`` (q blocks) perturbations.
    """
    eps = _pattern(prob, pattern, "primal_follows_dual", check)
    p = prob.p
    x, v = state.x.blocks, state.v.blocks
    xn, vn = list(x), list(v)
    y = {}
    for j in np.flatnonzero(eps[:p]):
        ds = 0.0
        for k, LT in prob._col[j]:
            ds = ds + LT @ v[k]
        yj = _primal_resolvent(prob, j, _primal_point(prob, j, x[j], ds, errors), errors)
        y[j] = yj
        xn[j] = x[j] + lam * (yj - x[j])
    for k in np.flatnonzero(eps[p:]):
        ps = 0.0
        for j, Lkj in prob._row[k]:
            ps = ps + Lkj @ (2.0 * y[j] - x[j])
        uk = _dual_resolvent(prob, k, _dual_point(prob, k, v[k], ps, errors), errors)
        vn[k] = v[k] + lam * (uk - v[k])
    return PDState(BlockVector.wrap(xn), BlockVector.wrap(vn))


def step_alg1_sym(prob: PDProblem, state: PDState, pattern, lam: float = 1.0,
                  errors: Optional[dict] = None, check: bool = True) -> PDState:
    """Dual-first step; primals see the extrapolation ``2 u_k - v_k``.

    An active primal block must have all its dual neighbours active.
    """
    eps = _pattern(prob, pattern, "dual_follows_primal", check)
    p = prob.p
    x, v = state.x.blocks, state.v.blocks
    xn, vn = list(x), list(v)
    u = {}
    for k in np.flatnonzero(eps[p:]):
        ps = 0.0
        for j, Lkj in prob._row[k]:
            ps = ps + Lkj @ x[j]
        uk = _dual_resolvent(prob, k, _dual_point(prob, k, v[k], ps, errors), errors)
        u[k] = uk
        vn[k] = v[k] + lam * (uk - v[k])
    for j in np.flatnonzero(eps[:p]):
        ds = 0.0
        for k, LT in prob._col[j]:
            ds = ds + LT @ (2.0 * u[k] - v[k])
        yj = _primal_resolvent(prob, j, _primal_point(prob, j, x[j], ds, errors), errors)
        xn[j] = x[j] + lam * (yj - x[j])
    return PDState(BlockVector.wrap(xn), BlockVector.wrap(vn))


def step_alg2(prob: PDProblem, state: PDState, pattern, lam: float = 1.0,
              errors: Optional[dict] = None, check: bool = True) -> PDState:
    """Forward-only primal step for problems with every ``A_j = 0``.

    Channel ``a`` is ignored since no primal resolvent is evaluated.
    """
    if not all(a.is_zero for a in prob.A):
        raise InapplicableError("the forward-only primal iteration needs every A_j = 0")
    eps = _pattern(prob, pattern, "dual_follows_primal", check)
    p = prob.p
    x, v = state.x.blocks, state.v.blocks
    xn, vn = list(x), list(v)
    dual_on = eps[p:]
    w, z = {}, {}
    for j in range(p):
        if not (eps[j] or any(dual_on[k] for k, _ in prob._col[j])):
            continue
        wj = _primal_point(prob, j, x[j], 0.0, errors)
        ds = 0.0
        for k, LT in prob._col[j]:
            ds = ds + LT @ v[k]
        w[j] = wj
        z[j] = wj - prob.W[j] * ds
    u = {}
    for k in np.flatnonzero(dual_on):
        ps = 0.0
        for j, Lkj in prob._row[k]:
            ps = ps + Lkj @ z[j]
        uk = _dual_resolvent(prob, k, _dual_point(prob, k, v[k], ps, errors), errors)
        u[k] = uk
        vn[k] = v[k] + lam * (uk - v[k])
    for j in np.flatnonzero(eps[:p]):
        ds = 0.0
        for k, LT in prob._col[j]:
            ds = ds + LT @ u[k]
        xn[j] = x[j] + lam * (w[j] - prob.W[j] * ds - x[j])
    return PDState(BlockVector.wrap(xn), BlockVector.wrap(vn))


STEPS = {"alg1": step_alg1, "alg1_sym": step_alg1_sym, "alg2": step_alg2}


# ---------------------------------------------------------------- runner

@dataclass
class RunResult:
    """Outcome of a seeded run.

    ``rows`` follow ``RECORD_COLUMNS``; row 0 describes the initial point.
    """

    state: object
    rows: list
    stop_reason: str
    iterations: int
    condition_forced: bool
    report: Optional[ConditionReport]


def split_seed(seed: int) -> tuple:
    """Independent integer seeds for the activation and error streams."""
    act, err = np.random.SeedSequence(int(seed)).spawn(2)
    return act, int(err.generate_state(1)[0])


def _error_norm(errors: Optional[dict]) -> float:
    if not errors:
        return 0.0
    s = 0.0
    for blocks in errors.values():
        if blocks is not None:
            s += sum(float(b @ b) for b in blocks)
    return math.sqrt(s)


def converged(rows: list, window: int, tol: float, cols=(2, 3)) -> bool:
    """True when the last ``window`` rows have every residual in ``cols`` below ``tol``."""
    if len(rows) - 1 < window:
        return False
    return all(r[c] < tol for r in rows[-window:] for c in cols)


def run_pd(prob: PDProblem, algorithm: str, schedule: ActivationSchedule, seed: int = 0,
           lam: float = 1.0, injectors: Optional[dict] = None, max_iters: int = 1000,
           tol: float = 1e-10, window: int = 10, force: bool = False,
           x0: Optional[BlockVector] = None, v0: Optional[BlockVector] = None,
           alpha: Optional[float] = None) -> RunResult:
    """Seeded primal-dual run with per-iteration accounting.

    Parameters
    ----------
    algorithm : {"alg1", "alg1_sym", "alg2"}
    schedule : ActivationSchedule
        Must use the closure the algorithm requires (or be full).
    injectors : dict, optional
        channel (``a``, ``b``, ``c``, ``d``) -> ErrorInjector.
    force : bool
        Run even if the condition check fails; recorded in the result.

    Raises
    ------
    ConditionError
        Condition check fails and ``force`` is false.
    """
    if algorithm not in PD_ALGORITHMS:
        raise StructureError(f"unknown algorithm {algorithm!r}")
    if not 0 < lam <= 1:
        raise StructureError("relaxation must lie in (0, 1]")
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
    step = STEPS[algorithm]
    act_ss, err_seed = split_seed(seed)
    rng = np.random.default_rng(act_ss)
    streams = ErrorStreams(injectors or {}, err_seed)
    pdims, ddims = prob.L.col_dims, prob.L.row_dims
    state = PDState(x0.copy() if x0 is not None else BlockVector.zeros(pdims),
                    v0.copy() if v0 is not None else BlockVector.zeros(ddims))
    rows = [(0, prob.objective(state.x), 0.0, 0.0, math.nan, 0, 0, 0.0)]
    cum = 0
    for n in range(max_iters):
        eps = schedule.sample(rng)
        errs = None
        if streams.active:
            errs = {"a": streams.draw("a", n, pdims), "c": streams.draw("c", n, pdims),
                    "b": streams.draw("b", n, ddims), "d": streams.draw("d", n, ddims)}
        new = step(prob, state, eps, lam, errs, check=False)
        active = int(eps.sum())
        cum += active
        rows.append((n + 1, prob.objective(new.x), (new.x - state.x).norm(),
                     (new.v - state.v).norm(), math.nan, active, cum, _error_norm(errs)))
        state = new
        if converged(rows, window, tol):
            return RunResult(state, rows, "converged", n + 1, forced, report)
    return RunResult(state, rows, "max_iters", max_iters, forced, report)
