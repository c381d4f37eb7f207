"""Proximity operators, resolvents under diagonal metrics, smooth terms.

Metric conventions: a metric block is a positive vector ``w``. The metric prox
``prox_metric(f, w, x)`` minimizes ``f(y) + sum((x - y)**2 / (2 w))``, which is
the resolvent of ``diag(w) * subdiff f``. Conjugate proxes are never tabulated:
they always go through the generalized Moreau decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import StructureError, UnsupportedOperation

# tolerance used when evaluating indicator functions
FEAS_TOL = 1e-9


def _vec(a, dim=None) -> np.ndarray:
    v = np.array(a, dtype=float).reshape(-1)
    if dim is not None and v.size == 1 and dim > 1:
        v = np.full(dim, v[0])
    return v


@dataclass(frozen=True)
class ProxFn:
    """Proper lsc convex function with a closed-form metric prox.

    Use the constructors ``l1``, ``sq_distance``, ``box``, ``zero`` and ``point``.
    """

    kind: str
    dim: int
    tau: float = 1.0
    center: Optional[np.ndarray] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    KINDS = ("l1", "sq_distance", "box", "zero", "point")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise StructureError(f"unknown prox kind {self.kind!r}")
        if self.dim < 1:
            raise StructureError("dimension must be positive")
        if self.kind in ("l1", "sq_distance") and not self.tau > 0:
            raise StructureError("weight must be positive")

    @classmethod
    def l1(cls, dim: int, tau: float = 1.0) -> "ProxFn":
        """``tau * ||y||_1``."""
        return cls("l1", int(dim), tau=float(tau))

    @classmethod
    def sq_distance(cls, center, tau: float = 1.0) -> "ProxFn":
        """``tau/2 * ||y - center||^2``."""
        c = _vec(center)
        c.setflags(write=False)
        return cls("sq_distance", c.size, tau=float(tau), center=c)

    @classmethod
    def box(cls, lo, hi, dim: Optional[int] = None) -> "ProxFn":
        """Indicator of ``{lo <= y <= hi}`` (entrywise, infinite bounds allowed)."""
        if dim is None:
            dim = max(np.size(lo), np.size(hi))
        lo_v, hi_v = _vec(lo, dim), _vec(hi, dim)
        if lo_v.size != dim or hi_v.size != dim:
            raise StructureError("box bounds do not match the dimension")
        if np.any(lo_v > hi_v):
            raise StructureError("box needs lo <= hi")
        lo_v.setflags(write=False)
        hi_v.setflags(write=False)
        return cls("box", int(dim), lo=lo_v, hi=hi_v)

    @classmethod
    def zero(cls, dim: int) -> "ProxFn":
        return cls("zero", int(dim))

    @classmethod
    def point(cls, c) -> "ProxFn":
        """Indicator of the single point ``{c}``."""
        c = _vec(c)
        c.setflags(write=False)
        return cls("point", c.size, center=c)

    def value(self, y) -> float:
        y = np.asarray(y, dtype=float)
        if self.kind == "l1":
            return self.tau * float(np.abs(y).sum())
        if self.kind == "sq_distance":
            r = y - self.center
            return 0.5 * self.tau * float(r @ r)
        if self.kind == "zero":
            return 0.0
        if self.kind == "box":
            ok = np.all(y >= self.lo - FEAS_TOL) and np.all(y <= self.hi + FEAS_TOL)
            return 0.0 if ok else np.inf
        ok = np.max(np.abs(y - self.center)) <= FEAS_TOL
        return 0.0 if ok else np.inf


def prox_metric(f: ProxFn, w, x) -> np.ndarray:
    """Minimizer of ``f(y) + 1/2 sum((x_i - y_i)^2 / w_i)``.

    Equivalently the resolvent ``J_{W subdiff f}`` with ``W = diag(w)``.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != (f.dim,):
        raise StructureError(f"point has shape {x.shape}, function has dim {f.dim}")
    k = f.kind
    if k == "zero":
        return x.copy()
    if k == "l1":
        t = f.tau * w
        return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    if k == "sq_distance":
        t = f.tau * w
        return (x + t * f.center) / (1.0 + t)
    if k == "box":
        return np.clip(x, f.lo, f.hi)
    return np.array(f.center, dtype=float)


def prox_conjugate(f: ProxFn, u, v) -> np.ndarray:
    """Resolvent ``J_{U subdiff f*}`` evaluated through the Moreau decomposition.

    ``J_{U subdiff f*}(v) = v - U prox_metric(f, 1/u, v/u)``.
    """
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    return v - u * prox_metric(f, 1.0 / u, v / u)


def project_consensus(z, kappa: int) -> np.ndarray:
    """Replace each of the ``kappa`` stacked copies of ``z`` by their mean."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if kappa < 1 or z.size % kappa:
        raise StructureError(f"kappa={kappa} does not divide dimension {z.size}")
    copies = z.reshape(kappa, -1)
    mean = copies.sum(axis=0) / kappa
    return np.tile(mean, kappa)


def _project_consensus_weighted(z, kappa: int, w) -> np.ndarray:
    # projection onto the consensus set in the metric diag(1/w)
    w = np.asarray(w, dtype=float).reshape(kappa, -1)
    copies = np.asarray(z, dtype=float).reshape(kappa, -1)
    mean = (copies / w).sum(axis=0) / (1.0 / w).sum(axis=0)
    return np.tile(mean, kappa)


@dataclass(frozen=True)
class MonotoneOp:
    """Maximally monotone operator with a computable metric resolvent.

    kind ``"subdiff"``: subdifferential of ``fn``.
    kind ``"consensus"``: normal cone of the consensus subspace of ``kappa``
    stacked copies of ``R^d``.
    kind ``"resolvent"``: user map ``resolvent(w, x)`` returning ``J_{diag(w) A} x``.
    ``strong_monotonicity`` is informational metadata (0 when unknown).
    """

    kind: str
    dim: int
    fn: Optional[ProxFn] = None
    kappa: int = 1
    resolvent_fn: Optional[Callable] = field(default=None, compare=False)
    strong_monotonicity: float = 0.0

    @classmethod
    def subdiff(cls, f: ProxFn, strong_monotonicity: float = 0.0) -> "MonotoneOp":
        return cls("subdiff", f.dim, fn=f, strong_monotonicity=strong_monotonicity)

    @classmethod
    def zero(cls, dim: int) -> "MonotoneOp":
        return cls.subdiff(ProxFn.zero(dim))

    @classmethod
    def consensus(cls, kappa: int, d: int) -> "MonotoneOp":
        return cls("consensus", int(kappa) * int(d), kappa=int(kappa))

    @classmethod
    def from_resolvent(cls, dim: int, fn: Callable, strong_monotonicity: float = 0.0):
        return cls("resolvent", int(dim), resolvent_fn=fn,
                   strong_monotonicity=strong_monotonicity)

    @property
    def is_zero(self) -> bool:
        return self.kind == "subdiff" and self.fn.kind == "zero"


def resolvent(A: MonotoneOp, w, x) -> np.ndarray:
    """``J_{W A}(x)`` for a diagonal metric block ``w``."""
    x = np.asarray(x, dtype=float)
    if A.kind == "subdiff":
        return prox_metric(A.fn, w, x)
    if A.kind == "consensus":
        w = np.asarray(w, dtype=float)
        if w.size == 1 or np.all(w == w.flat[0]):
            return project_consensus(x, A.kappa)
        return _project_consensus_weighted(x, A.kappa, w)
    if A.kind == "resolvent":
        return np.asarray(A.resolvent_fn(np.asarray(w, dtype=float), x), dtype=float)
    raise UnsupportedOperation(f"no resolvent available for operator kind {A.kind!r}")


def dual_resolvent(B: MonotoneOp, u, v) -> np.ndarray:
    """``J_{U B^{-1}}(v) = v - U J_{U^{-1} B}(U^{-1} v)``."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    if B.kind == "subdiff":
        return prox_conjugate(B.fn, u, v)
    return v - u * resolvent(B, 1.0 / u, v / u)


class SmoothFn:
    """Convex differentiable term with a Lipschitz gradient.

    ``weight/2 ||M x - b||^2 + <c, x>``; ``zero`` has neither matrix nor
    offset. ``lipschitz`` is the Lipschitz constant of the gradient.
    """

    __slots__ = ("kind", "dim", "M", "b", "c", "weight", "lipschitz", "_MtM", "_Mtb")

    def __init__(self, kind: str, dim: int, M=None, b=None, c=None, weight: float = 1.0,
                 lipschitz: Optional[float] = None):
        if kind not in ("quadratic", "zero"):
            raise StructureError(f"unknown smooth kind {kind!r}")
        self.kind = kind
        self.dim = int(dim)
        self.weight = float(weight)
        if kind == "zero":
            self.M = self.b = None
            self.c = None
            self.lipschitz = 0.0
            self._MtM = self._Mtb = None
            return
        if self.weight < 0:
            raise StructureError("weight must be nonnegative")
        M = np.array(M, dtype=float, ndmin=2)
        if M.shape[1] != self.dim:
            raise StructureError("matrix columns do not match the dimension")
        b = np.zeros(M.shape[0]) if b is None else _vec(b)
        if b.size != M.shape[0]:
            raise StructureError("offset does not match the matrix rows")
        self.M, self.b = M, b
        self.c = None if c is None else _vec(c)
        if self.c is not None and self.c.size != self.dim:
            raise StructureError("linear term does not match the dimension")
        # normal-equation form keeps gradient cost at dim^2
        self._MtM = self.weight * (M.T @ M)
        self._Mtb = self.weight * (M.T @ b)
        lip = self.weight * (np.linalg.norm(M, 2) ** 2 if M.size else 0.0)
        self.lipschitz = float(lip if lipschitz is None else lipschitz)

    @classmethod
    def zero(cls, dim: int) -> "SmoothFn":
        return cls("zero", dim)

    @classmethod
    def quadratic(cls, M, b=None, weight: float = 1.0, c=None) -> "SmoothFn":
        M = np.array(M, dtype=float, ndmin=2)
        return cls("quadratic", M.shape[1], M=M, b=b, c=c, weight=weight)

    @classmethod
    def sq_norm(cls, dim: int, weight: float = 1.0) -> "SmoothFn":
        """``weight/2 ||x||^2``."""
        return cls("quadratic", dim, M=np.eye(dim), weight=weight)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @property
    def cocoercivity(self) -> float:
        """``1/lipschitz`` (infinite for a constant gradient)."""
        return np.inf if self.lipschitz == 0 else 1.0 / self.lipschitz

    def value(self, x) -> float:
        if self.kind == "zero":
            return 0.0
        x = np.asarray(x, dtype=float)
        r = self.M @ x - self.b
        out = 0.5 * self.weight * float(r @ r)
        if self.c is not None:
            out += float(self.c @ x)
        return out

    def grad(self, x) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(self.dim)
        g = self._MtM @ x - self._Mtb
        if self.c is not None:
            g = g + self.c
        return g


def gradient_check(f: SmoothFn, x, h: float = 1e-5) -> float:
    """Max relative gap between ``grad f`` and central finite differences."""
    if not h > 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    g = f.grad(x)
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fd = (f.value(x + e) - f.value(x - e)) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / (1.0 + abs(g[i])))
    return worst
