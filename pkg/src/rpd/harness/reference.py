"""Reference solutions for the zoo families.

Each solver stops on a certificate computed independently of its own
iteration: the distance from zero to the subdifferential of the objective
(lasso, box_ls), the normal-equation residual (ridge_consensus) or the
primal-dual gap (tv1d, where the subdifferential of the total variation
term is not evaluable at inexact kinks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..exceptions import ReferenceUnavailable
from .spec import ProblemSpec
from .zoo import Instance, build_instance

REF_TOL = 1e-10
REF_MAX_ITERS = 1_000_000
# certified residual must stay below this for the reference to be accepted
CERT_TOL = 1e-9
_CHECK_EVERY = 25


@dataclass
class ReferenceSolution:
    """Minimizer with its value and certificate.

    ``x`` is the minimizer (for distributed problems the common value),
    ``method`` one of ``closed-form``, ``proximal-gradient``,
    ``dual-projected-gradient`` or ``user``.
    """

    x: np.ndarray
    objective: float
    method: str
    residual: float
    iterations: int = 0
    v: Optional[np.ndarray] = None


def lasso_residual(A, b, tau, x) -> float:
    """Distance from 0 to ``A^T(Ax - b) + tau * subdiff ||x||_1``."""
    g = A.T @ (A @ x - b)
    r = np.where(x != 0, g + tau * np.sign(x), np.maximum(np.abs(g) - tau, 0.0))
    return float(np.linalg.norm(r))


def box_residual(A, b, lo, hi, x) -> float:
    """Distance from 0 to ``A^T(Ax - b) + N_box(x)``; infinite outside the box."""
    if np.any(x < lo) or np.any(x > hi):
        return math.inf
    g = A.T @ (A @ x - b)
    r = np.where(x == lo, np.minimum(g, 0.0), np.where(x == hi, np.maximum(g, 0.0), g))
    if lo == hi:
        r = np.zeros_like(g)
    return float(np.linalg.norm(r))


def ridge_residual(Ms, bs, reg, x) -> float:
    g = sum(Mi.T @ (Mi @ x - bi) for Mi, bi in zip(Ms, bs)) + reg * x
    return float(np.linalg.norm(g))


def tv1d_gap(y, D, tau, z) -> float:
    """Primal-dual gap at the dual point ``z`` (``|z| <= tau``) and ``x = y - D^T z``."""
    x = y - D.T @ z
    primal = 0.5 * float((x - y) @ (x - y)) + tau * float(np.abs(D @ x).sum())
    dual = 0.5 * float(y @ y) - 0.5 * float(x @ x)
    return primal - dual


def _prox_grad(grad, prox, x0, step, residual, label):
    # accelerated proximal gradient with gradient-based restart
    x = x0.copy()
    yk = x.copy()
    t = 1.0
    for it in range(1, REF_MAX_ITERS + 1):
        x_new = prox(yk - step * grad(yk), step)
        if (yk - x_new) @ (x_new - x) > 0:
            t = 1.0
            yk = x_new.copy()
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            yk = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x = x_new
        if it % _CHECK_EVERY == 0:
            res = residual(x)
            if res < REF_TOL:
                return x, res, it
    raise ReferenceUnavailable(f"{label}: residual {residual(x):.3e} after {REF_MAX_ITERS} "
                               "iterations")


def solve_lasso(A, b, tau) -> ReferenceSolution:
    lip = np.linalg.norm(A, 2) ** 2
    AtA, Atb = A.T @ A, A.T @ b

    def prox(z, s):
        return np.sign(z) * np.maximum(np.abs(z) - s * tau, 0.0)

    x, res, it = _prox_grad(lambda x: AtA @ x - Atb, prox, np.zeros(A.shape[1]), 1.0 / lip,
                            lambda x: lasso_residual(A, b, tau, x), "lasso")
    obj = 0.5 * float((A @ x - b) @ (A @ x - b)) + tau * float(np.abs(x).sum())
    return ReferenceSolution(x, obj, "proximal-gradient", res, it)


def solve_box_ls(A, b, lo, hi) -> ReferenceSolution:
    lip = np.linalg.norm(A, 2) ** 2
    AtA, Atb = A.T @ A, A.T @ b
    x, res, it = _prox_grad(lambda x: AtA @ x - Atb, lambda z, s: np.clip(z, lo, hi),
                            np.clip(np.zeros(A.shape[1]), lo, hi), 1.0 / lip,
                            lambda x: box_residual(A, b, lo, hi, x), "box_ls")
    obj = 0.5 * float((A @ x - b) @ (A @ x - b))
    return ReferenceSolution(x, obj, "proximal-gradient", res, it)


def solve_tv1d(y, D, tau) -> ReferenceSolution:
    lip = np.linalg.norm(D, 2) ** 2

    def grad(z):
        return -D @ (y - D.T @ z)

    z, gap, it = _prox_grad(grad, lambda w, s: np.clip(w, -tau, tau), np.zeros(D.shape[0]),
                            1.0 / lip, lambda z: tv1d_gap(y, D, tau, z), "tv1d")
    x = y - D.T @ z
    obj = 0.5 * float((x - y) @ (x - y)) + tau * float(np.abs(D @ x).sum())
    return ReferenceSolution(x, obj, "dual-projected-gradient", gap, it, v=z)


def solve_ridge(Ms, bs, reg) -> ReferenceSolution:
    d = Ms[0].shape[1]
    H = sum(Mi.T @ Mi for Mi in Ms) + reg * np.eye(d)
    r = sum(Mi.T @ bi for Mi, bi in zip(Ms, bs))
    x = np.linalg.solve(H, r)
    obj = sum(0.5 * float((Mi @ x - bi) @ (Mi @ x - bi)) for Mi, bi in zip(Ms, bs))
    obj += 0.5 * reg * float(x @ x)
    return ReferenceSolution(x, obj, "closed-form", ridge_residual(Ms, bs, reg, x))


def reference_for(inst: Instance) -> ReferenceSolution:
    """Reference solution of a built instance."""
    D = inst.data
    fam = inst.family
    if fam == "lasso":
        ref = solve_lasso(D["A"], D["b"], D["tau"])
    elif fam == "box_ls":
        ref = solve_box_ls(D["A"], D["b"], D["lo"], D["hi"])
    elif fam == "tv1d":
        ref = solve_tv1d(D["y"], D["D"], D["tau"])
    elif fam == "ridge_consensus":
        ref = solve_ridge(D["M"], D["b"], D["reg"])
    else:
        user = D.get("reference")
        if user is None:
            raise ReferenceUnavailable(f"family {fam!r} needs a user-provided reference")
        return ReferenceSolution(np.asarray(user["x"], dtype=float), float(user["objective"]),
                                 "user", math.nan)
    if not ref.residual < CERT_TOL:
        raise ReferenceUnavailable(f"{fam}: certificate {ref.residual:.3e} >= {CERT_TOL}")
    return ref


def solve_reference(spec: ProblemSpec) -> ReferenceSolution:
    """Reference solution for the problem described by ``spec``."""
    return reference_for(build_instance(spec))
