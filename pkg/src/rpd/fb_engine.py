"""Random block-coordinate preconditioned forward-backward iteration.

For a block operator ``z -> (T_i z)_i`` (the resolvent of ``gamma V Q``) and
a forward map ``z -> V R z``, one step updates only the active blocks::

    r = V R z
    z_i <- z_i + lam * (T_i(z - gamma r + s) + t_i - z_i)     if eps_i = 1
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .activation import ActivationSchedule
from .errors import ErrorStreams
from .exceptions import StructureError
from .linalg import BlockVector


@dataclass(frozen=True)
class FBInstance:
    """Forward-backward data.

    Parameters
    ----------
    m : int
        Number of blocks.
    resolvent_map : callable
        ``(gamma, z: BlockVector) -> sequence of m blocks``, the blocks of
        ``J_{gamma V Q} z``.
    forward_map : callable
        ``z -> BlockVector`` computing ``V R z``.
    gamma, lam : float
        Constant step size and relaxation.
    theta : float, optional
        Cocoercivity constant of ``V^{1/2} R V^{1/2}``; when given, ``gamma``
        must lie in ``(0, 2 theta)``. ``inf`` means ``R = 0``.
    """

    m: int
    resolvent_map: Callable
    forward_map: Callable
    gamma: float = 1.0
    lam: float = 1.0
    theta: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise StructureError("relaxation must lie in (0, 1]")
        if not self.gamma > 0:
            raise StructureError("step size must be positive")
        if self.theta is not None and not self.gamma < 2 * self.theta:
            raise StructureError(f"step size {self.gamma} violates gamma < 2*theta = "
                                 f"{2 * self.theta}")


def fb_step(inst: FBInstance, z: BlockVector, pattern, s: Optional[BlockVector] = None,
            t: Optional[BlockVector] = None) -> BlockVector:
    """One random block-coordinate forward-backward step."""
    pattern = np.asarray(pattern)
    if pattern.shape != (inst.m,) or len(z) != inst.m:
        raise StructureError("pattern and point must have m blocks")
    r = inst.forward_map(z)
    arg = BlockVector(zb - inst.gamma * rb for zb, rb in zip(z.blocks, r.blocks))
    if s is not None:
        arg = arg + s
    T = inst.resolvent_map(inst.gamma, arg)
    out = list(z.blocks)
    for i in np.flatnonzero(pattern):
        target = T[i] if t is None else T[i] + t.blocks[i]
        out[i] = z.blocks[i] + inst.lam * (target - z.blocks[i])
    return BlockVector(out)


@dataclass
class FBRecord:
    z: BlockVector
    iterations: int
    changes: list = field(default_factory=list)
    stop_reason: str = ""


def fb_run(inst: FBInstance, z0: BlockVector, schedule: ActivationSchedule,
           rng: np.random.Generator, errors: Optional[ErrorStreams] = None,
           max_iters: int = 1000, tol: float = 1e-10, window: int = 10) -> FBRecord:
    """Iterate ``fb_step`` until ``max_iters`` or a window of small changes.

    The run stops after iteration ``n`` when the last ``window`` successive
    changes ``||z_{k+1} - z_k||`` are all below ``tol``.
    """
    z = z0.copy()
    dims = z.dims
    changes = []
    for n in range(max_iters):
        eps = schedule.sample(rng)
        s = t = None
        if errors is not None and errors.active:
            sb, tb = errors.draw("s", n, dims), errors.draw("t", n, dims)
            s = None if sb is None else BlockVector(sb)
            t = None if tb is None else BlockVector(tb)
        z_new = fb_step(inst, z, eps, s, t)
        changes.append((z_new - z).norm())
        z = z_new
        if len(changes) >= window and max(changes[-window:]) < tol:
            return FBRecord(z, n + 1, changes, "converged")
    return FBRecord(z, max_iters, changes, "max_iters")
