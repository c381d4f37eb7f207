"""Summable stochastic error injectors.

An error vector has a random direction (uniform on the sphere) and a
deterministic norm ``bound(n)``, so its conditional second moment is known
exactly and summability holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import StructureError


@dataclass(frozen=True)
class ErrorInjector:
    """Error magnitude schedule.

    kind ``none``: no error. ``power``: ``C (n+1)^(-s)`` with ``s > 1``.
    ``geometric``: ``C rho^n`` with ``0 < rho < 1``.
    """

    kind: str = "none"
    C: float = 0.0
    s: float = 2.0
    rho: float = 0.5

    def __post_init__(self):
        if self.kind == "none":
            return
        if self.kind not in ("power", "geometric"):
            raise StructureError(f"unknown error kind {self.kind!r}")
        if not self.C > 0:
            raise StructureError("error scale C must be positive")
        if self.kind == "power" and not self.s > 1:
            raise StructureError("power decay needs s > 1 for summability")
        if self.kind == "geometric" and not 0 < self.rho < 1:
            raise StructureError("geometric decay needs 0 < rho < 1")

    @classmethod
    def power(cls, C: float, s: float) -> "ErrorInjector":
        return cls("power", C=float(C), s=float(s))

    @classmethod
    def geometric(cls, C: float, rho: float) -> "ErrorInjector":
        return cls("geometric", C=float(C), rho=float(rho))

    @property
    def active(self) -> bool:
        return self.kind != "none"

    def bound(self, n: int) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "power":
            return self.C * (n + 1.0) ** (-self.s)
        return self.C * self.rho ** n


def sample_error(e: ErrorInjector, n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Vector of norm ``e.bound(n)`` in a uniformly random direction."""
    if n < 0:
        raise ValueError("iteration index must be nonnegative")
    if not e.active:
        return np.zeros(dim)
    g = rng.standard_normal(dim)
    nrm = np.linalg.norm(g)
    while nrm == 0.0:
        g = rng.standard_normal(dim)
        nrm = np.linalg.norm(g)
    return g * (e.bound(n) / nrm)


class ErrorStreams:
    """One injector and one RNG stream per named channel.

    Parameters
    ----------
    injectors : dict
        channel name -> ErrorInjector; missing channels are error free.
    seed : int
    """

    def __init__(self, injectors: dict, seed: int = 0):
        self.injectors = {k: v for k, v in injectors.items() if v.active}
        names = sorted(self.injectors)
        children = np.random.SeedSequence(seed).spawn(len(names)) if names else []
        self.rngs = {k: np.random.default_rng(ss) for k, ss in zip(names, children)}

    @property
    def active(self) -> bool:
        return bool(self.injectors)

    def draw(self, channel: str, n: int, dims) -> list | None:
        """Error vector for ``channel`` split into blocks of sizes ``dims``."""
        inj = self.injectors.get(channel)
        if inj is None:
            return None
        dims = tuple(dims)
        if len(dims) == 1:
            return [sample_error(inj, n, dims[0], self.rngs[channel])]
        vec = sample_error(inj, n, int(sum(dims)), self.rngs[channel])
        out, k = [], 0
        for dj in dims:
            out.append(vec[k:k + dj])
            k += dj
        return out
