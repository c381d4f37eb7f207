"""Block vectors, block operator matrices and diagonal metrics.

Everything here lives on a finite Hilbert direct sum ``R^{n_1} + ... + R^{n_p}``
with the sum of blockwise Euclidean inner products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import NormEstimateError, StructureError

POWER_MAX_ITERS = 10_000


def _as_vector(a) -> np.ndarray:
    v = np.array(a, dtype=float).reshape(-1)
    if v.size == 0:
        raise StructureError("blocks must be nonempty")
    return v


class BlockVector:
    """Ordered list of dense real blocks.

    The blocks are copied on construction; operations return new objects.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks: Iterable):
        bl = [_as_vector(b) for b in blocks]
        if not bl:
            raise StructureError("a block vector needs at least one block")
        self.blocks = bl

    @classmethod
    def wrap(cls, blocks: list) -> "BlockVector":
        """Adopt a list of 1-D float arrays without copying or validation."""
        obj = cls.__new__(cls)
        obj.blocks = blocks
        return obj

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "BlockVector":
        return cls(np.zeros(int(d)) for d in dims)

    @classmethod
    def from_flat(cls, flat, dims: Sequence[int]) -> "BlockVector":
        flat = np.asarray(flat, dtype=float).reshape(-1)
        if flat.size != sum(dims):
            raise StructureError(f"flat length {flat.size} != sum of dims {sum(dims)}")
        cuts = np.cumsum(dims)[:-1]
        return cls(np.split(flat, cuts))

    @property
    def dims(self) -> tuple:
        return tuple(b.size for b in self.blocks)

    def __len__(self):
        return len(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    def copy(self) -> "BlockVector":
        return BlockVector(self.blocks)

    def dot(self, other: "BlockVector") -> float:
        _check_dims(self.dims, other.dims)
        return float(sum(a @ b for a, b in zip(self.blocks, other.blocks)))

    def norm(self) -> float:
        return float(np.sqrt(sum(b @ b for b in self.blocks)))

    def __add__(self, other):
        _check_dims(self.dims, other.dims)
        return BlockVector(a + b for a, b in zip(self.blocks, other.blocks))

    def __sub__(self, other):
        _check_dims(self.dims, other.dims)
        return BlockVector(a - b for a, b in zip(self.blocks, other.blocks))

    def __mul__(self, c: float):
        return BlockVector(c * a for a in self.blocks)

    __rmul__ = __mul__

    def equal(self, other: "BlockVector") -> bool:
        """Exact (bitwise) blockwise equality."""
        return self.dims == other.dims and all(
            np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks)
        )

    def __repr__(self):
        return f"BlockVector(dims={self.dims})"


def _check_dims(a, b):
    if tuple(a) != tuple(b):
        raise StructureError(f"block dimensions differ: {tuple(a)} vs {tuple(b)}")


@dataclass(frozen=True)
class LinearBlock:
    """Dense matrix acting between two blocks; ``zero`` blocks act as the 0 map."""

    entries: np.ndarray
    zero: bool = False

    def __post_init__(self):
        e = np.array(self.entries, dtype=float, ndmin=2)
        if e.ndim != 2 or e.size == 0:
            raise StructureError("a linear block needs a nonempty 2-D matrix")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "LinearBlock":
        return cls(np.zeros((rows, cols)), zero=True)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.zero:
            return np.zeros(self.rows)
        return self.entries @ x

    def adjoint(self) -> "LinearBlock":
        return LinearBlock(self.entries.T, zero=self.zero)

    def adjoint_apply(self, v: np.ndarray) -> np.ndarray:
        if self.zero:
            return np.zeros(self.cols)
        return self.entries.T @ v


class BlockOperatorMatrix:
    """Sparse q-by-p grid of linear blocks ``L[k, j]`` from the primal to the dual space.

    Zero blocks (tagged or all-zero) are not stored. Every row and every
    column must keep at least one stored block.

    Parameters
    ----------
    blocks : mapping
        ``(k, j) -> matrix or LinearBlock``.
    row_dims, col_dims : sequence of int
        Dimensions of the q dual blocks and the p primal blocks.
    """

    def __init__(self, blocks: Mapping, row_dims: Sequence[int], col_dims: Sequence[int]):
        self.row_dims = tuple(int(r) for r in row_dims)
        self.col_dims = tuple(int(c) for c in col_dims)
        if not self.row_dims or not self.col_dims:
            raise StructureError("need q >= 1 and p >= 1")
        stored = {}
        for (k, j), blk in blocks.items():
            if not (0 <= k < self.q and 0 <= j < self.p):
                raise StructureError(f"block index {(k, j)} outside {self.q}x{self.p} grid")
            lb = blk if isinstance(blk, LinearBlock) else LinearBlock(blk)
            if lb.entries.shape != (self.row_dims[k], self.col_dims[j]):
                raise StructureError(
                    f"block {(k, j)} has shape {lb.entries.shape}, "
                    f"expected {(self.row_dims[k], self.col_dims[j])}"
                )
            if lb.zero or not np.any(lb.entries):
                continue
            stored[(int(k), int(j))] = lb
        self.blocks = stored
        self.row_support = tuple(
            tuple(sorted(j for (kk, j) in stored if kk == k)) for k in range(self.q)
        )
        self.col_support = tuple(
            tuple(sorted(k for (k, jj) in stored if jj == j)) for j in range(self.p)
        )
        for k, s in enumerate(self.row_support):
            if not s:
                raise StructureError(f"row {k} of L has no nonzero block")
        for j, s in enumerate(self.col_support):
            if not s:
                raise StructureError(f"column {j} of L has no nonzero block")

    @property
    def q(self) -> int:
        return len(self.row_dims)

    @property
    def p(self) -> int:
        return len(self.col_dims)

    def block(self, k: int, j: int) -> np.ndarray:
        return self.blocks[(k, j)].entries

    def apply(self, x: BlockVector) -> BlockVector:
        _check_dims(x.dims, self.col_dims)
        out = []
        for k in range(self.q):
            acc = np.zeros(self.row_dims[k])
            for j in self.row_support[k]:
                acc += self.blocks[(k, j)].entries @ x.blocks[j]
            out.append(acc)
        return BlockVector(out)

    def adjoint_apply(self, v: BlockVector) -> BlockVector:
        _check_dims(v.dims, self.row_dims)
        out = []
        for j in range(self.p):
            acc = np.zeros(self.col_dims[j])
            for k in self.col_support[j]:
                acc += self.blocks[(k, j)].entries.T @ v.blocks[k]
            out.append(acc)
        return BlockVector(out)

    def to_dense(self) -> np.ndarray:
        rs = np.concatenate([[0], np.cumsum(self.row_dims)])
        cs = np.concatenate([[0], np.cumsum(self.col_dims)])
        out = np.zeros((rs[-1], cs[-1]))
        for (k, j), blk in self.blocks.items():
            out[rs[k]:rs[k + 1], cs[j]:cs[j + 1]] = blk.entries
        return out

    def scaled(self, c: float) -> "BlockOperatorMatrix":
        return BlockOperatorMatrix(
            {kj: c * b.entries for kj, b in self.blocks.items()}, self.row_dims, self.col_dims
        )


@dataclass(frozen=True)
class DiagonalMetric:
    """Per-block positive diagonal operator."""

    diags: tuple = field()

    def __post_init__(self):
        ds = tuple(_as_vector(d) for d in self.diags)
        if not ds:
            raise StructureError("a metric needs at least one block")
        for d in ds:
            if not np.all(d > 0) or not np.all(np.isfinite(d)):
                raise StructureError("metric entries must be finite and strictly positive")
            d.setflags(write=False)
        object.__setattr__(self, "diags", ds)

    @classmethod
    def scalar(cls, value: float, dims: Sequence[int]) -> "DiagonalMetric":
        return cls(tuple(np.full(int(d), float(value)) for d in dims))

    @classmethod
    def scalars(cls, values: Sequence[float], dims: Sequence[int]) -> "DiagonalMetric":
        return cls(tuple(np.full(int(d), float(v)) for v, d in zip(values, dims)))

    @property
    def dims(self) -> tuple:
        return tuple(d.size for d in self.diags)

    def __len__(self):
        return len(self.diags)

    def __getitem__(self, j) -> np.ndarray:
        return self.diags[j]

    def sqrt(self) -> "DiagonalMetric":
        return DiagonalMetric(tuple(np.sqrt(d) for d in self.diags))

    def inv(self) -> "DiagonalMetric":
        return DiagonalMetric(tuple(1.0 / d for d in self.diags))

    def block_norms(self) -> np.ndarray:
        """Operator norm of each block, i.e. its largest diagonal entry."""
        return np.array([d.max() for d in self.diags])

    def apply(self, x: BlockVector) -> BlockVector:
        _check_dims(x.dims, self.dims)
        return BlockVector(d * b for d, b in zip(self.diags, x.blocks))


def _scaled_dense(L: BlockOperatorMatrix, W: DiagonalMetric, U: DiagonalMetric) -> np.ndarray:
    _check_dims(W.dims, L.col_dims)
    _check_dims(U.dims, L.row_dims)
    w = np.sqrt(np.concatenate(W.diags))
    u = np.sqrt(np.concatenate(U.diags))
    return u[:, None] * L.to_dense() * w[None, :]


def power_norm(K: np.ndarray, tol: float = 1e-10, max_iters: int = POWER_MAX_ITERS,
               seed: int = 0) -> float:
    """Spectral norm of a dense matrix by power iteration on ``K^T K``.

    Starts from the normalized all-ones vector and stops once two successive
    Rayleigh quotients differ by less than ``tol`` times the current one.
    If the start vector is annihilated while ``K`` is nonzero, the iteration
    restarts once from a seeded Gaussian vector.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    K = np.asarray(K, dtype=float)
    if not np.any(K):
        return 0.0
    n = K.shape[1]
    x = np.ones(n) / np.sqrt(n)
    y = K.T @ (K @ x)
    if not np.any(y):
        x = np.random.default_rng(seed).standard_normal(n)
        x /= np.linalg.norm(x)
        y = K.T @ (K @ x)
    rho = float(x @ y)
    for it in range(1, max_iters + 1):
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        y = K.T @ (K @ x)
        new = float(x @ y)
        if abs(new - rho) < tol * new:
            return float(np.sqrt(new))
        rho = new
    lo, hi = sorted((np.sqrt(max(rho, 0.0)), np.sqrt(max(new, 0.0))))
    raise NormEstimateError(
        f"power iteration did not converge in {max_iters} iterations", (lo, hi), max_iters
    )


def scaled_norm(L: BlockOperatorMatrix, W: DiagonalMetric, U: DiagonalMetric,
                tol: float = 1e-10) -> float:
    """Estimate ``||U^{1/2} L W^{1/2}||`` by power iteration."""
    return power_norm(_scaled_dense(L, W, U), tol=tol)


def scaled_norm_bound(L: BlockOperatorMatrix, W: DiagonalMetric, U: DiagonalMetric) -> float:
    """Block-sum upper bound ``(sum_kj ||U_k^{1/2} L_kj W_j^{1/2}||^2)^{1/2}``.

    Each block norm is computed exactly by SVD.
    """
    _check_dims(W.dims, L.col_dims)
    _check_dims(U.dims, L.row_dims)
    total = 0.0
    for (k, j), blk in L.blocks.items():
        S = np.sqrt(U[k])[:, None] * blk.entries * np.sqrt(W[j])[None, :]
        total += np.linalg.norm(S, 2) ** 2
    return float(np.sqrt(total))
