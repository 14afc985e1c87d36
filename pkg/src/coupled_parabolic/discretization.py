"""Finite-volume diffusion operators with Neumann boundary conditions.

Cell-centred stencils on the uniform grids of :mod:`potential_field`. Face
coefficients are harmonic means of the adjacent cell values and boundary
fluxes vanish, so every assembled operator is a symmetric, negative
semidefinite matrix with zero row sums and nonnegative off-diagonals.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .potential_field import Grid, PotentialField

log = logging.getLogger(__name__)

DENSE_CAP = 4096


class CoercivityError(ValueError):
    """Raised for nonpositive diffusion coefficients."""


@dataclass(frozen=True, eq=False)
class DiffusionField:
    """Per-equation diffusion coefficients sampled at cell centres.

    ``coefficients`` has shape ``(N, n_cells, d)``: one diagonal entry of
    ``A_k(x)`` per axis (isotropic input is broadcast across axes).
    """

    grid: Grid
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        g = self.grid
        if c.ndim == 2:
            c = np.repeat(c[:, :, None], g.dim, axis=2)
        if c.ndim != 3 or c.shape[1:] != (g.n_cells, g.dim):
            raise ValueError(
                f"coefficients must have shape (N, {g.n_cells}, {g.dim}), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("diffusion coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def identical(cls, grid: Grid, n: int, coef) -> DiffusionField:
        c = np.asarray(coef, dtype=float)
        if c.ndim == 0:
            c = np.full(grid.n_cells, float(c))
        return cls(grid, np.stack([c] * n))

    @property
    def n(self) -> int:
        return self.coefficients.shape[0]

    @property
    def identical_equations(self) -> bool:
        return bool(np.all(self.coefficients == self.coefficients[0]))


def coercivity_check(field: DiffusionField) -> float:
    """Smallest coefficient over cells, equations and axes (the constant nu).

    Raises :class:`CoercivityError` if it is not strictly positive; logs a
    warning when it is small relative to the mesh width.
    """
    nu = float(np.min(field.coefficients))
    if not nu > 0:
        raise CoercivityError(f"diffusion coefficients must be > 0 (min is {nu})")
    if nu <= min(field.grid.spacing):
        log.warning("coercivity constant %.3g is of mesh-width size; "
                    "it degenerates under refinement", nu)
    return nu


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    matrix: sp.csr_matrix
    symmetric: bool = True

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, v):
        return self.matrix @ v


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def assemble_diffusion(grid: Grid, coef) -> DiscreteOperator:
    """Discrete ``u -> div(a grad u)`` with zero-flux boundaries.

    ``coef`` holds the cell-centre coefficient(s) of one equation: shape
    ``(n_cells,)`` for an isotropic coefficient or ``(n_cells, d)`` for a
    diagonal one.
    """
    c = np.asarray(coef, dtype=float)
    if c.ndim == 1:
        c = np.repeat(c[:, None], grid.dim, axis=1)
    if c.shape != (grid.n_cells, grid.dim):
        raise ValueError(f"coefficient shape {c.shape} does not match grid")
    if not np.all(c > 0):
        raise CoercivityError("diffusion coefficients must be strictly positive")

    idx = np.arange(grid.n_cells).reshape(grid.cells)
    rows, cols, vals = [], [], []
    for axis, h in enumerate(grid.spacing):
        ca = c[:, axis].reshape(grid.cells)
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        i, j = idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()
        w = _harmonic(ca[tuple(lo)], ca[tuple(hi)]).ravel() / h**2
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    off = sp.coo_matrix((vals, (rows, cols)), shape=(grid.n_cells,) * 2).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    A = (off + sp.diags(diag)).tocsr()
    A.sort_indices()
    return DiscreteOperator(A, symmetric=True)


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """``u -> (D_k u_k)_k + V(x) u(x)`` on states of shape ``(n_cells, N)``.

    The flat ordering used by :meth:`sparse` and :meth:`dense` is cell-major:
    entry ``c * N + k`` is component k at cell c.
    """

    operators: tuple[DiscreteOperator, ...]
    potential: PotentialField

    def __post_init__(self):
        ops = tuple(self.operators)
        object.__setattr__(self, "operators", ops)
        V = self.potential
        if len(ops) != V.n:
            raise ValueError(f"{len(ops)} diffusion operators for an N={V.n} potential")
        for op in ops:
            if op.shape != (V.grid.n_cells,) * 2:
                raise ValueError("diffusion operator does not match the potential grid")

    @property
    def n(self) -> int:
        return self.potential.n

    @property
    def size(self) -> int:
        return self.potential.grid.n_cells * self.n

    def apply(self, u) -> np.ndarray:
        u = np.asarray(u)
        if u.shape != (self.potential.grid.n_cells, self.n):
            raise ValueError(f"state shape {u.shape} does not match operator")
        out = np.einsum("cij,cj->ci", self.potential.values, u)
        for k, op in enumerate(self.operators):
            out[:, k] = out[:, k] + op.matrix @ u[:, k]
        return out

    def sparse(self) -> sp.csr_matrix:
        n = self.n
        blocks = []
        for k, op in enumerate(self.operators):
            e = sp.csr_matrix(([1.0], ([k], [k])), shape=(n, n))
            blocks.append(sp.kron(op.matrix, e))
        L = sum(blocks) + sp.block_diag(list(self.potential.values))
        return sp.csr_matrix(L)

    def dense(self) -> np.ndarray:
        if self.size > DENSE_CAP:
            raise ValueError(
                f"block operator of size {self.size} exceeds the dense cap {DENSE_CAP}; "
                "coarsen the grid")
        return self.sparse().toarray()


def assemble_block(operators, V: PotentialField) -> BlockOperator:
    return BlockOperator(tuple(operators), V)


def block_from_fields(diffusion: DiffusionField, V: PotentialField) -> BlockOperator:
    if diffusion.grid != V.grid:
        raise ValueError("diffusion and potential live on different grids")
    ops = [assemble_diffusion(diffusion.grid, c) for c in diffusion.coefficients]
    return assemble_block(ops, V)


def discrete_norm(u, grid: Grid, p) -> float:
    """Discrete ``L^p(Omega; C^N)`` norm of a state of shape ``(n_cells, N)``."""
    a = np.abs(np.asarray(u))
    if p == np.inf or p == "inf":
        return float(a.max())
    if p not in (1, 2):
        raise ValueError(f"p must be one of 1, 2, inf; got {p!r}")
    m = a.max()
    if m == 0 or not np.isfinite(m):
        return float(m)
    # scale first so that a**p neither underflows nor overflows
    return float(m * (grid.cell_volume * np.sum((a / m) ** p)) ** (1.0 / p))
