"""Spectrum of the assembled block operator and its limit projection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import DENSE_CAP, BlockOperator

BOUNDARY_RTOL = 1e-8
SEMISIMPLE_RTOL = 1e-6
POLISH_RTOL = 1e-6
POLISH_MAX = 64


class NoLimitError(RuntimeError):
    """The semigroup has no limit: imaginary or growing boundary spectrum."""

    def __init__(self, message: str, beta: float | None = None):
        super().__init__(message)
        self.beta = beta


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray
    spectral_bound: float
    boundary_spectrum: np.ndarray
    gap: float
    tol: float

    @property
    def imaginary_axis(self) -> np.ndarray:
        """Eigenvalues within ``tol`` of ``iR \\ {0}``."""
        e = self.eigenvalues
        return e[(np.abs(e.real) <= self.tol) & (np.abs(e.imag) > self.tol)]

    def to_dict(self) -> dict:
        return {
            "size": int(self.eigenvalues.size),
            "spectral_bound": self.spectral_bound,
            "boundary_spectrum": [[z.real, z.imag] for z in self.boundary_spectrum],
            "imaginary_axis": [[z.real, z.imag] for z in self.imaginary_axis],
            "gap": self.gap,
            "tol": self.tol,
        }


def _scale(L: BlockOperator) -> float:
    return max(1.0, L.potential.max_norm2)


def _polish(A: sp.csr_matrix, lam: complex, scale: float) -> complex:
    """Two-sided Rayleigh quotient after inverse iteration at ``lam``.

    Dense QR leaves errors of order eps * ||A|| in every eigenvalue; near the
    imaginary axis that is the difference between decay and oscillation.
    """
    n = A.shape[0]
    shift = lam + 1e-10 * scale * (1 + 1j)
    try:
        lu = spla.splu(sp.csc_matrix(A - shift * sp.identity(n, dtype=complex)))
    except RuntimeError:
        return lam
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    y = x.copy()
    for _ in range(2):
        x = lu.solve(x)
        x /= np.linalg.norm(x)
        y = lu.solve(y, trans="H")
        y /= np.linalg.norm(y)
    Ax = A @ x
    d = np.vdot(y, x)
    new = np.vdot(y, Ax) / d if abs(d) > 1e-8 else np.vdot(x, Ax)
    return complex(new) if abs(new - lam) <= POLISH_RTOL * scale else lam


def spectrum_block(L: BlockOperator) -> SpectrumReport:
    """Dense eigendecomposition of the block operator (size <= 4096).

    Eigenvalues near the imaginary axis or the spectral bound are refined
    on the sparse operator.
    """
    if L.size > DENSE_CAP:
        raise ValueError(f"operator size {L.size} exceeds {DENSE_CAP}; coarsen the grid")
    eigs = scipy.linalg.eigvals(L.dense()).astype(complex)
    scale = _scale(L)
    band = POLISH_RTOL * scale
    near = np.nonzero((np.abs(eigs.real) <= band) | (eigs.real >= eigs.real.max() - band))[0]
    if near.size <= POLISH_MAX:
        A = L.sparse().astype(complex)
        for i in near:
            eigs[i] = _polish(A, eigs[i], scale)
    eigs = eigs[np.lexsort((eigs.imag, -eigs.real))]
    tol = BOUNDARY_RTOL * scale
    s = float(eigs.real.max())
    boundary = eigs[eigs.real >= s - tol]
    rest = eigs[eigs.real < s - tol]
    gap = float(s - rest.real.max()) if rest.size else 0.0
    return SpectrumReport(eigs, s, boundary, gap, tol)


@dataclass(frozen=True, eq=False)
class LimitProjection:
    P: np.ndarray
    rank: int

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Limit of a state of shape ``(n_cells, N)``."""
        return (self.P @ np.ravel(u)).reshape(np.shape(u))


def limit_projection(L: BlockOperator, report: SpectrumReport) -> LimitProjection:
    """Spectral projection onto ``ker L`` (the limit of ``exp(tL)``).

    Raises :class:`NoLimitError` for nonzero imaginary boundary spectrum,
    positive spectral bound, or a non-semisimple eigenvalue 0.
    """
    tol = report.tol
    size = L.size
    if report.spectral_bound < -tol:
        return LimitProjection(np.zeros((size, size)), 0)
    if report.spectral_bound > tol:
        raise NoLimitError(f"spectral bound {report.spectral_bound:.3g} > 0")
    off = report.boundary_spectrum[np.abs(report.boundary_spectrum.imag) > tol]
    if off.size:
        beta = float(np.abs(off.imag).min())
        raise NoLimitError(f"imaginary boundary eigenvalue i*{beta:.6g}", beta=beta)

    mult = int(np.count_nonzero(np.abs(report.eigenvalues) <= tol))
    A = L.dense()
    U, s, Vh = np.linalg.svd(A)
    if mult and s[size - mult] > SEMISIMPLE_RTOL * _scale(L):
        raise NoLimitError("eigenvalue 0 is not semisimple")
    R = Vh[size - mult:].conj().T          # right kernel
    W = U[:, size - mult:]                 # left kernel: W^* A = 0
    P = R @ np.linalg.solve(W.conj().T @ R, W.conj().T)
    if not np.iscomplexobj(A):
        P = P.real
    rank = int(round(float(np.real(np.trace(P)))))
    return LimitProjection(P, rank)


def eigenvector_constancy(L: BlockOperator, eigenvector) -> float:
    """Largest per-component spatial variance of ``v``, relative to ``||v||^2``.

    ``eigenvector`` may be flat (cell-major) or shaped ``(n_cells, N)``.
    """
    v = np.asarray(eigenvector).reshape(L.potential.grid.n_cells, L.n)
    total = float(np.sum(np.abs(v) ** 2))
    if total == 0:
        raise ValueError("zero vector")
    var = np.mean(np.abs(v - v.mean(axis=0)) ** 2, axis=0)
    return float(var.max() / total)
