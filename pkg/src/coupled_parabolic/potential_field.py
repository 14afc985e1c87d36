"""Matrix potentials on a grid and the convergence classifier.

A :class:`PotentialField` stores one N x N matrix per grid cell. ``classify``
evaluates the pointwise criteria of :mod:`matrix_analysis` on every cell (the
grid surrogate of "almost everywhere"), searches common kernels and a
simultaneous diagonalisation, and ``predict`` turns the resulting report into
a convergence verdict by a fixed rule cascade.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.optimize
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import matrix_analysis as ma

KERNEL_RTOL = 1e-8
POSITIVE_RTOL = 1e-9
DIAG_RTOL = 1e-8
CONSTANT_ATOL = 1e-14
CURVE_CONST_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on the box ``[0, L_1] x ... x [0, L_d]``."""

    extents: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        if len(self.extents) != len(self.cells) or len(self.cells) not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2 with one extent per axis")
        if any(c < 2 for c in self.cells):
            raise ValueError(f"need at least 2 cells per axis, got {self.cells}")
        if any(not (e > 0 and np.isfinite(e)) for e in self.extents):
            raise ValueError(f"extents must be positive, got {self.extents}")

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / c for e, c in zip(self.extents, self.cells))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        return float(np.prod(self.extents))

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centres, shape ``(n_cells, d)``, in C order over the axes."""
        mesh = np.meshgrid(*(self.axis_centers(a) for a in range(self.dim)),
                           indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class PotentialField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.dtype.kind == "c" and not np.any(vals.imag):
            vals = vals.real
        vals = np.array(vals, dtype=complex if vals.dtype.kind == "c" else float)
        if vals.ndim == 2:
            vals = np.broadcast_to(vals, (self.grid.n_cells, *vals.shape)).copy()
        if vals.ndim != 3 or vals.shape[1] != vals.shape[2] or vals.shape[1] < 1:
            raise ValueError(f"potential values must have shape (cells, N, N), got {vals.shape}")
        if vals.shape[0] != self.grid.n_cells:
            raise ValueError(
                f"potential has {vals.shape[0]} cells, grid has {self.grid.n_cells}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("potential entries must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: Grid, M) -> PotentialField:
        return cls(grid, ma.as_matrix(M))

    @classmethod
    def from_function(cls, grid: Grid, f) -> PotentialField:
        return cls(grid, np.array([f(x) for x in grid.centers]))

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def real_valued(self) -> bool:
        return self.values.dtype.kind != "c"

    @property
    def constant_valued(self) -> bool:
        return bool(np.all(np.abs(self.values - self.values[0]) <= CONSTANT_ATOL))

    @cached_property
    def max_norm2(self) -> float:
        return float(np.max(np.linalg.norm(self.values, 2, axis=(1, 2))))

    def scaled(self, c: float) -> PotentialField:
        return PotentialField(self.grid, c * self.values)

    def unique_matrices(self) -> np.ndarray:
        return np.unique(self.values, axis=0)


def _phase_normalize(v: np.ndarray) -> np.ndarray:
    big = np.max(np.abs(v))
    k = int(np.argmax(np.abs(v) > 1e-12 * big))
    v = v * (abs(v[k]) / v[k])
    v.real[np.abs(v.real) < 1e-15 * big] = 0.0
    if np.iscomplexobj(v):
        v.imag[np.abs(v.imag) < 1e-15 * big] = 0.0
    return v


def common_kernel(V: PotentialField, beta: float) -> np.ndarray:
    """Orthonormal basis (columns) of the intersection of ``ker(i beta - V(x))``.

    All cell matrices are stacked into one tall matrix whose numerical
    nullspace is read off an SVD. An ``(N, 0)`` array means the intersection
    is trivial.
    """
    n = V.n
    if beta == 0 and V.real_valued:
        stack = -V.values
    else:
        stack = 1j * beta * np.eye(n) - V.values
    stack = stack.reshape(-1, n)
    tol = KERNEL_RTOL * (abs(beta) + V.max_norm2)
    _, s, vh = np.linalg.svd(stack, full_matrices=True)
    rank = int(np.count_nonzero(s > tol))
    basis = vh[rank:].conj().T
    if basis.shape[1] == 1:
        basis = _phase_normalize(basis[:, 0])[:, None]
        if np.iscomplexobj(basis) and not np.any(np.abs(basis.imag) > 1e-15):
            basis = basis.real
    return basis


def imaginary_eigen_candidates(V: PotentialField, reference_cell: int = 0) -> list[float]:
    """Nonzero ``beta`` with ``i beta`` an eigenvalue of ``V`` at one reference cell.

    A nontrivial common kernel for ``i beta`` forces ``i beta`` into the spectrum
    of every cell, so one cell suffices. Real fields have conjugate-symmetric
    spectra and only ``beta > 0`` is returned; complex fields keep both signs.
    """
    M = V.values[reference_cell]
    tol = KERNEL_RTOL * max(1.0, float(np.linalg.norm(M, 2)))
    eigs = ma.spectrum(M)
    on_axis = eigs[(np.abs(eigs.real) <= tol) & (np.abs(eigs.imag) > tol)]
    betas = on_axis.imag
    if V.real_valued:
        betas = betas[betas > 0]
    out: list[float] = []
    for b in np.sort(betas):
        if not out or abs(b - out[-1]) > tol:
            out.append(float(b))
    return out


def positive_kernel_vector(V: PotentialField) -> np.ndarray | None:
    """Strictly positive ``z`` with ``V(x) z = 0`` on every cell, or None.

    The result is scaled to ``max(z) = 1``. For a kernel of dimension > 1 a
    small LP maximises ``min(z)`` over kernel vectors with ``||z||_inf <= 1``.
    """
    if not V.real_valued:
        return None
    B = common_kernel(V, 0.0)
    k = B.shape[1]
    if k == 0:
        return None
    B = np.real(B)
    if k == 1:
        v = B[:, 0]
        v = v * np.sign(v[np.argmax(np.abs(v))])
        vmax = float(np.max(np.abs(v)))
        if np.min(v) > POSITIVE_RTOL * vmax:
            return v / vmax
        return None
    n = B.shape[0]
    # variables (c_1..c_k, t): maximise t s.t. Bc >= t, -1 <= Bc <= 1
    cost = np.zeros(k + 1)
    cost[-1] = -1.0
    A_ub = np.block([
        [-B, np.ones((n, 1))],
        [B, np.zeros((n, 1))],
        [-B, np.zeros((n, 1))],
    ])
    b_ub = np.concatenate([np.zeros(n), np.ones(n), np.ones(n)])
    res = scipy.optimize.linprog(cost, A_ub=A_ub, b_ub=b_ub,
                                 bounds=[(None, None)] * (k + 1), method="highs")
    if not res.success or res.x[-1] <= POSITIVE_RTOL:
        return None
    z = B @ res.x[:k]
    return z / np.max(z)


@dataclass(frozen=True)
class Diagonalizer:
    """``U V(x) U^{-1} = diag(curves[x])`` on every cell."""

    U: np.ndarray
    curves: np.ndarray
    reference_cell: int
    off_diagonal: float

    def to_dict(self) -> dict:
        return {
            "U": _complex_matrix(self.U),
            "reference_cell": self.reference_cell,
            "off_diagonal": self.off_diagonal,
            "curves": [
                {"first_cell": _cpx(c[0]), "min_re": float(c.real.min()),
                 "max_re": float(c.real.max()), "constant": bool(k)}
                for c, k in zip(self.curves.T, self.constant_curves())
            ],
        }

    def constant_curves(self) -> np.ndarray:
        spread = np.max(np.abs(self.curves - self.curves[0]), axis=0)
        return spread <= CURVE_CONST_TOL * np.maximum(1.0, np.abs(self.curves[0]))


def _min_separation(eigs: np.ndarray) -> float:
    if eigs.size < 2:
        return np.inf
    d = np.abs(eigs[:, None] - eigs[None, :])
    return float(np.min(d[~np.eye(eigs.size, dtype=bool)]))


def simultaneous_diagonalizer(V: PotentialField) -> Diagonalizer | None:
    """Common eigenbasis of all cell matrices, or None.

    The basis is taken from the cell whose eigenvalues are best separated;
    a defective reference matrix gives None.
    """
    seps = [_min_separation(ma.spectrum(M)) for M in V.values]
    ref = int(np.argmax(seps))
    eigs, S = np.linalg.eig(V.values[ref])
    order = np.lexsort((np.angle(eigs), np.round(np.abs(eigs), 12)))
    eigs, S = eigs[order], S[:, order]
    if np.linalg.cond(S) > 1e8:
        return None
    U = np.linalg.inv(S)
    D = U @ V.values @ S
    n = V.n
    off = D[:, ~np.eye(n, dtype=bool)]
    off_max = float(np.max(np.abs(off))) if off.size else 0.0
    if off_max > DIAG_RTOL * V.max_norm2:
        return None
    curves = np.diagonal(D, axis1=1, axis2=2).copy()
    return Diagonalizer(U, curves, ref, off_max)


def coupling_graph_irreducible(V: PotentialField) -> bool:
    """Strong connectivity of the digraph of nonzero off-diagonal components."""
    n = V.n
    if n == 1:
        return True
    W = np.any(np.abs(V.values) > CONSTANT_ATOL, axis=0)
    np.fill_diagonal(W, False)
    ncomp, _ = connected_components(csr_matrix(W.astype(int)), directed=True,
                                    connection="strong")
    return ncomp == 1


@dataclass(frozen=True, eq=False)
class ClassificationReport:
    """Cellwise criteria aggregated by conjunction over the grid."""

    n: int
    real_valued: bool
    constant: bool
    quasi_positive: bool | None
    l1: bool | None
    l2: bool
    linf: bool | None
    margins: dict
    lp_numeric: tuple
    imaginary_kernels: tuple
    positive_kernel_vector: np.ndarray | None
    diagonalizer: Diagonalizer | None
    irreducible: bool
    constant_exp: ma.ExpConvergenceVerdict | None
    scale: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "real_valued": self.real_valued,
            "constant": self.constant,
            "quasi_positive": self.quasi_positive,
            "l1_dissipative": self.l1,
            "l2_dissipative": self.l2,
            "linf_dissipative": self.linf,
            "margins": dict(self.margins),
            "lp_numeric": [{"p": p, "dissipative": ok, "verdict": "numeric"}
                           for p, ok in self.lp_numeric],
            "imaginary_kernels": [
                {"beta": b, "basis": [_complex_vector(v) for v in basis.T]}
                for b, basis in self.imaginary_kernels
            ],
            "positive_kernel_vector": (None if self.positive_kernel_vector is None
                                       else [float(x) for x in self.positive_kernel_vector]),
            "diagonalizer": None if self.diagonalizer is None else self.diagonalizer.to_dict(),
            "irreducible": self.irreducible,
            "constant_exp": None if self.constant_exp is None else self.constant_exp.to_dict(),
        }


def classify(V: PotentialField, numeric_p=(), reference_cell: int = 0,
             sampler: ma.SampleSpec | None = None) -> ClassificationReport:
    reports = [ma.dissipativity_report(M, numeric_p, sampler) for M in V.unique_matrices()]

    def every(attr):
        vals = [getattr(r, attr) for r in reports]
        return None if any(v is None for v in vals) else all(vals)

    margins = {}
    for key in ("1", "2", "inf"):
        if all(key in r.margins for r in reports):
            margins[key] = min(r.margins[key] for r in reports)
    lp_numeric = tuple(
        (float(p), all(r.numeric[i][1] for r in reports)) for i, p in enumerate(numeric_p)
    )
    kernels = tuple((b, common_kernel(V, b))
                    for b in imaginary_eigen_candidates(V, reference_cell))
    constant = V.constant_valued
    return ClassificationReport(
        n=V.n,
        real_valued=V.real_valued,
        constant=constant,
        quasi_positive=every("quasi_positive"),
        l1=every("l1"),
        l2=every("l2"),
        linf=every("linf"),
        margins=margins,
        lp_numeric=lp_numeric,
        imaginary_kernels=kernels,
        positive_kernel_vector=positive_kernel_vector(V),
        diagonalizer=simultaneous_diagonalizer(V),
        irreducible=coupling_graph_irreducible(V),
        constant_exp=ma.exp_converges(V.values[0]) if constant else None,
        scale=max(1.0, V.max_norm2),
    )


class Verdict(str, enum.Enum):
    CONVERGES = "Converges"
    DOES_NOT_CONVERGE = "DoesNotConverge"
    UNKNOWN = "Unknown"


class Rule(str, enum.Enum):
    LP_DISSIPATIVE = "lp-dissipative"
    L2_DISSIPATIVE = "l2-dissipative"
    QUASI_POSITIVE_KERNEL = "quasi-positive-kernel"
    CONSTANT_POTENTIAL = "constant-potential"
    DECOUPLED_SYSTEM = "decoupled-system"
    NONE = "none"

    @property
    def number(self) -> int:
        return list(Rule).index(self) + 1


@dataclass(frozen=True, eq=False)
class Witness:
    """Evidence for non-convergence.

    ``common_kernel``: a spatially constant mode ``vector`` with eigenvalue
    ``i beta``. ``eigen_curve``: decoupled component ``component`` (1-based)
    whose curve is the constant ``value``. ``matrix_mode``: an eigenpair of a
    constant potential whose exponential does not converge.
    """

    kind: str
    beta: float | None = None
    vector: np.ndarray | None = None
    component: int | None = None
    value: complex | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "beta": self.beta,
            "vector": None if self.vector is None else _complex_vector(self.vector),
            "component": self.component,
            "value": None if self.value is None else _cpx(self.value),
        }


@dataclass(frozen=True, eq=False)
class Prediction:
    verdict: Verdict
    rule: Rule
    witness: Witness | None = None
    limit_rank_hint: str = "unknown"

    def __post_init__(self):
        if self.verdict is Verdict.DOES_NOT_CONVERGE and self.witness is None:
            raise ValueError("DoesNotConverge needs a witness")
        if self.verdict is Verdict.CONVERGES and self.rule is Rule.NONE:
            raise ValueError("Converges needs a rule")

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "rule": self.rule.value,
            "rule_number": self.rule.number,
            "witness": None if self.witness is None else self.witness.to_dict(),
            "limit_rank_hint": self.limit_rank_hint,
        }


def _constant_witness(report: ClassificationReport) -> Witness:
    verdict = report.constant_exp
    tol = verdict.tol
    diag = report.diagonalizer
    if diag is not None:
        lam = diag.curves[0]
        bad = (lam.real > tol) | ((np.abs(lam.real) <= tol) & (np.abs(lam.imag) > tol))
        if np.any(bad):
            k = int(np.argmax(bad))
            return Witness("eigen_curve", component=k + 1, value=complex(lam[k]))
    for b, basis in report.imaginary_kernels:
        if basis.shape[1]:
            return Witness("common_kernel", beta=b, vector=basis[:, 0])
    return Witness("matrix_mode", value=complex(verdict.spectral_bound))


def predict(report: ClassificationReport, diffusion_identical: bool) -> Prediction:
    """First matching rule wins; ``Unknown`` is a legitimate outcome."""
    if report.real_valued and (report.l1 or report.linf):
        return Prediction(Verdict.CONVERGES, Rule.LP_DISSIPATIVE)

    if report.l2:
        for b, basis in report.imaginary_kernels:
            if basis.shape[1]:
                return Prediction(Verdict.DOES_NOT_CONVERGE, Rule.L2_DISSIPATIVE,
                                  Witness("common_kernel", beta=b, vector=basis[:, 0]))
        return Prediction(Verdict.CONVERGES, Rule.L2_DISSIPATIVE)

    if report.real_valued and report.quasi_positive and report.positive_kernel_vector is not None:
        hint = "zero-or-rank-1" if report.irreducible else "unknown"
        return Prediction(Verdict.CONVERGES, Rule.QUASI_POSITIVE_KERNEL, limit_rank_hint=hint)

    if report.constant and diffusion_identical:
        if report.constant_exp.converges:
            return Prediction(Verdict.CONVERGES, Rule.CONSTANT_POTENTIAL)
        return Prediction(Verdict.DOES_NOT_CONVERGE, Rule.CONSTANT_POTENTIAL,
                          _constant_witness(report))

    diag = report.diagonalizer
    if diag is not None and diffusion_identical:
        tol = KERNEL_RTOL * report.scale
        if np.max(diag.curves.real) <= tol:
            const = diag.constant_curves()
            lam0 = diag.curves[0]
            for k in range(report.n):
                if const[k] and abs(lam0[k].real) <= tol and abs(lam0[k].imag) > tol:
                    return Prediction(Verdict.DOES_NOT_CONVERGE, Rule.DECOUPLED_SYSTEM,
                                      Witness("eigen_curve", component=k + 1,
                                              value=complex(lam0[k])))
            return Prediction(Verdict.CONVERGES, Rule.DECOUPLED_SYSTEM)

    return Prediction(Verdict.UNKNOWN, Rule.NONE)


def _cpx(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _complex_vector(v) -> list[list[float]]:
    return [_cpx(z) for z in np.asarray(v).ravel()]


def _complex_matrix(M) -> list[list[list[float]]]:
    return [_complex_vector(row) for row in np.asarray(M)]
