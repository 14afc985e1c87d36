"""Pointwise matrix criteria.

Dissipativity of a single N x N matrix with respect to the l^1, l^2, l^p and
l^inf norms, quasi-positivity, spectra, the matrix exponential and the
convergence of ``exp(tM)`` as ``t -> inf``.

Matrices are plain numpy arrays throughout. The real-only criteria (l^1,
l^inf, numeric l^p, quasi-positivity) raise ``ValueError`` on complex input.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

TOL_EIG = 1e-10
CONTRACTION_SLACK = 1e-9
DYADIC_T_GRID = tuple(2.0 ** k for k in range(-10, 5))

_NORM_ORDS = {1: 1, 2: 2, np.inf: np.inf}


def as_matrix(M) -> np.ndarray:
    """Validate and return ``M`` as a square 2-d array (float or complex)."""
    A = np.asarray(M)
    if A.dtype.kind not in "biufc":
        raise TypeError(f"matrix entries must be numeric, got dtype {A.dtype}")
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    if A.dtype.kind == "c":
        return A.astype(complex, copy=False)
    return A.astype(float, copy=False)


def is_real(M) -> bool:
    A = np.asarray(M)
    return A.dtype.kind != "c" or not np.any(A.imag)


def _real_only(M, what: str) -> np.ndarray:
    A = as_matrix(M)
    if not is_real(A):
        raise ValueError(f"{what} is only defined for real matrices")
    return np.real(A)


def _scale(A: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(A))))


def _norm_key(p):
    if p in (1, 2):
        return int(p)
    if p == np.inf or p == "inf":
        return np.inf
    raise ValueError(f"p must be one of 1, 2, inf; got {p!r}")


def log_norm(M, p) -> float:
    """Logarithmic norm ``mu_p(M)`` for p in {1, 2, inf}.

    M is l^p-dissipative iff ``mu_p(M) <= 0``; the negated value is the margin
    reported by :func:`dissipativity_report`.
    """
    A = as_matrix(M)
    p = _norm_key(p)
    if p == 2:
        herm = 0.5 * (A + A.conj().T)
        return float(np.linalg.eigvalsh(herm)[-1])
    absA = np.abs(A)
    diag = np.real(np.diag(A))
    off = absA - np.diag(np.diag(absA))
    if p == 1:
        return float(np.max(diag + off.sum(axis=0)))
    return float(np.max(diag + off.sum(axis=1)))


def is_quasi_positive(M) -> bool:
    """True iff every off-diagonal entry of the real matrix ``M`` is >= 0."""
    A = _real_only(M, "quasi-positivity")
    off = A[~np.eye(A.shape[0], dtype=bool)]
    return bool(np.all(off >= 0))


def is_l1_dissipative(M, tol: float = TOL_EIG) -> bool:
    """Column criterion ``c_kk <= -sum_{j != k} |c_jk|`` for every k."""
    A = _real_only(M, "l^1 dissipativity")
    return log_norm(A, 1) <= tol * _scale(A)


def is_linf_dissipative(M, tol: float = TOL_EIG) -> bool:
    """Row criterion ``c_kk <= -sum_{j != k} |c_kj|`` for every k."""
    A = _real_only(M, "l^inf dissipativity")
    return log_norm(A, np.inf) <= tol * _scale(A)


def is_l2_dissipative(M, tol: float = TOL_EIG) -> bool:
    """All eigenvalues of the Hermitian part ``(M + M*)/2`` are <= 0."""
    A = as_matrix(M)
    return log_norm(A, 2) <= tol * _scale(A)


@dataclass(frozen=True)
class SampleSpec:
    """Sampling plan for the numeric l^p falsifier."""

    count: int = 10_000
    seed: int = 0
    corners: bool = True
    refine: bool = True


def _lp_functional(A: np.ndarray, xi: np.ndarray, p: float) -> np.ndarray:
    # xi has shape (..., n); returns (sgn xi |xi|^(p-1))^T A xi per row
    dual = np.sign(xi) * np.abs(xi) ** (p - 1)
    return np.einsum("...i,ij,...j->...", dual, A, xi)


def _lp_normalize(xi: np.ndarray, p: float) -> np.ndarray:
    norms = np.sum(np.abs(xi) ** p, axis=-1, keepdims=True) ** (1.0 / p)
    return xi / norms


def _corner_vectors(n: int) -> np.ndarray:
    pats = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=n)))
    pats = pats[np.any(pats != 0, axis=1)]
    # l^1 needs points near the non-smooth set too: e_k plus a small signed tail
    near = []
    for k in range(n):
        tails = pats[pats[:, k] == 0]
        v = 1e-3 * tails
        v[:, k] = 1.0
        near.append(v)
    return np.vstack([pats, *near])


def is_lp_dissipative_numeric(M, p: float, sampler: SampleSpec | None = None,
                              tol: float = TOL_EIG):
    """Falsification test of l^p dissipativity for a real matrix.

    Evaluates ``phi(xi) = (sgn xi * |xi|^(p-1))^T M xi`` on seeded samples of
    the l^p unit sphere, on the sign-pattern corners (N <= 8) and, when
    ``sampler.refine`` is set, on a local maximisation started from the best
    samples. Returns ``(False, xi)`` with a witness as soon as ``phi(xi)``
    exceeds the tolerance, ``(True, None)`` otherwise. A ``True`` result is
    numeric evidence, not a certificate.
    """
    A = _real_only(M, "numeric l^p dissipativity")
    p = float(p)
    if not p >= 1.0 or not np.isfinite(p):
        raise ValueError(f"p must lie in [1, inf), got {p}")
    sampler = sampler or SampleSpec()
    n = A.shape[0]
    thresh = tol * _scale(A)

    rng = np.random.default_rng(sampler.seed)
    cands = [rng.standard_normal((sampler.count, n))]
    if sampler.corners and n <= 8:
        cands.append(_corner_vectors(n))
    xi = _lp_normalize(np.vstack(cands), p)
    phi = _lp_functional(A, xi, p)
    best = int(np.argmax(phi))
    if phi[best] > thresh:
        return False, xi[best]

    if sampler.refine and p > 1.0:
        def neg_ratio(v):
            v = np.asarray(v)
            denom = np.sum(np.abs(v) ** p)
            if denom == 0.0:
                return 0.0
            return -float(_lp_functional(A, v, p)) / denom

        for start in xi[np.argsort(phi)[-3:]]:
            res = scipy.optimize.minimize(neg_ratio, start, method="BFGS")
            cand = _lp_normalize(np.asarray(res.x), p)
            if _lp_functional(A, cand, p) > thresh:
                return False, cand
    return True, None


def operator_norm(M, p) -> float:
    """Induced matrix norm for p in {1, 2, inf}."""
    A = as_matrix(M)
    return float(np.linalg.norm(A, _NORM_ORDS[_norm_key(p)]))


def matrix_exp(M, t: float = 1.0) -> np.ndarray:
    """``exp(t M)`` for ``t >= 0`` (scaling and squaring with Pade approximants)."""
    A = as_matrix(M)
    if not t >= 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t == 0:
        return np.eye(A.shape[0], dtype=A.dtype)
    return scipy.linalg.expm(t * A)


def _check_t_grid(t_grid) -> np.ndarray:
    ts = np.asarray(t_grid, dtype=float).ravel()
    if ts.size == 0:
        raise ValueError("t_grid must be non-empty")
    if np.any(ts < 0):
        raise ValueError("t_grid must contain only t >= 0")
    return ts


def _require_small_t(ts: np.ndarray) -> None:
    # violations show up first at small t, so a pass needs one
    if ts.min() > 1e-3:
        raise ValueError("t_grid without some t <= 1e-3 cannot certify contraction")


def contractivity_oracle(M, p, t_grid=DYADIC_T_GRID):
    """Brute-force check ``||exp(tM)||_p <= 1`` on a grid of times.

    Returns ``(True, None)`` or ``(False, t)`` for the first violating t. A
    violation is conclusive on any grid; a pass requires the grid to contain
    some ``t <= 1e-3`` and raises ``ValueError`` otherwise.
    """
    A = as_matrix(M)
    p = _norm_key(p)
    ts = _check_t_grid(t_grid)
    for t in ts:
        if operator_norm(matrix_exp(A, t), p) > 1.0 + CONTRACTION_SLACK:
            return False, float(t)
    _require_small_t(ts)
    return True, None


def contractivity_oracle_many(Ms, p, t_grid=DYADIC_T_GRID) -> np.ndarray:
    """Vectorised :func:`contractivity_oracle` over a stack ``(k, n, n)``."""
    Ms = np.asarray(Ms)
    if Ms.ndim != 3 or Ms.shape[1] != Ms.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got {Ms.shape}")
    p = _norm_key(p)
    ok = np.ones(Ms.shape[0], dtype=bool)
    ts = _check_t_grid(t_grid)
    for t in ts:
        E = scipy.linalg.expm(t * Ms)
        if p == 1:
            norms = np.abs(E).sum(axis=1).max(axis=1)
        elif p == np.inf:
            norms = np.abs(E).sum(axis=2).max(axis=1)
        else:
            norms = np.linalg.norm(E, 2, axis=(1, 2))
        ok &= norms <= 1.0 + CONTRACTION_SLACK
    if ok.any():
        _require_small_t(ts)
    return ok


def spectrum(M) -> np.ndarray:
    """All eigenvalues of ``M`` with multiplicity, as a complex array."""
    return np.linalg.eigvals(as_matrix(M)).astype(complex)


def spectral_bound(M) -> float:
    return float(np.max(spectrum(M).real))


@dataclass(frozen=True)
class ExpConvergenceVerdict:
    converges: bool
    spectral_bound: float
    imaginary_axis_eigs: tuple[float, ...]
    zero_semisimple: bool
    tol: float

    def to_dict(self) -> dict:
        return {
            "converges": self.converges,
            "spectral_bound": self.spectral_bound,
            "imaginary_axis_eigs": list(self.imaginary_axis_eigs),
            "zero_semisimple": self.zero_semisimple,
            "tol": self.tol,
        }


def exp_converges(M, tol: float | None = None) -> ExpConvergenceVerdict:
    """Decide whether ``exp(tM)`` converges as ``t -> inf``.

    That happens iff the spectral bound is negative, or it is zero, the only
    eigenvalue on the imaginary axis is 0, and 0 is semisimple.
    """
    A = as_matrix(M)
    n = A.shape[0]
    norm = float(np.linalg.norm(A, 2))
    if tol is None:
        # defective eigenvalues split by ~sqrt(eps), so cluster a bit wider
        tol = 1e-7 * max(1.0, norm)
    eigs = spectrum(A)
    s = float(np.max(eigs.real))
    on_axis = eigs[np.abs(eigs.real) <= tol]
    betas = tuple(sorted(float(b) for b in on_axis.imag))

    alg = int(np.count_nonzero(np.abs(eigs) <= tol))
    if alg == 0:
        semisimple = True
    else:
        sv = np.linalg.svd(A, compute_uv=False)
        geo = n if norm == 0 else int(np.count_nonzero(sv <= 1e-8 * norm))
        semisimple = geo == alg

    if s < -tol:
        converges = True
    elif abs(s) <= tol:
        converges = bool(np.all(np.abs(on_axis) <= tol)) and semisimple
    else:
        converges = False
    return ExpConvergenceVerdict(converges, s, betas, semisimple, float(tol))


@dataclass(frozen=True)
class DissipativityReport:
    """Dissipativity verdicts of one matrix.

    ``l1``/``linf``/``quasi_positive`` are ``None`` for complex matrices.
    ``margins`` hold ``-mu_p(M)``: non-negative iff the criterion holds.
    """

    l1: bool | None
    l2: bool
    linf: bool | None
    quasi_positive: bool | None
    margins: dict = field(default_factory=dict)
    numeric: tuple = ()

    def to_dict(self) -> dict:
        return {
            "l1": self.l1,
            "l2": self.l2,
            "linf": self.linf,
            "quasi_positive": self.quasi_positive,
            "margins": {str(k): v for k, v in self.margins.items()},
            "numeric": [
                {"p": p, "dissipative": ok, "verdict": "numeric",
                 "witness": None if w is None else [float(x) for x in w]}
                for p, ok, w in self.numeric
            ],
        }


def dissipativity_report(M, numeric_p=(), sampler: SampleSpec | None = None
                         ) -> DissipativityReport:
    A = as_matrix(M)
    margins = {"2": -log_norm(A, 2)}
    if is_real(A):
        Ar = np.real(A)
        margins["1"] = -log_norm(Ar, 1)
        margins["inf"] = -log_norm(Ar, np.inf)
        numeric = tuple(
            (float(p), *is_lp_dissipative_numeric(Ar, p, sampler)) for p in numeric_p
        )
        return DissipativityReport(
            l1=is_l1_dissipative(Ar), l2=is_l2_dissipative(A),
            linf=is_linf_dissipative(Ar), quasi_positive=is_quasi_positive(Ar),
            margins=margins, numeric=numeric,
        )
    return DissipativityReport(None, is_l2_dissipative(A), None, None, margins)
