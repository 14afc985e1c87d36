"""Strang-split time integration, long-time behaviour detection and verification.

One step is ``E_V(dt/2) o D(dt) o E_V(dt/2)``: the potential half-steps apply
``exp(s V(x))`` cell by cell, the diffusion step is Crank-Nicolson or
backward Euler per component with a sparse LU factorisation computed once.
"""
from __future__ import annotations

import csv
import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import discretization as disc
from . import potential_field as pf
from . import spectral_analysis as sa

SCHEMES = ("strang+crank-nicolson", "strang+backward-euler")


@dataclass(frozen=True)
class DetectionThresholds:
    conv_rtol: float = 1e-8
    growth: float = 1e3
    period_fit: float = 0.05
    overflow: float = 1e12


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    diffusion: disc.DiffusionField
    potential: pf.PotentialField
    u0: np.ndarray
    dt: float
    horizon: float
    window: float = 1.0
    scheme: str = SCHEMES[0]
    thresholds: DetectionThresholds = field(default_factory=DetectionThresholds)

    def __post_init__(self):
        u0 = np.array(self.u0)
        u0 = u0.astype(complex if np.iscomplexobj(u0) else float)
        g = self.potential.grid
        if self.diffusion.grid != g:
            raise ValueError("diffusion and potential grids differ")
        if self.diffusion.n != self.potential.n:
            raise ValueError(f"{self.diffusion.n} diffusion equations for "
                             f"an N={self.potential.n} potential")
        if u0.shape != (g.n_cells, self.potential.n):
            raise ValueError(f"initial state shape {u0.shape}, expected "
                             f"{(g.n_cells, self.potential.n)}")
        if not np.all(np.isfinite(u0)):
            raise ValueError("initial state must be finite")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.window > 0 or self.horizon < 10 * self.window:
            raise ValueError(f"horizon {self.horizon} must be >= 10 windows of {self.window}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        disc.coercivity_check(self.diffusion)
        u0.setflags(write=False)
        object.__setattr__(self, "u0", u0)

    @property
    def grid(self) -> pf.Grid:
        return self.potential.grid

    def block(self) -> disc.BlockOperator:
        return disc.block_from_fields(self.diffusion, self.potential)


class Stepper:
    """Precomputed Strang step for a fixed scenario and time step."""

    def __init__(self, scenario: Scenario, dt: float | None = None):
        self.scenario = scenario
        self.dt = float(dt if dt is not None else scenario.dt)
        V = scenario.potential.values
        self.half = scipy.linalg.expm(0.5 * self.dt * V)
        theta = 1.0 if scenario.scheme.endswith("backward-euler") else 0.5
        n_cells = scenario.grid.n_cells
        eye = sp.identity(n_cells, format="csc")
        cache = {}
        self.solvers = []
        for coef in scenario.diffusion.coefficients:
            key = coef.tobytes()
            if key not in cache:
                B = disc.assemble_diffusion(scenario.grid, coef).matrix
                lu = spla.splu(sp.csc_matrix(eye - theta * self.dt * B))
                explicit = None if theta == 1.0 else (eye + (1 - theta) * self.dt * B).tocsr()
                cache[key] = (lu, explicit)
            self.solvers.append(cache[key])

    def _diffuse(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        for k, (lu, explicit) in enumerate(self.solvers):
            rhs = u[:, k] if explicit is None else explicit @ u[:, k]
            if np.iscomplexobj(rhs):
                out[:, k] = lu.solve(rhs.real.copy()) + 1j * lu.solve(rhs.imag.copy())
            else:
                out[:, k] = lu.solve(rhs)
        return out

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.half.dtype.kind == "c" and u.dtype.kind != "c":
            u = u.astype(complex)
        u = np.einsum("cij,cj->ci", self.half, u)
        u = self._diffuse(u)
        return np.einsum("cij,cj->ci", self.half, u)


def step(u, scenario: Scenario, dt: float | None = None) -> np.ndarray:
    """One Strang step of size ``dt`` (default: the scenario's)."""
    return Stepper(scenario, dt)(np.asarray(u))


def _norms(u, grid) -> tuple[float, float, float]:
    return (disc.discrete_norm(u, grid, 1), disc.discrete_norm(u, grid, 2),
            disc.discrete_norm(u, grid, np.inf))


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    times: np.ndarray
    norm1: np.ndarray
    norm2: np.ndarray
    norminf: np.ndarray
    residual: np.ndarray
    probe: np.ndarray
    initial_state: np.ndarray
    final_state: np.ndarray
    window: float
    stopped_early: bool = False

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "norm1", "norm2", "norminf", "residual"])
            for row in zip(self.times, self.norm1, self.norm2, self.norminf, self.residual):
                w.writerow(["" if math.isnan(v) else repr(float(v)) for v in row])


def simulate(scenario: Scenario, sample_every: int | None = None,
             horizon: float | None = None) -> SimulationTrace:
    """Integrate to the horizon, sampling norms about every ``window / 8``.

    The residual ``||u(t) - u(t - window)||_inf`` uses the effective window
    ``lag * sample_every * dt``; it is NaN before one window has passed.
    """
    T = float(scenario.horizon if horizon is None else horizon)
    dt = scenario.dt
    n_steps = int(math.ceil(T / dt - 1e-9))
    if sample_every is None:
        sample_every = max(1, round(scenario.window / (8 * dt)))
    lag = max(1, round(scenario.window / (sample_every * dt)))
    grid = scenario.grid
    stepper = Stepper(scenario)

    u = scenario.u0.copy()
    limit = scenario.thresholds.overflow * max(np.abs(u).max(), np.finfo(float).tiny)
    history: deque = deque(maxlen=lag)
    times, n1, n2, ninf, res, probe = [], [], [], [], [], []

    def record(t, u):
        a, b, c = _norms(u, grid)
        times.append(t)
        n1.append(a)
        n2.append(b)
        ninf.append(c)
        res.append(float(np.abs(u - history[0]).max()) if len(history) == lag else math.nan)
        probe.append(complex(u[0, 0]))
        history.append(u.copy())

    record(0.0, u)
    stopped = False
    for i in range(1, n_steps + 1):
        u = stepper(u)
        if i % sample_every == 0 or i == n_steps:
            record(i * dt, u)
            if not np.isfinite(ninf[-1]) or ninf[-1] > limit:
                stopped = True
                break
    return SimulationTrace(
        times=np.array(times), norm1=np.array(n1), norm2=np.array(n2),
        norminf=np.array(ninf), residual=np.array(res), probe=np.array(probe),
        initial_state=scenario.u0, final_state=u,
        window=lag * sample_every * dt, stopped_early=stopped,
    )


class Behaviour(str, enum.Enum):
    CONVERGED = "Converged"
    OSCILLATING = "Oscillating"
    DIVERGING = "Diverging"
    UNDECIDED = "Undecided"


@dataclass(frozen=True, eq=False)
class DetectionReport:
    verdict: Behaviour
    evidence: dict
    limit_state: np.ndarray | None = None
    period: float | None = None

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict.value, "period": self.period,
               "evidence": self.evidence}
        if self.limit_state is not None:
            lim = self.limit_state
            out["limit"] = {
                "mean": [[complex(z).real, complex(z).imag] for z in lim.mean(axis=0)],
                "norminf": float(np.abs(lim).max()),
            }
        return out


def _fit_sinusoid(t, x, period):
    w = 2 * np.pi / period
    X = np.column_stack([np.ones_like(t), np.cos(w * t), np.sin(w * t)])
    coef, *_ = np.linalg.lstsq(X, x, rcond=None)
    resid = x - X @ coef
    return float(np.linalg.norm(resid)), coef


def estimate_period(t: np.ndarray, x: np.ndarray):
    """Period of a sampled real signal and its relative sinusoid-fit residual.

    The autocorrelation peak beyond the first zero crossing gives a first
    estimate, which a least-squares sinusoid fit then refines. Returns
    ``(None, inf)`` when no periodic structure is found.
    """
    x = x - x.mean()
    scale = float(np.linalg.norm(x))
    m = len(x)
    if scale == 0 or m < 8:
        return None, math.inf
    lags = np.arange(1, (2 * m) // 3)
    ac = np.array([np.corrcoef(x[:-k], x[k:])[0, 1] for k in lags])
    neg = np.nonzero(ac < 0)[0]
    if neg.size == 0:
        return None, math.inf
    start = neg[0]
    top = float(ac[start:].max())
    if top <= 0:
        return None, math.inf
    # first local maximum close to the best one; later peaks are multiples
    cand = [k for k in range(start, len(ac))
            if ac[k] >= 0.8 * top and (k + 1 == len(ac) or ac[k] >= ac[k + 1])]
    j = cand[0]
    shift = 0.0
    if 0 < j < len(ac) - 1:
        y0, y1, y2 = ac[j - 1], ac[j], ac[j + 1]
        denom = y0 - 2 * y1 + y2
        if denom != 0:
            shift = 0.5 * (y0 - y2) / denom
    ds = float(np.mean(np.diff(t)))
    p0 = (lags[j] + shift) * ds
    res = scipy.optimize.minimize_scalar(
        lambda p: _fit_sinusoid(t, x, p)[0], bounds=(0.9 * p0, 1.1 * p0),
        method="bounded", options={"xatol": 1e-10 * p0})
    return float(res.x), float(res.fun) / scale


def detect(trace: SimulationTrace, thresholds: DetectionThresholds | None = None
           ) -> DetectionReport:
    th = thresholds or DetectionThresholds()
    u0inf = float(trace.norminf[0])
    T = float(trace.times[-1])
    growth = float(trace.norminf.max() / u0inf) if u0inf > 0 else 0.0
    if trace.stopped_early or growth >= th.growth:
        return DetectionReport(Behaviour.DIVERGING,
                               {"growth": growth, "stopped_early": trace.stopped_early})
    if T < 10 * trace.window * (1 - 1e-9):
        raise ValueError(f"trace covers {T / trace.window:.2f} windows; need >= 10")

    tol = th.conv_rtol * (1 + u0inf)
    res = trace.residual[~np.isnan(trace.residual)]
    # envelope: residual maxima over each of the last three windows
    ds = float(np.mean(np.diff(trace.times)))
    lag = max(1, round(trace.window / ds))
    last = np.array([res[len(res) - (i + 1) * lag:len(res) - i * lag].max()
                     for i in (2, 1, 0) if len(res) >= (i + 1) * lag])
    evidence = {"residual_final": float(res[-1]), "residual_tol": tol, "growth": growth}
    monotone = bool(np.all(np.diff(last) <= 0)) or bool(np.all(last <= 1e-3 * tol))
    if last[-1] <= tol and monotone:
        return DetectionReport(Behaviour.CONVERGED, evidence, limit_state=trace.final_state)

    tail = slice(len(trace.times) // 4, None)
    t = trace.times[tail]
    tail_res = trace.residual[tail]
    evidence["residual_min_tail"] = float(np.nanmin(tail_res))
    if np.nanmin(tail_res) > tol:
        z = trace.probe[tail]
        x = z.real if np.ptp(z.real) >= np.ptp(z.imag) else z.imag
        period, fit = estimate_period(t, x)
        evidence["period_fit_residual"] = fit
        if period is not None and period <= 0.6 * (t[-1] - t[0]):
            half = len(t) // 2
            amp = [np.hypot(*_fit_sinusoid(t[s], x[s], period)[1][1:])
                   for s in (slice(None, half), slice(half, None))]
            ratio = float(amp[1] / amp[0]) if amp[0] > 0 else 0.0
            evidence["amplitude_ratio"] = ratio
            if fit <= th.period_fit and 0.9 <= ratio <= 1.1:
                return DetectionReport(Behaviour.OSCILLATING, evidence, period=period)
    return DetectionReport(Behaviour.UNDECIDED, evidence)


# --- verification -----------------------------------------------------------

def spectral_behaviour(L: disc.BlockOperator, report: sa.SpectrumReport) -> tuple[str, dict]:
    """Classify ``exp(tL)`` from its spectrum: converges/oscillates/grows/defective."""
    info = {"spectral_bound": report.spectral_bound}
    imag = report.imaginary_axis
    if report.spectral_bound > report.tol:
        return "grows", info
    if imag.size:
        info["betas"] = sorted({round(float(abs(z.imag)), 10) for z in imag})
        return "oscillates", info
    try:
        proj = sa.limit_projection(L, report)
    except sa.NoLimitError as exc:
        info["reason"] = str(exc)
        return "defective", info
    info["limit_rank"] = proj.rank
    return "converges", info


_PRED_DET = {
    (pf.Verdict.CONVERGES, Behaviour.CONVERGED): "agree",
    (pf.Verdict.CONVERGES, Behaviour.OSCILLATING): "contradiction",
    (pf.Verdict.CONVERGES, Behaviour.DIVERGING): "contradiction",
    (pf.Verdict.DOES_NOT_CONVERGE, Behaviour.CONVERGED): "contradiction",
    (pf.Verdict.DOES_NOT_CONVERGE, Behaviour.OSCILLATING): "agree",
    (pf.Verdict.DOES_NOT_CONVERGE, Behaviour.DIVERGING): "agree",
}


def _pred_vs_spec(pred: pf.Verdict, spec: str) -> str:
    if pred is pf.Verdict.UNKNOWN or spec == "unavailable":
        return "unresolved"
    return "agree" if (pred is pf.Verdict.CONVERGES) == (spec == "converges") else "contradiction"


def _det_vs_spec(det: DetectionReport, spec: str, info: dict) -> str:
    if det.verdict is Behaviour.UNDECIDED or spec == "unavailable":
        return "unresolved"
    expected = {Behaviour.CONVERGED: ("converges",),
                Behaviour.OSCILLATING: ("oscillates",),
                Behaviour.DIVERGING: ("grows", "defective")}[det.verdict]
    if spec not in expected:
        return "contradiction"
    if det.verdict is Behaviour.OSCILLATING:
        freq = 2 * np.pi / det.period
        if not any(abs(b - freq) <= 0.05 * b for b in info.get("betas", ())):
            return "contradiction"
    return "agree"


@dataclass(frozen=True, eq=False)
class VerificationReport:
    scenario: str
    classification: pf.ClassificationReport
    prediction: pf.Prediction
    detection: DetectionReport
    spectral: str
    spectral_info: dict
    rows: dict

    @property
    def contradiction(self) -> bool:
        return any(v == "contradiction" for v in self.rows.values())

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "prediction": self.prediction.to_dict(),
            "detection": self.detection.to_dict(),
            "spectral": {"behaviour": self.spectral, **self.spectral_info},
            "agreement": dict(self.rows),
            "contradiction": self.contradiction,
            "classification": self.classification.to_dict(),
        }


def verify(scenario: Scenario, trace: SimulationTrace | None = None) -> VerificationReport:
    """Compare classifier prediction, simulated behaviour and the spectrum."""
    report = pf.classify(scenario.potential)
    pred = pf.predict(report, scenario.diffusion.identical_equations)
    trace = trace if trace is not None else simulate(scenario)
    det = detect(trace, scenario.thresholds)

    L = scenario.block()
    if L.size <= disc.DENSE_CAP:
        spec, info = spectral_behaviour(L, sa.spectrum_block(L))
    else:
        spec, info = "unavailable", {"reason": f"operator size {L.size} > {disc.DENSE_CAP}"}

    pd = _PRED_DET.get((pred.verdict, det.verdict), "unresolved")
    if (pred.verdict is pf.Verdict.DOES_NOT_CONVERGE and det.verdict is Behaviour.UNDECIDED
            and spec in ("oscillates", "grows", "defective")):
        pd = "agree"
    rows = {
        "prediction_vs_detection": pd,
        "prediction_vs_spectrum": _pred_vs_spec(pred.verdict, spec),
        "detection_vs_spectrum": _det_vs_spec(det, spec, info),
    }
    return VerificationReport(scenario.name, report, pred, det, spec, info, rows)
