"""Scenario configuration (JSON, ``version: 1``) and the built-in examples.

Scalars inside matrices and polynomial coefficients may be numbers or
complex strings such as ``"1j"`` or ``"1-2j"``. Polynomials are coefficient
lists in ascending powers of x (1-d) or nested lists ``c[i][j]`` multiplying
``x**i * y**j`` (2-d).
"""
from __future__ import annotations

from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import discretization as disc
from . import potential_field as pf
from .evolution import DetectionThresholds, Scenario

Scalar = Union[float, str]
MatrixSpec = list[list[Scalar]]


def to_complex(v) -> complex:
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", ""))
        except ValueError:
            raise ValueError(f"not a number: {v!r}") from None
    return complex(v)


def _complexify(values):
    if isinstance(values, (list, tuple)):
        return [_complexify(v) for v in values]
    return to_complex(values)


def _array(values) -> np.ndarray:
    a = np.array(_complexify(values), dtype=complex)
    return a.real.copy() if not np.any(a.imag) else a


def _check_scalars(values):
    _complexify(values)
    return values


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DomainSpec(_Model):
    extent: list[float] = [1.0]
    cells: list[int] = [64]

    @model_validator(mode="after")
    def _same_length(self):
        if len(self.extent) != len(self.cells) or len(self.cells) not in (1, 2):
            raise ValueError("extent and cells need one entry per axis (1 or 2 axes)")
        return self

    def grid(self) -> pf.Grid:
        return pf.Grid(tuple(self.extent), tuple(self.cells))


class PolySpec(_Model):
    polynomial: list

    @field_validator("polynomial")
    @classmethod
    def _scalars(cls, v):
        return _check_scalars(v)


def eval_polynomial(coeffs, centers: np.ndarray) -> np.ndarray:
    c = np.array(_complexify(coeffs), dtype=complex)
    x = centers[:, 0]
    if c.ndim == 1:
        out = np.polynomial.polynomial.polyval(x, c)
    else:
        if centers.shape[1] < 2:
            raise ValueError("2-d polynomial on a 1-d grid")
        out = np.polynomial.polynomial.polyval2d(x, centers[:, 1], c)
    out = np.asarray(out, dtype=complex)
    return out.real.copy() if not np.any(out.imag) else out


class CoefSpec(_Model):
    """Scalar diffusion coefficient; ``diagonal`` gives one spec per axis."""

    constant: Optional[float] = None
    polynomial: Optional[list] = None
    diagonal: Optional[list["CoefSpec"]] = None

    @model_validator(mode="before")
    @classmethod
    def _bare_number(cls, v):
        return {"constant": v} if isinstance(v, (int, float)) else v

    @model_validator(mode="after")
    def _one_of(self):
        if sum(x is not None for x in (self.constant, self.polynomial, self.diagonal)) != 1:
            raise ValueError("give exactly one of constant, polynomial, diagonal")
        return self

    def evaluate(self, grid: pf.Grid) -> np.ndarray:
        """Coefficients of shape ``(n_cells, d)``."""
        if self.diagonal is not None:
            if len(self.diagonal) != grid.dim:
                raise ValueError(f"diagonal needs {grid.dim} entries")
            return np.column_stack([d.evaluate(grid)[:, i] for i, d in enumerate(self.diagonal)])
        if self.constant is not None:
            vals = np.full(grid.n_cells, float(self.constant))
        else:
            vals = eval_polynomial(self.polynomial, grid.centers)
            if np.iscomplexobj(vals):
                raise ValueError("diffusion coefficients must be real")
        return np.repeat(vals[:, None], grid.dim, axis=1)


class DiffusionSpec(_Model):
    identical: Optional[CoefSpec] = None
    per_equation: Optional[list[CoefSpec]] = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.identical is None) == (self.per_equation is None):
            raise ValueError("give exactly one of identical, per_equation")
        return self

    def build(self, grid: pf.Grid, n: int) -> disc.DiffusionField:
        if self.identical is not None:
            c = self.identical.evaluate(grid)
            return disc.DiffusionField(grid, np.stack([c] * n))
        if len(self.per_equation) != n:
            raise ValueError(f"per_equation has {len(self.per_equation)} entries, N = {n}")
        return disc.DiffusionField(grid, np.stack([c.evaluate(grid) for c in self.per_equation]))


class AffineTerm(_Model):
    f: Union[Literal["1", "x", "y", "1+x"], PolySpec]
    matrix: MatrixSpec

    @field_validator("matrix")
    @classmethod
    def _scalars(cls, v):
        return _check_scalars(v)

    def weights(self, grid: pf.Grid) -> np.ndarray:
        c = grid.centers
        if self.f == "1":
            return np.ones(grid.n_cells)
        if self.f == "x":
            return c[:, 0].copy()
        if self.f == "y":
            if grid.dim < 2:
                raise ValueError("term 'y' on a 1-d grid")
            return c[:, 1].copy()
        if self.f == "1+x":
            return 1.0 + c[:, 0]
        return eval_polynomial(self.f.polynomial, c)


class AffineSpec(_Model):
    c0: Optional[MatrixSpec] = None
    terms: list[AffineTerm] = []

    @field_validator("c0")
    @classmethod
    def _scalars(cls, v):
        return v if v is None else _check_scalars(v)


# builtin potentials: name -> (parameter defaults, builder(params) -> AffineSpec)
def _poly_term(coeffs, matrix) -> dict:
    return {"f": {"polynomial": list(coeffs)}, "matrix": matrix}


BUILTIN_POTENTIALS = {
    "rotation": (
        {"a": [1.0]},
        lambda p: {"terms": [_poly_term(p["a"], [[0, -1], [1, 0]])]},
    ),
    "quasi_positive": (
        {"a": [1.0, 1.0], "b": [0.0, 1.0]},
        lambda p: {"terms": [_poly_term(p["a"], [[-1, 2], [2, -4]]),
                             _poly_term(p["b"], [[-1, 2], [1, -2]])]},
    ),
    "linf": (
        {"a": [1.0, 1.0], "b": [1.0]},
        lambda p: {"terms": [_poly_term(p["a"], [[-1, -1], [-2, -2]]),
                             _poly_term(p["b"], [[-1, -1], [-1, -1]])]},
    ),
    "diagonalizable": (
        {"a": [1.0, "1j"]},
        lambda p: {"terms": [_poly_term(p["a"], [[-1, -2], [-1, -2]])]},
    ),
    "upper_triangular": (
        {"growth": 0.5},
        lambda p: {"c0": [[p["growth"], 1.0], [0.0, -1.0]]},
    ),
}


class PotentialSpec(_Model):
    builtin: Optional[str] = None
    params: dict = {}
    constant: Optional[MatrixSpec] = None
    affine: Optional[AffineSpec] = None

    @model_validator(mode="after")
    def _one_of(self):
        if sum(x is not None for x in (self.builtin, self.constant, self.affine)) != 1:
            raise ValueError("give exactly one of builtin, constant, affine")
        if self.builtin is not None:
            if self.builtin in EXAMPLES:
                if self.params:
                    raise ValueError("example-name potentials take no params")
                return self
            if self.builtin not in BUILTIN_POTENTIALS:
                raise ValueError(f"unknown builtin potential {self.builtin!r}; known: "
                                 f"{sorted(BUILTIN_POTENTIALS)} or an example name")
            defaults = BUILTIN_POTENTIALS[self.builtin][0]
            unknown = set(self.params) - set(defaults)
            if unknown:
                raise ValueError(f"unknown parameters {sorted(unknown)} for {self.builtin!r}")
        if self.constant is not None:
            _check_scalars(self.constant)
        return self

    def resolved(self) -> AffineSpec:
        if self.constant is not None:
            return AffineSpec(c0=self.constant)
        if self.affine is not None:
            return self.affine
        if self.builtin in EXAMPLES:
            return PotentialSpec.model_validate(EXAMPLES[self.builtin]["potential"]).resolved()
        defaults, build = BUILTIN_POTENTIALS[self.builtin]
        return AffineSpec.model_validate(build({**defaults, **self.params}))

    def build(self, grid: pf.Grid) -> pf.PotentialField:
        spec = self.resolved()
        mats = []
        if spec.c0 is not None:
            mats.append(np.broadcast_to(_array(spec.c0), (grid.n_cells,) + np.shape(spec.c0)))
        for term in spec.terms:
            mats.append(term.weights(grid)[:, None, None] * _array(term.matrix))
        if not mats:
            raise ValueError("potential has neither c0 nor terms")
        shapes = {m.shape for m in mats}
        if len(shapes) != 1:
            raise ValueError(f"potential matrices have inconsistent shapes {shapes}")
        return pf.PotentialField(grid, sum(mats))


class CosineSpec(_Model):
    offset: list[Scalar]
    amplitude: list[Scalar]
    mode: int = 1


class RandomSpec(_Model):
    seed: int = 0
    offset: list[float]
    scale: float = 1.0


class InitialSpec(_Model):
    """Initial state per component: constant, polynomial, cosine or random."""

    constant: Optional[list[Scalar]] = None
    polynomial: Optional[list[list]] = None
    cosine: Optional[CosineSpec] = None
    random: Optional[RandomSpec] = None

    @model_validator(mode="after")
    def _one_of(self):
        if sum(x is not None for x in
               (self.constant, self.polynomial, self.cosine, self.random)) != 1:
            raise ValueError("give exactly one of constant, polynomial, cosine, random")
        return self

    def build(self, grid: pf.Grid, n: int) -> np.ndarray:
        c = grid.centers
        if self.constant is not None:
            cols = [np.full(grid.n_cells, to_complex(v)) for v in self.constant]
        elif self.polynomial is not None:
            cols = [eval_polynomial(p, c).astype(complex) for p in self.polynomial]
        elif self.cosine is not None:
            cs = self.cosine
            if len(cs.offset) != len(cs.amplitude):
                raise ValueError("cosine offset and amplitude lengths differ")
            shape = np.cos(cs.mode * np.pi * c[:, 0] / grid.extents[0])
            cols = [to_complex(o) + to_complex(a) * shape
                    for o, a in zip(cs.offset, cs.amplitude)]
        else:
            r = self.random
            rng = np.random.default_rng(r.seed)
            noise = rng.standard_normal((grid.n_cells, len(r.offset)))
            cols = [o + r.scale * noise[:, k] for k, o in enumerate(r.offset)]
        if len(cols) != n:
            raise ValueError(f"initial data has {len(cols)} components, potential has N = {n}")
        u = np.column_stack(cols)
        return u.real.copy() if not np.any(u.imag) else u


class TimeSpec(_Model):
    dt: float = Field(gt=0)
    horizon: float = Field(gt=0)
    window: float = Field(default=1.0, gt=0)


class DetectionSpec(_Model):
    conv_rtol: float = Field(default=1e-8, gt=0)
    growth: float = Field(default=1e3, gt=1)
    period_fit: float = Field(default=0.05, gt=0)


class ScenarioConfig(_Model):
    version: Literal[1] = 1
    name: str = "custom"
    domain: DomainSpec = DomainSpec()
    diffusion: DiffusionSpec = DiffusionSpec(identical=CoefSpec(constant=1.0))
    potential: PotentialSpec
    initial: InitialSpec
    time: TimeSpec
    scheme: Literal["strang+crank-nicolson", "strang+backward-euler"] = "strang+crank-nicolson"
    detection: DetectionSpec = DetectionSpec()

    def with_overrides(self, *, dt=None, horizon=None, cells=None, scheme=None,
                       seed=None) -> ScenarioConfig:
        data = self.model_dump(mode="json")
        if dt is not None:
            data["time"]["dt"] = dt
        if horizon is not None:
            data["time"]["horizon"] = horizon
        if cells is not None:
            data["domain"]["cells"] = [cells] * len(data["domain"]["cells"])
        if scheme is not None:
            data["scheme"] = scheme
        if seed is not None and data["initial"].get("random"):
            data["initial"]["random"]["seed"] = seed
        return ScenarioConfig.model_validate(data)


def build_scenario(config: ScenarioConfig) -> Scenario:
    grid = config.domain.grid()
    V = config.potential.build(grid)
    return Scenario(
        name=config.name,
        diffusion=config.diffusion.build(grid, V.n),
        potential=V,
        u0=config.initial.build(grid, V.n),
        dt=config.time.dt,
        horizon=config.time.horizon,
        window=config.time.window,
        scheme=config.scheme,
        thresholds=DetectionThresholds(config.detection.conv_rtol, config.detection.growth,
                                       config.detection.period_fit),
    )


def _example(name, potential, initial, dt, horizon, **extra) -> dict:
    return {"version": 1, "name": name, "potential": potential, "initial": initial,
            "time": {"dt": dt, "horizon": horizon}, **extra}


_SMOOTH = {"cosine": {"offset": [1.0, 0.5], "amplitude": [0.5, -0.25]}}

EXAMPLES: dict[str, dict] = {
    "intro_rotation": _example(
        "intro_rotation", {"builtin": "rotation"}, {"constant": [1.0, 0.0]}, 1e-3, 20.0),
    "ex_quasi_positive": _example(
        "ex_quasi_positive", {"builtin": "quasi_positive"}, _SMOOTH, 5e-3, 100.0),
    "ex_rotation_variable": _example(
        "ex_rotation_variable", {"builtin": "rotation", "params": {"a": [1.0, 1.0]}},
        _SMOOTH, 5e-2, 2600.0),
    "ex_rotation_constant": _example(
        "ex_rotation_constant", {"builtin": "rotation"}, _SMOOTH, 1e-2, 40.0),
    "ex_linf": _example(
        "ex_linf", {"builtin": "linf"}, _SMOOTH, 1e-2, 60.0),
    "ex_constant_rotation": _example(
        "ex_constant_rotation", {"builtin": "rotation", "params": {"a": [0.0]}},
        _SMOOTH, 1e-2, 20.0),
    "ex_diagonalizable": _example(
        "ex_diagonalizable", {"builtin": "diagonalizable"}, _SMOOTH, 1e-2, 40.0),
    "ex_diagonalizable_imaginary": _example(
        "ex_diagonalizable_imaginary", {"builtin": "diagonalizable", "params": {"a": ["1j"]}},
        _SMOOTH, 1e-2, 40.0),
    "ex_unknown_growth": _example(
        "ex_unknown_growth", {"builtin": "upper_triangular"}, _SMOOTH, 1e-2, 40.0,
        diffusion={"per_equation": [1.0, 2.0]}),
}

EXAMPLE_DESCRIPTIONS = {
    "intro_rotation": "constant rotation, constant initial data: periodic solution",
    "ex_quasi_positive": "quasi-positive potential with positive kernel vector (2,1)",
    "ex_rotation_variable": "rotation with a(x) = 1 + x: converges",
    "ex_rotation_constant": "rotation with a = 1: oscillates",
    "ex_linf": "l-infinity dissipative, neither l2-dissipative nor diagonalizable",
    "ex_constant_rotation": "constant rotation with a = 0 (a = 1 via params)",
    "ex_diagonalizable": "-a(x) [[1,2],[1,2]] with a(x) = 1 + ix: converges",
    "ex_diagonalizable_imaginary": "-a [[1,2],[1,2]] with a = i: oscillates",
    "ex_unknown_growth": "upper-triangular growth with unequal diffusion: no rule applies",
}


def example_config(name: str) -> ScenarioConfig:
    if name not in EXAMPLES:
        raise KeyError(f"unknown example {name!r}; known: {', '.join(EXAMPLES)}")
    return ScenarioConfig.model_validate(EXAMPLES[name])


def load_example(name: str) -> Scenario:
    return build_scenario(example_config(name))
