import json

import numpy as np
import pydantic
import pytest

from coupled_parabolic import scenarios as sc

NAMES = list(sc.EXAMPLES)


def same_scenario(a, b):
    assert a.name == b.name and a.scheme == b.scheme
    assert (a.dt, a.horizon, a.window) == (b.dt, b.horizon, b.window)
    assert a.grid == b.grid
    np.testing.assert_array_equal(a.potential.values, b.potential.values)
    np.testing.assert_array_equal(a.diffusion.coefficients, b.diffusion.coefficients)
    np.testing.assert_array_equal(a.u0, b.u0)
    assert a.thresholds == b.thresholds


def test_registry_has_required_examples():
    required = {"intro_rotation", "ex_quasi_positive", "ex_rotation_variable",
                "ex_rotation_constant", "ex_linf", "ex_constant_rotation", "ex_diagonalizable"}
    assert required <= set(NAMES) and len(NAMES) >= 7
    assert set(sc.EXAMPLE_DESCRIPTIONS) == set(NAMES)


@pytest.mark.parametrize("name", NAMES)
def test_round_trip(name):
    cfg = sc.example_config(name)
    text = json.dumps(cfg.model_dump(mode="json"), sort_keys=True)
    again = sc.ScenarioConfig.model_validate(json.loads(text))
    assert again == cfg
    assert json.dumps(again.model_dump(mode="json"), sort_keys=True) == text
    same_scenario(sc.build_scenario(again), sc.load_example(name))


def test_version_is_required_to_be_one():
    data = sc.EXAMPLES["ex_linf"] | {"version": 2}
    with pytest.raises(pydantic.ValidationError):
        sc.ScenarioConfig.model_validate(data)


@pytest.mark.parametrize("patch, field", [
    ({"potential": {"builtin": "nope"}}, "potential"),
    ({"potential": {"builtin": "rotation", "constant": [[0.0]]}}, "potential"),
    ({"potential": {"builtin": "rotation", "params": {"zz": 1}}}, "potential"),
    ({"initial": {}}, "initial"),
    ({"time": {"dt": 0.1}}, "time"),
    ({"scheme": "rk4"}, "scheme"),
    ({"extra_key": 1}, "extra_key"),
    ({"domain": {"extent": [1.0], "cells": [4, 4]}}, "domain"),
])
def test_field_level_diagnostics(patch, field):
    data = json.loads(json.dumps(sc.EXAMPLES["ex_linf"])) | patch
    with pytest.raises(pydantic.ValidationError) as info:
        sc.ScenarioConfig.model_validate(data)
    assert field in str(info.value)


def test_complex_strings():
    assert sc.to_complex("1j") == 1j
    assert sc.to_complex("1+2j") == 1 + 2j
    assert sc.to_complex(3) == 3.0
    with pytest.raises(ValueError):
        sc.to_complex("abc")


def test_affine_and_constant_potentials():
    grid = sc.DomainSpec(extent=[1.0], cells=[4]).grid()
    x = grid.centers[:, 0]
    spec = sc.PotentialSpec.model_validate({"affine": {
        "c0": [[-1.0, 0.0], [0.0, -1.0]],
        "terms": [{"f": "x", "matrix": [[0.0, 1.0], [0.0, 0.0]]},
                  {"f": {"polynomial": [0.0, 0.0, 1.0]}, "matrix": [[0.0, 0.0], ["1j", 0.0]]}]}})
    V = spec.build(grid)
    np.testing.assert_allclose(V.values[:, 0, 1], x)
    np.testing.assert_allclose(V.values[:, 1, 0], 1j * x ** 2)
    np.testing.assert_allclose(V.values[:, 0, 0], -1.0)
    C = sc.PotentialSpec.model_validate({"constant": [[0.0, -1.0], [1.0, 0.0]]}).build(grid)
    assert C.constant_valued and C.real_valued


def test_builtin_example_name_alias():
    grid = sc.DomainSpec().grid()
    a = sc.PotentialSpec(builtin="ex_linf").build(grid)
    b = sc.load_example("ex_linf").potential
    np.testing.assert_array_equal(a.values, b.values)


def test_two_dimensional_config():
    cfg = sc.ScenarioConfig.model_validate({
        "domain": {"extent": [1.0, 2.0], "cells": [6, 8]},
        "diffusion": {"identical": {"diagonal": [1.0, 2.0]}},
        "potential": {"affine": {"terms": [{"f": "y", "matrix": [[0.0, -1.0], [1.0, 0.0]]}]}},
        "initial": {"polynomial": [[[1.0, 1.0]], [[0.0], [1.0]]]},
        "time": {"dt": 0.01, "horizon": 10.0},
    })
    s = sc.build_scenario(cfg)
    assert s.grid.dim == 2 and s.grid.n_cells == 48
    np.testing.assert_allclose(s.diffusion.coefficients[0, 0], [1.0, 2.0])
    y = s.grid.centers[:, 1]
    np.testing.assert_allclose(s.potential.values[:, 1, 0], y)
    np.testing.assert_allclose(s.u0[:, 0], 1 + y)
    np.testing.assert_allclose(s.u0[:, 1], s.grid.centers[:, 0])


def test_random_initial_is_seeded():
    data = sc.EXAMPLES["ex_linf"] | {"initial": {"random": {"seed": 3, "offset": [1.0, 0.0]}}}
    cfg = sc.ScenarioConfig.model_validate(data)
    a, b = sc.build_scenario(cfg), sc.build_scenario(cfg)
    np.testing.assert_array_equal(a.u0, b.u0)
    c = sc.build_scenario(cfg.with_overrides(seed=4))
    assert not np.array_equal(a.u0, c.u0)


def test_overrides():
    cfg = sc.example_config("ex_linf").with_overrides(
        dt=0.05, horizon=30.0, cells=16, scheme="strang+backward-euler")
    s = sc.build_scenario(cfg)
    assert (s.dt, s.horizon, s.grid.cells, s.scheme) == (
        0.05, 30.0, (16,), "strang+backward-euler")


def test_invalid_scenario_surfaces_as_value_error():
    data = sc.EXAMPLES["ex_linf"] | {"diffusion": {"identical": -1.0}}
    with pytest.raises(ValueError):
        sc.build_scenario(sc.ScenarioConfig.model_validate(data))
    with pytest.raises(KeyError):
        sc.example_config("missing")
