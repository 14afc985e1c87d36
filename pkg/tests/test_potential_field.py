import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupled_parabolic import potential_field as pf

GRID = pf.Grid((1.0,), (64,))
ROT = np.array([[0.0, -1.0], [1.0, 0.0]])
QP1 = np.array([[-1.0, 2.0], [2.0, -4.0]])
QP2 = np.array([[-1.0, 2.0], [1.0, -2.0]])
LI1 = np.array([[-1.0, -1.0], [-2.0, -2.0]])
LI2 = -np.ones((2, 2))
DG = -np.array([[1.0, 2.0], [1.0, 2.0]])


def field(f, grid=GRID):
    return pf.PotentialField.from_function(grid, f)


def quasi_positive_field(grid=GRID):
    return field(lambda x: (1 + x[0]) * QP1 + x[0] * QP2, grid)


def linf_field():
    return field(lambda x: (1 + x[0]) * LI1 + LI2)


def rotation_field(a):
    return field(lambda x: a(x[0]) * ROT)


def diag_field(a):
    return field(lambda x: a(x[0]) * DG)


ZERO = pf.PotentialField.constant(GRID, np.zeros((2, 2)))


# --- grid and field types ---------------------------------------------------

def test_grid_geometry():
    g = pf.Grid((2.0, 1.0), (4, 2))
    assert g.dim == 2 and g.n_cells == 8
    assert g.spacing == (0.5, 0.5)
    assert g.cell_volume == pytest.approx(0.25)
    assert g.measure == pytest.approx(2.0)
    np.testing.assert_allclose(g.centers[:3], [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25]])


@pytest.mark.parametrize("extents, cells", [((1.0,), (1,)), ((1.0, 1.0, 1.0), (2, 2, 2)),
                                            ((0.0,), (4,)), ((1.0,), (4, 4))])
def test_grid_rejects(extents, cells):
    with pytest.raises(ValueError):
        pf.Grid(extents, cells)


def test_field_flags():
    assert ZERO.real_valued and ZERO.constant_valued
    Q = quasi_positive_field()
    assert Q.real_valued and not Q.constant_valued
    C = pf.PotentialField.constant(GRID, 1j * ROT)
    assert not C.real_valued and C.constant_valued
    # complex dtype with zero imaginary part is real
    assert pf.PotentialField.constant(GRID, ROT.astype(complex)).real_valued


def test_field_is_immutable_and_validated():
    with pytest.raises(ValueError):
        ZERO.values[0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        pf.PotentialField(GRID, np.zeros((3, 2, 2)))
    with pytest.raises(ValueError):
        pf.PotentialField(GRID, np.full((2, 2), np.inf))


# --- classify ---------------------------------------------------------------

def test_classify_quasi_positive_example():
    r = pf.classify(quasi_positive_field())
    assert r.quasi_positive is True and r.l2 is False and r.constant is False


def test_classify_constant_rotation():
    r = pf.classify(rotation_field(lambda x: 1.0))
    assert r.l2 is True and r.quasi_positive is False and r.constant is True


def test_classify_zero():
    r = pf.classify(ZERO)
    assert r.l1 and r.l2 and r.linf


def test_classify_complex_leaves_real_criteria_undefined():
    r = pf.classify(diag_field(lambda x: 1 + 1j * x))
    assert r.l1 is None and r.linf is None and r.quasi_positive is None
    assert r.l2 is False


def test_classify_numeric_p_reported():
    r = pf.classify(linf_field(), numeric_p=(3.0,))
    assert r.lp_numeric[0][0] == 3.0
    assert "lp_numeric" in r.to_dict()


# --- common kernel ----------------------------------------------------------

def test_common_kernel_rotation():
    V = rotation_field(lambda x: 1.0)
    K = pf.common_kernel(V, 1.0)
    assert K.shape == (2, 1)
    v = K[:, 0]
    np.testing.assert_allclose(v, np.array([1, -1j]) / np.sqrt(2), atol=1e-12)
    assert pf.common_kernel(V, 0.5).shape[1] == 0


def test_common_kernel_contains_equilibrium():
    K = pf.common_kernel(quasi_positive_field(), 0.0)
    z = np.array([2.0, 1.0]) / np.sqrt(5)
    assert K.shape[1] == 1
    assert abs(abs(K[:, 0] @ z) - 1.0) < 1e-10


def test_common_kernel_variable_rotation_is_trivial():
    V = rotation_field(lambda x: 1 + x)
    assert pf.common_kernel(V, 1.0).shape[1] == 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), beta=st.floats(-3, 3))
def test_common_kernel_residuals(seed, beta):
    rng = np.random.default_rng(seed)
    n = 3
    S = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    lam = np.array([1j * beta, -1.0, -2.0])
    scale = rng.uniform(0.5, 2.0, GRID.n_cells)
    vals = np.array([S @ np.diag([1j * beta, s * lam[1], s * lam[2]]) @ np.linalg.inv(S)
                     for s in scale])
    V = pf.PotentialField(GRID, vals)
    K = pf.common_kernel(V, beta)
    assert K.shape[1] >= 1
    for v in K.T:
        res = np.linalg.norm(1j * beta * v - V.values @ v, axis=1).max()
        assert res <= 1e-6 * np.linalg.norm(v)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.1, 10))
def test_scaling_covariance(c):
    for V in (rotation_field(lambda x: 1.0), quasi_positive_field(), linf_field()):
        r, rc = pf.classify(V), pf.classify(V.scaled(c))
        for key in ("quasi_positive", "l1", "l2", "linf", "real_valued"):
            assert getattr(r, key) == getattr(rc, key)
        for beta in (0.0, 1.0):
            K, Kc = pf.common_kernel(V, beta), pf.common_kernel(V.scaled(c), c * beta)
            assert K.shape == Kc.shape
            if K.shape[1]:
                # same subspace: projections agree
                P, Pc = K @ np.linalg.pinv(K), Kc @ np.linalg.pinv(Kc)
                np.testing.assert_allclose(P, Pc, atol=1e-8)


# --- candidates and positive kernel vector ----------------------------------

def test_imaginary_candidates():
    assert pf.imaginary_eigen_candidates(rotation_field(lambda x: 1.0)) == pytest.approx([1.0])
    assert pf.imaginary_eigen_candidates(linf_field()) == []
    assert pf.imaginary_eigen_candidates(ZERO) == []


def test_imaginary_candidates_reference_cell():
    V = rotation_field(lambda x: 1 + x)
    b0 = pf.imaginary_eigen_candidates(V, 0)
    b9 = pf.imaginary_eigen_candidates(V, 9)
    assert b0 == pytest.approx([1 + GRID.centers[0, 0]])
    assert b9 == pytest.approx([1 + GRID.centers[9, 0]])


def test_positive_kernel_vector():
    z = pf.positive_kernel_vector(quasi_positive_field())
    np.testing.assert_allclose(z / z.max(), [1.0, 0.5], atol=1e-12)
    assert pf.positive_kernel_vector(linf_field()) is None
    np.testing.assert_allclose(pf.positive_kernel_vector(ZERO), [1.0, 1.0])


def test_positive_kernel_vector_multidimensional():
    # kernel spanned by (1,-1,0) and (0,1,1); their sum (1,0,1) is not strictly
    # positive but (1,-1,0) + 2 (0,1,1) = (1,1,2) is
    B = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, 1.0]]).T
    P = np.eye(3) - B @ np.linalg.pinv(B)
    V = pf.PotentialField.constant(GRID, -P)
    z = pf.positive_kernel_vector(V)
    assert z is not None and z.min() > 1e-9 * z.max()
    np.testing.assert_allclose(P @ z, 0.0, atol=1e-10)


# --- diagonalizer and irreducibility ----------------------------------------

def test_diagonalizer_example_curves():
    V = diag_field(lambda x: 1 + x)
    d = pf.simultaneous_diagonalizer(V)
    assert d is not None
    a = 1 + GRID.centers[:, 0]
    curves = d.curves[:, np.argsort(np.abs(d.curves[-1]))]
    np.testing.assert_allclose(curves[:, 0], 0.0, atol=1e-12)
    np.testing.assert_allclose(curves[:, 1], -3 * a, rtol=1e-12)


def test_diagonalizer_rejects_quasi_positive_example():
    assert pf.simultaneous_diagonalizer(quasi_positive_field()) is None
    assert pf.simultaneous_diagonalizer(linf_field()) is None


def test_diagonalizer_defective_reference_gives_none():
    V = pf.PotentialField.constant(GRID, [[0.0, 1.0], [0.0, 0.0]])
    assert pf.simultaneous_diagonalizer(V) is None


@pytest.mark.parametrize("V", [diag_field(lambda x: 1 + 1j * x), rotation_field(lambda x: 1.0),
                               pf.PotentialField.constant(GRID, np.diag([1.0, -2.0, 3.0]))])
def test_diagonalizer_round_trip(V):
    d = pf.simultaneous_diagonalizer(V)
    assert d is not None
    Uinv = np.linalg.inv(d.U)
    for M, lam in zip(V.values, d.curves):
        R = Uinv @ np.diag(lam) @ d.U
        assert np.linalg.norm(R - M, 2) <= 1e-6 * max(np.linalg.norm(M, 2), 1e-300)


def test_irreducible():
    assert pf.coupling_graph_irreducible(quasi_positive_field())
    assert not pf.coupling_graph_irreducible(
        pf.PotentialField.constant(GRID, np.diag([-1.0, -2.0])))
    one = pf.PotentialField.constant(GRID, [[-1.0]])
    assert pf.coupling_graph_irreducible(one)
    # one-way coupling is not strongly connected
    assert not pf.coupling_graph_irreducible(
        pf.PotentialField.constant(GRID, [[-1.0, 1.0], [0.0, -1.0]]))


# --- predict ----------------------------------------------------------------

@pytest.mark.parametrize("V, verdict, rule", [
    (ZERO, "Converges", "lp-dissipative"),
    (linf_field(), "Converges", "lp-dissipative"),
    (rotation_field(lambda x: 1 + x), "Converges", "l2-dissipative"),
    (rotation_field(lambda x: 1.0), "DoesNotConverge", "l2-dissipative"),
    (quasi_positive_field(), "Converges", "quasi-positive-kernel"),
    (diag_field(lambda x: 1 + 1j * x), "Converges", "decoupled-system"),
    (diag_field(lambda x: 1j), "DoesNotConverge", "constant-potential"),
    (pf.PotentialField.constant(GRID, [[0.5, 1.0], [0.0, -1.0]]),
     "DoesNotConverge", "constant-potential"),
])
def test_predict_cascade(V, verdict, rule):
    p = pf.predict(pf.classify(V), diffusion_identical=True)
    assert (p.verdict.value, p.rule.value) == (verdict, rule)


def test_predict_rotation_witness():
    p = pf.predict(pf.classify(rotation_field(lambda x: 1.0)), True)
    assert p.witness.beta == pytest.approx(1.0)
    np.testing.assert_allclose(p.witness.vector, np.array([1, -1j]) / np.sqrt(2), atol=1e-12)


def test_predict_quasi_positive_rank_hint():
    p = pf.predict(pf.classify(quasi_positive_field()), True)
    assert p.limit_rank_hint == "zero-or-rank-1"


def test_predict_unknown_without_identical_diffusion():
    V = pf.PotentialField.constant(GRID, [[0.5, 1.0], [0.0, -1.0]])
    p = pf.predict(pf.classify(V), diffusion_identical=False)
    assert p.verdict is pf.Verdict.UNKNOWN and p.witness is None


def test_predict_decoupled_imaginary_curve_nonconstant_field():
    # one constant imaginary curve, one decaying curve that varies in x
    S = np.array([[1.0, 1.0], [0.0, 1.0]])
    Si = np.linalg.inv(S)
    V = field(lambda x: S @ np.diag([2j, -(1 + x[0])]) @ Si)
    p = pf.predict(pf.classify(V), True)
    assert p.verdict is pf.Verdict.DOES_NOT_CONVERGE
    assert p.rule is pf.Rule.DECOUPLED_SYSTEM
    assert p.witness.value == pytest.approx(2j)
    d = pf.classify(V).diagonalizer
    np.testing.assert_allclose(d.curves[:, p.witness.component - 1], 2j, atol=1e-12)


def test_prediction_invariants():
    with pytest.raises(ValueError):
        pf.Prediction(pf.Verdict.DOES_NOT_CONVERGE, pf.Rule.L2_DISSIPATIVE)
    with pytest.raises(ValueError):
        pf.Prediction(pf.Verdict.CONVERGES, pf.Rule.NONE)


def test_predict_deterministic():
    V = quasi_positive_field()
    a = pf.predict(pf.classify(V), True).to_dict()
    b = pf.predict(pf.classify(V), True).to_dict()
    assert a == b


def _rule2(report):
    if not report.l2:
        return None
    nontrivial = any(basis.shape[1] for _, basis in report.imaginary_kernels)
    return pf.Verdict.DOES_NOT_CONVERGE if nontrivial else pf.Verdict.CONVERGES


@pytest.mark.parametrize("make", [
    lambda: ZERO,
    lambda: pf.PotentialField.constant(GRID, -np.eye(2)),
    lambda: field(lambda x: -(1 + x[0]) * np.array([[2.0, 1.0], [1.0, 2.0]])),
    lambda: field(lambda x: np.array([[-2.0, x[0]], [-x[0], -2.0]])),
])
def test_rule1_rule2_consistency(make):
    r = pf.classify(make())
    assert r.real_valued and r.linf and r.l2
    assert pf.predict(r, True).verdict is _rule2(r) is pf.Verdict.CONVERGES


def test_report_to_dict_is_json_ready():
    import json
    for V in (quasi_positive_field(), diag_field(lambda x: 1j)):
        json.dumps(pf.classify(V).to_dict())
