import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import EXAMPLE2_C
from wcpde.coefficients import CoefficientExpr, TimeFactor
from wcpde.discrete import assemble
from wcpde.errors import ConfigError, OutOfClass, UnboundedAbove
from wcpde.grid import GridFunction, UniformGrid
from wcpde.operators import (OperatorFamily, apply_operator, check_hypotheses, coefficient_norms, derive_auxiliary,
                             derive_tilde, evaluate, irreducible, irreducible_bruteforce, load_operator,
                             operator_from_config, row_sum_bound)
from wcpde.presets import example1, example2, scalar_preset, sign_flip_preset


def _const(v, p=0.0, axis=None):
    return CoefficientExpr(float(v), p, axis)


def coupling_op(C0, d=1):
    """Constant ``C0`` with shared unit diffusion and ``b = -x``."""
    m = len(C0)
    Q = tuple(((_const(1.0),),) for _ in range(m))
    b = tuple((_const(-1.0, 0.0, 0),) for _ in range(m))
    C = tuple(tuple(_const(v) for v in row) for row in C0)
    return OperatorFamily(d, m, Q, b, C, "const-coupling")


def test_evaluate_shapes():
    op = example1(2)
    x = np.array([[0.5, -1.0]])
    Qs, bs, C = evaluate(op, 0.3, x)
    assert len(Qs) == 2 and Qs[0].shape == (2, 2) and bs[0].shape == (2,) and C.shape == (2, 2)
    assert Qs[0][0, 0] == pytest.approx((1 + 0.25 * math.sin(0.6)) * math.sqrt(2.25))


def test_auxiliary_takes_absolute_off_diagonal():
    aux = derive_auxiliary(example2())
    CP = aux.coupling(0.0, np.zeros((1, 1)))[:, :, 0]
    expected = np.abs(EXAMPLE2_C)
    np.fill_diagonal(expected, np.diag(EXAMPLE2_C))
    np.testing.assert_allclose(CP, expected)


def test_auxiliary_is_idempotent():
    op = sign_flip_preset()
    a1 = derive_auxiliary(op)
    a2 = derive_auxiliary(a1)
    X = np.linspace(-2, 2, 5)[:, None]
    np.testing.assert_array_equal(a1.coupling(0.0, X), a2.coupling(0.0, X))


def test_row_sum_bound_values():
    g = UniformGrid.box(6.0, 121)
    assert row_sum_bound(derive_auxiliary(example2()), (0, 1), g).M_J == pytest.approx(math.sqrt(3) - 1)
    assert row_sum_bound(derive_auxiliary(sign_flip_preset()), (0, 1), g).M_J == pytest.approx(4.0)
    assert row_sum_bound(derive_auxiliary(scalar_preset()), (0, 1), g).M_J == 0.0


def test_row_sum_growth_is_flagged():
    # off-diagonal growing faster than the diagonal: row sums blow up toward the boundary
    op = example1(1, gamma_diag=0.25, gamma_off=0.75)
    with pytest.raises(UnboundedAbove) as exc:
        row_sum_bound(derive_auxiliary(op), (0, 1), UniformGrid.box(6.0, 121))
    assert exc.value.values is not None


def test_tilde_rows_sum_to_zero_defect():
    aux = derive_auxiliary(example1(1))
    tl = derive_tilde(aux)
    X = np.linspace(-3, 3, 7)[:, None]
    Ct = tl.coupling(0.2, X)
    CP = aux.coupling(0.2, X)
    M = CP.sum(axis=1)
    np.testing.assert_allclose(Ct - CP, ((1 + np.abs(M)) / aux.m)[:, None, :].repeat(aux.m, 1))


@given(st.lists(st.booleans(), min_size=16, max_size=16), st.integers(2, 4))
def test_irreducible_matches_bruteforce(bits, m):
    pat = np.array(bits[: m * m]).reshape(m, m)
    assert irreducible(pat) == irreducible_bruteforce(pat)


def test_hypotheses_hold_on_presets():
    for op in (example1(1), scalar_preset(True), sign_flip_preset()):
        rep = check_hypotheses(op, "base", (0, 1), UniformGrid.box(6.0, 121), n_t=5)
        assert not [k for k in rep.violated() if not k.startswith("(")], rep.dumps()
    rep = check_hypotheses(example1(1), "smooth", (0, 1), UniformGrid.box(6.0, 121), n_t=5)
    assert rep.all_hold, rep.dumps()
    assert rep.constants["mu_0"] > 0


def test_hypotheses_flag_wrong_exponents():
    rep = check_hypotheses(example1(1, gamma_diag=0.5, gamma_off=0.6), "base", (0, 1), UniformGrid.box(6.0, 121))
    assert "(b) coupling signs/exponents" in rep.violated()
    assert rep.verdicts["(b) coupling signs/exponents"].witness is not None


def test_special_case_on_example2():
    rep = check_hypotheses(example2(), "special-case", (0, 1), UniformGrid.box(6.0, 121))
    assert rep.all_hold, rep.dumps()
    eta = np.array(rep.constants["eta"])
    np.testing.assert_allclose(EXAMPLE2_C @ eta, 0.0, atol=1e-12)


def test_special_case_detects_missing_kernel():
    rep = check_hypotheses(sign_flip_preset(), "special-case", (0, 1), UniformGrid.box(6.0, 121))
    assert "common kernel" in rep.violated()


def test_symbolic_refuses_tables():
    op = example1(1)
    Q = ((( CoefficientExpr(1.0, 0.5, None, TimeFactor.tabulated([(0, 1), (1, 2)])),),), op.Q[1])
    op2 = OperatorFamily(1, 2, Q, op.b, op.C)
    with pytest.raises(OutOfClass):
        check_hypotheses(op2, "base", (0, 1), UniformGrid.box(4.0, 81), symbolic=True)


def test_apply_operator_on_quadratic():
    op = scalar_preset(True)
    g = UniformGrid.box(2.0, 41)
    u = GridFunction.from_callable(g, lambda X: (X[:, 0] ** 2)[None])
    Au = apply_operator(op, 0.0, u)
    # u'' - x u' = 2 - 2x^2 away from the faces
    np.testing.assert_allclose(Au.values[0][1:-1], (2 - 2 * g.axis**2)[1:-1], atol=1e-10)


def test_coefficient_norms_autonomous_difference_is_zero():
    op = example2()
    a, diff = coefficient_norms(op, 0.0, 0.5, 0.5, UniformGrid.box(2.0, 41))
    assert a > 0 and diff == 0.0


def test_config_roundtrip(tmp_path):
    op = example1(1)
    cfg = op.to_config()
    path = tmp_path / "op.json"
    path.write_text(json.dumps(cfg))
    back = load_operator(path)
    X = np.linspace(-3, 3, 9)[:, None]
    for t in (0.0, 0.7):
        np.testing.assert_allclose(back.diffusion(t, X), op.diffusion(t, X))
        np.testing.assert_allclose(back.drift(t, X), op.drift(t, X))
        np.testing.assert_allclose(back.coupling(t, X), op.coupling(t, X))


def test_config_errors():
    with pytest.raises(ConfigError):
        operator_from_config({"d": 1})
    with pytest.raises(ConfigError):
        operator_from_config({"d": 1, "m": 1, "Q": [[{"zeta": 1, "alpha": -1}]], "b": [0], "C": [[0]]})


# --- discretisation ------------------------------------------------------------------------


@given(st.floats(0.1, 3), st.floats(0, 1), st.floats(-3, 3), st.floats(0, 1), st.floats(-2, 2))
def test_assembly_is_m_matrix_with_coupling_row_sums(zeta, alpha, theta, beta, c12):
    Q = (((_const(zeta, alpha),),), ((_const(1.0),),))
    b = ((_const(-theta, beta, 0),), (_const(theta, 0.0, 0),))
    C = ((_const(-1.0), _const(c12)), (_const(0.5), _const(-2.0)))
    op = OperatorFamily(1, 2, Q, b, C)
    g = UniformGrid.box(3.0, 31)
    A = assemble(op, g, 0.0).toarray()
    N = g.size
    for k in range(2):
        blk = A[k * N:(k + 1) * N, k * N:(k + 1) * N] - np.diag(np.full(N, C[k][k].scale))
        off = blk - np.diag(np.diag(blk))
        assert off.min() >= 0.0
        np.testing.assert_allclose(blk.sum(axis=1), 0.0, atol=1e-9 * np.abs(blk).max())
    np.testing.assert_allclose(A.sum(axis=1), np.repeat([-1 + c12, -1.5], N), atol=1e-9 * np.abs(A).max())


def test_assembly_2d_diagonal_diffusion_is_m_matrix():
    op = example1(2)
    g = UniformGrid.box(2.0, 21, 2)
    A = assemble(op, g, 0.4).tocoo()
    N = g.size
    same = (A.row // N) == (A.col // N)
    off = same & (A.row != A.col)
    assert A.data[off].min() >= 0.0
