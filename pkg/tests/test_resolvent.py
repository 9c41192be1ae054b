import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import constant_coupling_resolvent, green_heat_resolvent_1d, unit
from test_operators import _const, coupling_op
from wcpde.coefficients import ZERO
from wcpde.data import RandomSmoothField, gaussian, random_smooth
from wcpde.errors import LambdaTooSmall
from wcpde.evolution import SolverConfig
from wcpde.grid import GridFunction, UniformGrid, restrict
from wcpde.invariant import analyze_coupling
from wcpde.operators import OperatorFamily
from wcpde.presets import example1, example2, scalar_preset
from wcpde.resolvent import (ManufacturedGaussian, check_interpolation_inequality, check_resolvent_bound,
                             check_resolvent_identity, elliptic_direct, frozen_row_sum,
                             manufactured_elliptic, manufactured_parabolic, parabolic_schauder_experiment,
                             quadrature_nodes, resolvent, resolvent_quadrature, schauder_experiment)

CN = SolverConfig(theta=0.5)


def _eps_op(eps=1e-6):
    return OperatorFamily(1, 1, (((_const(eps),),),), ((ZERO,),), ((ZERO,),), "eps-diffusion")


def test_quadrature_nodes_are_geometric_then_uniform():
    nodes = quadrature_nodes(1.0, 0.1, rho=0.5)
    assert nodes[0] == 0.0 and nodes[-1] == pytest.approx(1.0)
    assert np.all(np.diff(nodes) > 0)
    small = nodes[(nodes > 0) & (nodes < 0.1 - 1e-12)]
    np.testing.assert_allclose(small[1:] / small[:-1], 2.0)


@pytest.mark.parametrize("method", ["quadrature", "direct"])
def test_vanishing_diffusion_constant_datum(method):
    g = UniformGrid.box(2.0, 41)
    f = GridFunction.constant(g, [3.0])
    lam = 2.0
    u = resolvent(_eps_op(), 0.0, lam, f, method, CN).solution
    np.testing.assert_allclose(u.values, 3.0 / lam, atol=1e-6)


@pytest.mark.parametrize("method", ["quadrature", "direct"])
def test_constant_coupling_matches_dense_inverse(method):
    C0 = [[-1.0, 0.5], [2.0, -3.0]]
    op = coupling_op(C0)
    g = UniformGrid.box(3.0, 61)
    f = GridFunction.constant(g, [1.0, -2.0])
    lam = frozen_row_sum(op, 0.0, g) + 1.0
    u = resolvent(op, 0.0, lam, f, method, CN).solution
    ref = constant_coupling_resolvent(C0, [1.0, -2.0], lam)
    tol = 1e-10 if method == "direct" else 1e-3
    np.testing.assert_allclose(u.values.reshape(2, -1), ref[:, None] * np.ones((1, g.size)), atol=tol)


def test_example2_kernel_is_scaled_by_one_over_lambda():
    op = example2()
    g = UniformGrid.box(4.0, 81)
    eta = analyze_coupling(op, np.zeros((1, 1))).eta
    f = GridFunction.constant(g, eta)
    for lam in (1.0, 3.0):
        u = elliptic_direct(op, 0.0, lam, f).solution
        np.testing.assert_allclose(u.values.reshape(3, -1), (eta / lam)[:, None] * np.ones((1, g.size)),
                                   atol=1e-12)


def test_zero_datum_gives_zero():
    op = example1(1)
    g = UniformGrid.box(4.0, 81)
    u = elliptic_direct(op, 0.3, 5.0, GridFunction.constant(g, [0.0, 0.0])).solution
    assert np.abs(u.values).max() == 0.0


def test_heat_resolvent_matches_green_kernel():
    op = scalar_preset(False)
    g = UniformGrid.box(20.0, 4001)
    f = GridFunction.from_callable(g, gaussian(0.0, 1.0))
    u = elliptic_direct(op, 0.0, 1.0, f).solution
    ref = green_heat_resolvent_1d(g.axis, f.values[0], g.h)
    mid = np.abs(g.axis) <= 5.0
    assert np.abs(u.values[0] - ref)[mid].max() < 1e-3


def test_quadrature_agrees_with_direct_on_example1():
    op = example1(1)
    g = UniformGrid.box(6.0, 201)
    f = random_smooth(g, 2, np.random.default_rng(0), envelope=2.0)
    M = frozen_row_sum(op, 0.3, g)
    q = resolvent_quadrature(op, 0.3, M + 1.0, f, CN, M=M)
    d = elliptic_direct(op, 0.3, M + 1.0, f, M=M)
    assert np.abs(restrict(q.solution - d.solution, g.inner(0.5)).values).max() < 5e-3
    assert q.tail_bound <= 1e-8 * np.abs(f.values).max() * 1.0001
    assert d.residual < 1e-9


def test_lambda_below_row_sum_is_rejected():
    op = example2()
    g = UniformGrid.box(4.0, 81)
    f = GridFunction.constant(g, [1.0, 0.0, 0.0])
    M = frozen_row_sum(op, 0.0, g)
    assert M == pytest.approx(math.sqrt(3) - 1)
    with pytest.raises(LambdaTooSmall):
        resolvent_quadrature(op, 0.0, M + 0.1, f)
    with pytest.raises(LambdaTooSmall):
        elliptic_direct(op, 0.0, M - 0.1, f)


def test_resolvent_identity_trivial_and_example1():
    op = example1(1)
    g = UniformGrid.box(6.0, 201)
    f = random_smooth(g, 2, np.random.default_rng(1), envelope=2.0)
    M = frozen_row_sum(op, 0.3, g)
    same = check_resolvent_identity(op, 0.3, M + 1, M + 1, f)
    assert same.worst_violation == 0.0
    rep = check_resolvent_identity(op, 0.3, 2 * M + 1, 2 * M + 3, f)
    assert rep.passed, rep.dumps()


def test_resolvent_identity_constant_coefficients_is_exact():
    op = coupling_op([[-1.0, 0.5], [2.0, -3.0]])
    g = UniformGrid.box(3.0, 61)
    f = GridFunction.constant(g, [1.0, -2.0])
    rep = check_resolvent_identity(op, 0.0, 4.0, 6.0, f)
    assert rep.worst_violation < 1e-13


def test_quadrature_identity_improves_with_step():
    op = example1(1)
    g = UniformGrid.box(6.0, 121)
    f = random_smooth(g, 2, np.random.default_rng(2), envelope=2.0)
    M = frozen_row_sum(op, 0.3, g)
    errs = [check_resolvent_identity(op, 0.3, 2 * M + 1, 2 * M + 3, f, "quadrature", CN, step=s).worst_violation
            for s in (0.02, 0.01)]
    assert errs[1] < errs[0] / 2.5


def test_resolvent_bound_example2_and_constants():
    op = example2()
    g = UniformGrid.box(5.0, 201)
    M = frozen_row_sum(op, 0.0, g)
    fs = [random_smooth(g, 3, np.random.default_rng(s), envelope=2.0) for s in range(5)]
    assert check_resolvent_bound(op, 0.0, M + 1.0, fs, M=M).passed
    heat = scalar_preset(False)
    one = GridFunction.constant(g, [1.0])
    u = elliptic_direct(heat, 0.0, 2.5, one).solution
    assert np.abs(u.values).max() == pytest.approx(1 / 2.5, rel=1e-12)


def test_abelian_limit():
    op = example1(1)
    g = UniformGrid.box(4.0, 161)
    f = GridFunction.from_callable(g, gaussian(0.0, 1.0, [1.0, 0.5]))
    inner = g.inner(0.5)
    errs = []
    for lam in (10.0, 100.0, 1000.0):
        u = elliptic_direct(op, 0.0, lam, f).solution
        errs.append(np.abs(restrict(u * lam - f, inner).values).max())
    assert errs[0] > errs[1] > errs[2]


def test_manufactured_elliptic_converges_at_second_order():
    op = example1(1)
    mg = ManufacturedGaussian(1, [1.0, 0.5], width=0.8, eps=0.3)
    errs = []
    for n in (401, 801):
        g = UniformGrid.box(4.0, n)
        lam = frozen_row_sum(op, 0.3, g) + 1.0
        err, _ = manufactured_elliptic(op, 0.3, lam, mg, g)
        errs.append(err)
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)


def test_manufactured_parabolic_recovery():
    op = example1(1)
    mg = ManufacturedGaussian(1, [1.0, 0.5], width=0.8, eps=0.3)
    g = UniformGrid.box(4.0, 801)
    err, _ = manufactured_parabolic(op, 0.0, 0.5, mg, g, SolverConfig(theta=0.5, dt=1e-3), [0.25, 0.5])
    assert err < 1e-3


def test_schauder_ratios_are_refinement_stable():
    op = example1(1)
    g = UniformGrid.box(4.0, 401)
    fld = RandomSmoothField(1, 2, np.random.default_rng(3), envelope=1.5, reference=g)
    M = frozen_row_sum(op, 0.0, g)
    rep = schauder_experiment(op, lambda t, X: fld(X) * (1 + 0.3 * np.sin(t)), M + 2.0, 0.5, (0.0, 1.0), g,
                              r0_phys=0.3)
    assert rep.passed, rep.dumps()


def test_parabolic_schauder_zero_data_and_stability():
    op = example1(1)
    g = UniformGrid.box(4.0, 401)
    fld = RandomSmoothField(1, 2, np.random.default_rng(4), envelope=1.5, reference=g)
    gfld = RandomSmoothField(1, 2, np.random.default_rng(5), envelope=1.5, reference=g)
    cfg = SolverConfig(theta=0.5, dt=2e-3)
    rep = parabolic_schauder_experiment(op, fld, lambda t, X: gfld(X) * np.cos(t), (0.0, 0.5), g, 0.5, cfg,
                                        r0_phys=0.3)
    assert rep.passed, rep.dumps()


def test_interpolation_ratio_is_one_for_constants_without_coupling():
    op = scalar_preset(False)
    g = UniformGrid.box(4.0, 201)
    rep = check_interpolation_inequality(op, 0.0, 0.5, lambda gr: [GridFunction.constant(gr, [2.0])], g)
    assert rep.measured["ratio_coarse"] == pytest.approx(1.0, rel=1e-12)
    assert rep.measured["ratio_fine"] == pytest.approx(1.0, rel=1e-12)


@given(st.floats(0.1, 10.0))
@settings(max_examples=8)
def test_interpolation_ratio_is_scale_invariant(a):
    op = example1(1)
    g = UniformGrid.box(4.0, 201)

    def batch(scale):
        return lambda gr: [random_smooth(gr, 2, np.random.default_rng(6), envelope=1.5) * scale]

    r1 = check_interpolation_inequality(op, 0.3, 0.5, batch(1.0), g)
    r2 = check_interpolation_inequality(op, 0.3, 0.5, batch(a), g)
    assert r2.measured["ratio_coarse"] == pytest.approx(r1.measured["ratio_coarse"], rel=1e-9)
    assert r2.measured["ratio_fine"] == pytest.approx(r1.measured["ratio_fine"], rel=1e-9)
