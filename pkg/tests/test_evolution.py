import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import constant_coupling_flow, dense_semigroup, heat_gaussian, ou_linear
from test_operators import coupling_op
from wcpde.coefficients import ZERO
from wcpde.data import gaussian, random_smooth
from wcpde.discrete import assemble
from wcpde.errors import ConfigError, EllipticityViolated
from wcpde.evolution import (SolverConfig, duhamel_check, expanding_domain_study, solve_cauchy, solve_frozen,
                             step)
from wcpde.grid import GridFunction, UniformGrid, restrict
from wcpde.operators import OperatorFamily, derive_auxiliary
from wcpde.presets import example1, scalar_preset, sign_flip_preset


def test_config_json_roundtrip_and_unknown_keys():
    cfg = SolverConfig(theta=0.5, dt=1e-3, startup_steps=3)
    assert SolverConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ConfigError):
        SolverConfig.from_json({"theta": 1.0, "bogus": 1})
    with pytest.raises(ConfigError):
        SolverConfig(theta=0.2)


def test_heat_matches_gaussian_oracle():
    op = scalar_preset(False)
    g = UniformGrid.box(10.0, 1001)
    f = GridFunction.from_callable(g, gaussian(0.0, 1.0))
    res = solve_cauchy(op, 0.0, 1.0, f, cfg=SolverConfig(theta=0.5, dt=2e-3), snapshots=[0.5, 1.0])
    for t in (0.5, 1.0):
        assert np.abs(res.at(t).values[0] - heat_gaussian(g.axis, t)).max() < 1e-4


def test_ou_linear_datum():
    op = scalar_preset(True)
    g = UniformGrid.box(6.0, 601)
    f = GridFunction.from_callable(g, lambda X: X[:, 0][None])
    u = solve_cauchy(op, 0.0, 1.0, f, cfg=SolverConfig(theta=0.5, dt=5e-3)).final
    inner = g.inner(0.5)
    err = restrict(u, inner).values[0] - ou_linear(restrict(u, inner).grid.axis, 1.0)
    assert np.abs(err).max() < 1e-4


def test_constant_data_follow_matrix_exponential():
    C0 = [[-1.0, 0.5], [2.0, -3.0]]
    op = coupling_op(C0)
    g = UniformGrid.box(3.0, 61)
    f = GridFunction.constant(g, [1.0, -2.0])
    u = solve_cauchy(op, 0.0, 1.0, f, cfg=SolverConfig(theta=0.5, dt=1e-3)).final
    ref = constant_coupling_flow(C0, [1.0, -2.0], 1.0)
    np.testing.assert_allclose(u.values.reshape(2, -1), ref[:, None] * np.ones((1, g.size)), atol=1e-6)


def test_scheme_converges_to_dense_exponential():
    op = sign_flip_preset()
    g = UniformGrid.box(3.0, 31)
    f = random_smooth(g, 2, np.random.default_rng(1))
    A = assemble(op, g, 0.0).toarray()
    ref = dense_semigroup(A, f.flat(), 0.5)
    errs = []
    for dt in (1e-2, 5e-3):
        u = solve_cauchy(op, 0.0, 0.5, f, cfg=SolverConfig(theta=0.5, dt=dt)).final
        errs.append(np.abs(u.flat() - ref).max())
    assert errs[1] < errs[0] / 3.0


def test_step_matches_solver():
    op = example1(1)
    g = UniformGrid.box(4.0, 81)
    f = random_smooth(g, 2, np.random.default_rng(0))
    one = step(op, 0.2, 0.01, f)
    via = solve_cauchy(op, 0.2, 0.21, f, cfg=SolverConfig(dt=0.01)).final
    np.testing.assert_allclose(one.values, via.values, atol=1e-13)


@given(st.integers(0, 2**31 - 1))
def test_implicit_euler_preserves_positivity(seed):
    op = derive_auxiliary(example1(1))
    g = UniformGrid.box(4.0, 41)
    f = abs(random_smooth(g, 2, np.random.default_rng(seed)))
    u = solve_cauchy(op, 0.0, 0.2, f, cfg=SolverConfig(dt=0.02)).final
    assert u.values.min() >= -1e-14


def test_linearity():
    op = example1(1)
    g = UniformGrid.box(4.0, 81)
    rng = np.random.default_rng(3)
    f1, f2 = random_smooth(g, 2, rng), random_smooth(g, 2, rng)
    cfg = SolverConfig(dt=0.02)
    u = solve_cauchy(op, 0, 0.2, f1 * 2.0 + f2, cfg=cfg).final
    v = solve_cauchy(op, 0, 0.2, f1, cfg=cfg).final * 2.0 + solve_cauchy(op, 0, 0.2, f2, cfg=cfg).final
    np.testing.assert_allclose(u.values, v.values, atol=1e-12)


def test_frozen_semigroup_is_autonomous():
    op = example1(1)
    g = UniformGrid.box(4.0, 81)
    f = random_smooth(g, 2, np.random.default_rng(5))
    a = solve_frozen(op, 0.7, 0.3, f, grid=g, cfg=SolverConfig(dt=0.01)).final
    A = assemble(op.frozen(0.7), g, 0.0)
    B = assemble(op, g, 0.7)
    assert abs(A - B).max() == 0.0
    assert np.isfinite(a.values).all()


def test_snapshot_validation():
    op = scalar_preset(False)
    g = UniformGrid.box(2.0, 21)
    f = GridFunction.constant(g, [1.0])
    with pytest.raises(ConfigError):
        solve_cauchy(op, 0.0, 1.0, f, snapshots=[1.5])


def test_ellipticity_violation_raises():
    op = OperatorFamily(1, 1, (((ZERO,),),), ((ZERO,),), ((ZERO,),))
    g = UniformGrid.box(2.0, 21)
    with pytest.raises(EllipticityViolated):
        solve_cauchy(op, 0.0, 1.0, GridFunction.constant(g, [1.0]))


def test_expanding_domains_converge():
    op = scalar_preset(True)
    radii = (2.0, 4.0, 8.0)
    inner = UniformGrid.with_spacing(2.0, 0.05).inner(0.5)
    table = expanding_domain_study(op, 0.0, 0.5, gaussian(0.0, 0.5), radii, inner, SolverConfig(dt=0.01), 0.05)
    assert table.passed
    assert table.sup_diff[-1].max() < 1e-8


def test_duhamel_reconstruction():
    op = example1(1)
    g = UniformGrid.box(4.0, 161)
    rng = np.random.default_rng(2)
    f, g0 = random_smooth(g, 2, rng), random_smooth(g, 2, rng)
    rep = duhamel_check(op, 0.0, 0.5, f, lambda t: np.cos(t) * g0.flat(), g, SolverConfig(theta=0.5, dt=5e-3))
    assert rep.passed, rep.dumps()
