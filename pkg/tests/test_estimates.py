import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wcpde.data import random_smooth, step_profile
from wcpde.errors import ConfigError, InsufficientDecade
from wcpde.estimates import (check_comparison, check_continuity_in_data, check_evolution_law,
                             check_evolution_law_refinement, check_joint_continuity, check_sup_bound, mbar,
                             measure_derivative_decay)
from wcpde.evolution import SolverConfig
from wcpde.grid import UniformGrid
from wcpde.presets import example1, example2, scalar_preset, sign_flip_preset


def test_mbar_formula():
    assert mbar(0.0) == pytest.approx(0.5)
    assert mbar(2.0) == pytest.approx((1 + 2 + 4) / 2)
    assert mbar(-1.0) == pytest.approx(0.0)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=10)
def test_comparison_holds_for_sign_flipping_coupling(seed):
    op = sign_flip_preset()
    g = UniformGrid.box(4.0, 81)
    f = random_smooth(g, 2, np.random.default_rng(seed), envelope=1.5)
    rep = check_comparison(op, 0.0, 0.5, f, g, SolverConfig(dt=0.01), [0.25, 0.5])
    assert rep.passed, rep.dumps()


def test_sup_bound_on_zero_row_sum_preset():
    op = example2()
    g = UniformGrid.box(5.0, 201)
    fs = [random_smooth(g, 3, np.random.default_rng(s), envelope=2.0) for s in range(3)]
    for f in fs:
        rep = check_sup_bound(op, 0.0, 1.0, f, g, SolverConfig(dt=0.01), [0.5, 1.0], M=np.sqrt(3) - 1)
        assert rep.passed, rep.dumps()
        assert rep.lhs <= 1.001


def test_sup_bound_detects_a_wrong_constant():
    # with M deliberately too small the exponential of the true growth rate is not covered
    op = sign_flip_preset()
    g = UniformGrid.box(4.0, 81)
    f = random_smooth(g, 2, np.random.default_rng(0), envelope=None)
    f = abs(f) + 1.0
    rep = check_sup_bound(op, 0.0, 1.0, f, g, SolverConfig(dt=0.01), [1.0], M=-0.9)
    assert not rep.passed


def test_heat_gradient_decay_slope():
    op = scalar_preset(False)
    g = UniformGrid.box(2.0, 2001)
    w = 5 * g.h
    fit = measure_derivative_decay(op, 0.0, 0.04, step_profile(0, w, [1.0], 0.5), 0, 1, g,
                                   window=(4 * w * w, 1.0))
    assert -0.65 <= fit.slope <= -0.35
    assert fit.passed


def test_decay_rejects_short_windows_and_bad_orders():
    op = scalar_preset(False)
    g = UniformGrid.box(2.0, 201)
    with pytest.raises(InsufficientDecade):
        measure_derivative_decay(op, 0.0, 0.04, step_profile(0, 0.1, [1.0]), 0, 1, g, window=(0.005, 0.01))
    with pytest.raises(ConfigError):
        measure_derivative_decay(op, 0.0, 0.04, step_profile(0, 0.1, [1.0]), 2, 1, g)


def test_evolution_law_residual_and_refinement():
    op = example1(1)
    g = UniformGrid.box(4.0, 81)
    f = random_smooth(g, 2, np.random.default_rng(4), envelope=2.0)
    rep = check_evolution_law(op, 0.0, 0.3337, 1.0, f, g, SolverConfig(dt=0.01))
    assert rep.passed, rep.dumps()
    ref = check_evolution_law_refinement(op, 0.0, 0.3337, 1.0, f, g, SolverConfig(dt=0.01))
    assert ref.passed, ref.dumps()


def test_continuity_in_data():
    op = example1(1)
    g = UniformGrid.box(4.0, 81)
    rng = np.random.default_rng(7)
    f, p = random_smooth(g, 2, rng), random_smooth(g, 2, rng)
    seq = [f + p * (0.5**j) * 1e-2 for j in range(5)]
    rep = check_continuity_in_data(op, 0.0, 0.5, f, seq, g, SolverConfig(dt=0.01))
    assert rep.passed, rep.dumps()


def test_joint_continuity():
    op = example1(1)
    g = UniformGrid.box(4.0, 81)
    f = random_smooth(g, 2, np.random.default_rng(8), envelope=2.0)
    rep = check_joint_continuity(op, f, (0.0, 1.0), 0.1, g, SolverConfig(dt=0.01))
    assert rep.passed, rep.dumps()
