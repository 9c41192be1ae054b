import math

import numpy as np
import pytest

from oracles import EXAMPLE2_EIGS, EXAMPLE2_ETA, EXAMPLE2_XI, unit
from wcpde.errors import SelfValidationFailed, UnknownPreset
from wcpde.presets import PRESET_NAMES, load_preset


def test_all_presets_load_and_self_validate(presets):
    assert set(presets) == set(PRESET_NAMES)
    for name, pre in presets.items():
        assert pre.name == name
        assert pre.operator.name == name
        doc = pre.to_json()
        assert doc["grid"]["n_g"] == (401 if pre.d == 1 else 101)


def test_example2_expected_values_match_printed_ones(presets):
    pre = presets["example2-gamma0"]
    assert pre.expected["eta"]["provenance"] == "published"
    np.testing.assert_allclose(pre.measured["eigenvalues"], EXAMPLE2_EIGS, atol=1e-10)
    np.testing.assert_allclose(pre.measured["eta"], unit(EXAMPLE2_ETA), atol=1e-10)
    np.testing.assert_allclose(pre.measured["xi"], unit(EXAMPLE2_XI), atol=1e-10)
    assert pre.measured["M_J"] == pytest.approx(math.sqrt(3) - 1, abs=1e-10)


def test_row_sum_constants(presets):
    assert presets["heat-scalar"].measured["M_J"] == 0.0
    assert presets["ou-scalar"].measured["M_J"] == 0.0
    assert presets["decoupled-negative-coupling"].measured["M_J"] == pytest.approx(4.0)
    assert presets["example1-d1m2"].measured["M_J"] == pytest.approx(0.0, abs=1e-10)


def test_example1_off_diagonal_exponent_too_large_is_rejected():
    with pytest.raises(SelfValidationFailed):
        load_preset("example1-d1m2", {"gamma_off": 0.5})
    with pytest.raises(SelfValidationFailed):
        load_preset("example1-d1m2", {"gamma_off": 0.75})


def test_example1_admissible_override_loads():
    pre = load_preset("example1-d1m2", {"gamma_off": 0.25})
    assert pre.expected == {}


def test_example2_corrupted_matrix_fails(monkeypatch):
    import wcpde.presets as P

    bad = ((-1.0, 0.0, -1.0), (0.0, -3.0, 1.5), (-1.0, 1.5, -2.0))
    monkeypatch.setattr(P, "EXAMPLE2_MATRIX", bad)
    with pytest.raises(SelfValidationFailed):
        load_preset("example2-gamma0")


def test_unknown_preset():
    with pytest.raises(UnknownPreset):
        load_preset("example3")
