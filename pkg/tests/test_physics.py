"""Tests for gas properties, wavenumbers and frequency grids."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from viscopt.physics import (AirProperties, FictitiousRigid, FrequencyGrid,
                             compute_wavenumbers, grid_from_hz)


def test_default_air_is_consistent():
    props = AirProperties()
    assert props.gamma == pytest.approx(props.Cp / props.Cv, rel=1e-3)
    assert props.K0 == pytest.approx(props.rho0 * props.c0 ** 2)
    assert props.c_complex == props.c0
    assert props.K_complex == props.K0


def test_gamma_mismatch_rejected():
    with pytest.raises(ValueError):
        AirProperties(gamma=1.5)


@pytest.mark.parametrize("name", ["rho0", "c0", "mu", "kappa", "T0", "p0"])
def test_nonpositive_property_rejected(name):
    with pytest.raises(ValueError):
        AirProperties(**{name: 0.0})


def test_bulk_loss_makes_sound_speed_complex():
    props = AirProperties(tau_loss=0.05)
    c = props.c_complex
    assert c.imag != 0.0
    assert c == pytest.approx(props.c0 / (1.0 - 0.05j))
    wn = compute_wavenumbers(props, 2.0 * math.pi * 1000.0)
    assert wn.k0.imag != 0.0


def test_wavenumbers_definitions():
    props = AirProperties()
    omega = 2.0 * math.pi * 2500.0
    wn = compute_wavenumbers(props, omega)
    assert wn.k0 == pytest.approx(omega / props.c0)
    assert wn.k_v ** 2 == pytest.approx(-1j * omega * props.rho0 / props.mu)
    assert wn.k_h ** 2 == pytest.approx(
        -1j * omega * props.rho0 * props.Cp / props.kappa)
    # boundary layer of air at ~2.5 kHz is tens of microns
    assert 1e-5 < wn.delta_v < 1e-4
    assert wn.delta_h > wn.delta_v  # Pr < 1 for air
    assert wn.lambda_v == pytest.approx(2.0 * math.pi / abs(wn.k_v))


@given(st.floats(min_value=1.0, max_value=1e6))
def test_wavenumber_roots_principal(omega):
    wn = compute_wavenumbers(AirProperties(), omega)
    for k in (wn.k_v, wn.k_h):
        assert k.real > 0.0
        assert k.imag < 0.0
        # 45-degree line: |Re| == |Im| for a purely diffusive root
        assert abs(k.real + k.imag) <= 1e-9 * abs(k)


@given(st.floats(min_value=1.0, max_value=1e6),
       st.floats(min_value=1.5, max_value=16.0))
def test_delta_v_scales_inverse_sqrt_omega(omega, factor):
    props = AirProperties()
    a = compute_wavenumbers(props, omega).delta_v
    b = compute_wavenumbers(props, omega * factor).delta_v
    assert b == pytest.approx(a / math.sqrt(factor), rel=1e-9)


def test_wavenumbers_reject_nonpositive_omega():
    with pytest.raises(ValueError):
        compute_wavenumbers(AirProperties(), 0.0)


def test_fictitious_rigid_defaults_and_bounds():
    props = AirProperties()
    fr = FictitiousRigid()
    assert fr.rho_r(props) == pytest.approx(1e13 * props.rho0)
    assert fr.K_r(props) == pytest.approx(1e3 * props.K0)
    with pytest.raises(ValueError):
        FictitiousRigid(c_r1=1e5)
    with pytest.raises(ValueError):
        FictitiousRigid(c_r2=10.0)


def test_frequency_grid_endpoints_and_len():
    grid = grid_from_hz(3000.0, 6000.0, 20)
    assert len(grid) == 21
    om = np.asarray(grid.omegas)
    assert om[0] == pytest.approx(2.0 * math.pi * 3000.0)
    assert om[-1] == pytest.approx(2.0 * math.pi * 6000.0)
    assert np.allclose(np.diff(om), grid.delta_omega)


def test_frequency_grid_single_point():
    grid = FrequencyGrid(100.0, 100.0, 0)
    assert grid.omegas == (100.0,)
    assert grid.delta_omega == 0.0


def test_frequency_grid_validation():
    with pytest.raises(ValueError):
        FrequencyGrid(0.0, 10.0, 1)
    with pytest.raises(ValueError):
        FrequencyGrid(10.0, 5.0, 1)
    with pytest.raises(ValueError):
        FrequencyGrid(1.0, 2.0, -1)
