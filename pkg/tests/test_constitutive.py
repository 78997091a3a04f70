"""Constitutive laws: closed-form values, Gibbs consistency, quadrature oracles."""

import math

import mpmath
import numpy as np
import pytest

from thermoport.constitutive import (
    CoEnergyFields,
    ConstitutiveModel,
    InvalidStateError,
    SaturationError,
    ThermoState,
    co_energy,
    energy_density,
    entropy_for_temperature,
    total_energy,
    total_entropy,
)
from thermoport.mesh import MimeticGrid, ScalarField


def make_state(grid, model, conc_values=(), s_value=0.0):
    concs = tuple(ScalarField.full(grid, v) for v in conc_values)
    return ThermoState(grid, concs, ScalarField.full(grid, s_value))


def unit_grid(n=4):
    return MimeticGrid((n,), ((0.0, 1.0),))


def test_model_validation():
    with pytest.raises(ValueError):
        ConstitutiveModel(heat_capacity=0.0, reference_temperature=1.0, conductivity=1.0)
    with pytest.raises(ValueError):
        ConstitutiveModel(1.0, 1.0, 1.0, alpha=(1.0,), diffusivities=())
    with pytest.raises(ValueError):
        ConstitutiveModel(1.0, 1.0, 1.0, alpha=(-1.0,), diffusivities=(1.0,))
    m = ConstitutiveModel(1.0, 300.0, 0.1, alpha=(2.0, 3.0), diffusivities=(0.1, 0.2))
    assert m.n_species == 2


def test_energy_density_trivial_cases():
    g = unit_grid()
    m1 = ConstitutiveModel(1.0, 1.0, 1.0, alpha=(1.0,), diffusivities=(1.0,))
    st = make_state(g, m1, conc_values=(0.0,), s_value=0.0)
    assert np.all(energy_density(st, m1).values == 1.0)

    m2 = ConstitutiveModel(1.0, 1.0, 1.0, alpha=(3.0,), diffusivities=(1.0,))
    st = make_state(g, m2, conc_values=(2.0,), s_value=0.0)
    assert np.all(energy_density(st, m2).values == 7.0)


def test_energy_density_exponential_against_mpmath():
    g = unit_grid()
    m = ConstitutiveModel(heat_capacity=2.0, reference_temperature=300.0, conductivity=1.0)
    st = make_state(g, m, s_value=0.5)
    with mpmath.workdps(50):
        ref = float(mpmath.mpf(600) * mpmath.exp(mpmath.mpf("0.25")))
    got = energy_density(st, m).values
    assert np.all(np.abs(got - ref) <= 1e-15 * ref)


def test_co_energy_trivial_cases():
    g = unit_grid()
    m = ConstitutiveModel(1.5, 250.0, 1.0, alpha=(2.0,), diffusivities=(1.0,))
    st = make_state(g, m, conc_values=(1.0,), s_value=0.0)
    coe = co_energy(st, m)
    assert np.all(coe.temperature.values == 250.0)
    assert np.all(coe.chemical_potentials[0].values == 2.0)

    st2 = make_state(g, m, conc_values=(0.0,), s_value=1.5 * math.log(2.0))
    coe2 = co_energy(st2, m)
    assert np.abs(coe2.temperature.values - 500.0).max() <= 1e-12 * 500.0


def test_co_energy_overflow_reports_cell():
    g = unit_grid(4)
    m = ConstitutiveModel(1.0, 300.0, 1.0)
    s = ScalarField(g, np.array([0.0, 0.0, 1e6, 0.0]))
    st = ThermoState(g, (), s)
    with pytest.raises(SaturationError) as err:
        co_energy(st, m)
    assert err.value.cell_index == (2,)


def test_species_count_mismatch():
    g = unit_grid()
    m = ConstitutiveModel(1.0, 1.0, 1.0, alpha=(1.0,), diffusivities=(1.0,))
    st = ThermoState(g, (), ScalarField.zeros(g))
    with pytest.raises(InvalidStateError):
        co_energy(st, m)


def test_total_energy_two_cell_quadrature():
    g = MimeticGrid((2,), ((0.0, 1.0),))
    m = ConstitutiveModel(1.0, 1.0, 1.0)
    # choose entropies that give u = (2, 4) exactly: u = exp(s)
    s = ScalarField(g, np.log(np.array([2.0, 4.0])))
    st = ThermoState(g, (), s)
    assert total_energy(st, m) == pytest.approx(3.0, rel=1e-14)


def test_total_energy_uniform_unit_domain():
    g = unit_grid(8)
    m = ConstitutiveModel(1.0, 1.0, 1.0)
    st = make_state(g, m, s_value=0.0)
    assert total_energy(st, m) == pytest.approx(1.0, rel=1e-14)


def test_totals_match_high_precision_oracle():
    g = MimeticGrid((8,), ((0.0, 1.0),))
    m = ConstitutiveModel(1.3, 17.0, 1.0, alpha=(0.7,), diffusivities=(1.0,))
    rng = np.random.default_rng(42)
    st = ThermoState(
        g,
        (ScalarField(g, rng.standard_normal(8)),),
        ScalarField(g, rng.standard_normal(8)),
    )
    u = energy_density(st, m).values
    s = st.entropy_density.values
    with mpmath.workdps(60):
        h = mpmath.mpf(1) / 8
        ref_u = float(h * mpmath.fsum(mpmath.mpf(float(x)) for x in u))
        ref_s = float(h * mpmath.fsum(mpmath.mpf(float(x)) for x in s))
    assert abs(total_energy(st, m) - ref_u) <= 1e-14 * max(1.0, abs(ref_u))
    assert abs(total_entropy(st) - ref_s) <= 1e-14 * max(1.0, abs(ref_s))


def test_totals_zero_entropy():
    g = unit_grid()
    st = ThermoState(g, (), ScalarField.zeros(g))
    assert total_entropy(st) == 0.0


def test_gibbs_finite_difference_consistency():
    # central difference of the energy density against the co-energy fields
    g = MimeticGrid((6,), ((0.0, 1.0),))
    m = ConstitutiveModel(0.8, 2.0, 1.0, alpha=(1.7,), diffusivities=(0.3,))
    rng = np.random.default_rng(7)
    st = ThermoState(
        g,
        (ScalarField(g, 0.5 * rng.standard_normal(6)),),
        ScalarField(g, 0.3 * rng.standard_normal(6)),
    )
    coe = co_energy(st, m)
    eps = 1e-7
    for cell in range(6):
        for which in ("s", "c"):
            up = st.copy()
            dn = st.copy()
            if which == "s":
                up.entropy_density.values[cell] += eps
                dn.entropy_density.values[cell] -= eps
                expect = coe.temperature.values[cell]
            else:
                up.concentrations[0].values[cell] += eps
                dn.concentrations[0].values[cell] -= eps
                expect = coe.chemical_potentials[0].values[cell]
            u_up = energy_density(up, m).values[cell]
            u_dn = energy_density(dn, m).values[cell]
            fd = (u_up - u_dn) / (2.0 * eps)
            assert abs(fd - expect) <= 1e-6 * max(1.0, abs(expect))


def test_temperature_positive_for_wide_entropy_range():
    g = unit_grid()
    m = ConstitutiveModel(1.0, 300.0, 1.0)
    for s_val in (-500.0, -5.0, 0.0, 5.0, 500.0):
        st = make_state(g, m, s_value=s_val)
        assert np.all(co_energy(st, m).temperature.values > 0.0)


def test_totals_are_linear_in_densities():
    g = unit_grid(5)
    rng = np.random.default_rng(11)
    s1 = ScalarField(g, rng.standard_normal(5))
    s2 = ScalarField(g, rng.standard_normal(5))
    a, b = 1.7, -0.3
    st = ThermoState(g, (), ScalarField(g, a * s1.values + b * s2.values))
    lhs = total_entropy(st)
    rhs = a * total_entropy(ThermoState(g, (), s1)) + b * total_entropy(
        ThermoState(g, (), s2)
    )
    assert abs(lhs - rhs) <= 1e-13 * max(1.0, abs(rhs))


def test_entropy_for_temperature_inverts_thermal_law():
    m = ConstitutiveModel(2.5, 300.0, 1.0)
    g = unit_grid()
    s = entropy_for_temperature(450.0, m)
    st = make_state(g, m, s_value=float(s))
    assert np.abs(co_energy(st, m).temperature.values - 450.0).max() <= 1e-12 * 450.0
    with pytest.raises(ValueError):
        entropy_for_temperature(-1.0, m)


def test_pack_unpack_round_trip():
    g = MimeticGrid((3, 2), ((0.0, 1.0), (0.0, 1.0)))
    rng = np.random.default_rng(0)
    st = ThermoState(
        g,
        (ScalarField(g, rng.standard_normal((3, 2))),),
        ScalarField(g, rng.standard_normal((3, 2))),
        time=2.5,
    )
    flat = st.pack()
    back = ThermoState.unpack(flat, g, 1, st.time)
    assert np.array_equal(back.concentrations[0].values, st.concentrations[0].values)
    assert np.array_equal(back.entropy_density.values, st.entropy_density.values)
    assert back.time == 2.5
