from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shuntcavity.circuit import (CoupledCavityCircuit, build_z1d, build_z2d, build_z2d_mesh,
                                 chain_matrix, circuit_band_curvature, circuit_quadratic_band,
                                 closed_form_frequencies, closed_form_gamma, fit_circuit_params,
                                 g2_count, inductance_matrix, kronecker_sum, mode_field_map,
                                 normalized_relative_error, numeric_mode_frequencies,
                                 tight_binding_frequencies)
from shuntcavity.core import FitError, ModelDomainError

F0 = 30e9
W = 2 * math.pi * 7e9

circuits = st.builds(
    lambda n, m, beta, ratio, beta1: CoupledCavityCircuit.from_frequency(
        F0, beta, n, m, lb_ratio=ratio, beta1=beta1),
    st.integers(1, 6), st.integers(1, 6), st.floats(0.0, 0.5), st.sampled_from([0.0, 1.0, 2.0, 0.37]),
    st.sampled_from([0.0, 0.01, 0.03]))


@settings(max_examples=60, deadline=None)
@given(circuits)
def test_kronecker_identity(circ):
    z1n = build_z1d(circ, W, size=circ.n).values
    z1m = build_z1d(circ, W, size=circ.m).values
    z0 = 1j * W * circ.L0 - 1j / (W * circ.C0)
    # Z is i*(Hermitian) so eigenvalues are imaginary; compare on the imaginary axis
    ln = np.linalg.eigvalsh(z1n.imag)
    lm = np.linalg.eigvalsh(z1m.imag)
    expected = np.sort((ln[:, None] + lm[None, :] - z0.imag).ravel())
    got = np.linalg.eigvalsh(build_z2d(circ, W).values.imag)
    assert np.allclose(got, expected, rtol=0, atol=1e-10 * np.abs(expected).max())


@settings(max_examples=60, deadline=None)
@given(circuits)
def test_kronecker_build_equals_mesh_build(circ):
    a = build_z2d(circ, W).values
    b = build_z2d_mesh(circ, W).values
    assert np.allclose(a, b, rtol=0, atol=1e-12 * np.abs(a).max())


def test_kronecker_sum_definition():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0]])
    assert np.array_equal(kronecker_sum(a, b), a + 5 * np.eye(2))


def test_flat_index_convention():
    circ = CoupledCavityCircuit.from_frequency(F0, 0.1, 3, 2)
    z = build_z2d(circ, W).values
    zg = 1j * W * circ.Lg
    # (a=0,b=0) couples to (a=1,b=0) at index 1 and to (a=0,b=1) at index 3
    assert z[0, 1] == pytest.approx(-zg)
    assert z[0, 3] == pytest.approx(-zg)
    assert z[0, 2] == 0


def test_chain_counting_rule():
    m = chain_matrix(3, 10.0, 1.0, b=0.5)
    assert np.array_equal(np.diag(m), [11.5, 12.0, 11.5])
    assert np.array_equal(chain_matrix(1, 10.0, 1.0, b=0.5), [[11.0]])


def test_chain_second_neighbour_template():
    m = chain_matrix(6, 0.0, 1.0, g2=0.1, order=2)
    assert np.allclose(np.diag(m), [1.1, 2.1, 2.2, 2.2, 2.1, 1.1])
    assert m[0, 2] == -0.1 and m[0, 3] == 0
    assert [g2_count(k, 2) for k in range(2)] == [1, 1]
    assert [g2_count(k, 3) for k in range(3)] == [1, 1, 1]
    assert g2_count(0, 1) == 0


def test_impedance_matrix_symmetric():
    circ = CoupledCavityCircuit.from_frequency(F0, 0.2, 4, 3, beta1=0.02, lb_ratio=1.0)
    z = build_z2d(circ, W)
    assert z.dimension == 12
    assert np.allclose(z.values, z.values.T)
    assert np.asarray(z).shape == (12, 12)


def test_resonance_zeroes_impedance_eigenvalue():
    circ = CoupledCavityCircuit.from_frequency(F0, 0.15, 3, 3)
    for f in numeric_mode_frequencies(circ).frequencies:
        ev = np.linalg.eigvals(build_z2d(circ, 2 * math.pi * f).values)
        assert np.min(np.abs(ev)) < 1e-9 * np.max(np.abs(ev))


@pytest.mark.parametrize("ratio, case", [(0.0, "0"), (1.0, "Lg"), (2.0, "2Lg")])
@pytest.mark.parametrize("n, m", [(1, 1), (1, 4), (2, 3), (5, 5)])
def test_closed_forms(ratio, case, n, m):
    circ = CoupledCavityCircuit.from_frequency(F0, 0.23, n, m, lb_ratio=ratio)
    closed = closed_form_frequencies(circ, case)
    numeric = numeric_mode_frequencies(circ)
    assert np.allclose(closed.frequencies, numeric.frequencies, rtol=1e-12)


def test_closed_form_top_mode_is_f0():
    circ = CoupledCavityCircuit.from_frequency(F0, 0.1, 4, 4)
    assert closed_form_frequencies(circ).frequencies[-1] == pytest.approx(F0, rel=1e-14)
    assert closed_form_gamma(4, 4, 4, 4, "0") == pytest.approx(-2)


def test_closed_form_guards():
    with pytest.raises(ValueError):
        closed_form_frequencies(CoupledCavityCircuit.from_frequency(F0, 0.1, 3, 3, beta1=0.01))
    with pytest.raises(ValueError):
        closed_form_frequencies(CoupledCavityCircuit.from_frequency(F0, 0.1, 3, 3, lb_ratio=0.5))
    with pytest.raises(ValueError):
        closed_form_frequencies(CoupledCavityCircuit.from_frequency(F0, 0.1, 3, 3), "2Lg")


def test_boundary_inductance_lowers_all_modes():
    lo = numeric_mode_frequencies(CoupledCavityCircuit.from_frequency(F0, 0.2, 3, 3)).frequencies
    hi = numeric_mode_frequencies(
        CoupledCavityCircuit.from_frequency(F0, 0.2, 3, 3, lb_ratio=2.0)).frequencies
    assert np.all(hi < lo)


def test_uncoupled_degenerate():
    s = numeric_mode_frequencies(CoupledCavityCircuit.from_frequency(F0, 0.0, 3, 2))
    assert np.allclose(s.frequencies, F0, rtol=1e-14)


def test_not_positive_definite():
    circ = CoupledCavityCircuit.from_frequency(F0, 0.1, 4, 4, beta1=-0.6)
    with pytest.raises(ModelDomainError):
        numeric_mode_frequencies(circ)


def test_inductance_matrix_positive():
    circ = CoupledCavityCircuit.from_frequency(F0, 0.3, 3, 4, lb_ratio=1.0)
    assert np.all(np.linalg.eigvalsh(inductance_matrix(circ)) > 0)


def test_field_maps_orthogonal():
    circ = CoupledCavityCircuit.from_frequency(F0, 0.1, 4, 3)
    maps = [mode_field_map(circ, i, j).amplitudes.ravel() for i in range(1, 5) for j in range(1, 4)]
    gram = np.array([[u @ v for v in maps] for u in maps])
    assert np.allclose(gram - np.diag(np.diag(gram)), 0, atol=1e-12)
    assert max(abs(mode_field_map(circ, 2, 1).amplitudes.ravel())) == pytest.approx(1.0)


def test_field_map_is_eigenvector():
    circ = CoupledCavityCircuit.from_frequency(F0, 0.1, 4, 3)
    ml = inductance_matrix(circ)
    fm = mode_field_map(circ, 3, 2).amplitudes
    # mesh currents are the cavity fields with a staggered sign
    stagger = (-1.0) ** np.add.outer(np.arange(4), np.arange(3))
    v = (fm * stagger).T.ravel()  # flat index b * n + a
    lam = v @ ml @ v / (v @ v)
    assert np.allclose(ml @ v, lam * v, atol=1e-12 * abs(lam))


def test_field_map_guards():
    circ = CoupledCavityCircuit.from_frequency(F0, 0.1, 2, 2)
    with pytest.raises(ValueError):
        mode_field_map(circ, 3, 1)


def test_tight_binding_small_beta():
    circ = CoupledCavityCircuit.from_frequency(F0, 0.005, 5, 5)
    tb = tight_binding_frequencies(circ, 2e-3)
    exact = closed_form_frequencies(circ)
    # second-order term of (1 + 8 beta)^(-1/2) is 24 beta^2
    assert np.allclose(tb.frequencies, exact.frequencies, rtol=25 * 0.005 ** 2)
    assert tb.flags == ()
    assert tight_binding_frequencies(CoupledCavityCircuit.from_frequency(F0, 0.1, 2, 2),
                                     2e-3).flags


def test_band_curvature():
    beta, a = 0.01, 2e-3
    circ = CoupledCavityCircuit.from_frequency(F0, beta, 40, 40)
    f_c, k0 = circuit_band_curvature(circ, a)
    assert f_c == pytest.approx(F0 / math.sqrt(1 + 8 * beta))
    assert k0 == pytest.approx(1 / (a * math.sqrt(beta)))
    # lowest closed-form modes of a large array sit on the quadratic band
    low = closed_form_frequencies(circ).frequencies[0]
    k = math.pi / (40 * a) * math.sqrt(2)
    assert low == pytest.approx(circuit_quadratic_band(k, f_c, k0), rel=1e-4)
    with pytest.raises(ModelDomainError):
        circuit_band_curvature(CoupledCavityCircuit.from_frequency(F0, 0.0, 2, 2), a)


def test_nre_definition():
    assert normalized_relative_error([1.0, 2.0], [1.1, 2.0]) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        normalized_relative_error([1.0], [1.0, 2.0])


@pytest.mark.parametrize("n, m, beta", [(3, 3, 0.1), (4, 3, 0.25), (4, 4, 0.05)])
def test_fit_round_trip(n, m, beta):
    circ = CoupledCavityCircuit.from_frequency(F0, beta, n, m)
    fit = fit_circuit_params(numeric_mode_frequencies(circ), n, m)
    assert fit.nre < 1e-10
    assert fit.f0 == pytest.approx(F0, rel=1e-8)
    assert fit.beta == pytest.approx(beta, rel=1e-8)
    assert fit.circuit(n, m).n == n


def test_fit_order_two_round_trip():
    circ = CoupledCavityCircuit.from_frequency(F0, 0.12, 4, 4, beta1=0.01)
    obs = numeric_mode_frequencies(circ)
    two = fit_circuit_params(obs, 4, 4, neighbour_order=2)
    one = fit_circuit_params(obs, 4, 4, neighbour_order=1)
    assert two.nre < 1e-10
    assert two.beta1 == pytest.approx(0.01, rel=1e-6)
    assert one.nre > two.nre


def test_fit_perturbed_lower_bound():
    n = m = 3
    circ = CoupledCavityCircuit.from_frequency(F0, 0.1, n, m)
    obs = numeric_mode_frequencies(circ).frequencies.copy()
    obs[4] *= 1.01
    fit = fit_circuit_params(np.sort(obs), n, m)
    # moving one mode by 1% cannot be absorbed by f0 and beta
    assert fit.nre > 0
    assert fit.nre <= 0.01 / (n * m) * 1.0001


def test_fit_input_validation():
    with pytest.raises(ValueError):
        fit_circuit_params(np.ones(3) * F0, 2, 2)
    with pytest.raises(ValueError):
        fit_circuit_params(-np.ones(4), 2, 2)
    with pytest.raises(ValueError):
        fit_circuit_params(np.ones(4), 2, 2, neighbour_order=3)


def test_fit_error_type():
    assert issubclass(FitError, RuntimeError)
