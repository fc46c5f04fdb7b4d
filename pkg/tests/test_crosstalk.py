from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from shuntcavity.core import ModelDomainError
from shuntcavity.crosstalk import (BandEdge, CrosstalkProfile, QubitPort, asymptotic_tail,
                                   bound_state_length, coupling_from_impedance, coupling_J,
                                   drive_coupling, fit_penetration_depth, gamma_profile,
                                   log_k0_ratio, penetration_depth, penetration_depth_geometric,
                                   trans_impedance, waveguide_g)
from shuntcavity.specfun import bessel_k
from shuntcavity.spectra import plasma_frequency

A, R, EPS = 2e-3, 0.1e-3, 11.9
WQ = 2 * math.pi * 5e9
WP = 2 * math.pi * plasma_frequency(A, R, EPS)


def test_penetration_depth_value():
    # a = 2 mm, r = 0.1 mm, f_q = 5 GHz
    assert penetration_depth(WQ, WP, EPS) == pytest.approx(1.117e-3, rel=1e-3)


def test_geometric_form_agrees():
    assert penetration_depth_geometric(WQ, WP, A, R) == pytest.approx(
        penetration_depth(WQ, WP, EPS), rel=1e-9)


def test_depth_domain():
    with pytest.raises(ModelDomainError):
        penetration_depth(WP, WP, EPS)
    with pytest.raises(ModelDomainError):
        penetration_depth_geometric(1.1 * WP, WP, A, R)


def test_depth_grows_with_qubit_frequency():
    ds = [penetration_depth(2 * math.pi * f * 1e9, WP, EPS) for f in (4, 5, 6, 7, 8)]
    assert np.all(np.diff(ds) > 0)


def test_depth_shrinks_with_radius():
    ds = [penetration_depth(WQ, 2 * math.pi * plasma_frequency(A, r, EPS), EPS)
          for r in (0.05e-3, 0.1e-3, 0.2e-3, 0.3e-3)]
    assert np.all(np.diff(ds) < 0)


def test_gamma_profile_normalized_and_monotone():
    prof = gamma_profile(range(1, 11), A, 1.117e-3)
    assert prof.gamma[0] == 1.0
    assert prof.gamma_exp[0] == 1.0
    assert prof.is_monotone()
    assert prof.distances[-1] == pytest.approx(20e-3)
    assert np.allclose(prof.gamma, bessel_k(0, prof.distances / 1.117e-3)
                       / bessel_k(0, A / 1.117e-3), rtol=1e-14)


def test_log_slope_approaches_minus_inverse_depth():
    dp = 1.117e-3
    prof = gamma_profile(range(1, 41), A, dp)
    slope = np.diff(np.log(prof.gamma)) / np.diff(prof.distances)
    assert slope[-1] == pytest.approx(-1 / dp, rel=0.02)
    assert np.all(np.diff(slope) > 0)  # approaches from below


def test_asymptotic_tail():
    for x in (20.0, 50.0, 200.0):
        assert asymptotic_tail(x, 1.0) == pytest.approx(bessel_k(0, x), rel=1 / (7 * x))


def test_empty_profile():
    with pytest.raises(ValueError):
        gamma_profile([], A, 1e-3)


def test_coupling_j_shape():
    d = np.linspace(1, 12, 20) * 1.117e-3
    j = coupling_J(d, g=1e8, omega_q=WQ, v=3e7, delta0=1e-3, delta_p=1.117e-3)
    assert np.allclose(j / j[0], bessel_k(0, d / 1.117e-3) / bessel_k(0, d[0] / 1.117e-3))
    with pytest.raises(ValueError):
        coupling_J(0.0, 1.0, WQ, 1.0, 1.0, 1.0)


def test_drive_coupling_shape():
    assert drive_coupling(2e-3, 3.0, 1e-3) == pytest.approx(3.0 * bessel_k(0, 2.0))


def _impedance_route(d, dp, delta0, z0, cg, cq, simplified):
    z = trans_impedance(d, dp, delta0, z0, cg, cq, cq, WQ, simplified=simplified)
    L = 1 / (WQ ** 2 * cq)
    return coupling_from_impedance(z, z, WQ, WQ, L, L)


@pytest.mark.parametrize("simplified", [False, True])
def test_impedance_route_profile(simplified):
    dp, delta0 = 1.117e-3, 0.5e-3
    d = np.linspace(1, 12, 50) * dp
    j_c = _impedance_route(d, dp, delta0, -50j, 5e-15, 100e-15, simplified)
    j_14 = coupling_J(d, 1e8, WQ, 3e7, delta0, dp)
    assert np.allclose(j_c / j_c[0], j_14 / j_14[0], rtol=1e-12)


def test_impedance_route_magnitude():
    dp, delta0 = 1.117e-3, 1e-3
    cg_per_len, cq, v, z0 = 5e-12, 100e-15, 3e7, -50j
    d = np.array([2e-3, 5e-3, 9e-3])
    g = waveguide_g(cg_per_len, WQ, z0, cq, v, delta0=delta0, delta_p=dp)
    j_14 = coupling_J(d, g, WQ, v, delta0, dp)
    j_c = _impedance_route(d, dp, delta0, z0, cg_per_len * delta0, cq, True)
    assert np.allclose(j_c, j_14, rtol=1e-12)


def test_trans_impedance_guards():
    with pytest.raises(ValueError):
        trans_impedance(0.5e-3, 1e-3, 1e-3, 50, 1e-15, 1e-13, 1e-13, WQ)


def test_full_vs_simplified_large_coupling_impedance():
    d = 3e-3
    full = trans_impedance(d, 1e-3, 0.5e-3, -50j, 1e-18, 1e-13, 1e-13, WQ)
    simple = trans_impedance(d, 1e-3, 0.5e-3, -50j, 1e-18, 1e-13, 1e-13, WQ, simplified=True)
    assert abs(full - simple) / abs(simple) < 1e-4


def test_waveguide_g_normalization():
    bare = waveguide_g(5e-12, WQ, 50.0, 1e-13, 3e7)
    folded = waveguide_g(5e-12, WQ, 50.0, 1e-13, 3e7, delta0=1e-3, delta_p=2e-3)
    assert folded == pytest.approx(bare / math.sqrt(bessel_k(0, 0.5)))


def test_bound_state_equals_penetration_near_edge():
    edge = BandEdge.plasma(WP, EPS)
    wq = WP * (1 - 1e-3)
    ratio = bound_state_length(edge, wq) / penetration_depth(wq, WP, EPS)
    assert 0.999 <= ratio <= 1.001


def test_circuit_band_edge():
    edge = BandEdge.circuit(2 * math.pi * 20e9, 0.1, A)
    assert edge.alpha == pytest.approx(0.5 * 0.1 * A ** 2)
    with pytest.raises(ModelDomainError):
        bound_state_length(edge, 2 * math.pi * 21e9)
    with pytest.raises(ValueError):
        BandEdge(1.0, 0.0)


def test_qubit_port():
    port = QubitPort(WQ, 10e-9, 100e-15, 5e-15)
    assert port.frequency == pytest.approx(5e9)
    with pytest.raises(ValueError):
        QubitPort(WQ, -1.0, 1.0, 1.0)


def test_fit_recovers_depth_exactly():
    prof = gamma_profile(range(1, 11), A, 1.117e-3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit = fit_penetration_depth(prof)
    assert fit.delta_p == pytest.approx(1.117e-3, rel=1e-12)
    assert fit.residual < 1e-12 and fit.monotone


def test_fit_with_noise():
    rng = np.random.default_rng(3)
    prof = gamma_profile(range(1, 11), A, 0.9e-3)
    noisy = CrosstalkProfile(prof.indices, prof.distances,
                             prof.gamma * (1 + 0.01 * rng.standard_normal(10)),
                             float("nan"), prof.gamma_exp, A)
    assert fit_penetration_depth(noisy).delta_p == pytest.approx(0.9e-3, rel=0.05)


def test_fit_needs_three_points():
    prof = gamma_profile([1, 2], A, 1e-3)
    with pytest.raises(ValueError):
        fit_penetration_depth(prof)


def test_log_ratio_where_k0_underflows():
    val = log_k0_ratio(np.array([2.0]), 1.0, 1e-3)
    assert np.isfinite(val).all()
    assert val[0] == pytest.approx(-1000 - 0.5 * math.log(2), rel=1e-6)
