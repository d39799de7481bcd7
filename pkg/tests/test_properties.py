import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from thermocp.constants import C
from thermocp.dynamics import evolve, transition_rates
from thermocp.force import MatsubaraSettings, force_for_mixture, force_for_state
from thermocp.green import HalfSpaceGeometry, scattering_green_real
from thermocp.material import (GOLD_DRUDE, GOLD_PLASMA, PermittivityModel, fresnel,
                               permittivity)
from thermocp.molecule import InternalState, boltzmann_populations

W10 = 2.79e12
ROOM = MatsubaraSettings(300.0)
SLOW = settings(max_examples=25, deadline=None,
                suppress_health_check=[HealthCheck.function_scoped_fixture])

models = st.one_of(
    st.builds(PermittivityModel.drude, st.floats(1e14, 1e17), st.floats(0.0, 1e15)),
    st.builds(PermittivityModel.plasma, st.floats(1e14, 1e17)),
    st.builds(PermittivityModel.dielectric, st.floats(1.0, 100.0)),
    st.just(PermittivityModel.vacuum()),
)
distances = st.floats(1e-6, 1e-3)


def probability_vectors(n):
    return st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n).filter(
        lambda v: sum(v) > 1e-3).map(lambda v: np.array(v) / sum(v))


@given(models, st.floats(1e8, 1e17), st.floats(1.0001, 10.0))
def test_imaginary_axis_permittivity_real_and_decreasing(model, xi, factor):
    lo = permittivity(model, 1j * xi)
    hi = permittivity(model, 1j * xi * factor)
    assert lo.imag == 0.0 and hi.imag == 0.0
    assert lo.real >= 1.0 and hi.real <= lo.real


@given(models, st.floats(1e9, 1e16), st.floats(0.0, 0.999999))
def test_propagating_reflection_bounded(model, w, frac):
    bound = 1.0 + 1e-12
    r = fresnel(model, w, frac * w / C)
    assert abs(r.r_s) <= bound and abs(r.r_p) <= bound


@given(st.floats(1e9, 1e16), st.floats(1.0001, 100.0))
def test_evanescent_branch_is_decaying(w, ratio):
    r = fresnel(GOLD_DRUDE, w, ratio * w / C)
    assert np.isfinite(r.r_s) and np.isfinite(r.r_p)


@SLOW
@given(distances)
def test_spectral_split_additive(z):
    s = scattering_green_real(HalfSpaceGeometry(z, GOLD_DRUDE), W10)
    for comp in ("xx", "zz"):
        parts = getattr(s.propagating, comp) + getattr(s.evanescent, comp)
        assert abs(getattr(s.total, comp) - parts) <= 1e-9 * abs(parts)


@SLOW
@given(distances)
def test_decomposition_closure(lih, z):
    d = force_for_state(HalfSpaceGeometry(z, GOLD_DRUDE), lih, 0, ROOM)
    parts = [d.nonresonant, d.resonant_propagating, d.resonant_evanescent]
    assert abs(d.total - math.fsum(parts)) <= 1e-12 * max(map(abs, parts))


@SLOW
@given(distances, probability_vectors(4), probability_vectors(4))
def test_mixture_linearity(lih, z, p, q):
    g = HalfSpaceGeometry(z, GOLD_DRUDE)
    fp = force_for_mixture(g, lih, InternalState(p), ROOM)
    fq = force_for_mixture(g, lih, InternalState(q), ROOM)
    fm = force_for_mixture(g, lih, InternalState(0.5 * p + 0.5 * q), ROOM)
    scale = max(abs(fp.nonresonant), abs(fq.nonresonant), abs(fp.resonant), abs(fq.resonant))
    assert abs(fm.total - 0.5 * (fp.total + fq.total)) <= 1e-12 * scale


@SLOW
@given(distances, probability_vectors(4), st.lists(st.floats(1e-3, 1e3), min_size=1,
                                                    max_size=6, unique=True))
def test_populations_conserved_and_non_negative(lih, z, p, times):
    r = transition_rates(HalfSpaceGeometry(z, GOLD_DRUDE), lih, 300.0)
    traj = evolve(r, InternalState(p), sorted(times))
    assert np.all(traj.populations >= -1e-14)
    np.testing.assert_allclose(traj.populations.sum(axis=1), 1.0, atol=1e-13)


@SLOW
@given(distances, st.floats(1.0, 2000.0))
def test_detailed_balance(lih, z, T):
    r = transition_rates(HalfSpaceGeometry(z, GOLD_DRUDE), lih, T)
    pi = boltzmann_populations(lih, T).p
    flux = pi[:, None] * r.gamma
    np.testing.assert_allclose(flux, flux.T, rtol=1e-12, atol=1e-300)


@SLOW
@given(st.floats(1e-6, 1e-3))
def test_drude_and_plasma_thermal_forces_agree(lih, z):
    thermal = boltzmann_populations(lih, 300.0)
    a = force_for_mixture(HalfSpaceGeometry(z, GOLD_DRUDE), lih, thermal, ROOM).total
    b = force_for_mixture(HalfSpaceGeometry(z, GOLD_PLASMA), lih, thermal, ROOM).total
    assert abs(a - b) < 0.01 * abs(a)


@pytest.mark.parametrize("T", [10.0, 300.0])
def test_thermal_resonant_cancellation(lih, T):
    pi = boltzmann_populations(lih, T)
    for z in (1e-6, 1e-5, 1e-4):
        g = HalfSpaceGeometry(z, GOLD_DRUDE)
        decs = [force_for_state(g, lih, n, MatsubaraSettings(T)) for n in pi.ids]
        mix = math.fsum(p * d.resonant for p, d in zip(pi.p, decs))
        assert abs(mix) <= 1e-8 * max(abs(p * d.resonant) for p, d in zip(pi.p, decs))
