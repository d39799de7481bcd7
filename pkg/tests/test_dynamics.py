import math

import numpy as np
import pytest

import oracles
from thermocp.constants import C, EPS0, HBAR, KB, PI
from thermocp.dynamics import (RateMatrix, decay_time, equilibrium_populations, evolve,
                               oscillation_amplitude, relative_entropy, transient_force,
                               transition_rates)
from thermocp.errors import DomainError
from thermocp.force import MatsubaraSettings, force_for_mixture
from thermocp.green import HalfSpaceGeometry
from thermocp.material import GOLD_DRUDE, PermittivityModel
from thermocp.molecule import (DipoleTransition, InternalState, MolecularLevel, MoleculeSpec,
                               boltzmann_populations, photon_number)

W10 = 2.79e12
D = 1.96e-29
VAC = PermittivityModel.vacuum()
# Einstein coefficient of the full 0 <-> 1 manifold in free space
A_FREE = W10 ** 3 * D ** 2 / (3 * PI * EPS0 * HBAR * C ** 3)


def at(z, material=GOLD_DRUDE):
    return HalfSpaceGeometry(z, material)


@pytest.fixture(scope="module")
def rates_10um(lih):
    return transition_rates(at(1e-5), lih, 300.0)


class TestRates:
    def test_free_space_spontaneous(self, lih):
        r = transition_rates(at(1e-5, VAC), lih, 0.0)
        down = [r.rate(n, 0) for n in (1, 2, 3)]
        assert A_FREE == pytest.approx(0.03518, rel=1e-3, abs=0)
        # mu0 and 1/(eps0 c^2) agree to ~1e-10 in CODATA
        np.testing.assert_allclose(down, A_FREE / 3, rtol=1e-9)
        assert r.gamma[0].sum() == 0.0

    def test_free_space_thermal_factors(self, lih):
        r = transition_rates(at(1e-5, VAC), lih, 300.0)
        n = photon_number(W10, 300.0)
        assert r.rate(1, 0) == pytest.approx((n + 1) * A_FREE / 3, rel=1e-9, abs=0)
        assert r.rate(0, 1) == pytest.approx(n * A_FREE / 3, rel=1e-9, abs=0)

    def test_far_from_surface(self, lih):
        near = transition_rates(at(1.07), lih, 300.0)
        free = transition_rates(at(1.07, VAC), lih, 300.0)
        np.testing.assert_allclose(near.gamma, free.gamma, rtol=1e-2)

    def test_detailed_balance(self, rates_10um):
        x = HBAR * W10 / (KB * 300.0)
        for m in (1, 2, 3):
            assert rates_10um.rate(0, m) / rates_10um.rate(m, 0) == pytest.approx(
                math.exp(-x), rel=1e-12, abs=0)

    def test_substates_differ_near_surface(self, rates_10um):
        assert rates_10um.rate(0, 1) == pytest.approx(rates_10um.rate(0, 3), rel=1e-12, abs=0)
        assert rates_10um.rate(0, 1) != pytest.approx(rates_10um.rate(0, 2), rel=1e-3, abs=0)

    def test_validation(self):
        with pytest.raises(DomainError):
            RateMatrix(np.array([[0.0, -1.0], [1.0, 0.0]]), (0, 1), 300.0)
        with pytest.raises(DomainError):
            RateMatrix(np.zeros((2, 3)), (0, 1), 300.0)


class TestEvolution:
    def test_two_level_analytic(self):
        spec = MoleculeSpec("2L", [MolecularLevel(0, 0.0), MolecularLevel(1, W10)],
                            [DipoleTransition(0, 1, [0, 0, D])])
        r = transition_rates(at(2e-5), spec, 300.0)
        t = np.geomspace(1e-2, 1e2, 25)
        traj = evolve(r, InternalState([1.0, 0.0]), t)
        ref = oracles.two_level_populations(r.rate(0, 1), r.rate(1, 0), t)
        np.testing.assert_allclose(traj.populations[:, 0], ref, rtol=1e-12)

    def test_matches_matrix_exponential(self, rates_10um):
        p0 = np.array([1.0, 0.0, 0.0, 0.0])
        traj = evolve(rates_10um, InternalState(p0), [0.5, 3.0])
        for i, t in enumerate((0.5, 3.0)):
            np.testing.assert_allclose(traj.populations[i],
                                       oracles.expm_populations(rates_10um.generator, p0, t),
                                       rtol=1e-11, atol=1e-14)

    def test_long_time_is_boltzmann(self, lih, rates_10um):
        traj = evolve(rates_10um, InternalState([1.0, 0.0, 0.0, 0.0]), [1e6])
        np.testing.assert_allclose(traj.populations[0], boltzmann_populations(lih, 300.0).p,
                                   atol=1e-10)

    @pytest.mark.parametrize("z", [2e-6, 11e-6, 1e-4])
    def test_stationary_state_independent_of_distance(self, lih, z):
        r = transition_rates(at(z), lih, 300.0)
        pi = boltzmann_populations(lih, 300.0).p
        assert np.abs(r.generator @ pi).max() <= 1e-12 * np.abs(r.gamma).max()

    def test_probability_and_entropy(self, lih, rates_10um):
        t = np.geomspace(1e-3, 1e3, 60)
        traj = evolve(rates_10um, InternalState([0.0, 0.0, 1.0, 0.0]), t)
        assert np.all(traj.populations >= -1e-15)
        np.testing.assert_allclose(traj.populations.sum(axis=1), 1.0, atol=1e-14)
        pi = boltzmann_populations(lih, 300.0).p
        h = [relative_entropy(p, pi) for p in traj.populations]
        assert np.all(np.diff(h) <= 1e-13)

    def test_boltzmann_start_is_stationary(self, lih, rates_10um):
        pi = boltzmann_populations(lih, 300.0)
        traj = evolve(rates_10um, pi, [1e-3, 1.0, 1e3])
        np.testing.assert_allclose(traj.populations, np.tile(pi.p, (3, 1)), atol=1e-14)

    def test_zero_temperature_only_decays(self, lih):
        r = transition_rates(at(1e-5), lih, 0.0)
        assert r.gamma[0].sum() == 0.0
        traj = evolve(r, InternalState([0.0, 1.0, 0.0, 0.0]), [1e6])
        assert traj.populations[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_times_validated(self, rates_10um):
        with pytest.raises(DomainError):
            evolve(rates_10um, InternalState([1.0, 0, 0, 0]), [2.0, 1.0])


class TestTransientForce:
    def test_long_time_force_is_equilibrium(self, lih):
        z = 3e-4
        st = MatsubaraSettings(300.0)
        tf = transient_force(at(z), [z], lih, InternalState([1.0, 0, 0, 0]), 300.0,
                             times=[0.0, 1.0, 1e3])
        eq = force_for_mixture(at(z), lih, equilibrium_populations(lih, 300.0), st).total
        assert tf.total[0, -1] == pytest.approx(eq, rel=1e-8, abs=0)
        assert tf.total[0, 0] != pytest.approx(eq, rel=1e-2, abs=0)

    def test_resonant_part_thermalises_away(self, lih):
        z = 3e-4
        tf = transient_force(at(z), [z], lih, InternalState([1.0, 0, 0, 0]), 300.0,
                             times=[0.0, 1e3])
        per = tf.per_state[0]
        scale = max(abs(d.resonant) for d in per)
        assert abs(tf.resonant[0, -1]) <= 1e-8 * scale


class TestDiagnostics:
    def test_oscillation_amplitude_recovers_fit(self):
        w = W10
        zs = np.linspace(250e-6, 350e-6, 41)
        f = 3e-30 * 3e-4 / zs * np.sin(2 * w * zs / C + 0.4) + 1e-31 + 2e-28 * (zs - 3e-4)
        assert oscillation_amplitude(zs, f, w, 3e-4) == pytest.approx(3e-30, rel=1e-3, abs=0)
        stacked = np.stack([f, 2 * f], axis=1)
        np.testing.assert_allclose(oscillation_amplitude(zs, stacked, w, 3e-4),
                                   [3e-30, 6e-30], rtol=1e-3)

    def test_decay_time_exponential(self):
        t = np.linspace(0, 10, 201)
        assert decay_time(t, 5 * np.exp(-t / 2.5)) == pytest.approx(2.5, rel=1e-10, abs=0)
        assert decay_time(t, np.ones_like(t)) == math.inf

    def test_relative_entropy(self):
        assert relative_entropy([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert relative_entropy([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), rel=1e-15,
                                                                          abs=0)
