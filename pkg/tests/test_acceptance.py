"""Acceptance criteria, one test per criterion (or clause).

Each test records its outcome in ``conftest.ACCEPTANCE`` so the session
ends with one PASS/FAIL line per criterion, then asserts at the stated
tolerance.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE
from thermocp.constants import HBAR, KB
from thermocp.dynamics import (evolve, equilibrium_populations, oscillation_decay_time,
                               transient_force, transition_rates)
from thermocp.force import (MatsubaraSettings, asymptote_nonretarded, asymptote_retarded,
                            force_for_mixture, force_for_state, potential_depth,
                            reduction_factor, saturation_bracket, sum_n4_closed_form)
from thermocp.green import (HalfSpaceGeometry, clear_cache, grad_z_scattering_green,
                            scattering_green_real)
from thermocp.material import GOLD_DRUDE, GOLD_PLASMA, PermittivityModel
from thermocp.molecule import InternalState, boltzmann_populations

W10 = 2.79e12
GROUND = InternalState([1.0, 0.0, 0.0, 0.0])


def at(z, material=GOLD_DRUDE):
    return HalfSpaceGeometry(z, material)


def record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    assert ok, f"criterion {key}: {detail}"


def local_minima(zs, values):
    v = np.asarray(values)
    inner = np.flatnonzero((v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])) + 1
    return np.asarray(zs)[inner]


def test_criterion_1_reduction_factor(ybf):
    t0 = time.perf_counter()
    r = reduction_factor(ybf, 300.0)
    dt = time.perf_counter() - t0
    record("1", 1 / 890 <= r <= 1 / 850 and dt < 1.0, f"1/{1 / r:.2f} in {dt * 1e3:.2f} ms")


def test_criterion_2_near_cancellation(lih, room):
    clear_cache()
    t0 = time.perf_counter()
    worst = 0.0
    for z in np.geomspace(1e-6, 30e-6, 20):
        d = force_for_state(at(z), lih, 0, room)
        worst = max(worst, abs(d.nonresonant + d.resonant_evanescent) / abs(d.nonresonant))
    dt = time.perf_counter() - t0
    record("2", worst < 0.15 and dt < 120.0, f"max ratio {worst:.4f} in {dt:.2f} s")


def test_criterion_3_thermal_resonant_cancellation(lih, room):
    pi = boltzmann_populations(lih, 300.0)
    worst = 0.0
    for z in (1e-6, 1e-5, 1e-4):
        decs = [force_for_state(at(z), lih, n, room) for n in pi.ids]
        terms = [p * d.resonant for p, d in zip(pi.p, decs)]
        worst = max(worst, abs(math.fsum(terms)) / max(map(abs, terms)))
    record("3", worst <= 1e-8, f"max relative residual {worst:.2e}")


def test_criterion_4a_retarded_asymptote(lih, room):
    z = 500e-6
    full = force_for_state(at(z), lih, 0, room).total
    asym = asymptote_retarded(at(z), lih, 0, 300.0).force
    rel = abs(full - asym) / abs(asym)
    record("4.a", rel < 0.02, f"full {full:.4e} N vs asymptote {asym:.4e} N (rel {rel:.3g})")


def test_criterion_4b_nonretarded_dielectric(lih, room):
    geom = at(10e-9, PermittivityModel.dielectric(2.0))
    full = force_for_state(geom, lih, 0, room).total
    asym = asymptote_nonretarded(geom, lih, 0, 300.0).force
    rel = abs(full - asym) / abs(asym)
    record("4.b", rel < 0.05, f"rel {rel:.2e}")


def test_criterion_5_sum_identity():
    worst = 0.0
    for y in (0.1, 0.3, 0.5, 0.9):
        worst = max(worst, abs(sum_n4_closed_form(y) / oracles.sum_n4_direct(y) - 1))
    half = Fraction(1, 2)
    exact = half * (1 + 11 * half + 11 * half ** 2 + half ** 3) / (1 - half) ** 5
    ok = worst <= 1e-12 and sum_n4_closed_form(0.5) == 150.0 and exact == 150
    record("5", ok, f"max rel {worst:.1e}, S(1/2) = {sum_n4_closed_form(0.5)!r}")


def test_criterion_6_saturation():
    T = 300.0
    b = saturation_bracket(1e-4 * KB * T / HBAR, T)
    record("6", -0.5001 <= b <= -0.4999, f"bracket {b:.8f}")


def test_criterion_7_rate_structure(lih):
    zs = np.linspace(2e-6, 30e-6, 57)
    rates = [transition_rates(at(z), lih, 300.0) for z in zs]
    pm = local_minima(zs, [r.rate(0, 1) for r in rates])
    zero = local_minima(zs, [r.rate(0, 2) for r in rates])
    ok_pm = bool(np.any((pm >= 8e-6) & (pm <= 14e-6)))
    record("7", ok_pm and zero.size == 0,
           f"|1,+-1> minima at {np.round(pm * 1e6, 2).tolist()} um, "
           f"|1,0> minima at {np.round(zero * 1e6, 2).tolist()} um")


def test_criterion_8_thermalization(lih, room):
    z = 300e-6
    tau, *_ = oscillation_decay_time(at(z), z, lih, GROUND, 300.0,
                                     times=np.linspace(0.0, 10.0, 201))
    tf = transient_force(at(z), [z], lih, GROUND, 300.0, times=[0.0, 1e4])
    eq = force_for_mixture(at(z), lih, equilibrium_populations(lih, 300.0), room).total
    rel = abs(tf.total[0, -1] - eq) / abs(eq)
    record("8", 1.5 <= tau <= 6.0 and rel <= 1e-8,
           f"tau {tau:.3f} s, long-time rel {rel:.1e}")


def test_criterion_9_potential_well(lih, room):
    w = potential_depth(at(1e-6), np.linspace(100e-6, 800e-6, 71), lih, 0, room)
    ok = 250e-6 <= w.z_min <= 350e-6 and 3e-13 <= w.depth <= 3e-12
    record("9", ok, f"minimum {w.z_min * 1e6:.1f} um, depth {w.depth:.3e} K")


def test_criterion_10_properties(lih, room):
    checks = {}
    zs = (1e-6, 1e-5, 1e-4, 1e-3)

    closure = 0.0
    for z in zs:
        d = force_for_state(at(z), lih, 0, room)
        parts = [d.nonresonant, d.resonant_propagating, d.resonant_evanescent]
        closure = max(closure, abs(d.total - math.fsum(parts)) / max(map(abs, parts)))
    checks["closure"] = closure <= 1e-12

    p, q = np.array([0.7, 0.1, 0.15, 0.05]), np.array([0.05, 0.3, 0.25, 0.4])
    lin = 0.0
    for z in zs:
        fp, fq, fm = (force_for_mixture(at(z), lih, InternalState(v), room)
                      for v in (p, q, 0.3 * p + 0.7 * q))
        scale = max(abs(fp.nonresonant), abs(fq.nonresonant), abs(fp.resonant), abs(fq.resonant))
        lin = max(lin, abs(fm.total - (0.3 * fp.total + 0.7 * fq.total)) / scale)
    checks["linearity"] = lin <= 1e-12

    prob, balance = True, 0.0
    for z in zs:
        r = transition_rates(at(z), lih, 300.0)
        traj = evolve(r, InternalState([0.0, 0.0, 1.0, 0.0]), np.geomspace(1e-3, 1e4, 30))
        prob &= bool(np.all(traj.populations >= -1e-14))
        prob &= bool(np.allclose(traj.populations.sum(axis=1), 1.0, atol=1e-13, rtol=0))
        pi = boltzmann_populations(lih, 300.0).p
        flux = pi[:, None] * r.gamma
        balance = max(balance, np.abs(flux - flux.T).max() / flux.max())
    checks["probability"] = prob
    checks["detailed balance"] = balance <= 1e-12

    grad = 0.0
    for z in (1e-5, 3e-4):
        h = 1e-5 * z
        up = scattering_green_real(at(z + h), W10, rtol=1e-12).total
        dn = scattering_green_real(at(z - h), W10, rtol=1e-12).total
        fd = np.array([up.xx - dn.xx, up.zz - dn.zz]) / (2 * h)
        d = grad_z_scattering_green(at(z), W10, rtol=1e-12)
        grad = max(grad, np.abs(np.array([d.xx, d.zz]) - fd).max() / np.abs(fd).max())
    checks["gradient"] = grad < 1e-6

    split = 0.0
    for z in zs:
        s = scattering_green_real(at(z), W10)
        for c in ("xx", "zz"):
            parts = getattr(s.propagating, c) + getattr(s.evanescent, c)
            split = max(split, abs(getattr(s.total, c) - parts) / abs(parts))
    checks["spectral split"] = split <= 1e-9

    failed = [k for k, ok in checks.items() if not ok]
    record("10.a", not failed,
           f"closure {closure:.1e}, linearity {lin:.1e}, balance {balance:.1e}, "
           f"gradient {grad:.1e}, split {split:.1e}" + (f"; failed {failed}" if failed else ""))


def _drude_plasma_scan(lih, room, state):
    worst, where = 0.0, None
    for z in np.geomspace(1e-6, 1e-3, 31):
        a = force_for_mixture(at(z), lih, state, room)
        b = force_for_mixture(at(z, GOLD_PLASMA), lih, state, room)
        scale = abs(a.nonresonant) + abs(a.resonant_propagating) + abs(a.resonant_evanescent)
        rel = abs(a.total - b.total) / scale
        if rel > worst:
            worst, where = rel, z
    return worst, where


def test_criterion_10_drude_plasma_thermal(lih, room):
    worst, where = _drude_plasma_scan(lih, room, boltzmann_populations(lih, 300.0))
    record("10.b", worst < 0.01,
           f"thermal LiH: max difference {worst:.1e} at {where * 1e6:.0f} um")


def test_criterion_10_drude_plasma_ground_state(lih, room):
    worst, where = _drude_plasma_scan(lih, room, GROUND)
    record("10.c", worst < 0.01,
           f"ground-state LiH: max difference {worst:.1e} at {where * 1e6:.0f} um")
