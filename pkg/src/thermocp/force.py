"""Thermal Casimir-Polder force on a molecule above a planar surface.

Sign convention: the returned value is the z-component of the force in
newtons; negative values pull the molecule toward the surface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate as _sint
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .constants import C, EPS0, HBAR, KB, MU0, PI
from .errors import DomainError, MatsubaraTruncationError, NoWellFoundError
from .green import (DEFAULT_MAX_PANELS, DEFAULT_RTOL, HalfSpaceGeometry,
                    grad_z_scattering_green, grad_z_scattering_green_split)
from .material import permittivity
from .molecule import (InternalState, MoleculeSpec, isotropic_polarizability,
                       photon_number, polarizability_diag_imag)

ISOTROPY_TOL = 1e-10


@dataclass(frozen=True)
class MatsubaraSettings:
    T: float
    tail_rel_tol: float = 1e-10
    max_terms: int = 10 ** 6
    quad_rel_tol: float = DEFAULT_RTOL
    quad_max_panels: int = DEFAULT_MAX_PANELS

    def __post_init__(self):
        if self.T < 0:
            raise DomainError("temperature must be non-negative")

    def xi(self, n):
        return 2 * PI * KB * self.T * n / HBAR


@dataclass(frozen=True)
class TransitionForce:
    index: int
    partner: int
    propagating: float
    evanescent: float

    @property
    def total(self):
        return self.propagating + self.evanescent


@dataclass(frozen=True)
class ForceDecomposition:
    """z-force split into its non-resonant and resonant parts (N)."""

    nonresonant: float
    resonant_propagating: float
    resonant_evanescent: float
    per_transition: tuple = ()
    path: str = "general"
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", math.fsum(
            [self.nonresonant, self.resonant_propagating, self.resonant_evanescent]))

    @property
    def resonant(self):
        return self.resonant_propagating + self.resonant_evanescent

    def scaled(self, p):
        return ForceDecomposition(
            p * self.nonresonant, p * self.resonant_propagating, p * self.resonant_evanescent,
            tuple(TransitionForce(t.index, t.partner, p * t.propagating, p * t.evanescent)
                  for t in self.per_transition),
            self.path)


class ResonantForce(NamedTuple):
    per_transition: tuple
    propagating: float
    evanescent: float


def _settings(settings):
    return settings if isinstance(settings, MatsubaraSettings) else MatsubaraSettings(float(settings))


def _alpha_diag(spec, state, xi):
    """Diagonal of the polarisability on the imaginary axis, (3, n)."""
    if isinstance(state, InternalState):
        return sum(p * polarizability_diag_imag(spec, n, xi)
                   for n, p in zip(state.ids, state.p) if p != 0.0)
    return polarizability_diag_imag(spec, state, xi)


def is_isotropic(spec: MoleculeSpec, state) -> bool:
    """True when, per transition frequency, the summed dipole dyads of
    ``state`` are proportional to the identity."""
    groups = {}
    for _, t, _, wnk in spec.couplings(state):
        key = round(abs(wnk), 6 - int(math.floor(math.log10(abs(wnk)))))
        groups[key] = groups.get(key, 0) + t.dyad(state)
    for dy in groups.values():
        scale = abs(np.trace(dy)) / 3.0
        if scale == 0:
            continue
        if np.max(np.abs(dy - scale * np.eye(3))) > ISOTROPY_TOL * scale:
            return False
    return True


def _contract(alpha_diag, grad, isotropic):
    if isotropic:
        return float(np.mean(alpha_diag)) * grad.trace.real
    return alpha_diag[0] * grad.xx.real + alpha_diag[1] * grad.xx.real + alpha_diag[2] * grad.zz.real


def nonresonant_force(geom: HalfSpaceGeometry, spec: MoleculeSpec, state, settings,
                      path="general") -> float:
    """Matsubara-sum (Lifshitz-like) part of the force.

    ``state`` is a level id or an :class:`InternalState`; for the latter the
    population-weighted polarisability is used.  At ``T = 0`` the sum is
    replaced by its frequency integral.
    """
    st = _settings(settings)
    iso = path == "isotropic"
    if st.T == 0:
        return _nonresonant_zero_T(geom, spec, state, st, iso)
    kT = KB * st.T
    xi_floor = 10.0 * C / (2.0 * geom.z)
    terms = []
    total = 0.0
    for n in range(st.max_terms + 1):
        xi = st.xi(n)
        alpha = _alpha_diag(spec, state, xi)[:, 0]
        if not np.any(alpha):
            term = 0.0
        else:
            grad = grad_z_scattering_green(geom, 1j * xi, st.quad_rel_tol, st.quad_max_panels)
            term = -MU0 * kT * (0.5 if n == 0 else 1.0) * _contract(alpha, grad, iso)
        terms.append(term)
        total += term
        if n > 0 and xi > xi_floor and abs(term) <= st.tail_rel_tol * abs(total):
            return math.fsum(terms)
    raise MatsubaraTruncationError(
        f"Matsubara sum not converged after {st.max_terms} terms at z = {geom.z:g} m")


def _nonresonant_zero_T(geom, spec, state, st, iso):
    def integrand(xi):
        alpha = _alpha_diag(spec, state, xi)[:, 0]
        grad = grad_z_scattering_green(geom, 1j * xi, st.quad_rel_tol, st.quad_max_panels)
        return _contract(alpha, grad, iso)

    freqs = sorted({abs(w) for _, _, _, w in _couplings_of(spec, state)})
    top = 60.0 * C / (2 * geom.z) + 60.0 * max(freqs, default=0.0)
    pts = [f for f in freqs + [C / (2 * geom.z)] if f < top]
    val, _ = _sint.quad(integrand, 0.0, top, points=pts or None, limit=400,
                        epsabs=0.0, epsrel=1e-10)
    return -MU0 * HBAR / (2 * PI) * val


def _couplings_of(spec, state):
    if isinstance(state, InternalState):
        out = []
        for n, p in zip(state.ids, state.p):
            if p != 0.0:
                out.extend(spec.couplings(n))
        return out
    return list(spec.couplings(state))


def _thermal_weight(wnk, T):
    """omega^2 {Theta(w_nk)[n+1] - Theta(w_kn) n} for the resonant force."""
    w = abs(wnk)
    n = photon_number(w, T)
    return w * w * ((n + 1.0) if wnk > 0 else -n)


def resonant_force(geom: HalfSpaceGeometry, spec: MoleculeSpec, state, T,
                   settings=None, path="general") -> ResonantForce:
    """Resonant (real-photon) part of the force from level ``state``.

    Downward transitions carry weight n+1, upward ones n; each transition
    is split into its propagating and evanescent contributions.
    """
    rtol = settings.quad_rel_tol if settings else DEFAULT_RTOL
    panels = settings.quad_max_panels if settings else DEFAULT_MAX_PANELS
    iso = path == "isotropic"
    out = []
    for idx, t, k, wnk in spec.couplings(state):
        weight = _thermal_weight(wnk, T)
        if weight == 0.0:
            out.append(TransitionForce(idx, k, 0.0, 0.0))
            continue
        split = grad_z_scattering_green_split(geom, abs(wnk), rtol, panels)
        parts = []
        for g in split:
            if iso:
                c = t.strength / 3.0 * g.trace.real
            else:
                wd = t.diag_weights()
                c = wd[0] * g.xx.real + wd[1] * g.xx.real + wd[2] * g.zz.real
            parts.append(MU0 * weight * c)
        out.append(TransitionForce(idx, k, parts[0], parts[1]))
    return ResonantForce(tuple(out), math.fsum(t.propagating for t in out),
                         math.fsum(t.evanescent for t in out))


def force_for_state(geom: HalfSpaceGeometry, spec: MoleculeSpec, state, settings,
                    path="auto") -> ForceDecomposition:
    """Full decomposition for a molecule in level ``state``.

    ``path`` is ``"general"`` (dyadic contraction), ``"isotropic"`` (trace
    form) or ``"auto"`` (isotropic when the state's dyads allow it).
    """
    st = _settings(settings)
    if path == "auto":
        path = "isotropic" if is_isotropic(spec, state) else "general"
    nonres = nonresonant_force(geom, spec, state, st, path)
    res = resonant_force(geom, spec, state, st.T, st, path)
    return ForceDecomposition(nonres, res.propagating, res.evanescent, res.per_transition, path)


def combine(decompositions, weights) -> ForceDecomposition:
    """Population-weighted sum of per-state decompositions."""
    parts = [d.scaled(p) for d, p in zip(decompositions, weights)]
    per = tuple(t for d in parts for t in d.per_transition)
    paths = {d.path for d in decompositions}
    return ForceDecomposition(
        math.fsum(d.nonresonant for d in parts),
        math.fsum(d.resonant_propagating for d in parts),
        math.fsum(d.resonant_evanescent for d in parts),
        per, paths.pop() if len(paths) == 1 else "mixed")


def force_for_mixture(geom: HalfSpaceGeometry, spec: MoleculeSpec, state: InternalState,
                      settings, path="general") -> ForceDecomposition:
    """Force on an incoherent mixture, sum_n p_n F_n."""
    st = _settings(settings)
    decs = [force_for_state(geom, spec, n, st, path) for n in state.ids]
    return combine(decs, state.p)


def lifshitz_like_force(geom, spec, settings) -> float:
    """Non-resonant force evaluated with the ground-state polarisability."""
    return nonresonant_force(geom, spec, spec.ground, settings, path="general")


# -- asymptotes ---------------------------------------------------------------

class Asymptote(NamedTuple):
    force: float
    parts: dict
    regime: float


def _static_reflection_factor(material):
    """(eps(0)-1)/(eps(0)+1) with the conductor limit taken analytically."""
    return material.static_rp()


def _matsubara_tail_sum(f, T, tol=1e-12, max_terms=10 ** 7):
    """sum_{N>=1} f(xi_N) for a positive, eventually power-law decaying f."""
    xi1 = 2 * PI * KB * T / HBAR
    total = 0.0
    start = 1
    chunk = 4096
    while start <= max_terms:
        n = np.arange(start, start + chunk)
        vals = f(xi1 * n)
        total += math.fsum(vals)
        last, prev = vals[-1], vals[-2]
        if last == 0.0 or abs(last) <= tol * abs(total):
            return total
        # remaining sum of a power law c/N^p is about N t_N/(p-1)
        p = math.log(prev / last) / math.log(n[-1] / n[-2]) if prev * last > 0 else 0.0
        if p > 1.0:
            tail = n[-1] * last / (p - 1.0)
            if abs(tail) <= tol * abs(total) * 1e3:
                return total + tail
        start += chunk
        chunk *= 2
    raise MatsubaraTruncationError("asymptotic Matsubara series did not converge")


def asymptote_nonretarded(geom: HalfSpaceGeometry, spec: MoleculeSpec, state, T) -> Asymptote:
    """Short-distance (non-retarded) limit; exact 1/z^4 power law.

    ``regime`` is max_i |sqrt(eps(omega_i))| omega_i z / c over the
    transitions of ``state``; the limit needs it to be small.
    """
    z, mat = geom.z, geom.material
    pref = 1.0 / (8 * PI * EPS0 * z ** 4)
    nonres = 0.0
    if T > 0:
        alpha0 = isotropic_polarizability(spec, state, 0.0).real
        n0 = 0.5 * alpha0 * _static_reflection_factor(mat)

        def f(xi):
            eps = mat.eps_imag_axis(xi)
            return polarizability_diag_imag(spec, state, xi).mean(axis=0) * (eps - 1) / (eps + 1)

        tail = _matsubara_tail_sum(f, T) if not mat.is_vacuum else 0.0
        nonres = -3 * KB * T * pref * (n0 + tail)
    res = 0.0
    regime = 0.0
    for _, t, _, wnk in spec.couplings(state):
        w = abs(wnk)
        eps = permittivity(mat, w)
        lfac = (abs(eps) ** 2 - 1.0) / abs(eps + 1.0) ** 2
        n = photon_number(w, T)
        occ = (n + 1.0) if wnk > 0 else -n
        res += -pref * t.strength * occ * lfac
        regime = max(regime, abs(np.sqrt(eps)) * w * z / C)
    return Asymptote(nonres + res, {"nonresonant": nonres, "resonant": res}, regime)


def sum_n4_closed_form(y):
    """sum_{N>=1} N^4 y^N = y (1 + 11 y + 11 y^2 + y^3) / (1 - y)^5."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y >= 1):
        raise DomainError("need 0 <= y < 1")
    out = y * (1 + 11 * y + 11 * y ** 2 + y ** 3) / (1 - y) ** 5
    return float(out) if out.ndim == 0 else out


def _n4_kernel(v, x):
    """x^4 sum_N N^4 exp(-2 N v x), written to survive small v x."""
    y = np.exp(-2 * v * x)
    om = -np.expm1(-2 * v * x)
    return x ** 4 * y * (1 + 11 * y + 11 * y ** 2 + y ** 3) / om ** 5


def thermal_length_parameter(z, T):
    """x = 2 pi k_B T z / (hbar c)."""
    return 2 * PI * KB * T * z / (HBAR * C)


def _retarded_resonant(spec, state, T, z, mat, conductor):
    res = 0.0
    for _, t, _, wnk in spec.couplings(state):
        w = abs(wnk)
        n = photon_number(w, T)
        occ = (n + 1.0) if wnk > 0 else -n
        if occ == 0.0:
            continue
        if conductor:
            osc = math.sin(2 * w * z / C)
        else:
            se = np.sqrt(permittivity(mat, w))
            osc = (np.exp(2j * w * z / C) * (se - 1) / (se + 1)).imag
        res += MU0 / (6 * PI * C * z) * t.strength * w ** 3 * occ * osc
    return res


def asymptote_retarded(geom: HalfSpaceGeometry, spec: MoleculeSpec, state, T) -> Asymptote:
    """Long-distance (retarded) limit with the one-dimensional v-integral.

    ``regime`` is omega_min z / c over the state's transitions.
    """
    z, mat = geom.z, geom.material
    alpha0 = isotropic_polarizability(spec, state, 0.0).real
    x = thermal_length_parameter(z, T)
    r0 = _static_reflection_factor(mat)
    first = -3 * KB * T * alpha0 / (16 * PI * EPS0 * z ** 4) * r0
    if mat.is_vacuum or T == 0 or alpha0 == 0:
        second = 0.0
    else:
        if mat.is_conductor:
            def bracket(v):
                return 2 * v * v
        else:
            e0 = mat.eps_static

            def bracket(v):
                s = math.sqrt(e0 - 1 + v * v)
                return -(v - s) / (v + s) + (2 * v * v - 1) * (e0 * v - s) / (e0 * v + s)
        val, _ = _sint.quad(lambda v: v * bracket(v) * _n4_kernel(v, x), 1.0, np.inf,
                            epsabs=0.0, epsrel=1e-11, limit=400)
        second = -KB * T * alpha0 / (2 * PI * EPS0 * z ** 4) * val
    res = _retarded_resonant(spec, state, T, z, mat, conductor=False)
    return Asymptote(first + second + res,
                     {"nonresonant_static": first, "nonresonant_thermal": second,
                      "resonant": res}, _regime_retarded(spec, state, z))


def _regime_retarded(spec, state, z):
    ws = [abs(w) for _, _, _, w in spec.couplings(state)]
    return min(ws) * z / C if ws else math.inf


def conductor_thermal_bracket(x):
    """[(3+6x+6x^2+4x^3)e^{6x} - (9+12x-16x^3)e^{4x} + (9+6x-6x^2+4x^3)e^{2x} - 3]
    / (e^{2x}-1)^4, evaluated stably for all x > 0."""
    if x <= 0:
        raise DomainError("x must be positive")
    if x < 0.5:
        n = np.arange(1, int(60 / x) + 10, dtype=float)
        nx = n * x
        return math.fsum(np.exp(-2 * nx) * (4 * nx ** 3 + 6 * nx ** 2 + 6 * nx + 3))
    e2, e4, e6, e8 = (math.exp(-2 * m * x) for m in (1, 2, 3, 4))
    num = ((3 + 6 * x + 6 * x ** 2 + 4 * x ** 3) * e2 - (9 + 12 * x - 16 * x ** 3) * e4
           + (9 + 6 * x - 6 * x ** 2 + 4 * x ** 3) * e6 - 3 * e8)
    return num / (-math.expm1(-2 * x)) ** 4


def asymptote_retarded_conductor(geom: HalfSpaceGeometry, spec: MoleculeSpec, state, T) -> Asymptote:
    """Closed-form retarded limit for a good conductor (|eps| >> 1)."""
    z = geom.z
    alpha0 = isotropic_polarizability(spec, state, 0.0).real
    first = -3 * KB * T * alpha0 / (16 * PI * EPS0 * z ** 4)
    if T > 0:
        x = thermal_length_parameter(z, T)
        second = -KB * T * alpha0 / (8 * PI * EPS0 * z ** 4) * conductor_thermal_bracket(x)
    else:
        second = 0.0
    res = _retarded_resonant(spec, state, T, z, geom.material, conductor=True)
    return Asymptote(first + second + res,
                     {"nonresonant_static": first, "nonresonant_thermal": second,
                      "resonant": res}, _regime_retarded(spec, state, z))


# -- reference formulas and diagnostics -----------------------------------------

@dataclass(frozen=True)
class TwoLevelSystem:
    omega_A: float
    d_A: float

    def __post_init__(self):
        if not (self.omega_A > 0 and self.d_A > 0):
            raise DomainError("two-level system needs omega_A > 0 and d_A > 0")


class TwoLevelReference(NamedTuple):
    high_temperature: float
    near_field: float
    near_field_conductor: float


def saturation_bracket(omega, T):
    """n(omega) - k_B T/(hbar omega); tends to -1/2 when hbar omega << k_B T."""
    if T <= 0:
        raise DomainError("saturation bracket needs T > 0")
    x = HBAR * omega / (KB * T)
    if x < 1e-3:
        return -0.5 + x / 12.0 - x ** 3 / 720.0
    return photon_number(omega, T) - 1.0 / x


def twolevel_reference(system: TwoLevelSystem, geom: HalfSpaceGeometry, T) -> TwoLevelReference:
    """Reference forces on a two-level molecule.

    ``high_temperature``: perfect-mirror geometric high-T form
    -|d|^2 k_B T / (8 pi eps0 z^4 hbar omega).  ``near_field``: saturating
    near-field form with the substrate's eps(omega_A) and eps(0);
    ``near_field_conductor``: its good-conductor approximation.
    """
    z, w, d2 = geom.z, system.omega_A, system.d_A ** 2
    pref = d2 / (8 * PI * EPS0 * z ** 4)
    ratio = KB * T / (HBAR * w)
    high = -pref * ratio
    eps = permittivity(geom.material, w)
    lfac = (abs(eps) ** 2 - 1.0) / abs(eps + 1.0) ** 2
    near = pref * (photon_number(w, T) * lfac - ratio * geom.material.static_rp())
    cond = pref * saturation_bracket(w, T) if T > 0 else 0.0
    return TwoLevelReference(high, near, cond)


def reduction_factor(spec: MoleculeSpec, T) -> float:
    """Near-field thermal/Lifshitz-like force ratio 1/(2 n(omega_10) + 1)."""
    return 1.0 / (2.0 * photon_number(spec.lowest_ground_transition(), T) + 1.0)


class PotentialWell(NamedTuple):
    z_min: float
    depth: float          # kelvin
    z_barrier_inner: float
    z_barrier_outer: float | None


def find_well(zs, forces) -> PotentialWell:
    """Locate the first potential minimum of U(z) = int_z^inf F dz' (F = -dU/dz).

    ``forces`` are z-forces (N) sampled on the increasing grid ``zs``.  The
    depth (K) is the lower of the two neighbouring barriers above the
    minimum, divided by k_B; if the outer barrier lies beyond the grid the
    inner one is used.
    """
    zs = np.asarray(zs, dtype=float)
    forces = np.asarray(forces, dtype=float)
    spline = CubicSpline(zs, forces)
    anti = spline.antiderivative()
    # sign changes of the samples bracket the zeros; the spline only refines
    # them, so overshoot between steep samples cannot create spurious roots
    sign = np.sign(forces)
    roots, falling = [], []
    for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        roots.append(brentq(spline, zs[i], zs[i + 1], xtol=1e-15 * zs[i + 1]))
        falling.append(forces[i] > 0)
    roots, falling = np.array(roots), np.array(falling, dtype=bool)
    if not falling.any():
        raise NoWellFoundError("force has no + to - sign change on the scan")
    minima, rising = roots[falling], roots[~falling]

    def U(z):
        return float(anti(zs[-1]) - anti(z))

    zmin = minima[0]
    inner = rising[rising < zmin]
    outer = rising[rising > zmin]
    z_in = inner[-1] if inner.size else zs[0]
    barriers = [U(z_in)]
    z_out = None
    if outer.size:
        z_out = float(outer[0])
        barriers.append(U(z_out))
    depth = min(barriers) - U(zmin)
    return PotentialWell(float(zmin), depth / KB, float(z_in), z_out)


def potential_depth(geom: HalfSpaceGeometry, zs, spec: MoleculeSpec, state, settings) -> PotentialWell:
    """First potential well of ``state`` along the distance scan ``zs`` (m).

    ``state`` is a level id or an :class:`InternalState`.  The scan must be
    fine enough to resolve the force oscillation (period ``pi c / omega``).
    """
    st = _settings(settings)
    zs = np.asarray(zs, dtype=float)
    if zs.ndim != 1 or zs.size < 4 or np.any(np.diff(zs) <= 0):
        raise DomainError("need an increasing scan of at least 4 distances")
    if isinstance(state, InternalState):
        forces = [force_for_mixture(geom.at(z), spec, state, st).total for z in zs]
    else:
        forces = [force_for_state(geom.at(z), spec, state, st).total for z in zs]
    return find_well(zs, forces)
