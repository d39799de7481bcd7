"""Coincident-point scattering Green tensor above a planar substrate.

Only the diagonal matters at coincidence (``g_xx = g_yy`` and ``g_zz``).
The lateral-wavenumber integral is written in the normal wavevector:

* propagating waves, ``0 <= q < omega/c``: integrate ``beta`` over
  ``[0, omega/c]`` (``q dq / beta = -d beta``), which removes the
  inverse-square-root kink at the light line;
* evanescent waves and the imaginary axis: integrate ``kappa`` with
  ``beta = i kappa`` so the weight ``exp(-2 kappa z)`` is explicit.

The imaginary-axis tensor is returned pre-multiplied by ``xi**2`` so the
``xi -> 0`` term is finite; at ``xi = 0`` the static limit is analytic.

With a cavity the substituted coefficients grow like ``1/beta`` at grazing
incidence.  Each sector is then reported as a finite part about the scale
``omega/c``; the logarithms cancel in the sum and the remaining pole term
is booked to the evanescent sector.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .constants import C, PI
from .errors import DomainError
from .material import (CavityGeometry, PermittivityModel, cavity_factor, permittivity,
                       reflection_from_beta, upper_sqrt)
from .quadrature import integrate

DEFAULT_RTOL = 1e-9
DEFAULT_MAX_PANELS = 2 ** 15
# exp(-2 kappa z) is below 1e-34 beyond kappa z = 40
_KAPPA_WINDOW = 40.0
_MAX_MODE_BREAKS = 20000


@dataclass(frozen=True)
class HalfSpaceGeometry:
    """Molecule at height ``z`` (m) above ``material``; optional cavity.

    With a cavity the second wall sits at ``cavity.l``; only the reflection
    coefficients are modified (results are outlook-grade).
    """

    z: float
    material: PermittivityModel
    cavity: CavityGeometry | None = None

    def __post_init__(self):
        if not self.z > 0:
            raise DomainError("distance z must be positive")
        if self.cavity is not None:
            if not self.z < self.cavity.l:
                raise DomainError("molecule must sit inside the cavity (0 < z < l)")
            if self.cavity.material != self.material:
                raise DomainError("cavity walls must match the substrate material")

    def at(self, z):
        return HalfSpaceGeometry(float(z), self.material, self.cavity)


class GreenTensorDiagonal(NamedTuple):
    """Diagonal of a coincident-point tensor; ``xx == yy`` by symmetry."""

    xx: complex
    zz: complex

    @property
    def yy(self):
        return self.xx

    @property
    def trace(self):
        return 2 * self.xx + self.zz

    def diag(self):
        return np.array([self.xx, self.xx, self.zz])

    def __add__(self, other):
        return GreenTensorDiagonal(self.xx + other.xx, self.zz + other.zz)

    @property
    def real(self):
        return GreenTensorDiagonal(self.xx.real, self.zz.real)

    @property
    def imag(self):
        return GreenTensorDiagonal(self.xx.imag, self.zz.imag)


class SpectralSplit(NamedTuple):
    propagating: GreenTensorDiagonal
    evanescent: GreenTensorDiagonal

    @property
    def total(self):
        return self.propagating + self.evanescent


ZERO = GreenTensorDiagonal(0j, 0j)


def _reflection(geom, eps, k2, beta):
    r_s, r_p = reflection_from_beta(eps, k2, beta)
    if geom.cavity is not None:
        l = geom.cavity.l
        beta = np.asarray(beta, dtype=complex)
        beta1 = upper_sqrt(beta ** 2 + (eps - 1.0) * k2)
        # exact 1 + r; r itself is -1 to within rounding at grazing incidence
        r_s = cavity_factor(r_s, beta, l, 2.0 * beta / (beta + beta1))
        r_p = cavity_factor(r_p, beta, l, 2.0 * eps * beta / (eps * beta + beta1))
    return r_s, r_p


def _geometric(lo, hi, per_decade=4):
    n = max(int(np.ceil(np.log10(hi / lo) * per_decade)), 1) + 1
    return np.geomspace(lo, hi, n)


def _points(*groups):
    pts = np.unique(np.concatenate([np.atleast_1d(np.asarray(g, float)) for g in groups]))
    return pts


def _propagating(geom, omega, deriv, rtol, max_panels):
    z = geom.z
    k = omega / C
    k2 = k * k
    eps = permittivity(geom.material, omega)
    s_sp = k / abs(np.sqrt(eps))

    pole = None if deriv else _light_line_residue(geom, eps, k)

    def f(beta):
        r_s, r_p = _reflection(geom, eps, k2, beta)
        w = (1j / (8 * PI)) * np.exp(2j * beta * z)
        if deriv:
            w = w * 2j * beta
        b2 = beta * beta / k2
        out = np.array([w * (r_s - b2 * r_p), w * 2.0 * (1.0 - b2) * r_p])
        if pole is not None:
            out = out - pole[:, None] / beta
        return out

    inner = [s for s in s_sp * np.logspace(-3, 1, 9) if s < k]
    osc = np.linspace(0.0, k, int(np.ceil(k * z / PI)) + 2)
    modes = []
    if geom.cavity is not None:
        # Fabry-Perot peaks of the substituted coefficients sit at beta l = n pi
        n = int(k * geom.cavity.l / PI)
        if n <= _MAX_MODE_BREAKS:
            modes = np.arange(1, n + 1) * PI / geom.cavity.l
    pts = _points([0.0, k], inner, osc, modes)
    return integrate(f, pts, rtol=rtol, max_panels=max_panels).value


def _spp_pole(geom, eps, k):
    """Real surface-plasmon pole ``(kappa_p, residue of r_p)``, or None.

    Only a lossless medium with ``eps < -1`` puts the pole on the path.  It is
    taken as the zero-damping limit of a lossy medium, which places it just
    above the real axis.
    """
    if eps.imag != 0.0 or eps.real >= -1.0:
        return None
    if geom.cavity is not None:
        raise DomainError("lossless walls with eps < -1 are not supported in a cavity")
    e = eps.real
    kappa_p = k / np.sqrt(-(e + 1.0))
    return kappa_p, 2.0 * e * e * kappa_p / (e * e - 1.0)


def _light_line_residue(geom, eps, k):
    """Coefficient ``P`` of the ``P/beta`` light-line pole in a cavity, or None.

    Substituted coefficients behave as ``-1/(2 beta (c - i l))`` when
    ``r = -1 + c beta``.  The log divergences of the two sectors cancel;
    what remains is a simple pole at ``q = k + i0`` (the zero-absorption
    limit of a lossy gap), handled as principal value plus ``i pi`` residue.
    """
    if geom.cavity is None or geom.material.is_vacuum:
        return None
    l = geom.cavity.l
    b1 = complex(upper_sqrt(complex((eps - 1.0) * k * k)))
    c_s = 2.0 / b1
    c_p = 2.0 * eps / b1
    pre = 1j / (8 * PI)
    return np.array([-pre / (2.0 * (c_s - 1j * l)), -pre / (c_p - 1j * l)])


def _evanescent(geom, omega, deriv, rtol, max_panels):
    z = geom.z
    k = omega / C
    k2 = k * k
    eps = permittivity(geom.material, omega)
    s_sp = k / abs(np.sqrt(eps))
    pole = _spp_pole(geom, eps, k)
    light = None if deriv else _light_line_residue(geom, eps, k)
    top = _KAPPA_WINDOW / z

    def tm_weight(kappa):
        w = np.exp(-2.0 * kappa * z) / (8 * PI)
        if deriv:
            w = w * (-2.0 * kappa)
        c2 = kappa * kappa / k2
        return w, np.array([w * c2, w * 2.0 * (1.0 + c2)])

    def f(kappa):
        r_s, r_p = _reflection(geom, eps, k2, 1j * kappa)
        w, tm = tm_weight(kappa)
        out = np.array([w * r_s, 0.0 * w]) + tm * r_p
        if light is not None:
            # finite part with the same scale k as the propagating sector
            out = out + light[:, None] * np.where(kappa < k, 1.0 / kappa, 0.0)
        return out

    lo = 1e-3 * min(s_sp, 1.0 / z, k)
    inner = [s for s in (s_sp, k) if s < top]
    if eps.real < -1.0:
        # near-real plasmon pole of a weakly damped medium
        kr = k / np.sqrt(-(eps.real + 1.0))
        inner += [kr * (1 - 1e-2), kr, kr * (1 + 1e-2)]
    if pole is None or not pole[0] < top:
        pts = _points([0.0, k], _geometric(lo, top), inner)
        value = integrate(f, pts, rtol=rtol, max_panels=max_panels).value
        if light is not None:
            value = value - 0.5j * PI * light
        return value

    # Fold [kp - a, kp + a] onto [0, a]: the odd 1/(kappa - kp) part cancels
    # exactly, giving the principal value; the +i0 shift adds i*pi*residue.
    kp, res = pole
    a = 0.5 * min(kp, top - kp)

    def folded(t):
        return f(kp + t) + f(kp - t)

    grid = _points([0.0], _geometric(lo, top), inner, [kp - a, kp + a])
    left = grid[grid <= kp - a]
    right = grid[grid >= kp + a]
    value = integrate(f, left, rtol=rtol, max_panels=max_panels).value
    value = value + integrate(f, right, rtol=rtol, max_panels=max_panels).value
    value = value + integrate(folded, _points([0.0], _geometric(1e-6 * a, a)),
                              rtol=rtol, max_panels=max_panels).value
    return value + 1j * PI * res * tm_weight(kp)[1]


def _imaginary_scaled(geom, xi, deriv, rtol, max_panels):
    z = geom.z
    k0 = xi / C
    k2 = -k0 * k0
    eps = complex(permittivity(geom.material, 1j * xi)).real

    def f(t):
        kappa = k0 + t
        r_s, r_p = _reflection(geom, eps, k2, 1j * kappa)
        # exp(-2 k0 z) is applied after integration to avoid underflow
        w = np.exp(-2.0 * t * z) / (8 * PI)
        if deriv:
            w = w * (-2.0 * kappa)
        kc2 = (kappa * C) ** 2
        return np.array([(w * (xi * xi * r_s - kc2 * r_p)).real,
                         (-2.0 * w * (kc2 - xi * xi) * r_p).real])

    top = _KAPPA_WINDOW / z
    s_med = k0 * np.sqrt(max(eps - 1.0, 0.0))
    lo = 1e-3 * min(1.0 / z, max(k0, 1e-30 / z)) if k0 > 0 else 1e-3 / z
    inner = [s for s in (s_med, k0) if lo < s < top]
    pts = _points([0.0], _geometric(lo, top), inner)
    return np.exp(-2.0 * k0 * z) * integrate(f, pts, rtol=rtol, max_panels=max_panels).value


def _static_scaled(geom, deriv, rtol, max_panels):
    """xi**2 G at xi = 0: only the TM term survives, with r_p(0)."""
    z = geom.z
    rp0 = geom.material.static_rp()
    if geom.cavity is None:
        if deriv:
            return np.array([3 * C ** 2 * rp0 / (32 * PI * z ** 4),
                             3 * C ** 2 * rp0 / (16 * PI * z ** 4)])
        return np.array([-C ** 2 * rp0 / (32 * PI * z ** 3),
                         -C ** 2 * rp0 / (16 * PI * z ** 3)])
    l = geom.cavity.l

    def f(kappa):
        r_p = cavity_factor(np.full_like(kappa, rp0, dtype=complex), 1j * kappa, l).real
        w = np.exp(-2.0 * kappa * z) / (8 * PI) * C ** 2 * kappa ** 2 * r_p
        if deriv:
            w = w * (-2.0 * kappa)
        return np.array([-w, -2.0 * w])

    pts = _points([0.0], _geometric(1e-3 / z, _KAPPA_WINDOW / z))
    return integrate(f, pts, rtol=rtol, max_panels=max_panels).value


@lru_cache(maxsize=65536)
def _cached(geom, kind, w, deriv, rtol, max_panels):
    if geom.material.is_vacuum:
        return (0.0, 0.0) if kind in ("imag", "static") else (0j, 0j)
    if kind == "prop":
        out = _propagating(geom, w, deriv, rtol, max_panels)
    elif kind == "evan":
        out = _evanescent(geom, w, deriv, rtol, max_panels)
    elif kind == "imag":
        out = _imaginary_scaled(geom, w, deriv, rtol, max_panels)
    else:
        out = _static_scaled(geom, deriv, rtol, max_panels)
    return tuple(out.tolist())


def _split(geom, omega, deriv, rtol, max_panels):
    if not omega > 0:
        raise DomainError("real frequency must be positive")
    prop = GreenTensorDiagonal(*_cached(geom, "prop", float(omega), deriv, rtol, max_panels))
    evan = GreenTensorDiagonal(*_cached(geom, "evan", float(omega), deriv, rtol, max_panels))
    return SpectralSplit(prop, evan)


def scattering_green_real(geom: HalfSpaceGeometry, omega, rtol=DEFAULT_RTOL,
                          max_panels=DEFAULT_MAX_PANELS) -> SpectralSplit:
    """G^(1)(r, r, omega) (1/m) split into propagating and evanescent sectors."""
    return _split(geom, omega, False, rtol, max_panels)


def grad_z_scattering_green_split(geom: HalfSpaceGeometry, omega, rtol=DEFAULT_RTOL,
                                  max_panels=DEFAULT_MAX_PANELS) -> SpectralSplit:
    """d/dz of :func:`scattering_green_real` (1/m^2), sector by sector."""
    return _split(geom, omega, True, rtol, max_panels)


def _imag(geom, xi, deriv, rtol, max_panels):
    if xi < 0:
        raise DomainError("xi must be non-negative")
    kind = "static" if xi == 0 else "imag"
    return GreenTensorDiagonal(*_cached(geom, kind, float(xi), deriv, rtol, max_panels))


def scattering_green_imag_scaled(geom: HalfSpaceGeometry, xi, rtol=DEFAULT_RTOL,
                                 max_panels=DEFAULT_MAX_PANELS) -> GreenTensorDiagonal:
    """xi**2 G^(1)(r, r, i xi) in 1/(m s^2); real valued, finite at xi = 0."""
    return _imag(geom, xi, False, rtol, max_panels)


def grad_z_scattering_green(geom: HalfSpaceGeometry, freq, rtol=DEFAULT_RTOL,
                            max_panels=DEFAULT_MAX_PANELS) -> GreenTensorDiagonal:
    """z-gradient at a real frequency (total of both sectors) or, for
    ``freq = 1j*xi``, of the xi**2-scaled imaginary-axis tensor."""
    freq = complex(freq)
    if freq.real == 0.0 and freq.imag >= 0.0:
        return _imag(geom, freq.imag, True, rtol, max_panels)
    if freq.imag != 0.0:
        raise DomainError("frequency must be real or on the positive imaginary axis")
    return _split(geom, freq.real, True, rtol, max_panels).total


def free_space_im_green(omega):
    """Im G^(0)(r, r, omega) per diagonal component: omega/(6 pi c)."""
    return omega / (6 * PI * C)


def im_total_green(geom: HalfSpaceGeometry, omega, rtol=DEFAULT_RTOL,
                   max_panels=DEFAULT_MAX_PANELS) -> GreenTensorDiagonal:
    """Im of the full (bulk + scattering) tensor at coincidence."""
    scat = scattering_green_real(geom, omega, rtol, max_panels).total
    g0 = free_space_im_green(omega)
    return GreenTensorDiagonal(g0 + scat.xx.imag, g0 + scat.zz.imag)


def clear_cache():
    _cached.cache_clear()
