"""Dielectric response of the substrate and planar reflection coefficients.

Frequencies are angular (rad/s).  A frequency on the imaginary axis is
passed as a complex number ``1j * xi``; helpers taking ``xi`` directly are
provided where that is the natural argument.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constants import C
from .errors import CavityResonanceError, DomainError, StaticDivergenceError

CAVITY_SINGULAR_TOL = 1e-14

_KINDS = ("drude", "plasma", "dielectric", "vacuum")


@dataclass(frozen=True)
class PermittivityModel:
    """Local, non-magnetic permittivity model.

    Use the constructors :meth:`drude`, :meth:`plasma`, :meth:`dielectric`
    and :meth:`vacuum` rather than instantiating directly.
    """

    kind: str
    omega_p: float = 0.0
    gamma: float = 0.0
    eps_static: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown permittivity model {self.kind!r}")
        if self.kind in ("drude", "plasma") and not self.omega_p > 0:
            raise DomainError("plasma frequency must be positive")
        if self.kind == "drude" and not self.gamma >= 0:
            raise DomainError("damping rate must be non-negative")
        if self.kind == "dielectric" and not self.eps_static >= 1:
            raise DomainError("static permittivity must be >= 1")

    @classmethod
    def drude(cls, omega_p, gamma):
        return cls("drude", omega_p=float(omega_p), gamma=float(gamma))

    @classmethod
    def plasma(cls, omega_p):
        return cls("plasma", omega_p=float(omega_p))

    @classmethod
    def dielectric(cls, eps_static):
        return cls("dielectric", eps_static=float(eps_static))

    @classmethod
    def vacuum(cls):
        return cls("vacuum")

    @property
    def is_vacuum(self):
        return self.kind == "vacuum"

    @property
    def is_conductor(self):
        """True when eps(0) is infinite (Drude and plasma)."""
        return self.kind in ("drude", "plasma")

    def static_rp(self):
        """Zero-frequency TM reflection coefficient, conductor limit taken analytically."""
        if self.is_conductor:
            return 1.0
        if self.kind == "dielectric":
            return (self.eps_static - 1.0) / (self.eps_static + 1.0)
        return 0.0

    def eps_imag_axis(self, xi):
        """eps(i xi) for xi > 0 (real, >= 1); vectorised over ``xi``."""
        xi = np.asarray(xi, dtype=float)
        if self.kind == "drude":
            if np.any(xi == 0):
                raise StaticDivergenceError("Drude permittivity diverges at xi = 0")
            return 1.0 + self.omega_p ** 2 / (xi * (xi + self.gamma))
        if self.kind == "plasma":
            if np.any(xi == 0):
                raise StaticDivergenceError("plasma permittivity diverges at xi = 0")
            return 1.0 + self.omega_p ** 2 / xi ** 2
        if self.kind == "dielectric":
            return np.full_like(xi, self.eps_static)
        return np.ones_like(xi)

    def __call__(self, freq):
        return permittivity(self, freq)


def _split_frequency(freq):
    """Return ('real', w) or ('imag', xi) for an on-axis frequency."""
    freq = complex(freq)
    if freq.imag == 0.0 and freq.real >= 0.0:
        return "real", freq.real
    if freq.real == 0.0 and freq.imag > 0.0:
        return "imag", freq.imag
    raise DomainError(f"frequency {freq!r} is neither real-positive nor on the "
                      "positive imaginary axis")


def permittivity(model: PermittivityModel, freq) -> complex:
    """Relative permittivity at a real or imaginary angular frequency."""
    axis, w = _split_frequency(freq)
    if model.kind == "vacuum":
        return 1 + 0j
    if model.kind == "dielectric":
        return complex(model.eps_static)
    if w == 0.0:
        raise StaticDivergenceError(f"{model.kind} permittivity diverges at zero frequency")
    if axis == "imag":
        return complex(model.eps_imag_axis(w))
    if model.kind == "drude":
        return 1.0 - model.omega_p ** 2 / (w * (w + 1j * model.gamma))
    return complex(1.0 - model.omega_p ** 2 / w ** 2)


def upper_sqrt(z):
    """Square root on the branch with non-negative imaginary part."""
    r = np.sqrt(np.asarray(z, dtype=complex))
    return np.where(r.imag < 0, -r, r)


class ReflectionPair(NamedTuple):
    r_s: complex
    r_p: complex


def reflection_from_beta(eps, k2, beta):
    """Fresnel coefficients expressed through the normal wavevector ``beta``.

    ``k2`` is omega**2/c**2 (negative on the imaginary axis).  The
    numerators are rearranged as ``beta - beta1 = -(eps-1) k2/(beta+beta1)``
    so vacuum gives exact zeros and nearly-vacuum media lose no digits.
    Vectorised over ``beta``.
    """
    beta = np.asarray(beta, dtype=complex)
    beta1 = upper_sqrt(beta ** 2 + (eps - 1.0) * k2)
    diff = -(eps - 1.0) * k2 / (beta + beta1)
    r_s = diff / (beta + beta1)
    den = eps * beta + beta1
    # den vanishes only for eps = 0 at normal incidence, where r_p -> -1
    with np.errstate(invalid="ignore", divide="ignore"):
        r_p = np.where(den == 0, -1.0 + 0j, ((eps - 1.0) * beta + diff) / den)
    return r_s, r_p


def fresnel(model: PermittivityModel, freq, q) -> ReflectionPair:
    """Reflection coefficients of the vacuum/substrate interface.

    Parameters
    ----------
    model : PermittivityModel
    freq : complex
        Real positive ``omega`` or imaginary ``1j*xi``.
    q : float
        In-plane wavenumber, ``q >= 0``.

    Notes
    -----
    Both normal wavevectors are taken with ``Im >= 0``.  At the light line
    (``beta = 0``) the formulas stay finite and give ``r_s = r_p = -1`` for
    any ``eps != 1``.
    """
    if q < 0:
        raise DomainError("in-plane wavenumber must be non-negative")
    if model.is_vacuum:
        return ReflectionPair(0j, 0j)
    k2 = complex(freq) ** 2 / C ** 2
    k2 = k2.real if k2.imag == 0 else k2
    eps = permittivity(model, freq)
    beta = upper_sqrt(k2 - q * q)
    r_s, r_p = reflection_from_beta(eps, k2, beta)
    return ReflectionPair(complex(r_s), complex(r_p))


@dataclass(frozen=True)
class CavityGeometry:
    """Planar cavity of length ``l`` with two identical walls."""

    l: float
    material: PermittivityModel

    def __post_init__(self):
        if not self.l > 0:
            raise DomainError("cavity length must be positive")


def cavity_factor(r, beta, l, one_plus_r=None):
    """r / (1 - r**2 exp(2 i beta l)), vectorised; raises near a lossless resonance.

    ``one_plus_r`` may be supplied when ``1 + r`` is known to more digits
    than ``r`` itself (grazing incidence, where ``r -> -1``).
    """
    r = np.asarray(r, dtype=complex)
    u = 1.0 + r if one_plus_r is None else np.asarray(one_plus_r, dtype=complex)
    phase = 2j * np.asarray(beta) * l
    # 1 - r^2 e = -(e - 1) + (2 - u) u e keeps digits when r -> +-1, beta -> 0
    den = -np.expm1(phase) + (2.0 - u) * u * np.exp(phase)
    if np.any(np.abs(den) < CAVITY_SINGULAR_TOL):
        raise CavityResonanceError("cavity denominator vanishes (lossless wall on resonance)")
    return r / den


def cavity_fresnel(pair: ReflectionPair, beta, geom: CavityGeometry) -> ReflectionPair:
    """Multiple-reflection enhanced coefficients inside a planar cavity."""
    return ReflectionPair(complex(cavity_factor(pair.r_s, beta, geom.l)),
                          complex(cavity_factor(pair.r_p, beta, geom.l)))


GOLD_DRUDE = PermittivityModel.drude(1.37e16, 5.32e13)
GOLD_PLASMA = PermittivityModel.plasma(1.37e16)


def material_from_config(table) -> PermittivityModel:
    """Build a model from a config table with keys ``model``, ``omega_p``,
    ``gamma``, ``eps_static`` (SI units)."""
    kind = table.get("model")
    if kind == "drude":
        return PermittivityModel.drude(table["omega_p"], table["gamma"])
    if kind == "plasma":
        return PermittivityModel.plasma(table["omega_p"])
    if kind == "dielectric":
        return PermittivityModel.dielectric(table["eps_static"])
    if kind == "vacuum":
        return PermittivityModel.vacuum()
    raise DomainError(f"unknown material model {kind!r}")
