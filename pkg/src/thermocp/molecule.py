"""Molecular level structure, polarisabilities and thermal occupation."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .constants import HBAR, KB
from .errors import ConfigError, DomainError, OnResonanceError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

RESONANCE_RTOL = 1e-6
BUNDLED = ("LiH", "YbF")


@dataclass(frozen=True)
class MolecularLevel:
    id: int
    omega: float
    label: str = ""


@dataclass(frozen=True, eq=False)
class DipoleTransition:
    """Dipole matrix element ``d = <source|d|target>`` (C m).

    The reverse element is the complex conjugate and is never stored.
    With ``isotropic=True`` the element stands for an orientation-averaged
    transition whose dyad is ``|d|**2/3`` times the identity.
    """

    source: int
    target: int
    d: np.ndarray
    isotropic: bool = False

    def __post_init__(self):
        d = np.asarray(self.d, dtype=complex).reshape(3)
        object.__setattr__(self, "d", d)

    @property
    def strength(self):
        """|d|**2."""
        return float(np.vdot(self.d, self.d).real)

    def dyad(self, n):
        """``d_kn d_nk`` as seen from level ``n`` (one end of the transition)."""
        if self.isotropic:
            return np.eye(3) * (self.strength / 3.0)
        d_nk = self.d if n == self.source else self.d.conj()
        return np.outer(d_nk.conj(), d_nk)

    def diag_weights(self):
        """Diagonal of the dyad, |d_i|**2; identical for both directions."""
        if self.isotropic:
            return np.full(3, self.strength / 3.0)
        return np.abs(self.d) ** 2


@dataclass(frozen=True, eq=False)
class MoleculeSpec:
    name: str
    levels: tuple
    transitions: tuple
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        ids = [lv.id for lv in self.levels]
        if len(set(ids)) != len(ids):
            raise DomainError("level ids must be unique")
        if any(lv.omega < 0 for lv in self.levels):
            raise DomainError("level frequencies must be non-negative")
        if sum(1 for lv in self.levels if lv.omega == 0) != 1:
            raise DomainError("exactly one ground level with omega = 0 is required")
        known = set(ids)
        for t in self.transitions:
            for end in (t.source, t.target):
                if end not in known:
                    raise DomainError(f"transition references missing level id {end}")
            if self.omega(t.source) == self.omega(t.target):
                raise DomainError(f"transition {t.source}->{t.target} has zero frequency")

    @property
    def ids(self):
        return [lv.id for lv in self.levels]

    @property
    def ground(self):
        return next(lv.id for lv in self.levels if lv.omega == 0)

    def index(self, level_id):
        return self.ids.index(level_id)

    def omega(self, level_id):
        return next(lv.omega for lv in self.levels if lv.id == level_id)

    @property
    def omegas(self):
        return np.array([lv.omega for lv in self.levels])

    def label(self, level_id):
        lv = next(lv for lv in self.levels if lv.id == level_id)
        return lv.label or str(lv.id)

    def couplings(self, n):
        """Yield ``(index, transition, partner k, omega_nk)`` for level ``n``."""
        wn = self.omega(n)
        for i, t in enumerate(self.transitions):
            if t.source == n:
                yield i, t, t.target, wn - self.omega(t.target)
            elif t.target == n:
                yield i, t, t.source, wn - self.omega(t.source)

    def lowest_ground_transition(self):
        ws = [abs(w) for _, _, _, w in self.couplings(self.ground)]
        if not ws:
            raise DomainError(f"{self.name}: ground level has no transitions")
        return min(ws)


@dataclass(frozen=True, eq=False)
class InternalState:
    """Incoherent level populations, ordered as ``spec.levels``."""

    p: np.ndarray
    ids: tuple = field(default=())

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "ids", tuple(self.ids) or tuple(range(p.size)))
        if np.any(p < -1e-14):
            raise DomainError("populations must be non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise DomainError(f"populations must sum to 1 (got {p.sum()!r})")

    @classmethod
    def pure(cls, spec, level_id):
        p = np.zeros(len(spec.levels))
        p[spec.index(level_id)] = 1.0
        return cls(p, spec.ids)

    def __getitem__(self, level_id):
        return self.p[self.ids.index(level_id)]


def photon_number(omega, T):
    """Bose-Einstein occupation 1/(exp(hbar omega / kT) - 1)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise DomainError("photon number needs omega > 0")
    if T < 0:
        raise DomainError("temperature must be non-negative")
    if T == 0:
        out = np.zeros_like(omega)
    else:
        with np.errstate(over="ignore"):
            out = 1.0 / np.expm1(HBAR * omega / (KB * T))
    return float(out) if out.ndim == 0 else out


def _axis(freq):
    freq = complex(freq)
    if freq.real == 0.0 and freq.imag >= 0.0:
        return "imag", freq.imag
    if freq.imag == 0.0:
        return "real", freq.real
    raise DomainError(f"frequency {freq!r} must be real or on the positive imaginary axis")


def _check_resonance(spec, n, w):
    for _, _, _, wnk in spec.couplings(n):
        if abs(abs(w) - abs(wnk)) <= RESONANCE_RTOL * abs(wnk):
            raise OnResonanceError(
                f"frequency {w:g} rad/s is on the {abs(wnk):g} rad/s resonance")


def polarizability(spec: MoleculeSpec, state, freq) -> np.ndarray:
    """State-resolved 3x3 polarisability tensor (C^2 m^2 / J).

    ``freq`` is real (principal value, refused on resonance) or ``1j*xi``.
    """
    axis, w = _axis(freq)
    if axis == "real":
        _check_resonance(spec, state, w)
    om = complex(freq)
    alpha = np.zeros((3, 3), dtype=complex)
    for _, t, _, wnk in spec.couplings(state):
        wkn = -wnk
        dy = t.dyad(state)
        alpha += dy / (om + wkn) - dy.T / (om - wkn)
    alpha /= HBAR
    if axis == "imag":
        alpha = alpha.real.astype(complex)
    return alpha


def polarizability_diag_imag(spec, state, xi):
    """Diagonal of alpha_n(i xi), vectorised over ``xi``; shape (3, len(xi))."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    out = np.zeros((3, xi.size))
    for _, t, _, wnk in spec.couplings(state):
        wkn = -wnk
        out += t.diag_weights()[:, None] * (2.0 * wkn / (wkn ** 2 + xi ** 2))[None, :]
    return out / HBAR


def isotropic_polarizability(spec: MoleculeSpec, state, freq):
    """Scalar polarisability with |d|^2/3 in place of each dyad."""
    axis, w = _axis(freq)
    if axis == "real":
        _check_resonance(spec, state, w)
    om = complex(freq)
    total = 0j
    for _, t, _, wnk in spec.couplings(state):
        wkn = -wnk
        total += t.strength * (1.0 / (om + wkn) - 1.0 / (om - wkn))
    total /= 3.0 * HBAR
    return complex(total.real) if axis == "imag" else total


def isotropic_polarizability_imag(spec, state, xi):
    """Vectorised scalar alpha_n(i xi)."""
    return polarizability_diag_imag(spec, state, xi).mean(axis=0)


def boltzmann_populations(spec: MoleculeSpec, T) -> InternalState:
    if not T > 0:
        raise DomainError("Boltzmann populations need T > 0")
    x = HBAR * spec.omegas / (KB * T)
    w = np.exp(-(x - x.min()))
    return InternalState(w / w.sum(), spec.ids)


def thermal_polarizability(spec: MoleculeSpec, T, freq) -> np.ndarray:
    pops = boltzmann_populations(spec, T)
    return sum(p * polarizability(spec, n, freq) for n, p in zip(spec.ids, pops.p))


def lih_dipole_vectors(d):
    """Dipole elements |0,0> -> |1,M> for M = -1, 0, +1."""
    ex, ey, ez = np.eye(3)
    return {
        -1: d * (ex + 1j * ey) / np.sqrt(6.0),
        0: d * ez / np.sqrt(3.0),
        1: d * (-ex + 1j * ey) / np.sqrt(6.0),
    }


# -- file I/O -----------------------------------------------------------------

def spec_from_dict(data, where="<dict>") -> MoleculeSpec:
    try:
        levels = [MolecularLevel(int(lv["id"]), float(lv["omega"]), str(lv.get("label", "")))
                  for lv in data["levels"]]
        transitions = []
        for t in data.get("transitions", []):
            d_re = np.asarray(t["d_re"], dtype=float)
            d_im = np.asarray(t.get("d_im", [0.0, 0.0, 0.0]), dtype=float)
            if d_re.shape != (3,) or d_im.shape != (3,):
                raise ConfigError(f"{where}: dipole vectors must have 3 components")
            transitions.append(DipoleTransition(int(t["from"]), int(t["to"]),
                                                d_re + 1j * d_im,
                                                bool(t.get("isotropic", False))))
    except KeyError as exc:
        raise ConfigError(f"{where}: missing key {exc.args[0]!r}") from None
    return MoleculeSpec(str(data.get("name", where)), levels, transitions,
                        str(data.get("source", "")))


def load_molecule(path_or_name) -> MoleculeSpec:
    """Load a molecule file, or a bundled molecule by name (``"LiH"``, ``"YbF"``)."""
    if str(path_or_name) in BUNDLED:
        text = resources.files("thermocp.data").joinpath(f"{path_or_name}.toml").read_text()
        where = f"{path_or_name}.toml"
    else:
        path = Path(path_or_name)
        if not path.exists():
            raise ConfigError(f"molecule file {path} does not exist")
        text = path.read_text()
        where = str(path)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return spec_from_dict(data, where)
