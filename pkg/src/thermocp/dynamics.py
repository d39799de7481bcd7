"""Photon-exchange rates, population master equation and the transient force."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .constants import C, HBAR, MU0, PI
from .errors import DomainError
from .force import ForceDecomposition, MatsubaraSettings, combine, force_for_state
from .green import DEFAULT_MAX_PANELS, DEFAULT_RTOL, HalfSpaceGeometry, im_total_green
from .molecule import InternalState, MoleculeSpec, boltzmann_populations, photon_number

EIG_COND_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """``gamma[i, j]`` is the rate (1/s) of level ``ids[i]`` -> ``ids[j]``."""

    gamma: np.ndarray
    ids: tuple
    T: float

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] != len(self.ids):
            raise DomainError("rate matrix must be square and match the level ids")
        if np.any(g < 0) or np.any(np.diag(g) != 0):
            raise DomainError("rates must be non-negative with a zero diagonal")
        object.__setattr__(self, "gamma", g)

    def rate(self, n, k):
        return self.gamma[self.ids.index(n), self.ids.index(k)]

    @property
    def generator(self):
        """L with dp/dt = L p."""
        g = self.gamma
        return g.T - np.diag(g.sum(axis=1))


def transition_rates(geom: HalfSpaceGeometry, spec: MoleculeSpec, T,
                     rtol=DEFAULT_RTOL, max_panels=DEFAULT_MAX_PANELS) -> RateMatrix:
    """Rates from the imaginary part of the total (free + scattering) Green tensor."""
    if T < 0:
        raise DomainError("temperature must be non-negative")
    ids = spec.ids
    gamma = np.zeros((len(ids), len(ids)))
    for t in spec.transitions:
        w = abs(spec.omega(t.source) - spec.omega(t.target))
        img = im_total_green(geom, w, rtol, max_panels).real
        wd = t.diag_weights()
        coupling = wd[0] * img.xx + wd[1] * img.xx + wd[2] * img.zz
        n = photon_number(w, T)
        base = 2.0 * MU0 / HBAR * w * w * coupling
        upper, lower = (t.source, t.target) if spec.omega(t.source) > spec.omega(t.target) \
            else (t.target, t.source)
        i_up, i_lo = spec.index(upper), spec.index(lower)
        gamma[i_up, i_lo] += base * (n + 1.0)
        gamma[i_lo, i_up] += base * n
    return RateMatrix(gamma, tuple(ids), T)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    populations: np.ndarray        # (len(times), n_levels)
    ids: tuple
    method: str

    def state(self, i) -> InternalState:
        p = np.clip(self.populations[i], 0.0, None)
        return InternalState(p / p.sum(), self.ids)


def _propagator(L, pi=None):
    """Return (callable t -> exp(L t), method name)."""
    if pi is not None and np.all(pi > 0):
        # detailed balance makes D^-1/2 L D^1/2 symmetric
        s = np.sqrt(pi)
        sym = L * (1.0 / s)[:, None] * s[None, :]
        if np.allclose(sym, sym.T, rtol=1e-9, atol=1e-12 * np.abs(sym).max()):
            lam, v = np.linalg.eigh(0.5 * (sym + sym.T))
            left = s[:, None] * v
            right = v.T / s[None, :]
            return (lambda t: (left * np.exp(lam * t)) @ right), "eigh-symmetrized"
    lam, v = np.linalg.eig(L)
    if np.linalg.cond(v) < EIG_COND_LIMIT:
        vinv = np.linalg.inv(v)
        return (lambda t: ((v * np.exp(lam * t)) @ vinv).real), "eig"
    return (lambda t: expm(L * t)), "expm"


def evolve(rates: RateMatrix, initial: InternalState, times) -> Trajectory:
    """Solve dp/dt = L p exactly at the requested times."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or np.any(times < 0):
        raise DomainError("times must be non-negative and strictly increasing")
    L = rates.generator
    pi = None
    if rates.T > 0:
        pi = _stationary_guess(rates)
    prop, method = _propagator(L, pi)
    p0 = initial.p
    pops = np.array([p0 if t == 0 else prop(t) @ p0 for t in times])
    # renormalise away rounding drift
    pops = pops / pops.sum(axis=1, keepdims=True)
    return Trajectory(times, pops, rates.ids, method)


def _stationary_guess(rates):
    """Stationary vector of a detailed-balanced generator, from the rate ratios."""
    g = rates.gamma
    n = g.shape[0]
    logp = np.full(n, np.nan)
    logp[0] = 0.0
    stack = [0]
    while stack:
        i = stack.pop()
        for j in range(n):
            if np.isnan(logp[j]) and g[i, j] > 0 and g[j, i] > 0:
                logp[j] = logp[i] + np.log(g[i, j] / g[j, i])
                stack.append(j)
    if np.any(np.isnan(logp)):
        return None
    p = np.exp(logp - logp.max())
    return p / p.sum()


@dataclass(frozen=True, eq=False)
class TransientForce:
    """Populations and forces on a (z, t) grid.

    ``populations`` has shape (nz, nt, n_levels); force arrays (nz, nt).
    ``per_state`` keeps the time-independent per-level decompositions.
    """

    zs: np.ndarray
    times: np.ndarray
    ids: tuple
    populations: np.ndarray
    nonresonant: np.ndarray
    resonant_propagating: np.ndarray
    resonant_evanescent: np.ndarray
    per_state: tuple
    methods: tuple

    @property
    def total(self):
        return self.nonresonant + self.resonant_propagating + self.resonant_evanescent

    @property
    def resonant(self):
        return self.resonant_propagating + self.resonant_evanescent

    def decomposition(self, iz, it) -> ForceDecomposition:
        return combine(self.per_state[iz], self.populations[iz, it])


def default_times():
    """Logarithmic grid from 1 ms to 1000 s."""
    return np.geomspace(1e-3, 1e3, 61)


def transient_force(geom: HalfSpaceGeometry, zs, spec: MoleculeSpec, initial: InternalState,
                    T, times=None, settings=None) -> TransientForce:
    """Time-dependent force F(z, t) = sum_n p_n(t) F_n(z).

    Rates and per-state forces depend on z, so populations are evolved
    separately at each distance.  Per-state forces use the general
    (anisotropic) contraction.
    """
    st = settings or MatsubaraSettings(T)
    if st.T != T:
        st = MatsubaraSettings(T, st.tail_rel_tol, st.max_terms, st.quad_rel_tol,
                               st.quad_max_panels)
    times = default_times() if times is None else np.asarray(times, dtype=float)
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    shape = (zs.size, times.size)
    nonres, rprop, revan = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    pops = np.zeros(shape + (len(spec.levels),))
    per_state, methods = [], []
    for iz, z in enumerate(zs):
        g = geom.at(z)
        decs = [force_for_state(g, spec, n, st, path="general") for n in spec.ids]
        traj = evolve(transition_rates(g, spec, T, st.quad_rel_tol, st.quad_max_panels),
                      initial, times)
        pops[iz] = traj.populations
        nonres[iz] = traj.populations @ np.array([d.nonresonant for d in decs])
        rprop[iz] = traj.populations @ np.array([d.resonant_propagating for d in decs])
        revan[iz] = traj.populations @ np.array([d.resonant_evanescent for d in decs])
        per_state.append(tuple(decs))
        methods.append(traj.method)
    return TransientForce(zs, times, tuple(spec.ids), pops, nonres, rprop, revan,
                          tuple(per_state), tuple(methods))


def relative_entropy(p, q):
    """Kullback-Leibler divergence D(p || q) in nats."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def decay_time(times, amplitude):
    """First time at which ``|amplitude|`` falls to 1/e of its initial value,
    interpolated linearly in log-amplitude; ``inf`` if it never does."""
    a = np.abs(np.asarray(amplitude, dtype=float))
    target = a[0] / np.e
    below = np.nonzero(a <= target)[0]
    if below.size == 0:
        return np.inf
    i = below[0]
    if i == 0:
        return float(times[0])
    t0, t1 = times[i - 1], times[i]
    y0, y1 = np.log(a[i - 1]), np.log(max(a[i], 1e-300))
    return float(t0 + (np.log(target) - y0) * (t1 - t0) / (y1 - y0))


def oscillation_amplitude(zs, forces, omega, z0=None):
    """Envelope of the spatially oscillating force component.

    Fits ``z F(z) = a sin(2 omega z/c) + b cos(2 omega z/c) + c0 + c1 (z - z0)``
    by least squares over ``zs`` (the far-field resonant force falls off as
    ``1/z``) and returns ``sqrt(a**2 + b**2)/z0``.  ``forces`` may carry
    extra trailing axes (e.g. time), fitted column by column.
    """
    zs = np.asarray(zs, dtype=float)
    forces = np.asarray(forces, dtype=float)
    if zs.size < 5:
        raise DomainError("need at least 5 distances to fit the oscillation")
    z0 = float(np.mean(zs)) if z0 is None else float(z0)
    ph = 2.0 * omega * zs / C
    X = np.column_stack([np.sin(ph), np.cos(ph), np.ones_like(zs), zs - z0])
    y = forces * zs.reshape((-1,) + (1,) * (forces.ndim - 1))
    coef, *_ = np.linalg.lstsq(X, y.reshape(zs.size, -1), rcond=None)
    amp = np.hypot(coef[0], coef[1]) / z0
    return amp.reshape(forces.shape[1:]) if forces.ndim > 1 else float(amp[0])


def oscillation_decay_time(geom: HalfSpaceGeometry, z0, spec: MoleculeSpec, initial: InternalState,
                           T, times=None, settings=None, points=41):
    """1/e time of the resonant-force envelope around ``z0``.

    The envelope is fitted over one oscillation period ``pi c / omega``
    centred on ``z0``, with ``omega`` the lowest ground-state transition.
    Returns ``(tau, TransientForce, amplitude)``.
    """
    omega = spec.lowest_ground_transition()
    half = 0.5 * PI * C / omega
    if not z0 - half > 0:
        raise DomainError("z0 must exceed half an oscillation period")
    zs = np.linspace(z0 - half, z0 + half, points)
    tf = transient_force(geom, zs, spec, initial, T, times, settings)
    amp = oscillation_amplitude(zs, tf.resonant, omega, z0)
    return decay_time(tf.times, amp), tf, amp


def equilibrium_populations(spec, T):
    return boltzmann_populations(spec, T)
