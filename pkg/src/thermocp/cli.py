"""Command-line scenario runner.

``thermocp run --config scenario.toml --out results/`` evaluates one named
computation and writes CSV files with a ``#`` metadata header;
``thermocp validate FILE`` checks a scenario or molecule file.

Scenario files are TOML::

    command = "components"        # force-profile | components | thermal-compare |
                                  # dynamics | rates | asymptotes | cavity
    molecule = "LiH"              # bundled name or path (relative to this file)
    temperature = 300.0           # K
    state = 0                     # level id, or "thermal" for Boltzmann populations

    [material]
    model = "drude"               # drude | plasma | dielectric | vacuum
    omega_p = 1.37e16             # rad/s
    gamma = 5.32e13               # rad/s

    [z_grid]
    min = 1e-6                    # m
    max = 30e-6
    points = 20
    spacing = "log"               # linear | log

    [time_grid]                   # dynamics only, s
    min = 1e-3
    max = 1e3
    points = 61
    spacing = "log"

    [cavity]                      # cavity only
    length = 20e-6                # m

    [numerics]
    quad_tol = 1e-9
    matsubara_tol = 1e-10

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import default_times, transient_force, transition_rates
from .errors import ConfigError, DomainError, ThermoCPError
from .force import (MatsubaraSettings, asymptote_nonretarded, asymptote_retarded,
                    asymptote_retarded_conductor, force_for_mixture, force_for_state,
                    lifshitz_like_force)
from .green import DEFAULT_MAX_PANELS, DEFAULT_RTOL, HalfSpaceGeometry
from .material import CavityGeometry, PermittivityModel, material_from_config
from .molecule import (BUNDLED, InternalState, MoleculeSpec, boltzmann_populations,
                       load_molecule, spec_from_dict, tomllib)

COMMANDS = ("force-profile", "components", "thermal-compare", "dynamics", "rates",
            "asymptotes", "cavity")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# molecule-file sanity limits (SI units)
MAX_DIPOLE = 1e-26          # C m, about 3000 debye
OMEGA_RANGE = (1e6, 1e18)   # rad/s


class NumericalFailure(ThermoCPError):
    code = "numerical-failure"


@dataclass(frozen=True)
class Grid:
    min: float
    max: float
    points: int
    spacing: str = "linear"

    def values(self):
        if self.spacing == "log":
            return np.geomspace(self.min, self.max, self.points)
        return np.linspace(self.min, self.max, self.points)


@dataclass
class Scenario:
    command: str
    molecule: MoleculeSpec
    material: PermittivityModel
    T: float
    state: object
    z_grid: Grid
    time_grid: Grid | None = None
    cavity_length: float | None = None
    quad_tol: float = DEFAULT_RTOL
    matsubara_tol: float = 1e-10
    max_panels: int = DEFAULT_MAX_PANELS
    source: str = ""
    raw: dict = field(default_factory=dict)

    @property
    def settings(self):
        return MatsubaraSettings(self.T, tail_rel_tol=self.matsubara_tol,
                                 quad_rel_tol=self.quad_tol, quad_max_panels=self.max_panels)

    def geometry(self, z):
        cav = None
        if self.cavity_length is not None:
            cav = CavityGeometry(self.cavity_length, self.material)
        return HalfSpaceGeometry(float(z), self.material, cav)

    def resolved_state(self):
        if self.state == "thermal":
            return boltzmann_populations(self.molecule, self.T)
        return self.state


# -- parsing ------------------------------------------------------------------

def _read_toml(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: file does not exist")
    try:
        return tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        # the decoder message carries the line and column
        raise ConfigError(f"{path}: {exc}") from None


def _number(table, key, where, positive=False, default=None):
    if key not in table:
        if default is not None:
            return default
        raise ConfigError(f"{where}: missing key {key!r}")
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}: {key!r} must be a number")
    if positive and not val > 0:
        raise ConfigError(f"{where}: {key!r} must be positive")
    return float(val)


def _grid(table, where, default=None):
    if table is None:
        if default is None:
            raise ConfigError(f"missing [{where}] table")
        return default
    lo = _number(table, "min", where, positive=True)
    hi = _number(table, "max", where, positive=True)
    pts = table.get("points")
    if not isinstance(pts, int) or pts < 1:
        raise ConfigError(f"[{where}]: 'points' must be a positive integer")
    spacing = table.get("spacing", "linear")
    if spacing not in ("linear", "log"):
        raise ConfigError(f"[{where}]: spacing must be 'linear' or 'log'")
    if not lo < hi and pts > 1:
        raise ConfigError(f"[{where}]: need min < max")
    return Grid(lo, hi, pts, spacing)


def _molecule(ref, base):
    if str(ref) in BUNDLED:
        return load_molecule(str(ref))
    path = Path(ref)
    if not path.is_absolute():
        path = base / path
    return load_molecule(path)


def _state(value, spec):
    if value == "thermal":
        return "thermal"
    if isinstance(value, int) and not isinstance(value, bool):
        if value not in spec.ids:
            raise ConfigError(f"state refers to missing level id {value}")
        return value
    if isinstance(value, str):
        for lv in spec.levels:
            if lv.label == value:
                return lv.id
    raise ConfigError(f"state {value!r} is neither a level id, a label nor 'thermal'")


def load_scenario(path) -> Scenario:
    """Parse and check a scenario file; raises :class:`ConfigError`."""
    path = Path(path)
    data = _read_toml(path)
    command = data.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"{path}: command must be one of {', '.join(COMMANDS)}")
    if "molecule" not in data:
        raise ConfigError(f"{path}: missing key 'molecule'")
    try:
        spec = _molecule(data["molecule"], path.parent)
        T = _number(data, "temperature", str(path))
        if T < 0:
            raise ConfigError(f"{path}: temperature must be non-negative (got {T:g} K)")
        mat_table = data.get("material")
        if not isinstance(mat_table, dict):
            raise ConfigError(f"{path}: missing [material] table")
        try:
            material = material_from_config(mat_table)
        except KeyError as exc:
            raise ConfigError(f"[material]: missing key {exc.args[0]!r}") from None
        state = _state(data.get("state", spec.ground), spec)
        if state == "thermal" and T == 0:
            raise ConfigError("thermal state needs temperature > 0")
        zg = _grid(data.get("z_grid"), "z_grid")
        tg = None
        if command == "dynamics":
            dflt = default_times()
            tg = _grid(data.get("time_grid"), "time_grid",
                       Grid(float(dflt[0]), float(dflt[-1]), dflt.size, "log"))
        cav = None
        if command == "cavity":
            cav = _number(data.get("cavity", {}), "length", "[cavity]", positive=True)
            if not zg.max < cav:
                raise ConfigError("[z_grid]: distances must lie inside the cavity")
        num = data.get("numerics", {})
        quad_tol = _number(num, "quad_tol", "[numerics]", positive=True, default=DEFAULT_RTOL)
        mats_tol = _number(num, "matsubara_tol", "[numerics]", positive=True, default=1e-10)
        panels = int(_number(num, "max_panels", "[numerics]", positive=True,
                             default=float(DEFAULT_MAX_PANELS)))
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if command == "dynamics" and T == 0:
        raise ConfigError("dynamics needs temperature > 0")
    return Scenario(command, spec, material, T, state, zg, tg, cav, quad_tol, mats_tol,
                    panels, source=str(path), raw=data)


def validate_molecule_table(data, where):
    """Schema, ground-state and unit checks of a molecule table; returns notes."""
    spec = spec_from_dict(data, where)
    notes = [f"{len(spec.levels)} levels, {len(spec.transitions)} transitions"]
    for lv in spec.levels:
        if lv.omega and not OMEGA_RANGE[0] <= lv.omega <= OMEGA_RANGE[1]:
            raise ConfigError(f"{where}: level {lv.id} frequency {lv.omega:g} rad/s is "
                              "outside the plausible range (rad/s expected)")
    for t in spec.transitions:
        if not np.all(np.isfinite(t.d)):
            raise ConfigError(f"{where}: non-finite dipole on {t.source}->{t.target}")
        if np.sqrt(t.strength) > MAX_DIPOLE:
            raise ConfigError(f"{where}: dipole {t.source}->{t.target} is "
                              f"{np.sqrt(t.strength):g} C m (C m expected, not debye)")
    # one stored element per pair; the reverse is its conjugate
    pairs = [frozenset((t.source, t.target)) for t in spec.transitions]
    if len(set(pairs)) != len(pairs):
        raise ConfigError(f"{where}: a level pair is listed twice; store one direction only")
    notes.append(f"ground level {spec.ground}")
    return spec, notes


def validate(path):
    """Return a list of report lines; raises :class:`ConfigError` on violation."""
    path = Path(path)
    data = _read_toml(path)
    if "levels" in data:
        try:
            _, notes = validate_molecule_table(data, str(path))
        except DomainError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return [f"{path}: valid molecule file"] + [f"  {n}" for n in notes]
    sc = load_scenario(path)
    ref = sc.raw["molecule"]
    if str(ref) not in BUNDLED:
        mpath = Path(ref) if Path(ref).is_absolute() else path.parent / ref
        validate_molecule_table(_read_toml(mpath), str(mpath))
    return [f"{path}: valid scenario ({sc.command})",
            f"  molecule {sc.molecule.name}, T = {sc.T:g} K, state {sc.state}",
            f"  material {sc.material.kind}, {sc.z_grid.points} distances"]


# -- computations -------------------------------------------------------------

def _pmap(fn, items, threads):
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _at(z, fn):
    try:
        return fn(z)
    except ThermoCPError as exc:
        raise NumericalFailure(f"at z = {z:.6g} m: {exc}") from exc


def _force(sc, geom, state):
    if isinstance(state, InternalState):
        return force_for_mixture(geom, sc.molecule, state, sc.settings)
    return force_for_state(geom, sc.molecule, state, sc.settings)


def _components(sc, threads):
    state = sc.resolved_state()

    def one(z):
        return _at(z, lambda z: _force(sc, sc.geometry(z), state))

    zs = sc.z_grid.values()
    decs = _pmap(one, zs, threads)
    cols = ["z [m]", "F_nonres [N]", "F_res_prop [N]", "F_res_evan [N]", "F_total [N]"]
    rows = [[z, d.nonresonant, d.resonant_propagating, d.resonant_evanescent, d.total]
            for z, d in zip(zs, decs)]
    return {sc.command: (cols, rows)}


def _force_profile(sc, threads):
    state = sc.resolved_state()
    zs = sc.z_grid.values()
    decs = _pmap(lambda z: _at(z, lambda z: _force(sc, sc.geometry(z), state)), zs, threads)
    return {"force-profile": (["z [m]", "F_total [N]"],
                              [[z, d.total] for z, d in zip(zs, decs)])}


def _thermal_compare(sc, threads):
    if sc.T == 0:
        raise ConfigError("thermal-compare needs temperature > 0")
    spec = sc.molecule
    thermal = boltzmann_populations(spec, sc.T)

    def one(z):
        def go(z):
            g = sc.geometry(z)
            return (force_for_state(g, spec, spec.ground, sc.settings).total,
                    force_for_mixture(g, spec, thermal, sc.settings).total,
                    lifshitz_like_force(g, spec, sc.settings))
        return _at(z, go)

    zs = sc.z_grid.values()
    vals = _pmap(one, zs, threads)
    cols = ["z [m]", "F_ground [N]", "F_thermal [N]", "F_lifshitz_like [N]",
            "F_thermal/F_lifshitz_like [1]"]
    rows = [[z, a, b, c, b / c if c else float("nan")] for z, (a, b, c) in zip(zs, vals)]
    return {"thermal-compare": (cols, rows)}


def _initial_state(sc):
    st = sc.resolved_state()
    return st if isinstance(st, InternalState) else InternalState.pure(sc.molecule, st)


def _dynamics(sc, threads):
    spec = sc.molecule
    times = sc.time_grid.values()
    initial = _initial_state(sc)
    zs = sc.z_grid.values()

    def one(z):
        return _at(z, lambda z: transient_force(sc.geometry(z), [z], spec, initial, sc.T,
                                                times, sc.settings))

    tfs = _pmap(one, zs, threads)
    pcols = ["z [m]", "t [s]"] + [f"p_{i} [1]" for i in spec.ids]
    prow, frow = [], []
    for z, tf in zip(zs, tfs):
        for it, t in enumerate(times):
            prow.append([z, t] + list(tf.populations[0, it]))
            frow.append([z, t, tf.nonresonant[0, it], tf.resonant_propagating[0, it],
                         tf.resonant_evanescent[0, it], tf.total[0, it]])
    fcols = ["z [m]", "t [s]", "F_nonres [N]", "F_res_prop [N]", "F_res_evan [N]",
             "F_total [N]"]
    return {"dynamics-populations": (pcols, prow), "dynamics-force": (fcols, frow)}


def _rates(sc, threads):
    spec = sc.molecule
    zs = sc.z_grid.values()
    mats = _pmap(lambda z: _at(z, lambda z: transition_rates(
        sc.geometry(z), spec, sc.T, sc.quad_tol, sc.max_panels)), zs, threads)
    pairs = []
    for t in spec.transitions:
        for a, b in ((t.source, t.target), (t.target, t.source)):
            pairs.append((a, b))
    cols = ["z [m]"] + [f"Gamma_{a}->{b} [1/s]" for a, b in pairs]
    rows = [[z] + [m.rate(a, b) for a, b in pairs] for z, m in zip(zs, mats)]
    return {"rates": (cols, rows)}


def _asymptotes(sc, threads):
    spec = sc.molecule
    state = sc.resolved_state()
    if isinstance(state, InternalState):
        raise ConfigError("asymptotes need a single level as state")

    def one(z):
        def go(z):
            g = sc.geometry(z)
            full = force_for_state(g, spec, state, sc.settings).total
            nr = asymptote_nonretarded(g, spec, state, sc.T).force
            rt = asymptote_retarded(g, spec, state, sc.T).force
            rc = (asymptote_retarded_conductor(g, spec, state, sc.T).force
                  if sc.material.is_conductor else float("nan"))
            return full, nr, rt, rc
        return _at(z, go)

    zs = sc.z_grid.values()
    vals = _pmap(one, zs, threads)
    cols = ["z [m]", "F_full [N]", "F_nonretarded [N]", "F_retarded [N]",
            "F_retarded_conductor [N]"]
    return {"asymptotes": (cols, [[z, *v] for z, v in zip(zs, vals)])}


_RUNNERS = {
    "force-profile": _force_profile,
    "components": _components,
    "cavity": _components,
    "thermal-compare": _thermal_compare,
    "dynamics": _dynamics,
    "rates": _rates,
    "asymptotes": _asymptotes,
}


def compute(sc: Scenario, threads=1):
    """Run the scenario; returns ``{name: (columns, rows)}``."""
    return _RUNNERS[sc.command](sc, threads)


# -- output -------------------------------------------------------------------

def _header(sc: Scenario):
    m = sc.material
    lines = [
        f"generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}",
        f"thermocp {__version__}",
        f"command {sc.command}",
        f"scenario {sc.source}",
        f"molecule {sc.molecule.name}",
        f"molecule_source {sc.molecule.source or 'unspecified'}",
        f"temperature_K {sc.T!r}",
        f"state {sc.state}",
        f"material {m.kind} omega_p={m.omega_p!r} gamma={m.gamma!r} eps_static={m.eps_static!r}",
        f"z_grid {sc.z_grid.min!r} {sc.z_grid.max!r} {sc.z_grid.points} {sc.z_grid.spacing}",
        f"quad_tol {sc.quad_tol!r}",
        f"matsubara_tol {sc.matsubara_tol!r}",
        f"max_panels {sc.max_panels}",
    ]
    if sc.time_grid is not None:
        g = sc.time_grid
        lines.append(f"time_grid {g.min!r} {g.max!r} {g.points} {g.spacing}")
    if sc.cavity_length is not None:
        lines.append(f"cavity_length_m {sc.cavity_length!r} (outlook-grade)")
    return ["# " + s for s in lines]


def write_csv(path, header, columns, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for h in header:
            fh.write(h + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(f"{float(v):.17g}" for v in row) + "\n")


def write_gnuplot(path, csv_name, columns):
    logx = "set logscale x\n" if columns[0].startswith(("z", "t")) else ""
    plots = ", \\\n     ".join(
        f"'{csv_name}' using 1:{i + 1} with lines title '{c}'"
        for i, c in enumerate(columns) if i > 0)
    Path(path).write_text(
        "set datafile separator ','\nset datafile commentschars '#'\n"
        f"{logx}set xlabel '{columns[0]}'\n"
        f"plot {plots}\n", encoding="utf-8")


def run(sc: Scenario, out_dir, threads=1, plot=False):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = _header(sc)
    written = []
    for name, (cols, rows) in compute(sc, threads).items():
        path = out / f"{name}.csv"
        write_csv(path, header, cols, rows)
        written.append(path)
        if plot:
            gp = out / f"{name}.gp"
            write_gnuplot(gp, path.name, cols)
            written.append(gp)
    return written


# -- entry point --------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="thermocp",
                                description="Thermal Casimir-Polder forces on polar molecules.")
    p.add_argument("--version", action="version", version=f"thermocp {__version__}")
    sub = p.add_subparsers(dest="action", required=True)
    r = sub.add_parser("run", help="evaluate a scenario file")
    r.add_argument("--config", required=True, help="scenario TOML file")
    r.add_argument("--command", choices=COMMANDS, help="override the scenario command")
    r.add_argument("--out", default=".", help="output directory")
    r.add_argument("--threads", type=int, default=1, help="worker threads over z")
    r.add_argument("--quad-tol", type=float, help="relative quadrature tolerance")
    r.add_argument("--matsubara-tol", type=float, help="Matsubara tail tolerance")
    r.add_argument("--plot", action="store_true", help="also write gnuplot scripts")
    v = sub.add_parser("validate", help="check a scenario or molecule file")
    v.add_argument("path")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.action == "validate":
            for line in validate(args.path):
                print(line)
            return EXIT_OK
        sc = load_scenario(args.config)
        if args.command:
            if args.command == "cavity" and sc.cavity_length is None:
                raise ConfigError("--command cavity needs a [cavity] table")
            sc.command = args.command
            if sc.command == "dynamics" and sc.time_grid is None:
                d = default_times()
                sc.time_grid = Grid(float(d[0]), float(d[-1]), d.size, "log")
        if args.quad_tol is not None:
            if not args.quad_tol > 0:
                raise ConfigError("--quad-tol must be positive")
            sc.quad_tol = args.quad_tol
        if args.matsubara_tol is not None:
            if not args.matsubara_tol > 0:
                raise ConfigError("--matsubara-tol must be positive")
            sc.matsubara_tol = args.matsubara_tol
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        for path in run(sc, args.out, args.threads, args.plot):
            print(path)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ThermoCPError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
