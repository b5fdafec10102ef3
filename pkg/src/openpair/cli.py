"""Configuration-driven command line front end.

Configs are flat ``section.key = value`` text (comments with '#').  Each
command writes one CSV table (with the resolved configuration embedded in
'#'-prefixed header lines), a gnuplot script next to it, and a re-parseable
``resolved.config``.  The output directory comes from --out, the OPENPAIR_OUT
environment variable, or output.dir in the config, in that order.
"""
from __future__ import annotations

import argparse
import math
import os
import sys as _sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bath import (BathSpec, Flat, FlatOccupation, MultiPeak, SuperOhmicExpCutoff,
                   SystemSpec, Tabulated, Thermal, response)
from .exact import (CoupledBath, MultiBathSpec, SecondMoments, UndampedModeError,
                    exact_moments, exact_moments_multibath, exact_steady_state,
                    find_poles, perturbative_pole_rate)
from . import diag, meq

ENV_OUTDIR = "OPENPAIR_OUT"
COMMANDS = ("trajectory", "sweep-detuning", "steady-state", "poles",
            "stability-map", "validate")
METHODS = ("exact", "br", "spbr", "secular", "collective", "individual", "oracle")
OBSERVABLES = ("faa", "fbb", "re_fab", "im_fab", "lambda_min")


class ConfigError(ValueError):
    pass


# --- config parsing -----------------------------------------------------------------

def parse_config_text(text: str) -> dict[str, tuple[str, int]]:
    """key -> (raw value, line number); duplicate keys are an error."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'section.key = value', "
                              f"got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r} "
                              f"(first set on line {out[key][1]})")
        out[key] = (val, lineno)
    return out


class _KV:
    def __init__(self, kv: dict[str, tuple[str, int]]):
        self.kv = kv
        self.used: set[str] = set()

    def _raw(self, key):
        self.used.add(key)
        return self.kv.get(key)

    def has(self, key) -> bool:
        return key in self.kv

    def get_str(self, key, default=None, choices=None) -> str | None:
        item = self._raw(key)
        val = default if item is None else item[0]
        if val is not None and choices is not None and val not in choices:
            where = f" (line {item[1]})" if item else ""
            raise ConfigError(f"{key}{where}: must be one of {', '.join(choices)}; "
                              f"got {val!r}")
        return val

    def get_float(self, key, default=None):
        item = self._raw(key)
        if item is None:
            if default is None:
                raise ConfigError(f"missing required key {key}")
            return default
        try:
            return float(item[0])
        except ValueError:
            raise ConfigError(f"{key} (line {item[1]}): not a number: {item[0]!r}")

    def get_int(self, key, default=None):
        item = self._raw(key)
        if item is None:
            if default is None:
                raise ConfigError(f"missing required key {key}")
            return default
        try:
            return int(item[0])
        except ValueError:
            raise ConfigError(f"{key} (line {item[1]}): not an integer: {item[0]!r}")

    def get_bool(self, key, default: bool) -> bool:
        item = self._raw(key)
        if item is None:
            return default
        val = item[0].lower()
        if val in ("true", "yes", "1"):
            return True
        if val in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key} (line {item[1]}): not a boolean: {item[0]!r}")

    def grid(self, key, default=None) -> np.ndarray | None:
        item = self._raw(key)
        if item is None:
            return default
        val, lineno = item
        try:
            if ":" in val:
                a, b, n = val.split(":")
                out = np.linspace(float(a), float(b), int(n))
            else:
                out = np.array([float(x) for x in val.split(",") if x.strip()])
        except ValueError:
            raise ConfigError(f"{key} (line {lineno}): expected start:stop:count or a "
                              f"comma list, got {val!r}")
        if len(out) > 1 and np.any(np.diff(out) <= 0):
            raise ConfigError(f"{key} (line {lineno}): grid must be strictly increasing")
        return out

    def sections(self, prefix: str) -> list[str]:
        names = set()
        for key in self.kv:
            head = key.split(".", 1)[0]
            if head == prefix or (head.startswith(prefix)
                                  and head[len(prefix):].isdigit()):
                names.add(head)
        return sorted(names, key=lambda s: int(s[len(prefix):] or "1"))


@dataclass
class RunConfig:
    system: SystemSpec
    baths: list[CoupledBath]
    command: str | None
    times: np.ndarray
    detunings: np.ndarray | None
    methods: list[str]
    oracle_modes: int
    oracle_numax: float | None
    fock_nmax: int
    outdir: str
    plots: bool

    @property
    def multi(self) -> MultiBathSpec:
        return MultiBathSpec(tuple(self.baths))

    @property
    def single_bath(self) -> BathSpec:
        if len(self.baths) != 1:
            raise ConfigError("this command requires exactly one bath")
        return self.baths[0].bath


def _parse_bath(kv: _KV, sec: str, sys_spec: SystemSpec) -> CoupledBath:
    kind = kv.get_str(f"{sec}.spectral", "superohmic",
                      choices=("superohmic", "flat", "multipeak", "tabulated"))
    if kind == "superohmic":
        spectral = SuperOhmicExpCutoff(j0=kv.get_float(f"{sec}.j0"),
                                       omega0=kv.get_float(f"{sec}.omega0"),
                                       z=kv.get_float(f"{sec}.z"))
    elif kind == "flat":
        spectral = Flat(j0=kv.get_float(f"{sec}.j0"),
                        numin=kv.get_float(f"{sec}.numin"),
                        numax=kv.get_float(f"{sec}.numax"))
    elif kind == "multipeak":
        item = kv._raw(f"{sec}.peaks")
        if item is None:
            raise ConfigError(f"missing required key {sec}.peaks")
        peaks = []
        for part in item[0].split(";"):
            try:
                j0, w0, z = (float(x) for x in part.split(":"))
            except ValueError:
                raise ConfigError(f"{sec}.peaks (line {item[1]}): each peak is "
                                  f"j0:omega0:z, got {part.strip()!r}")
            peaks.append(SuperOhmicExpCutoff(j0=j0, omega0=w0, z=z))
        spectral = MultiPeak(tuple(peaks))
    else:
        item = kv._raw(f"{sec}.table")
        if item is None:
            raise ConfigError(f"missing required key {sec}.table")
        nus, js = [], []
        for part in item[0].split(";"):
            try:
                nu, j = (float(x) for x in part.split(":"))
            except ValueError:
                raise ConfigError(f"{sec}.table (line {item[1]}): each sample is "
                                  f"nu:J, got {part.strip()!r}")
            nus.append(nu)
            js.append(j)
        spectral = Tabulated(tuple(nus), tuple(js))
    occ = kv.get_str(f"{sec}.occupation", "thermal", choices=("thermal", "flat"))
    if occ == "thermal":
        occupation = Thermal(kbt=kv.get_float(f"{sec}.kbt"))
    else:
        occupation = FlatOccupation(n0=kv.get_float(f"{sec}.n0"))
    return CoupledBath(bath=BathSpec(spectral=spectral, occupation=occupation),
                       phi_a=kv.get_float(f"{sec}.phi_a", sys_spec.phi_a),
                       phi_b=kv.get_float(f"{sec}.phi_b", sys_spec.phi_b))


def load_config(path: str | Path) -> RunConfig:
    kv = _KV(parse_config_text(Path(path).read_text()))

    has_ab = kv.has("system.omega_a") or kv.has("system.omega_b")
    has_mean = kv.has("system.omega_mean") or kv.has("system.detuning")
    if has_ab and has_mean:
        raise ConfigError("give either system.omega_a/omega_b or "
                          "system.omega_mean/detuning, not both")
    phi_a = kv.get_float("system.phi_a", 1 / math.sqrt(2))
    phi_b = kv.get_float("system.phi_b", 1 / math.sqrt(2))
    if has_mean:
        sys_spec = SystemSpec.from_mean(kv.get_float("system.omega_mean"),
                                        kv.get_float("system.detuning"),
                                        phi_a, phi_b)
    else:
        sys_spec = SystemSpec(kv.get_float("system.omega_a"),
                              kv.get_float("system.omega_b"), phi_a, phi_b)

    sections = kv.sections("bath")
    if not sections:
        raise ConfigError("missing bath section (bath.* keys)")
    baths = [_parse_bath(kv, sec, sys_spec) for sec in sections]

    t_max = kv.get_float("task.t_max", 50.0)
    n_times = kv.get_int("task.n_times", 501)
    if t_max <= 0 or n_times < 2:
        raise ConfigError("task.t_max must be > 0 and task.n_times >= 2")
    methods_raw = kv.get_str("task.methods", "exact,br")
    methods = [m.strip() for m in methods_raw.split(",") if m.strip()]
    if not methods:
        raise ConfigError("task.methods must name at least one method")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"task.methods: unknown method {m!r} "
                              f"(known: {', '.join(METHODS)})")
    command = kv.get_str("task.command", None, choices=COMMANDS)

    cfg = RunConfig(
        system=sys_spec,
        baths=baths,
        command=command,
        times=np.linspace(0.0, t_max, n_times),
        detunings=kv.grid("task.detunings"),
        methods=methods,
        oracle_modes=kv.get_int("numerics.oracle_modes", 256),
        oracle_numax=(kv.get_float("numerics.oracle_numax")
                      if kv.has("numerics.oracle_numax") else None),
        fock_nmax=kv.get_int("numerics.fock_nmax", 6),
        outdir=kv.get_str("output.dir", "out"),
        plots=kv.get_bool("output.plots", True),
    )
    unknown = set(kv.kv) - kv.used
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key!r} (line {kv.kv[key][1]})")
    return cfg


def emit_config(cfg: RunConfig) -> str:
    """Canonical re-parseable form of the resolved configuration."""
    lines = [
        f"system.omega_a = {cfg.system.omega_a!r}",
        f"system.omega_b = {cfg.system.omega_b!r}",
        f"system.phi_a = {cfg.system.phi_a!r}",
        f"system.phi_b = {cfg.system.phi_b!r}",
    ]
    for n, cb in enumerate(cfg.baths, start=1):
        sec = "bath" if n == 1 else f"bath{n}"
        sp = cb.bath.spectral
        if isinstance(sp, SuperOhmicExpCutoff):
            lines += [f"{sec}.spectral = superohmic", f"{sec}.j0 = {sp.j0!r}",
                      f"{sec}.omega0 = {sp.omega0!r}", f"{sec}.z = {sp.z!r}"]
        elif isinstance(sp, Flat):
            lines += [f"{sec}.spectral = flat", f"{sec}.j0 = {sp.j0!r}",
                      f"{sec}.numin = {sp.numin!r}", f"{sec}.numax = {sp.numax!r}"]
        elif isinstance(sp, MultiPeak):
            peaks = "; ".join(f"{p.j0!r}:{p.omega0!r}:{p.z!r}" for p in sp.peaks)
            lines += [f"{sec}.spectral = multipeak", f"{sec}.peaks = {peaks}"]
        else:
            table = "; ".join(f"{nu!r}:{j!r}" for nu, j in zip(sp.nus, sp.js))
            lines += [f"{sec}.spectral = tabulated", f"{sec}.table = {table}"]
        occ = cb.bath.occupation
        if isinstance(occ, Thermal):
            lines += [f"{sec}.occupation = thermal", f"{sec}.kbt = {occ.kbt!r}"]
        else:
            lines += [f"{sec}.occupation = flat", f"{sec}.n0 = {occ.n0!r}"]
        lines += [f"{sec}.phi_a = {cb.phi_a!r}", f"{sec}.phi_b = {cb.phi_b!r}"]
    if cfg.command:
        lines.append(f"task.command = {cfg.command}")
    lines += [
        f"task.t_max = {float(cfg.times[-1])!r}",
        f"task.n_times = {len(cfg.times)}",
        f"task.methods = {','.join(cfg.methods)}",
    ]
    if cfg.detunings is not None:
        lines.append("task.detunings = " + ",".join(repr(float(d)) for d in cfg.detunings))
    lines += [
        f"numerics.oracle_modes = {cfg.oracle_modes}",
        f"numerics.fock_nmax = {cfg.fock_nmax}",
        f"output.dir = {cfg.outdir}",
        f"output.plots = {'true' if cfg.plots else 'false'}",
    ]
    if cfg.oracle_numax is not None:
        lines.append(f"numerics.oracle_numax = {cfg.oracle_numax!r}")
    return "\n".join(lines) + "\n"


# --- table output ---------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    return repr(f) if math.isfinite(f) else "nan"


def write_table(path: Path, cfg: RunConfig, colnames, rows, notes=()) -> None:
    with open(path, "w") as fh:
        fh.write(f"# openpair {__version__}\n")
        for line in emit_config(cfg).splitlines():
            fh.write(f"# {line}\n")
        for note in notes:
            fh.write(f"# note: {note}\n")
        fh.write(",".join(colnames) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_plot(path: Path, csv_name: str, xlabel: str, xcol: int, ycols, title: str):
    lines = [
        f"# openpair {__version__} plot description",
        'set datafile separator ","',
        "set key autotitle columnhead outside",
        f'set xlabel "{xlabel}"',
        f'set title "{title}"',
        "plot " + ", \\\n     ".join(
            f'"{csv_name}" using {xcol}:{c} with lines' for c in ycols),
    ]
    path.write_text("\n".join(lines) + "\n")


# --- method evaluation ------------------------------------------------------------------

def _effective_system(cfg: RunConfig, system: SystemSpec) -> SystemSpec:
    """Single-bath runs honor a per-bath coupling override (bath.phi_a/phi_b)."""
    if len(cfg.baths) == 1:
        cb = cfg.baths[0]
        if (cb.phi_a, cb.phi_b) != (system.phi_a, system.phi_b):
            return SystemSpec(system.omega_a, system.omega_b, cb.phi_a, cb.phi_b)
    return system


def _generator_for(method: str, cfg: RunConfig, system: SystemSpec) -> meq.Generator:
    system = _effective_system(cfg, system)
    if len(cfg.baths) == 1:
        bath = cfg.baths[0].bath
        if method == "br":
            return meq.br_generator(system, bath)
        if method == "spbr":
            return meq.spbr_generator(system, bath)
        if method == "secular":
            return meq.secularize(meq.br_generator(system, bath))
    else:
        multi = cfg.multi
        if method == "br":
            return meq.multibath_generator(multi, system, "br")
        if method == "spbr":
            return meq.multibath_generator(multi, system, "spbr")
        if method == "secular":
            return meq.secularize(meq.multibath_generator(multi, system, "br"))
    bath = cfg.single_bath
    if method == "collective":
        return meq.collective_generator(system, bath)
    if method == "individual":
        return meq.individual_generator(system, bath)
    raise ValueError(method)


def _trajectory_for(method: str, cfg: RunConfig, system: SystemSpec) -> list[SecondMoments]:
    if method == "exact":
        if len(cfg.baths) == 1:
            return exact_moments(_effective_system(cfg, system), cfg.baths[0].bath,
                                 cfg.times)
        return exact_moments_multibath(cfg.multi, system, cfg.times)
    if method == "oracle":
        oc = diag.OracleConfig(n_modes=cfg.oracle_modes, nu_max=cfg.oracle_numax,
                               n_max=cfg.fock_nmax)
        baths = cfg.multi if len(cfg.baths) > 1 else cfg.single_bath
        return diag.discretized_bath_oracle(_effective_system(cfg, system), baths,
                                            oc, cfg.times)
    g = _generator_for(method, cfg, system)
    traj = meq.evolve(g, np.zeros(4), cfg.times)
    return [meq.from_moment_vector(f) for f in traj]


def _observable_row(moments: SecondMoments):
    return (moments.faa, moments.fbb, moments.fab.real, moments.fab.imag,
            diag.min_eigen_F(moments))


def _colnames(methods) -> list[str]:
    return [f"{m}_{o}" for m in methods for o in OBSERVABLES]


# --- commands ------------------------------------------------------------------------

def cmd_trajectory(cfg: RunConfig, outdir: Path) -> int:
    cols = ["t"] + _colnames(cfg.methods)
    trajs = {m: _trajectory_for(m, cfg, cfg.system) for m in cfg.methods}
    rows = []
    for k, t in enumerate(cfg.times):
        row = [t]
        for m in cfg.methods:
            row.extend(_observable_row(trajs[m][k]))
        rows.append(row)
    write_table(outdir / "trajectory.csv", cfg, cols, rows)
    if cfg.plots:
        ycols = [cols.index(f"{m}_re_fab") + 1 for m in cfg.methods]
        write_plot(outdir / "trajectory.gp", "trajectory.csv", "t", 1, ycols,
                   "coherence Re F_ab vs time")
    return 0


def _system_at_detuning(cfg: RunConfig, delta: float) -> SystemSpec:
    # sweep convention: omega_a fixed, omega_b = omega_a - 2*delta
    return SystemSpec(cfg.system.omega_a, cfg.system.omega_a - 2 * delta,
                      cfg.system.phi_a, cfg.system.phi_b)


def _sweep_point(args):
    cfg, delta = args
    system = _system_at_detuning(cfg, delta)
    trajs = {m: _trajectory_for(m, cfg, system) for m in cfg.methods}
    rows = []
    for k, t in enumerate(cfg.times):
        row = [delta, t]
        for m in cfg.methods:
            row.extend(_observable_row(trajs[m][k]))
        rows.append(row)
    return rows


def cmd_sweep_detuning(cfg: RunConfig, outdir: Path, threads: int = 1) -> int:
    if cfg.detunings is None:
        raise ConfigError("sweep-detuning requires task.detunings")
    cols = ["delta", "t"] + _colnames(cfg.methods)
    args = [(cfg, float(d)) for d in cfg.detunings]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(_sweep_point, args))
    else:
        blocks = [_sweep_point(a) for a in args]
    rows = [row for block in blocks for row in block]
    write_table(outdir / "sweep_detuning.csv", cfg, cols, rows)
    if cfg.plots:
        ycols = [cols.index(f"{m}_re_fab") + 1 for m in cfg.methods]
        write_plot(outdir / "sweep_detuning.gp", "sweep_detuning.csv", "delta", 1,
                   ycols, "coherence across the detuning sweep")
    return 0


def _steady_point(args):
    cfg, delta = args
    system = _system_at_detuning(cfg, delta)
    row = [delta]
    nan5 = [math.nan] * 5
    for m in cfg.methods:
        try:
            if m == "exact":
                sm = exact_steady_state(system, cfg.single_bath)
            elif m == "oracle":
                raise UndampedModeError("the discretized oracle has no steady state")
            else:
                sm = meq.from_moment_vector(meq.steady_state(
                    _generator_for(m, cfg, system)))
            row.extend(_observable_row(sm))
        except (UndampedModeError, meq.SingularGeneratorError):
            row.extend(nan5)
    return row


def cmd_steady_state(cfg: RunConfig, outdir: Path, threads: int = 1) -> int:
    deltas = cfg.detunings if cfg.detunings is not None else np.array([cfg.system.delta])
    cols = ["delta"] + _colnames(cfg.methods)
    args = [(cfg, float(d)) for d in deltas]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_steady_point, args))
    else:
        rows = [_steady_point(a) for a in args]
    write_table(outdir / "steady_state.csv", cfg, cols, rows,
                notes=["entries are nan where no steady state exists "
                       "(undamped mode at zero detuning)"])
    if cfg.plots:
        ycols = [cols.index(f"{m}_re_fab") + 1 for m in cfg.methods]
        write_plot(outdir / "steady_state.gp", "steady_state.csv", "delta", 1, ycols,
                   "steady-state coherence vs detuning")
    return 0


def cmd_poles(cfg: RunConfig, outdir: Path) -> int:
    baths = cfg.multi if len(cfg.baths) > 1 else cfg.baths[0].bath
    ps = find_poles(cfg.system, baths)
    notes = []
    if len(cfg.baths) == 1:
        rate = perturbative_pole_rate(cfg.system, cfg.baths[0].bath)
        notes.append(f"perturbative slow decay rate {rate!r} "
                     f"(population rate {2 * rate!r})")
        notes.append(f"plain/swapped perturbative population rates: "
                     f"{meq.br_perturbative_rate(cfg.system, cfg.baths[0].bath)!r} / "
                     f"{meq.spbr_perturbative_rate(cfg.system, cfg.baths[0].bath)!r}")
    rows = [[z.real, z.imag, res, viol]
            for z, res, viol in zip(ps.roots, ps.residuals, ps.violations)]
    write_table(outdir / "poles.csv", cfg, ["re_zeta", "im_zeta", "abs_d", "violation"],
                rows, notes=notes)
    return 0


def cmd_stability_map(cfg: RunConfig, outdir: Path) -> int:
    deltas = cfg.detunings if cfg.detunings is not None else np.array([cfg.system.delta])
    baths = cfg.multi if len(cfg.baths) > 1 else cfg.baths[0].bath
    rows = []
    for d in deltas:
        system = _system_at_detuning(cfg, float(d))
        margin = meq.stability_margin(system, baths)
        mus = meq.closed_form_eigenvalues(system, baths)
        scale = (meq.markov_scale(system, cfg.baths[0].bath) if len(cfg.baths) == 1
                 else math.nan)
        rows.append([d, margin, float(np.min(mus.real)), scale,
                     bool(scale < meq.MARKOV_THRESHOLD) if math.isfinite(scale) else False])
    write_table(outdir / "stability_map.csv", cfg,
                ["delta", "margin", "min_re_mu", "markov_scale", "markov_ok"], rows)
    if cfg.plots:
        write_plot(outdir / "stability_map.gp", "stability_map.csv", "delta", 1, [2, 3],
                   "stability margin and slowest eigenvalue")
    return 0


def cmd_validate(cfg: RunConfig, outdir: Path) -> int:
    bath = cfg.single_bath
    system = cfg.system
    checks = []

    r = response(bath, system.omega_a)
    checks.append(("response_K_consistency", abs(r.K - (r.Kdown - r.Kup)), 1e-10))

    g = meq.spbr_generator(system, bath)
    checks.append(("sum_rule_spbr", float(np.max(np.abs(
        diag.sum_rule_residual(g, system)))), 1e-12))

    t_osc = np.linspace(0.0, min(cfg.times[-1], 40.0), 251)
    oc = diag.OracleConfig(n_modes=cfg.oracle_modes, nu_max=cfg.oracle_numax,
                           n_max=cfg.fock_nmax)
    nu_max = oc.nu_max if oc.nu_max is not None else bath.spectral.support()[1]
    if t_osc[-1] >= 0.5 * oc.recurrence_time(nu_max):
        t_osc = np.linspace(0.0, 0.45 * oc.recurrence_time(nu_max), 251)
    ex = exact_moments(system, bath, t_osc)
    orc = diag.discretized_bath_oracle(system, bath, oc, t_osc)
    scale = max(max(abs(m.faa), abs(m.fbb), abs(m.fab)) for m in ex) or 1.0
    err = max(np.linalg.norm(e.matrix() - o.matrix()) for e, o in zip(ex, orc))
    checks.append(("exact_vs_discretized_oracle", err / scale, 1e-2))

    from .exact import exact_moments_spectral
    k = min(len(t_osc) - 1, 150)
    sp = exact_moments_spectral(system, bath, t_osc[k])
    checks.append(("spectral_vs_convolution", float(np.linalg.norm(
        sp.matrix() - ex[k].matrix())) / scale, 1e-2))

    try:
        t_fock = np.linspace(0.0, min(cfg.times[-1], 10.0), 51)
        fk = diag.fock_oracle(system, bath, oc, t_fock)
        gbr = meq.br_generator(system, bath)
        tr = meq.evolve(gbr, np.zeros(4), t_fock)
        err = max(np.linalg.norm(f.matrix() - meq.from_moment_vector(v).matrix())
                  for f, v in zip(fk, tr))
        checks.append(("fock_oracle_vs_moment_equation", err, 1e-6))
    except diag.TruncationError as exc:
        checks.append((f"fock_oracle_vs_moment_equation [{exc}]", math.inf, 1e-6))

    rows = [[name, val, tol, val <= tol] for name, val, tol in checks]
    write_table(outdir / "validate.csv", cfg, ["check", "value", "tolerance", "ok"],
                [[r[0], _fmt(r[1]), _fmt(r[2]), _fmt(r[3])] for r in rows])
    for name, val, tol in checks:
        status = "ok" if val <= tol else "FAIL"
        print(f"{status:4s} {name}: {val:.3e} (tolerance {tol:g})")
    return 0 if all(r[3] for r in rows) else 1


def write_table_raw(path, cfg, cols, rows, notes=()):  # kept for extensions
    write_table(path, cfg, cols, rows, notes)


# --- entry point ------------------------------------------------------------------------

def run(cfg: RunConfig, outdir: str | None = None, threads: int = 1) -> int:
    """Dispatch a parsed configuration; returns the process exit status."""
    if cfg.command is None:
        raise ConfigError("no command: set task.command or use a named subcommand")
    out = Path(outdir or os.environ.get(ENV_OUTDIR) or cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.config").write_text(emit_config(cfg))
    if cfg.command == "trajectory":
        return cmd_trajectory(cfg, out)
    if cfg.command == "sweep-detuning":
        return cmd_sweep_detuning(cfg, out, threads)
    if cfg.command == "steady-state":
        return cmd_steady_state(cfg, out, threads)
    if cfg.command == "poles":
        return cmd_poles(cfg, out)
    if cfg.command == "stability-map":
        return cmd_stability_map(cfg, out)
    if cfg.command == "validate":
        return cmd_validate(cfg, out)
    raise ConfigError(f"unknown command {cfg.command!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="openpair",
        description="Two bosonic modes in structured thermal baths: exact dynamics "
                    "and time-local approximations.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run",) + COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a section.key=value config")
        p.add_argument("--out", default=None, help="output directory "
                       f"(default: ${ENV_OUTDIR} or output.dir)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command != "run":
            cfg.command = args.command
        return run(cfg, outdir=args.out, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    except Exception as exc:  # numerical failures: diagnostic + nonzero status
        print(f"error: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
