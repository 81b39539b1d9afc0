"""Command-line interface: INI configs in, deterministic CSV out.

Subcommands: tune, eigen, scatter, field-dump, probs, monte, interact, hetero.
Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 no root found.
Every CSV starts with '#' metadata lines (version, config hash, command) and a
header row; floats are printed with 9 significant digits, LF line endings.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import functools
import hashlib
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, fieldsolve, hetero, observables, radialode, tuner
from .cloakmodel import CLOAK_PROFILES, HatConfig
from .errors import (ConfigError, ConvergenceError, HatsimError, NoRootError,
                     ParseError, QuadratureError, ResonanceError,
                     SingularityError, ToleranceError, ValidationError)

_CLOAK_KEYS = {"rho", "l", "e", "n_max", "profile"}
_RUN_KEYS = {"ode_tol", "quad_tol", "bracket_lo", "bracket_hi", "scan_step",
             "workers", "incident", "region_a", "n_balls", "monte_lo", "monte_hi",
             "a_coulomb", "hat_tol", "amp_threshold", "tau1_cloak"}
_HETERO_KEYS = {"ell", "j_values", "n_values", "e_test", "r_out", "masses",
                "vplus_factor", "vminus_factor", "k_b", "t"}


@dataclass
class RunConfig:
    """Validated run description: device config plus subcommand parameters."""

    hat: HatConfig
    needs_tuning: bool
    bracket: tuple[float, float]
    scan_step: float
    workers: int
    incident: str
    region_a: float
    n_balls: int
    monte_region: tuple[float, float]
    a_coulomb: float
    hat_tol: float
    amp_threshold: float
    tau1_cloak: float | None
    hetero: dict
    sha256: str
    out_dir: Path = field(default_factory=Path)


def _get_float(section, key, default=None, required=False):
    if key not in section:
        if required:
            raise ValidationError(f"missing required key '{key}' in [{section.name}]")
        return default
    try:
        return float(section[key])
    except ValueError as exc:
        raise ValidationError(f"key '{key}' in [{section.name}] is not a number: "
                              f"{section[key]!r}") from exc


def parse_config(path: str | Path) -> RunConfig:
    """Parse and validate an INI run config; all defaults live here."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    raw = path.read_bytes()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(raw.decode("utf-8"))
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None) or getattr(exc, "line", "?")
        raise ParseError(f"{path}:{lineno}: {exc.message.splitlines()[0]}") from exc

    for sec in cp.sections():
        if sec not in ("cloak", "shells", "run", "hetero"):
            raise ValidationError(f"unknown section [{sec}]")
    if "cloak" not in cp:
        raise ValidationError("missing [cloak] section")
    cloak = cp["cloak"]
    for key in cloak:
        if key not in _CLOAK_KEYS:
            raise ValidationError(f"unknown key '{key}' in [cloak]")
    rho = _get_float(cloak, "rho", required=True)
    L = _get_float(cloak, "l", required=True)
    E = _get_float(cloak, "e", required=True)
    n_max = int(_get_float(cloak, "n_max", 30))
    profile = cloak.get("profile", "pushforward").strip()
    if profile not in CLOAK_PROFILES:
        raise ValidationError(f"profile must be one of {CLOAK_PROFILES}")

    if "shells" not in cp:
        raise ValidationError("missing [shells] section")
    shells_sec = cp["shells"]
    radii: dict[int, float] = {}
    taus: dict[int, float] = {}
    for key in shells_sec:
        if key.startswith("s") and key[1:].isdigit():
            radii[int(key[1:])] = _get_float(shells_sec, key)
        elif key.startswith("tau") and key[3:].isdigit():
            taus[int(key[3:])] = _get_float(shells_sec, key)
        else:
            raise ValidationError(f"unknown key '{key}' in [shells]")
    if not radii:
        raise ValidationError("[shells] needs at least s1")
    needs_tuning = 1 not in taus
    shells = []
    for j in sorted(radii):
        if j != len(shells) + 1:
            raise ValidationError(f"shell radii must be s1..sN consecutively, got {sorted(radii)}")
        tau_j = taus.get(j, 0.0 if (j == 1 and needs_tuning) else None)
        if tau_j is None:
            raise ValidationError(f"missing tau{j} in [shells]")
        shells.append((radii[j], tau_j))
    extra_taus = set(taus) - set(radii)
    if extra_taus:
        raise ValidationError(f"tau without matching radius: {sorted(extra_taus)}")

    run = cp["run"] if "run" in cp else cp["DEFAULT"]
    if "run" in cp:
        for key in cp["run"]:
            if key not in _RUN_KEYS:
                raise ValidationError(f"unknown key '{key}' in [run]")
    ode_tol = _get_float(run, "ode_tol", 1e-10) if "run" in cp else 1e-10
    quad_tol = _get_float(run, "quad_tol", 1e-10) if "run" in cp else 1e-10

    try:
        hat = HatConfig(rho=rho, L=L, E=E, shells=tuple(shells), n_max=n_max,
                        ode_tol=ode_tol, quad_tol=quad_tol, cloak_profile=profile)
    except ConfigError as exc:
        raise ValidationError(str(exc)) from exc

    def runf(key, default):
        return _get_float(run, key, default) if "run" in cp else default

    workers = int(runf("workers", 0) or 0)
    env_workers = os.environ.get("HATSIM_WORKERS")
    if env_workers:
        try:
            workers = int(env_workers)
        except ValueError as exc:
            raise ValidationError(f"HATSIM_WORKERS is not an integer: {env_workers!r}") from exc

    incident = (run.get("incident", "eigen").strip() if "run" in cp else "eigen")
    if incident not in ("eigen", "plane"):
        raise ValidationError("incident must be 'eigen' or 'plane'")

    het = {}
    if "hetero" in cp:
        hs = cp["hetero"]
        for key in hs:
            if key not in _HETERO_KEYS:
                raise ValidationError(f"unknown key '{key}' in [hetero]")
        het = {
            "ell": _get_float(hs, "ell", 0.25),
            "j_values": [int(x) for x in hs.get("j_values", "8,16,32,64").split(",")],
            "n_values": [int(x) for x in hs.get("n_values", "16,32,64").split(",")],
            "e_test": _get_float(hs, "e_test", 120.0),
            "r_out": _get_float(hs, "r_out", 0.6),
            "masses": tuple(float(x) for x in hs.get("masses", "0.5,1.0,1.0,2.0").split(",")),
            "vplus_factor": _get_float(hs, "vplus_factor", 1.3),
            "vminus_factor": _get_float(hs, "vminus_factor", 1.3),
            "k_b": _get_float(hs, "k_b", 1.0),
            "t": _get_float(hs, "t", 0.0),
        }

    return RunConfig(
        hat=hat,
        needs_tuning=needs_tuning,
        bracket=(runf("bracket_lo", tuner.DEFAULT_BRACKET[0]),
                 runf("bracket_hi", tuner.DEFAULT_BRACKET[1])),
        scan_step=runf("scan_step", tuner.SCAN_STEP),
        workers=workers,
        incident=incident,
        region_a=runf("region_a", 3.0),
        n_balls=int(runf("n_balls", 3)),
        monte_region=(runf("monte_lo", 3.0), runf("monte_hi", min(4.0, L))),
        a_coulomb=runf("a_coulomb", 1e-3),
        hat_tol=runf("hat_tol", tuner.HAT_TOL),
        amp_threshold=runf("amp_threshold", tuner.AMP_THRESHOLD),
        tau1_cloak=runf("tau1_cloak", None),
        hetero=het,
        sha256=hashlib.sha256(raw).hexdigest(),
    )


# -- CSV helpers -----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.9g}"


def write_csv(path: Path, header: list[str], rows, rc: RunConfig, command: str) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(f"# hatsim {__version__}\n")
        f.write(f"# config_sha256 {rc.sha256}\n")
        f.write(f"# command {command}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _tuned(rc: RunConfig) -> HatConfig:
    if rc.needs_tuning:
        tau1 = tuner.find_tau1_sh(rc.hat, rc.bracket, step=rc.scan_step)
        return rc.hat.with_tau1(tau1)
    return rc.hat


# -- subcommands -------------------------------------------------------------------


def cmd_tune(rc: RunConfig, args) -> None:
    tau_sh = tuner.find_tau1_sh(rc.hat, rc.bracket, step=rc.scan_step)
    rows = []
    rep = tuner.classify_mode(tau_sh, rc.hat, rc.hat_tol, rc.amp_threshold)
    rows.append((rep.mode, rep.tau1, rep.far_field_residual, rep.interior_amplitude))
    print(f"tau1_sh={tau_sh:.9g}")
    try:
        tau_res = tuner.find_tau1_resonance(rc.hat, rc.bracket, step=rc.scan_step)
        rep_r = tuner.classify_mode(tau_res, rc.hat, rc.hat_tol, rc.amp_threshold)
        rows.append((rep_r.mode, rep_r.tau1, rep_r.far_field_residual,
                     rep_r.interior_amplitude))
        print(f"tau1_res={tau_res:.9g}")
    except NoRootError:
        print("tau1_res=nan")
    if rc.tau1_cloak is not None:
        rep_c = tuner.classify_mode(rc.tau1_cloak, rc.hat, rc.hat_tol, rc.amp_threshold)
        rows.append((rep_c.mode, rep_c.tau1, rep_c.far_field_residual,
                     rep_c.interior_amplitude))
    write_csv(rc.out_dir / "tune.csv",
              ["mode", "tau1", "residual", "interior_amplitude"], rows, rc, "tune")


def _field_for(rc: RunConfig, cfg: HatConfig):
    if rc.incident == "plane":
        sols = fieldsolve.solve_plane_wave(cfg, n_max=cfg.n_max, workers=rc.workers)
    else:
        sols = [fieldsolve.solve_eigenfield(cfg)]
    return fieldsolve.AssembledField(cfg, sols)


def cmd_eigen(rc: RunConfig, args) -> None:
    cfg = _tuned(rc)
    fld = fieldsolve.AssembledField(cfg, [fieldsolve.solve_eigenfield(cfg)])
    rs = np.linspace(0.0, cfg.L, args.grid)
    vals = fld.eval_radial(rs)
    write_csv(rc.out_dir / "eigen_field.csv", ["r", "re", "im", "abs"],
              [(r, v.real, v.imag, abs(v)) for r, v in zip(rs, vals)], rc, "eigen")
    _write_probs(rc, cfg, "eigen")
    print(f"tau1={cfg.shells[0][1]:.9g}")


def _write_probs(rc: RunConfig, cfg: HatConfig, command: str) -> None:
    regions = {"A": (rc.region_a, cfg.L), "B": (2.0, cfg.L)}
    rows = observables.probabilities(None, cfg, regions, quad_tol=cfg.quad_tol)
    write_csv(rc.out_dir / "probs.csv",
              ["region", "ball", "mass", "total", "probability"],
              [(p.label, p.ball, p.mass, p.total, p.probability) for p in rows],
              rc, command)


def cmd_probs(rc: RunConfig, args) -> None:
    cfg = _tuned(rc)
    _write_probs(rc, cfg, "probs")


def cmd_scatter(rc: RunConfig, args) -> None:
    cfg = _tuned(rc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sols = fieldsolve.solve_plane_wave(cfg, n_max=cfg.n_max, workers=rc.workers)
    res = fieldsolve.far_field_residual(sols, cfg)
    print(f"tau1={cfg.shells[0][1]:.9g}")
    print(f"far_field_residual={res:.9g}")
    fld = fieldsolve.AssembledField(cfg, sols)
    _dump_plane(rc, cfg, fld, args.grid, args.rmax, "scatter", "scatter_plane.csv")
    write_csv(rc.out_dir / "scatter_coeffs.csv", ["n", "c_re", "c_im", "abs_c"],
              [(s.n, s.c.real, s.c.imag, abs(s.c)) for s in sols], rc, "scatter")


def _dump_plane(rc: RunConfig, cfg: HatConfig, fld, grid: int, rmax: float | None,
                command: str, name: str) -> None:
    rmax = rmax or min(3.0, cfg.L)
    xs = np.linspace(-rmax, rmax, grid)
    rows = []
    for y in xs:
        pts = np.column_stack([xs, np.full_like(xs, y), np.zeros_like(xs)])
        vals = fld.eval_points(pts)
        rows.extend((x, y, v.real, v.imag, abs(v)) for x, v in zip(xs, vals))
    write_csv(rc.out_dir / name, ["x", "y", "re", "im", "abs"], rows, rc, command)


def cmd_field_dump(rc: RunConfig, args) -> None:
    cfg = _tuned(rc)
    fld = _field_for(rc, cfg)
    if args.axis:
        rmax = args.rmax or min(3.0, cfg.L)
        rs = np.linspace(0.0, rmax, args.grid)
        vals = fld.eval_radial(rs, mu=1.0)
        write_csv(rc.out_dir / "field_axis.csv", ["r", "re", "im", "abs"],
                  [(r, v.real, v.imag, abs(v)) for r, v in zip(rs, vals)],
                  rc, "field-dump")
    else:
        _dump_plane(rc, cfg, fld, args.grid, args.rmax, "field-dump", "field_plane.csv")
    print(f"tau1={cfg.shells[0][1]:.9g}")


def cmd_monte(rc: RunConfig, args) -> None:
    cfg = _tuned(rc)
    game = observables.GameSpec(n_balls=rc.n_balls, region=rc.monte_region)
    rep = observables.monte_game(game, None, cfg, quad_tol=cfg.quad_tol)
    write_csv(rc.out_dir / "monte.csv",
              ["mu_empty", "mu_sh", "p_choose", "bob_profit"],
              [(rep.mu_empty, rep.mu_sh, rep.p_choose, rep.bob_profit)], rc, "monte")
    print(f"bob_profit={rep.bob_profit:.9g}")


def cmd_interact(rc: RunConfig, args) -> None:
    cfg = _tuned(rc)
    fld = observables.as_assembled(fieldsolve.solve_eigenfield(cfg), cfg)
    dens, pts = observables.normalized_density(fld, cfg, quad_tol=cfg.quad_tol)
    e1 = observables.perturbation_e1(dens, (0.0, cfg.L), pts, quad_tol=1e-7)
    e1_cou = observables.e1_no_sh(cfg, quad_tol=1e-8)
    qprime = observables.charge_qprime(fld, cfg, quad_tol=cfg.quad_tol)
    a = rc.a_coulomb * cfg.E / e1
    e_plus, _ = observables.solve_with_coulomb(cfg, a)
    e_minus, _ = observables.solve_with_coulomb(cfg, -a)
    slope = (e_plus - e_minus) / (2 * a)
    rs = np.linspace(0.0, cfg.L, args.grid)
    vspline = observables._veff_spline(dens, cfg.L, pts)
    write_csv(rc.out_dir / "veff.csv", ["r", "veff"],
              [(r, float(vspline(r))) for r in rs], rc, "interact")
    write_csv(rc.out_dir / "interact.csv",
              ["e1", "e1_cou", "qprime", "a", "e_eff", "slope", "two_e1"],
              [(e1, e1_cou, qprime, a, e_plus, slope, 2 * e1)], rc, "interact")
    print(f"e1={e1:.9g}")
    print(f"e1_cou={e1_cou:.9g}")
    print(f"qprime={qprime:.9g}")
    print(f"slope={slope:.9g} (2*e1={2 * e1:.9g})")


def cmd_hetero(rc: RunConfig, args) -> None:
    cfg = _tuned(rc)
    h = rc.hetero or {}
    ell = h.get("ell", 0.25)
    vl, e_ell = hetero.scale_hat(hetero.hat_potential(cfg), ell)
    rs = np.linspace(0.0, vl.support, 2001)
    vv = np.asarray(vl(rs))
    vmin, vmax = float(vv.min()), float(vv.max())
    mats = hetero.MaterialTable(
        masses=h.get("masses", (0.5, 1.0, 1.0, 2.0)),
        potentials=(0.0, vmin * h.get("vminus_factor", 1.3),
                    vmax * h.get("vplus_factor", 1.3), 0.0))

    @functools.lru_cache(maxsize=4096)
    def _cached(v: float):
        return hetero.layer_ratios(mats.m0, v, mats)

    def ratios(r):
        if r >= vl.support:
            return np.zeros(4)
        return _cached(round(float(np.atleast_1d(vl(r))[0]), 12))

    e_test = h.get("e_test", 120.0)
    r_out = h.get("r_out", 0.6)
    ref = hetero.potential_dtn(vl, e_test, r_out=r_out)
    conv_rows = []
    stack = None
    for J in h.get("j_values", [8, 16, 32, 64]):
        stack = hetero.build_stack(ratios, J)
        prof = hetero.bdd_profile(stack, mats, e_test, r_max=r_out)
        d = radialode.dtn_harmonic(prof, 0)
        conv_rows.append((J, d.real, d.imag, ref.real, ref.imag, abs(d - ref)))
        print(f"J={J}: dtn_err={abs(d - ref):.9g}")
    write_csv(rc.out_dir / "hetero_convergence.csv",
              ["J", "dtn_re", "dtn_im", "ref_re", "ref_im", "err"],
              conv_rows, rc, "hetero")
    rows = [(i, lo, hi, mats.masses[i - 1], mats.potentials[i - 1])
            for i, lo, hi in stack.layers]
    path = rc.out_dir / "stack.csv"
    with open(path, "w", newline="\n") as f:
        f.write(f"# hatsim {__version__}\n")
        f.write(f"# config_sha256 {rc.sha256}\n")
        f.write("# units: hbar^2 = 2, m0 = 1; radii in device units\n")
        f.write(f"# E_ell {_fmt(e_ell)}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["material_index", "r_inner", "r_outer", "m", "V"])
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    e_av, var = hetero.thermal_window(e_ell, h.get("t", 0.0), h.get("k_b", 1.0))
    print(f"E_ell={e_ell:.9g} E_av={e_av:.9g} var={var:.9g}")


_COMMANDS = {
    "tune": cmd_tune,
    "eigen": cmd_eigen,
    "scatter": cmd_scatter,
    "field-dump": cmd_field_dump,
    "probs": cmd_probs,
    "monte": cmd_monte,
    "interact": cmd_interact,
    "hetero": cmd_hetero,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hatsim",
        description="Approximate quantum cloaks and Schrodinger-hat potentials: "
                    "tuning, fields, probabilities, interactions, heterostructures.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} pipeline")
        sp.add_argument("config", help="INI config file (sections [cloak], [shells], [run])")
        sp.add_argument("--out-dir", default=".", help="directory for CSV outputs")
        sp.add_argument("--grid", type=int, default=201, help="points per axis in dumps")
        sp.add_argument("--rmax", type=float, default=None, help="dump extent (default min(3, L))")
        if name == "field-dump":
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--plane", default=None, help="plane to dump, e.g. z=0")
            g.add_argument("--axis", default=None, help="axis to dump, e.g. x")
        if name == "scatter":
            sp.add_argument("--plane", default="z=0", help="plane to dump (z=0 only)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = parse_config(args.config)
        rc.out_dir = Path(args.out_dir)
        rc.out_dir.mkdir(parents=True, exist_ok=True)
        if getattr(args, "plane", None) not in (None, "z=0"):
            raise ValidationError("only the z=0 plane is supported")
        _COMMANDS[args.command](rc, args)
        return 0
    except (ParseError, ValidationError, ConfigError) as exc:
        print(f"error: 2: {exc}", file=sys.stderr)
        return 2
    except NoRootError as exc:
        print(f"error: 4: {exc}", file=sys.stderr)
        return 4
    except (ToleranceError, QuadratureError, ResonanceError, SingularityError,
            ConvergenceError, OverflowError) as exc:
        print(f"error: 3: {exc}", file=sys.stderr)
        return 3
    except HatsimError as exc:
        print(f"error: 3: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
