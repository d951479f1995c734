"""Run configuration: a flat-sectioned key-value text file (INI syntax).

Recognized sections and keys:

    [case]    name, M, N_el, degree, eos (preset name for cases with variants)
    [eos]     kind {ideal, stiffened, cubic}, gamma, pi_inf, q_inf, a, b,
              r1, r2, R, cubic_preset ("peng-robinson")
    [mesh]    n_el (or "nx,ny"), degree, velocity_degree_plus_one
    [solver]  scheme {ark3, ark4_ars, ssp3_explicit}, dt, t_final,
              picard_tol, picard_max, linear_tol, preconditioner
    [output]  dir, snapshot_times (comma separated), timeseries (bool)
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from . import cases as cases_mod
from . import eos as eos_mod
from .solver import SolverConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    case_name: str
    case_kwargs: dict = field(default_factory=dict)
    eos_override: object = None
    n_el: tuple | None = None
    degree: int | None = None
    velocity_degree_plus_one: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)
    solver_explicit_keys: set = field(default_factory=set)
    out_dir: str = "out"
    snapshot_times: tuple = ()
    write_timeseries: bool = True


def _build_eos(sec) -> object:
    kind = sec.get("kind", "ideal").strip().lower()
    gamma = sec.getfloat("gamma", 1.4)
    if kind == "ideal":
        return eos_mod.IdealGas(gamma=gamma, R_gas=sec.getfloat("R", fallback=None))
    if kind == "stiffened":
        return eos_mod.StiffenedGas(gamma=gamma, pi_inf=sec.getfloat("pi_inf", 0.0),
                                    q_inf=sec.getfloat("q_inf", 0.0))
    if kind == "cubic":
        preset = sec.get("cubic_preset", "peng-robinson").strip().lower()
        if preset == "peng-robinson":
            r1, r2 = eos_mod.PENG_ROBINSON_R1, eos_mod.PENG_ROBINSON_R2
        else:
            r1, r2 = sec.getfloat("r1", 0.0), sec.getfloat("r2", 0.0)
        r1 = sec.getfloat("r1", r1)
        r2 = sec.getfloat("r2", r2)
        return eos_mod.GeneralCubic(gamma=gamma, a=sec.getfloat("a", 0.0),
                                    b=sec.getfloat("b", 0.0), r1=r1, r2=r2,
                                    R_gas=sec.getfloat("R", fallback=None))
    raise ConfigError(f"unknown eos.kind {kind!r}")


def load_config(path=None, case_name=None, scheme=None) -> RunConfig:
    """Parse a configuration file; CLI flags override file entries."""
    parser = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path) as f:
                parser.read_file(f, source=str(path))
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc

    cfg = RunConfig(case_name=case_name or "")
    if parser.has_section("case"):
        sec = parser["case"]
        cfg.case_name = case_name or sec.get("name", cfg.case_name)
        try:
            if "M" in sec:
                cfg.case_kwargs["M"] = sec.getfloat("M")
            if "eos" in sec:
                cfg.case_kwargs["eos_kind"] = sec.get("eos").strip()
            if "N_el" in sec:
                cfg.n_el = _parse_nel(sec.get("N_el"))
            if "degree" in sec:
                cfg.degree = sec.getint("degree")
        except ValueError as exc:
            raise ConfigError(f"[case]: {exc}") from exc
    if not cfg.case_name:
        raise ConfigError("no case selected (config [case] name or --case)")
    if cfg.case_name not in cases_mod.case_names():
        raise ConfigError(f"unknown case {cfg.case_name!r}; "
                          f"available: {cases_mod.case_names()}")

    if parser.has_section("eos"):
        try:
            cfg.eos_override = _build_eos(parser["eos"])
        except (ValueError, eos_mod.EosError) as exc:
            raise ConfigError(f"[eos]: {exc}") from exc

    if parser.has_section("mesh"):
        sec = parser["mesh"]
        try:
            if "n_el" in sec:
                cfg.n_el = _parse_nel(sec.get("n_el"))
            if "degree" in sec:
                cfg.degree = sec.getint("degree")
            cfg.velocity_degree_plus_one = sec.getboolean("velocity_degree_plus_one", False)
        except ValueError as exc:
            raise ConfigError(f"[mesh]: {exc}") from exc

    if parser.has_section("solver"):
        sec = parser["solver"]
        try:
            kw = {}
            for key, get in (("dt", sec.getfloat), ("t_final", sec.getfloat),
                             ("picard_tol", sec.getfloat), ("linear_tol", sec.getfloat),
                             ("picard_max", sec.getint), ("linear_max", sec.getint)):
                if key in sec:
                    kw[key] = get(key)
            if "scheme" in sec:
                kw["scheme"] = sec.get("scheme").strip()
            if "preconditioner" in sec:
                kw["preconditioner"] = sec.get("preconditioner").strip()
            cfg.solver = SolverConfig(**kw)
            cfg.solver_explicit_keys = set(kw)
        except ValueError as exc:
            raise ConfigError(f"[solver]: {exc}") from exc
    if scheme:
        cfg.solver.scheme = scheme

    if parser.has_section("output"):
        sec = parser["output"]
        cfg.out_dir = sec.get("dir", cfg.out_dir)
        if "snapshot_times" in sec:
            try:
                cfg.snapshot_times = tuple(
                    float(t) for t in sec.get("snapshot_times").split(",") if t.strip())
            except ValueError as exc:
                raise ConfigError(f"[output] snapshot_times: {exc}") from exc
        cfg.write_timeseries = sec.getboolean("timeseries", True)
    return cfg


def _parse_nel(text: str) -> tuple:
    parts = [int(p) for p in text.replace("x", ",").split(",") if p.strip()]
    if not parts or any(p < 1 for p in parts):
        raise ValueError(f"bad element count {text!r}")
    return tuple(parts)
