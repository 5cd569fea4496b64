"""Flat ``key = value`` run configuration: parsing with line-numbered diagnostics, defaults, rendering.

Example::

    # scaling experiment
    equation = SQG
    galerkin_n = 16
    nu = 0.2
    theta_radii = 2, 4, 8, 16

Every key is optional; :func:`render` writes the fully resolved configuration
back in the same syntax and ``parse_config(render(c)) == c``.
"""
from __future__ import annotations

import hashlib
import math
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dynamics import EQUATIONS, SCHEMES, SdeConfig
from .fields import SpectralScalarField
from .noise import make_cutoff, make_power, scaling_ratio

THETA_FAMILIES = ("cutoff", "power")
OUTPUT_ROOT_ENV = "SQGLAB_OUTPUT_ROOT"
PRESETS = {
    "SQG": ("pair", "triple", "zero", "random"),
    "Boussinesq": ("buoyancy", "zero", "random"),
}


class Diagnostic(NamedTuple):
    line: int  # 0 when the problem is not tied to one line
    key: str
    message: str

    def __str__(self):
        where = f"line {self.line}" if self.line else "config"
        return f"{where}: {self.key}: {self.message}" if self.key else f"{where}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))

    def as_dict(self) -> dict:
        return {"error": "validation", "diagnostics": [d._asdict() for d in self.diagnostics]}


@dataclass(frozen=True)
class RunConfig:
    equation: str = "SQG"
    galerkin_n: int = 16
    nu: float = 0.2
    kappa: float | None = None
    dt: float = 1e-4
    t_final: float = 0.5
    scheme: str = "ExponentialEM"
    theta_family: str = "cutoff"
    theta_radii: tuple = (2.0, 4.0, 8.0, 16.0)
    theta_alpha: float = 0.0
    ensemble_size: int = 64
    seed: int = 0
    delta: float = 0.5
    deviation_epsilon: float | None = None  # None = 0.1 ||omega0||_{H^-delta}
    record_times: int = 50
    output_dir: str = "sqglab-output"
    initial_data: str = "triple"
    threads: int = 1

    # ---- derived objects ------------------------------------------------
    def theta(self, radius: float):
        if self.theta_family == "cutoff":
            return make_cutoff(radius)
        return make_power(radius, self.theta_alpha)

    def theta_list(self) -> list:
        return [self.theta(r) for r in self.theta_radii]

    def sde_config(self, radius: float | None = None) -> SdeConfig:
        r = self.theta_radii[0] if radius is None else radius
        return SdeConfig(equation=self.equation, N=self.galerkin_n, nu=self.nu,
                         kappa=self.kappa if self.equation == "Boussinesq" else None,
                         theta=self.theta(r), dt=self.dt, t_final=self.t_final, scheme=self.scheme)

    def initial_fields(self, base_dir: Path | None = None) -> tuple:
        return initial_fields(self.initial_data, self.equation, self.galerkin_n, self.seed, base_dir)

    def config_hash(self) -> str:
        """SHA-256 of the rendered configuration without ``output_dir`` and ``threads``,
        which do not influence any result."""
        text = render(replace(self, output_dir="-", threads=1))
        return hashlib.sha256(text.encode()).hexdigest()


KEYS = tuple(f.name for f in fields(RunConfig))


def _default_output_dir() -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return str(Path(root) / "sqglab-output") if root else "sqglab-output"


# --------------------------------------------------------------------------
# initial data


def initial_fields(name: str, equation: str, n: int, seed: int = 0, base_dir: Path | None = None) -> tuple:
    """Resolve a preset name or a snapshot file (CSV field table or ``SQGFLD01`` container)."""
    F = SpectralScalarField
    if name in PRESETS.get(equation, ()):
        if name == "zero":
            return tuple(F.zeros(n) for _ in range(1 if equation == "SQG" else 2))
        if name == "pair":
            return (F.from_modes({(1, 0): 1.0, (0, 1): 1.0}, n),)
        if name == "triple":
            return (F.from_modes({(1, 0): 1.0, (0, 1): 1.0, (1, 1): 1.0}, n),)
        if name == "buoyancy":
            return (F.basis((1, 0), n), F.basis((0, 1), n))
        if name == "random":
            rng = np.random.default_rng([int(seed), 7])
            out = []
            for _ in range(1 if equation == "SQG" else 2):
                f = F.random(n, rng, band=min(n, 8), slope=2.0)
                out.append(f * (1.0 / f.norm()))
            return tuple(out)
    path = Path(name)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    if not path.is_file():
        raise ValueError(f"initial_data {name!r} is neither a preset {PRESETS[equation]} nor a file")
    from .io import field_from_csv, read_container

    if path.suffix.lower() == ".csv":
        if equation != "SQG":
            raise ValueError("a CSV field table holds one field; Boussinesq needs a container with xi and omega")
        return (field_from_csv(path.read_text(), n).with_truncation(n),)
    arrays = read_container(path.read_bytes())
    out = []
    for f in ("omega",) if equation == "SQG" else ("xi", "omega"):
        key = f"{f}/coefficients"
        if key not in arrays:
            raise ValueError(f"container {path} has no array {key!r}")
        a = arrays[key]
        m = (a.shape[0] - 1) // 2
        out.append(F(m, a).with_truncation(n))
    return tuple(out)


# --------------------------------------------------------------------------
# parsing


def _parse_int(v: str) -> int:
    x = float(v) if any(c in v for c in ".eE") else int(v)
    if isinstance(x, float):
        if not x.is_integer():
            raise ValueError(f"expected an integer, got {v!r}")
        x = int(x)
    return x


def _parse_float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError(f"expected a finite number, got {v!r}")
    return x


def _parse_optional_float(v: str):
    return None if v.lower() in ("auto", "none", "") else _parse_float(v)


def _parse_radii(v: str) -> tuple:
    parts = [p.strip() for p in v.split(",")]
    if not parts or any(p == "" for p in parts):
        raise ValueError(f"expected a comma-separated list of radii, got {v!r}")
    return tuple(_parse_float(p) for p in parts)


PARSERS = {
    "equation": str, "galerkin_n": _parse_int, "nu": _parse_float, "kappa": _parse_optional_float,
    "dt": _parse_float, "t_final": _parse_float, "scheme": str, "theta_family": str,
    "theta_radii": _parse_radii, "theta_alpha": _parse_float, "ensemble_size": _parse_int,
    "seed": _parse_int, "delta": _parse_float, "deviation_epsilon": _parse_optional_float,
    "record_times": _parse_int, "output_dir": str, "initial_data": str, "threads": _parse_int,
}


def parse_config(text: str, base_dir: Path | None = None, check_files: bool = True) -> RunConfig:
    """Validate ``key = value`` text and resolve defaults; raises :class:`ConfigError`."""
    diags: list[Diagnostic] = []
    values: dict = {}
    lines: dict = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            diags.append(Diagnostic(no, "", f"expected 'key = value', got {raw.strip()!r}"))
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in PARSERS:
            diags.append(Diagnostic(no, key, f"unknown key (known keys: {', '.join(KEYS)})"))
            continue
        if key in lines:
            diags.append(Diagnostic(no, key, f"duplicate key (first set on line {lines[key]})"))
            continue
        lines[key] = no
        try:
            values[key] = PARSERS[key](val)
        except ValueError as e:
            diags.append(Diagnostic(no, key, str(e) or f"cannot parse {val!r}"))
    if diags:
        raise ConfigError(diags)

    def at(key):
        return lines.get(key, 0)

    eq = values.get("equation", "SQG")
    if eq not in EQUATIONS:
        diags.append(Diagnostic(at("equation"), "equation", f"must be one of {EQUATIONS}"))
        raise ConfigError(diags)
    if eq == "SQG" and values.get("kappa") is not None:
        diags.append(Diagnostic(at("kappa"), "kappa", "thermal diffusivity is only meaningful for Boussinesq"))
    if eq == "Boussinesq":
        values.setdefault("kappa", 0.5)
        if values["kappa"] is None:
            values["kappa"] = 0.5
    values.setdefault("initial_data", "triple" if eq == "SQG" else "buoyancy")
    values.setdefault("output_dir", _default_output_dir())
    values.setdefault("threads", max(1, os.cpu_count() or 1))
    cfg = RunConfig(**values)

    def bad(key, msg):
        diags.append(Diagnostic(at(key), key, msg))

    if cfg.galerkin_n < 1:
        bad("galerkin_n", "must be a positive integer")
    if cfg.nu < 0:
        bad("nu", "must be nonnegative")
    if cfg.kappa is not None and cfg.kappa < 0:
        bad("kappa", "must be nonnegative")
    if cfg.dt <= 0:
        bad("dt", "must be positive")
    if cfg.t_final <= 0:
        bad("t_final", "must be positive")
    if cfg.dt > 0 and cfg.t_final > 0:
        steps = round(cfg.t_final / cfg.dt)
        if steps < 1 or abs(steps * cfg.dt - cfg.t_final) > 1e-9 * cfg.t_final:
            bad("t_final" if "t_final" in lines else "dt", "t_final must be a whole number of steps dt")
    if cfg.scheme not in SCHEMES:
        bad("scheme", f"must be one of {SCHEMES}")
    if cfg.theta_family not in THETA_FAMILIES:
        bad("theta_family", f"must be one of {THETA_FAMILIES}")
    if cfg.theta_alpha < 0:
        bad("theta_alpha", "must be nonnegative")
    if cfg.theta_family == "cutoff" and cfg.theta_alpha != 0:
        bad("theta_alpha", "only the power family takes an exponent")
    if any(r < 1 for r in cfg.theta_radii):
        bad("theta_radii", "every radius must be >= 1 (a smaller ball contains no lattice point)")
    elif cfg.theta_family in THETA_FAMILIES and cfg.theta_alpha >= 0:
        ratios = [scaling_ratio(cfg.theta(r)) for r in cfg.theta_radii]
        if any(b >= a for a, b in zip(ratios, ratios[1:])):
            bad("theta_radii", "radii must give a strictly decreasing flatness ratio (increasing, distinct shells)")
    if cfg.ensemble_size < 2:
        bad("ensemble_size", "must be >= 2")
    if not 0 <= cfg.seed < 2**64:
        bad("seed", "must be an integer in [0, 2^64)")
    if not 0 < cfg.delta < 1:
        bad("delta", f"must lie in the open interval (0, 1), got {cfg.delta}")
    if cfg.deviation_epsilon is not None and cfg.deviation_epsilon < 0:
        bad("deviation_epsilon", "must be nonnegative (or 'auto')")
    if cfg.record_times < 1:
        bad("record_times", "must be >= 1")
    if cfg.threads < 1:
        bad("threads", "must be >= 1")
    if not cfg.output_dir:
        bad("output_dir", "must not be empty")
    if check_files and cfg.galerkin_n >= 1:
        try:
            cfg.initial_fields(base_dir)
        except ValueError as e:
            bad("initial_data", str(e))
    if diags:
        raise ConfigError(diags)
    return cfg


def _render_value(key, v) -> str:
    if v is None:
        return "auto" if key == "deviation_epsilon" else "none"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(cfg: RunConfig) -> str:
    lines = ["# resolved sqglab configuration"]
    for key, v in asdict(cfg).items():
        if key == "kappa" and cfg.equation == "SQG":
            continue
        lines.append(f"{key} = {_render_value(key, v)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


__all__ = [
    "ConfigError", "Diagnostic", "KEYS", "OUTPUT_ROOT_ENV", "PRESETS", "RunConfig", "initial_fields",
    "load_config", "parse_config", "render",
]
