"""Flat ``namespace.key = value`` configuration with per-experiment profiles.

A config file holds one assignment per line; ``#`` starts a comment.  Values
are parsed as int, float, bool or comma lists when they look like one, else
kept as strings (so ``kernel.space = poly(9,9)`` stays a string).
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import coefficient as coef
from .. import micro
from ..kernel import KernelError, parse_kernel


class ConfigError(ValueError):
    pass


_NUM = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "auto", ""):
        return None if low != "auto" else "auto"
    if _NUM.match(text):
        return int(text) if re.fullmatch(r"[+-]?\d+", text) else float(text)
    if "/" in text and re.fullmatch(r"[\d.eE+-]+/[\d.eE+-]+", text):
        a, b = text.split("/")
        return float(a) / float(b)
    # comma lists, but leave kernel names like poly(9,9) alone
    if "," in text and "(" not in text:
        return [parse_value(t) for t in text.split(",")]
    return text


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not re.fullmatch(r"[A-Za-z_][\w]*(\.[A-Za-z_][\w]*)*", key):
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        out[key] = parse_value(value)
    return out


def load_config(path) -> dict:
    try:
        return parse_config_text(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        out.update(parse_config_text(item))
    return out


# ---------------------------------------------------------------------------
# defaults

BASE = {
    "profile": "desk",
    "field.form": "periodic1d",
    "field.dim": 1,
    "field.eps": 0.01,
    "field.slow": "cos",
    "field.scale": 1.0,
    "macro.H": 0.01,
    "macro.dt_ratio": 0.5,
    "macro.T": 1.0,
    "macro.stride": 0,
    "micro.eta_over_eps": 10.0,
    "micro.tau_over_eps": None,
    "micro.cells_per_eps": 64,
    "micro.k_over_h": 0.5,
    "kernel.space": "poly(9,9)",
    "kernel.time": None,
    "init.sigma": 0.1,
    "init.center": 0.5,
    "solvers": ["hmm", "hom"],
    "dns.cells_per_eps": 64,
    "cache.dedup": "auto",
    "output.dir": "results",
    "seed": 0,
}

# Reference parameter lists ("paper") and relaxed versions that finish in minutes ("desk").
PROFILES: dict[str, dict[str, dict]] = {
    "example1": {
        "paper": {"field.eps": 0.01, "macro.H": 0.01, "kernel.space": "poly(5,6)", "solvers": ["hmm", "hom", "dns"]},
        "desk": {"field.eps": 0.05, "macro.H": 1 / 80, "kernel.space": "poly(5,6)", "solvers": ["hmm", "hom", "dns"]},
    },
    "example2": {
        "paper": {"field.form": "locally_periodic1d", "field.eps": 0.01, "macro.H": 1 / 300, "kernel.space": "poly(5,6)"},
        "desk": {"field.form": "locally_periodic1d", "field.eps": 0.05, "macro.H": 1 / 80, "kernel.space": "poly(5,6)",
                 "solvers": ["hmm", "hom", "dns"]},
    },
    "example3": {
        "paper": {"field.form": "multifreq1d", "field.scale": 1.0, "macro.H": 1 / 300, "micro.eta_over_eps": 1.0,
                  "micro.tau_over_eps": 10.0, "solvers": ["hmm"]},
        "desk": {"field.form": "multifreq1d", "field.scale": 2.0, "macro.H": 1 / 80, "micro.eta_over_eps": 1.0,
                 "micro.tau_over_eps": 10.0, "solvers": ["hmm", "dns"]},
    },
    "example4": {
        "paper": {"field.dim": 2, "field.eps": 0.01, "macro.H": 0.01, "macro.T": 0.25, "micro.k_over_h": 0.3},
        "desk": {"field.dim": 2, "field.eps": 0.05, "macro.H": 0.05, "macro.T": 0.25, "micro.k_over_h": 0.3},
    },
    "example5": {
        "paper": {"field.dim": 2, "field.form": "locally_periodic1d", "field.slow": "sin", "field.eps": 0.01,
                  "macro.H": 0.01, "macro.T": 0.25, "micro.k_over_h": 0.3},
        "desk": {"field.dim": 2, "field.form": "locally_periodic1d", "field.slow": "sin", "field.eps": 0.05,
                 "macro.H": 1 / 40, "macro.T": 0.25, "micro.k_over_h": 0.3},
    },
    "example6": {
        "paper": {"field.dim": 3, "field.eps": 0.01, "macro.H": 0.05, "macro.dt_ratio": 0.25, "macro.T": 0.25,
                  "micro.eta_over_eps": 1.0, "micro.tau_over_eps": 5.0, "micro.k_over_h": 0.3},
        "desk": {"field.dim": 3, "field.eps": 0.02, "macro.H": 0.05, "macro.dt_ratio": 0.25, "macro.T": 0.25,
                 "micro.eta_over_eps": 1.0, "micro.tau_over_eps": 5.0, "micro.cells_per_eps": 32, "micro.k_over_h": 0.3},
    },
    "kernel_study": {
        "paper": {"field.eps": 0.01, "kernels": ["poly(1,1)", "poly(1,9)", "exp"], "study.ratios": list(range(2, 11))},
        "desk": {"field.eps": 0.01, "kernels": ["poly(1,1)", "poly(1,9)", "exp"], "study.ratios": list(range(2, 11))},
    },
    "longtime": {
        # eps and T are a scaled substitute chosen for desk runtime
        "paper": {"field.eps": 0.05, "macro.H": 1 / 40, "macro.T": 400.0, "macro.cfl": 0.98, "init.sigma": 0.3,
                  "micro.eta_over_eps": 10.0, "kernel.space": "poly(9,9)", "longtime.dns_cells": [48, 96],
                  "longtime.beta_max": 0.05},
        "desk": {"field.eps": 0.05, "macro.H": 1 / 40, "macro.T": 400.0, "macro.cfl": 0.98, "init.sigma": 0.3,
                 "micro.eta_over_eps": 10.0, "kernel.space": "poly(9,9)", "longtime.dns_cells": [48, 96],
                 "longtime.beta_max": 0.05},
    },
    "custom": {"paper": {}, "desk": {}},
}


@dataclass
class ExperimentConfig:
    """Resolved experiment settings; ``values`` maps namespaced keys to values."""

    experiment: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def profile(self) -> str:
        return self.values["profile"]

    def digest(self) -> str:
        blob = json.dumps({"experiment": self.experiment, **self.values}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def eps(self) -> float:
        return float(self.values["field.eps"])

    def solvers(self) -> list[str]:
        s = self.values.get("solvers") or []
        return [s] if isinstance(s, str) else list(s)


def resolve(experiment: str, file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the profile, then the config file, then command-line overrides."""
    if experiment not in PROFILES:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {sorted(PROFILES)}")
    merged = dict(file_values or {})
    merged.update(overrides or {})
    profile = merged.get("profile", BASE["profile"])
    if profile not in ("paper", "desk"):
        raise ConfigError(f"profile must be 'paper' or 'desk', got {profile!r}")
    values = dict(BASE)
    values.update(PROFILES[experiment][profile])
    values.update(merged)
    values["profile"] = profile
    cfg = ExperimentConfig(experiment, values)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    v = cfg.values
    for key in ("field.eps", "macro.H", "macro.dt_ratio", "micro.eta_over_eps", "micro.cells_per_eps", "micro.k_over_h"):
        val = v.get(key)
        if not isinstance(val, (int, float)) or not val > 0 or not math.isfinite(val):
            raise ConfigError(f"{key} must be a positive number, got {val!r}")
    if v.get("macro.T") is None or v["macro.T"] < 0:
        raise ConfigError("macro.T must be non-negative")
    for key in ("kernel.space", "kernel.time"):
        if v.get(key) is not None:
            try:
                parse_kernel(v[key])
            except KernelError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
    if int(v["field.dim"]) not in (1, 2, 3):
        raise ConfigError("field.dim must be 1, 2 or 3")
    unknown = set(cfg.solvers()) - {"hmm", "hom", "dns", "dispersive"}
    if unknown:
        raise ConfigError(f"unknown solvers {sorted(unknown)}")


def build_field(cfg: ExperimentConfig) -> coef.CoefficientField:
    form = str(cfg["field.form"]).lower()
    eps = cfg.eps
    dim = int(cfg["field.dim"])
    if form == "periodic1d":
        gen = coef.Periodic1D(epsilon=eps)
    elif form == "locally_periodic1d":
        gen = coef.LocallyPeriodic1D(epsilon=eps, slow_kind=str(cfg["field.slow"]))
    elif form == "multifreq1d":
        if dim != 1:
            raise ConfigError("multifreq1d is one-dimensional")
        return coef.MultiFrequency1D.five_scale_example(float(cfg["field.scale"]))
    else:
        raise ConfigError(f"unknown field.form {form!r}")
    return gen if dim == 1 else coef.DiagonalND(gen, dim)


def micro_params(cfg: ExperimentConfig, field_: coef.CoefficientField | None = None) -> micro.MicroParams:
    eps = (field_ or build_field(cfg)).epsilon
    return micro.MicroParams.from_ratios(
        eps,
        float(cfg["micro.eta_over_eps"]),
        cfg.get("micro.tau_over_eps"),
        cells_per_eps=int(cfg["micro.cells_per_eps"]),
        k_over_h=float(cfg["micro.k_over_h"]),
        space_kernel=cfg["kernel.space"],
        time_kernel=cfg.get("kernel.time"),
    )


def initial_data(cfg: ExperimentConfig):
    from ..reference import gaussian_nd

    dim = int(cfg["field.dim"])
    center = cfg["init.center"]
    center = np.full(dim, center) if np.isscalar(center) else np.asarray(center, dtype=float)
    return gaussian_nd(center, float(cfg["init.sigma"]))
