"""Experiment configuration read from INI files."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from .catalog import read_catalog
from .errors import ParseError

# resource caps
MAX_COUNT = 1_000_000
MAX_DEPTH = 500
MAX_STEPS = 100_000
MAX_ORBITS = 4096
MAX_CENTERS = 20_000
MAX_GROWTH_M = 12


@dataclass
class ExperimentConfig:
    maps: tuple = ("power2_k1",)
    catalog: str = None
    # sampler
    depth: int = 30
    count: int = 100_000
    seed: int = 0
    # lyapunov
    n_steps: int = 1000
    n_orbits: int = 64
    # dimension and entropy
    r_max: float = 0.1
    rho: float = 0.8
    J: int = 20
    n_centers: int = 200
    entropy_centers: int = 1000
    xi: float = 0.05
    n: int = 12
    # growth
    m_max: int = 6
    discs: tuple = None          # None: every catalog disc of matching dimension
    # output
    out: str = "results"
    threads: int = 1

    def __post_init__(self):
        self.maps = tuple(self.maps)
        checks = [
            (1 <= self.count <= MAX_COUNT, f"count must lie in 1..{MAX_COUNT}"),
            (0 <= self.depth <= MAX_DEPTH, f"depth must lie in 0..{MAX_DEPTH}"),
            (100 <= self.n_steps <= MAX_STEPS, f"n_steps must lie in 100..{MAX_STEPS}"),
            (2 <= self.n_orbits <= MAX_ORBITS, f"n_orbits must lie in 2..{MAX_ORBITS}"),
            (1 <= self.n_centers <= MAX_CENTERS, f"n_centers must lie in 1..{MAX_CENTERS}"),
            (1 <= self.entropy_centers <= MAX_CENTERS,
             f"entropy_centers must lie in 1..{MAX_CENTERS}"),
            (0 <= self.m_max <= MAX_GROWTH_M, f"m_max must lie in 0..{MAX_GROWTH_M}"),
            (self.xi > 0 and self.n >= 2, "need xi > 0 and n >= 2"),
            (self.threads >= 1, "threads must be positive"),
            (len(self.maps) > 0, "at least one map is required"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    def validate_catalog(self):
        """Raise ``KeyError`` for map or disc names missing from the catalog."""
        maps, discs = read_catalog(self.catalog)
        for name in self.maps:
            if name not in maps:
                raise KeyError(f"map {name!r} not in catalog")
        for name in self.discs or ():
            if name not in discs:
                raise KeyError(f"disc {name!r} not in catalog")

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_SECTIONS = {
    "map": {"name": "maps", "names": "maps", "catalog": "catalog"},
    "sampler": {"depth": "depth", "count": "count", "seed": "seed"},
    "lyapunov": {"n_steps": "n_steps", "n_orbits": "n_orbits"},
    "dimension": {"r_max": "r_max", "rho": "rho", "J": "J", "n_centers": "n_centers",
                  "entropy_centers": "entropy_centers", "xi": "xi", "n": "n"},
    "growth": {"m_max": "m_max", "discs": "discs"},
    "output": {"out": "out", "threads": "threads"},
}


def _convert(name, text):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    kind = types[name]
    if name in ("maps", "discs"):
        return tuple(s.strip() for s in text.split(",") if s.strip())
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc)) from None
    kw = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ParseError(f"unknown section [{section}]")
        for key, value in cp[section].items():
            if key not in _SECTIONS[section]:
                raise ParseError(f"unknown key {key!r} in [{section}]")
            name = _SECTIONS[section][key]
            try:
                kw[name] = _convert(name, value)
            except ValueError:
                raise ParseError(f"bad value {value!r} for {key!r} in [{section}]") from None
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def bundled_config(name):
    """One of the example configurations shipped in ``cpkdim/data``."""
    return parse_config((resources.files("cpkdim") / "data" / f"{name}.ini").read_text())
