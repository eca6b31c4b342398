"""Parser for the map/disc catalog text format.

A catalog is a sequence of blank-line separated blocks of ``key = value``
lines.  A block starting with ``name`` is a map; one starting with ``disc``
is a polynomial polydisc.  Coefficients are exact decimals or rationals with
an optional imaginary part, e.g. ``-2``, ``0.1``, ``1/10``, ``1/2+3/4i``.
"""

from __future__ import annotations

import re
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidMap, ParseError
from .projective import ProjectiveMap, has_common_zero

_NUM = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:/\d+)?"
_COMPLEX = re.compile(rf"^\s*(?:(?P<re>{_NUM})(?P<im>[+-](?:\d+(?:\.\d*)?|\.\d+)?(?:/\d+)?)i"
                      rf"|(?P<only_im>{_NUM}|[+-]?)i|(?P<only_re>{_NUM}))\s*$")


def default_catalog_path():
    return resources.files("cpkdim") / "data" / "catalog.txt"


def parse_coefficient(text):
    """Exact ``(re, im)`` pair of Fractions from a literal such as ``1/2-3i``."""
    m = _COMPLEX.match(text)
    if not m:
        raise ParseError(f"bad coefficient literal {text!r}")

    def frac(s):
        if s in ("", "+"):
            return Fraction(1)
        if s == "-":
            return Fraction(-1)
        return Fraction(s)

    if m["only_re"] is not None:
        return Fraction(m["only_re"]), Fraction(0)
    if m["only_im"] is not None:
        return Fraction(0), frac(m["only_im"])
    return Fraction(m["re"]), frac(m["im"])


def _to_complex(pair):
    return complex(float(pair[0]), float(pair[1]))


def _blocks(text):
    block = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if block:
                yield block
                block = []
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        block.append((lineno, key, value))
    if block:
        yield block


def parse_catalog(text):
    """Return ``(maps, discs)`` dictionaries of raw parsed entries keyed by name."""
    maps, discs = {}, {}
    for block in _blocks(text):
        entry = {}
        for lineno, key, value in block:
            if key in entry:
                raise ParseError(f"line {lineno}: duplicate key {key!r}")
            entry[key] = value
        first = block[0][1]
        where = f"block at line {block[0][0]}"
        try:
            if first == "name":
                maps[entry["name"]] = _parse_map_entry(entry, where)
            elif first == "disc":
                discs[entry["disc"]] = _parse_disc_entry(entry, where)
            else:
                raise ParseError(f"{where}: block must start with 'name' or 'disc'")
        except KeyError as exc:
            raise ParseError(f"{where}: missing key {exc.args[0]!r}") from None
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"{where}: {exc}") from None
    return maps, discs


def _parse_map_entry(entry, where):
    k = int(entry["k"])
    d = int(entry["d"])
    comps = []
    for i in range(k + 1):
        key = f"component_{i}"
        if key not in entry:
            raise ParseError(f"{where}: missing {key}")
        poly = {}
        for term in entry[key].split(";"):
            if ":" not in term:
                raise ParseError(f"{where}: term {term.strip()!r} lacks 'multi-index:coefficient'")
            idx, coef = term.split(":", 1)
            try:
                alpha = tuple(int(a) for a in idx.split(","))
            except ValueError:
                raise ParseError(f"{where}: bad multi-index {idx.strip()!r}") from None
            if alpha in poly:
                raise ParseError(f"{where}: repeated monomial {alpha}")
            poly[alpha] = parse_coefficient(coef)
        comps.append(poly)
    extra = [key for key in entry if key.startswith("component_")
             and key not in {f"component_{i}" for i in range(k + 1)}]
    if extra:
        raise ParseError(f"{where}: unexpected {extra}")
    return {"name": entry["name"], "k": k, "d": d,
            "family": entry.get("family", "rational_k1" if k == 1 else "general"),
            "components": comps}


def _parse_disc_entry(entry, where):
    k = int(entry["k"])
    coeffs = []
    j = 0
    while f"coeff_{j}" in entry:
        vec = [parse_coefficient(s) for s in entry[f"coeff_{j}"].split(",")]
        if len(vec) != k + 1:
            raise ParseError(f"{where}: coeff_{j} needs {k + 1} entries")
        coeffs.append(vec)
        j += 1
    if not coeffs:
        raise ParseError(f"{where}: disc has no coefficients")
    return {"name": entry["disc"], "k": k, "radius": float(Fraction(entry.get("radius", "2"))),
            "coeffs": coeffs}


def read_catalog(path=None):
    path = default_catalog_path() if path is None else Path(path)
    return parse_catalog(path.read_text())


def build_map(entry, rng=None) -> ProjectiveMap:
    """Validated :class:`ProjectiveMap` from a parsed catalog entry."""
    comps = tuple({m: _to_complex(c) for m, c in poly.items()} for poly in entry["components"])
    f = ProjectiveMap(comps, entry["d"], entry["k"], entry["family"], entry["name"],
                      exact=tuple(entry["components"]))
    _check_family(f)
    rng = np.random.default_rng(0) if rng is None else rng
    if has_common_zero(f, rng):
        raise InvalidMap(f"{f.name}: components share a common zero")
    return f


def _check_family(f):
    if f.family == "rational_k1" and f.k != 1:
        raise InvalidMap("rational_k1 requires k = 1")
    if f.family in ("skew_product_k2", "product_k2"):
        if f.k != 2:
            raise InvalidMap(f"{f.family} requires k = 2")
        for i in (0, 2):
            if not f.depends_only_on(i, (0, 2)):
                raise InvalidMap(f"{f.name}: P_{i} must depend on z_0, z_2 only")
        if abs(f.components[1].get((0, f.d, 0), 0)) == 0:
            raise InvalidMap(f"{f.name}: fiber component lacks the z_1^d term")
    if f.family == "product_k2" and not f.depends_only_on(1, (1, 2)):
        raise InvalidMap(f"{f.name}: product maps need P_1 to depend on z_1, z_2 only")


def load_map(name, catalog_path=None) -> ProjectiveMap:
    maps, _ = read_catalog(catalog_path)
    if name not in maps:
        raise KeyError(f"map {name!r} not in catalog")
    return build_map(maps[name])


def load_discs(k=None, catalog_path=None):
    """Catalog discs as :class:`~cpkdim.volume.PolydiscMap` objects."""
    from .volume import PolydiscMap

    _, discs = read_catalog(catalog_path)
    out = []
    for entry in discs.values():
        if k is not None and entry["k"] != k:
            continue
        coeffs = np.array([[_to_complex(c) for c in vec] for vec in entry["coeffs"]])
        out.append(PolydiscMap(coeffs, entry["radius"], name=entry["name"]))
    return out
