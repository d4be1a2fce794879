"""Run configuration: INI-style ``key = value`` text with optional sections.

Grammar
-------
* ``# ...`` and ``; ...`` start comments (also inline).
* Keys may appear before any section header or inside ``[model]``,
  ``[experiment]`` or ``[output]``.  Each key may appear only once in the
  whole file, whatever the section.
* Lists are comma separated.  ``theta`` takes a list of radians or the word
  ``uniform``; ``L`` takes an integer or ``auto``.

Mandatory keys are ``family`` and ``theta`` plus the parameter of the
family (``rho`` for geometric, ``alpha`` for power, ``coefficients`` for
finite).
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace

from .model import CoefficientFamily, InnovationDistribution, DEFAULT_EFFECTIVE_LENGTH

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config"]

_ROOT = "__root__"

_SECTION_KEYS = {
    "model": {"family", "rho", "alpha", "coefficients", "effective_length", "innovation", "L"},
    "experiment": {"theta", "n", "m", "G", "R", "r_list", "N_list", "time_grid", "master_seed",
                   "significance", "conditions_terms", "decompose_tuples", "decay_replicates"},
    "output": {"directory"},
}
_ALL_KEYS = set().union(*_SECTION_KEYS.values())


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    family: CoefficientFamily
    innovation: InnovationDistribution = field(default_factory=InnovationDistribution)
    thetas: tuple | str = (math.pi / 2,)
    n: int = 4096
    m: float = 1.0
    G: int | None = None
    L: int | None = None
    R: int = 2000
    r_list: tuple = (1, 2, 4, 8, 16)
    N_list: tuple = (256, 1024, 2048)
    time_grid: tuple = (0.5, 1.0)
    master_seed: int = 0
    significance: float = 0.01
    conditions_terms: int = 64
    decompose_tuples: int = 200
    decay_replicates: int = 400
    output_dir: str = "qdftlab_out"

    @property
    def uniform(self) -> bool:
        return self.thetas == "uniform"

    def with_overrides(self, seed=None, out=None, replicates=None) -> "RunConfig":
        kw = {}
        if seed is not None:
            kw["master_seed"] = int(seed)
        if out is not None:
            kw["output_dir"] = str(out)
        if replicates is not None:
            if int(replicates) < 1:
                raise ConfigError("must be a positive integer", "R")
            kw["R"] = int(replicates)
        return replace(self, **kw)

    def echo(self) -> dict:
        return {
            "family": self.family.to_dict(),
            "innovation": self.innovation.kind,
            "theta": "uniform" if self.uniform else list(self.thetas),
            "n": self.n,
            "m": self.m,
            "G": self.G if self.G is not None else "auto",
            "L": self.L if self.L is not None else "auto",
            "R": self.R,
            "r_list": list(self.r_list),
            "N_list": list(self.N_list),
            "time_grid": list(self.time_grid),
            "master_seed": self.master_seed,
            "significance": self.significance,
            "conditions_terms": self.conditions_terms,
            "decompose_tuples": self.decompose_tuples,
            "decay_replicates": self.decay_replicates,
            "output_dir": self.output_dir,
        }


_KEY_RE = re.compile(r"^\s*([^\s=:#;\[]+)\s*[=:]")
_SECTION_RE = re.compile(r"^\s*\[([^\]]*)\]")


def _key_lines(text: str) -> dict:
    """Map each key to the (1-based) line where it is first defined."""
    lines = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        if _SECTION_RE.match(raw):
            continue
        m = _KEY_RE.match(raw)
        if m and m.group(1) not in lines:
            lines[m.group(1)] = no
    return lines


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration; raises :class:`ConfigError`."""
    parser = configparser.ConfigParser(strict=True, interpolation=None,
                                       inline_comment_prefixes=("#", ";"),
                                       default_section="__defaults_unused__")
    parser.optionxform = str
    try:
        parser.read_string(f"[{_ROOT}]\n" + text)
    except configparser.DuplicateOptionError as e:
        raise ConfigError("duplicate key", e.option, (e.lineno or 1) - 1) from None
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"duplicate section [{e.section}]", None, (e.lineno or 1) - 1) from None
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None

    lines = _key_lines(text)
    raw: dict[str, str] = {}
    for section in parser.sections():
        if section != _ROOT and section not in _SECTION_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = _ALL_KEYS if section == _ROOT else _SECTION_KEYS[section]
        for key, value in parser.items(section):
            if key not in allowed:
                where = "" if section == _ROOT else f" in [{section}]"
                raise ConfigError(f"unknown key{where}", key, lines.get(key))
            if key in raw:
                raise ConfigError("duplicate key", key, lines.get(key))
            raw[key] = value.strip()
    return _build(raw, lines)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _build(raw: dict, lines: dict) -> RunConfig:
    def err(key, msg):
        return ConfigError(msg, key, lines.get(key))

    def need(key):
        if key not in raw or raw[key] == "":
            raise ConfigError("missing mandatory key", key)
        return raw[key]

    def num(key, conv, default=None):
        if key not in raw:
            return default
        try:
            return conv(raw[key])
        except ValueError:
            raise err(key, f"malformed number {raw[key]!r}") from None

    def numlist(key, conv, default):
        if key not in raw:
            return default
        try:
            vals = tuple(conv(v) for v in raw[key].split(",") if v.strip())
        except ValueError:
            raise err(key, f"malformed number list {raw[key]!r}") from None
        if not vals:
            raise err(key, "empty list")
        return vals

    def increasing(key, vals):
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise err(key, "values must be strictly increasing")
        return vals

    kind = need("family")
    eff = num("effective_length", int, DEFAULT_EFFECTIVE_LENGTH)
    if eff < 1:
        raise err("effective_length", "must be a positive integer")
    if kind == "geometric":
        rho = num("rho", float)
        if rho is None:
            raise ConfigError("missing mandatory key", "rho")
        if not 0.0 < rho < 1.0:
            raise err("rho", "geometric ratio must be in (0,1)")
        family = CoefficientFamily.geometric(rho, eff)
    elif kind == "harmonic":
        family = CoefficientFamily.harmonic(eff)
    elif kind == "power":
        alpha = num("alpha", float)
        if alpha is None:
            raise ConfigError("missing mandatory key", "alpha")
        if not alpha > 0.5:
            raise err("alpha", "power exponent must exceed 1/2")
        family = CoefficientFamily.power(alpha, eff)
    elif kind == "finite":
        if "coefficients" not in raw:
            raise ConfigError("missing mandatory key", "coefficients")
        family = CoefficientFamily.finite(numlist("coefficients", float, ()) if raw["coefficients"] else ())
    else:
        raise err("family", f"unknown family {kind!r} (geometric, harmonic, power, finite)")

    try:
        innov = InnovationDistribution(raw.get("innovation", "standard_normal"))
    except ValueError as e:
        raise err("innovation", str(e)) from None

    theta_raw = need("theta")
    if theta_raw.lower() == "uniform":
        thetas = "uniform"
    else:
        thetas = numlist("theta", float, None)
        for th in thetas:
            if not 0.0 <= th < 2.0 * math.pi:
                raise err("theta", "frequencies must lie in [0, 2*pi)")

    n = num("n", int, 4096)
    if n < 16:
        raise err("n", "must be at least 16")
    m = num("m", float, 1.0)
    if not m > 0:
        raise err("m", "must be positive")
    G = num("G", int, None)
    if G is not None and G < 1:
        raise err("G", "grid size must be positive")
    if "L" in raw and raw["L"].lower() == "auto":
        L = None
    else:
        L = num("L", int, None)
        if L is not None and L < 1:
            raise err("L", "past depth must be at least 1")
    R = num("R", int, 2000)
    if R < 1:
        raise err("R", "must be a positive integer")
    r_list = increasing("r_list", numlist("r_list", int, (1, 2, 4, 8, 16)))
    if r_list[0] < 0:
        raise err("r_list", "values must be nonnegative")
    N_list = increasing("N_list", numlist("N_list", int, (256, 1024, 2048)))
    if N_list[0] < 1:
        raise err("N_list", "values must be positive")
    grid = increasing("time_grid", numlist("time_grid", float, (0.5, 1.0)))
    if grid[0] <= 0 or grid[-1] > m:
        raise err("time_grid", "values must lie in (0, m]")
    seed = num("master_seed", int, 0)
    if not 0 <= seed < 2 ** 64:
        raise err("master_seed", "must be a 64-bit unsigned integer")
    sig = num("significance", float, 0.01)
    if not 0.0 < sig < 1.0:
        raise err("significance", "must be in (0,1)")
    cterms = num("conditions_terms", int, 64)
    if cterms < 1:
        raise err("conditions_terms", "must be positive")
    dtuples = num("decompose_tuples", int, 200)
    if dtuples < 1:
        raise err("decompose_tuples", "must be positive")
    drep = num("decay_replicates", int, 400)
    if drep < 2:
        raise err("decay_replicates", "must be at least 2")
    out = raw.get("directory", "qdftlab_out")
    return RunConfig(family, innov, thetas, n, m, G, L, R, r_list, N_list, grid, seed, sig,
                     cterms, dtuples, drep, out)
