"""Experiment specifications and the sectioned key-value config format.

One section per experiment; the section name is the experiment id and the
``kind`` key selects the experiment. Every other key must be a parameter of
that kind. Lists are comma separated.

    [growth-c2]
    kind = a2-growth
    N = 8, 16, 32, 64
"""

import configparser
import math
import re
from dataclasses import dataclass, field

from .errors import UsageError

FLOAT, INT, FLOATS, INTS, STR, BOOL = "float", "int", "floats", "ints", "str", "bool"

_SOLVER = {
    "n": (INT, 256), "length": (FLOAT, 16.0 * math.pi), "dt": (FLOAT, 1e-5),
    "T": (FLOAT, 0.01), "modes": (INT, 24), "amplitude": (FLOAT, 0.9),
}

#: kind -> {parameter: (type, default)}; a default of None marks a required key
KINDS = {
    "solve": {**_SOLVER, "alpha": (FLOAT, 5.0), "c1": (FLOAT, math.nan),
              "c2": (FLOAT, math.nan), "c3": (FLOAT, math.nan), "monitor_a": (FLOAT, -0.5),
              "save_every": (INT, 10), "seed": (INT, None)},
    "a2-growth": {"s": (FLOAT, 0.0), "a": (FLOAT, 0.0), "N": (INTS, (8, 16, 32, 64)),
                  "t": (FLOAT, 0.5), "c2": (FLOAT, 1.0), "c3": (FLOAT, 2.0),
                  "symmetric": (BOOL, False), "min_slope": (FLOAT, 0.9)},
    "a2-inflation": {"s": (FLOAT, 0.0), "a": (FLOAT, -1.0), "delta": (FLOAT, 0.1),
                     "N": (INTS, (8, 16, 32, 64)), "t": (FLOAT, 0.5), "c2": (FLOAT, 1.0),
                     "c3": (FLOAT, 2.0), "data_shift": (FLOAT, -0.5), "floor": (FLOAT, 0.1),
                     "max_data_slope": (FLOAT, -0.4), "rate": (FLOAT, -0.5),
                     "rate_tol": (FLOAT, 0.15)},
    "psi-growth": {"s": (FLOAT, -0.5), "a": (FLOAT, -0.5), "N": (INTS, (8, 16, 32, 64)),
                   "t": (FLOAT, 0.5), "c2": (FLOAT, 1.0), "c3": (FLOAT, 2.0),
                   "margin": (FLOAT, 0.15), "min_slope": (FLOAT, math.nan)},
    "a3-growth": {"s": (FLOAT, -0.5), "a": (FLOAT, -0.5), "N": (INTS, (8, 16, 32, 64)),
                  "t": (FLOAT, 0.5), "c1": (FLOAT, 1.0), "c2": (FLOAT, 1.0), "c3": (FLOAT, 2.0),
                  "tol": (FLOAT, 1e-5), "slope_lo": (FLOAT, 0.35), "slope_hi": (FLOAT, 0.65)},
    "be3-sweep": {"example": (STR, "2"), "s": (FLOAT, -0.25), "a": (FLOAT, -0.5),
                  "b": (FLOATS, (0.4, 0.5, 0.6, 0.7, 0.8)),
                  "N": (INTS, (8, 16, 32, 64, 128)), "target": (FLOAT, math.nan),
                  "window": (FLOAT, 0.05)},
    "appendix-conv": {"examples": (STR, "1,2,3a,3b"), "N": (INTS, (8, 16, 32, 64, 128)),
                      "c_min": (FLOAT, 0.5), "grid_N": (INTS, (8, 16)), "cells": (INT, 16),
                      "max_dev": (FLOAT, 0.05)},
    "measure-check": {"lemma": (STR, "m"), "count": (INT, 100), "resolution": (INT, 256),
                      "stability": (FLOAT, 0.1), "seed": (INT, None)},
    "multiplier-check": {"instances": (INT, 20), "n_max": (INT, 16), "k": (INT, 2),
                         "restarts": (INT, 20), "gap_tol": (FLOAT, 0.05), "seed": (INT, None)},
    "conservation": {**_SOLVER, "amplitude": (FLOAT, 0.8), "alpha": (FLOAT, 5.0),
                     "l2_budget": (FLOAT, 1e-8), "h1_budget": (FLOAT, 1e-6),
                     "foil_min": (FLOAT, 1e-2)},
    "apriori": {**_SOLVER, "alpha": (FLOAT, 5.0), "a": (FLOAT, -0.5), "members": (INT, 10),
                "stability": (FLOAT, 0.1), "seed": (INT, None)},
    "scaling": {"s": (FLOAT, 0.0), "a": (FLOAT, -0.5), "lambdas": (FLOATS, (1, 2, 4, 8)),
                "members": (INT, 10), "n": (INT, 256), "length": (FLOAT, 2.0 * math.pi),
                "modes": (INT, 8), "seed": (INT, None)},
}


@dataclass(frozen=True)
class ExperimentSpec:
    id: str
    kind: str
    params: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]


def _convert(kind, key, raw, where=""):
    typ = KINDS[kind][key][0]
    text = str(raw).strip()
    try:
        if typ == FLOAT:
            return float(text)
        if typ == INT:
            return int(text)
        if typ == FLOATS:
            return tuple(float(v) for v in text.split(",") if v.strip())
        if typ == INTS:
            return tuple(int(v) for v in text.split(",") if v.strip())
        if typ == BOOL:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return text
    except ValueError:
        raise UsageError(f"{where}{key}: cannot read {text!r} as {typ}") from None


def make_spec(exp_id, kind, values=None, where=""):
    """Validate ``values`` (strings or already typed) against the kind's schema."""
    if kind not in KINDS:
        raise UsageError(f"{where}unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    values = dict(values or {})
    schema = KINDS[kind]
    params = {}
    for key, raw in values.items():
        if key not in schema:
            raise UsageError(f"{where}unknown key {key!r} for kind {kind}")
        params[key] = raw if not isinstance(raw, str) else _convert(kind, key, raw, where)
    for key, (_, default) in schema.items():
        if key not in params:
            if default is None:
                raise UsageError(f"{where}kind {kind} needs {key!r}")
            params[key] = default
    return ExperimentSpec(exp_id, kind, params)


def _line_numbers(text):
    """Map (section, key) -> line number by scanning the raw file."""
    out, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([^#;=:\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip().lower()), no)
    return out


def parse_config(text, source="<config>"):
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       default_section="__no_defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.DuplicateSectionError as exc:
        raise UsageError(f"{source}:{exc.lineno}: duplicate experiment id {exc.section!r}") from None
    except configparser.DuplicateOptionError as exc:
        raise UsageError(f"{source}:{exc.lineno}: duplicate key {exc.option!r}") from None
    except configparser.MissingSectionHeaderError as exc:
        raise UsageError(f"{source}:{exc.lineno}: key outside any [experiment] section") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise UsageError(f"{source}:{lineno}: cannot parse line") from None
    lines = {(s, k.lower()): n for (s, k), n in _line_numbers(text).items()}
    specs = []
    for sec in parser.sections():
        items = dict(parser.items(sec))
        kind = items.pop("kind", None)
        header = next((n for n, ln in enumerate(text.splitlines(), 1)
                       if re.match(rf"\s*\[\s*{re.escape(sec)}\s*\]", ln)), "?")
        if kind is None:
            raise UsageError(f"{source}:{header}: experiment {sec!r} has no kind")
        for key in items:
            if key not in KINDS.get(kind, {}):
                where = f"{source}:{lines.get((sec, key.lower()), header)}: "
                if kind not in KINDS:
                    break
                raise UsageError(f"{where}unknown key {key!r} for kind {kind}")
        specs.append(make_spec(sec, kind, items, f"{source}:{header}: "))
    return specs


def load_config(path):
    """Read a config file into a list of ExperimentSpec (empty file -> [])."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
