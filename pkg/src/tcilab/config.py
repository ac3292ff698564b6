"""Experiment configuration: file parsing, validation, canonical snapshots.

Config files are line-oriented ``key = value`` under ``[section]`` headers
(UTF-8).  Command-line overrides use dotted flags (``--grid.nx 401``) and win
over file values.  Every key is schema-checked: unknown keys are rejected by
name together with the allowed set, and range violations cite the range, so a
bad config dies loudly before any simulation starts.

render() emits the canonical snapshot: every effective value, fixed section
and key order, floats as their shortest round-tripping decimal.  Parsing a
snapshot reproduces the config bit-for-bit, so a run can always be replayed
from its own artifact directory.  Execution-only keys (worker count, output
root) are omitted from the snapshot: they control how a run executes, not
what it computes, and artifacts must not depend on them.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .domain import GridSpec, WeightedMetricParams
from .errors import InvalidInputError
from .presets import (
    COEFFICIENT_PRESETS,
    INITIAL_PRESETS,
    SHIFT_PRESETS,
    coefficient_preset,
    initial_preset,
    shift_preset,
)

OUTPUT_ROOT_ENV = "TCILAB_OUT"

# name -> (section, key, converter, validator, default).  Converters turn the
# raw string into a value; validators raise with the admissible range spelled
# out.  Attribute names are section_key except for the [grid] shorthands.
_SENTINEL = object()


def _parse_float(raw: str) -> float:
    try:
        return float(Fraction(raw.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidInputError(f"not a number: {raw!r}") from exc


def _parse_int(raw: str) -> int:
    try:
        return int(raw.strip())
    except ValueError as exc:
        raise InvalidInputError(f"not an integer: {raw!r}") from exc


def _parse_float_list(raw: str) -> tuple:
    items = [s for s in (part.strip() for part in raw.split(",")) if s]
    if not items:
        raise InvalidInputError("empty list")
    return tuple(_parse_float(s) for s in items)


def _parse_str(raw: str) -> str:
    return raw.strip()


def _positive(name):
    def check(v):
        if not (math.isfinite(v) and v > 0):
            raise InvalidInputError(f"{name} must be finite and positive, got {v}")
    return check


def _odd_positive_int(name):
    def check(v):
        if v < 1 or v % 2 == 0:
            raise InvalidInputError(f"{name} must be a positive odd integer, got {v}")
    return check


def _int_at_least(name, lo):
    def check(v):
        if v < lo:
            raise InvalidInputError(f"{name} must be an integer >= {lo}, got {v}")
    return check


def _nonnegative(name):
    def check(v):
        if not (math.isfinite(v) and v >= 0):
            raise InvalidInputError(f"{name} must be finite and >= 0, got {v}")
    return check


def _choice(name, choices):
    def check(v):
        if v not in choices:
            raise InvalidInputError(f"{name} must be one of {sorted(choices)}, got {v!r}")
    return check


def _alpha_range(v):
    if not (0.0 < v < 0.125):
        raise InvalidInputError(f"alpha = {v} outside the admissible range (0, 1/8)")


def _positive_list(name):
    def check(v):
        if any(not (math.isfinite(x) and x > 0) for x in v):
            raise InvalidInputError(f"every entry of {name} must be finite and positive, got {v}")
    return check


# section -> key -> (converter, validator, default)
SCHEMA = {
    "grid": {
        "L": (_parse_float, _positive("L"), 10.0),
        "nx": (_parse_int, _odd_positive_int("nx"), 401),
        "T": (_parse_float, _positive("T"), 1.0),
        "nt": (_parse_int, _int_at_least("nt", 1), 400),
    },
    "metric": {
        "n_max": (_parse_int, _int_at_least("n_max", 1), 8),
        "lam_list": (
            _parse_float_list,
            _positive_list("lam_list"),
            (1.0, 0.5, 1.0 / 3.0, 0.25, 0.125),
        ),
    },
    "coefficients": {
        "preset": (_parse_str, _choice("coefficients.preset", COEFFICIENT_PRESETS),
                   "saturating_cosine"),
        "lip_b": (_parse_float, _positive("lip_b"), 1.0),
        "lip_sigma": (_parse_float, _positive("lip_sigma"), 1.0),
        "sup_sigma": (_parse_float, _positive("sup_sigma"), 1.0),
    },
    "shift": {
        "preset": (_parse_str, _choice("shift.preset", SHIFT_PRESETS), "gaussian_bump"),
        "amplitude": (_parse_float, _nonnegative("shift.amplitude"), 0.25),
        "width": (_parse_float, _positive("shift.width"), 1.0),
        "t0": (_parse_float, _nonnegative("shift.t0"), 0.0),
        "t1": (_parse_float, _positive("shift.t1"), 1e9),
    },
    "u0": {
        "preset": (_parse_str, _choice("u0.preset", INITIAL_PRESETS), "zero"),
        "amplitude": (_parse_float, lambda v: None, 1.0),
        "width": (_parse_float, _positive("u0.width"), 2.0),
    },
    "run": {
        "replicas": (_parse_int, _int_at_least("replicas", 2), 256),
        "seed": (_parse_int, _int_at_least("seed", 0), 42),
        "workers": (_parse_int, _int_at_least("workers", 1), 1),
        "bootstrap": (_parse_int, _int_at_least("bootstrap", 200), 400),
        "output_root": (_parse_str, lambda v: None, ""),
        "tail_tol": (_parse_float, _positive("tail_tol"), 1.0),
        "quad_tol": (_parse_float, _positive("quad_tol"), 1e-9),
    },
    "moments": {
        "p_l2": (_parse_float_list, _positive_list("p_l2"), (2.0, 10.0)),
        "p_sup": (_parse_float_list, _positive_list("p_sup"), (2.0, 12.0)),
        "lam": (_parse_float, _positive("moments.lam"), 0.125),
        "space_factor": (_parse_int, _odd_positive_int("space_factor"), 3),
        "time_factor": (_parse_int, _int_at_least("time_factor", 1), 9),
        "refinements": (_parse_int, _int_at_least("refinements", 1), 1),
        "replicas": (_parse_int, _int_at_least("moments.replicas", 2), 2048),
    },
    "convolution": {
        "alpha": (_parse_float, _alpha_range, 0.1),
        "method": (_parse_str, _choice("convolution.method", ("auto", "direct", "fft")),
                   "auto"),
    },
    "tci": {
        "amplitudes": (_parse_float_list, _positive_list("tci.amplitudes"), (0.5, 1.0, 2.0)),
    },
    "lipschitz": {
        # scales sit in the unsaturated regime of the composite metric: the
        # min(1, .) truncation is only scale-homogeneous below saturation
        "scales": (_parse_float_list, _positive_list("lipschitz.scales"),
                   (0.0625, 0.125, 0.25)),
        "width": (_parse_float, _positive("lipschitz.width"), 1.0),
    },
}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)  # shortest string that parses back to the same double
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


# how a run executes, not what it computes; kept out of snapshots so reruns
# at any parallelism degree produce byte-identical artifacts
EXECUTION_KEYS = frozenset({("run", "workers"), ("run", "output_root")})


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated effective values for one experiment invocation.

    provided records which dotted keys were set explicitly (file or flag)
    rather than filled from defaults; commands with specialized default
    grids consult it before substituting their own.
    """

    values: dict = field(default_factory=dict)
    provided: frozenset = frozenset()

    def __getitem__(self, dotted: str):
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    def grid(self) -> GridSpec:
        g = self.values["grid"]
        return GridSpec(L=g["L"], nx=g["nx"], T=g["T"], nt=g["nt"])

    def metric_params(self) -> WeightedMetricParams:
        m = self.values["metric"]
        return WeightedMetricParams(lam=max(m["lam_list"]), n_max=m["n_max"])

    def lam_list(self) -> tuple:
        return self.values["metric"]["lam_list"]

    def coefficients(self):
        c = self.values["coefficients"]
        return coefficient_preset(
            c["preset"], lip_b=c["lip_b"], lip_sigma=c["lip_sigma"], sup_sigma=c["sup_sigma"]
        )

    def shift(self):
        s = self.values["shift"]
        t1 = min(s["t1"], self.values["grid"]["T"])
        return shift_preset(
            s["preset"], amplitude=s["amplitude"], width=s["width"], t0=s["t0"], t1=t1
        )

    def initial_field(self, grid: Optional[GridSpec] = None):
        u = self.values["u0"]
        return initial_preset(
            u["preset"], grid if grid is not None else self.grid(),
            amplitude=u["amplitude"], width=u["width"],
        )

    def output_root(self) -> str:
        configured = self.values["run"]["output_root"]
        if configured:
            return configured
        return os.environ.get(OUTPUT_ROOT_ENV, "runs")

    def render(self) -> str:
        """Canonical snapshot: effective values in fixed order, sans execution keys."""
        lines = []
        for section in SCHEMA:
            keys = [k for k in SCHEMA[section] if (section, k) not in EXECUTION_KEYS]
            if not keys:
                continue
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_fmt(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)


def parse_override_args(args: Sequence[str]) -> list:
    """Turn ``--grid.nx 401`` / ``--grid.nx=401`` pairs into (section, key, raw)."""
    out = []
    i = 0
    while i < len(args):
        tok = args[i]
        if not tok.startswith("--") or "." not in tok:
            raise InvalidInputError(
                f"override {tok!r} is not of the form --section.key value"
            )
        body = tok[2:]
        if "=" in body:
            dotted, raw = body.split("=", 1)
            i += 1
        else:
            dotted = body
            if i + 1 >= len(args):
                raise InvalidInputError(f"override {tok!r} is missing a value")
            raw = args[i + 1]
            i += 2
        section, key = dotted.split(".", 1)
        out.append((section, key, raw))
    return out


def _reject_unknown(section: str, key: Optional[str] = None):
    if section not in SCHEMA:
        raise InvalidInputError(
            f"unknown section [{section}]; allowed sections: {sorted(SCHEMA)}"
        )
    if key is not None and key not in SCHEMA[section]:
        raise InvalidInputError(
            f"unknown key {key!r} in [{section}]; allowed keys: {sorted(SCHEMA[section])}"
        )


def parse_config(
    path: Optional[str] = None, overrides: Sequence[tuple] = ()
) -> ExperimentConfig:
    """Defaults <- config file <- dotted-flag overrides, fully validated."""
    values = {s: {k: spec[2] for k, spec in keys.items()} for s, keys in SCHEMA.items()}

    raw_items = []
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keys are case-sensitive, L vs l matters
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise InvalidInputError(f"config file {path}: {exc}") from exc
        for section in parser.sections():
            _reject_unknown(section)
            for key, raw in parser.items(section):
                raw_items.append((section, key, raw))
    for section, key, raw in overrides:
        raw_items.append((section, key, raw))

    provided = set()
    for section, key, raw in raw_items:
        _reject_unknown(section, key)
        convert, validate, _ = SCHEMA[section][key]
        try:
            value = convert(raw)
            validate(value)
        except InvalidInputError as exc:
            raise InvalidInputError(f"[{section}] {key}: {exc}") from exc
        values[section][key] = value
        provided.add(f"{section}.{key}")

    cfg = ExperimentConfig(values=values, provided=frozenset(provided))
    cfg.grid()            # re-run GridSpec invariants on the combined values
    cfg.metric_params()
    if values["shift"]["t1"] <= values["shift"]["t0"]:
        raise InvalidInputError(
            f"[shift] t1 = {values['shift']['t1']} must exceed t0 = {values['shift']['t0']}"
        )
    return cfg
