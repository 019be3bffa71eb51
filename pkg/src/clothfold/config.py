"""INI-style configuration for episodes and benchmark suites.

Every section is optional and every key overrides a built-in default::

    [episode]
    policy = AdaFold
    seed = 3
    T = 12
    pick = 0.0, 0.1, 0.0

    [cloth]
    stiffness = 60
    elasticity = 40

    [planner]
    horizon = 12

    [sim]
    damping = 0.02

    [adaptation]
    stiffness = 20, 40, 60, 80, 100

    [suite]
    policies = AdaFold, Triangular
    seeds = 0-19
    cloths = default

Unknown sections or keys are rejected so that typos do not silently fall back
to defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from pathlib import Path

from .errors import InvalidArgument
from .harness import EpisodeConfig, SuiteConfig

OUTPUT_DIR_ENV = "CLOTHFOLD_OUTPUT_DIR"

_EPISODE_KEYS = ("policy", "seed", "T", "side_length", "resolution", "pose", "pick", "place",
                 "history", "predict_steps", "subdivisions", "voxel", "cell")


def output_dir(cli_value=None, default="out"):
    """CLI flag first, then the environment variable, then ``default``."""
    return Path(cli_value or os.environ.get(OUTPUT_DIR_ENV) or default)


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _seeds(text):
    """``0-19`` or ``1, 4, 7`` (ranges inclusive)."""
    out = []
    for part in text.replace(",", " ").split():
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _coerce(value, default, key):
    if isinstance(default, bool):
        low = value.strip().lower()
        if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise InvalidArgument(f"{key}: expected a boolean, got {value!r}")
        return low in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return _floats(value)
    if default is None:
        text = value.strip()
        if text.lower() in ("", "none", "default"):
            return None
        values = _floats(text)
        return values[0] if len(values) == 1 else values
    return value.strip()


def _apply(obj, section, keys=None):
    fields = {f.name: f for f in dataclasses.fields(obj)}
    allowed = keys if keys is not None else tuple(fields)
    changes = {}
    for key, value in section.items():
        if key not in allowed:
            raise InvalidArgument(f"unknown key {key!r} in [{section.name}]")
        try:
            changes[key] = _coerce(value, getattr(obj, key), f"{section.name}.{key}")
        except ValueError as exc:
            raise InvalidArgument(f"[{section.name}] {key} = {value!r}: {exc}") from exc
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise InvalidArgument(f"[{section.name}]: {exc}") from exc


def _parser(text):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep "T" distinct from "t"
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidArgument(f"malformed config: {exc}") from exc
    return cp


def _episode_from(cp):
    cfg = EpisodeConfig()
    if cp.has_section("episode"):
        cfg = _apply(cfg, cp["episode"], _EPISODE_KEYS)
    if cp.has_section("cloth"):
        cfg = dataclasses.replace(cfg, params=_apply(cfg.params, cp["cloth"]))
    if cp.has_section("planner"):
        cfg = dataclasses.replace(cfg, planner=_apply(cfg.planner, cp["planner"]))
    if cp.has_section("sim"):
        cfg = dataclasses.replace(cfg, sim=_apply(cfg.sim, cp["sim"]))
    if cp.has_section("adaptation"):
        cfg = dataclasses.replace(cfg, grid=_apply(cfg.grid, cp["adaptation"]))
    return dataclasses.replace(cfg)  # re-run validation on the combined config


_KNOWN = {"episode", "cloth", "planner", "sim", "adaptation"}


def _check_sections(cp, extra=()):
    unknown = set(cp.sections()) - _KNOWN - set(extra)
    if unknown:
        raise InvalidArgument(f"unknown section(s): {', '.join(sorted(unknown))}")


def parse_episode_config(text):
    cp = _parser(text)
    _check_sections(cp)
    return _episode_from(cp)


def parse_suite_config(text):
    cp = _parser(text)
    _check_sections(cp, ("suite",))
    suite = SuiteConfig(base=_episode_from(cp))
    if not cp.has_section("suite"):
        return suite
    sec = cp["suite"]
    changes = {}
    for key, value in sec.items():
        if key == "policies":
            changes[key] = tuple(p.strip() for p in value.replace(",", " ").split())
        elif key in ("seeds", "horizons"):
            changes[key] = _seeds(value)
        elif key in ("cloths",):
            changes[key] = value.strip()
        elif key in ("n_cloths", "cloth_seed", "workers"):
            changes[key] = int(value)
        elif key == "include_failed":
            changes[key] = _coerce(value, False, "suite.include_failed")
        else:
            raise InvalidArgument(f"unknown key {key!r} in [suite]")
    return dataclasses.replace(suite, **changes)


def load_episode_config(path):
    return parse_episode_config(Path(path).read_text())


def load_suite_config(path):
    return parse_suite_config(Path(path).read_text())

