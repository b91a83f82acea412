"""``key = value`` run configuration with dotted section prefixes.

Example file::

    # detector settings
    detector.w = 0.9
    detector.target_points = 24
    descriptor.radii = 5 10 15
    matcher.ratio_threshold = 0.8

The same keys are accepted on the command line as ``--detector-w 0.9`` or
``--descriptor-radii "5 10 15"``; command-line values override the file.
"""

from __future__ import annotations

import os
from dataclasses import replace
from typing import Callable, Mapping

from .detector import DetectorConfig
from .matching import MatcherConfig
from .pipeline import PipelineConfig
from .range_image import GridSpec
from .registration import IcpParams
from .suld import DescriptorConfig


def _optional(parse: Callable[[str], object]) -> Callable[[str], object]:
    def inner(s: str):
        return None if s.strip().lower() in ("none", "auto", "") else parse(s)

    return inner


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(",", " ").split())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# section -> key -> parser
KEYS: dict[str, dict[str, Callable[[str], object]]] = {
    "grid": {
        "width": int,
        "height": int,
        "margin": float,
        "x_range": _optional(_floats),
        "y_range": _optional(_floats),
    },
    "crop": {"a": float, "b": float},
    "icp": {
        "max_iterations": int,
        "convergence_eps": _optional(float),
        "max_correspondence_dist": float,
        "accelerate": _bool,
    },
    "detector": {
        "w": float,
        "octaves": int,
        "levels_per_octave": int,
        "base_filter_size": int,
        "response_threshold": _optional(float),
        "target_points": int,
    },
    "descriptor": {
        "h": int,
        "N": int,
        "radii": _floats,
        "sigmas": _floats,
        "epsilon_norm": float,
        "scale_adaptive": _bool,
    },
    "matcher": {"ratio_threshold": float, "mutual": _bool},
}


def canonical_key(name: str) -> str:
    """Map ``detector-response-threshold`` / ``detector.response_threshold`` to dotted form."""
    name = name.lstrip("-")
    if "." in name:
        section, _, key = name.partition(".")
    else:
        section, _, key = name.partition("-")
    key = key.replace("-", "_")
    if section not in KEYS:
        raise KeyError(f"unknown config section {section!r}")
    for known in KEYS[section]:
        if known.lower() == key.lower():
            return f"{section}.{known}"
    raise KeyError(f"unknown config key {section}.{key}")


def read_config(path: str | os.PathLike) -> dict[str, str]:
    settings = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            key, sep, value = s.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            try:
                settings[canonical_key(key.strip())] = value.strip()
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: {exc.args[0]}") from None
    return settings


def parse_override_flags(args: list[str]) -> dict[str, str]:
    """``['--detector-w', '0.8', '--matcher-mutual=true']`` to dotted settings."""
    settings = {}
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--"):
            raise ValueError(f"unexpected argument {arg!r}")
        if "=" in arg:
            name, value = arg.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(args):
                raise ValueError(f"missing value for {arg}")
            name, value = arg, args[i + 1]
            i += 2
        try:
            settings[canonical_key(name)] = value
        except KeyError as exc:
            raise ValueError(exc.args[0]) from None
    return settings


def build_config(settings: Mapping[str, str]) -> PipelineConfig:
    """Pipeline configuration from merged settings; every component re-validates."""
    parsed: dict[str, dict[str, object]] = {s: {} for s in KEYS}
    for dotted, raw in settings.items():
        section, _, key = canonical_key(dotted).partition(".")
        try:
            parsed[section][key] = KEYS[section][key](raw)
        except ValueError as exc:
            raise ValueError(f"{dotted}: {exc}") from None
    cfg = PipelineConfig()
    crop = None
    if parsed["crop"]:
        if set(parsed["crop"]) != {"a", "b"}:
            raise ValueError("crop needs both crop.a and crop.b")
        crop = (parsed["crop"]["a"], parsed["crop"]["b"])
        if crop[0] <= 0 or crop[1] <= 0:
            raise ValueError("crop semi-axes must be positive")
    return replace(
        cfg,
        grid=replace(cfg.grid, **parsed["grid"]),
        crop=crop,
        icp=replace(cfg.icp, **parsed["icp"]),
        detector=replace(cfg.detector, **parsed["detector"]),
        descriptor=replace(cfg.descriptor, **parsed["descriptor"]),
        matcher=replace(cfg.matcher, **parsed["matcher"]),
    )
