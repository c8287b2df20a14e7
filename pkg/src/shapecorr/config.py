"""Generation config: flat key=value file, one option per line.

Key names follow the pipeline's main configuration file one-to-one.
``original_settings=true`` activates hard assertions pinning every
science-affecting option to its published default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

ALL_DATASETS = ("faust", "scape", "tosca", "kids", "dt4d", "smal", "shrec20")
COMBINATIONS = ("human", "four-legged", "human_centaur",
                "four-legged_centaur", "all")
SETTINGS = ("full_full", "partial_full", "partial_partial")
CAM_POS_REGIMES = ("low", "medium", "high")
SPLITS = ("train", "val", "test")


class ConfigError(ValueError):
    def __init__(self, msg, known_keys=None):
        super().__init__(msg)
        self.known_keys = known_keys


@dataclass
class GenerationConfig:
    data_dir: str = "data"
    datasets: tuple = ALL_DATASETS
    combinations: str = "all"
    setting: str = "partial_partial"
    remesh: bool = True
    cam_pos_regime: str = "medium"
    store_vis: bool = False
    show_output: bool = False  # accepted for compatibility; no viewer here
    original_settings: bool = False
    use_precompute_remeshing: bool = True
    update_precomputed_remeshed: bool = True
    use_precomputed_partial_raycasting: bool = True
    update_precomputed_raycasting: bool = True
    one_axis_rotation: bool = True
    n_cam_pos: int = 10
    min_overlap: float = 0.1
    max_overlap: float = 0.9
    global_seed: int = 0
    resolution: tuple = (256, 256)
    count_range: tuple = (9000, 10000)
    split: str = "train"
    normalize_area: bool = False

    # options pinned by original_settings=true; operational knobs
    # (paths, seeds, caches, split selection, setting choice) stay free
    ASSERTED = ("datasets", "combinations", "remesh", "cam_pos_regime",
                "one_axis_rotation", "n_cam_pos", "min_overlap", "max_overlap",
                "resolution", "count_range", "normalize_area")

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.combinations not in COMBINATIONS:
            raise ConfigError(
                f"combinations={self.combinations!r} not in {COMBINATIONS}")
        if self.setting not in SETTINGS:
            raise ConfigError(f"setting={self.setting!r} not in {SETTINGS}")
        if self.cam_pos_regime not in CAM_POS_REGIMES:
            raise ConfigError(
                f"cam_pos_regime={self.cam_pos_regime!r} not in "
                f"{CAM_POS_REGIMES}")
        if self.split not in SPLITS:
            raise ConfigError(f"split={self.split!r} not in {SPLITS}")
        unknown = [d for d in self.datasets if d not in ALL_DATASETS]
        if unknown:
            raise ConfigError(f"unknown datasets {unknown}; valid: "
                              f"{ALL_DATASETS}")
        if not self.datasets:
            raise ConfigError("datasets must enable at least one dataset")
        if not 0 <= self.min_overlap < self.max_overlap <= 1:
            raise ConfigError("need 0 <= min_overlap < max_overlap <= 1")
        if self.n_cam_pos < 1:
            raise ConfigError("n_cam_pos must be >= 1")
        w, h = self.resolution
        if w < 1 or h < 1:
            raise ConfigError("resolution must be positive")
        lo, hi = self.count_range
        if not 4 <= lo <= hi:
            raise ConfigError(f"invalid count_range [{lo}, {hi}]")
        if self.original_settings:
            defaults = {f.name: f.default
                        for f in dataclasses.fields(GenerationConfig)}
            bad = [k for k in self.ASSERTED
                   if getattr(self, k) != defaults[k]]
            if bad:
                raise ConfigError(
                    "original_settings=true but non-default values for: "
                    + ", ".join(f"{k}={getattr(self, k)!r}" for k in bad))

    # --- serialization ---

    @classmethod
    def known_keys(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, mapping):
        known = cls.known_keys()
        unknown = [k for k in mapping if k not in known]
        if unknown:
            raise ConfigError(
                f"unknown config keys: {', '.join(sorted(unknown))}",
                known_keys=known)
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in mapping:
                continue
            kwargs[f.name] = _parse_value(f.name, mapping[f.name])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, overrides=None):
        mapping = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, "
                                  f"got {line!r}")
            k, v = line.split("=", 1)
            mapping[k.strip()] = v.strip()
        if overrides:
            mapping.update(overrides)
        return cls.from_mapping(mapping)

    def to_file(self, path):
        """Echo the fully-resolved config; re-loading reproduces it."""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.dumps())

    def dumps(self):
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={_format_value(f.name, v)}")
        return "\n".join(lines) + "\n"


_BOOL_KEYS = {"remesh", "store_vis", "show_output", "original_settings",
              "use_precompute_remeshing", "update_precomputed_remeshed",
              "use_precomputed_partial_raycasting",
              "update_precomputed_raycasting", "one_axis_rotation",
              "normalize_area"}
_INT_KEYS = {"n_cam_pos", "global_seed"}
_FLOAT_KEYS = {"min_overlap", "max_overlap"}


def _parse_value(key, value):
    if not isinstance(value, str):
        return value
    if key in _BOOL_KEYS:
        low = value.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected boolean, got {value!r}")
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key == "datasets":
        if value.lower() == "all":
            return ALL_DATASETS
        return tuple(d.strip() for d in value.split(",") if d.strip())
    if key == "resolution":
        w, h = value.lower().split("x")
        return (int(w), int(h))
    if key == "count_range":
        lo, hi = value.split("-")
        return (int(lo), int(hi))
    return value


def _format_value(key, value):
    if key in _BOOL_KEYS:
        return "true" if value else "false"
    if key == "datasets":
        return ",".join(value)
    if key == "resolution":
        return f"{value[0]}x{value[1]}"
    if key == "count_range":
        return f"{value[0]}-{value[1]}"
    return str(value)
