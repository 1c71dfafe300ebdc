"""Run configuration: defaults, key-value config files, and overrides.

A config file holds one ``key = value`` per line; ``#`` starts a comment and
list values are whitespace- or comma-separated::

    range = 0 -40 -3 70.4 40 1      # x_min y_min z_min x_max y_max z_max
    voxel_size = 0.05 0.05 0.1
    max_points = 5
    weights = 2.0 5.0 2.0           # cls l1 iou
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .bev_roi import DEFAULT_POOL_SIZE
from .box_codec import DEFAULT_NUM_PROPOSALS
from .geom3d import Extent, KITTI_EXTENT
from .kitti.ap import DEFAULT_THRESHOLDS
from .kitti.noise import DEFAULT_MARGIN, DEFAULT_NOISE_LEVELS
from .set_matcher import MatchWeights
from .voxel_grid import DEFAULT_MAX_POINTS, KITTI_VOXEL_SIZE, VoxelGridSpec

ENV_VAR = "SETPRED3D_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    extent: Extent = KITTI_EXTENT
    voxel_size: tuple[float, float, float] = KITTI_VOXEL_SIZE
    max_points: int = DEFAULT_MAX_POINTS
    num_proposals: int = DEFAULT_NUM_PROPOSALS
    num_stages: int = 6
    pool_size: int = DEFAULT_POOL_SIZE
    weights: MatchWeights = MatchWeights()
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    noise_levels: tuple[int, ...] = DEFAULT_NOISE_LEVELS
    noise_margin: float = DEFAULT_MARGIN
    categories: tuple[str, ...] = ("Car", "Pedestrian", "Cyclist")
    eval_categories: tuple[str, ...] = ("Car",)
    seed: int = 0
    paths: dict = field(default_factory=dict)

    @property
    def grid(self) -> VoxelGridSpec:
        return VoxelGridSpec(self.extent, self.voxel_size)


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.replace(",", " ").split())


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace(",", " ").split())


def _words(v: str) -> tuple[str, ...]:
    return tuple(v.replace(",", " ").split())


def _weights(v: str) -> MatchWeights:
    vals = _floats(v)
    if len(vals) != 3:
        raise ValueError("weights need 3 values: cls l1 iou")
    return MatchWeights(*vals)


def _voxel(v: str) -> tuple[float, float, float]:
    vals = _floats(v)
    if len(vals) != 3:
        raise ValueError("voxel_size needs 3 values")
    return vals


def _single_int(v: str) -> int:
    return int(v)


_PARSERS = {
    "range": ("extent", lambda v: Extent.from_sequence(_floats(v))),
    "voxel_size": ("voxel_size", _voxel),
    "max_points": ("max_points", _single_int),
    "num_proposals": ("num_proposals", _single_int),
    "num_stages": ("num_stages", _single_int),
    "pool_size": ("pool_size", _single_int),
    "weights": ("weights", _weights),
    "thresholds": ("thresholds", _floats),
    "noise_levels": ("noise_levels", _ints),
    "noise_margin": ("noise_margin", float),
    "categories": ("categories", _words),
    "eval_categories": ("eval_categories", _words),
    "seed": ("seed", _single_int),
}


def parse_config(text: str, base: RunConfig = RunConfig(), source: str = "<config>") -> RunConfig:
    changes = {}
    paths = dict(base.paths)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            key, sep, value = line.partition(":")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = key.strip(), value.strip()
        if key.endswith("_path"):
            paths[key[:-5]] = value
            continue
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        attr, conv = _PARSERS[key]
        try:
            changes[attr] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return dataclasses.replace(base, paths=paths, **changes)


def load_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the config file (if any), then ``key -> raw string`` overrides."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"{p}: {exc.strerror}") from None
        cfg = parse_config(text, cfg, str(p))
    if overrides:
        text = "\n".join(f"{k} = {v}" for k, v in overrides.items() if v is not None)
        cfg = parse_config(text, cfg, "<command line>")
    return cfg


def dump_config(cfg: RunConfig) -> str:
    def fmt(vals):
        return " ".join(repr(v) if isinstance(v, float) else str(v) for v in vals)

    lines = [
        f"range = {fmt(cfg.extent.as_tuple())}",
        f"voxel_size = {fmt(cfg.voxel_size)}",
        f"max_points = {cfg.max_points}",
        f"num_proposals = {cfg.num_proposals}",
        f"num_stages = {cfg.num_stages}",
        f"pool_size = {cfg.pool_size}",
        f"weights = {fmt((cfg.weights.cls, cfg.weights.l1, cfg.weights.iou))}",
        f"thresholds = {fmt(cfg.thresholds)}",
        f"noise_levels = {fmt(cfg.noise_levels)}",
        f"noise_margin = {cfg.noise_margin!r}",
        f"categories = {fmt(cfg.categories)}",
        f"eval_categories = {fmt(cfg.eval_categories)}",
        f"seed = {cfg.seed}",
    ]
    lines += [f"{k}_path = {v}" for k, v in sorted(cfg.paths.items())]
    return "\n".join(lines) + "\n"
