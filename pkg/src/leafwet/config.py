"""Run configuration: a ``[section]`` / ``key = value`` file mapped onto the dataclasses.

Every key must belong to a known section; values are parsed according to the
type of the field default. Keys ending in ``_file`` name files that must exist
(relative paths resolve against the config file's directory).
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .data import AugmentPolicy, DatasetConfig
from .errors import ConfigError, LeafwetError
from .model import ModelConfig
from .radar import RadarConfig
from .training import TrainConfig

_DS = {f.name: f for f in fields(DatasetConfig)}
_GEOMETRY = ("width", "height", "nx", "ny", "delta_T", "z_ref")
_STACK = ("z_min", "z_max", "n_slices")
_SCENE = tuple(k for k in _DS if k not in _GEOMETRY + _STACK + ("radar",))


@dataclass(frozen=True)
class CrossValConfig:
    k: int = 5
    repeats: int = 3
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    cv: CrossValConfig = field(default_factory=CrossValConfig)
    scene_file: Path | None = None
    source: Path | None = None


def _defaults(obj, names):
    return {n: getattr(obj, n) for n in names}


def _schema():
    ds, tr = DatasetConfig(), TrainConfig()
    train_keys = [f.name for f in fields(TrainConfig) if f.name != "policy"]
    return {
        "radar": _defaults(RadarConfig(), [f.name for f in fields(RadarConfig) if f.init]),
        "geometry": _defaults(ds, _GEOMETRY),
        "scene": dict(_defaults(ds, _SCENE), scene_file=None),
        "stack": _defaults(ds, _STACK),
        "model": _defaults(ModelConfig(), [f.name for f in fields(ModelConfig)]),
        "training": _defaults(tr, train_keys),
        "augmentation": _defaults(AugmentPolicy(), [f.name for f in fields(AugmentPolicy)]),
        "crossval": _defaults(CrossValConfig(), [f.name for f in fields(CrossValConfig)]),
    }


# fields whose default is None but which take a number or a pair when set
_OPTIONAL = {("training", "pretrain_lr"): float, ("augmentation", "lighting"): tuple,
             ("scene", "scene_file"): str}


def _parse(section, key, text, default):
    text = text.strip()
    kind = _OPTIONAL.get((section, key))
    if kind is not None and text.lower() == "none":
        return None
    if kind is float:
        default = 0.0
    elif kind is tuple:
        default = (0.0, 0.0)
    elif kind is str:
        return text
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(text)
            return low in ("true", "yes", "1")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            cast = int if default and all(isinstance(v, int) for v in default) else float
            return tuple(cast(t) for t in items)
        return text
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {text!r}") from None


def format_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(format_value(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def parse_config(text: str, base_dir=None, source=None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (delta_T, chirp_T)
    try:
        cp.read_string(text, source=str(source or "<config>"))
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    schema = _schema()
    vals = {s: {} for s in schema}
    for section in cp.sections():
        if section not in schema:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in schema[section]:
                raise ConfigError(f"[{section}] unknown key {key!r}")
            vals[section][key] = _parse(section, key, raw, schema[section][key])
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    scene_file = vals["scene"].pop("scene_file", None)
    if scene_file is not None:
        scene_file = (base / scene_file).resolve()
        if not scene_file.is_file():
            raise ConfigError(f"[scene] scene_file {scene_file} does not exist")
    try:
        radar = RadarConfig(**vals["radar"])
        ds = DatasetConfig(radar=radar, **vals["geometry"], **vals["scene"], **vals["stack"])
        ds.geometry  # validate the aperture early
        model = ModelConfig(**vals["model"])
        policy = AugmentPolicy(**vals["augmentation"])
        train = TrainConfig(policy=policy, **vals["training"])
        cv = CrossValConfig(**vals["crossval"])
    except LeafwetError as e:
        raise ConfigError(f"invalid configuration: {e}") from None
    return RunConfig(ds, model, train, cv, scene_file, Path(source) if source else None)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text, path.parent, path)


def dump_config(run: RunConfig) -> str:
    """Serialize every knob, so the output reloads to an equal ``RunConfig``."""
    ds = run.dataset
    sections = {
        "radar": _defaults(ds.radar, [f.name for f in fields(RadarConfig) if f.init]),
        "geometry": _defaults(ds, _GEOMETRY),
        "scene": _defaults(ds, _SCENE),
        "stack": _defaults(ds, _STACK),
        "model": _defaults(run.model, [f.name for f in fields(ModelConfig)]),
        "training": _defaults(run.train, [f.name for f in fields(TrainConfig) if f.name != "policy"]),
        "augmentation": _defaults(run.train.policy, [f.name for f in fields(AugmentPolicy)]),
        "crossval": _defaults(run.cv, [f.name for f in fields(CrossValConfig)]),
    }
    if run.scene_file is not None:
        sections["scene"]["scene_file"] = str(run.scene_file)
    out = []
    for name, kv in sections.items():
        out.append(f"[{name}]")
        out += [f"{k} = {format_value(v)}" for k, v in kv.items()]
        out.append("")
    return "\n".join(out)


def with_overrides(run: RunConfig, **kw) -> RunConfig:
    return replace(run, **kw)
