"""Simulation configuration.

Every tunable lives in a TOML document whose sections mirror the dataclasses
below. Angles are given in degrees here and converted to radians by callers.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import tomli

from .anatomy import CORRIDOR_IDS, VIEW_NAMES, PelvisParams, make_view_table, resolve_oblique


class ConfigError(ValueError):
    pass


def _range(value, name):
    lo, hi = (float(v) for v in value)
    if not lo <= hi:
        raise ConfigError(f"{name}: empty range [{lo}, {hi}]")
    return (lo, hi)


@dataclass(frozen=True)
class SequenceConfig:
    lambda_adj_range: tuple = (0.6, 0.8)
    max_frames: int = 1000
    corridor_count_range: tuple = (3, 8)
    corridors: tuple | None = None  # explicit plan; None -> random plan
    retrograde_probability: float = 0.5
    max_tools_per_kind: int = 8


@dataclass(frozen=True)
class CameraConfig:
    sensor_width_range_mm: tuple = (300.0, 400.0)
    source_detector_range_mm: tuple = (900.0, 1200.0)
    image_size_px: tuple = (384, 384)
    source_viewpoint_fraction_range: tuple = (0.65, 0.75)
    start_position_jitter_mm: float = 50.0
    start_angle_jitter_deg: float = 20.0


@dataclass(frozen=True)
class ViewConfig:
    centering_fraction: float = 0.4
    position_clamp_mm: tuple = (5.0, 100.0)
    angle_clamp_deg: tuple = (1.0, 45.0)
    overrides: dict = field(default_factory=dict)  # {view: {"ray": [...], "tolerance_deg": t}}


@dataclass(frozen=True)
class WireConfig:
    diameter_mm: float = 2.0
    initial_tip_jitter_mm: float = 5.0
    initial_angle_jitter_deg: float = 15.0
    tip_clamp_mm: tuple = (5.0, 10.0)
    inplane_clamp_deg: tuple = (3.0, 10.0)
    out_of_plane_fraction: float = 0.1
    barrel_angle_clamp_deg: tuple = (1.0, 45.0)
    down_the_barrel_deg: float = 15.0
    align_tolerance_deg: float = 5.0
    barrel_probe_mm: float = 10.0
    false_positive_rate: float = 0.05


@dataclass(frozen=True)
class ScrewConfig:
    length_range_mm: tuple = (30.0, 130.0)
    thread_mm: float = 16.0


@dataclass(frozen=True)
class InsertionConfig:
    step_range_mm: tuple = (5.0, 25.0)
    view_change_probability: float = 0.3


def _default_after_good_wire():
    return {"reverify": 0.4, "insert_wire": 0.6, "insert_screw": 0.0}


def _default_after_wire_inserted():
    return {"insert_screw": 0.9, "next_corridor": 0.1}


@dataclass(frozen=True)
class TransitionConfig:
    after_good_wire: dict = field(default_factory=_default_after_good_wire)
    after_wire_inserted: dict = field(default_factory=_default_after_wire_inserted)


def default_desired_views() -> dict:
    """Per-corridor desired-view distributions."""
    table = {}
    for cid in CORRIDOR_IDS:
        side = cid.rsplit("_", 1)[1]
        if cid.startswith("ramus"):
            main = {"inlet": 0.4, resolve_oblique(cid): 0.4}
        elif cid.startswith("teardrop"):
            # iliac-oblique role: oblique_left for the left side, oblique_right for the right
            main = {f"teardrop_{side}": 0.45, f"oblique_{side}": 0.25, "inlet": 0.15}
        else:
            main = {"lateral": 0.3, "inlet": 0.3, "outlet": 0.3}
        rest = [v for v in VIEW_NAMES if v not in main]
        share = (1.0 - sum(main.values())) / len(rest)
        table[cid] = {v: main.get(v, share) for v in VIEW_NAMES}
    return table


@dataclass(frozen=True)
class AnatomyConfig:
    jitter_mm: float = 2.0
    scale_range: tuple = (0.9, 1.1)
    rotation_deg: float = 5.0

    def params(self) -> PelvisParams:
        return PelvisParams(self.jitter_mm, tuple(self.scale_range), self.rotation_deg)


@dataclass(frozen=True)
class SimConfig:
    sequence: SequenceConfig = field(default_factory=SequenceConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    view: ViewConfig = field(default_factory=ViewConfig)
    wire: WireConfig = field(default_factory=WireConfig)
    screw: ScrewConfig = field(default_factory=ScrewConfig)
    insertion: InsertionConfig = field(default_factory=InsertionConfig)
    transitions: TransitionConfig = field(default_factory=TransitionConfig)
    desired_views: dict = field(default_factory=default_desired_views)
    anatomy: AnatomyConfig = field(default_factory=AnatomyConfig)

    def __post_init__(self):
        validate(self)

    @property
    def views(self):
        return make_view_table(self.view.overrides)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **sections) -> "SimConfig":
        """Copy with section-level overrides, e.g. ``cfg.replace(wire={"false_positive_rate": 0})``."""
        doc = self.to_dict()
        for key, val in sections.items():
            if isinstance(doc.get(key), dict) and isinstance(val, dict) and key not in ("desired_views",):
                doc[key] = {**doc[key], **val}
            else:
                doc[key] = val
        return from_dict(doc)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_SECTIONS = {
    "sequence": SequenceConfig,
    "camera": CameraConfig,
    "view": ViewConfig,
    "wire": WireConfig,
    "screw": ScrewConfig,
    "insertion": InsertionConfig,
    "transitions": TransitionConfig,
    "anatomy": AnatomyConfig,
}


def _build(cls, doc: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {sorted(unknown)}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in doc:
            continue
        val = doc[f.name]
        if isinstance(val, list):
            val = tuple(val)
        kwargs[f.name] = val
    return cls(**kwargs)


def from_dict(doc: dict) -> SimConfig:
    unknown = set(doc) - set(_SECTIONS) - {"desired_views"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        kwargs = {name: _build(cls, doc.get(name, {}), name) for name, cls in _SECTIONS.items()}
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if "desired_views" in doc:
        merged = default_desired_views()
        for cid, row in doc["desired_views"].items():
            if cid not in merged:
                raise ConfigError(f"[desired_views] unknown corridor {cid!r}")
            merged[cid] = {v: float(row.get(v, 0.0)) for v in VIEW_NAMES}
            extra = set(row) - set(VIEW_NAMES)
            if extra:
                raise ConfigError(f"[desired_views.{cid}] unknown views {sorted(extra)}")
        kwargs["desired_views"] = merged
    try:
        return SimConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def loads(text: str) -> SimConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        where = f" at line {line}, column {exc.colno}" if line is not None else ""
        raise ConfigError(f"invalid TOML{where}: {getattr(exc, 'msg', exc)}") from exc
    return from_dict(doc)


def load(path) -> SimConfig:
    return loads(Path(path).read_text())


def _check_row(row: dict, name: str):
    if any(p < 0 for p in row.values()):
        raise ConfigError(f"{name}: negative probability")
    if not math.isclose(sum(row.values()), 1.0, abs_tol=1e-9):
        raise ConfigError(f"{name}: probabilities sum to {sum(row.values())}, not 1")


def validate(cfg: SimConfig) -> None:
    s = cfg.sequence
    lo, hi = _range(s.lambda_adj_range, "sequence.lambda_adj_range")
    if not 0 <= lo <= hi <= 1:
        raise ConfigError("sequence.lambda_adj_range must lie in [0, 1]")
    if not 1 <= s.max_frames:
        raise ConfigError("sequence.max_frames must be >= 1")
    clo, chi = _range(s.corridor_count_range, "sequence.corridor_count_range")
    if not 0 <= clo <= chi <= len(CORRIDOR_IDS) or clo != int(clo) or chi != int(chi):
        raise ConfigError("sequence.corridor_count_range must be integers within [0, 8]")
    if s.corridors is not None:
        bad = [c for c in s.corridors if c not in CORRIDOR_IDS]
        if bad or len(set(s.corridors)) != len(s.corridors):
            raise ConfigError(f"sequence.corridors: unknown or repeated ids {list(s.corridors)}")
    if not 0 <= s.retrograde_probability <= 1:
        raise ConfigError("sequence.retrograde_probability must lie in [0, 1]")
    if not 1 <= s.max_tools_per_kind <= 8:
        raise ConfigError("sequence.max_tools_per_kind must lie in [1, 8]")

    c = cfg.camera
    for name in ("sensor_width_range_mm", "source_detector_range_mm", "source_viewpoint_fraction_range"):
        lo, hi = _range(getattr(c, name), f"camera.{name}")
        if lo <= 0:
            raise ConfigError(f"camera.{name} must be positive")
    if len(c.image_size_px) != 2 or min(c.image_size_px) <= 0:
        raise ConfigError("camera.image_size_px must be [H, W] with positive entries")

    v = cfg.view
    _range(v.position_clamp_mm, "view.position_clamp_mm")
    _range(v.angle_clamp_deg, "view.angle_clamp_deg")
    if not 0 < v.centering_fraction <= 1:
        raise ConfigError("view.centering_fraction must lie in (0, 1]")
    make_view_table(v.overrides)

    w = cfg.wire
    for name in ("tip_clamp_mm", "inplane_clamp_deg", "barrel_angle_clamp_deg"):
        _range(getattr(w, name), f"wire.{name}")
    if not 0 <= w.false_positive_rate <= 1:
        raise ConfigError("wire.false_positive_rate must lie in [0, 1]")

    lo, hi = _range(cfg.screw.length_range_mm, "screw.length_range_mm")
    if lo <= 0:
        raise ConfigError("screw lengths must be positive")
    lo, hi = _range(cfg.insertion.step_range_mm, "insertion.step_range_mm")
    if lo <= 0:
        raise ConfigError("insertion steps must be positive")

    t = cfg.transitions
    if set(t.after_good_wire) != {"reverify", "insert_wire", "insert_screw"}:
        raise ConfigError("transitions.after_good_wire needs reverify/insert_wire/insert_screw")
    if set(t.after_wire_inserted) != {"insert_screw", "next_corridor"}:
        raise ConfigError("transitions.after_wire_inserted needs insert_screw/next_corridor")
    _check_row(t.after_good_wire, "transitions.after_good_wire")
    _check_row(t.after_wire_inserted, "transitions.after_wire_inserted")

    if set(cfg.desired_views) != set(CORRIDOR_IDS):
        raise ConfigError("desired_views must cover all eight corridors")
    for cid, row in cfg.desired_views.items():
        _check_row(row, f"desired_views.{cid}")

    cfg.anatomy.params()


def dump_default_toml() -> str:
    """Render the default configuration as TOML (used by ``fluorosim config``)."""
    cfg = SimConfig()
    doc = cfg.to_dict()
    lines = []
    for section, body in doc.items():
        if section == "desired_views":
            for cid, row in body.items():
                lines.append(f"[desired_views.{cid}]")
                lines += [f"{k} = {_toml_value(v)}" for k, v in row.items()]
                lines.append("")
            continue
        lines.append(f"[{section}]")
        nested = []
        for k, v in body.items():
            if v is None:
                continue
            if isinstance(v, dict):
                nested.append((k, v))
                continue
            lines.append(f"{k} = {_toml_value(v)}")
        for k, v in nested:
            if v and all(isinstance(x, dict) for x in v.values()):
                for sub, row in v.items():
                    lines.append(f"{k}.{sub} = {{ " + ", ".join(f"{a} = {_toml_value(b)}" for a, b in row.items()) + " }")
            elif v:
                lines.append(f"{k} = {{ " + ", ".join(f"{a} = {_toml_value(b)}" for a, b in v.items()) + " }")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, str):
        return json.dumps(v)
    return repr(v)

