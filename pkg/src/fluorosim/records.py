"""Frame-record schema, label taxonomy and canonical JSON encoding."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .anatomy import CORRIDOR_IDS, LANDMARK_NAMES, VIEW_NAMES

SCHEMA_VERSION = 1

ACTIVITIES = ("position_wire", "insert_wire", "insert_screw")
FRAME_VALUES = ("hunting", "assessment")

LABEL_GROUPS = {
    "corridor": CORRIDOR_IDS,
    "activity": ACTIVITIES,
    "view": VIEW_NAMES,
    "frame_value": FRAME_VALUES,
}
LABEL_DIM = sum(len(v) for v in LABEL_GROUPS.values())  # 21

ANATOMY_CHANNELS = ("left_hip", "right_hip", "left_femur", "right_femur", "sacrum", "l5_vertebra", "pelvis")
CORRIDOR_CHANNELS = tuple(f"corridor_{c}" for c in CORRIDOR_IDS)
TOOL_CHANNELS = ("wires", "screws")
LANDMARK_CHANNELS = tuple(f"landmark_{n}" for n in LANDMARK_NAMES)
ANNOTATION_CHANNELS = ANATOMY_CHANNELS + CORRIDOR_CHANNELS + TOOL_CHANNELS + LANDMARK_CHANNELS

assert LABEL_DIM == 21 and len(ANNOTATION_CHANNELS) == 33


class RecordFormatError(ValueError):
    """Malformed or incompatible record; ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


def canon_float(x: float) -> float:
    """Round to 9 significant digits; idempotent."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be serialised")
    return float(f"{x:.9g}")


def canonical(obj):
    """Recursively canonicalise floats and convert tuples/arrays to lists."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, int):
        return obj
    if isinstance(obj, float):
        return canon_float(obj)
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if hasattr(obj, "tolist"):
        return canonical(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return canonical(obj.item())
    raise TypeError(f"cannot canonicalise {type(obj).__name__}")


def encode_labels(corridor: str, activity: str, view: str, frame_value: str) -> list[int]:
    vec = []
    for group, value in zip(LABEL_GROUPS.values(), (corridor, activity, view, frame_value)):
        if value not in group:
            raise ValueError(f"label {value!r} not in {group}")
        vec += [1 if g == value else 0 for g in group]
    return vec


def decode_labels(vec) -> dict:
    """Inverse of :func:`encode_labels`; raises unless each group is one-hot."""
    if len(vec) != LABEL_DIM:
        raise ValueError(f"label vector has length {len(vec)}, expected {LABEL_DIM}")
    out, i = {}, 0
    for name, group in LABEL_GROUPS.items():
        chunk = list(vec[i : i + len(group)])
        i += len(group)
        if sorted(chunk) != [0] * (len(group) - 1) + [1]:
            raise ValueError(f"label group {name!r} is not one-hot: {chunk}")
        out[name] = group[chunk.index(1)]
    return out


@dataclass
class FrameRecord:
    """One acquired frame with its four phase labels and geometric annotations.

    All float content is canonicalised on construction, so a record equals its
    own JSON round trip.
    """

    sequence_id: int
    frame_index: int
    corridor: str
    activity: str
    view: str
    frame_value: str
    label_vector: list = field(default_factory=list)
    camera: dict = field(default_factory=dict)
    pose: dict = field(default_factory=dict)
    tools: list = field(default_factory=list)
    landmarks_2d: list = field(default_factory=list)
    corridors_2d: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.label_vector:
            self.label_vector = encode_labels(self.corridor, self.activity, self.view, self.frame_value)
        self.label_vector = [int(v) for v in self.label_vector]
        for name in ("camera", "pose", "tools", "landmarks_2d", "corridors_2d", "meta"):
            setattr(self, name, canonical(getattr(self, name)))

    @property
    def labels(self) -> dict:
        return {
            "corridor": self.corridor,
            "activity": self.activity,
            "view": self.view,
            "frame_value": self.frame_value,
        }

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "sequence_id": self.sequence_id,
            "frame_index": self.frame_index,
            "labels": self.labels,
            "label_vector": list(self.label_vector),
            "camera": self.camera,
            "pose": self.pose,
            "tools": self.tools,
            "landmarks_2d": self.landmarks_2d,
            "corridors_2d": self.corridors_2d,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FrameRecord":
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise RecordFormatError(f"schema_version {version!r} != {SCHEMA_VERSION}")
        try:
            labels = doc["labels"]
            return cls(
                sequence_id=int(doc["sequence_id"]),
                frame_index=int(doc["frame_index"]),
                corridor=labels["corridor"],
                activity=labels["activity"],
                view=labels["view"],
                frame_value=labels["frame_value"],
                label_vector=doc["label_vector"],
                camera=doc.get("camera", {}),
                pose=doc.get("pose", {}),
                tools=doc.get("tools", []),
                landmarks_2d=doc.get("landmarks_2d", []),
                corridors_2d=doc.get("corridors_2d", []),
                meta=doc.get("meta", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordFormatError(f"malformed record: {exc!r}") from exc

    def to_json(self) -> str:
        return dumps(self.to_dict())


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
