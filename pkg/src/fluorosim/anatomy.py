"""Annotated pelvis model: corridors, landmarks, the APP frame and standard views.

Anatomy coordinates are millimetres. The anterior pelvic plane (APP) frame has
x pointing from the left to the right ASIS, y anterior and z cranial, with its
origin at the midpoint of the pubic tubercles.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import as_vec, rotation_matrix, unit

SCHEMA_VERSION = 1

CORRIDOR_IDS = (
    "ramus_left",
    "ramus_right",
    "teardrop_left",
    "teardrop_right",
    "s1_left",
    "s1_right",
    "s2_left",
    "s2_right",
)

VIEW_NAMES = (
    "ap",
    "lateral",
    "inlet",
    "outlet",
    "oblique_left",
    "oblique_right",
    "teardrop_left",
    "teardrop_right",
)

LANDMARK_NAMES = (
    "asis_left",
    "asis_right",
    "pubic_tubercle_left",
    "pubic_tubercle_right",
    "iliopectineal_eminence_left",
    "iliopectineal_eminence_right",
    "aiis_left",
    "aiis_right",
    "acetabulum_center_left",
    "acetabulum_center_right",
    "ischial_spine_left",
    "ischial_spine_right",
    "psis_left",
    "psis_right",
    "pubic_symphysis",
    "sacral_promontory",
)

MIN_TOLERANCE = math.radians(3.0)
MAX_TOLERANCE = math.radians(10.0)


class AnatomyError(ValueError):
    pass


@dataclass(frozen=True)
class Corridor:
    id: str
    start: np.ndarray
    end: np.ndarray
    radius: float

    def __post_init__(self):
        if self.id not in CORRIDOR_IDS:
            raise AnatomyError(f"unknown corridor id {self.id!r}")
        object.__setattr__(self, "start", as_vec(self.start))
        object.__setattr__(self, "end", as_vec(self.end))
        if not self.length > 1e-6:
            raise AnatomyError(f"corridor {self.id} has zero length")
        if not self.radius > 0:
            raise AnatomyError(f"corridor {self.id} needs a positive radius")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.start + self.end)

    @property
    def axis(self) -> np.ndarray:
        return (self.end - self.start) / self.length

    @property
    def is_ramus(self) -> bool:
        return self.id.startswith("ramus")

    def reversed(self) -> "Corridor":
        return Corridor(self.id, self.end, self.start, self.radius)


@dataclass(frozen=True)
class AppFrame:
    """Rigid APP frame; ``rotation`` columns are the APP axes in anatomy coordinates."""

    rotation: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise AnatomyError("APP rotation must be a proper rotation")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "origin", as_vec(self.origin))

    def to_app(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.origin) @ self.rotation

    def from_app(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.origin

    def direction_to_app(self, v) -> np.ndarray:
        return np.asarray(v, dtype=np.float64) @ self.rotation

    def direction_from_app(self, v) -> np.ndarray:
        return np.asarray(v, dtype=np.float64) @ self.rotation.T


def app_frame_from_landmarks(landmarks: dict) -> AppFrame:
    try:
        la, ra = as_vec(landmarks["asis_left"]), as_vec(landmarks["asis_right"])
        lt, rt = as_vec(landmarks["pubic_tubercle_left"]), as_vec(landmarks["pubic_tubercle_right"])
    except KeyError as exc:
        raise AnatomyError(f"missing landmark {exc.args[0]!r} for the APP frame") from None
    origin = 0.5 * (lt + rt)
    lateral = ra - la
    if np.linalg.norm(lateral) < 1e-6:
        raise AnatomyError("ASIS landmarks coincide")
    x = lateral / np.linalg.norm(lateral)
    cranial = 0.5 * (la + ra) - origin
    normal = np.cross(cranial, x)
    if np.linalg.norm(normal) < 1e-6 * max(1.0, np.linalg.norm(cranial)):
        raise AnatomyError("ASIS and pubic tubercle midpoint are collinear")
    y = normal / np.linalg.norm(normal)
    z = np.cross(x, y)
    return AppFrame(np.column_stack([x, y, z]), origin)


@dataclass(frozen=True)
class ViewSpec:
    name: str
    ideal_ray_app: np.ndarray
    tolerance: float  # radians

    def __post_init__(self):
        if self.name not in VIEW_NAMES:
            raise AnatomyError(f"unknown view {self.name!r}")
        object.__setattr__(self, "ideal_ray_app", unit(self.ideal_ray_app))
        if not MIN_TOLERANCE - 1e-12 <= self.tolerance <= MAX_TOLERANCE + 1e-12:
            raise AnatomyError(
                f"view {self.name}: tolerance {math.degrees(self.tolerance):.2f} deg outside [3, 10]"
            )


def _ray(x, y, z):
    return unit([x, y, z])


_S45 = math.sqrt(0.5)

# Principal ray directions (source -> detector) in APP coordinates, with
# angular tolerances in degrees. Teardrop rays follow the template teardrop
# corridors (down-the-barrel).
DEFAULT_VIEW_TABLE = {
    "ap": ((0.0, -1.0, 0.0), 6.0),
    "lateral": ((1.0, 0.0, 0.0), 10.0),
    "inlet": ((0.0, -_S45, -_S45), 5.0),
    "outlet": ((0.0, -math.cos(math.radians(30)), math.sin(math.radians(30))), 5.0),
    "oblique_left": ((-_S45, -_S45, 0.0), 5.0),
    "oblique_right": ((_S45, -_S45, 0.0), 5.0),
    "teardrop_left": ((0.3015, -0.9045, 0.3015), 3.0),
    "teardrop_right": ((-0.3015, -0.9045, 0.3015), 3.0),
}


def make_view_table(overrides: dict | None = None) -> dict[str, ViewSpec]:
    """Build the eight ViewSpecs from defaults plus ``{name: {"ray": [...], "tolerance_deg": t}}``."""
    overrides = overrides or {}
    unknown = set(overrides) - set(VIEW_NAMES)
    if unknown:
        raise AnatomyError(f"unknown view names in overrides: {sorted(unknown)}")
    table = {}
    for name in VIEW_NAMES:
        ray, tol_deg = DEFAULT_VIEW_TABLE[name]
        ov = overrides.get(name, {})
        ray = ov.get("ray", ray)
        tol_deg = ov.get("tolerance_deg", tol_deg)
        table[name] = ViewSpec(name, _ray(*ray), math.radians(tol_deg))
    tols = {n: v.tolerance for n, v in table.items()}
    td = max(tols["teardrop_left"], tols["teardrop_right"])
    for n, t in tols.items():
        if not n.startswith("teardrop") and not td <= t <= tols["lateral"]:
            raise AnatomyError(f"view {n}: tolerance must lie between teardrop and lateral tolerances")
    return table


DEFAULT_VIEWS = make_view_table()


def ideal_view(view: ViewSpec, corridor: Corridor, app: AppFrame) -> tuple[np.ndarray, np.ndarray]:
    """Ideal viewing point (corridor midpoint) and principal ray in anatomy coordinates."""
    ray = app.direction_from_app(view.ideal_ray_app)
    return corridor.midpoint, ray / np.linalg.norm(ray)


def resolve_oblique(corridor: Corridor | str) -> str:
    """Oblique view playing the obturator-oblique role for a ramus corridor."""
    cid = corridor if isinstance(corridor, str) else corridor.id
    if cid == "ramus_right":
        return "oblique_left"
    if cid == "ramus_left":
        return "oblique_right"
    raise AnatomyError(f"obturator oblique is only defined for ramus corridors, not {cid!r}")


@dataclass(frozen=True)
class AnatomySpec:
    landmarks: dict
    corridors: dict
    app_frame: AppFrame
    name: str = "anatomy"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lms = {k: as_vec(v) for k, v in self.landmarks.items()}
        if set(lms) != set(LANDMARK_NAMES):
            missing = sorted(set(LANDMARK_NAMES) - set(lms))
            extra = sorted(set(lms) - set(LANDMARK_NAMES))
            raise AnatomyError(f"landmark set mismatch: missing={missing} extra={extra}")
        if not all(np.all(np.isfinite(v)) for v in lms.values()):
            raise AnatomyError("non-finite landmark coordinates")
        if set(self.corridors) != set(CORRIDOR_IDS):
            raise AnatomyError(f"corridor set mismatch: {sorted(self.corridors)}")
        object.__setattr__(self, "landmarks", {k: lms[k] for k in LANDMARK_NAMES})
        object.__setattr__(self, "corridors", {k: self.corridors[k] for k in CORRIDOR_IDS})

    def landmark_array(self) -> np.ndarray:
        return np.array([self.landmarks[k] for k in LANDMARK_NAMES])

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "anatomy",
            "name": self.name,
            "units": "mm",
            "landmarks": {k: v.tolist() for k, v in self.landmarks.items()},
            "corridors": {
                k: {"start": c.start.tolist(), "end": c.end.tolist(), "radius_mm": c.radius}
                for k, c in self.corridors.items()
            },
            "app_frame": {
                "rotation": self.app_frame.rotation.tolist(),
                "origin": self.app_frame.origin.tolist(),
            },
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AnatomySpec":
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise AnatomyError(f"anatomy schema_version {version!r} != {SCHEMA_VERSION}")
        landmarks = {k: as_vec(v) for k, v in doc["landmarks"].items()}
        corridors = {
            k: Corridor(k, c["start"], c["end"], float(c["radius_mm"])) for k, c in doc["corridors"].items()
        }
        if "app_frame" in doc:
            app = AppFrame(doc["app_frame"]["rotation"], doc["app_frame"]["origin"])
        else:
            app = app_frame_from_landmarks(landmarks)
        return cls(landmarks, corridors, app, doc.get("name", "anatomy"), doc.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "AnatomySpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def load_template_doc() -> dict:
    text = resources.files("fluorosim.data").joinpath("pelvis_template.json").read_text()
    return json.loads(text)


def load_template() -> AnatomySpec:
    return AnatomySpec.from_dict(load_template_doc())


@dataclass(frozen=True)
class PelvisParams:
    """Synthetic pelvis variation around the template."""

    jitter_mm: float = 2.0
    scale_range: tuple[float, float] = (0.9, 1.1)
    rotation_deg: float = 5.0
    template: dict | None = None  # anatomy document; None -> packaged template

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise AnatomyError(f"invalid scale range {self.scale_range}")
        if self.jitter_mm < 0 or self.rotation_deg < 0:
            raise AnatomyError("jitter and rotation must be non-negative")


def _nearest_landmark(point: np.ndarray, landmarks: dict) -> str:
    return min(landmarks, key=lambda k: float(np.linalg.norm(landmarks[k] - point)))


def synth_pelvis(rng: np.random.Generator, params: PelvisParams = PelvisParams()) -> AnatomySpec:
    """Draw a pelvis: global similarity transform of the template plus per-landmark jitter.

    Corridor endpoints follow their anchor landmark (explicit ``*_anchor`` keys
    in the template, else the nearest landmark) with the anchor offset carried
    through the same similarity transform.
    """
    doc = params.template if params.template is not None else load_template_doc()
    base = {k: as_vec(v) for k, v in doc["landmarks"].items()}
    lo, hi = params.scale_range
    scale = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    if params.rotation_deg > 0:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        R = rotation_matrix(axis, math.radians(float(rng.uniform(0.0, params.rotation_deg))))
    else:
        R = np.eye(3)

    def similar(p):
        return R @ (scale * p)

    landmarks, jitters = {}, {}
    for name in LANDMARK_NAMES:
        jitters[name] = rng.normal(0.0, params.jitter_mm, 3) if params.jitter_mm > 0 else np.zeros(3)
        landmarks[name] = similar(base[name]) + jitters[name]

    corridors = {}
    for cid in CORRIDOR_IDS:
        c = doc["corridors"][cid]
        ends = []
        for key in ("start", "end"):
            p = as_vec(c[key])
            anchor = c.get(f"{key}_anchor") or _nearest_landmark(p, base)
            ends.append(similar(p) + jitters[anchor])
        corridors[cid] = Corridor(cid, ends[0], ends[1], float(c["radius_mm"]))

    return AnatomySpec(
        landmarks,
        corridors,
        app_frame_from_landmarks(landmarks),
        name="synthetic-pelvis",
        meta={"source": doc.get("name", "template"), "scale": scale},
    )
