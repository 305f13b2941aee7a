"""Markov workflow engine for percutaneous pelvic fixation.

A sequence walks through a plan of target corridors. For each corridor the
wire is positioned (alternating view hunting, wire evaluation and wire
resampling), then inserted, then a screw is inserted over it. Every acquired
image is one :class:`~fluorosim.records.FrameRecord`; the labels of a frame are
the phase at the moment of acquisition.
"""

from __future__ import annotations

import logging
import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import kernels
from .anatomy import (
    CORRIDOR_IDS,
    LANDMARK_NAMES,
    VIEW_NAMES,
    AnatomySpec,
    Corridor,
    ViewSpec,
    ideal_view,
    synth_pelvis,
)
from .config import SimConfig
from .records import FrameRecord

log = logging.getLogger(__name__)

ACTIVITIES = ("position_wire", "insert_wire", "insert_screw")

_MASK64 = (1 << 64) - 1


class SequenceFinished(RuntimeError):
    pass


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def sequence_seed(master_seed: int, index: int) -> int:
    """Per-sequence seed: ``master XOR splitmix64(index)`` on 64 bits."""
    return (int(master_seed) & _MASK64) ^ splitmix64(int(index))


@dataclass
class WireState:
    tip: np.ndarray  # entry point at the cortex; inserted tip = tip + depth * direction
    direction: np.ndarray
    corridor_id: str
    max_depth: float
    inserted_depth: float = 0.0
    serial: int = 0

    @property
    def inserted_tip(self) -> np.ndarray:
        return self.tip + self.inserted_depth * self.direction


@dataclass
class ScrewState:
    tip: np.ndarray
    direction: np.ndarray
    corridor_id: str
    length: float
    inserted_depth: float = 0.0
    serial: int = 0


@dataclass
class CArmView:
    point: np.ndarray
    ray: np.ndarray


@dataclass
class SequenceState:
    seed: int
    sequence_id: int
    config: SimConfig
    views: dict
    anatomy: AnatomySpec
    lambda_adj: float
    camera: geo.CameraModel
    d_sp: float
    plan: list  # oriented Corridor objects
    retrograde: list
    carm: CArmView
    projection: geo.Projection
    plan_index: int = 0
    activity: str = "position_wire"
    view_name: str | None = None
    wires: list = field(default_factory=list)
    screws: list = field(default_factory=list)
    pending: str = "start_view"
    frame_index: int = 0
    finished: bool = False
    last_move: dict = field(default_factory=dict)
    tool_serial: int = 0

    @property
    def corridor(self) -> Corridor:
        return self.plan[self.plan_index]

    @property
    def view_spec(self) -> ViewSpec:
        return self.views[self.view_name]

    @property
    def active_wire(self) -> WireState:
        return self.wires[-1]

    def next_serial(self) -> int:
        self.tool_serial += 1
        return self.tool_serial

    def set_view(self, point, ray) -> None:
        self.carm = CArmView(geo.as_vec(point), geo.unit(ray))
        self.projection = geo.make_projection(self.carm.point, self.carm.ray, self.camera, self.d_sp)

    def desired(self) -> tuple[np.ndarray, np.ndarray]:
        return ideal_view(self.view_spec, self.corridor, self.anatomy.app_frame)

    def snapshot(self) -> dict:
        """Plain-data view of the state (for determinism checks and debugging)."""
        return {
            "seed": self.seed,
            "lambda_adj": self.lambda_adj,
            "camera": [self.camera.sensor_width_mm, self.camera.source_detector_mm],
            "d_sp": self.d_sp,
            "plan": [(c.id, c.start.tolist(), c.end.tolist()) for c in self.plan],
            "retrograde": list(self.retrograde),
            "carm": [self.carm.point.tolist(), self.carm.ray.tolist()],
            "plan_index": self.plan_index,
            "activity": self.activity,
            "view_name": self.view_name,
            "wires": [(w.tip.tolist(), w.direction.tolist(), w.inserted_depth) for w in self.wires],
            "screws": [(s.tip.tolist(), s.length, s.inserted_depth) for s in self.screws],
            "pending": self.pending,
            "frame_index": self.frame_index,
            "finished": self.finished,
        }


# --------------------------------------------------------------------------
# sequence start


def _uniform(rng, lo_hi) -> float:
    lo, hi = lo_hi
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def init_wire(rng: np.random.Generator, corridor: Corridor, config: SimConfig) -> WireState:
    """Tip uniformly within the configured radius of the entry, direction within the cone."""
    w = config.wire
    tip = geo.sample_in_sphere(rng, corridor.start, w.initial_tip_jitter_mm)
    direction = geo.sample_solid_angle(rng, corridor.axis, math.radians(w.initial_angle_jitter_deg))
    return WireState(tip, direction, corridor.id, corridor.length)


def start_sequence(
    rng: np.random.Generator,
    anatomy: AnatomySpec,
    config: SimConfig,
    seed: int = 0,
    sequence_id: int = 0,
) -> SequenceState:
    s, c = config.sequence, config.camera
    lambda_adj = _uniform(rng, s.lambda_adj_range)
    H, W = (int(v) for v in c.image_size_px)
    camera = geo.CameraModel(
        _uniform(rng, c.sensor_width_range_mm), _uniform(rng, c.source_detector_range_mm), H, W
    )
    d_sp = _uniform(rng, c.source_viewpoint_fraction_range) * camera.source_detector_mm

    if s.corridors is not None:
        ids = list(s.corridors)
    else:
        lo, hi = (int(v) for v in s.corridor_count_range)
        k = int(rng.integers(lo, hi + 1))
        ids = [CORRIDOR_IDS[i] for i in rng.permutation(len(CORRIDOR_IDS))[:k]]
    ids = ids[: s.max_tools_per_kind]
    plan, retro = [], []
    for cid in ids:
        corridor = anatomy.corridors[cid]
        swap = corridor.is_ramus and bool(rng.random() < s.retrograde_probability)
        plan.append(corridor.reversed() if swap else corridor)
        retro.append(swap)

    app = anatomy.app_frame
    start_point = geo.sample_in_sphere(rng, app.origin, c.start_position_jitter_mm)
    ap_ray = app.direction_from_app(config.views["ap"].ideal_ray_app)
    start_ray = geo.sample_solid_angle(rng, geo.unit(ap_ray), math.radians(c.start_angle_jitter_deg))
    projection = geo.make_projection(start_point, start_ray, camera, d_sp)

    state = SequenceState(
        seed=seed,
        sequence_id=sequence_id,
        config=config,
        views=config.views,
        anatomy=anatomy,
        lambda_adj=lambda_adj,
        camera=camera,
        d_sp=d_sp,
        plan=plan,
        retrograde=retro,
        carm=CArmView(start_point, start_ray),
        projection=projection,
    )
    if plan:
        state.wires.append(init_wire(rng, plan[0], config))
        state.wires[-1].serial = state.next_serial()
    else:
        state.finished = True
    return state


# --------------------------------------------------------------------------
# views


def sample_desired_view(rng: np.random.Generator, state: SequenceState) -> ViewSpec:
    row = state.config.desired_views[state.corridor.id]
    probs = np.array([row[v] for v in VIEW_NAMES])
    idx = int(rng.choice(len(VIEW_NAMES), p=probs / probs.sum()))
    return state.views[VIEW_NAMES[idx]]


@dataclass(frozen=True)
class ViewEvaluation:
    accepted: bool
    angle: float  # radians between current and desired ray
    offset_px: float  # distance of projected p* from the image centre
    reason: str = ""

    def __bool__(self) -> bool:
        return self.accepted


def centering_limit_px(fraction: float, camera: geo.CameraModel) -> float:
    """``fraction * min(H, W)`` in exact decimal arithmetic (0.4 * 384 -> 153.6, not 153.60000000000002)."""
    return float(Fraction(repr(float(fraction))) * min(camera.image_height_px, camera.image_width_px))


def evaluate_view(state: SequenceState, desired, tolerance: float | None = None) -> ViewEvaluation:
    """Accept when the ray is within tolerance AND p* projects near the image centre."""
    p_star, r_star = desired
    tol = state.view_spec.tolerance if tolerance is None else tolerance
    angle = geo.angle_between(state.carm.ray, r_star)
    cam = state.camera
    try:
        uv = geo.project(state.projection, p_star)
    except geo.ProjectionError as exc:
        log.debug("view rejected: %s", exc)
        return ViewEvaluation(False, angle, math.inf, f"desired point behind source: {exc}")
    cx, cy = cam.principal_point_px
    offset = math.hypot(uv[0] - cx, uv[1] - cy)
    limit = centering_limit_px(state.config.view.centering_fraction, cam)
    if angle > tol:
        return ViewEvaluation(False, angle, offset, "misaligned")
    if not offset < limit:
        return ViewEvaluation(False, angle, offset, "off-centre")
    return ViewEvaluation(True, angle, offset)


def view_window(state: SequenceState, desired) -> tuple[float, float]:
    """Ball radius (mm) and cap colatitude (rad) for the next view sample."""
    p_star, r_star = desired
    v = state.config.view
    lam = state.lambda_adj
    radius = geo.clamp(lam * float(np.linalg.norm(p_star - state.carm.point)), *v.position_clamp_mm)
    lo, hi = (math.radians(a) for a in v.angle_clamp_deg)
    colat = geo.clamp(lam * geo.angle_between(r_star, state.carm.ray), lo, hi)
    return radius, colat


def sample_view(rng: np.random.Generator, state: SequenceState, desired) -> tuple[np.ndarray, np.ndarray]:
    p_star, r_star = desired
    radius, colat = view_window(state, desired)
    point = geo.sample_in_sphere(rng, p_star, radius)
    ray = geo.sample_solid_angle(rng, geo.unit(r_star), colat)
    state.last_move = {"kind": "view", "radius_mm": radius, "colatitude": colat}
    return point, ray


def hunt_until_accepted(rng: np.random.Generator, state: SequenceState, desired, max_iterations: int = 100):
    """Run the sample/evaluate loop alone; returns re-aims used, or None past ``max_iterations``."""
    for i in range(max_iterations + 1):
        if evaluate_view(state, desired):
            return i
        if i == max_iterations:
            return None
        state.set_view(*sample_view(rng, state, desired))
    return None


# --------------------------------------------------------------------------
# wires


@dataclass(frozen=True)
class WireCheck:
    good: bool
    mode: str  # "barrel" or "orthogonal"
    inplane_angle: float  # unsigned image-plane angle between wire and corridor (rad)
    tip_inside: bool
    probe_inside: bool = True


def _silhouette_contains(projection: geo.Projection, corridor: Corridor, points) -> np.ndarray:
    """Whether 3D ``points`` project inside the corridor's projected silhouette band."""
    ends_uv, ends_w = projection.project_many(np.vstack([corridor.start, corridor.end]))
    uv, _ = projection.project_many(points)
    dist, t = kernels.segment_distance_2d(np.ascontiguousarray(uv), ends_uv[0].copy(), ends_uv[1].copy())
    depth = ends_w[0] + t * (ends_w[1] - ends_w[0])
    radius_px = corridor.radius * projection.camera.focal_px / depth
    return dist <= radius_px


def _image_angle(projection: geo.Projection, p0, v, q0, d, length: float) -> float:
    uv, _ = projection.project_many(np.vstack([p0, p0 + length * v, q0, q0 + length * d]))
    a = uv[1] - uv[0]
    b = uv[3] - uv[2]
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return math.atan2(abs(a[0] * b[1] - a[1] * b[0]), float(a @ b))


def barrel_angle(ray, corridor: Corridor) -> float:
    """Angle between the principal ray and the corridor axis, ignoring orientation."""
    ang = geo.angle_between(ray, corridor.axis)
    return min(ang, math.pi - ang)


def wire_geometry(state: SequenceState, wire: WireState, projection: geo.Projection | None = None) -> WireCheck:
    """Deterministic verdict: does the wire appear aligned with the target corridor?"""
    P = projection or state.projection
    corridor = state.corridor
    cfg = state.config.wire
    v = wire.direction
    if barrel_angle(P.ray, corridor) <= math.radians(cfg.down_the_barrel_deg):
        inside = _silhouette_contains(P, corridor, np.vstack([wire.tip, wire.tip + cfg.barrel_probe_mm * v]))
        theta = _image_angle(P, wire.tip, v, corridor.start, corridor.axis, corridor.length)
        return WireCheck(bool(inside.all()), "barrel", theta, bool(inside[0]), bool(inside[1]))
    theta = _image_angle(P, wire.tip, v, corridor.start, corridor.axis, corridor.length)
    tip_inside = bool(_silhouette_contains(P, corridor, wire.tip[None, :])[0])
    good = theta <= math.radians(cfg.align_tolerance_deg) and tip_inside
    return WireCheck(good, "orthogonal", theta, tip_inside)


def false_positive_probability(state: SequenceState, wire: WireState) -> float:
    frac = min(1.0, wire.inserted_depth / wire.max_depth) if wire.max_depth > 0 else 1.0
    return state.config.wire.false_positive_rate * (1.0 - frac)


def evaluate_wire(rng: np.random.Generator, state: SequenceState, wire: WireState, projection=None) -> str:
    """``"good"`` or ``"bad"``; a geometric "bad" flips to "good" with the false-positive probability."""
    check = wire_geometry(state, wire, projection)
    if check.good:
        return "good"
    p_fp = false_positive_probability(state, wire)
    if p_fp > 0 and rng.random() < p_fp:
        return "good"
    return "bad"


def signed_inplane_angle(wire_dir, corridor_dir, ray) -> float:
    """Signed rotation about ``ray`` taking the wire's image-plane direction onto the corridor's."""
    r = geo.unit(ray)
    a = wire_dir - (wire_dir @ r) * r
    b = corridor_dir - (corridor_dir @ r) * r
    if np.linalg.norm(a) < 1e-12 or np.linalg.norm(b) < 1e-12:
        return 0.0
    return math.atan2(float(r @ np.cross(a, b)), float(a @ b))


def sample_wire(rng: np.random.Generator, state: SequenceState, wire: WireState, projection=None) -> WireState:
    """Reposition a badly placed wire using only what the current view shows."""
    P = projection or state.projection
    corridor = state.corridor
    cfg = state.config.wire
    lam = state.lambda_adj
    ray = P.ray
    offset = wire.tip - corridor.start
    tip_radius = geo.clamp(lam * float(np.linalg.norm(offset)), *cfg.tip_clamp_mm)

    if barrel_angle(ray, corridor) <= math.radians(cfg.down_the_barrel_deg):
        lo, hi = (math.radians(a) for a in cfg.barrel_angle_clamp_deg)
        colat = geo.clamp(lam * geo.angle_between(wire.direction, corridor.axis), lo, hi)
        tip = geo.sample_in_sphere(rng, corridor.start, tip_radius)
        direction = geo.sample_solid_angle(rng, corridor.axis, colat)
        state.last_move = {"kind": "wire_barrel", "tip_radius_mm": tip_radius, "colatitude": colat}
        return WireState(tip, direction, wire.corridor_id, wire.max_depth, wire.inserted_depth, wire.serial)

    # remove the visible (in-plane) tip offset, keep the depth component
    center = corridor.start + (offset @ ray) * ray
    tip = geo.sample_in_sphere(rng, center, tip_radius)

    theta_star = signed_inplane_angle(wire.direction, corridor.axis, ray)
    mag = abs(theta_star)
    lo, hi = (math.radians(a) for a in cfg.inplane_clamp_deg)
    bound = geo.clamp(lam * mag, lo, hi)
    theta_par = float(rng.uniform(-bound, bound))
    perp_bound = cfg.out_of_plane_fraction * mag
    theta_perp = float(rng.uniform(-perp_bound, perp_bound)) if perp_bound > 0 else 0.0

    v = geo.rotate_about_axis(wire.direction, ray, theta_star + theta_par)
    perp_axis = np.cross(wire.direction, ray)
    if np.linalg.norm(perp_axis) > 1e-12:
        v = geo.rotate_about_axis(v, perp_axis / np.linalg.norm(perp_axis), theta_perp)
    state.last_move = {
        "kind": "wire_orthogonal",
        "tip_radius_mm": tip_radius,
        "theta_star": mag,
        "inplane_bound": bound,
        "theta_parallel": theta_par,
        "theta_perp": theta_perp,
    }
    return WireState(tip, geo.unit(v), wire.corridor_id, wire.max_depth, wire.inserted_depth, wire.serial)


# --------------------------------------------------------------------------
# insertion


def _active_tool(state: SequenceState):
    if state.activity == "insert_wire":
        return state.active_wire, state.active_wire.max_depth
    if state.activity == "insert_screw":
        return state.screws[-1], state.screws[-1].length
    raise ValueError(f"no insertion in activity {state.activity!r}")


def advance_insertion(rng: np.random.Generator, state: SequenceState) -> SequenceState:
    tool, limit = _active_tool(state)
    if tool.inserted_depth < limit:
        step = _uniform(rng, state.config.insertion.step_range_mm)
        tool.inserted_depth = min(limit, tool.inserted_depth + step)
    return state


def insertion_complete(state: SequenceState) -> bool:
    tool, limit = _active_tool(state)
    return tool.inserted_depth >= limit


def _start_screw(rng: np.random.Generator, state: SequenceState) -> None:
    wire = state.active_wire
    length = _uniform(rng, state.config.screw.length_range_mm)
    state.screws.append(
        ScrewState(wire.tip.copy(), wire.direction.copy(), wire.corridor_id, length, serial=state.next_serial())
    )
    state.activity = "insert_screw"


def _next_corridor(rng: np.random.Generator, state: SequenceState) -> None:
    state.plan_index += 1
    if state.plan_index >= len(state.plan):
        state.finished = True
        return
    state.activity = "position_wire"
    state.wires.append(init_wire(rng, state.corridor, state.config))
    state.wires[-1].serial = state.next_serial()
    state.pending = "start_view"


def _draw(rng: np.random.Generator, row: dict) -> str:
    keys = list(row)
    probs = np.array([row[k] for k in keys], dtype=float)
    return keys[int(rng.choice(len(keys), p=probs / probs.sum()))]


# --------------------------------------------------------------------------
# the decision-point loop


def _apply_pending(rng: np.random.Generator, state: SequenceState) -> str:
    action = state.pending
    if action == "start_view":
        spec = sample_desired_view(rng, state)
        state.view_name = spec.name
        desired = state.desired()
        if not evaluate_view(state, desired):
            state.set_view(*sample_view(rng, state, desired))
            return "view_sample"
        return "view_keep"
    if action == "hunt":
        state.set_view(*sample_view(rng, state, state.desired()))
        return "view_sample"
    if action == "resample_wire":
        state.wires[-1] = sample_wire(rng, state, state.active_wire)
        return "wire_resample"
    if action == "advance":
        advance_insertion(rng, state)
        return "insertion_advance"
    raise ValueError(f"unknown pending action {action!r}")


def step(rng: np.random.Generator, state: SequenceState) -> tuple[FrameRecord, SequenceState]:
    """Acquire one frame at the next decision point and advance the Markov state."""
    if state.finished:
        raise SequenceFinished("sequence already finished")
    event = _apply_pending(rng, state)
    evaluation = evaluate_view(state, state.desired())
    frame_value = "assessment" if evaluation else "hunting"
    verdict = None

    if not evaluation:
        next_pending = "hunt"
    elif state.activity == "position_wire":
        verdict = evaluate_wire(rng, state, state.active_wire)
        next_pending = "resample_wire" if verdict == "bad" else None
    else:
        next_pending = None

    record = make_record(state, frame_value, event, verdict)

    # transitions take effect after the frame
    if next_pending is not None:
        state.pending = next_pending
    elif state.activity == "position_wire":
        choice = _draw(rng, state.config.transitions.after_good_wire)
        if choice == "reverify":
            state.pending = "start_view"
        elif choice == "insert_wire":
            state.activity = "insert_wire"
            state.pending = "advance"
        else:
            _start_screw(rng, state)
            state.pending = "advance"
    elif insertion_complete(state):
        if state.activity == "insert_wire":
            choice = _draw(rng, state.config.transitions.after_wire_inserted)
            if choice == "insert_screw":
                _start_screw(rng, state)
                state.pending = "advance"
            else:
                _next_corridor(rng, state)
        else:
            done = state.screws[-1].corridor_id
            state.wires = [w for w in state.wires if w.corridor_id != done]
            _next_corridor(rng, state)
    elif rng.random() < state.config.insertion.view_change_probability:
        state.pending = "start_view"
    else:
        state.pending = "advance"

    state.frame_index += 1
    if state.frame_index >= state.config.sequence.max_frames:
        state.finished = True
    return record, state


def simulate_sequence(
    seed: int,
    anatomy: AnatomySpec | None,
    config: SimConfig,
    sequence_id: int = 0,
) -> tuple[AnatomySpec, list[FrameRecord]]:
    """Simulate one sequence; ``anatomy=None`` draws a synthetic pelvis from the same stream."""
    rng = np.random.default_rng(seed)
    if anatomy is None:
        anatomy = synth_pelvis(rng, config.anatomy.params())
    state = start_sequence(rng, anatomy, config, seed=seed, sequence_id=sequence_id)
    records = []
    while not state.finished:
        record, state = step(rng, state)
        records.append(record)
    return anatomy, records


def run_sequence(
    seed: int,
    anatomy: AnatomySpec | None,
    config: SimConfig,
    sequence_id: int = 0,
) -> list[FrameRecord]:
    return simulate_sequence(seed, anatomy, config, sequence_id)[1]


# --------------------------------------------------------------------------
# record construction


def make_record(state: SequenceState, frame_value: str, event: str, verdict: str | None = None) -> FrameRecord:
    P = state.projection
    cam = state.camera
    H, W = cam.image_height_px, cam.image_width_px
    anatomy = state.anatomy
    n_lm = len(LANDMARK_NAMES)
    corridors = [anatomy.corridors[c] for c in CORRIDOR_IDS]
    pts = np.vstack(
        [anatomy.landmark_array()]
        + [np.vstack([c.start, c.end]) for c in corridors]
    )
    uv, w = P.project_many(pts)

    landmarks = []
    for i, name in enumerate(LANDMARK_NAMES):
        if w[i] > 0:
            u, v = float(uv[i, 0]), float(uv[i, 1])
            landmarks.append({"name": name, "u": u, "v": v, "visible": bool(0 <= u < W and 0 <= v < H)})
        else:
            landmarks.append({"name": name, "u": None, "v": None, "visible": False})
    corr2d = []
    for j, c in enumerate(corridors):
        a, b = n_lm + 2 * j, n_lm + 2 * j + 1
        corr2d.append(
            {
                "id": c.id,
                "start_uv": uv[a].tolist() if w[a] > 0 else None,
                "end_uv": uv[b].tolist() if w[b] > 0 else None,
                "radius_px": c.radius * cam.focal_px / max(1e-9, 0.5 * (w[a] + w[b])),
            }
        )

    tools = [
        {
            "kind": "wire",
            "serial": wt.serial,
            "corridor": wt.corridor_id,
            "tip": wt.tip,
            "direction": wt.direction,
            "inserted_depth_mm": wt.inserted_depth,
            "length_mm": wt.max_depth,
            "diameter_mm": state.config.wire.diameter_mm,
        }
        for wt in state.wires
    ] + [
        {
            "kind": "screw",
            "serial": s.serial,
            "corridor": s.corridor_id,
            "tip": s.tip,
            "direction": s.direction,
            "inserted_depth_mm": s.inserted_depth,
            "length_mm": s.length,
            "thread_mm": state.config.screw.thread_mm,
        }
        for s in state.screws
    ]
    tools.sort(key=lambda t: t["serial"])

    ray_app = anatomy.app_frame.direction_to_app(state.carm.ray)
    corridor = state.corridor
    meta = {
        "seed": int(state.seed),
        "lambda_adj": state.lambda_adj,
        "event": event,
        "retrograde": bool(state.retrograde[state.plan_index]),
        "target_start": corridor.start,
        "target_end": corridor.end,
    }
    if verdict is not None:
        meta["wire_verdict"] = verdict
    return FrameRecord(
        sequence_id=state.sequence_id,
        frame_index=state.frame_index,
        corridor=corridor.id,
        activity=state.activity,
        view=state.view_name,
        frame_value=frame_value,
        camera={
            "P": P.matrix.reshape(-1),
            "sensor_width_mm": cam.sensor_width_mm,
            "source_detector_mm": cam.source_detector_mm,
            "source_viewpoint_mm": state.d_sp,
            "height_px": H,
            "width_px": W,
        },
        pose={"point": state.carm.point, "ray": state.carm.ray, "ray_app": ray_app},
        tools=tools,
        landmarks_2d=landmarks,
        corridors_2d=corr2d,
        meta=meta,
    )
