"""Causal phase decoder over per-frame geometric features, and per-level metrics.

Each of the four label levels is decoded by its own hidden Markov model:
transitions and naive-Bayes emissions over discretised features are estimated
by counting (add-one smoothing), and frames are labelled by causal
max-product decoding, so the prediction for frame t only sees frames <= t.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .anatomy import CORRIDOR_IDS, DEFAULT_VIEWS, VIEW_NAMES
from .geometry import rotate_about_axis
from .records import LABEL_GROUPS, FrameRecord

LEVELS = tuple(LABEL_GROUPS)  # corridor, activity, view, frame_value
DECODER_SCHEMA = 1
PX_PER_DEG = 2.0  # pixel noise per degree of feature noise

BIN_EDGES = {
    "view_angle": [2.0, 4.0, 7.0, 10.0, 15.0, 20.0, 30.0, 45.0, 60.0, 90.0],
    "residual": [1e-9, 1.0, 3.0, 6.0, 10.0, 20.0],
    "inplane": [2.0, 5.0, 10.0, 20.0, 45.0],
    "depth": [0.02, 0.1, 0.25, 0.5, 0.75, 0.95],
    "center": [0.25, 0.5, 0.75, 1.0, 1.5],
}
PROBE_MM = 30.0  # second point along the active tool used to match corridors

# discrete feature name -> number of categories
FEATURES = {
    **{f"angle_{v}": len(BIN_EDGES["view_angle"]) + 1 for v in VIEW_NAMES},
    "nearest_view": len(VIEW_NAMES),
    "within_view": len(VIEW_NAMES) + 1,  # nearest view if inside its tolerance, else last
    "residual": len(BIN_EDGES["residual"]) + 1,
    "corridor": len(CORRIDOR_IDS) + 1,
    "inplane": len(BIN_EDGES["inplane"]) + 1,
    "depth": len(BIN_EDGES["depth"]) + 1,
    "kind": 3,
    "n_wires": 9,
    "n_screws": 9,
    "center": len(BIN_EDGES["center"]) + 1,
}

DEFAULT_LEVEL_FEATURES = {
    "corridor": ["corridor", "nearest_view"],
    "activity": ["kind", "depth", "inplane"],
    "view": ["within_view", "corridor"],
    "frame_value": ["residual", "center", "nearest_view"],
}


@dataclass
class FrameFeatures:
    """Noisy observations of one frame; ``codes`` holds the discretised values."""

    ray_app: np.ndarray
    view_angles: np.ndarray  # degrees to each standard view's ideal ray
    previous_angles: np.ndarray | None  # view_angles of the preceding frame
    nearest_view: int
    view_residual: float  # degrees beyond the nearest view's tolerance
    corridor_index: int  # nearest projected corridor to the active tool, -1 if none
    inplane_angle: float  # degrees, folded to [0, 90]
    depth_fraction: float
    active_kind: int  # 0 none, 1 wire, 2 screw
    n_wires: int
    n_screws: int
    center_offset: float  # fraction of the centring radius
    noise_deg: float
    codes: dict = field(default_factory=dict)


def _bin(value: float, edges) -> int:
    return int(np.searchsorted(edges, value, side="right"))


def _random_perpendicular(rng, v: np.ndarray) -> np.ndarray:
    g = rng.normal(size=3)
    g -= (g @ v) * v
    n = np.linalg.norm(g)
    return g / n if n > 1e-12 else np.array([1.0, 0.0, 0.0])


def featurize(
    record: FrameRecord,
    rng: np.random.Generator,
    sigma_deg: float = 0.0,
    views=None,
    previous: FrameFeatures | None = None,
) -> FrameFeatures:
    """Derive noisy per-frame features from a record.

    ``previous`` is the preceding frame's features, kept for the motion term.
    The same number of random variates is drawn whatever ``sigma_deg`` is, so
    features at different noise levels share their random stream.
    """
    views = views or DEFAULT_VIEWS
    sigma = math.radians(sigma_deg)
    z = rng.normal(size=7)
    ray = np.asarray(record.pose["ray_app"], dtype=np.float64)
    ray /= np.linalg.norm(ray)
    axis = _random_perpendicular(rng, ray)
    if sigma > 0:
        ray = rotate_about_axis(ray, axis, sigma * z[0])
        ray /= np.linalg.norm(ray)

    ideal = np.array([views[v].ideal_ray_app for v in VIEW_NAMES])
    tol = np.degrees([views[v].tolerance for v in VIEW_NAMES])
    angles = np.degrees(np.arccos(np.clip(ideal @ ray, -1.0, 1.0)))
    nearest = int(np.argmin(angles))
    residual = max(0.0, float(angles[nearest] - tol[nearest]))

    cam = record.camera
    P = np.asarray(cam["P"], dtype=np.float64).reshape(3, 4)
    H, W = cam["height_px"], cam["width_px"]
    tools = record.tools
    n_wires = sum(t["kind"] == "wire" for t in tools)
    n_screws = sum(t["kind"] == "screw" for t in tools)
    corridor_index, inplane, depth, kind, center = -1, 0.0, 0.0, 0, 0.0
    if tools:
        tool = tools[-1]
        kind = 1 if tool["kind"] == "wire" else 2
        tip = np.asarray(tool["tip"], dtype=np.float64)
        direction = np.asarray(tool["direction"], dtype=np.float64)
        length = float(tool["length_mm"])
        uv, _ = kernels.project_points(P, np.ascontiguousarray(np.vstack([tip, tip + PROBE_MM * direction])))
        uv = uv + sigma_deg * PX_PER_DEG * z[1:5].reshape(2, 2)
        best = (math.inf, -1)
        for j, c in enumerate(record.corridors_2d):
            if c["start_uv"] is None or c["end_uv"] is None:
                continue
            a, b = np.asarray(c["start_uv"]), np.asarray(c["end_uv"])
            dist, _ = kernels.segment_distance_2d(np.ascontiguousarray(uv), a, b)
            score = float(dist.sum()) - 2.0 * float(c["radius_px"])
            if score < best[0]:
                best = (score, j)
        corridor_index = best[1]
        if corridor_index >= 0:
            c = record.corridors_2d[corridor_index]
            seg = np.asarray(c["end_uv"]) - np.asarray(c["start_uv"])
            wd = uv[1] - uv[0]
            if np.linalg.norm(seg) > 0 and np.linalg.norm(wd) > 0:
                ang = math.degrees(math.atan2(abs(wd[0] * seg[1] - wd[1] * seg[0]), float(wd @ seg)))
                inplane = min(ang, 180.0 - ang)
            mid = 0.5 * (np.asarray(c["start_uv"]) + np.asarray(c["end_uv"]))
            center = float(np.hypot(mid[0] - W / 2, mid[1] - H / 2) / (0.4 * min(H, W)))
        inplane = abs(inplane + sigma_deg * z[5])
        limit = length if length > 0 else 1.0
        depth = float(tool["inserted_depth_mm"]) / limit + sigma * z[6]

    feats = FrameFeatures(
        ray_app=ray,
        view_angles=angles,
        previous_angles=None if previous is None else previous.view_angles,
        nearest_view=nearest,
        view_residual=residual,
        corridor_index=corridor_index,
        inplane_angle=inplane,
        depth_fraction=depth,
        active_kind=kind,
        n_wires=n_wires,
        n_screws=n_screws,
        center_offset=center,
        noise_deg=sigma_deg,
    )
    feats.codes = discretize(feats)
    return feats


def discretize(f: FrameFeatures) -> dict:
    codes = {f"angle_{v}": _bin(a, BIN_EDGES["view_angle"]) for v, a in zip(VIEW_NAMES, f.view_angles)}
    codes.update(
        nearest_view=f.nearest_view,
        within_view=f.nearest_view if f.view_residual == 0.0 else len(VIEW_NAMES),
        residual=_bin(f.view_residual, BIN_EDGES["residual"]),
        corridor=f.corridor_index + 1,
        inplane=_bin(f.inplane_angle, BIN_EDGES["inplane"]),
        depth=_bin(f.depth_fraction, BIN_EDGES["depth"]),
        kind=f.active_kind,
        n_wires=min(f.n_wires, 8),
        n_screws=min(f.n_screws, 8),
        center=_bin(f.center_offset, BIN_EDGES["center"]),
    )
    return codes


def featurize_sequence(records, sigma_deg: float = 0.0, seed: int = 0, views=None) -> list[FrameFeatures]:
    if not records:
        return []
    rng = np.random.default_rng([int(seed), int(records[0].sequence_id)])
    out: list[FrameFeatures] = []
    for r in records:
        out.append(featurize(r, rng, sigma_deg, views, out[-1] if out else None))
    return out


# --------------------------------------------------------------------------
# motion evidence for the view level


@dataclass(frozen=True)
class MotionModel:
    """Likelihood of a C-arm move under "re-aim inside a shrinking cone".

    A re-aim toward view k draws the new ray uniformly from a cone about k's
    ideal ray whose half-angle is ``lambda * previous_angle_to_k`` clamped to
    ``angle_clamp_deg``. ``lambda`` is marginalised over a uniform grid on
    ``lambda_range``. Noise widens each cone by ``slack_per_deg * sigma``.
    """

    lambda_range: tuple = (0.6, 0.8)
    angle_clamp_deg: tuple = (1.0, 45.0)
    slack_per_deg: float = 3.0
    floor: float = 1e-3
    weight: float = 1.5
    grid: int = 9

    def log_term(self, angles, previous, sigma_deg: float = 0.0) -> np.ndarray:
        """Per-view log evidence; zeros when there is no (detectable) move."""
        k = len(angles)
        if previous is None or (sigma_deg == 0.0 and np.array_equal(angles, previous)):
            return np.zeros(k)
        lam = np.linspace(self.lambda_range[0], self.lambda_range[1], self.grid)[:, None]
        lo, hi = self.angle_clamp_deg
        cone = np.clip(lam * previous[None, :], lo, hi) + 0.05 + self.slack_per_deg * sigma_deg
        density = (angles[None, :] <= cone) / (1.0 - np.cos(np.radians(cone)))
        lik = density.mean(axis=0)
        total = lik.sum()
        if total <= 0:
            return np.zeros(k)
        return self.weight * np.log(self.floor + lik / total)

    def to_dict(self) -> dict:
        return {
            "lambda_range": list(self.lambda_range),
            "angle_clamp_deg": list(self.angle_clamp_deg),
            "slack_per_deg": self.slack_per_deg,
            "floor": self.floor,
            "weight": self.weight,
            "grid": self.grid,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MotionModel":
        doc = dict(doc)
        doc["lambda_range"] = tuple(doc["lambda_range"])
        doc["angle_clamp_deg"] = tuple(doc["angle_clamp_deg"])
        return cls(**doc)


# --------------------------------------------------------------------------
# decoder


@dataclass
class LevelModel:
    classes: tuple
    features: list
    log_init: np.ndarray
    log_trans: np.ndarray
    log_emit: dict  # feature -> (n_classes, n_categories)
    motion: MotionModel | None = None  # view level only

    def emission_matrix(self, feats: list[FrameFeatures]) -> np.ndarray:
        out = np.zeros((len(feats), len(self.classes)))
        for name in self.features:
            table = self.log_emit[name]
            codes = np.fromiter((f.codes[name] for f in feats), dtype=np.int64, count=len(feats))
            out += table[:, codes].T
        if self.motion is not None:
            for t, f in enumerate(feats):
                out[t] += self.motion.log_term(f.view_angles, f.previous_angles, f.noise_deg)
        return out


@dataclass
class PhaseDecoder:
    levels: dict
    noise_deg: float = 0.0
    meta: dict = field(default_factory=dict)

    def decode(self, feats: list[FrameFeatures]) -> list[dict]:
        return decode(self, feats)

    def log_likelihood(self, feats: list[FrameFeatures], level: str) -> float:
        m = self.levels[level]
        return kernels.forward_log_likelihood(m.log_init, m.log_trans, m.emission_matrix(feats))

    def to_dict(self) -> dict:
        return {
            "schema_version": DECODER_SCHEMA,
            "kind": "phase_decoder",
            "noise_deg": self.noise_deg,
            "bin_edges": BIN_EDGES,
            "meta": self.meta,
            "levels": {
                name: {
                    "classes": list(m.classes),
                    "features": list(m.features),
                    "log_init": m.log_init.tolist(),
                    "log_trans": m.log_trans.tolist(),
                    "log_emit": {k: v.tolist() for k, v in m.log_emit.items()},
                    "motion": None if m.motion is None else m.motion.to_dict(),
                }
                for name, m in self.levels.items()
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PhaseDecoder":
        if doc.get("schema_version") != DECODER_SCHEMA or doc.get("kind") != "phase_decoder":
            raise ValueError("not a phase decoder document (schema mismatch)")
        levels = {}
        for name, d in doc["levels"].items():
            levels[name] = LevelModel(
                classes=tuple(d["classes"]),
                features=list(d["features"]),
                log_init=np.asarray(d["log_init"], dtype=np.float64),
                log_trans=np.ascontiguousarray(d["log_trans"], dtype=np.float64),
                log_emit={k: np.asarray(v, dtype=np.float64) for k, v in d["log_emit"].items()},
                motion=None if d.get("motion") is None else MotionModel.from_dict(d["motion"]),
            )
        return cls(levels, float(doc.get("noise_deg", 0.0)), doc.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "PhaseDecoder":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _normalise_log(counts: np.ndarray) -> np.ndarray:
    return np.log(counts / counts.sum(axis=-1, keepdims=True))


def fit(
    corpus,
    sigma_deg: float = 0.0,
    seed: int = 0,
    level_features: dict | None = None,
    views=None,
    motion: bool = True,
) -> PhaseDecoder:
    """Count-based estimates with add-one smoothing from a list of record sequences.

    With ``motion`` the view level also scores C-arm moves; its step-size
    range is taken from the ``lambda_adj`` recorded in the training metadata.
    """
    corpus = [seq for seq in corpus if seq]
    if not corpus:
        raise ValueError("cannot fit a decoder on an empty corpus")
    level_features = level_features or DEFAULT_LEVEL_FEATURES
    featurized = [featurize_sequence(seq, sigma_deg, seed, views) for seq in corpus]
    motion_model = None
    if motion:
        lams = [seq[0].meta["lambda_adj"] for seq in corpus if "lambda_adj" in seq[0].meta]
        motion_model = MotionModel(lambda_range=(min(lams), max(lams))) if lams else MotionModel()
    levels = {}
    for level in LEVELS:
        classes = LABEL_GROUPS[level]
        index = {c: i for i, c in enumerate(classes)}
        k = len(classes)
        init = np.ones(k)
        trans = np.ones((k, k))
        emit = {name: np.ones((k, FEATURES[name])) for name in level_features[level]}
        for seq, feats in zip(corpus, featurized):
            ys = [index[r.labels[level]] for r in seq]
            init[ys[0]] += 1
            for a, b in zip(ys[:-1], ys[1:]):
                trans[a, b] += 1
            for y, f in zip(ys, feats):
                for name, table in emit.items():
                    table[y, f.codes[name]] += 1
        levels[level] = LevelModel(
            classes=classes,
            features=list(level_features[level]),
            log_init=_normalise_log(init),
            log_trans=np.ascontiguousarray(_normalise_log(trans)),
            log_emit={name: _normalise_log(t) for name, t in emit.items()},
            motion=motion_model if level == "view" else None,
        )
    meta = {"sequences": len(corpus), "frames": sum(len(s) for s in corpus), "seed": seed}
    return PhaseDecoder(levels, sigma_deg, meta)


def uniform_decoder(level_features: dict | None = None) -> PhaseDecoder:
    """Baseline with uniform initial, transition and emission distributions."""
    level_features = level_features or DEFAULT_LEVEL_FEATURES
    levels = {}
    for level in LEVELS:
        k = len(LABEL_GROUPS[level])
        levels[level] = LevelModel(
            classes=LABEL_GROUPS[level],
            features=list(level_features[level]),
            log_init=np.full(k, -math.log(k)),
            log_trans=np.full((k, k), -math.log(k)),
            log_emit={n: np.full((k, FEATURES[n]), -math.log(FEATURES[n])) for n in level_features[level]},
        )
    return PhaseDecoder(levels)


def decode(decoder: PhaseDecoder, feats: list[FrameFeatures]) -> list[dict]:
    """Per-frame predictions ``{level: label}``; causal in the frame order."""
    if not feats:
        return []
    out = [dict() for _ in feats]
    for level, m in decoder.levels.items():
        log_emit = np.ascontiguousarray(m.emission_matrix(feats))
        path = kernels.causal_max_product(m.log_init, m.log_trans, log_emit)
        for frame, idx in zip(out, path):
            frame[level] = m.classes[int(idx)]
    return out


# --------------------------------------------------------------------------
# metrics


@dataclass
class Metrics:
    accuracy: dict
    confusion: dict  # level -> (truth x prediction) counts
    n_frames: int

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([self.accuracy[level] for level in LEVELS]))

    def to_dict(self) -> dict:
        return {
            "frames": self.n_frames,
            "accuracy": dict(self.accuracy),
            "mean_accuracy": self.mean_accuracy,
            "confusion": {
                level: {"classes": list(LABEL_GROUPS[level]), "matrix": cm.tolist()}
                for level, cm in self.confusion.items()
            },
        }

    def to_text(self) -> str:
        lines = [f"{'level':<12}{'accuracy':>10}", "-" * 22]
        for level in LEVELS:
            lines.append(f"{level:<12}{100 * self.accuracy[level]:>9.2f}%")
        lines.append("-" * 22)
        lines.append(f"{'mean':<12}{100 * self.mean_accuracy:>9.3f}%")
        lines.append(f"frames: {self.n_frames}")
        return "\n".join(lines)


def evaluate(predictions, truth) -> Metrics:
    """Frame-level accuracy per level, the four-level mean, and confusion matrices.

    Both arguments are equal-length sequences of ``{level: label}`` mappings
    (FrameRecords are accepted for ``truth``).
    """
    truth = [t.labels if isinstance(t, FrameRecord) else t for t in truth]
    predictions = list(predictions)
    if len(predictions) != len(truth):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(truth)} labels")
    accuracy, confusion = {}, {}
    for level in LEVELS:
        classes = LABEL_GROUPS[level]
        index = {c: i for i, c in enumerate(classes)}
        cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for p, t in zip(predictions, truth):
            cm[index[t[level]], index[p[level]]] += 1
        confusion[level] = cm
        accuracy[level] = float(np.trace(cm) / cm.sum()) if cm.sum() else float("nan")
    return Metrics(accuracy, confusion, len(truth))


def evaluate_corpus(decoder: PhaseDecoder, corpus, sigma_deg: float = 0.0, seed: int = 0) -> Metrics:
    preds, truth = [], []
    for seq in corpus:
        feats = featurize_sequence(seq, sigma_deg, seed)
        preds += decode(decoder, feats)
        truth += [r.labels for r in seq]
    return evaluate(preds, truth)
