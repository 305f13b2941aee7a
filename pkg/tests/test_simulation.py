import math
from collections import Counter

import numpy as np
import pytest

from fluorosim import geometry as geo
from fluorosim import simulation as sim
from fluorosim.anatomy import CORRIDOR_IDS, VIEW_NAMES, ideal_view
from fluorosim.config import SimConfig
from fluorosim.corpus import validate_sequence


def _focus(state, corridor_id, view_name):
    """Point the state at one corridor and view, C-arm at the ideal pose."""
    state.plan = [state.anatomy.corridors[corridor_id]]
    state.plan_index = 0
    state.view_name = view_name
    state.set_view(*state.desired())
    return state


def test_start_ranges(template, default_config):
    rng = np.random.default_rng(1)
    for _ in range(500):
        s = sim.start_sequence(rng, template, default_config)
        assert 0.6 <= s.lambda_adj <= 0.8
        assert 300 <= s.camera.sensor_width_mm <= 400
        assert 900 <= s.camera.source_detector_mm <= 1200
        assert 0.65 <= s.d_sp / s.camera.source_detector_mm <= 0.75
        w, c = s.active_wire, s.corridor
        assert np.linalg.norm(w.tip - c.start) <= 5.0
        assert geo.angle_between(w.direction, c.end - c.start) <= math.radians(15) + 1e-12
        assert 3 <= len(s.plan) <= 8 and len({p.id for p in s.plan}) == len(s.plan)


def test_retrograde_swaps_only_ramus(template, default_config):
    rng = np.random.default_rng(2)
    swapped = Counter()
    for _ in range(300):
        s = sim.start_sequence(rng, template, default_config)
        for c, retro in zip(s.plan, s.retrograde):
            original = template.corridors[c.id]
            if retro:
                assert c.is_ramus
                np.testing.assert_array_equal(c.start, original.end)
            else:
                np.testing.assert_array_equal(c.start, original.start)
            swapped[retro] += c.is_ramus
    assert swapped[True] > 0 and swapped[False] > 0


def test_start_is_deterministic(template, default_config):
    a = sim.start_sequence(np.random.default_rng(42), template, default_config).snapshot()
    b = sim.start_sequence(np.random.default_rng(42), template, default_config).snapshot()
    assert a == b


def test_sequence_seed_derivation():
    assert sim.sequence_seed(0, 0) == sim.splitmix64(0)
    assert sim.sequence_seed(7, 3) == 7 ^ sim.splitmix64(3)
    assert len({sim.sequence_seed(7, i) for i in range(1000)}) == 1000


def test_desired_view_frequencies_match_table(state):
    rng = np.random.default_rng(3)
    for cid in ("ramus_right", "teardrop_left", "s2_right"):
        state.plan = [state.anatomy.corridors[cid]]
        n = 100_000
        counts = Counter(sim.sample_desired_view(rng, state).name for _ in range(n))
        row = state.config.desired_views[cid]
        for v in VIEW_NAMES:
            assert abs(counts[v] / n - row[v]) < 0.02


def test_ramus_desired_views_mass(state):
    rng = np.random.default_rng(4)
    state.plan = [state.anatomy.corridors["ramus_left"]]
    names = [sim.sample_desired_view(rng, state).name for _ in range(10_000)]
    frac = sum(n in ("inlet", "oblique_right") for n in names) / len(names)
    assert frac >= 0.8 - 0.02


def test_point_mass_desired_view(template):
    row = {v: (1.0 if v == "outlet" else 0.0) for v in VIEW_NAMES}
    cfg = SimConfig().replace(desired_views={c: row for c in CORRIDOR_IDS})
    s = sim.start_sequence(np.random.default_rng(0), template, cfg)
    rng = np.random.default_rng(0)
    assert {sim.sample_desired_view(rng, s).name for _ in range(200)} == {"outlet"}


def test_perfect_view_accepted(state):
    _focus(state, "s1_left", "lateral")
    ev = sim.evaluate_view(state, state.desired())
    assert ev.accepted and ev.angle == pytest.approx(0.0, abs=1e-12) and ev.offset_px < 1e-6


def test_tolerance_boundary(state):
    _focus(state, "teardrop_right", "inlet")
    p, r = state.desired()
    tol = state.view_spec.tolerance
    axis = geo.unit(np.cross(r, [1.0, 0.0, 0.0]))
    for delta, expected in ((-math.radians(0.5), True), (math.radians(1.0), False)):
        state.set_view(p, geo.rotate_about_axis(r, axis, tol + delta))
        assert bool(sim.evaluate_view(state, (p, r))) is expected


def test_centering_boundary_is_strict(state, monkeypatch):
    # pitch 1 mm/px and magnification d_sd/d_sp = 2: a 76.8 mm lateral shift is 153.6 px
    _focus(state, "s2_left", "ap")
    state.camera = geo.CameraModel(384.0, 1000.0)
    state.d_sp = 500.0
    p, r = state.desired()
    e_u = geo.camera_basis(r)[0]
    limit = sim.centering_limit_px(0.4, state.camera)
    assert limit == 153.6

    state.set_view(p - 76.8 * e_u, r)
    ev = sim.evaluate_view(state, (p, r))
    assert ev.offset_px == pytest.approx(153.6, abs=1e-9)
    for shift in (76.8 - 1e-9, 76.8, 76.8 + 1e-9, 76.79, 76.81):
        state.set_view(p - shift * e_u, r)
        ev = sim.evaluate_view(state, (p, r))
        assert ev.accepted == (ev.offset_px < 153.6)
    state.set_view(p - 76.79 * e_u, r)
    assert sim.evaluate_view(state, (p, r)).accepted

    # a pixel exactly on the circle is rejected
    state.set_view(p, r)
    monkeypatch.setattr(sim.geo, "project", lambda P, x, min_depth=1e-9: np.array([192.0, 192.0 - 153.6]))
    ev = sim.evaluate_view(state, (p, r))
    assert ev.offset_px == 153.6 and not ev.accepted and ev.reason == "off-centre"


def test_desired_point_behind_source_rejected(state):
    _focus(state, "s1_right", "ap")
    p, r = state.desired()
    state.set_view(p + 2 * state.d_sp * r, r)
    ev = sim.evaluate_view(state, (p, r))
    assert not ev.accepted and "behind" in ev.reason


def test_view_window_clamps(state):
    _focus(state, "s1_left", "lateral")
    p, r = state.desired()
    state.lambda_adj = 0.7
    state.set_view(p + np.array([200.0, 0.0, 0.0]), r)
    radius, _ = sim.view_window(state, (p, r))
    assert radius == 100.0
    axis = geo.unit(np.cross(r, [0.0, 0.0, 1.0]))
    for lam in (0.6, 0.7, 0.8):
        state.lambda_adj = lam
        state.set_view(p, geo.rotate_about_axis(r, axis, math.radians(0.5)))
        _, colat = sim.view_window(state, (p, r))
        assert colat == pytest.approx(math.radians(1.0))


def test_hunting_windows_shrink(template):
    cfg = SimConfig().replace(view={"position_clamp_mm": [0.0, 1e6], "angle_clamp_deg": [0.0, 180.0]})
    rng = np.random.default_rng(5)
    s = sim.start_sequence(rng, template, cfg)
    s.view_name = "inlet"
    p, r = s.desired()
    before, after = [], []
    for _ in range(2000):
        s.set_view(p + rng.normal(scale=80, size=3), r)
        if sim.evaluate_view(s, (p, r)):
            continue
        before.append(np.linalg.norm(s.carm.point - p))
        point, _ = sim.sample_view(rng, s, (p, r))
        after.append(np.linalg.norm(point - p))
    assert np.mean(after) < np.mean(before)


def test_hunt_converges(state):
    rng = np.random.default_rng(6)
    state.lambda_adj = 0.6
    state.view_name = "outlet"
    assert sim.hunt_until_accepted(rng, state, state.desired(), 100) is not None


def _p0_zero(state):
    state.config = state.config.replace(wire={"false_positive_rate": 0.0})
    return state


@pytest.mark.parametrize("corridor_id", CORRIDOR_IDS)
def test_on_axis_wire_good_in_every_view(state, corridor_id):
    _p0_zero(state)
    rng = np.random.default_rng(0)
    for view in VIEW_NAMES:
        _focus(state, corridor_id, view)
        c = state.corridor
        wire = sim.WireState(c.start.copy(), c.axis.copy(), c.id, c.length)
        assert sim.evaluate_wire(rng, state, wire) == "good", view


def test_perpendicular_wire_bad(state):
    _p0_zero(state)
    _focus(state, "s1_left", "ap")
    c = state.corridor
    perp = geo.unit(np.cross(c.axis, state.carm.ray))
    wire = sim.WireState(c.start.copy(), perp, c.id, c.length)
    assert sim.wire_geometry(state, wire).mode == "orthogonal"
    assert sim.evaluate_wire(np.random.default_rng(0), state, wire) == "bad"


def test_false_positive_probability_decays(state):
    c = state.corridor
    wire = sim.WireState(c.start.copy(), c.axis.copy(), c.id, c.length)
    p0 = state.config.wire.false_positive_rate
    assert sim.false_positive_probability(state, wire) == pytest.approx(p0)
    wire.inserted_depth = 0.5 * c.length
    assert sim.false_positive_probability(state, wire) == pytest.approx(0.5 * p0)
    wire.inserted_depth = c.length
    assert sim.false_positive_probability(state, wire) == 0.0


def test_false_positive_rate_empirical(state):
    _focus(state, "s1_left", "ap")
    c = state.corridor
    perp = geo.unit(np.cross(c.axis, state.carm.ray))
    wire = sim.WireState(c.start.copy(), perp, c.id, c.length)
    rng = np.random.default_rng(9)
    good = sum(sim.evaluate_wire(rng, state, wire) == "good" for _ in range(20_000))
    assert abs(good / 20_000 - state.config.wire.false_positive_rate) < 0.006


def _misaligned_wire(state, theta_deg, tip_offset):
    c = state.corridor
    r = state.carm.ray
    v = geo.rotate_about_axis(c.axis, r, math.radians(theta_deg))
    return sim.WireState(c.start + tip_offset, v, c.id, c.length)


def test_sample_wire_clamps_examples(state):
    _focus(state, "s1_left", "ap")
    state.lambda_adj = 0.7
    e_u = geo.camera_basis(state.carm.ray)[0]
    wire = _misaligned_wire(state, 20.0, 4.0 * e_u)
    sim.sample_wire(np.random.default_rng(0), state, wire)
    move = state.last_move
    assert move["kind"] == "wire_orthogonal"
    assert move["theta_star"] == pytest.approx(math.radians(20.0))
    assert move["inplane_bound"] == pytest.approx(math.radians(10.0))
    assert move["tip_radius_mm"] == 5.0


def test_out_of_plane_bounded(state):
    _focus(state, "s2_right", "ap")
    rng = np.random.default_rng(10)
    for _ in range(10_000):
        theta = rng.uniform(-40, 40)
        wire = _misaligned_wire(state, theta, rng.normal(scale=4, size=3))
        sim.sample_wire(rng, state, wire)
        m = state.last_move
        assert abs(m["theta_perp"]) <= 0.1 * m["theta_star"] + 1e-15
        assert abs(m["theta_parallel"]) <= m["inplane_bound"]


def test_barrel_resample_shrinks_toward_axis(state):
    # find a view of a sacral corridor that looks down its axis
    _focus(state, "s1_left", "ap")
    c = state.corridor
    state.set_view(c.midpoint, c.axis)
    wire = sim.WireState(c.start + np.array([3.0, 0, 0]), geo.unit(c.axis + 0.2), c.id, c.length)
    assert sim.wire_geometry(state, wire).mode == "barrel"
    new = sim.sample_wire(np.random.default_rng(0), state, wire)
    assert state.last_move["kind"] == "wire_barrel"
    assert np.linalg.norm(new.tip - c.start) <= state.last_move["tip_radius_mm"]
    assert geo.angle_between(new.direction, c.axis) <= state.last_move["colatitude"] + 1e-12


def test_insertion_saturates(state):
    rng = np.random.default_rng(0)
    state.activity = "insert_wire"
    wire = state.active_wire
    depths = []
    for _ in range(100):
        sim.advance_insertion(rng, state)
        depths.append(wire.inserted_depth)
    assert all(b >= a for a, b in zip(depths, depths[1:]))
    assert depths[-1] == wire.max_depth
    assert sim.insertion_complete(state)


def test_step_after_finish_raises(template, default_config):
    s = sim.start_sequence(np.random.default_rng(0), template, default_config)
    s.finished = True
    with pytest.raises(sim.SequenceFinished):
        sim.step(np.random.default_rng(0), s)


def test_empty_plan_gives_empty_sequence(template):
    cfg = SimConfig().replace(sequence={"corridors": []})
    assert sim.run_sequence(3, template, cfg) == []


def test_run_sequence_deterministic(template, default_config):
    a = sim.run_sequence(11, template, default_config)
    b = sim.run_sequence(11, template, default_config)
    assert [r.to_json() for r in a] == [r.to_json() for r in b]


def test_ten_seeds_grammar_valid(template, default_config):
    for seed in range(10):
        records = sim.run_sequence(seed, template, default_config)
        assert validate_sequence(records).ok


def test_frame_cap(template):
    cfg = SimConfig().replace(sequence={"max_frames": 40, "corridor_count_range": [8, 8]})
    records = sim.run_sequence(0, template, cfg)
    assert len(records) == 40


def test_sequence_properties(small_corpus):
    for records in small_corpus:
        assert 0 < len(records) <= 1000
        for r in records:
            kinds = Counter(t["kind"] for t in r.tools)
            assert kinds["wire"] <= 8 and kinds["screw"] <= 8
            assert len(r.label_vector) == 21


def test_screws_within_length(small_corpus):
    for records in small_corpus:
        for r in records:
            for t in r.tools:
                if t["kind"] == "screw":
                    assert 0 <= t["inserted_depth_mm"] <= t["length_mm"]
                    assert 30 <= t["length_mm"] <= 130
                else:
                    assert 0 <= t["inserted_depth_mm"] <= t["length_mm"] + 1e-6


def test_insertion_depth_monotone_with_p0_zero(template):
    cfg = SimConfig().replace(wire={"false_positive_rate": 0.0})
    records = sim.run_sequence(5, template, cfg)
    depth = {}
    for r in records:
        for t in r.tools:
            key = (t["kind"], t["serial"])
            assert t["inserted_depth_mm"] >= depth.get(key, 0.0)
            depth[key] = t["inserted_depth_mm"]
