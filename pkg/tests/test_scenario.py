import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import point_distance, polygon_distance as shp_distance, rectangle_corners
from tunnelpark.geometry import ConvexPolygon, OrientedBox, Pose, VehicleParams, footprint_polygon
from tunnelpark.scenario import (
    BoundaryState,
    DilatedMap,
    Limits,
    PlannerSettings,
    ScenarioError,
    bundled_scenario_path,
    bundled_scenarios,
    default_scenario,
    load_bundled,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    wall_polygons,
)

SQUARE = ConvexPolygon(np.array([[9, 14], [11, 14], [11, 16], [9, 16]], dtype=float))


def same_scenario(a, b, tol=1e-12):
    da, db = scenario_to_dict(a), scenario_to_dict(b)
    obs_a, obs_b = da.pop("obstacles"), db.pop("obstacles")
    assert da == db
    assert len(obs_a) == len(obs_b)
    for pa, pb in zip(obs_a, obs_b):
        assert np.allclose(pa, pb, atol=tol, rtol=0)


def test_bundled_present():
    assert bundled_scenarios() == ["case1", "case2", "case3"]
    with pytest.raises(ScenarioError):
        bundled_scenario_path("nope")


@pytest.mark.parametrize("name", ["case1", "case2", "case3"])
def test_bundled_round_trip(name, tmp_path):
    sc = load_bundled(name)
    assert sc.planner == PlannerSettings()
    assert sc.planner.n_r + 1 == 61 and sc.planner.n_fe == 60
    path = tmp_path / "copy.json"
    save_scenario(sc, path)
    same_scenario(sc, load_scenario(path))


def test_defaults_fill_missing_fields():
    sc = scenario_from_dict({"bounds": [0, 0, 20, 20], "start": {"x": 5, "y": 10, "theta": 0},
                             "goal": {"x": 12, "y": 10, "theta": 0}})
    assert sc.vehicle == VehicleParams()
    assert sc.limits == Limits(4.0, 3.0, 0.7, 0.5)
    assert (sc.weights.w1, sc.weights.w2) == (0.1, 0.01)
    assert sc.planner == PlannerSettings(60, 60, 0.1, 8.0)


def test_clockwise_obstacle_normalized():
    cw = [[9, 14], [9, 16], [11, 16], [11, 14]]
    sc = scenario_from_dict({"bounds": [0, 0, 20, 20], "start": {"x": 3, "y": 4, "theta": 0},
                             "goal": {"x": 12, "y": 4, "theta": 0}, "obstacles": [cw]})
    assert sc.obstacles[0] == ConvexPolygon.from_points(cw[::-1])
    assert np.allclose(sorted(map(tuple, sc.obstacles[0].vertices)), sorted(map(tuple, cw)))


@pytest.mark.parametrize("doc, match", [
    ({"bounds": [0, 0, 20, 20], "start": {"x": 3, "y": 4, "theta": 0},
      "goal": {"x": 9.5, "y": 15, "theta": 0}, "obstacles": [[[9, 14], [11, 14], [11, 16], [9, 16]]]},
     "goal footprint collides"),
    ({"bounds": [0, 0, 20, 20], "start": {"x": 3, "y": 4, "theta": 0}}, "missing field"),
    ({"bounds": [0, 0, 20], "start": {"x": 3, "y": 4, "theta": 0},
      "goal": {"x": 9, "y": 4, "theta": 0}}, "bounds"),
    ({"bounds": [0, 0, 20, 20], "start": {"x": 3, "y": 4, "theta": 0, "v": 9},
      "goal": {"x": 9, "y": 4, "theta": 0}}, "exceeds limit"),
    ({"bounds": [0, 0, 20, 20], "start": {"x": 0.2, "y": 4, "theta": 0},
      "goal": {"x": 9, "y": 4, "theta": 0}}, "leaves the workspace"),
    ({"bounds": [0, 0, 20, 20], "start": {"x": 3, "y": 4, "theta": 0},
      "goal": {"x": 9, "y": 4, "theta": 0}, "limits": {"a_max": -1}}, "must be positive"),
    ({"bounds": [0, 0, 20, 20], "start": {"x": 3, "y": 4, "theta": 0},
      "goal": {"x": 9, "y": 4, "theta": 0}, "obstacles": [[[0, 0], [1, 0]]]}, "obstacle 0"),
    ({"bounds": [0, 0, 20, 20], "start": {"x": 3, "y": 4, "theta": 0},
      "goal": {"x": 9, "y": 4, "theta": 0}, "planner": {"n_r": 0}}, "at least 1"),
])
def test_validation_errors(doc, match):
    with pytest.raises(ScenarioError, match=match):
        scenario_from_dict(doc)


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ScenarioError, match="malformed"):
        load_scenario(p)
    with pytest.raises(OSError):
        load_scenario(tmp_path / "missing.json")


def test_name_defaults_to_stem(tmp_path):
    doc = scenario_to_dict(default_scenario())
    doc.pop("name")
    p = tmp_path / "lot7.json"
    p.write_text(json.dumps(doc))
    assert load_scenario(p).name == "lot7"


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(2, 18), st.floats(13, 18), st.floats(0.3, 1.2)), max_size=4),
       st.floats(-0.5, 0.5))
def test_save_load_identity(obstacles, theta):
    polys = []
    for cx, cy, r in obstacles:
        ang = np.linspace(0, 2 * math.pi, 6, endpoint=False) + 0.1
        polys.append(ConvexPolygon(np.column_stack([cx + r * np.cos(ang), cy + r * np.sin(ang)])))
    sc = default_scenario(obstacles=tuple(polys), start=BoundaryState(5.0, 5.0, theta))
    same_scenario(sc, scenario_from_dict(json.loads(json.dumps(scenario_to_dict(sc)))))


# -- dilated map ----------------------------------------------------------------

@pytest.fixture(scope="module")
def lot():
    return DilatedMap(default_scenario(obstacles=(SQUARE,)))


def test_point_clear_examples(lot):
    assert lot.point_clear((10.0, 6.0))
    assert not lot.point_clear((0.5 * lot.r_c, 6.0))  # near the left wall
    assert not lot.point_clear((10.0, 15.0))


def test_point_clear_matches_oracle(lot, rng):
    for p in rng.uniform(-1, 21, size=(500, 2)):
        d = min(point_distance(p, poly.vertices) for poly in lot.polygons)
        if abs(d - lot.r_c) > 1e-9:
            assert lot.point_clear(p) == (d >= lot.r_c)


def test_box_clear_examples(lot):
    assert lot.box_clear(OrientedBox((10, 6), 0.0, (0.1, 0.1, 0.1, 0.1)))
    assert not lot.box_clear(OrientedBox((10, 13.5), 0.0, (0.5, 0.5, 0.5, 0.5)))
    gap = lot.r_c - 0.01
    near = OrientedBox((11 + gap, 15), 0.0, (1.0, 0.5, 0.0, 0.5))
    assert shp_distance(near.vertices, SQUARE.vertices) == pytest.approx(gap, abs=1e-12)
    assert not lot.box_clear(near)
    far = OrientedBox((11 + lot.r_c + 0.01, 15), 0.0, (1.0, 0.5, 0.0, 0.5))
    assert lot.box_clear(far)


@settings(max_examples=60, deadline=None)
@given(st.floats(1, 19), st.floats(1, 19), st.floats(-3.2, 3.2),
       st.lists(st.floats(0.0, 3.0), min_size=4, max_size=4),
       st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4))
def test_box_clear_monotone(x, y, th, ext, frac):
    lot = DilatedMap(default_scenario(obstacles=(SQUARE,)))
    box = OrientedBox((x, y), th, ext)
    if lot.box_clear(box):
        sub = OrientedBox((x, y), th, [e * f for e, f in zip(ext, frac)])
        assert lot.box_clear(sub)


def test_state_clear_examples(lot):
    sc = lot.scenario
    assert lot.state_clear(sc.start.pose)
    # front disc center at the middle of the square
    off_f = lot.disc_offsets[0]
    assert not lot.state_clear(Pose(10.0 - off_f, 15.0, 0.0))


def test_discs_conservative(lot, rng):
    polys = lot.polygons
    veh = lot.scenario.vehicle
    hits = 0
    for x, y, th in rng.uniform((0, 0, -math.pi), (20, 20, math.pi), size=(1500, 3)):
        body = rectangle_corners(x, y, th, veh.l_r, veh.l_w + veh.l_f, veh.l_b / 2)
        if any(shp_distance(body, p.vertices) == 0.0 for p in polys):
            hits += 1
            assert not lot.state_clear(Pose(x, y, th))
    assert hits > 100


def test_walls_surround_bounds():
    walls = wall_polygons((0, 0, 10, 5))
    assert len(walls) == 4
    inside = footprint_polygon(Pose(2, 2.5, 0), VehicleParams()).vertices
    assert all(shp_distance(inside, w.vertices) > 0 for w in walls)
