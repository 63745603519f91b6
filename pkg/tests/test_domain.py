import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crlab.domain import (
    BUILTIN_FAMILIES,
    ConfigError,
    DomainFamily,
    NotStarShaped,
    PointClass,
    builtin_family,
    check_total_space_compactness,
    classify_point,
    family_from_config,
    openness_probe,
    sample_boundary,
)


def test_classify_ball():
    fam = builtin_family("ball")
    assert classify_point(fam, [0, 0], 0.0) is PointClass.INTERIOR
    assert classify_point(fam, [1, 0], 0.0) is PointClass.BOUNDARY
    assert classify_point(fam, [2, 0], 0.0) is PointClass.EXTERIOR


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1.4), st.floats(0, 1.4))
def test_classification_monotone_in_r(a, b):
    # larger r never moves a point toward the interior
    fam = builtin_family("ball")
    order = {PointClass.INTERIOR: 0, PointClass.BOUNDARY: 1, PointClass.EXTERIOR: 2}
    lo, hi = sorted([a, b])
    assert order[fam.classify([lo, 0], 0.0)] <= order[fam.classify([hi, 0], 0.0)]


def test_sample_boundary_circle():
    s = sample_boundary(builtin_family("disk"), 0.0, 8)
    ang = 2 * np.pi * np.arange(8) / 8
    assert np.allclose(s.points[:, 0], np.exp(1j * ang), atol=1e-12)
    assert np.allclose(s.normals, s.points, atol=1e-12)
    assert not s.failures


def test_ellipsoid_z2_axis():
    fam = builtin_family("ellipsoid")
    R, ok = fam.ray_roots(np.array([[0, 1]], complex), 0.0)
    assert ok.all()
    assert R[0] == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("name, ts", [
    ("ball", [0.0]),
    ("ellipsoid", [0.0]),
    ("shifted_ball", [0.0, 0.5, 1.0]),
    ("perturbed_ball", [0.0, 1.0]),
    ("exhaustion_sublevel", [0.5, 0.6, 0.7]),
    ("disk", [0.0]),
])
def test_boundary_points_are_roots(name, ts):
    fam = builtin_family(name)
    for t in ts:
        s = sample_boundary(fam, t, 8)
        assert s.points.shape[0] > 0
        assert np.max(np.abs(fam.evaluate(s.points, t))) < 1e-10
        assert np.allclose(np.linalg.norm(s.normals, axis=-1), 1.0)


def test_not_star_shaped_detected():
    # thin annulus about |z| = 1 seen from a point inside it: rays cross twice
    fam = DomainFamily.from_text("abs2(abs2(z1)-1)-0.1", 1, [[-1.5, 1.5]] * 2, center=[1.0, 0.0])
    with pytest.raises(NotStarShaped):
        sample_boundary(fam, 0.0, 8)


def test_exterior_center_rejected():
    fam = DomainFamily.from_text("abs2(z1)-1", 1, [[-3, 3]] * 2, center=[2.0, 0.0], nonempty=False)
    with pytest.raises(NotStarShaped):
        fam.ray_roots(np.array([[1 + 0j]]), 0.0)


def test_empty_domain_rejected():
    fam = DomainFamily.from_text("abs2(z1)+1", 1, [[-1, 1]] * 2)
    with pytest.raises(ConfigError):
        fam.validate()


def _disk_indicators(radius_of_t, t_grid, n=41):
    x = np.linspace(-2.5, 2.5, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], -1)
    ind = [np.hypot(pts[:, 0], pts[:, 1]) <= radius_of_t(t) for t in t_grid]
    return np.array(ind), pts


def test_compactness_constant_ball():
    t = np.linspace(0, 1, 11)
    ind, pts = _disk_indicators(lambda s: 1.0, t)
    ok, w = check_total_space_compactness(ind, t, pts)
    assert ok and w is None


def test_compactness_growing_ball():
    t = np.linspace(0, 1, 11)
    ind, pts = _disk_indicators(lambda s: 1.0 + s, t)
    assert check_total_space_compactness(ind, t, pts)[0]


def test_compactness_jump_has_witness():
    t = np.linspace(0, 1, 11)
    ind, pts = _disk_indicators(lambda s: 1.0 if s < 0.5 else 2.0, t)
    ok, w = check_total_space_compactness(ind, t, pts)
    assert not ok
    point, t_next, t_here = w
    assert {round(t_next, 6), round(t_here, 6)} == {0.4, 0.5}
    assert np.hypot(*point) > 1.0


@pytest.mark.parametrize("name", ["ball", "shifted_ball", "disk", "exhaustion_sublevel"])
def test_openness_probe(name):
    ok, w = openness_probe(builtin_family(name), grid_n=9, t_n=3)
    assert ok, w


def test_family_config_round_trip(tmp_path):
    cfg = {"n": 2, "r": "abs2(z1)+abs2(z2)-1", "box": 1.5, "t_range": [0, 1], "boundary_tol": 1e-9}
    path = tmp_path / "fam.json"
    path.write_text(json.dumps(cfg))
    fam = family_from_config(path)
    assert fam.n == 2 and fam.box.shape == (4, 2)
    assert fam.evaluate(np.zeros(2, complex), 0.0) == -1.0
    assert family_from_config({"builtin": "ellipsoid"}).name == "ellipsoid"


@pytest.mark.parametrize("cfg", [
    {"n": 1, "r": "abs2(z1)-1", "box": 1.5, "colour": "red"},
    {"n": 1, "box": 1.5},
    {"n": 1, "r": "abs2(z1)-1", "box": [[1, -1], [-1, 1]]},
    {"n": 1, "r": "abs2(z1)-1", "box": 1.5, "t_range": [0, 2]},
    {"builtin": "torus"},
])
def test_bad_family_configs(cfg):
    with pytest.raises(ConfigError):
        family_from_config(cfg)


def test_builtins_validate():
    for name in BUILTIN_FAMILIES:
        builtin_family(name).validate()
