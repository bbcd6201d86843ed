import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ndtr

from gausstorsion.domain import (EQUALITY_FAMILIES, FAMILIES, Domain, Loop, boundary_measure,
                                 check_isoperimetric, domain_info, gaussian_measure,
                                 gaussian_perimeter, integrate_density, load_domain_spec,
                                 make_family, symmetrize, truncation_error_bounds)
from gausstorsion.errors import GeometryError
from gausstorsion.gauss import gauss_density, half_space_measure_inverse, isoperimetric_function


def _rect(x0, x1, y0, y1):
    v = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    return Domain((Loop(v, np.ones(4, bool)),))


def _rect_measure(x0, x1, y0, y1):
    return (ndtr(x1) - ndtr(x0)) * (ndtr(y1) - ndtr(y0))


@pytest.fixture(scope="module")
def families():
    out = {}
    for kind in FAMILIES:
        for s in (0.2, 0.5, 0.8):
            out[kind, s] = make_family(kind, s)
    return out


def test_unit_square_measure():
    assert gaussian_measure(_rect(0, 1, 0, 1)) == pytest.approx((ndtr(1) - 0.5) ** 2, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 2), st.floats(0.1, 3), st.floats(-3, 2), st.floats(0.1, 3))
def test_rectangle_measure_property(x0, w, y0, hgt):
    d = _rect(x0, x0 + w, y0, y0 + hgt)
    ref = _rect_measure(x0, x0 + w, y0, y0 + hgt)
    assert gaussian_measure(d) == pytest.approx(ref, rel=1e-11, abs=1e-15)
    assert boundary_measure(d) == pytest.approx(ref, rel=1e-11, abs=1e-15)


def test_rectangle_perimeter():
    d = _rect(-0.5, 1.0, 0.2, 0.9)
    # each side contributes phi_1(offset) times a 1-D Gaussian interval
    ref = ((gauss_density(-0.5) + gauss_density(1.0)) * (ndtr(0.9) - ndtr(0.2))
           + (gauss_density(0.2) + gauss_density(0.9)) * (ndtr(1.0) - ndtr(-0.5)))
    assert gaussian_perimeter(d) == pytest.approx(float(ref), rel=1e-12)


def test_additivity():
    whole = gaussian_measure(_rect(-1, 2, -0.5, 1.5))
    parts = gaussian_measure(_rect(-1, 0.3, -0.5, 1.5)) + gaussian_measure(_rect(0.3, 2, -0.5, 1.5))
    assert abs(whole - parts) <= 1e-12


def test_hole_is_subtracted():
    outer = np.array([[-2, -2], [2, -2], [2, 2], [-2, 2]], float)
    hole = np.array([[-1, -1], [-1, 1], [1, 1], [1, -1]], float)
    d = Domain((Loop(outer, np.ones(4, bool)), Loop(hole, np.ones(4, bool))))
    ref = _rect_measure(-2, 2, -2, 2) - _rect_measure(-1, 1, -1, 1)
    assert gaussian_measure(d) == pytest.approx(ref, rel=1e-12)
    assert boundary_measure(d) == pytest.approx(ref, rel=1e-12)


def test_disk_closed_forms():
    r = 1.3
    n = 2 ** 15
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    d = Domain((Loop(r * np.c_[np.cos(th), np.sin(th)], np.ones(n, bool)),))
    assert gaussian_measure(d) == pytest.approx(1 - math.exp(-r * r / 2), rel=1e-8)
    assert gaussian_perimeter(d) == pytest.approx(r * math.exp(-r * r / 2), rel=1e-8)


def test_disk_family_radius(families):
    for s in (0.2, 0.5, 0.8):
        r = families["disk", s].params["radius"]
        assert r == pytest.approx(math.sqrt(-2 * math.log(1 - s)), rel=1e-8)


def test_half_plane_family(families):
    for s in (0.2, 0.5, 0.8):
        d = families["half_plane", s]
        lam = float(half_space_measure_inverse(s))
        assert d.params["shift"] == pytest.approx(lam, abs=1e-10)
        assert gaussian_perimeter(d) == pytest.approx(float(isoperimetric_function(s)), rel=1e-12)
        b = truncation_error_bounds(d)
        assert b["radius"] > 8.9 and b["measure"] < 1e-17
    assert families["half_plane", 0.2].params["shift"] == pytest.approx(0.8416212335729142,
                                                                         abs=1e-12)


def test_family_calibration(families):
    for (kind, s), d in families.items():
        assert abs(gaussian_measure(d) - s) <= 1e-10, kind
        assert d.kind == kind


def test_family_margins(families):
    for (kind, s), d in families.items():
        margin = check_isoperimetric(d)
        if kind in EQUALITY_FAMILIES:
            assert abs(margin) <= 1e-6
        else:
            assert margin > 1e-3, (kind, s)


def test_rotation_invariance(families):
    for kind in ("strip", "square", "wedge", "half_plane"):
        d = families[kind, 0.5]
        for ang in (0.3, 1.9):
            r = d.rotated(ang)
            assert abs(gaussian_measure(r) - gaussian_measure(d)) <= 1e-10
            assert abs(gaussian_perimeter(r) - gaussian_perimeter(d)) <= 1e-10


def test_green_route_agrees_with_area_route(families):
    for (kind, s), d in families.items():
        assert abs(boundary_measure(d) - gaussian_measure(d)) <= 1e-12


def test_symmetrize():
    d = _rect(0, 1, 0, 1)
    hs = symmetrize(d)
    assert hs.measure() == pytest.approx(gaussian_measure(d), rel=1e-13)
    assert hs.perimeter() == pytest.approx(float(isoperimetric_function(gaussian_measure(d))))
    assert symmetrize(d, 0.5).lam == pytest.approx(0.0, abs=1e-15)


def test_validity_errors():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    with pytest.raises(GeometryError):
        Domain((Loop(sq[::-1], np.ones(4, bool)),))
    bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], float)
    with pytest.raises(GeometryError):
        Domain((Loop(bowtie, np.ones(4, bool)),))
    with pytest.raises(GeometryError):
        Domain((Loop(sq, np.array([True, True, False, True])),))
    with pytest.raises(GeometryError):
        Loop(sq[:2], np.ones(2, bool))
    with pytest.raises(GeometryError):
        make_family("ellipse", 0.5)
    with pytest.raises(GeometryError):
        make_family("disk", 1.0)
    # the GeometryError is also a ValueError
    with pytest.raises(ValueError):
        Domain(())


def test_load_domain_spec(tmp_path):
    spec = {"kind": "square", "target_measure": 0.3}
    a = load_domain_spec(spec)
    b = load_domain_spec(json.dumps(spec))
    p = tmp_path / "sq.json"
    p.write_text(json.dumps(spec))
    c = load_domain_spec(p)
    assert a.params["side"] == b.params["side"] == c.params["side"]
    info = domain_info(a)
    assert info["measure"] == pytest.approx(0.3, abs=1e-10)
    assert info["truncation_bounds"]["radius"] is None
    json.dumps(info)


def test_wedge_parameters():
    d = make_family("wedge", 0.5, {"apex": (0.0, 0.0)})
    # a wedge with the apex at the origin has measure alpha / (2 pi)
    assert d.params["opening_angle"] == pytest.approx(math.pi, rel=1e-8)


def test_integrate_density_matches_rectangle():
    tri = np.array([[[0, 0], [2, 0], [2, 1]], [[0, 0], [2, 1], [0, 1]]], float)
    assert integrate_density(tri) == pytest.approx(_rect_measure(0, 2, 0, 1), rel=1e-13)
