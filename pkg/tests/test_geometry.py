import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metascat.geometry import (
    GridSpec,
    Metasurface,
    Sphere,
    decode,
    encode,
    geometry_from_json,
    geometry_to_json,
    mirror_x,
    mirror_y,
    validate,
)

GRID = GridSpec()


def test_grid_defaults():
    assert GRID.n == 2
    assert GRID.cell_length == 5.0
    assert GRID.refractive_index == 2.0
    assert GRID.vector_length == 12
    assert GRID.radius_min == pytest.approx(0.25)
    assert GRID.radius_max == pytest.approx(2.25)


@pytest.mark.parametrize(
    "kwargs",
    [dict(n=0), dict(cell_length=0.0), dict(cell_length=-1.0), dict(refractive_index=1.0)],
)
def test_grid_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        GridSpec(**kwargs)


def test_decode_centered_max_radius():
    # triplet (0.5, 0.5, 1.0) -> sphere centered in its cell with r = r_max
    v = np.tile([0.5, 0.5, 1.0], 4)
    surface = decode(v, GRID)
    for i, s in enumerate(surface.spheres):
        ox, oy = GRID.cell_origin(i)
        assert s.x == pytest.approx(ox + 2.5)
        assert s.y == pytest.approx(oy + 2.5)
        assert s.r == pytest.approx(2.25)


def test_decode_all_zeros_minimum_corner():
    surface = decode(np.zeros(12), GRID)
    for i, s in enumerate(surface.spheres):
        ox, oy = GRID.cell_origin(i)
        assert s.r == pytest.approx(0.25)
        assert s.x == pytest.approx(ox + 0.25)
        assert s.y == pytest.approx(oy + 0.25)
    assert validate(surface) == []


def test_decode_rejects_out_of_range_entries():
    v = np.zeros(12)
    v[3] = 1.5
    with pytest.raises(ValueError):
        decode(v, GRID)
    v[3] = -0.1
    with pytest.raises(ValueError):
        decode(v, GRID)
    with pytest.raises(ValueError):
        decode(np.zeros(11), GRID)


def test_decode_always_valid_over_random_draws():
    # brute-force validity oracle over uniform draws
    rng = np.random.default_rng(1234)
    for _ in range(10_000):
        surface = decode(rng.random(12), GRID)
        assert validate(surface) == []


def test_encode_roundtrip_random_vectors():
    rng = np.random.default_rng(99)
    for _ in range(200):
        v = rng.random(12)
        assert np.allclose(encode(decode(v, GRID)), v, atol=1e-12)


def test_decode_encode_geometry_roundtrip():
    rng = np.random.default_rng(5)
    surface = decode(rng.random(12), GRID)
    again = decode(encode(surface), GRID)
    for a, b in zip(surface.spheres, again.spheres):
        assert a.x == pytest.approx(b.x, abs=1e-12)
        assert a.y == pytest.approx(b.y, abs=1e-12)
        assert a.r == pytest.approx(b.r, abs=1e-12)


def test_encode_centered_max_radius_sphere():
    spheres = []
    for i in range(4):
        ox, oy = GRID.cell_origin(i)
        spheres.append(Sphere(x=ox + 2.5, y=oy + 2.5, r=2.25))
    v = encode(Metasurface(spheres=tuple(spheres), grid=GRID))
    assert np.allclose(v, np.tile([0.5, 0.5, 1.0], 4), atol=1e-12)


def test_encode_rejects_radius_below_minimum():
    base = decode(np.full(12, 0.5), GRID).spheres
    shrunk = list(base)
    shrunk[0] = Sphere(x=base[0].x, y=base[0].y, r=0.1)  # below r_min = 0.25
    with pytest.raises(ValueError, match="radius"):
        encode(Metasurface(spheres=tuple(shrunk), grid=GRID))


def test_encode_rejects_center_outside_cell():
    base = decode(np.full(12, 0.5), GRID).spheres
    moved = list(base)
    moved[0] = Sphere(x=-1.0, y=base[0].y, r=base[0].r)
    with pytest.raises(ValueError, match="cell"):
        encode(Metasurface(spheres=tuple(moved), grid=GRID))


def test_validate_reports_overlap():
    base = decode(np.full(12, 0.5), GRID).spheres
    clashed = list(base)
    clashed[1] = Sphere(x=base[0].x, y=base[0].y, r=base[1].r)
    violations = validate(Metasurface(spheres=tuple(clashed), grid=GRID))
    assert any("overlap" in v for v in violations)


def test_validate_reports_cell_escape():
    base = decode(np.full(12, 0.5), GRID).spheres
    moved = list(base)
    ox, oy = GRID.cell_origin(0)
    moved[0] = Sphere(x=ox + 5.0, y=oy + 2.5, r=1.0)  # center on the cell edge
    violations = validate(Metasurface(spheres=tuple(moved), grid=GRID))
    assert any("beyond cell" in v for v in violations)


@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=12, max_size=12),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
)
@settings(max_examples=200, deadline=None)
def test_radius_monotone_in_p_r(entries, p_low, p_high):
    lo, hi = sorted((p_low, p_high))
    if hi - lo < 1e-12:
        return
    v = np.array(entries)
    w = v.copy()
    v[2], w[2] = lo, hi
    assert decode(w, GRID).spheres[0].r > decode(v, GRID).spheres[0].r


def test_mirror_x_matches_physical_mirror():
    rng = np.random.default_rng(7)
    for _ in range(50):
        v = rng.random(12)
        original = decode(v, GRID)
        mirrored = decode(mirror_x(v, GRID), GRID)
        width = GRID.substrate_length
        # cell columns swap: cell (row, col) maps to (row, n-1-col)
        for row in range(2):
            for col in range(2):
                a = original.spheres[row * 2 + col]
                b = mirrored.spheres[row * 2 + (1 - col)]
                assert b.x == pytest.approx(width - a.x, abs=1e-12)
                assert b.y == pytest.approx(a.y, abs=1e-12)
                assert b.r == pytest.approx(a.r, abs=1e-12)


def test_mirror_y_matches_physical_mirror():
    rng = np.random.default_rng(8)
    v = rng.random(12)
    original = decode(v, GRID)
    mirrored = decode(mirror_y(v, GRID), GRID)
    height = GRID.substrate_length
    for row in range(2):
        for col in range(2):
            a = original.spheres[row * 2 + col]
            b = mirrored.spheres[(1 - row) * 2 + col]
            assert b.y == pytest.approx(height - a.y, abs=1e-12)
            assert b.x == pytest.approx(a.x, abs=1e-12)


def test_mirror_is_involution():
    rng = np.random.default_rng(11)
    v = rng.random(12)
    assert np.allclose(mirror_x(mirror_x(v, GRID), GRID), v)
    assert np.allclose(mirror_y(mirror_y(v, GRID), GRID), v)


def test_json_roundtrip():
    rng = np.random.default_rng(3)
    v = rng.random(12)
    text = geometry_to_json(v, GRID)
    parsed = json.loads(text)
    assert set(parsed) == {"grid", "vector"}
    assert set(parsed["grid"]) == {"n", "cell_length", "refractive_index"}
    w, grid = geometry_from_json(text)
    assert grid == GRID
    assert np.array_equal(w, v)
