import math

import numpy as np
import pytest

from mbspect.forward import ProjectionGeometry, Sinogram
from mbspect.grid import PixelGrid
from mbspect.phantoms import (
    PHANTOMS,
    PhantomSpec,
    add_noise,
    default_n_det,
    make_geometry,
    make_phantom,
)
from mbspect.solvers import multibang_proportion


@pytest.mark.parametrize("name", sorted(PHANTOMS))
def test_phantoms_are_multibang(name):
    spec = PhantomSpec(name)
    a, f = make_phantom(spec, PixelGrid.unit_square(64))
    assert set(np.unique(a)) <= set(spec.admissible.levels)
    assert multibang_proportion(a, spec.admissible, 0.0) == 1.0
    assert f.min() >= 0
    assert np.all(np.isfinite(f))


def test_nested_disks_three_levels():
    a, _ = make_phantom(PhantomSpec("nested_disks", radii=(0.8, 0.4), values=(0.5, 1.0)),
                        PixelGrid.unit_square(64))
    assert set(np.unique(a)) == {0.0, 0.5, 1.0}


def test_binary_shapes_binary():
    spec = PhantomSpec("binary_shapes")
    a, _ = make_phantom(spec, PixelGrid.unit_square(96))
    assert set(np.unique(a)) <= {0.0, 1.0}
    assert spec.admissible.levels == (0.0, 1.0)


def test_shepp_logan_levels():
    a, _ = make_phantom(PhantomSpec("multibang_shepp_logan"), PixelGrid.unit_square(128))
    assert set(np.unique(a)) == {0.0, 0.2, 0.3, 0.4, 1.0}


def test_unknown_phantom():
    with pytest.raises(ValueError):
        PhantomSpec("walnut")


def test_source_inside_grid():
    g = PixelGrid.unit_square(64)
    _, f = make_phantom(PhantomSpec("binary_shapes"), g)
    F = f.reshape(64, 64)
    assert np.all(F[0] == 0) and np.all(F[-1] == 0) and np.all(F[:, 0] == 0) and np.all(F[:, -1] == 0)


def test_pixel_centre_sampling_independent_of_resolution():
    # the same physical point has the same value on nested grids
    spec = PhantomSpec("three_region")
    a32, _ = make_phantom(spec, PixelGrid.unit_square(32))
    a96, _ = make_phantom(spec, PixelGrid.unit_square(96))
    # pixel centres of the 32-grid coincide with the middle sub-pixel of 3x3 blocks
    np.testing.assert_array_equal(a32.reshape(32, 32), a96.reshape(96, 96)[1::3, 1::3])


def test_geometry_examples():
    g = PixelGrid.unit_square(200)
    one = make_geometry(1, 3, g, 5)
    assert one.n_rays == 3 and one.angles.size == 1
    assert make_geometry(12, 283, g, 0).n_rays == 12 * 283
    a, b = make_geometry(12, 91, g, 7), make_geometry(12, 91, g, 7)
    assert a.angles.tobytes() == b.angles.tobytes()
    assert a.offsets.tobytes() == b.offsets.tobytes()
    with pytest.raises(ValueError):
        make_geometry(0, 3, g, 0)
    with pytest.raises(ValueError):
        make_geometry(3, 1, g, 0)


def test_geometry_angles_and_offsets():
    g = PixelGrid.unit_square(50, side=3.0)
    n = 12
    geom = make_geometry(n, 71, g, 3)
    base = np.arange(n) * math.pi / n
    assert np.all(np.abs(geom.angles - base) <= math.pi / (100 * n))
    assert np.all(np.diff(geom.angles) > 0)
    assert geom.offsets[0] == pytest.approx(-g.M * g.dx / math.sqrt(2))
    assert geom.offsets[-1] == pytest.approx(g.M * g.dx / math.sqrt(2))
    np.testing.assert_allclose(geom.offsets, -geom.offsets[::-1], atol=1e-15)
    full = make_geometry(n, 71, g, 3, full_circle=True)
    np.testing.assert_array_equal(full.angles, 2 * geom.angles)


def test_geometry_seeds_differ():
    g = PixelGrid.unit_square(20)
    assert not np.array_equal(make_geometry(12, 5, g, 0).angles, make_geometry(12, 5, g, 1).angles)


def test_default_detector_count():
    assert default_n_det(PixelGrid.unit_square(200)) == 283
    assert default_n_det(PixelGrid.unit_square(64)) == 91


def _sino(n, seed=0):
    geom = ProjectionGeometry(np.linspace(0, math.pi, n // 100, endpoint=False), np.linspace(-1, 1, 100))
    return Sinogram(geom, np.random.default_rng(seed).uniform(0, 3, geom.n_rays))


def test_noise_examples():
    d = _sino(20000)
    assert np.array_equal(add_noise(d, 0.0, 4).values, d.values)
    n1, n2 = add_noise(d, 0.05, 11), add_noise(d, 0.05, 11)
    assert np.array_equal(n1.values, n2.values)
    rms = math.sqrt(np.mean(d.values ** 2))
    assert np.std(n1.values - d.values) == pytest.approx(0.05 * rms, rel=0.05)
    assert not np.array_equal(add_noise(d, 0.05, 12).values, n1.values)
    with pytest.raises(ValueError):
        add_noise(d, -0.1, 0)
