import math
import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glvr.field import (
    AnalyticScene,
    Blob,
    Box,
    CallCounter,
    ColorNet,
    FieldFormatError,
    Sphere,
    VoxelField,
    VoxelGrid,
    positional_encoding,
    transmittance_oracle,
    trilinear,
)

from conftest import slab_field

RED = (0.8, 0.2, 0.1)


def _zero_net(bands=0, hidden=(4,)):
    sizes = [6 + 12 * bands, *hidden, 3]
    return ColorNet([(np.zeros((o, i)), np.zeros(o)) for i, o in zip(sizes[:-1], sizes[1:])])


# --- analytic primitives -------------------------------------------------------------


def test_box_density_inside_and_outside():
    scene = AnalyticScene([Box(2.0, RED, lo=-np.ones(3), hi=np.ones(3))])
    assert scene.density_at([0.2, -0.3, 0.9]) == 2.0
    assert scene.density_at([1.5, 0.0, 0.0]) == 0.0


def test_blob_density_at_one_scale():
    scene = AnalyticScene([Blob(4.0, RED, center=np.zeros(3), scale=0.7)])
    assert scene.density_at([0.0, 0.7, 0.0]) == pytest.approx(4 * math.exp(-1), rel=1e-15)
    assert scene.density_at([0.0, 0.0, 0.0]) == pytest.approx(4.0)
    # beyond the cutoff the blob is treated as empty
    assert scene.density_at([0.0, 0.0, 3.0]) == 0.0


def test_constant_color():
    scene = AnalyticScene([Sphere(1.0, RED, center=np.zeros(3), radius=1.0)])
    np.testing.assert_array_equal(scene.color_at([0.1, 0.0, 0.0], [0, 0, -1]), RED)


def test_view_tint_faces_viewer():
    scene = AnalyticScene([Sphere(1.0, (1.0, 1.0, 1.0), "view", center=np.zeros(3), radius=1.0)])
    # looking straight at the near side: normal (0, 0, 1), direction (0, 0, -1)
    np.testing.assert_allclose(scene.color_at([0, 0, 0.5], [0, 0, -1]), [1, 1, 1])
    # far side faces away
    np.testing.assert_allclose(scene.color_at([0, 0, -0.5], [0, 0, -1]), [0, 0, 0])


def test_overlap_adds_density_and_mixes_color():
    a = Box(1.0, (1.0, 0.0, 0.0), lo=-np.ones(3), hi=np.ones(3))
    b = Box(3.0, (0.0, 0.0, 1.0), lo=-np.ones(3), hi=np.ones(3))
    scene = AnalyticScene([a, b])
    assert scene.density_at([0, 0, 0]) == 4.0
    np.testing.assert_allclose(scene.color_at([0, 0, 0], [1, 0, 0]), [0.25, 0.0, 0.75])


@pytest.mark.parametrize(
    "make",
    [
        lambda: Sphere(-1.0, RED),
        lambda: Sphere(1.0, RED, radius=0.0),
        lambda: Blob(1.0, RED, scale=-1.0),
        lambda: Box(1.0, RED, lo=np.ones(3), hi=np.zeros(3)),
        lambda: Sphere(1.0, (1.2, 0, 0)),
        lambda: Sphere(float("nan"), RED),
        lambda: Sphere(1.0, RED, "glossy"),
    ],
)
def test_invalid_primitives(make):
    with pytest.raises(FieldFormatError):
        make()


def test_counters_per_point():
    scene = slab_field(1.0)
    scene.density_at(np.zeros((17, 3)))
    scene.color_at(np.zeros((5, 3)), [1, 0, 0])
    scene.density_at([0, 0, 0])
    assert (scene.density_calls, scene.color_calls) == (18, 5)
    scene.reset_counters()
    assert (scene.density_calls, scene.color_calls) == (0, 0)


def test_counter_exact_under_threads():
    counter = CallCounter()

    def work():
        for _ in range(2000):
            counter.add(density=3, color=1)

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert counter.snapshot() == (48000, 16000)


def test_density_fuzz_never_negative_or_nan(voxel_field, demo_scenes):
    rng = np.random.default_rng(7)
    pts = rng.uniform(-50, 50, size=(100_000, 3))
    pts[::7] *= 1e-3
    for field in (voxel_field, *(s.field for s in demo_scenes.values())):
        sigma = field.density_at(pts)
        assert np.all(np.isfinite(sigma)) and np.all(sigma >= 0)


# --- transmittance oracle ------------------------------------------------------------


def test_transmittance_empty():
    scene = AnalyticScene([Sphere(0.0, RED, center=np.zeros(3), radius=1.0)])
    for t in (0.0, 1.0, 10.0):
        assert transmittance_oracle(scene, [-5, 0, 0], [1, 0, 0], t) == (1.0, True)


@pytest.mark.parametrize("sigma,length", [(0.5, 1.0), (3.0, 0.4), (math.log(2) / 1.5, 1.5)])
def test_transmittance_slab(sigma, length):
    scene = slab_field(sigma, length)
    value, exact = transmittance_oracle(scene, [-1, 0, 0], [1, 0, 0], 10.0)
    assert exact
    assert value == pytest.approx(math.exp(-sigma * length), rel=1e-14)


def test_transmittance_half():
    scene = slab_field(math.log(2) / 2.0, 2.0)
    assert transmittance_oracle(scene, [-1, 0, 0], [1, 0, 0], 5.0)[0] == pytest.approx(0.5, rel=1e-14)


def test_transmittance_blob_numeric():
    scene = AnalyticScene([Blob(2.0, RED, center=np.zeros(3), scale=0.5)])
    value, exact = transmittance_oracle(scene, [-3, 0, 0], [1, 0, 0], 6.0)
    assert not exact
    # line integral of a*exp(-s^2/c^2) truncated at |s| = 4c is a*c*sqrt(pi)*erf(4)
    assert value == pytest.approx(math.exp(-2.0 * 0.5 * math.sqrt(math.pi) * math.erf(4.0)), rel=1e-8)


def test_transmittance_sphere_chord():
    scene = AnalyticScene([Sphere(2.0, RED, center=np.zeros(3), radius=1.0)])
    # offset 0.6 from the center: chord length 2 * sqrt(1 - 0.36) = 1.6
    value, _ = transmittance_oracle(scene, [-4, 0.6, 0], [1, 0, 0], 8.0)
    assert value == pytest.approx(math.exp(-3.2), rel=1e-14)


# --- trilinear / voxel grid ----------------------------------------------------------


def test_trilinear_cell_examples():
    lo, hi = np.zeros(3), np.ones(3)
    assert trilinear(np.full((2, 2, 2), 3.5), lo, hi, [0.5, 0.5, 0.5]) == pytest.approx(3.5)
    values = np.zeros((2, 2, 2))
    values[:, :, 1] = 8.0
    assert trilinear(values, lo, hi, [0.5, 0.5, 0.5]) == pytest.approx(4.0)
    values = np.arange(8.0).reshape(2, 2, 2)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                assert trilinear(values, lo, hi, [i, j, k]) == values[i, j, k]


def test_trilinear_reproduces_trilinear_polynomials():
    rng = np.random.default_rng(3)
    c = rng.normal(size=8)
    lo, hi = np.array([-1.0, 0.0, 2.0]), np.array([1.0, 3.0, 2.5])
    shape = (5, 7, 4)
    axes = [np.linspace(lo[a], hi[a], shape[a]) for a in range(3)]
    x, y, z = np.meshgrid(*axes, indexing="ij")

    def poly(x, y, z):
        return c[0] + c[1] * x + c[2] * y + c[3] * z + c[4] * x * y + c[5] * y * z + c[6] * x * z + c[7] * x * y * z

    pts = rng.uniform(lo, hi, size=(100, 3))
    np.testing.assert_allclose(trilinear(poly(x, y, z), lo, hi, pts), poly(*pts.T), atol=1e-12, rtol=0)


def _small_grid():
    rng = np.random.default_rng(11)
    density = rng.uniform(0, 5, size=(3, 4, 5))
    color = rng.uniform(0, 1, size=(3, 4, 5, 3))
    return VoxelGrid(np.array([-1.0, -2.0, 0.0]), np.array([1.0, 2.0, 4.0]), density, color)


def test_voxel_vertex_color_and_outside_vacuum():
    grid = _small_grid()
    field = VoxelField(grid)
    vertex = np.array([0.0, -2.0 + 4.0 / 3.0, 3.0])  # index (1, 1, 3)
    np.testing.assert_allclose(field.color_at(vertex, [0, 0, 1]), grid.color[1, 1, 3], rtol=1e-12)
    assert field.density_at(vertex) == pytest.approx(grid.density[1, 1, 3], rel=1e-12)
    assert field.density_at([5.0, 0.0, 1.0]) == 0.0
    np.testing.assert_array_equal(field.color_at([5.0, 0.0, 1.0], [0, 0, 1]), [0, 0, 0])


def test_grid_roundtrip(tmp_path):
    grid = _small_grid()
    path = tmp_path / "g.glvx"
    grid.save(path)
    back = VoxelGrid.load(path)
    assert back.resolution == (3, 4, 5)
    np.testing.assert_array_equal(back.lo, grid.lo)
    np.testing.assert_array_equal(back.density, grid.density.astype(np.float32))
    np.testing.assert_array_equal(back.color, grid.color.astype(np.float32))


def test_grid_byte_layout_x_fastest():
    grid = _small_grid()
    data = grid.to_bytes()
    assert data[:4] == b"GLVX"
    assert struct.unpack_from("<4I", data, 4) == (1, 3, 4, 5)
    assert struct.unpack_from("<6d", data, 20) == (-1.0, -2.0, 0.0, 1.0, 2.0, 4.0)
    second = struct.unpack_from("<f", data, 68 + 4)[0]
    assert second == np.float32(grid.density[1, 0, 0])
    first_color = struct.unpack_from("<3f", data, 68 + 4 * 60)
    np.testing.assert_array_equal(first_color, grid.color[0, 0, 0].astype(np.float32))


@pytest.mark.parametrize(
    "mutate,message",
    [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:4] + struct.pack("<I", 2) + b[8:], "version"),
        (lambda b: b[:-4], "bytes"),
    ],
)
def test_grid_corrupt(mutate, message):
    with pytest.raises(FieldFormatError, match=message):
        VoxelGrid.from_bytes(mutate(_small_grid().to_bytes()))


def test_grid_rejects_negative_density():
    with pytest.raises(FieldFormatError):
        VoxelGrid(np.zeros(3), np.ones(3), -np.ones((2, 2, 2)), np.zeros((2, 2, 2, 3)))


# --- color network -------------------------------------------------------------------


def test_zero_net_is_half_grey():
    np.testing.assert_array_equal(_zero_net().forward([0.3, 0.1, 0.2], [0, 0, 1]), [0.5, 0.5, 0.5])
    np.testing.assert_array_equal(_zero_net(bands=2).forward([0.3, 0.1, 0.2], [0, 0, 1]), [0.5] * 3)


def test_saturating_linear_net():
    w = np.zeros((3, 6))
    w[:, :3] = np.eye(3)
    net = ColorNet([(w, np.full(3, 40.0))])
    np.testing.assert_allclose(net.forward([0.2, -0.4, 0.9], [1, 0, 0]), [1, 1, 1], atol=1e-15)


def test_hand_computed_two_layer_net():
    w1 = np.zeros((2, 6))
    w1[0, 0] = 1.0  # h0 = relu(px)
    w1[1, 5] = -1.0  # h1 = relu(-dz)
    w2 = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    net = ColorNet([(w1, np.zeros(2)), (w2, np.array([0.0, 0.0, -1.0]))])
    out = net.forward([0.5, 9.0, 9.0], [0.0, 0.0, -1.0])
    sig = lambda z: 1 / (1 + math.exp(-z))
    np.testing.assert_allclose(out, [sig(0.5), sig(2.0), sig(0.5)], rtol=1e-15)


def test_seeded_net_golden():
    net = ColorNet.random(0)
    np.testing.assert_allclose(
        net.forward([0.1, 0.2, 0.3], [0.0, 0.0, -1.0]),
        [0.48348470392285275, 0.2651920445303494, 0.3602747243566703],
        rtol=1e-12,
    )
    np.testing.assert_allclose(
        net.forward([[-0.5, 0.25, 0.75]], [[0.6, 0.0, 0.8]]),
        [[0.4896168009042737, 0.3634093908765657, 0.5031929772784463]],
        rtol=1e-12,
    )


def test_net_roundtrip(tmp_path):
    net = ColorNet.random(5, hidden=(16,), bands=1)
    path = tmp_path / "n.glnn"
    net.save(path)
    back = ColorNet.load(path)
    assert back.bands == 1
    p = np.random.default_rng(0).uniform(-1, 1, (20, 3))
    np.testing.assert_allclose(back.forward(p, [0, 0, 1]), net.forward(p, [0, 0, 1]), atol=1e-6)


def test_net_file_layout():
    net = ColorNet([(np.arange(18.0).reshape(3, 6), np.array([1.0, 2.0, 3.0]))])
    data = net.to_bytes()
    assert data[:4] == b"GLNN"
    assert struct.unpack_from("<4I", data, 4) == (1, 1, 3, 6)
    assert struct.unpack_from("<18f", data, 20) == tuple(range(18))
    assert struct.unpack_from("<3f", data, 92) == (1.0, 2.0, 3.0)
    assert len(data) == 104


def test_net_validation():
    with pytest.raises(FieldFormatError, match="layer 1"):
        ColorNet([(np.zeros((4, 6)), np.zeros(4)), (np.zeros((3, 5)), np.zeros(3))])
    with pytest.raises(FieldFormatError, match="3 channels"):
        ColorNet([(np.zeros((2, 6)), np.zeros(2))])
    with pytest.raises(FieldFormatError, match="input width"):
        ColorNet([(np.zeros((3, 7)), np.zeros(3))])
    with pytest.raises(FieldFormatError, match="truncated"):
        ColorNet.from_bytes(ColorNet.random(0).to_bytes()[:-10])


def test_positional_encoding_layout():
    x = np.array([[0.25, 0.5]])
    enc = positional_encoding(x, 2)
    expected = [0.25, 0.5, math.sin(math.pi / 4), math.sin(math.pi / 2), math.sin(math.pi / 2),
                math.sin(math.pi), math.cos(math.pi / 4), math.cos(math.pi / 2), math.cos(math.pi / 2),
                math.cos(math.pi)]
    np.testing.assert_allclose(enc[0], expected, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=6, max_size=6))
def test_net_output_in_unit_cube(values):
    out = ColorNet.random(1).forward(values[:3], values[3:])
    assert np.all((out >= 0) & (out <= 1))
