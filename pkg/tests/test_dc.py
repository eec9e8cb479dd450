import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthcoeff.dc import (
    BinGrid,
    decode_3coeff,
    decode_all,
    decode_image,
    encode_depths,
    encode_image,
    encode_pixel,
)
from depthcoeff.errors import (
    InvalidInputError,
    MissingPixelError,
    NormalizationError,
    RangeError,
)

TEN = BinGrid(0.0, 10.0, 10)


def test_grid_centers_and_width():
    g = BinGrid.kitti()
    assert g.b == 1.0
    assert g.centers[0] == 0.5 and g.centers[-1] == 79.5
    np.testing.assert_allclose(np.diff(g.centers), g.b)
    nyu = BinGrid.nyu()
    assert nyu.b == pytest.approx(0.1)
    np.testing.assert_allclose(nyu.centers[:3], [0.05, 0.15, 0.25])


@pytest.mark.parametrize("args", [(0.0, 0.0, 10), (5.0, 1.0, 10), (0.0, 10.0, 2), (-1.0, 10.0, 10)])
def test_grid_rejects_bad_parameters(args):
    with pytest.raises(InvalidInputError):
        BinGrid(*args)


def test_encode_worked_example():
    c = encode_pixel(7.25, TEN)
    # 1-based bins (7, 8, 9) are 0-based (6, 7, 8); D_8 = 7.5 so delta = -0.25
    expected = np.zeros(10)
    expected[6:9] = [0.375, 0.5, 0.125]
    np.testing.assert_array_equal(c, expected)
    assert float(c @ TEN.centers) == pytest.approx(7.25, abs=1e-12)


def test_encode_at_center_is_symmetric():
    c = encode_pixel(4.5, TEN)
    np.testing.assert_array_equal(c[3:6], [0.25, 0.5, 0.25])
    assert c.sum() == 1.0


def test_encode_at_bin_edge_uses_lower_bin():
    c = encode_pixel(8.0, TEN)
    np.testing.assert_array_equal(c[6:9], [0.0, 0.5, 0.5])
    assert decode_3coeff(c, TEN) == pytest.approx(8.0, abs=1e-12)


def test_encode_range_and_clamp():
    with pytest.raises(RangeError):
        encode_pixel(0.7, TEN)
    with pytest.raises(RangeError):
        encode_pixel(9.5, TEN)
    # edges of the encodable range leave a zero coefficient on the missing side
    np.testing.assert_array_equal(encode_pixel(1.0, TEN)[:2], [0.5, 0.5])
    assert decode_all(encode_pixel(0.7, TEN, clamp=True), TEN) == pytest.approx(1.0)
    assert decode_all(encode_pixel(40.0, TEN, clamp=True), TEN) == pytest.approx(9.0)


@pytest.mark.parametrize("bad", [np.nan, np.inf, 0.0, -3.0])
def test_encode_rejects_invalid_depth(bad):
    with pytest.raises(InvalidInputError):
        encode_pixel(bad, TEN, clamp=True)


def test_encode_image_missing_and_single_pixel():
    img = np.zeros((3, 4))
    assert not encode_image(img, TEN).any()
    img[1, 2] = 4.5
    dc = encode_image(img, TEN)
    assert dc.shape == (3, 4, 10)
    np.testing.assert_array_equal(dc[1, 2, 3:6], [0.25, 0.5, 0.25])
    dc[1, 2] = 0
    assert not dc.any()


def test_encode_image_reports_pixel_coordinates():
    img = np.zeros((2, 3))
    img[1, 2] = 42.0
    with pytest.raises(RangeError, match=r"pixel \(1, 2\)"):
        encode_image(img, TEN)


def test_encode_image_round_trip():
    rng = np.random.default_rng(3)
    img = rng.uniform(1.0, 9.0, (6, 7))
    img[rng.random((6, 7)) < 0.4] = 0
    dc = encode_image(img, TEN)
    back = decode_image(dc, TEN, "3coeff")
    np.testing.assert_allclose(back, img, atol=1e-9, rtol=0)
    np.testing.assert_allclose(decode_image(dc, TEN, "all"), img, atol=1e-9, rtol=0)


def test_decode_all_examples():
    one_hot = np.zeros(10)
    one_hot[4] = 1
    assert decode_all(one_hot, TEN) == TEN.centers[4]
    bimodal = np.zeros(10)
    bimodal[[1, 5]] = 0.5  # centers 1.5 and 5.5
    assert decode_all(bimodal, TEN) == pytest.approx(3.5)
    assert decode_all(encode_pixel(7.25, TEN), TEN) == pytest.approx(7.25, abs=1e-12)


def test_decode_all_mixes_bimodal_vector():
    g = BinGrid(1.0, 9.0, 4)  # centers 2, 4, 6, 8
    c = np.zeros(4)
    c[[0, 2]] = 0.5
    assert decode_all(c, g) == pytest.approx(4.0)
    assert decode_3coeff(c, g) == 2.0


def test_decode_all_errors_and_renormalization():
    with pytest.raises(MissingPixelError):
        decode_all(np.zeros(10), TEN)
    c = encode_pixel(5.2, TEN) * (1 + 5e-7)
    assert decode_all(c, TEN) == pytest.approx(5.2, abs=1e-12)
    with pytest.raises(NormalizationError):
        decode_all(encode_pixel(5.2, TEN) * 1.01, TEN)


def test_decode_3coeff_picks_a_peak():
    c = np.zeros(10)
    c[[2, 3, 9]] = [0.25, 0.30, 0.45]  # 1-based bins 3, 4, 10
    assert decode_3coeff(c, TEN) == TEN.centers[9]
    assert decode_3coeff(encode_pixel(7.25, TEN), TEN) == pytest.approx(7.25, abs=1e-12)
    boundary = np.zeros(10)
    boundary[0] = 1
    assert decode_3coeff(boundary, TEN) == TEN.centers[0]
    with pytest.raises(MissingPixelError):
        decode_3coeff(np.zeros(10), TEN)


def test_decode_3coeff_tie_goes_to_lowest_index():
    c = np.zeros(10)
    c[[2, 7]] = 0.5
    assert decode_3coeff(c, TEN) == TEN.centers[2]


def test_decode_image_lifts_pixel_examples():
    c = np.zeros((1, 3, 10))
    c[0, 0, 4] = 1
    c[0, 1, [2, 3, 9]] = [0.25, 0.30, 0.45]
    np.testing.assert_allclose(decode_image(c, TEN, "3coeff"), [[4.5, 9.5, 0.0]])
    np.testing.assert_allclose(decode_image(c[:, :1], TEN, "all"), [[4.5]])
    with pytest.raises(InvalidInputError):
        decode_image(c, TEN, "median")


grids = st.sampled_from([BinGrid.kitti(), BinGrid.nyu(), BinGrid(2.0, 12.0, 10), BinGrid(0.0, 80.0, 10)])


@settings(max_examples=300, deadline=None)
@given(grids, st.floats(0.0, 1.0))
def test_round_trip_property(grid, u):
    lo, hi = grid.encode_range
    d = lo + u * (hi - lo)
    c = encode_pixel(d, grid)
    assert (c >= 0).all()
    assert abs(c.sum() - 1) <= 1e-12
    assert np.count_nonzero(c) <= 3
    nz = np.flatnonzero(c)
    assert nz.max() - nz.min() <= 2
    assert decode_3coeff(c, grid) == pytest.approx(d, abs=1e-9)
    assert decode_all(c, grid) == pytest.approx(d, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0.0, 1.0), min_size=10, max_size=10).filter(lambda v: sum(v) > 1e-3),
    st.floats(1e-3, 1e3),
)
def test_decode_3coeff_scale_invariant_and_bounded(coeffs, scale):
    c = np.asarray(coeffs) / np.sum(coeffs)
    d = decode_3coeff(c, TEN)
    assert decode_3coeff(c * scale, TEN) == pytest.approx(d, rel=1e-12)
    assert TEN.d_min <= d <= TEN.d_max


def test_vectorized_encoder_matches_scalar():
    rng = np.random.default_rng(0)
    d = rng.uniform(1.0, 9.0, 50)
    batch = encode_depths(d, TEN)
    for i, di in enumerate(d):
        np.testing.assert_array_equal(batch[i], encode_pixel(di, TEN))
