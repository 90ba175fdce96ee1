import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from skimage import color as skcolor

from tpcnet.colorspace import (
    LAB,
    YCBCR,
    ColorImage,
    ColorSpace,
    available_color_spaces,
    get_color_space,
    lab_to_rgb,
    merge_luma_chroma,
    register_color_space,
    rgb_to_lab,
    rgb_to_ycbcr,
    split_luma_chroma,
    ycbcr_to_rgb,
)


def pixels(values):
    # (3, N, 1) image from a list of RGB triples
    return torch.tensor(values, dtype=torch.float64).T.unsqueeze(-1)


def random_colors(n=1000, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(3, n, 1, generator=g, dtype=torch.float64)


def test_ycbcr_achromatic_points():
    out = rgb_to_ycbcr(pixels([[1, 1, 1], [0, 0, 0]])).values[..., 0]
    np.testing.assert_allclose(out[:, 0], [1, 0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(out[:, 1], [0, 0.5, 0.5], atol=1e-12)


def test_ycbcr_matches_jpeg_reference():
    rgb = random_colors(50, seed=3)
    r, g, b = rgb[0], rgb[1], rgb[2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 0.5 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 0.5 + 0.5 * r - 0.418688 * g - 0.081312 * b
    out = rgb_to_ycbcr(rgb).values
    np.testing.assert_allclose(out, torch.stack([y, cb, cr]), atol=2e-6)


def test_ycbcr_round_trip():
    rgb = random_colors()
    c = rgb_to_ycbcr(rgb)
    assert c.space_id == YCBCR and c.luma_channel_index == 0
    assert (ycbcr_to_rgb(c) - rgb).abs().max() < 1e-4


def test_lab_white_and_round_trip():
    white = rgb_to_lab(pixels([[1, 1, 1]])).values[..., 0, 0]
    np.testing.assert_allclose(white, [1, 0.5, 0.5], atol=1e-9)
    rgb = random_colors(seed=1)
    assert (lab_to_rgb(rgb_to_lab(rgb)) - rgb).abs().max() < 1e-3


def test_lab_matches_skimage():
    rgb = random_colors(200, seed=2)
    ours = rgb_to_lab(rgb).values
    ref = skcolor.rgb2lab(rgb.permute(1, 2, 0).numpy(), illuminant="D65")
    L = ours[0] * 100
    a = (ours[1] - 0.5) * 256
    b = (ours[2] - 0.5) * 256
    np.testing.assert_allclose(L.numpy(), ref[..., 0], atol=0.05)
    np.testing.assert_allclose(a.numpy(), ref[..., 1], atol=0.1)
    np.testing.assert_allclose(b.numpy(), ref[..., 2], atol=0.1)


@pytest.mark.parametrize("to_space", [rgb_to_ycbcr, rgb_to_lab])
def test_grayscale_maps_to_mid_chroma(to_space):
    g = torch.linspace(0, 1, 101, dtype=torch.float64)
    gray = torch.stack([g, g, g]).unsqueeze(-1)
    chroma = to_space(gray).values[1:]
    assert (chroma - 0.5).abs().max() < 1e-3


def test_inverse_rejects_wrong_space():
    c = rgb_to_lab(random_colors(4))
    with pytest.raises(ValueError):
        ycbcr_to_rgb(c)
    with pytest.raises(ValueError):
        lab_to_rgb(rgb_to_ycbcr(random_colors(4)))


def test_inverse_output_is_clamped():
    c = ColorImage(torch.tensor([[[2.0]], [[0.0]], [[1.0]]], dtype=torch.float64), YCBCR, 0)
    rgb = ycbcr_to_rgb(c)
    assert rgb.min() >= 0 and rgb.max() <= 1


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_luma_monotone_under_equal_increase(r, g, b, d):
    base = pixels([[r, g, b]])
    brighter = (base + d).clamp(0, 1)
    y0 = rgb_to_ycbcr(base).values[0]
    y1 = rgb_to_ycbcr(brighter).values[0]
    assert (y1 >= y0 - 1e-15).all()


@pytest.mark.parametrize("to_space", [rgb_to_ycbcr, rgb_to_lab])
def test_split_merge_identity(to_space):
    c = to_space(torch.rand(2, 3, 5, 7, dtype=torch.float64))
    brightness, chroma = split_luma_chroma(c)
    assert torch.equal(brightness, c.values[:, 0:1])
    merged = merge_luma_chroma(brightness, chroma, c.space_id)
    assert torch.equal(merged.values, c.values)


def test_split_merge_layout_with_nonzero_luma_index():
    space = ColorSpace("test-luma-last", lambda x: x.flip(-3), lambda x: x.flip(-3), luma_channel_index=2)
    register_color_space(space)
    values = torch.arange(3 * 2 * 2, dtype=torch.float64).view(3, 2, 2)
    c = ColorImage(values, space.name, 2)
    brightness, chroma = split_luma_chroma(c)
    assert torch.equal(brightness, values[2:3])
    assert torch.equal(chroma, values[0:2])
    assert torch.equal(merge_luma_chroma(brightness, chroma, space.name).values, values)


def test_merge_rejects_bad_shapes():
    with pytest.raises(ValueError):
        merge_luma_chroma(torch.zeros(1, 4, 4), torch.zeros(2, 4, 5), YCBCR)
    with pytest.raises(ValueError):
        merge_luma_chroma(torch.zeros(2, 4, 4), torch.zeros(2, 4, 4), YCBCR)


def test_registry():
    assert {YCBCR, LAB} <= set(available_color_spaces())
    with pytest.raises(ValueError):
        get_color_space("hvi-not-registered")
    with pytest.raises(ValueError):
        register_color_space(ColorSpace(YCBCR, lambda x: x, lambda x: x))
