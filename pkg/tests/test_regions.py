import numpy as np
import pytest
from hypothesis import given, strategies as st

from oodscan.regions import (
    CropBox,
    connected_components,
    deep_feature_vector,
    downsample_mask_to_stage,
    masked_mean,
    tumor_crops,
)
from oodscan.rng import SplitMix64, derive
from oodscan.encoder import ToyEncoderConfig, toy_encode
from oodscan.volumes import MaskVolume, Volume3D


def mask_from(dims, voxels):
    data = np.zeros(dims, dtype=np.uint8)
    for v in voxels:
        data[v] = 1
    return MaskVolume(dims=dims, data=data)


# --- connected components -------------------------------------------------

def test_two_isolated_voxels():
    comps = connected_components(mask_from((5, 5, 5), [(0, 0, 0), (4, 4, 4)]))
    assert [len(c) for c in comps] == [1, 1]
    assert tuple(comps[0][0]) == (0, 0, 0)  # tie broken by smallest seed voxel


def test_full_grid_single_component():
    m = MaskVolume(dims=(3, 4, 5), data=np.ones((3, 4, 5), dtype=np.uint8))
    comps = connected_components(m)
    assert len(comps) == 1 and len(comps[0]) == 60


def test_face_and_corner_adjacency_join_under_26():
    face = connected_components(mask_from((3, 3, 3), [(0, 0, 0), (0, 0, 1)]))
    corner = connected_components(mask_from((3, 3, 3), [(0, 0, 0), (1, 1, 1)]))
    assert len(face) == 1
    assert len(corner) == 1


def test_sorted_by_size_descending():
    big = [(2, y, x) for y in range(3) for x in range(3)]
    comps = connected_components(mask_from((5, 5, 5), [(0, 0, 0)] + big))
    assert [len(c) for c in comps] == [9, 1]


# --- crops ------------------------------------------------------------------

def test_single_crop_centered_on_centroid():
    m = mask_from((32, 32, 32), [(16, 16, 16)])
    crops = tumor_crops(m, k=1, crop_size=(8, 8, 8), jitter_radius=3, seed=1)
    assert crops == [CropBox(origin=(12, 12, 12), size=(8, 8, 8))]


def test_boundary_crops_clamped_inside():
    m = mask_from((16, 16, 16), [(0, 0, 15)])
    for crop in tumor_crops(m, k=8, crop_size=(8, 8, 8), jitter_radius=4, seed=3):
        assert all(0 <= o and o + s <= 16 for o, s in zip(crop.origin, crop.size))


def test_jitters_match_documented_stream():
    seed, j = 77, 2
    m = mask_from((32, 32, 32), [(16, 16, 16)])
    crops = tumor_crops(m, k=8, crop_size=(8, 8, 8), jitter_radius=j, seed=seed)
    r = SplitMix64(derive(seed, "crops"))
    expected = [(0, 0, 0)]
    for _ in range(7):
        expected.append(tuple(r.randint(-j, j) for _ in range(3)))
    got = [tuple(o - (16 - 4) for o in c.origin) for c in crops]  # no clamping here
    assert got == expected


def test_empty_mask_uses_volume_center():
    m = mask_from((32, 32, 32), [])
    crops = tumor_crops(m, k=1, crop_size=(8, 8, 8), jitter_radius=0, seed=0)
    assert crops[0].origin == (12, 12, 12)


# --- stage mask reduction ---------------------------------------------------

def test_single_voxel_survives_any_factor():
    m = mask_from((16, 16, 16), [(9, 3, 14)])
    stage = downsample_mask_to_stage(m, 8)
    assert stage.shape == (2, 2, 2)
    assert stage.sum() == 1
    assert stage[1, 0, 1]


def test_factor_one_is_identity():
    m = mask_from((4, 4, 4), [(1, 2, 3)])
    assert np.array_equal(downsample_mask_to_stage(m, 1), m.data.astype(bool))


def test_full_block_reduces_to_one():
    m = MaskVolume(dims=(2, 2, 2), data=np.ones((2, 2, 2), dtype=np.uint8))
    stage = downsample_mask_to_stage(m, 2)
    assert stage.shape == (1, 1, 1) and stage[0, 0, 0]


@given(st.integers(0, 10_000))
def test_nonempty_mask_stays_nonempty_at_every_factor(seed):
    rng = np.random.default_rng(seed)
    data = (rng.random((8, 8, 8)) < 0.05).astype(np.uint8)
    if data.sum() == 0:
        data[tuple(rng.integers(0, 8, 3))] = 1
    m = MaskVolume(dims=(8, 8, 8), data=data)
    for factor in (2, 4, 8):
        assert downsample_mask_to_stage(m, factor).any()


# --- masked means -----------------------------------------------------------

def test_constant_map_any_mask():
    data = np.full((3, 4, 4, 4), 2.5)
    sel = np.zeros((4, 4, 4), dtype=bool)
    sel[1, 2, 3] = True
    values, fb = masked_mean(data, sel)
    assert not fb
    assert values == pytest.approx([2.5, 2.5, 2.5])


def test_two_cell_mean():
    data = np.zeros((1, 1, 1, 2))
    data[0, 0, 0, 0] = 1.0
    data[0, 0, 0, 1] = 3.0
    values, _ = masked_mean(data, np.ones((1, 1, 2), dtype=bool))
    assert values[0] == 2.0


def test_empty_mask_falls_back_to_global_mean():
    rng = np.random.default_rng(0)
    data = rng.random((2, 3, 3, 3))
    values, fb = masked_mean(data, np.zeros((3, 3, 3), dtype=bool))
    assert fb
    assert values == pytest.approx(data.reshape(2, -1).mean(axis=1))


@given(st.integers(0, 10_000))
def test_full_mask_equals_global_mean(seed):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(4, 2, 3, 2))
    values, fb = masked_mean(data, np.ones((2, 3, 2), dtype=bool))
    assert not fb
    assert values == pytest.approx(data.reshape(4, -1).mean(axis=1))


# --- deep feature vectors ---------------------------------------------------

@pytest.fixture(scope="module")
def scan():
    rng = np.random.default_rng(12)
    dims = (32, 32, 32)
    vol = Volume3D(dims=dims, spacing=(1, 1, 1),
                   data=rng.random(dims).astype(np.float32))
    data = np.zeros(dims, dtype=np.uint8)
    data[14:19, 15:20, 13:17] = 1
    mask = MaskVolume(dims=dims, data=data)
    pyramid = toy_encode(vol, ToyEncoderConfig(seed=5))
    return vol, mask, pyramid


def test_vector_length_and_slices(scan):
    _, mask, pyramid = scan
    crops = tumor_crops(mask, k=2, crop_size=(16, 16, 16), jitter_radius=2, seed=4)
    vecs = deep_feature_vector(pyramid, mask, crops, scan_id="s")
    assert len(vecs) == 2
    v = vecs[0]
    widths_total = sum(b - a for a, b in v.stage_slices.values())
    assert widths_total == 8 + 8 + 16 + 32 + 64 == 128
    assert len(v.names) == 129  # stage features + empty_mask flag
    assert v.names[-1] == "empty_mask"
    assert v.values[-1] == 0.0
    assert v.names[v.stage_slices["SB4"][0]] == "SB4_000"


def test_constant_pyramid_gives_constant_features(scan):
    _, mask, pyramid = scan
    const_stages = []
    for s in pyramid.stages:
        const_stages.append(type(s)(
            stage_id=s.stage_id, factor=s.factor, channels=s.channels,
            dims=s.dims, spacing=s.spacing,
            data=np.full_like(s.data, 0.625),
        ))
    const_pyr = type(pyramid)(volume_dims=pyramid.volume_dims,
                              stages=tuple(const_stages))
    crops = tumor_crops(mask, k=3, crop_size=(16, 16, 16), jitter_radius=2, seed=9)
    for v in deep_feature_vector(const_pyr, mask, crops, scan_id="s"):
        assert np.allclose(v.values[:-1], 0.625)


def test_full_volume_crop_equals_whole_scan_means(scan):
    _, mask, pyramid = scan
    crop = CropBox(origin=(0, 0, 0), size=(32, 32, 32))
    v = deep_feature_vector(pyramid, mask, [crop], scan_id="s")[0]
    expect = []
    for stage in pyramid.stages:
        stage_mask = downsample_mask_to_stage(mask, stage.factor)
        values, _ = masked_mean(stage.data, stage_mask)
        expect.append(values)
    assert np.allclose(v.values[:-1], np.concatenate(expect))


def test_invariant_to_mask_outside_crop(scan):
    _, mask, pyramid = scan
    crops = [CropBox(origin=(8, 8, 8), size=(16, 16, 16))]
    base = deep_feature_vector(pyramid, mask, crops, scan_id="s")[0]
    mutated = mask.data.copy()
    mutated[0:4, 0:4, 0:4] = 1  # far away from the crop
    far = MaskVolume(dims=mask.dims, data=mutated)
    out = deep_feature_vector(pyramid, far, crops, scan_id="s")[0]
    assert np.array_equal(base.values, out.values)


def test_empty_crop_sets_flag_and_stays_finite(scan):
    _, _, pyramid = scan
    empty = MaskVolume(dims=(32, 32, 32), data=np.zeros((32, 32, 32), dtype=np.uint8))
    crops = [CropBox(origin=(0, 0, 0), size=(8, 8, 8))]
    v = deep_feature_vector(pyramid, empty, crops, scan_id="s")[0]
    assert v.values[-1] == 1.0
    assert np.all(np.isfinite(v.values))
