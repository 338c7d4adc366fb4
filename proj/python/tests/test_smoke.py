import numpy as np
import pytest

import tmc


def low_rank(dims, ranks, seed):
    rng = np.random.default_rng(seed)
    core = rng.standard_normal(ranks)
    factors = [np.linalg.qr(rng.standard_normal((d, r)))[0] for d, r in zip(dims, ranks)]
    return tmc.reconstruct(core, factors)


def test_t_hosvd_recovers_low_rank_tensor():
    x = low_rank((6, 7, 4, 2), (2, 3, 2, 1), 0)
    core, factors = tmc.t_hosvd(x, [2, 3, 2, 1])
    assert core.shape == (2, 3, 2, 1)
    assert [f.shape for f in factors] == [(6, 2), (7, 3), (4, 2), (2, 1)]
    assert np.allclose(tmc.reconstruct(core, factors), x, atol=1e-10)


def test_reconstruct_matches_einsum():
    rng = np.random.default_rng(1)
    core = rng.standard_normal((2, 3, 2))
    factors = [rng.standard_normal((4, 2)), rng.standard_normal((5, 3)), rng.standard_normal((3, 2))]
    expect = np.einsum("abc,ia,jb,kc->ijk", core, *factors)
    assert np.allclose(tmc.reconstruct(core, factors), expect, atol=1e-12)


def test_tucker_als_trace_and_fit():
    x = np.random.default_rng(2).standard_normal((10, 9, 5, 2))
    out = tmc.tucker_als(x, [3, 3, 2, 2], max_sweeps=20, pairwise_perturbation=False)
    fits = [f for _, f in out["trace"]]
    assert out["trace"][0][0] == "init"
    assert all(b - a >= -1e-12 for a, b in zip(fits, fits[1:]))
    assert tmc.fit(x, out["core"], out["factors"]) == pytest.approx(fits[-1], abs=1e-9)


def test_color_round_trips():
    px = np.random.default_rng(3).random((1000, 3))
    assert np.abs(tmc.ycbcr_to_rgb(tmc.rgb_to_ycbcr(px)) - px).max() < 1e-12
    assert np.abs(tmc.ipt_to_rgb(tmc.rgb_to_ipt(px)) - px).max() < 1e-4
    gray = np.repeat(np.linspace(0, 1, 11)[:, None], 3, axis=1)
    assert np.abs(tmc.rgb_to_ipt(gray)[:, 1:] - 0.5).max() < 1e-6


def test_encode_decode_scene():
    scene = tmc.synthesize_scene(32, 24, exposures=3, views=2, seed=4)
    assert scene.shape == (2, 3, 24, 32, 3)
    data, stats = tmc.encode(scene, preset=3, qp=10)
    assert stats["bits_total"] == 8 * len(data)
    assert tmc.stream_header(data)["dims"] == [24, 32, 3, 2]
    decoded = tmc.decode(data)
    assert decoded.shape == scene.shape
    assert decoded.min() >= 0.0 and decoded.max() <= 1.0
    assert all(p > 20 for p in tmc.scene_psnr(scene, decoded))


def test_full_rank_latent_is_near_lossless():
    scene = tmc.synthesize_scene(24, 16, exposures=2, views=2, seed=5)
    data, _ = tmc.encode(scene, ranks=[16, 24, 2, 2], qp=0)
    assert min(tmc.scene_psnr(scene, tmc.decode(data))) > 55


def test_frames_path_and_presets():
    scene = tmc.synthesize_scene(40, 20, exposures=5, views=2, seed=6)
    assert tmc.rank_preset(1, scene) == [1, 2, 1, 1]
    small, _ = tmc.encode(scene, preset=1, qp=10, path="frames")
    large, _ = tmc.encode(scene, preset=5, qp=10, path="frames")
    assert len(small) < len(large)


def test_entropy_round_trip():
    data = bytes(np.random.default_rng(7).integers(0, 256, 5000, dtype=np.uint8))
    for tag in ("range", "stored"):
        assert tmc.entropy_decode(tmc.entropy_encode(data, tag), tag) == data
    assert len(tmc.entropy_encode(bytes(10000))) < 1000


def test_scene_files(tmp_path):
    scene = tmc.synthesize_scene(16, 8, exposures=2, views=2, seed=8)
    tmc.save_scene(scene, tmp_path)
    loaded = tmc.load_scene(tmp_path)
    assert np.array_equal(loaded, scene)


def test_errors():
    with pytest.raises(tmc.FormatError):
        tmc.decode(b"NOPE and then some bytes")
    with pytest.raises(ValueError):
        tmc.t_hosvd(np.zeros((3, 3)), [4, 1])
    with pytest.raises(ValueError):
        tmc.encode(np.zeros((2, 2, 4, 4)))
