import dataclasses
import json

import numpy as np
import pytest

from soundloc.acoustics import RoomSpec
from soundloc.errors import ConfigError, DivergenceError
from soundloc.model import (
    FrozenAudioEncoder, ModelConfig, infer, load_model, mirror_axes, mirror_features, prepare_features, train,
)

from conftest import small_recordings


def cfg_for(M=4, **kw):
    return ModelConfig(**{**dict(embed_dim=16, num_heads=2, num_blocks=1, n_mics=M, n_samples=512), **kw})


@pytest.fixture(scope="module")
def recs():
    return small_recordings(RoomSpec(), 4, M=4, n_samples=512)


@pytest.fixture(scope="module")
def feats(recs):
    return prepare_features(recs, cfg_for())


def params_of(model):
    return {k: v.copy() for k, v in model.state_dict().items()}


def test_zero_epochs_leaves_parameters(feats):
    from soundloc.model import SslModel
    model = SslModel(cfg_for())
    before = params_of(model)
    res = train(feats, cfg_for(), 0, model=model)
    assert res.loss_curve == []
    for k, v in params_of(res.model).items():
        assert v.tobytes() == before[k].tobytes()


def test_tiny_overfit(feats):
    res = train(feats, cfg_for(), 200, seed=0, batch_size=4, augment=False)
    assert res.final_loss < 0.1 * res.initial_loss


def test_training_deterministic(feats):
    a = train(feats, cfg_for(), 5, seed=3, batch_size=2)
    b = train(feats, cfg_for(), 5, seed=3, batch_size=2)
    assert a.loss_curve == b.loss_curve
    c = train(feats, cfg_for(), 5, seed=4, batch_size=2)
    assert a.loss_curve != c.loss_curve


def test_frozen_encoder_unchanged(recs):
    enc = FrozenAudioEncoder(16)
    before = enc.projection.copy()
    train(prepare_features(recs, cfg_for(), enc), cfg_for(), 3)
    assert enc.projection.tobytes() == before.tobytes()


def test_empty_dataset_rejected(feats):
    with pytest.raises(ConfigError):
        train(feats.subset([]), cfg_for(), 1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts(feats):
    bad = dataclasses.replace(feats, audio=feats.audio * 1e200)
    with pytest.raises(DivergenceError, match="epoch 0"):
        train(bad, cfg_for(mask_ratio=0.9), 2)


def test_log_and_checkpoint(tmp_path, feats):
    res = train(feats, cfg_for(), 3, checkpoint_path=tmp_path / "m.ckpt", log_path=tmp_path / "log.jsonl")
    lines = [json.loads(x) for x in (tmp_path / "log.jsonl").read_text().splitlines()]
    assert [x["epoch"] for x in lines] == [0, 1, 2]
    assert {"lr", "sound_term", "mloc_term", "sloc_term", "total"} <= set(lines[0])
    loaded = load_model(tmp_path / "m.ckpt")
    assert loaded.config == res.model.config
    for k, v in params_of(loaded).items():
        assert v.tobytes() == res.model.state_dict()[k].tobytes()


def test_infer(recs, feats):
    model = train(feats, cfg_for(), 2).model
    before = params_of(model)
    a, b = infer(recs[0], model=model), infer(recs[0], model=model)
    assert a.source_positions.shape == (1, 3) and a.mic_positions.shape == (0, 3)
    np.testing.assert_array_equal(a.source_positions, b.source_positions)
    for k, v in params_of(model).items():
        assert v.tobytes() == before[k].tobytes()
    masked = infer(recs[0], model=model, audio_mask=[True, False, False, False])
    assert masked.reconstructed_audio.shape == (1, 512) and list(masked.audio_indices) == [0]


def test_infer_mic_count_mismatch(recs, feats):
    model = train(feats, cfg_for(), 0).model
    other = small_recordings(RoomSpec(), 1, M=5, n_samples=512)[0]
    with pytest.raises(ConfigError):
        infer(other, model=model)


def test_infer_scene_b_and_two_sources():
    room = RoomSpec()
    recs_b = small_recordings(room, 2, M=4, U=1, n_samples=512)
    cfg_b = cfg_for(source_known=True)
    model = train(prepare_features(recs_b, cfg_b), cfg_b, 1).model
    pred = infer(recs_b[0], model=model)
    assert pred.source_positions.shape == (0, 3) and pred.mic_positions.shape == (1, 3)
    assert list(pred.mic_indices) == list(np.flatnonzero(~recs_b[0].known_mask))

    recs_k2 = small_recordings(room, 2, M=4, K=2, n_samples=512)
    cfg_k2 = cfg_for(num_sources=2)
    model = train(prepare_features(recs_k2, cfg_k2), cfg_k2, 1).model
    assert infer(recs_k2[0], model=model).source_positions.shape == (2, 3)


def test_mirror_is_exact_symmetry():
    """A mirrored scene renders the same audio, so flipped positions are valid labels."""
    from soundloc.acoustics import render_mixture, sample_scene
    room = RoomSpec()
    assert mirror_axes(room) == [0, 1, 2]
    sc = sample_scene(room, 4, 1, 0, seed=9, n_samples=512)
    rec = render_mixture(room, sc.mics, sc.sources, noise_std=0.0, seed=9)
    c = room.center
    flip = np.array([-1.0, 1.0, -1.0])
    mics = [dataclasses.replace(m, position=c + flip * (m.position - c)) for m in sc.mics]
    srcs = [dataclasses.replace(s, position=c + flip * (s.position - c)) for s in sc.sources]
    mirrored = render_mixture(room, mics, srcs, noise_std=0.0, seed=9)
    np.testing.assert_allclose(mirrored.channels, rec.channels, atol=1e-12)

    f = prepare_features([rec], cfg_for())
    g = mirror_features(f, room, np.array([[True, False, True]]))
    np.testing.assert_allclose(g.mic_pos[0], mirrored.mic_positions, atol=1e-12)
    np.testing.assert_allclose(g.source_pos[0], mirrored.source_positions, atol=1e-12)
    asym = RoomSpec(wall_absorption=(0.3, 0.5, 0.3, 0.3, 0.3, 0.3))
    assert mirror_axes(asym) == [1, 2]
