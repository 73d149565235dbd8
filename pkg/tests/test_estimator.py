import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from motion_complete.data import synth_corpus
from motion_complete.estimator import MotionCompleter, PositionScaler
from motion_complete.exceptions import DimensionMismatch, MaskLengthMismatch
from motion_complete.masks import INBETWEEN, INFILL, KEYFRAME, make_mask
from motion_complete.skeleton import LOCAL, to_local
from motion_complete.validation import check_mask, check_sequences

SMALL = dict(n_layers=1, n_heads=2, d_model=16, d_ffn=16, max_len=48, epochs=2, batch_size=4,
             warmup_epochs=1, window=None)


@pytest.fixture(scope="module")
def data():
    return synth_corpus(4, 6, 40, 4)


@pytest.fixture(scope="module")
def fitted(data):
    return MotionCompleter(**SMALL).fit(data)


def test_params_round_trip():
    est = MotionCompleter(**SMALL)
    assert est.get_params()["d_model"] == 16
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    est.set_params(alpha_k=0.0)
    assert est.alpha_k == 0.0


def test_unfitted_raises(data):
    with pytest.raises(NotFittedError):
        MotionCompleter().predict(data, make_mask(INBETWEEN, 5, 40))


def test_predict_keeps_keyframes(fitted, data):
    mask = make_mask(INFILL, 6, 40)
    preds = fitted.predict(data, mask)
    key = mask.labels == KEYFRAME
    for p, s in zip(preds, data):
        np.testing.assert_array_equal(p.positions[key], s.positions[key])
        np.testing.assert_array_equal(p.rotations[key], s.rotations[key])
        assert not np.array_equal(p.positions[mask.unknown], s.positions[mask.unknown])


def test_predict_single_and_per_sequence_masks(fitted, data):
    a = make_mask(INBETWEEN, 5, 40)
    b = make_mask(INBETWEEN, 20, 40)
    single = fitted.predict(data[0], a)
    assert single.positions.shape == data[0].positions.shape
    both = fitted.predict(data[:2], [a, b])
    np.testing.assert_allclose(both[0].positions, single.positions, atol=1e-5)
    with pytest.raises(MaskLengthMismatch):
        fitted.predict(data[0], make_mask(INBETWEEN, 5, 39))


def test_predict_in_local_coordinates(fitted, data):
    mask = make_mask(INBETWEEN, 10, 40)
    local = to_local(data[0])
    out = fitted.predict(local, mask)
    assert out.coord == LOCAL
    glob = fitted.predict(data[0], mask)
    np.testing.assert_allclose(to_local(glob).positions[:, 0], out.positions[:, 0], atol=1e-4)


def test_parallel_predict_matches_serial(fitted, data):
    mask = make_mask(INBETWEEN, 10, 40)
    serial = fitted.predict(data, mask)
    fitted.set_params(n_jobs=3)
    try:
        parallel = fitted.predict(data, mask)
    finally:
        fitted.set_params(n_jobs=1)
    for a, b in zip(serial, parallel):
        np.testing.assert_allclose(a.positions, b.positions, atol=1e-5)


def test_score_is_negative_l2p(fitted, data):
    score = fitted.score(data, make_mask(INBETWEEN, 10, 40))
    assert score < 0


def test_save_load(fitted, data, tmp_path):
    path = tmp_path / "model.ckpt"
    fitted.save(path)
    loaded = MotionCompleter.load(path)
    assert loaded.get_params() == fitted.get_params()
    mask = make_mask(INBETWEEN, 10, 40)
    np.testing.assert_array_equal(loaded.predict(data, mask)[2].positions,
                                  fitted.predict(data, mask)[2].positions)


def test_joint_mismatch(fitted):
    with pytest.raises(DimensionMismatch):
        fitted.predict(synth_corpus(0, 1, 40, 5), make_mask(INBETWEEN, 5, 40))


def test_position_scaler(data):
    X = np.stack([s.positions for s in data])
    scaler = PositionScaler().fit(X)
    Z = scaler.transform(X)
    np.testing.assert_allclose(Z.reshape(-1, 4, 3).mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(scaler.inverse_transform(Z), X)
    np.testing.assert_allclose(PositionScaler().fit_transform(X), Z)
    with pytest.raises(DimensionMismatch):
        scaler.transform(np.zeros((2, 5, 3)))


def test_validation_helpers(data):
    assert check_sequences(data[0]) == [data[0]]
    with pytest.raises(TypeError):
        check_sequences([np.zeros(3)])
    with pytest.raises(ValueError):
        check_sequences([])
    assert len(check_mask([0, 1, 0], 3)) == 3
