import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from metascat import DiffusionDesigner
from metascat.dataset import generate, vectors_and_dscs
from metascat.geometry import GridSpec, decode, validate

GRID = GridSpec()

FAST = dict(
    timesteps=30,
    learning_rate=1e-3,
    batch_size=16,
    epochs=3,
    channels=(4, 4, 8, 8),
    film_hidden=8,
    seed=0,
)


@pytest.fixture(scope="module")
def fitted():
    records = list(generate(48, seed=31))
    X_dscs, y_vectors = vectors_and_dscs(records)[1], vectors_and_dscs(records)[0]
    model = DiffusionDesigner(**FAST)
    return model.fit(X_dscs, y_vectors), X_dscs, y_vectors


def test_get_params_roundtrip_and_clone():
    model = DiffusionDesigner(epochs=5, learning_rate=2e-4)
    params = model.get_params()
    assert params["epochs"] == 5
    assert params["learning_rate"] == 2e-4
    duplicate = clone(model)
    assert duplicate.get_params() == params
    model.set_params(epochs=7)
    assert model.get_params()["epochs"] == 7


def test_defaults_match_full_scale_setup():
    model = DiffusionDesigner()
    params = model.get_params()
    assert params["timesteps"] == 1000
    assert params["learning_rate"] == 4e-6
    assert params["batch_size"] == 16
    assert params["epochs"] == 116
    assert params["ema_decay"] == 0.995


def test_unfitted_sample_raises():
    with pytest.raises(NotFittedError):
        DiffusionDesigner().sample(np.ones(10))


def test_fit_sets_learned_state(fitted):
    model, X, y = fitted
    assert model.n_features_in_ == 10
    assert model.n_dims_ == 12
    assert model.schedule_.timesteps == 30
    assert model.stats_.mean.shape == (10,)
    assert len(model.train_losses_) == 3 * 3  # 48 records, batch 16, 3 epochs


def test_fit_validates_inputs():
    model = DiffusionDesigner(**FAST)
    with pytest.raises(ValueError):
        model.fit(np.ones((4, 10)), np.ones((3, 12)))
    with pytest.raises(ValueError):
        model.fit(np.ones((4, 10)), 2 * np.ones((4, 12)))  # y outside [0, 1]


def test_sample_shape_bounds_determinism(fitted):
    model, X, _ = fitted
    out = model.sample(X[0], n_samples=5, seed=11)
    assert out.shape == (5, 12)
    assert out.min() >= 0.0 and out.max() <= 1.0
    again = model.sample(X[0], n_samples=5, seed=11)
    assert np.array_equal(out, again)
    for v in out:
        assert validate(decode(v, GRID)) == []


def test_sample_rejects_wrong_profile_length(fitted):
    model, _, _ = fitted
    with pytest.raises(ValueError):
        model.sample(np.ones(7))


def test_predict_one_design_per_row(fitted):
    model, X, _ = fitted
    designs = model.predict(X[:3])
    assert designs.shape == (3, 12)
    assert designs.min() >= 0.0 and designs.max() <= 1.0
