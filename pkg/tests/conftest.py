import hypothesis
import numpy as np
import pytest

from xmodal import synth

hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.load_profile("ci")


TINY_KWARGS = dict(
    n_classes=6,
    latent_dim=8,
    audio_dim=32,
    image_dim=48,
    baseline_dim=16,
    translation_per_class=40,
    crossmodal_per_class=10,
    class_train_per_class=30,
    class_test_per_class=8,
    rng_seed=7,
)

TINY = synth.SynthConfig(**TINY_KWARGS)


@pytest.fixture(scope="session")
def tiny_synth():
    """Small six-class dataset shared by the fast tests."""
    return synth.generate(TINY)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
