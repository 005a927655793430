import numpy as np
import pytest

from aegis import corpus, raster


@pytest.fixture(scope="session")
def corpus_fixtures(tmp_path_factory):
    """The 20-image benchmark corpus (built once per test session)."""
    directory = tmp_path_factory.mktemp("corpus")
    return corpus.load_corpus(directory)


@pytest.fixture(scope="session")
def texture_512():
    """One smooth 512x512 texture host, independent of the corpus seeds."""
    return corpus.texture_image(32, 20, 236, seed=777)


def random_image(w: int, h: int, seed: int, lo: int = 0, hi: int = 256) -> raster.Image:
    rng = np.random.default_rng(seed)
    return raster.Image(rng.integers(lo, hi, size=(h, w, 3)).astype(np.uint8))
