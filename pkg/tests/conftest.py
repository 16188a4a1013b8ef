import numpy as np
import pytest

from nonspam.config import Config
from nonspam.frame import Image
from nonspam.pgm import write_pgm
from nonspam.spatial import PixelGrid


def natural_scene(size: int = 64) -> np.ndarray:
    """Sky gradient, a hill line, a house block and some seeded grain."""
    y, x = np.mgrid[0:size, 0:size] / float(size)
    scene = 200.0 - 90.0 * y
    ridge = 0.55 + 0.08 * np.sin(7.0 * x) + 0.04 * np.cos(17.0 * x)
    scene = np.where(y > ridge, 60.0 + 50.0 * x + 20.0 * np.cos(11.0 * y), scene)
    house = (x > 0.2) & (x < 0.42) & (y > 0.4) & (y < 0.75)
    scene = np.where(house, 235.0, scene)
    window = (x > 0.27) & (x < 0.34) & (y > 0.5) & (y < 0.6)
    scene = np.where(window, 25.0, scene)
    sun = (x - 0.78) ** 2 + (y - 0.18) ** 2 < 0.01
    scene = np.where(sun, 250.0, scene)
    rng = np.random.Generator(np.random.PCG64(2024))
    scene = scene + rng.normal(0.0, 4.0, size=scene.shape)
    return np.floor(np.clip(scene, 0.0, 255.0) + 0.5)


def corpus_arrays() -> dict:
    ramp = np.tile(np.linspace(0.0, 255.0, 32), (32, 1))
    checker = np.kron((np.indices((4, 4)).sum(axis=0) % 2) * 160.0 + 40.0, np.ones((4, 4)))
    yy, xx = np.mgrid[0:32, 0:32]
    disk = np.where((yy - 15.5) ** 2 + (xx - 12.0) ** 2 < 81.0, 220.0, 30.0)
    rng = np.random.Generator(np.random.PCG64(7))
    texture = np.floor(rng.uniform(0.0, 255.0, size=(24, 40)))
    return {
        "scene64": natural_scene(64),
        "ramp32": np.floor(ramp + 0.5),
        "checker16": checker,
        "disk32": disk,
        "texture24x40": texture,
    }


@pytest.fixture(scope="session")
def default_config() -> Config:
    return Config()


@pytest.fixture(scope="session")
def filter8():
    """8x8 grid, m = 3, default parameters: the oracle instance."""
    return Config(m=3).build_filter(PixelGrid(8, 8))


@pytest.fixture(scope="session")
def filter64(default_config):
    return default_config.build_filter(PixelGrid(64, 64))


@pytest.fixture
def corpus(tmp_path) -> dict:
    """name -> path of the synthetic PGM corpus."""
    paths = {}
    for name, pixels in corpus_arrays().items():
        path = tmp_path / f"{name}.pgm"
        write_pgm(str(path), pixels, 255)
        paths[name] = str(path)
    return paths


@pytest.fixture(scope="session")
def scene64() -> Image:
    return Image.from_array(natural_scene(64), maxval=255)


@pytest.fixture
def random8() -> Image:
    rng = np.random.Generator(np.random.PCG64(11))
    return Image.from_array(rng.uniform(0.0, 255.0, size=(8, 8)))
