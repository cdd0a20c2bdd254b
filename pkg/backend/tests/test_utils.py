import numpy as np
from PIL import Image

from navsim.perception import FREE, OCCUPIED, UNKNOWN, LocalObstacleMap
from navsim.utils import episode_rng, lomap_to_image, read_curves, save_lomap_pgm, write_curves


def sample_lomap():
    grid = np.full((4, 4), UNKNOWN, dtype=np.uint8)
    grid[1:3, 1:3] = FREE
    grid[0, 2] = OCCUPIED
    return LocalObstacleMap(grid=grid, resolution=0.2)


class TestEpisodeRng:
    def test_reproducible(self):
        assert episode_rng(3, 7).random() == episode_rng(3, 7).random()

    def test_independent_streams(self):
        draws = {episode_rng(3, i).random() for i in range(20)}
        assert len(draws) == 20
        assert episode_rng(3, 0).random() != episode_rng(4, 0).random()


class TestLomapImages:
    def test_grey_levels(self):
        image = lomap_to_image(sample_lomap())
        assert image.mode == "L"
        assert np.array_equal(np.asarray(image), sample_lomap().grid)

    def test_scaled(self):
        image = lomap_to_image(sample_lomap(), scale=3)
        assert image.size == (12, 12)
        assert np.asarray(image)[0, 6] == OCCUPIED

    def test_pgm_file(self, tmp_path):
        path = save_lomap_pgm(sample_lomap(), tmp_path / "maps" / "lomap.pgm")
        assert path.read_bytes()[:2] == b"P5"
        with Image.open(path) as back:
            assert np.array_equal(np.asarray(back), sample_lomap().grid)


class TestCurves:
    def test_write_and_read(self, tmp_path):
        rows = [{"episode": 0, "return": -3.5, "success": 0}, {"episode": 1, "return": 97.0, "success": 1}]
        path = write_curves(tmp_path / "curves" / "high.csv", rows)
        back = read_curves(path)
        assert [r["episode"] for r in back] == [0, 1]
        assert back[1]["return"] == 97.0

    def test_missing_file(self, tmp_path):
        assert read_curves(tmp_path / "none.csv") == []
