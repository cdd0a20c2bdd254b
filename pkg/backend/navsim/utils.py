"""
Utility functions for seeding and image export
"""
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd
from PIL import Image

from .perception import LocalObstacleMap


def episode_rng(seed: int, index: int) -> np.random.Generator:
    """
    Independent generator for one episode

    Args:
        seed: Run seed
        index: Episode index

    Returns:
        numpy Generator seeded from SeedSequence([seed, index])
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def lomap_to_image(lomap: LocalObstacleMap, scale: int = 1) -> Image.Image:
    """
    Convert a LOMap to a greyscale image (0 free, 100 occupied, 255 unknown)

    Args:
        lomap: Local obstacle map, row 0 is farthest ahead
        scale: Integer upscaling factor (nearest neighbour)

    Returns:
        PIL Image in mode "L"
    """
    image = Image.fromarray(lomap.grid.astype(np.uint8))
    if scale > 1:
        image = image.resize((image.width * scale, image.height * scale), Image.NEAREST)
    return image


def save_lomap_pgm(lomap: LocalObstacleMap, path: Union[str, Path], scale: int = 1) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lomap_to_image(lomap, scale).save(path, format="PPM")
    return path


def write_curves(path: Union[str, Path], rows: Sequence[Dict]) -> Path:
    """Write training-curve rows (one dictionary per episode or update) as CSV"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(rows)).to_csv(path, index=False)
    return path


def read_curves(path: Union[str, Path]) -> List[Dict]:
    path = Path(path)
    if not path.exists():
        return []
    return pd.read_csv(path).to_dict(orient="records")
