"""Independent random streams keyed by (seed, tags)."""
import zlib
from typing import Union

import numpy as np


def _key(tag: Union[int, str]) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    return int(tag)


def stream(seed: int, *tags: Union[int, str]) -> np.random.Generator:
    """Generator that depends only on ``seed`` and the tags, never on call order."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(_key(t) for t in tags)))
