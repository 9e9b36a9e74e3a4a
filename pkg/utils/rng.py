"""Named random sub-streams derived from one root seed."""
import hashlib
from typing import Union

import numpy as np


def _name_key(name: Union[str, int]) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    digest = hashlib.sha256(str(name).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *names: Union[str, int]) -> np.random.Generator:
    """Return a generator determined only by the root seed and the stream names."""
    entropy = [int(seed)] + [_name_key(n) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))
