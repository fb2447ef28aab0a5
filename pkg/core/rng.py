"""Counter-based random streams.

Every random draw in rigtrack comes from a Philox generator keyed by the run
seed and a stream name, so a draw is fully determined by (seed, stream, index)
and independent of thread scheduling or the order in which streams are used.
"""

import zlib
from typing import Union

import numpy as np

StreamKey = Union[str, int]


def _stream_id(parts: tuple[StreamKey, ...]) -> int:
    text = "/".join(str(p) for p in parts)
    return zlib.crc32(text.encode("utf-8"))


def make_rng(seed: int, *stream: StreamKey) -> np.random.Generator:
    """Create a Philox generator for a named stream.

    Args:
        seed: Run seed (non-negative)
        stream: Stream name parts, e.g. ("perturb", "rotation")

    Returns:
        Independent numpy Generator
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, _stream_id(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
