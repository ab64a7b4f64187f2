"""Deterministic random-stream derivation.

Every random draw in the package flows from one master seed through named
sub-streams, so any artifact is reproducible from a config file alone and
trials can run in parallel without sharing generator state.

Derivation: a stream is identified by a tuple of string labels and integer
indices; labels are hashed with crc32 and the whole tuple feeds a
``numpy.random.SeedSequence`` together with the master seed.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(parts) -> list[int]:
    out = []
    for p in parts:
        if isinstance(p, str):
            out.append(zlib.crc32(p.encode("utf-8")))
        elif isinstance(p, (int, np.integer)):
            out.append(int(p) & 0xFFFFFFFF)
        else:
            raise TypeError(f"stream key parts must be str or int, got {type(p)!r}")
    return out


def stream(master_seed: int, *parts) -> np.random.Generator:
    """Independent generator for the sub-stream named by `parts`."""
    seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF] + _key(parts))
    return np.random.default_rng(seq)


def substream_seed(master_seed: int, *parts) -> int:
    """A derived 64-bit seed, for handing a whole sub-tree of streams to a worker."""
    seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF] + _key(parts))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
