"""Binary-descriptor nearest-neighbor matching and the 3x-min-distance filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DESCRIPTOR_BITS, Descriptor
from .errors import InvalidInputError

# popcount of each byte value
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)

# bits below which the filter threshold never drops (3*min degenerates at min=0)
DEFAULT_FILTER_FLOOR = 30


@dataclass(frozen=True)
class Match:
    query_index: int
    train_index: int
    distance: int

    def __post_init__(self):
        if not (0 <= self.distance <= DESCRIPTOR_BITS):
            raise InvalidInputError(f"distance {self.distance} outside [0, {DESCRIPTOR_BITS}]")


def hamming(a: Descriptor, b: Descriptor) -> int:
    """Number of differing bits (popcount of XOR)."""
    return (a.as_int() ^ b.as_int()).bit_count()


def pack(descriptors) -> np.ndarray:
    """Stack descriptors into an (N, 32) uint8 array."""
    if len(descriptors) == 0:
        return np.empty((0, 32), dtype=np.uint8)
    return np.frombuffer(b"".join(d.bits for d in descriptors), dtype=np.uint8).reshape(-1, 32)


def match_nn(query, train) -> list[Match]:
    """Exhaustive nearest neighbour per query descriptor.

    Ties break toward the lowest train index. Exhaustive popcount search is
    exact and microseconds-fast at the few hundred descriptors this pipeline
    sees; an approximate index would only add nondeterminism.
    """
    if len(train) == 0:
        raise InvalidInputError("train descriptor set is empty")
    if len(query) == 0:
        return []
    q = pack(query)
    t = pack(train)
    out = []
    # chunk queries to bound the (chunk, N_train, 32) XOR workspace
    chunk = max(1, int(4_000_000 // (t.shape[0] * 32 + 1)) or 1)
    for start in range(0, q.shape[0], chunk):
        qc = q[start:start + chunk]
        d = _POPCOUNT[qc[:, None, :] ^ t[None, :, :]].sum(axis=2, dtype=np.uint16)
        best = d.argmin(axis=1)
        for i, j in enumerate(best):
            out.append(Match(query_index=start + i, train_index=int(j),
                             distance=int(d[i, j])))
    return out


def filter_matches(matches, floor: int = DEFAULT_FILTER_FLOOR) -> list[Match]:
    """Outlier removal at three times the minimum match distance.

    Keeps exactly the matches with distance <= max(3 * min_distance, floor);
    the floor guards the degenerate min = 0 case (set floor=0 for the strict
    3x-min rule). Input ordering is preserved.
    """
    if not matches:
        return []
    m = min(mt.distance for mt in matches)
    threshold = max(3 * m, floor)
    return [mt for mt in matches if mt.distance <= threshold]
