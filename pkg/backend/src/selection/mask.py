"""Binary feature masks over the active feature set."""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from backend.src.errors import UsageError


@dataclass(frozen=True, eq=False)
class FeatureMask:
    """
    Bit vector z over d features; ``z[j]`` selects feature j.

    Masks compare and hash by their bits, so they can key caches and sets.
    """

    bits: np.ndarray
    popcount: int = field(init=False)
    key: bytes = field(init=False, repr=False)

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.ndim != 1:
            raise UsageError("A feature mask must be a 1-D bit vector")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "popcount", int(bits.sum()))
        object.__setattr__(
            self, "key", np.packbits(bits).tobytes() + bits.size.to_bytes(4, "little")
        )

    @property
    def size(self) -> int:
        return self.bits.size

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureMask) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def from_string(cls, text: str) -> "FeatureMask":
        """Build a mask from text such as ``"1100"``."""
        if set(text) - {"0", "1"}:
            raise UsageError(f"Mask text may only contain 0/1, got '{text}'")
        return cls(np.array([c == "1" for c in text], dtype=bool))

    @classmethod
    def from_indices(cls, size: int, indices: Sequence[int]) -> "FeatureMask":
        bits = np.zeros(size, dtype=bool)
        bits[np.asarray(indices, dtype=np.int64)] = True
        return cls(bits)

    @classmethod
    def full(cls, size: int) -> "FeatureMask":
        return cls(np.ones(size, dtype=bool))
