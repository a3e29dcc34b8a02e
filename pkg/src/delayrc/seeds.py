"""Deterministic seed derivation.

Each trial, dataset, mask and noise stream gets its own 64-bit seed derived
from a master seed through a splitmix-style mix. The derivation is pure
integer arithmetic, so it is stable across platforms and numpy versions.
"""

_MASK64 = (1 << 64) - 1


def splitmix64(value: int) -> int:
    """One splitmix64 scrambling round of a 64-bit integer."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master_seed: int, index: int) -> int:
    """Seed for stream `index` derived from `master_seed`.

    Defined as master_seed XOR splitmix64(index), reduced to 64 bits.
    """
    return (master_seed ^ splitmix64(index)) & _MASK64


def next_seed(seed: int) -> int:
    """Successor seed used when a generated dataset must be rejected."""
    return splitmix64(seed)
