"""Named random sub-streams derived from a single root seed."""

import hashlib
from typing import Union

import numpy as np

Name = Union[str, int]


def _name_to_int(name: Name) -> int:
    if isinstance(name, int):
        return name
    digest = hashlib.sha256(str(name).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def seed_sequence(root: int, *names: Name) -> np.random.SeedSequence:
    """Build the seed sequence for the sub-stream ``root/names...``."""
    return np.random.SeedSequence([int(root), *(_name_to_int(n) for n in names)])


def derive_seed(root: int, *names: Name) -> int:
    """
    Derive a child seed from a root seed and a path of names.

    The result depends only on the arguments, never on call order or process,
    so serial and parallel runs draw identical streams.

    Args:
        root: Root seed
        *names: Path of sub-stream names (strings or integers)

    Returns:
        Non-negative 63-bit integer seed
    """
    state = seed_sequence(root, *names).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def make_rng(root: int, *names: Name) -> np.random.Generator:
    """Create a numpy Generator for the sub-stream ``root/names...``."""
    return np.random.default_rng(seed_sequence(root, *names))
