"""Utility functions and helpers for penaltyselect."""

import hashlib
import logging
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np
from rich.console import Console
from rich.logging import RichHandler


logger = logging.getLogger(__name__)

stderr_console = Console(stderr=True)


def setup_logging(level: str = "INFO", verbose: bool = False) -> None:
    """Setup logging configuration. All records go to stderr."""
    if verbose:
        level = "DEBUG"

    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format="%(name)s - %(message)s",
        handlers=[RichHandler(console=stderr_console, show_path=False)],
        force=True,
    )


def derive_rng(master_seed: Optional[int], index: int = 0) -> np.random.Generator:
    """PCG64 generator for run ``index`` under ``master_seed``.

    The stream depends only on the pair, never on scheduling order.
    """
    if master_seed is None:
        return np.random.default_rng()
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


def derive_seed(master_seed: int, index: int, stream: int = 0) -> int:
    """Stable 32-bit seed recorded next to each trial in result tables.

    Distinct ``stream`` values give independent seeds for the same index.
    """
    entropy = [int(master_seed), int(index)] + ([int(stream)] if stream else [])
    state = np.random.SeedSequence(entropy).generate_state(1)
    return int(state[0])


def parse_float_list(text: str) -> List[float]:
    """Parse ``"0.1, 0.2,0.3"`` into floats."""
    items = [item.strip() for item in text.split(",")]
    if not items or any(not item for item in items):
        raise ValueError(f"expected comma-separated numbers, got {text!r}")
    return [float(item) for item in items]


def parse_index_list(text: str) -> List[int]:
    """Parse ``"0,2,3"`` into indices. An empty string is the empty set."""
    if not text.strip():
        return []
    return [int(item.strip()) for item in text.split(",")]


def read_float_list(path: Path) -> List[float]:
    """Read reals separated by commas, whitespace or newlines."""
    content = path.read_text().replace(",", " ")
    return [float(token) for token in content.split()]


def get_file_hash(file_path: Path) -> str:
    """Generate SHA-256 hash of a file."""
    hasher = hashlib.sha256()
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(4096), b""):
            hasher.update(chunk)
    return hasher.hexdigest()


def mask_of(indices: Iterable[int]) -> int:
    """Bitmask with one bit per index."""
    mask = 0
    for index in indices:
        if index < 0:
            raise ValueError(f"index not greater than or equal to 0, index == {index}")
        mask |= 1 << index
    return mask


def indices_of(mask: int) -> List[int]:
    """Sorted indices of the set bits of ``mask``."""
    out = []
    index = 0
    while mask:
        if mask & 1:
            out.append(index)
        mask >>= 1
        index += 1
    return out


def popcount(mask: int) -> int:
    """Number of set bits."""
    return bin(mask).count("1")
