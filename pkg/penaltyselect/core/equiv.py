"""Observationally equivalent sets F_theta(I) as hypothesis bitmasks."""

from dataclasses import dataclass
from typing import Iterable, Iterator, List, Sequence

import numpy as np

from ..utils.helpers import indices_of, mask_of, popcount
from .model import Instance, joint_likelihood


@dataclass(frozen=True)
class EquivalenceSet:
    """Hypotheses indistinguishable from ``anchor``, stored as a bitmask."""

    anchor: int
    members: int

    def __contains__(self, theta: object) -> bool:
        return isinstance(theta, int) and theta >= 0 and bool(self.members >> theta & 1)

    def __iter__(self) -> Iterator[int]:
        return iter(indices_of(self.members))

    def __len__(self) -> int:
        return popcount(self.members)

    def __le__(self, other: "EquivalenceSet") -> bool:
        return self.members & ~other.members == 0

    def to_list(self) -> List[int]:
        return indices_of(self.members)

    def __repr__(self) -> str:
        return f"EquivalenceSet(anchor={self.anchor}, members={self.to_list()})"


def equiv_mask(instance: Instance, subset_mask: int, theta: int) -> int:
    members = instance.full_hypothesis_mask
    table = instance.source_masks
    i = 0
    while subset_mask:
        if subset_mask & 1:
            members &= table[i][theta]
        subset_mask >>= 1
        i += 1
    return members


def equiv_single(instance: Instance, source: int, theta: int) -> EquivalenceSet:
    """F_theta(i) for one source."""
    instance.subset_mask([source])
    instance.hypotheses.index_of(theta)
    return EquivalenceSet(theta, instance.source_masks[source][theta])


def equiv_set(instance: Instance, subset: Iterable[int], theta: int) -> EquivalenceSet:
    """F_theta(I) as the intersection of per-source sets; the full set for I empty."""
    mask = instance.subset_mask(subset)
    instance.hypotheses.index_of(theta)
    return EquivalenceSet(theta, equiv_mask(instance, mask, theta))


def joint_equivalence_set(
    instance: Instance, subset: Sequence[int], theta: int, atol: float = 1e-12
) -> EquivalenceSet:
    """F_theta(I) from joint-likelihood equality over the product space.

    Reference oracle for likelihood-backed instances; exponential in |I|.
    """
    target = joint_likelihood(instance, subset, theta)
    members = [
        q
        for q in range(instance.m)
        if np.allclose(joint_likelihood(instance, subset, q), target, rtol=0.0, atol=atol)
    ]
    return EquivalenceSet(theta, mask_of(members))
