"""Hand skeleton topology and anatomical limb grouping.

The canonical hand model has 21 keypoints (wrist plus four joints per
finger) connected by 20 limbs. Limbs can be coalesced into groups before
mask synthesis: one whole-hand group (``g1``), a palm group plus one group
per finger (``g6``), or both concatenated (``g1and6``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


FINGER_NAMES = ("thumb", "index", "middle", "ring", "little")

WRIST = 0


class GroupScheme(str, Enum):
    """How limbs are coalesced into mask channels."""

    G1 = "g1"
    G6 = "g6"
    G1AND6 = "g1and6"


@dataclass(frozen=True)
class LimbGroup:
    """A named set of limb indices composed into a single mask channel."""

    name: str
    limb_indices: tuple[int, ...]

    def __post_init__(self):
        if not self.limb_indices:
            raise ValueError(f"limb group {self.name!r} is empty")


@dataclass(frozen=True)
class HandTopology:
    """Skeleton tree: keypoints, connecting limbs and per-finger chains.

    ``limbs`` is an ordered list of (parent_id, child_id) pairs forming a
    tree rooted at keypoint 0. ``chains`` lists, per finger, the keypoint
    ids from the root out to the fingertip (root included), so each chain
    of length m contributes m-1 consecutive limbs.
    """

    keypoint_count: int
    limbs: tuple[tuple[int, int], ...]
    chains: tuple[tuple[int, ...], ...]
    chain_names: tuple[str, ...] = field(default=FINGER_NAMES)

    def __post_init__(self):
        if self.keypoint_count < 2:
            raise ValueError("topology needs at least two keypoints")
        if len(self.chain_names) != len(self.chains):
            raise ValueError("one name per chain required")
        seen_children = set()
        for parent, child in self.limbs:
            for kp in (parent, child):
                if not 0 <= kp < self.keypoint_count:
                    raise ValueError(f"limb ({parent}, {child}) references unknown keypoint")
            if parent == child:
                raise ValueError(f"limb ({parent}, {child}) is a self-loop")
            if child == WRIST or child in seen_children:
                raise ValueError("limbs must form a tree rooted at keypoint 0")
            seen_children.add(child)
        if len(seen_children) != self.keypoint_count - 1:
            raise ValueError("every non-root keypoint must be the child of exactly one limb")

    @property
    def limb_count(self) -> int:
        return len(self.limbs)

    def chain_limb_indices(self, chain: tuple[int, ...]) -> list[int]:
        """Indices into ``limbs`` of the consecutive pairs along a chain."""
        pairs = list(zip(chain[:-1], chain[1:]))
        index_of = {limb: i for i, limb in enumerate(self.limbs)}
        return [index_of[pair] for pair in pairs]

    def to_dict(self) -> dict:
        """Plain-data form for config files."""
        return {
            "keypoint_count": self.keypoint_count,
            "limbs": [list(limb) for limb in self.limbs],
            "chains": [list(chain) for chain in self.chains],
            "chain_names": list(self.chain_names),
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "HandTopology":
        return cls(
            keypoint_count=int(spec["keypoint_count"]),
            limbs=tuple((int(p), int(c)) for p, c in spec["limbs"]),
            chains=tuple(tuple(int(k) for k in chain) for chain in spec["chains"]),
            chain_names=tuple(spec.get("chain_names", FINGER_NAMES)),
        )


def default_topology() -> HandTopology:
    """The canonical 21-keypoint / 20-limb hand skeleton.

    Keypoint ids: 0 = wrist, then base-to-tip per finger: 1-4 thumb,
    5-8 index, 9-12 middle, 13-16 ring, 17-20 little. Limbs run along each
    chain starting at the wrist, fingers in the order above.
    """
    chains = tuple(
        (WRIST, 4 * f + 1, 4 * f + 2, 4 * f + 3, 4 * f + 4) for f in range(5)
    )
    limbs = tuple(
        pair for chain in chains for pair in zip(chain[:-1], chain[1:])
    )
    return HandTopology(keypoint_count=21, limbs=limbs, chains=chains)


def groups(topology: HandTopology, scheme: GroupScheme) -> list[LimbGroup]:
    """Limb groups for a composition scheme, in channel order.

    ``g1`` is a single group holding every limb. ``g6`` is a palm group
    (the root-to-finger-base limb of each chain) followed by one group per
    finger (the remaining limbs of its chain); together they partition the
    limb set. ``g1and6`` is the whole-hand group followed by the six
    ``g6`` groups.
    """
    scheme = GroupScheme(scheme)
    if scheme is GroupScheme.G1:
        return [LimbGroup("hand", tuple(range(topology.limb_count)))]
    if scheme is GroupScheme.G6:
        per_chain = [topology.chain_limb_indices(chain) for chain in topology.chains]
        palm = LimbGroup("palm", tuple(indices[0] for indices in per_chain))
        fingers = [
            LimbGroup(name, tuple(indices[1:]))
            for name, indices in zip(topology.chain_names, per_chain)
        ]
        return [palm] + fingers
    return groups(topology, GroupScheme.G1) + groups(topology, GroupScheme.G6)
