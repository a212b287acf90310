"""
Chain Model - Kinematic tree of rigid limbs with a sensor at each limb tip.

Each limb extends along its body-frame +y axis from base to tip, and the
sensor frame is the limb frame. A child limb's base is joined to its
parent's tip. Branching trees are supported; the boom experiments use a
2-limb serial chain.
"""

import math
from dataclasses import dataclass, field
from typing import Optional


class ChainValidationError(ValueError):
    """Raised when a ChainSpec violates the tree invariants."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


class UnknownLimbError(KeyError):
    """Raised when a limb id is not part of the chain."""


@dataclass(frozen=True)
class LimbNode:
    """One rigid limb. length_r is in meters."""
    id: int
    parent_id: Optional[int]
    length_r: float
    name: Optional[str] = None


@dataclass(frozen=True)
class ChainSpec:
    """
    Ordered limbs plus a depth-first traversal order from the root.

    Build with validate(); the traversal order is filled in there.
    """
    limbs: tuple[LimbNode, ...]
    traversal_order: tuple[int, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.limbs)


def validate(spec: ChainSpec) -> ChainSpec:
    """
    Check the tree invariants and compute the depth-first traversal order.

    Args:
        spec: Chain to check (traversal_order may be empty)

    Returns:
        A ChainSpec with limbs sorted by id and traversal_order filled in

    Raises:
        ChainValidationError: with reason set to one of empty, duplicate_id,
            sparse_ids, nonpositive_length, unknown_parent, no_root,
            multiple_roots, cycle
    """
    limbs = list(spec.limbs)
    if not limbs:
        raise ChainValidationError("empty", "Chain has no limbs")

    seen: set[int] = set()
    for limb in limbs:
        if limb.id in seen:
            raise ChainValidationError("duplicate_id", f"Limb id {limb.id} appears more than once")
        seen.add(limb.id)

    if seen != set(range(len(limbs))):
        raise ChainValidationError(
            "sparse_ids", f"Limb ids must be 0..{len(limbs) - 1}, got {sorted(seen)}"
        )

    for limb in limbs:
        if not (math.isfinite(limb.length_r) and limb.length_r > 0):
            raise ChainValidationError(
                "nonpositive_length", f"Limb {limb.id} has invalid length {limb.length_r}"
            )
        if limb.parent_id is not None and limb.parent_id not in seen:
            raise ChainValidationError(
                "unknown_parent", f"Limb {limb.id} references unknown parent {limb.parent_id}"
            )

    roots = [limb.id for limb in limbs if limb.parent_id is None]
    if not roots:
        raise ChainValidationError("no_root", "Chain has no root limb (every limb has a parent)")
    if len(roots) > 1:
        raise ChainValidationError("multiple_roots", f"Chain has multiple roots: {roots}")

    ordered = tuple(sorted(limbs, key=lambda limb: limb.id))
    children = _children_map(ordered)

    order: list[int] = []
    stack = [roots[0]]
    while stack:
        current = stack.pop()
        order.append(current)
        # reversed so the smallest child id is visited first
        stack.extend(reversed(children[current]))

    if len(order) != len(ordered):
        unreachable = sorted(seen - set(order))
        raise ChainValidationError(
            "cycle", f"Limbs {unreachable} are not reachable from the root (parent cycle)"
        )

    return ChainSpec(limbs=ordered, traversal_order=tuple(order))


def _children_map(limbs: tuple[LimbNode, ...]) -> dict[int, list[int]]:
    children: dict[int, list[int]] = {limb.id: [] for limb in limbs}
    for limb in limbs:
        if limb.parent_id is not None:
            children[limb.parent_id].append(limb.id)
    for ids in children.values():
        ids.sort()
    return children


def limb(spec: ChainSpec, limb_id: int) -> LimbNode:
    """Look up a limb by id."""
    for node in spec.limbs:
        if node.id == limb_id:
            return node
    raise UnknownLimbError(limb_id)


def children_of(spec: ChainSpec, limb_id: int) -> list[int]:
    """
    Direct children of a limb, in traversal order.

    Raises:
        UnknownLimbError: limb_id is not in the chain
    """
    limb(spec, limb_id)
    kids = {node.id for node in spec.limbs if node.parent_id == limb_id}
    order = spec.traversal_order or tuple(sorted(node.id for node in spec.limbs))
    return [i for i in order if i in kids]


def parent_of(spec: ChainSpec, limb_id: int) -> Optional[int]:
    return limb(spec, limb_id).parent_id


def root_id(spec: ChainSpec) -> int:
    for node in spec.limbs:
        if node.parent_id is None:
            return node.id
    raise ChainValidationError("no_root", "Chain has no root limb")


def serial_chain(lengths: list[float], names: Optional[list[str]] = None) -> ChainSpec:
    """Validated serial chain: limb i is the child of limb i-1."""
    names = names or [None] * len(lengths)
    limbs = tuple(
        LimbNode(id=i, parent_id=None if i == 0 else i - 1, length_r=float(r), name=names[i])
        for i, r in enumerate(lengths)
    )
    return validate(ChainSpec(limbs=limbs))


def boom_chain(r0: float = 0.5, r1: float = 0.5) -> ChainSpec:
    return serial_chain([r0, r1], ["boom_inner", "boom_outer"])


def arm_chain() -> ChainSpec:
    return serial_chain([0.30, 0.28, 0.08], ["upper_arm", "forearm", "hand"])


def _tree(entries: list[tuple[Optional[int], float, str]]) -> ChainSpec:
    limbs = tuple(
        LimbNode(id=i, parent_id=parent, length_r=r, name=name)
        for i, (parent, r, name) in enumerate(entries)
    )
    return validate(ChainSpec(limbs=limbs))


def upper_body_chain() -> ChainSpec:
    """7-sensor upper body: pelvis root, torso, head and two 2-segment arms."""
    return _tree([
        (None, 0.15, "pelvis"),
        (0, 0.45, "torso"),
        (1, 0.22, "head"),
        (1, 0.30, "left_upper_arm"),
        (3, 0.28, "left_forearm"),
        (1, 0.30, "right_upper_arm"),
        (5, 0.28, "right_forearm"),
    ])


def full_body_chain() -> ChainSpec:
    """15-sensor full body: upper body with hands plus two 3-segment legs."""
    return _tree([
        (None, 0.15, "pelvis"),
        (0, 0.45, "torso"),
        (1, 0.22, "head"),
        (1, 0.30, "left_upper_arm"),
        (3, 0.28, "left_forearm"),
        (4, 0.08, "left_hand"),
        (1, 0.30, "right_upper_arm"),
        (6, 0.28, "right_forearm"),
        (7, 0.08, "right_hand"),
        (0, 0.45, "left_thigh"),
        (9, 0.42, "left_shin"),
        (10, 0.12, "left_foot"),
        (0, 0.45, "right_thigh"),
        (12, 0.42, "right_shin"),
        (13, 0.12, "right_foot"),
    ])


def chain_to_dict(spec: ChainSpec) -> dict:
    entries = []
    for node in spec.limbs:
        entry = {"id": node.id, "parent_id": node.parent_id, "length_r": node.length_r}
        if node.name:
            entry["name"] = node.name
        entries.append(entry)
    return {"limbs": entries}


def chain_from_dict(data: dict) -> ChainSpec:
    """
    Build and validate a chain from its config dictionary.

    Args:
        data: {"limbs": [{"id", "parent_id", "length_r", "name"?}, ...]}

    Returns:
        Validated ChainSpec
    """
    limbs = tuple(
        LimbNode(
            id=int(entry["id"]),
            parent_id=None if entry.get("parent_id") is None else int(entry["parent_id"]),
            length_r=float(entry["length_r"]),
            name=entry.get("name"),
        )
        for entry in data["limbs"]
    )
    return validate(ChainSpec(limbs=limbs))
