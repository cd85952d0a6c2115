"""
spatial_relations.py - Geometric semantics of the relation vocabulary

The one place where "closest", "on", "between" etc. are defined. Both the
instruction generator and the grounding oracle evaluate relations through
relation_holds(), so the two can never disagree.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

from config import RelationThresholds
from errors import ArityMismatch
from scene_model import ObjectInstance


class RelationKind(str, Enum):
    CLOSEST = 'closest'
    FARTHEST = 'farthest'
    NEAR = 'near'
    FAR = 'far'
    ABOVE = 'above'
    BELOW = 'below'
    SUPPORTED_BY = 'supported_by'
    BETWEEN = 'between'

    @property
    def arity(self) -> int:
        return 2 if self is RelationKind.BETWEEN else 1


# pinned search order used by the generator
SEARCH_ORDER = (
    RelationKind.CLOSEST,
    RelationKind.FARTHEST,
    RelationKind.SUPPORTED_BY,
    RelationKind.ABOVE,
    RelationKind.BELOW,
    RelationKind.NEAR,
    RelationKind.FAR,
    RelationKind.BETWEEN,
)

# relations whose truth depends on the other candidates
COMPARATIVE = frozenset({RelationKind.CLOSEST, RelationKind.FARTHEST})


@dataclass(frozen=True)
class SpatialRelation:
    kind: RelationKind
    anchor_ids: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'kind', RelationKind(self.kind))
        object.__setattr__(self, 'anchor_ids', tuple(self.anchor_ids))
        if len(self.anchor_ids) != self.kind.arity:
            raise ArityMismatch(
                f"'{self.kind.value}' takes {self.kind.arity} anchor(s), got {len(self.anchor_ids)}")

    def to_dict(self) -> dict:
        return {'kind': self.kind.value, 'anchor_ids': list(self.anchor_ids)}

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> Optional['SpatialRelation']:
        if data is None:
            return None
        return cls(RelationKind(data['kind']), tuple(data['anchor_ids']))


def distance(a: ObjectInstance, b: ObjectInstance) -> float:
    return math.dist(a.centroid, b.centroid)


def _overlaps_horizontally(a: ObjectInstance, b: ObjectInstance) -> bool:
    return (abs(a.centroid[0] - b.centroid[0]) <= (a.size[0] + b.size[0]) / 2
            and abs(a.centroid[1] - b.centroid[1]) <= (a.size[1] + b.size[1]) / 2)


def _is_above(subject: ObjectInstance, anchor: ObjectInstance) -> bool:
    return subject.centroid[2] > anchor.centroid[2] and _overlaps_horizontally(subject, anchor)


def _is_between(subject: ObjectInstance, first: ObjectInstance, second: ObjectInstance,
                thresholds: RelationThresholds) -> bool:
    p, a, b = subject.centroid, first.centroid, second.centroid
    ab = [b[i] - a[i] for i in range(3)]
    length_sq = sum(x * x for x in ab)
    if length_sq == 0.0:
        return False
    t = sum((p[i] - a[i]) * ab[i] for i in range(3)) / length_sq
    if not thresholds.between_low < t < thresholds.between_high:
        return False
    foot = [a[i] + t * ab[i] for i in range(3)]
    return math.dist(p, foot) <= thresholds.between_distance


def relation_holds(kind: RelationKind, subject: ObjectInstance, anchors: Sequence[ObjectInstance],
                   comparison: Sequence[ObjectInstance], thresholds: RelationThresholds) -> bool:
    """
    Evaluate one relation for one subject and one anchor assignment.

    comparison is the set the subject competes against for closest/farthest
    (the subject is always included implicitly); other kinds ignore it.
    """
    kind = RelationKind(kind)
    if len(anchors) != kind.arity:
        raise ArityMismatch(f"'{kind.value}' takes {kind.arity} anchor(s), got {len(anchors)}")
    if any(a.id == subject.id for a in anchors):
        return False

    anchor = anchors[0]
    if kind is RelationKind.BETWEEN:
        if anchors[0].id == anchors[1].id:
            return False
        return _is_between(subject, anchors[0], anchors[1], thresholds)

    d = distance(subject, anchor)
    if kind in COMPARATIVE:
        rivals = [distance(c, anchor) for c in comparison if c.id not in (anchor.id, subject.id)]
        if kind is RelationKind.CLOSEST:
            return all(d <= r for r in rivals)
        return all(d >= r for r in rivals)
    if kind is RelationKind.NEAR:
        return d <= thresholds.near
    if kind is RelationKind.FAR:
        return d >= thresholds.far
    if kind is RelationKind.ABOVE:
        return _is_above(subject, anchor)
    if kind is RelationKind.BELOW:
        return _is_above(anchor, subject)
    if kind is RelationKind.SUPPORTED_BY:
        return _is_above(subject, anchor) and abs(subject.bottom - anchor.top) <= thresholds.support_tolerance
    raise ValueError(f"unhandled relation {kind!r}")
