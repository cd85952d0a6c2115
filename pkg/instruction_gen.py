"""
instruction_gen.py - Template generator for target-exclusive referring instructions

Searches relation x anchor combinations in a fixed order and keeps the
first sentence that the grounding oracle resolves to the target alone.
Two weakened variants are kept for ablations: a near-only generator
without exclusivity search and a distractor-blind one.
"""

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from config import RelationThresholds
from distractor_id import DistractorSet
from errors import ArityMismatch, UnknownId, UnknownTarget
from grounding_oracle import ParsedInstruction, ground, parse_instruction
from scene_model import Scene
from spatial_encoding import AnchorCandidate
from spatial_relations import SEARCH_ORDER, RelationKind, SpatialRelation, relation_holds

TEMPLATES = {
    RelationKind.CLOSEST: "the {c} closest to the {a}",
    RelationKind.FARTHEST: "the {c} farthest from the {a}",
    RelationKind.NEAR: "the {c} near the {a}",
    RelationKind.FAR: "the {c} far from the {a}",
    RelationKind.ABOVE: "the {c} above the {a}",
    RelationKind.BELOW: "the {c} below the {a}",
    RelationKind.SUPPORTED_BY: "the {c} on the {a}",
    RelationKind.BETWEEN: "the {c} between the {a} and the {a2}",
}


class Status(str, Enum):
    EXCLUSIVE = 'exclusive'
    AMBIGUOUS = 'ambiguous'
    FAILED = 'failed'


@dataclass(frozen=True)
class Instruction:
    scene_id: str
    target_id: int
    text: str
    relation: Optional[SpatialRelation]
    status: Status
    num_distractors: Optional[int] = None

    def to_dict(self) -> dict:
        record = {
            'scene_id': self.scene_id,
            'target_id': self.target_id,
            'text': self.text,
            'relation': None if self.relation is None else self.relation.to_dict(),
            'status': self.status.value,
        }
        if self.num_distractors is not None:
            record['num_distractors'] = self.num_distractors
        return record

    @classmethod
    def from_dict(cls, data: dict) -> 'Instruction':
        return cls(
            scene_id=data['scene_id'],
            target_id=int(data['target_id']),
            text=data['text'],
            relation=SpatialRelation.from_dict(data.get('relation')),
            status=Status(data.get('status', Status.FAILED.value)),
            num_distractors=data.get('num_distractors'),
        )


def render_text(category: str, relation: SpatialRelation, anchor_categories: Sequence[str]) -> str:
    kind = RelationKind(relation.kind)
    if len(anchor_categories) != kind.arity:
        raise ArityMismatch(f"'{kind.value}' takes {kind.arity} anchor categories, got {len(anchor_categories)}")
    a2 = anchor_categories[1] if kind.arity == 2 else ''
    return TEMPLATES[kind].format(c=category, a=anchor_categories[0], a2=a2).lower()


def holds(relation: SpatialRelation, subject_id: int, scene: Scene, distractors: DistractorSet,
          thresholds: Optional[RelationThresholds] = None) -> bool:
    ids = (subject_id, *relation.anchor_ids)
    missing = [i for i in ids if i not in scene]
    if missing:
        raise UnknownId(f"ids {missing} not in scene {scene.scene_id}")
    comparison_ids = {distractors.target_id, *distractors.members}
    comparison = [o for o in scene.objects if o.id in comparison_ids]
    anchors = [scene.get(i) for i in relation.anchor_ids]
    return relation_holds(relation.kind, scene.get(subject_id), anchors, comparison,
                          thresholds or RelationThresholds())


def _candidate_relations(anchors: Sequence[AnchorCandidate]) -> List[SpatialRelation]:
    ordered = [a.object_id for a in sorted(anchors, key=lambda a: (a.distance_to_target, a.object_id))]
    ordered = list(dict.fromkeys(ordered))
    relations = []
    for kind in SEARCH_ORDER:
        if kind.arity == 1:
            relations.extend(SpatialRelation(kind, (a,)) for a in ordered)
        else:
            relations.extend(SpatialRelation(kind, pair) for pair in itertools.combinations(ordered, 2))
    return relations


def _describe(scene: Scene, target_id: int, relation: SpatialRelation) -> Tuple[str, ParsedInstruction]:
    category = scene.get(target_id).category
    anchor_categories = tuple(scene.get(a).category for a in relation.anchor_ids)
    text = render_text(category, relation, anchor_categories)
    return text, ParsedInstruction(category, relation.kind, anchor_categories)


def _grounds_exclusively(text: str, scene: Scene, target_id: int, thresholds: RelationThresholds) -> bool:
    parsed = parse_instruction(text, scene.categories())
    return ground(parsed, scene, thresholds) == {target_id}


def generate_instruction(scene: Scene, target_id: int, distractors: DistractorSet,
                         anchors: Sequence[AnchorCandidate], seed: int = 0,
                         thresholds: Optional[RelationThresholds] = None) -> Instruction:
    """
    First exclusive sentence in the pinned relation x anchor order.

    The search consumes no randomness; seed is accepted so every generator
    variant shares one signature. When nothing is exclusive the result is
    marked failed and carries the candidate whose grounding contained the
    target together with the fewest other objects.
    """
    target = scene.find(target_id)
    if target is None:
        raise UnknownTarget(f"target {target_id} not in scene {scene.scene_id}")
    thresholds = thresholds or RelationThresholds()
    bare = f"the {target.category}"
    count = len(distractors)

    if not distractors.members:
        return Instruction(scene.scene_id, target_id, bare, None, Status.EXCLUSIVE, count)

    best: Optional[Tuple[int, str, SpatialRelation]] = None
    for relation in _candidate_relations(anchors):
        text, parsed = _describe(scene, target_id, relation)
        matched = ground(parsed, scene, thresholds)
        if matched == {target_id} and _grounds_exclusively(text, scene, target_id, thresholds):
            return Instruction(scene.scene_id, target_id, text, relation, Status.EXCLUSIVE, count)
        if target_id in matched and (best is None or len(matched) < best[0]):
            best = (len(matched), text, relation)

    if best is None:
        return Instruction(scene.scene_id, target_id, bare, None, Status.FAILED, count)
    _, text, relation = best
    return Instruction(scene.scene_id, target_id, text, relation, Status.FAILED, count)


def _status_from_grounding(matched, target_id: int) -> Status:
    if matched == {target_id}:
        return Status.EXCLUSIVE
    return Status.AMBIGUOUS if target_id in matched else Status.FAILED


def generate_near_only_instruction(scene: Scene, target_id: int, distractors: DistractorSet,
                                   anchors: Sequence[AnchorCandidate],
                                   thresholds: Optional[RelationThresholds] = None) -> Instruction:
    """Weakened generator: always "near" the closest anchor, no exclusivity search."""
    target = scene.find(target_id)
    if target is None:
        raise UnknownTarget(f"target {target_id} not in scene {scene.scene_id}")
    thresholds = thresholds or RelationThresholds()
    count = len(distractors)
    if not anchors:
        text = f"the {target.category}"
        matched = ground(ParsedInstruction(target.category), scene, thresholds)
        return Instruction(scene.scene_id, target_id, text, None, _status_from_grounding(matched, target_id), count)
    nearest = min(anchors, key=lambda a: (a.distance_to_target, a.object_id))
    relation = SpatialRelation(RelationKind.NEAR, (nearest.object_id,))
    text, parsed = _describe(scene, target_id, relation)
    matched = ground(parsed, scene, thresholds)
    return Instruction(scene.scene_id, target_id, text, relation, _status_from_grounding(matched, target_id), count)


def generate_blind_instruction(scene: Scene, target_id: int, distractors: DistractorSet,
                               thresholds: Optional[RelationThresholds] = None) -> Instruction:
    """Generator that skips distractor identification and names the category alone."""
    target = scene.find(target_id)
    if target is None:
        raise UnknownTarget(f"target {target_id} not in scene {scene.scene_id}")
    matched = ground(ParsedInstruction(target.category), scene, thresholds)
    return Instruction(scene.scene_id, target_id, f"the {target.category}", None,
                       _status_from_grounding(matched, target_id), len(distractors))
