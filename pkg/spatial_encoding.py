"""
spatial_encoding.py - Relative positions, anchor proposals and token sequences

Builds the normalized pairwise offset map over {target, distractors,
anchors}, proposes category-unique anchors, optionally injects a
mid-distance ambiguous anchor, and serializes the shuffled
<PC> ... </PC> token sequence handed to a language model.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import pyparsing as pp

from config import ENCODING_CONFIG
from distractor_id import DistractorSet
from errors import AnchorNotInMap, InvariantViolation, NoValidAnchor, ParseError, UnknownId, UnknownTarget
from prng import SplitMix64
from scene_model import Scene, Vec3, scene_extents
from spatial_relations import distance


@dataclass(frozen=True, eq=False)
class RelativePositionMap:
    object_ids: Tuple[int, ...]
    entries: np.ndarray     # (n, n, 3), entries[i][j] = N(c_j - c_i)

    def index(self, object_id: int) -> int:
        try:
            return self.object_ids.index(object_id)
        except ValueError:
            raise AnchorNotInMap(f"object {object_id} is not in the relative position map")

    def entry(self, from_id: int, to_id: int) -> Vec3:
        return tuple(float(x) for x in self.entries[self.index(from_id), self.index(to_id)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, RelativePositionMap):
            return NotImplemented
        return self.object_ids == other.object_ids and np.array_equal(self.entries, other.entries)


@dataclass(frozen=True)
class AnchorCandidate:
    object_id: int
    distance_to_target: float
    ambiguous: bool = False


@dataclass(frozen=True)
class AnchorBlock:
    anchor_id: int
    relative_position: Vec3
    ambiguous: bool = field(default=False, compare=False)


@dataclass(frozen=True)
class TokenSequence:
    target_id: int
    anchor_blocks: Tuple[AnchorBlock, ...]
    seed: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'anchor_blocks', tuple(self.anchor_blocks))
        ids = [b.anchor_id for b in self.anchor_blocks]
        if len(set(ids)) != len(ids):
            raise InvariantViolation(f"duplicate anchor ids in token sequence: {ids}")


def relative_position_map(scene: Scene, subset: Sequence[int]) -> RelativePositionMap:
    ids = tuple(dict.fromkeys(subset))
    if not ids:
        raise UnknownId("subset must contain at least one object id")
    missing = [i for i in ids if i not in scene]
    if missing:
        raise UnknownId(f"ids {missing} not in scene {scene.scene_id}")

    centroids = np.array([scene.get(i).centroid for i in ids], dtype=float)
    extents = np.array(scene_extents(scene))
    offsets = centroids[np.newaxis, :, :] - centroids[:, np.newaxis, :]
    # axes with no spread carry no information; map them to 0
    usable = extents >= ENCODING_CONFIG['extent_epsilon']
    entries = np.zeros_like(offsets)
    np.divide(offsets, extents, out=entries, where=np.broadcast_to(usable, offsets.shape))
    entries.setflags(write=False)
    return RelativePositionMap(object_ids=ids, entries=entries)


def select_anchor_candidates(scene: Scene, target_id: int, distractors: DistractorSet,
                             max_anchors: int) -> List[AnchorCandidate]:
    target = scene.find(target_id)
    if target is None:
        raise UnknownTarget(f"target {target_id} not in scene {scene.scene_id}")
    if max_anchors < 1:
        raise ValueError("max_anchors must be >= 1")

    counts = Counter(o.category for o in scene.objects)
    valid = [
        o for o in scene.objects
        if o.id != target_id
        and o.id not in distractors.members
        and o.category != target.category
        and counts[o.category] == 1
    ]
    if not valid:
        raise NoValidAnchor(f"scene {scene.scene_id}: no category-unique anchor for target {target_id}")
    ranked = sorted(((distance(target, o), o.id) for o in valid))
    return [AnchorCandidate(object_id=oid, distance_to_target=d) for d, oid in ranked[:max_anchors]]


def inject_ambiguous_anchor(candidates: Sequence[AnchorCandidate], all_objects: Scene, target_id: int,
                            seed: int) -> List[AnchorCandidate]:
    """Append one object that is neither the closest nor the farthest from the target."""
    target = all_objects.get(target_id)
    others = sorted((distance(target, o), o.id) for o in all_objects.objects if o.id != target_id)
    if len(others) < 3:
        return list(candidates)
    taken = {c.object_id for c in candidates}
    eligible = [(d, oid) for d, oid in others[1:-1] if oid not in taken]
    if not eligible:
        return list(candidates)
    d, oid = eligible[SplitMix64(seed).randbelow(len(eligible))]
    return list(candidates) + [AnchorCandidate(object_id=oid, distance_to_target=d, ambiguous=True)]


def build_token_sequence(scene: Scene, target_id: int, anchors: Sequence[AnchorCandidate],
                         rpm: RelativePositionMap, seed: int, shuffle: bool = True) -> TokenSequence:
    """Anchor blocks in a seeded Fisher-Yates order, or candidate order when `shuffle` is off."""
    if target_id not in scene:
        raise UnknownTarget(f"target {target_id} not in scene {scene.scene_id}")
    rpm.index(target_id)
    blocks = [
        AnchorBlock(a.object_id, rpm.entry(target_id, a.object_id), a.ambiguous)
        for a in anchors
    ]
    if shuffle:
        blocks = SplitMix64(seed).shuffle(blocks)
    return TokenSequence(target_id=target_id, anchor_blocks=tuple(blocks), seed=seed)


def format_number(x: float) -> str:
    """Shortest round-trip decimal, integral values without a trailing '.0'."""
    x = float(x)
    if x == 0.0:
        return '0'
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def serialize_token_sequence(ts: TokenSequence) -> str:
    parts = ['<PC>', f'T:{ts.target_id}']
    for i, block in enumerate(ts.anchor_blocks, start=1):
        rp = ','.join(format_number(v) for v in block.relative_position)
        parts.extend([f'<Anchor_{i}>', f'A:{block.anchor_id}', f'RP:({rp})', f'</Anchor_{i}>'])
    parts.append('</PC>')
    return ' '.join(parts)


_NUMBER = r'[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?'


def _tag(pattern: str) -> pp.ParserElement:
    # yields [index, location] so block numbering can be checked after the parse
    return pp.Regex(pattern).set_parse_action(lambda s, loc, t: [int(t[0].rstrip('>').rsplit('_', 1)[1]), loc])


def _token_grammar() -> pp.ParserElement:
    target = pp.Regex(r'T:\d+').set_parse_action(lambda t: int(t[0][2:]))
    anchor = pp.Regex(r'A:\d+').set_parse_action(lambda t: int(t[0][2:]))
    rp = pp.Regex(rf'RP:\({_NUMBER},{_NUMBER},{_NUMBER}\)').set_parse_action(
        lambda t: [float(v) for v in t[0][4:-1].split(',')])
    block = pp.Group(_tag(r'<Anchor_\d+>') - anchor - rp - _tag(r'</Anchor_\d+>'))
    return (pp.Suppress('<PC>') - target('target') + pp.Group(pp.ZeroOrMore(block))('blocks')
            + pp.Suppress('</PC>') + pp.StringEnd())


_TOKENS = _token_grammar()


def parse_token_sequence(text: str, seed: int = 0) -> TokenSequence:
    """Inverse of serialize_token_sequence; error offsets are byte offsets into `text`."""
    try:
        result = _TOKENS.parse_string(text, parse_all=True)
    except pp.ParseBaseException as e:
        raise ParseError(f"cannot parse token sequence: {e.msg}", len(text[:e.loc].encode('utf-8')))

    blocks = []
    for i, (open_index, open_loc, anchor_id, x, y, z, close_index, close_loc) in enumerate(result['blocks'], 1):
        if open_index != i:
            raise ParseError(f"expected <Anchor_{i}>, got <Anchor_{open_index}>", len(text[:open_loc].encode('utf-8')))
        if close_index != i:
            raise ParseError(f"expected </Anchor_{i}>, got </Anchor_{close_index}>",
                             len(text[:close_loc].encode('utf-8')))
        blocks.append(AnchorBlock(anchor_id, (x, y, z)))
    return TokenSequence(target_id=result['target'], anchor_blocks=tuple(blocks), seed=seed)


def token_sequence_record(scene_id: str, ts: TokenSequence) -> dict:
    return {
        'scene_id': scene_id,
        'target_id': ts.target_id,
        'seed': ts.seed,
        'serialized': serialize_token_sequence(ts),
        'anchors': [{'id': b.anchor_id, 'ambiguous': b.ambiguous} for b in ts.anchor_blocks],
    }


def encoding_subset(target_id: int, distractors: DistractorSet, anchors: Iterable[AnchorCandidate]) -> List[int]:
    """{target} ∪ distractors ∪ anchors, target first, the rest in stable order."""
    return [target_id] + sorted(distractors.members) + [a.object_id for a in anchors]
