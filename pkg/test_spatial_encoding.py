import math

import numpy as np
import pytest

from conftest import make_scene
from distractor_id import DistractorSet, identify_distractors, oracle_classifier
from errors import AnchorNotInMap, InvariantViolation, NoValidAnchor, ParseError, UnknownId
from scene_model import SceneGenConfig, generate_scene
from spatial_encoding import (AnchorBlock, AnchorCandidate, TokenSequence, build_token_sequence, encoding_subset,
                              format_number, inject_ambiguous_anchor, parse_token_sequence, relative_position_map,
                              select_anchor_candidates, serialize_token_sequence, token_sequence_record)

POOL = ('table', 'lamp', 'desk', 'sofa', 'plant', 'bookshelf', 'door', 'window', 'sink', 'piano', 'clock')


def test_relative_position_map_s1(s1):
    rpm = relative_position_map(s1, [1, 2])
    assert rpm.entry(1, 2) == (0.5, 0.0, 0.0)
    assert rpm.entry(2, 1) == (-0.5, 0.0, 0.0)
    assert rpm.entry(1, 1) == (0.0, 0.0, 0.0)
    with pytest.raises(AnchorNotInMap):
        rpm.entry(1, 3)
    with pytest.raises(UnknownId):
        relative_position_map(s1, [1, 42])


def test_relative_position_map_coincident_centroids():
    scene = make_scene('twins', (0, 'cup', (1, 1, 1)), (1, 'cup', (1, 1, 1)), (2, 'desk', (2, 3, 1)))
    rpm = relative_position_map(scene, [0, 1])
    assert rpm.entry(0, 1) == (0.0, 0.0, 0.0)
    assert rpm.entry(1, 0) == (0.0, 0.0, 0.0)


def test_relative_position_map_is_read_only(s1):
    rpm = relative_position_map(s1, [1, 2, 3, 4])
    with pytest.raises(ValueError):
        rpm.entries[0, 0, 0] = 1.0


def test_relative_position_map_properties_on_random_scenes():
    rng = np.random.default_rng(0)
    for seed in range(1000):
        count = int(rng.integers(2, 9))
        scene = generate_scene(SceneGenConfig(seed=seed, category_pool=POOL, object_count=count,
                                              min_separation=0.2))
        entries = relative_position_map(scene, [o.id for o in scene.objects]).entries

        assert np.all(np.diagonal(entries, axis1=0, axis2=1) == 0.0)
        assert np.array_equal(entries, -np.swapaxes(entries, 0, 1))
        assert np.all(np.abs(entries) <= 1.0)


def test_select_anchor_candidates_s1(s1):
    distractors = identify_distractors(s1, 1, oracle_classifier())
    anchors = select_anchor_candidates(s1, 1, distractors, 5)

    assert [a.object_id for a in anchors] == [3, 4]
    assert anchors[0].distance_to_target == pytest.approx(1.0)
    assert anchors[1].distance_to_target == pytest.approx(math.sqrt(20))
    assert not any(a.ambiguous for a in anchors)
    assert [a.object_id for a in select_anchor_candidates(s1, 1, distractors, 1)] == [3]


def test_select_anchor_candidates_skips_repeated_categories():
    scene = make_scene('lamps', (0, 'chair', (0, 0, 0)), (1, 'chair', (3, 0, 0)),
                       (2, 'lamp', (0.5, 0, 0)), (3, 'lamp', (1, 1, 0)), (4, 'desk', (2, 2, 0)))
    anchors = select_anchor_candidates(scene, 0, DistractorSet(0, frozenset({1})), 5)
    assert [a.object_id for a in anchors] == [4]


def test_select_anchor_candidates_only_chairs():
    scene = make_scene('chairs', *[(i, 'chair', (i, 0, 0)) for i in range(3)])
    with pytest.raises(NoValidAnchor):
        select_anchor_candidates(scene, 0, identify_distractors(scene, 0, oracle_classifier()), 5)


def test_inject_ambiguous_anchor_needs_three_others():
    scene = make_scene('small', (0, 'chair', (0, 0, 0)), (1, 'chair', (1, 0, 0)), (2, 'lamp', (2, 0, 0)))
    anchors = [AnchorCandidate(2, 2.0)]
    assert inject_ambiguous_anchor(anchors, scene, 0, seed=5) == anchors


def test_inject_ambiguous_anchor_is_deterministic_and_mid_distance():
    scene = make_scene('row', *[(i, 'chair' if i < 2 else f'thing{i}', (i, 0, 0)) for i in range(6)])
    anchors = [AnchorCandidate(2, 2.0)]

    first = inject_ambiguous_anchor(anchors, scene, 0, seed=5)
    assert first == inject_ambiguous_anchor(anchors, scene, 0, seed=5)
    assert first[:1] == anchors and len(first) == 2

    injected = first[-1]
    assert injected.ambiguous
    # neither the closest (1) nor the farthest (5) object, and not an existing anchor
    assert injected.object_id in {3, 4}
    picks = {inject_ambiguous_anchor(anchors, scene, 0, seed=s)[-1].object_id for s in range(50)}
    assert picks == {3, 4}


def _token_fixture():
    scene = generate_scene(SceneGenConfig(seed=123, category_pool=POOL, object_count=11))
    target = scene.objects[0]
    others = [o for o in scene.objects if o.id != target.id]
    rpm = relative_position_map(scene, [o.id for o in scene.objects])
    return scene, target, others, rpm


def test_build_token_sequence_single_anchor_ignores_seed():
    scene, target, others, rpm = _token_fixture()
    anchors = [AnchorCandidate(others[0].id, 1.0)]
    orders = {build_token_sequence(scene, target.id, anchors, rpm, seed).anchor_blocks for seed in range(20)}
    assert len(orders) == 1


def test_build_token_sequence_shuffle_properties():
    scene, target, others, rpm = _token_fixture()
    rng = np.random.default_rng(7)
    for _ in range(1000):
        count = int(rng.integers(1, 6))
        picked = rng.choice(len(others), size=count, replace=False)
        anchors = [AnchorCandidate(others[i].id, 0.0) for i in picked]
        seed = int(rng.integers(0, 2 ** 63))

        ts = build_token_sequence(scene, target.id, anchors, rpm, seed)
        again = build_token_sequence(scene, target.id, anchors, rpm, seed)
        assert serialize_token_sequence(ts) == serialize_token_sequence(again)
        assert sorted(b.anchor_id for b in ts.anchor_blocks) == sorted(a.object_id for a in anchors)
        for block in ts.anchor_blocks:
            assert block.relative_position == rpm.entry(target.id, block.anchor_id)


def test_build_token_sequence_orders_vary_with_seed():
    scene, target, others, rpm = _token_fixture()
    anchors = [AnchorCandidate(o.id, 0.0) for o in others[:3]]
    orders = {tuple(b.anchor_id for b in build_token_sequence(scene, target.id, anchors, rpm, seed).anchor_blocks)
              for seed in range(100)}
    assert len(orders) >= 2


def test_build_token_sequence_without_shuffle():
    scene, target, others, rpm = _token_fixture()
    anchors = [AnchorCandidate(o.id, 0.0) for o in others[:4]]
    for seed in range(20):
        ts = build_token_sequence(scene, target.id, anchors, rpm, seed, shuffle=False)
        assert [b.anchor_id for b in ts.anchor_blocks] == [a.object_id for a in anchors]


def test_serialize_without_anchors():
    assert serialize_token_sequence(TokenSequence(7, ())) == '<PC> T:7 </PC>'


def test_serialize_layout():
    ts = TokenSequence(1, (AnchorBlock(3, (0.0, 0.5, 0.0)), AnchorBlock(4, (1.0, -0.25, 1e-07))))
    assert serialize_token_sequence(ts) == (
        '<PC> T:1 <Anchor_1> A:3 RP:(0,0.5,0) </Anchor_1> <Anchor_2> A:4 RP:(1,-0.25,1e-07) </Anchor_2> </PC>')


def test_parse_serialized_sequence(s1):
    distractors = identify_distractors(s1, 1, oracle_classifier())
    anchors = select_anchor_candidates(s1, 1, distractors, 5)
    rpm = relative_position_map(s1, encoding_subset(1, distractors, anchors))
    ts = build_token_sequence(s1, 1, anchors, rpm, seed=99)

    assert parse_token_sequence(serialize_token_sequence(ts)) == ts


@pytest.mark.parametrize('text, offset', [
    ('<PC> X:1 </PC>', 5),
    ('<PC> T:1 <Anchor_2> A:3 RP:(0,0,0) </Anchor_2> </PC>', 9),
    ('<PC> T:1', 8),
    ('<PC> T:1 </PC> extra', 15),
    ('<PC> T:1 <Anchor_1> A:3 RP:(0,0,0) </Anchor_2> </PC>', 35),
    ('<PC> T:1 <Anchor_1> A:3 RP:(0,x,0) </Anchor_1> </PC>', 24),
])
def test_parse_token_sequence_errors(text, offset):
    with pytest.raises(ParseError) as excinfo:
        parse_token_sequence(text)
    assert excinfo.value.offset == offset


def test_token_sequence_rejects_duplicate_anchors():
    with pytest.raises(InvariantViolation):
        TokenSequence(1, (AnchorBlock(3, (0, 0, 0)), AnchorBlock(3, (0, 0, 0))))


def test_token_sequence_record(s1):
    ts = TokenSequence(1, (AnchorBlock(3, (0.0, 0.5, 0.0), ambiguous=True),), seed=4)
    record = token_sequence_record('s1', ts)
    assert record == {
        'scene_id': 's1', 'target_id': 1, 'seed': 4,
        'serialized': '<PC> T:1 <Anchor_1> A:3 RP:(0,0.5,0) </Anchor_1> </PC>',
        'anchors': [{'id': 3, 'ambiguous': True}],
    }


def test_format_number():
    assert format_number(0.0) == '0'
    assert format_number(-0.0) == '0'
    assert format_number(2.0) == '2'
    assert format_number(0.1) == '0.1'
