import pytest

from config import RelationThresholds
from conftest import make_scene
from distractor_id import DistractorSet, identify_distractors, oracle_classifier
from errors import ArityMismatch, NoValidAnchor, UnknownId, UnknownTarget
from grounding_oracle import Verdict, ground_text
from instruction_gen import (Instruction, Status, generate_blind_instruction, generate_instruction,
                             generate_near_only_instruction, holds, render_text)
from prng import derive_seed
from scene_model import SceneGenConfig, generate_scene
from spatial_encoding import select_anchor_candidates
from spatial_relations import RelationKind, SpatialRelation, relation_holds


def _rel(kind, *anchors):
    return SpatialRelation(RelationKind(kind), anchors)


@pytest.mark.parametrize('category, kind, anchors, expected', [
    ('chair', 'closest', ['table'], 'the chair closest to the table'),
    ('sink', 'far', ['trash can'], 'the sink far from the trash can'),
    ('book', 'between', ['lamp', 'plant'], 'the book between the lamp and the plant'),
    ('cup', 'supported_by', ['desk'], 'the cup on the desk'),
])
def test_render_text(category, kind, anchors, expected):
    relation = _rel(kind, *range(len(anchors)))
    assert render_text(category, relation, anchors) == expected


def test_render_text_arity():
    with pytest.raises(ArityMismatch):
        render_text('book', _rel('between', 0, 1), ['lamp'])
    with pytest.raises(ArityMismatch):
        _rel('near', 0, 1)


def test_holds_s1(s1):
    distractors = DistractorSet(1, frozenset({2}))
    assert holds(_rel('closest', 3), 1, s1, distractors)
    assert not holds(_rel('farthest', 3), 1, s1, distractors)
    assert holds(_rel('farthest', 3), 2, s1, distractors)
    with pytest.raises(UnknownId):
        holds(_rel('near', 42), 1, s1, distractors)


def test_relations_are_irreflexive(s1):
    thresholds = RelationThresholds()
    for obj in s1.objects:
        assert not relation_holds(RelationKind.ABOVE, obj, [obj], s1.objects, thresholds)
        assert not relation_holds(RelationKind.NEAR, obj, [obj], s1.objects, thresholds)


def test_vertical_relations():
    scene = make_scene('stack', (0, 'table', (1, 1, 0.4), (1.0, 1.0, 0.8)),
                       (1, 'cup', (1.1, 1, 0.85), (0.1, 0.1, 0.1)),
                       (2, 'lamp', (1, 1, 2.5), (0.2, 0.2, 0.2)),
                       (3, 'rug', (4, 4, 0.01), (1.0, 1.0, 0.02)))
    t = RelationThresholds()
    table, cup, lamp, rug = (scene.get(i) for i in range(4))

    assert relation_holds(RelationKind.SUPPORTED_BY, cup, [table], [], t)
    assert relation_holds(RelationKind.ABOVE, lamp, [table], [], t)
    assert not relation_holds(RelationKind.SUPPORTED_BY, lamp, [table], [], t)
    assert relation_holds(RelationKind.BELOW, table, [lamp], [], t)
    assert not relation_holds(RelationKind.ABOVE, rug, [table], [], t)


def test_between():
    scene = make_scene('line', (0, 'lamp', (0, 0, 0)), (1, 'plant', (4, 0, 0)),
                       (2, 'book', (2, 0.3, 0)), (3, 'book', (0.2, 0, 0)), (4, 'book', (2, 2, 0)))
    t = RelationThresholds()
    lamp, plant = scene.get(0), scene.get(1)
    assert relation_holds(RelationKind.BETWEEN, scene.get(2), [lamp, plant], [], t)
    assert not relation_holds(RelationKind.BETWEEN, scene.get(3), [lamp, plant], [], t)
    assert not relation_holds(RelationKind.BETWEEN, scene.get(4), [lamp, plant], [], t)
    assert not relation_holds(RelationKind.BETWEEN, scene.get(2), [lamp, lamp], [], t)


def test_generate_instruction_s1(s1):
    distractors = identify_distractors(s1, 1, oracle_classifier())
    anchors = select_anchor_candidates(s1, 1, distractors, 5)
    inst = generate_instruction(s1, 1, distractors, anchors, seed=0)

    assert inst.text == 'the chair closest to the table'
    assert inst.status is Status.EXCLUSIVE
    assert inst.relation == _rel('closest', 3)
    assert inst.num_distractors == 1

    other = generate_instruction(s1, 2, identify_distractors(s1, 2, oracle_classifier()),
                                 select_anchor_candidates(s1, 2, identify_distractors(s1, 2, oracle_classifier()), 5))
    assert other.text == 'the chair closest to the door'
    assert other.status is Status.EXCLUSIVE


def test_generate_instruction_without_distractors():
    scene = make_scene('bedroom', (0, 'bed', (1, 1, 0)), (1, 'lamp', (2, 1, 0)))
    inst = generate_instruction(scene, 0, identify_distractors(scene, 0, oracle_classifier()), [])
    assert inst.text == 'the bed'
    assert inst.relation is None
    assert inst.status is Status.EXCLUSIVE


def test_generate_instruction_symmetric_chairs_fail():
    scene = make_scene('mirror', (0, 'chair', (-1, 0, 0)), (1, 'chair', (1, 0, 0)), (2, 'table', (0, 0, 0)))
    distractors = identify_distractors(scene, 0, oracle_classifier())
    inst = generate_instruction(scene, 0, distractors, select_anchor_candidates(scene, 0, distractors, 5))

    assert inst.status is Status.FAILED
    assert inst.text == 'the chair closest to the table'


def test_generate_instruction_unknown_target(s1):
    with pytest.raises(UnknownTarget):
        generate_instruction(s1, 99, DistractorSet(99, frozenset()), [])


def test_ablation_generators(s1):
    distractors = identify_distractors(s1, 1, oracle_classifier())
    anchors = select_anchor_candidates(s1, 1, distractors, 5)

    near = generate_near_only_instruction(s1, 1, distractors, anchors)
    assert near.text == 'the chair near the table'
    assert near.status is Status.EXCLUSIVE

    blind = generate_blind_instruction(s1, 1, distractors)
    assert blind.text == 'the chair'
    assert blind.status is Status.AMBIGUOUS


def test_instruction_record_round_trip(s1):
    inst = Instruction('s1', 1, 'the chair closest to the table', _rel('closest', 3), Status.EXCLUSIVE, 1)
    record = inst.to_dict()
    assert record['relation'] == {'kind': 'closest', 'anchor_ids': [3]}
    assert Instruction.from_dict(record) == inst


def test_exclusive_instructions_ground_to_their_target():
    pool = ('table', 'lamp', 'desk', 'sofa', 'plant', 'bookshelf', 'coffee table', 'trash can')
    exclusive = 0
    for run_seed in range(10):
        for index in range(50):
            seed = derive_seed(run_seed, 'scene', index)
            scene = generate_scene(SceneGenConfig(seed=seed, category_pool=pool, object_count=6,
                                                  distractor_spec=('chair', 1 + index % 4)))
            for target in scene.of_category('chair'):
                distractors = identify_distractors(scene, target.id, oracle_classifier())
                try:
                    anchors = select_anchor_candidates(scene, target.id, distractors, 5)
                except NoValidAnchor:
                    anchors = []
                inst = generate_instruction(scene, target.id, distractors, anchors)
                if inst.status is not Status.EXCLUSIVE:
                    continue
                exclusive += 1
                result = ground_text(inst.text, scene, target.id)
                assert result.verdict is Verdict.UNIQUE_TARGET, inst.text
                assert result.matched_ids == {target.id}
    assert exclusive > 500
