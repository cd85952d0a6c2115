import itertools
import json
import math

import pytest

from conftest import make_scene
from errors import FeatureDimMismatch, InvariantViolation, MalformedFile, MissingScene, PlacementExhausted
from scene_model import (ObjectInstance, Scene, SceneGenConfig, SceneStore, dump_scene, generate_scene,
                         load_scene, load_scene_dir, save_scene, scene_extents)

POOL = ('table', 'lamp', 'desk', 'sofa', 'plant', 'bookshelf')


def _write(tmp_path, data, name='scene.json'):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding='utf-8')
    return str(path)


def _obj(object_id, category='chair', centroid=(0, 0, 0), feature=None):
    return {'id': object_id, 'category': category, 'centroid': list(centroid), 'size': [1, 1, 1], 'feature': feature}


def test_load_scene_preserves_file_order(tmp_path):
    data = {'scene_id': 'a', 'feature_dim': None,
            'objects': [_obj(3), _obj(1, 'table'), _obj(2, 'Trash  Can'), _obj(0, 'door')]}
    scene = load_scene(_write(tmp_path, data))

    assert [o.id for o in scene.objects] == [3, 1, 2, 0]
    assert scene.get(2).category == 'trash can'


def test_load_scene_rejects_duplicate_ids(tmp_path):
    data = {'scene_id': 'a', 'feature_dim': None, 'objects': [_obj(3), _obj(3, 'table'), _obj(1)]}
    with pytest.raises(InvariantViolation):
        load_scene(_write(tmp_path, data))


def test_load_scene_rejects_wrong_feature_length(tmp_path):
    unit8 = [1.0] + [0.0] * 7
    data = {'scene_id': 'a', 'feature_dim': 8,
            'objects': [_obj(0, feature=unit8), _obj(1, feature=[1.0, 0.0, 0.0, 0.0, 0.0])]}
    with pytest.raises(FeatureDimMismatch):
        load_scene(_write(tmp_path, data))


@pytest.mark.parametrize('text', ['{not json', '[]', '{"scene_id": "a"}'])
def test_load_scene_malformed(tmp_path, text):
    path = tmp_path / 'bad.json'
    path.write_text(text, encoding='utf-8')
    with pytest.raises(MalformedFile):
        load_scene(str(path))


@pytest.mark.parametrize('obj', [
    _obj(0, feature=['x', 1]),
    _obj(0, centroid=('a', 0, 0)),
    {'id': 0, 'category': 'chair', 'centroid': [0, 0, 0], 'size': [1, None, 1]},
])
def test_load_scene_non_numeric_values(tmp_path, obj):
    data = {'scene_id': 'a', 'feature_dim': None, 'objects': [obj, _obj(1, 'table')]}
    with pytest.raises(MalformedFile):
        load_scene(_write(tmp_path, data))


def test_invariants():
    with pytest.raises(InvariantViolation):
        ObjectInstance(0, 'chair', (0, 0, 0), (1, 0, 1))
    with pytest.raises(InvariantViolation):
        ObjectInstance(0, 'chair', (0, 0, 0), (1, 1, 1), feature=(0.5, 0.5))
    with pytest.raises(InvariantViolation):
        make_scene('lonely', (0, 'chair', (0, 0, 0)))


def test_generate_scene_is_deterministic():
    config = SceneGenConfig(seed=7, category_pool=POOL, distractor_spec=('chair', 3), feature_dim=4)
    assert dump_scene(generate_scene(config)) == dump_scene(generate_scene(config))
    assert dump_scene(generate_scene(config)) != dump_scene(generate_scene(SceneGenConfig(seed=8, category_pool=POOL)))


def test_generate_scene_forces_distractor_count():
    scene = generate_scene(SceneGenConfig(seed=3, category_pool=POOL, object_count=6, distractor_spec=('chair', 3)))
    assert len(scene.of_category('chair')) == 3
    assert len(scene.objects) == 9


def test_generate_scene_respects_room_and_separation():
    config = SceneGenConfig(seed=11, room_extent=(4.0, 4.0, 2.5), category_pool=POOL, object_count=10,
                            min_separation=0.8)
    scene = generate_scene(config)
    for o in scene.objects:
        assert all(0.0 <= c <= e for c, e in zip(o.centroid, config.room_extent))
    for a, b in itertools.combinations(scene.objects, 2):
        assert math.dist(a.centroid, b.centroid) >= config.min_separation


def test_generate_scene_features_are_unit_vectors():
    scene = generate_scene(SceneGenConfig(seed=5, category_pool=POOL, feature_dim=16))
    assert scene.feature_dim == 16
    for o in scene.objects:
        assert math.isclose(math.sqrt(sum(x * x for x in o.feature)), 1.0, abs_tol=1e-9)


def test_generate_scene_placement_exhausted():
    config = SceneGenConfig(seed=1, room_extent=(1.0, 1.0, 1.0), category_pool=POOL, object_count=50,
                            min_separation=1.0, max_attempts=500)
    with pytest.raises(PlacementExhausted):
        generate_scene(config)


def test_save_then_load_round_trip(tmp_path):
    scene = generate_scene(SceneGenConfig(seed=21, category_pool=POOL, distractor_spec=('chair', 2), feature_dim=3))
    path = save_scene(scene, str(tmp_path / 'out' / 'scene.json'))

    assert load_scene(path) == scene
    with open(path, encoding='utf-8') as f:
        text = f.read()
    assert text.endswith('\n')
    assert list(json.loads(text)) == ['scene_id', 'feature_dim', 'objects']


def test_save_keeps_object_order(tmp_path):
    scene = make_scene('unordered', (5, 'lamp', (0, 0, 0)), (2, 'chair', (2, 0, 0)), (9, 'door', (4, 0, 0)))
    loaded = load_scene(save_scene(scene, str(tmp_path / 'unordered.json')))
    assert [o.id for o in loaded.objects] == [5, 2, 9]
    assert loaded == scene


def test_scene_extents():
    scene = make_scene('e', (0, 'a', (1, 1, 0)), (1, 'b', (5, 3, 0)), (2, 'c', (2, 2, 0)))
    assert scene_extents(scene) == (4.0, 2.0, 0.0)
    assert scene_extents(make_scene('f', (0, 'a', (0, 0, 0)), (1, 'b', (1, 2, 3)))) == (1.0, 2.0, 3.0)


def test_scene_extents_ignores_object_order():
    scene = generate_scene(SceneGenConfig(seed=2, category_pool=POOL))
    reversed_scene = Scene(scene.scene_id, tuple(reversed(scene.objects)))
    assert scene_extents(scene) == scene_extents(reversed_scene)


def test_scene_store(tmp_path, s1):
    save_scene(s1, str(tmp_path / 's1.json'))
    store = SceneStore.from_dir(str(tmp_path))

    assert 's1' in store and len(store) == 1
    assert store.get('s1') == s1
    assert store.categories() == ['chair', 'door', 'table']
    with pytest.raises(MissingScene) as excinfo:
        store.get('nowhere')
    assert 'nowhere' in str(excinfo.value)


def test_load_scene_dir_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scene_dir(str(tmp_path / 'absent'))
