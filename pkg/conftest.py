import json

import pytest

from scene_model import ObjectInstance, Scene, SceneStore, save_scene

SMALL = (0.5, 0.5, 0.5)


def make_scene(scene_id, *objects, feature_dim=None):
    """objects: (id, category, centroid) or (id, category, centroid, size)."""
    built = []
    for spec in objects:
        object_id, category, centroid = spec[:3]
        size = spec[3] if len(spec) > 3 else SMALL
        built.append(ObjectInstance(object_id, category, tuple(map(float, centroid)), tuple(map(float, size))))
    return Scene(scene_id, tuple(built), feature_dim)


@pytest.fixture
def s1():
    return make_scene(
        's1',
        (1, 'chair', (1, 1, 0)),
        (2, 'chair', (3, 1, 0)),
        (3, 'table', (1, 2, 0)),
        (4, 'door', (5, 3, 0)),
    )


@pytest.fixture
def s1_store(s1):
    return SceneStore.from_scenes([s1])


@pytest.fixture
def s1_dir(tmp_path, s1):
    scenes = tmp_path / 'scenes'
    save_scene(s1, str(scenes / 's1.json'))
    return scenes


@pytest.fixture
def hallucination_scene():
    # "the backpack next to the sink" in a room without a sink
    return make_scene(
        'hallucination',
        (0, 'backpack', (1, 1, 0)),
        (1, 'backpack', (3, 1, 0)),
        (2, 'lamp', (2, 3, 0)),
    )


@pytest.fixture
def ambiguous_anchor_scene():
    # "the armchair close to the table": each table is near a different armchair
    return make_scene(
        'ambiguous_anchor',
        (0, 'armchair', (0, 0, 0)),
        (1, 'armchair', (4, 0, 0)),
        (2, 'table', (0.6, 0, 0)),
        (3, 'table', (4.6, 0, 0)),
    )


@pytest.fixture
def wrong_anchor_scene():
    # "the chair near the table": the table is near both chairs
    return make_scene(
        'wrong_anchor',
        (0, 'chair', (0, 0, 0)),
        (1, 'chair', (1, 0, 0)),
        (2, 'table', (0.5, 0.5, 0)),
        (3, 'door', (5, 5, 0)),
    )


@pytest.fixture
def wrong_description_scene():
    # "the sink far from the trash can" describes the other sink
    return make_scene(
        'wrong_description',
        (0, 'sink', (0, 0, 0)),
        (1, 'sink', (5, 0, 0)),
        (2, 'trash can', (0.5, 0, 0)),
    )


def write_jsonl(path, records):
    path.write_text(''.join(json.dumps(r) + '\n' for r in records), encoding='utf-8')
    return path
