"""
scene_model.py - Scene representation, scene files and seeded scene generation

Purpose: Holds the labeled, positioned, sized objects of one room, reads and
writes the scene JSON format, and procedurally generates desk-scale rooms
with a controlled number of same-category distractors.
"""

import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config import SCENE_CONFIG
from errors import (FeatureDimMismatch, InvariantViolation, MalformedFile,
                    MissingScene, PlacementExhausted)
from prng import SplitMix64, derive_seed

Vec3 = Tuple[float, float, float]

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ObjectInstance:
    id: int
    category: str
    centroid: Vec3
    size: Vec3
    feature: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if not isinstance(self.id, int) or isinstance(self.id, bool) or self.id < 0:
            raise InvariantViolation(f"object id must be a non-negative integer, got {self.id!r}")
        if not self.category or self.category != self.category.strip().lower():
            raise InvariantViolation(f"object {self.id}: category must be a lowercase token, got {self.category!r}")
        if len(self.centroid) != 3 or len(self.size) != 3:
            raise InvariantViolation(f"object {self.id}: centroid and size must be 3-vectors")
        if any(s <= 0 for s in self.size):
            raise InvariantViolation(f"object {self.id}: size components must be > 0, got {self.size}")
        if self.feature is not None:
            norm = math.sqrt(sum(x * x for x in self.feature))
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise InvariantViolation(f"object {self.id}: feature norm {norm:.9f} is not 1")

    @property
    def bottom(self) -> float:
        return self.centroid[2] - self.size[2] / 2

    @property
    def top(self) -> float:
        return self.centroid[2] + self.size[2] / 2


@dataclass(frozen=True)
class Scene:
    scene_id: str
    objects: Tuple[ObjectInstance, ...]
    feature_dim: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'objects', tuple(self.objects))
        if len(self.objects) < 2:
            raise InvariantViolation(f"scene {self.scene_id}: at least 2 objects required")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise InvariantViolation(f"scene {self.scene_id}: duplicate object ids {dupes}")
        if self.feature_dim is not None:
            if self.feature_dim <= 0:
                raise InvariantViolation(f"scene {self.scene_id}: feature_dim must be positive")
            for o in self.objects:
                got = 0 if o.feature is None else len(o.feature)
                if got != self.feature_dim:
                    raise FeatureDimMismatch(
                        f"scene {self.scene_id}: object {o.id} has feature length {got}, expected {self.feature_dim}")

    @cached_property
    def _by_id(self) -> Dict[int, ObjectInstance]:
        return {o.id: o for o in self.objects}

    @cached_property
    def centroid_array(self) -> np.ndarray:
        arr = np.array([o.centroid for o in self.objects], dtype=float)
        arr.setflags(write=False)
        return arr

    def find(self, object_id: int) -> Optional[ObjectInstance]:
        return self._by_id.get(object_id)

    def __contains__(self, object_id: int) -> bool:
        return object_id in self._by_id

    def get(self, object_id: int) -> ObjectInstance:
        return self._by_id[object_id]

    def of_category(self, category: str) -> List[ObjectInstance]:
        return [o for o in self.objects if o.category == category]

    def categories(self) -> List[str]:
        return sorted({o.category for o in self.objects})


@dataclass(frozen=True)
class SceneGenConfig:
    seed: int
    room_extent: Vec3 = SCENE_CONFIG['room_extent']
    category_pool: Tuple[str, ...] = ()
    object_count: int = SCENE_CONFIG['object_count']
    distractor_spec: Optional[Tuple[str, int]] = None
    min_separation: float = SCENE_CONFIG['min_separation']
    size_range: Tuple[float, float] = SCENE_CONFIG['size_range']
    feature_dim: Optional[int] = None
    feature_noise: float = SCENE_CONFIG['feature_noise']
    scene_id: Optional[str] = None
    max_attempts: int = SCENE_CONFIG['max_attempts']

    def __post_init__(self):
        object.__setattr__(self, 'category_pool', tuple(c.strip().lower() for c in self.category_pool))
        if not self.category_pool:
            raise InvariantViolation("category_pool must not be empty")
        if self.object_count < 2:
            raise InvariantViolation("object_count must be >= 2")
        if self.min_separation < 0:
            raise InvariantViolation("min_separation must be >= 0")
        if len(self.room_extent) != 3 or any(e <= 0 for e in self.room_extent):
            raise InvariantViolation("room_extent must be three positive lengths")
        low, high = self.size_range
        if not 0 < low <= high:
            raise InvariantViolation("size_range must satisfy 0 < low <= high")
        if self.distractor_spec is not None and self.distractor_spec[1] < 0:
            raise InvariantViolation("distractor count must be >= 0")


def category_prototype(category: str, dim: int) -> np.ndarray:
    """Deterministic unit vector standing in for a category's mean feature."""
    rng = SplitMix64(derive_seed(0, 'prototype', category, dim))
    vec = np.array([rng.gauss() for _ in range(dim)])
    return vec / np.linalg.norm(vec)


def _vec3(value, what: str, object_id) -> Vec3:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise MalformedFile(f"object {object_id}: '{what}' must be a list of 3 numbers")
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise MalformedFile(f"object {object_id}: '{what}' must contain numbers")


def scene_from_dict(data: dict) -> Scene:
    if not isinstance(data, dict):
        raise MalformedFile("scene file must contain a JSON object")
    try:
        scene_id = data['scene_id']
        raw_objects = data['objects']
    except KeyError as e:
        raise MalformedFile(f"missing field {e}")
    if not isinstance(scene_id, str) or not isinstance(raw_objects, list):
        raise MalformedFile("'scene_id' must be a string and 'objects' a list")
    feature_dim = data.get('feature_dim')
    if feature_dim is not None and (not isinstance(feature_dim, int) or isinstance(feature_dim, bool)):
        raise MalformedFile("'feature_dim' must be an integer or null")

    objects = []
    for raw in raw_objects:
        if not isinstance(raw, dict):
            raise MalformedFile("every object must be a JSON object")
        missing = [k for k in ('id', 'category', 'centroid', 'size') if k not in raw]
        if missing:
            raise MalformedFile(f"object missing fields {missing}")
        if not isinstance(raw['id'], int) or isinstance(raw['id'], bool):
            raise MalformedFile(f"object id must be an integer, got {raw['id']!r}")
        if not isinstance(raw['category'], str):
            raise MalformedFile(f"object {raw['id']}: category must be a string")
        feature = raw.get('feature')
        if feature is not None:
            if not isinstance(feature, list):
                raise MalformedFile(f"object {raw['id']}: feature must be a list or null")
            try:
                feature = tuple(float(x) for x in feature)
            except (TypeError, ValueError):
                raise MalformedFile(f"object {raw['id']}: 'feature' must contain numbers")
        objects.append(ObjectInstance(
            id=raw['id'],
            category=' '.join(raw['category'].lower().split()),
            centroid=_vec3(raw['centroid'], 'centroid', raw['id']),
            size=_vec3(raw['size'], 'size', raw['id']),
            feature=feature,
        ))
    return Scene(scene_id=scene_id, objects=tuple(objects), feature_dim=feature_dim)


def scene_to_dict(scene: Scene) -> dict:
    return {
        'scene_id': scene.scene_id,
        'feature_dim': scene.feature_dim,
        'objects': [
            {
                'id': o.id,
                'category': o.category,
                'centroid': list(o.centroid),
                'size': list(o.size),
                'feature': None if o.feature is None else list(o.feature),
            }
            for o in scene.objects
        ],
    }


def load_scene(path: str) -> Scene:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise MalformedFile(f"{path}: invalid JSON ({e})")
    return scene_from_dict(data)


def dump_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), indent=2, ensure_ascii=False) + "\n"


def save_scene(scene: Scene, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(dump_scene(scene))
    return path


def scene_extents(scene: Scene) -> Vec3:
    arr = scene.centroid_array
    span = arr.max(axis=0) - arr.min(axis=0)
    return tuple(float(s) for s in span)


def _draw_categories(config: SceneGenConfig, rng: SplitMix64) -> List[str]:
    # cycle a shuffled pool so categories stay unique until the pool runs out
    order = rng.shuffle(config.category_pool)
    drawn = [order[i % len(order)] for i in range(config.object_count)]
    if config.distractor_spec is not None:
        category, count = config.distractor_spec
        drawn.extend([category.strip().lower()] * count)
    return rng.shuffle(drawn)


def generate_scene(config: SceneGenConfig) -> Scene:
    """
    Procedurally place objects in an axis-aligned room.

    Pure function of config: the same seed yields the same scene, byte for
    byte once emitted. Centroids are rejection-sampled inside the room until
    they clear min_separation from every earlier placement.
    """
    rng = SplitMix64(config.seed)
    categories = _draw_categories(config, rng)
    low, high = config.size_range

    placed = np.empty((0, 3))
    objects = []
    for object_id, category in enumerate(categories):
        size = tuple(round(rng.uniform(low, high), 3) for _ in range(3))
        for _ in range(config.max_attempts):
            centroid = tuple(round(rng.uniform(0.0, extent), 4) for extent in config.room_extent)
            if len(placed) == 0 or np.linalg.norm(placed - centroid, axis=1).min() >= config.min_separation:
                break
        else:
            raise PlacementExhausted(
                f"could not place object {object_id} ({category}) at separation "
                f"{config.min_separation} m after {config.max_attempts} attempts")
        placed = np.vstack([placed, centroid])

        feature = None
        if config.feature_dim is not None:
            noisy = category_prototype(category, config.feature_dim) + config.feature_noise * np.array(
                [rng.gauss() for _ in range(config.feature_dim)])
            feature = tuple(float(x) for x in noisy / np.linalg.norm(noisy))
        objects.append(ObjectInstance(object_id, category, centroid, size, feature))

    scene_id = config.scene_id or f"gen_{config.seed:016x}"
    return Scene(scene_id=scene_id, objects=tuple(objects), feature_dim=config.feature_dim)


@dataclass
class SceneStore:
    """Scenes addressable by scene_id."""

    scenes: Dict[str, Scene] = field(default_factory=dict)

    @classmethod
    def from_scenes(cls, scenes: Sequence[Scene]) -> 'SceneStore':
        return cls({s.scene_id: s for s in scenes})

    @classmethod
    def from_dir(cls, path: str) -> 'SceneStore':
        return cls.from_scenes(load_scene_dir(path))

    def get(self, scene_id: str) -> Scene:
        try:
            return self.scenes[scene_id]
        except KeyError:
            raise MissingScene(scene_id)

    def __contains__(self, scene_id: str) -> bool:
        return scene_id in self.scenes

    def __iter__(self) -> Iterator[Scene]:
        return iter(self.scenes.values())

    def __len__(self) -> int:
        return len(self.scenes)

    def categories(self) -> List[str]:
        return sorted({c for s in self.scenes.values() for c in s.categories()})


def load_scene_dir(path: str) -> List[Scene]:
    if not os.path.isdir(path):
        raise FileNotFoundError(f"Scene directory not found: {path}")
    names = sorted(n for n in os.listdir(path) if n.endswith('.json'))
    return [load_scene(os.path.join(path, n)) for n in names]
