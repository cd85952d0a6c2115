"""
distractor_id.py - Explicit distractor identification

An object is a distractor for a target when the classifier's top category
for it equals the target's ground-truth category. Classifiers are
pluggable; two are provided: ground-truth labels and nearest prototype
over per-object feature vectors.
"""

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Mapping, Optional

import numpy as np

from errors import FeatureDimMismatch, InvariantViolation, MalformedFile, MissingFeature, UnknownTarget
from scene_model import ObjectInstance, Scene, category_prototype

NORM_TOLERANCE = 1e-6


class Classifier(ABC):
    """Scores an object against every category in its label set."""

    @abstractmethod
    def score(self, obj: ObjectInstance) -> Dict[str, float]:
        ...

    def predict(self, obj: ObjectInstance) -> str:
        scores = self.score(obj)
        # highest score wins, ties go to the lexicographically smallest label
        return min(scores, key=lambda c: (-scores[c], c))


class OracleClassifier(Classifier):
    def __init__(self, labels: Optional[Iterable[str]] = None):
        self.labels = frozenset(labels or ())

    def score(self, obj: ObjectInstance) -> Dict[str, float]:
        scores = {label: 0.0 for label in self.labels}
        scores[obj.category] = 1.0
        return scores


class CentroidFeatureClassifier(Classifier):
    def __init__(self, prototypes: Mapping[str, Iterable[float]]):
        if not prototypes:
            raise InvariantViolation("at least one prototype is required")
        self.labels = sorted(prototypes)
        matrix = np.array([list(prototypes[c]) for c in self.labels], dtype=float)
        if matrix.ndim != 2:
            raise FeatureDimMismatch("prototype vectors must share one dimensionality")
        norms = np.linalg.norm(matrix, axis=1)
        bad = [c for c, n in zip(self.labels, norms) if abs(n - 1.0) > NORM_TOLERANCE]
        if bad:
            raise InvariantViolation(f"prototypes not unit-normalized: {bad}")
        self.dim = matrix.shape[1]
        self._matrix = matrix

    def score(self, obj: ObjectInstance) -> Dict[str, float]:
        if obj.feature is None:
            raise MissingFeature(f"object {obj.id} ({obj.category}) has no feature vector")
        if len(obj.feature) != self.dim:
            raise FeatureDimMismatch(f"object {obj.id}: feature length {len(obj.feature)}, prototypes use {self.dim}")
        dots = self._matrix @ np.asarray(obj.feature, dtype=float)
        return {c: float(d) for c, d in zip(self.labels, dots)}


@dataclass(frozen=True)
class DistractorSet:
    target_id: int
    members: FrozenSet[int]

    def __len__(self) -> int:
        return len(self.members)


def oracle_classifier() -> Classifier:
    return OracleClassifier()


def centroid_feature_classifier(prototypes: Mapping[str, Iterable[float]]) -> Classifier:
    return CentroidFeatureClassifier(prototypes)


def category_prototypes(categories: Iterable[str], dim: int) -> Dict[str, np.ndarray]:
    """Prototypes matching the ones the scene generator draws features around."""
    return {c: category_prototype(c, dim) for c in sorted(set(categories))}


def load_prototypes(path: str) -> Dict[str, list]:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise MalformedFile(f"{path}: invalid JSON ({e})")
    if not isinstance(data, dict) or 'dim' not in data or 'prototypes' not in data:
        raise MalformedFile(f"{path}: expected {{'dim': int, 'prototypes': {{...}}}}")
    dim = data['dim']
    prototypes = data['prototypes']
    for category, vec in prototypes.items():
        if len(vec) != dim:
            raise FeatureDimMismatch(f"prototype '{category}' has length {len(vec)}, expected {dim}")
    return prototypes


def identify_distractors(scene: Scene, target_id: int, classifier: Classifier) -> DistractorSet:
    target = scene.find(target_id)
    if target is None:
        raise UnknownTarget(f"target {target_id} not in scene {scene.scene_id}")
    members = frozenset(
        o.id for o in scene.objects
        if o.id != target_id and classifier.predict(o) == target.category
    )
    return DistractorSet(target_id=target_id, members=members)
