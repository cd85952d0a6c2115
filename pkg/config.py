import os
from typing import Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator

load_dotenv()

SCENE_CONFIG = {
    'room_extent': (6.0, 6.0, 3.0),    # meters, origin at the room corner
    'object_count': 8,
    'min_separation': 0.5,
    'size_range': (0.3, 1.2),
    'max_attempts': 10000,             # rejection-sampling cap per object
    'feature_noise': 0.1,
}

RELATION_CONFIG = {
    'near': 1.0,
    'far': 2.5,
    'support_tolerance': 0.1,
    'between_distance': 0.5,
    'between_low': 0.1,
    'between_high': 0.9,
}

ENCODING_CONFIG = {
    'max_anchors': 5,
    'ambiguous_rate': 0.3,
    'extent_epsilon': 1e-9,
}

LOSS_CONFIG = {
    'alpha': 1.0,                      # placeholder weights
    'beta': 1.0,
    'fd_step': 1e-5,
    'fd_tolerance': 1e-5,
    'selftest_seeds': 100,
}

RUN_CONFIG = {
    'seed': int(os.getenv('COLDKIT_SEED', '0')),
    'workers': int(os.getenv('COLDKIT_WORKERS', '4')),
}

REPORT_CONFIG = {
    'title': 'Spatial Instruction Evaluation',
    'font_family': 'Helvetica',
    'body_font_size': 11,
}

PATHS = {
    'output_dir': 'output',
    'instructions_file': 'instructions.jsonl',
    'tokens_file': 'token_sequences.jsonl',
    'grounding_file': 'grounding.jsonl',
    'report_file': 'report.json',
}

CATEGORY_LEXICON = [
    'armchair', 'backpack', 'bathtub', 'bed', 'bench', 'book', 'bookshelf', 'box',
    'cabinet', 'chair', 'clock', 'coffee table', 'computer tower', 'couch', 'counter',
    'cup', 'curtain', 'desk', 'door', 'dresser', 'file cabinet', 'kitchen cabinet',
    'lamp', 'laptop', 'microwave', 'mirror', 'monitor', 'nightstand', 'office chair',
    'piano', 'pillow', 'plant', 'printer', 'refrigerator', 'shelf', 'sink', 'sofa',
    'table', 'toilet', 'trash can', 'tv stand', 'window',
]

SEED_MAX = 2 ** 64 - 1


class RelationThresholds(BaseModel):
    """Geometric thresholds behind the spatial relation vocabulary (meters)."""

    model_config = ConfigDict(frozen=True)

    near: PositiveFloat = RELATION_CONFIG['near']
    far: PositiveFloat = RELATION_CONFIG['far']
    support_tolerance: PositiveFloat = RELATION_CONFIG['support_tolerance']
    between_distance: PositiveFloat = RELATION_CONFIG['between_distance']
    between_low: PositiveFloat = RELATION_CONFIG['between_low']
    between_high: PositiveFloat = RELATION_CONFIG['between_high']

    @model_validator(mode='after')
    def _check_between_window(self):
        if not self.between_low < self.between_high < 1.0 + 1e-12:
            raise ValueError('between_low < between_high <= 1 required')
        return self


class SceneGenOptions(BaseModel):
    count: int = Field(10, ge=1)
    object_count: int = Field(SCENE_CONFIG['object_count'], ge=2)
    room_extent: Tuple[PositiveFloat, PositiveFloat, PositiveFloat] = SCENE_CONFIG['room_extent']
    categories: list[str] = Field(default_factory=lambda: list(CATEGORY_LEXICON))
    distractors: Optional[Tuple[str, int]] = None
    min_separation: float = Field(SCENE_CONFIG['min_separation'], ge=0.0)
    feature_dim: Optional[int] = Field(None, ge=1)


class RunConfig(BaseModel):
    """Everything a command needs; echoed verbatim into every report."""

    seed: int = Field(RUN_CONFIG['seed'], ge=0, le=SEED_MAX)
    scenes_path: Optional[str] = None
    gen: SceneGenOptions = Field(default_factory=SceneGenOptions)
    classifier: str = Field('oracle', pattern='^(oracle|features)$')
    prototypes_path: Optional[str] = None
    max_anchors: int = Field(ENCODING_CONFIG['max_anchors'], ge=1)
    ambiguous_rate: float = Field(ENCODING_CONFIG['ambiguous_rate'], ge=0.0, le=1.0)
    shuffle_tokens: bool = True
    thresholds: RelationThresholds = Field(default_factory=RelationThresholds)
    all_targets: bool = False
    ablation: str = Field('none', pattern='^(none|near-only|blind)$')
    output_dir: str = PATHS['output_dir']
    workers: int = Field(RUN_CONFIG['workers'], ge=1)
