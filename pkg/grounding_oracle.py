"""
grounding_oracle.py - Rule-based 3D visual grounding

Parses an instruction against the template grammar, resolves it
geometrically in a scene, and explains failures with the four error
modes observed for language models on this task (hallucination,
ambiguous anchor, wrong anchor, wrong description).
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import TYPE_CHECKING, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import pyparsing as pp

from config import CATEGORY_LEXICON, RelationThresholds
from distractor_id import identify_distractors, oracle_classifier
from errors import ParseError, UnknownCategory, UnknownTarget
from scene_model import ObjectInstance, Scene, SceneStore
from spatial_relations import RelationKind, relation_holds

if TYPE_CHECKING:
    from instruction_gen import Instruction

RELATION_PHRASES = {
    'closest to': RelationKind.CLOSEST,
    'farthest from': RelationKind.FARTHEST,
    'near': RelationKind.NEAR,
    'close to': RelationKind.NEAR,
    'next to': RelationKind.NEAR,
    'far from': RelationKind.FAR,
    'above': RelationKind.ABOVE,
    'below': RelationKind.BELOW,
    'on': RelationKind.SUPPORTED_BY,
    'between': RelationKind.BETWEEN,
}

STRATA = ('1', '2', '4+')


class Verdict(str, Enum):
    UNIQUE_TARGET = 'unique_target'
    UNIQUE_WRONG = 'unique_wrong'
    AMBIGUOUS = 'ambiguous'
    EMPTY = 'empty'


class ErrorMode(str, Enum):
    HALLUCINATION = 'hallucination'
    AMBIGUOUS_ANCHOR = 'ambiguous_anchor'
    WRONG_ANCHOR = 'wrong_anchor'
    WRONG_DESCRIPTION = 'wrong_description'


@dataclass(frozen=True)
class ParsedInstruction:
    target_category: str
    relation_kind: Optional[RelationKind] = None
    anchor_categories: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'anchor_categories', tuple(self.anchor_categories))
        if self.relation_kind is None and self.anchor_categories:
            raise ParseError("anchors given without a relation")
        if self.relation_kind is not None:
            object.__setattr__(self, 'relation_kind', RelationKind(self.relation_kind))


@dataclass(frozen=True)
class GroundingResult:
    matched_ids: FrozenSet[int]
    verdict: Verdict
    error_mode: Optional[ErrorMode] = None
    parse_error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            'matched_ids': sorted(self.matched_ids),
            'verdict': self.verdict.value,
            'error_mode': None if self.error_mode is None else self.error_mode.value,
            'parse_error': self.parse_error,
        }


def normalize_text(text: str) -> str:
    return ' '.join(text.lower().strip().rstrip('.,;!?').split())


def _raise_unknown(s: str, loc: int, toks):
    raise UnknownCategory(' '.join(toks), len(s[:loc].encode('utf-8')))


@lru_cache(maxsize=64)
def _grammar(lexicon: Tuple[str, ...]) -> pp.ParserElement:
    the = pp.Keyword('the').suppress()
    and_ = pp.Keyword('and').suppress()
    relation = pp.one_of(list(RELATION_PHRASES), as_keyword=True)
    known = pp.one_of(list(lexicon), as_keyword=True)
    reserved = relation | pp.Keyword('the') | pp.Keyword('and')
    # anything else sitting in a category slot is a category we have never heard of
    unknown = pp.OneOrMore(~reserved + pp.Word(pp.alphanums + "-'")).set_parse_action(_raise_unknown)

    def category(name: str) -> pp.ParserElement:
        return (known | unknown)(name)

    anchors = the + category('anchor1') + pp.Optional(and_ + the + category('anchor2'))
    return the + category('target') + pp.Optional(relation('relation') + anchors) + pp.StringEnd()


def _words(value) -> str:
    # slots holding a OneOrMore alternative come back list-valued
    return value if isinstance(value, str) else ' '.join(value)


def parse_instruction(text: str, lexicon: Iterable[str]) -> ParsedInstruction:
    """
    Parse `the CAT [RELPHRASE the CAT [and the CAT]]`.

    Byte offsets in raised errors refer to the normalized text (lowercased,
    whitespace collapsed, trailing punctuation removed).
    """
    vocabulary = tuple(sorted({normalize_text(c) for c in lexicon if c.strip()}))
    if not vocabulary:
        raise ValueError("lexicon must not be empty")
    normalized = normalize_text(text)
    try:
        result = _grammar(vocabulary).parse_string(normalized, parse_all=True)
    except pp.ParseBaseException as e:
        raise ParseError(f"cannot parse '{normalized}': {e.msg}", len(normalized[:e.loc].encode('utf-8')))

    if 'relation' not in result:
        return ParsedInstruction(_words(result['target']))
    phrase = _words(result['relation'])
    kind = RELATION_PHRASES[phrase]
    anchors = tuple(_words(result[k]) for k in ('anchor1', 'anchor2') if k in result)
    if len(anchors) != kind.arity:
        raise ParseError(f"'{phrase}' needs {kind.arity} anchor(s), got {len(anchors)}",
                         len(normalized.encode('utf-8')))
    return ParsedInstruction(_words(result['target']), kind, anchors)


def _assignments(parsed: ParsedInstruction, scene: Scene) -> List[Tuple[ObjectInstance, ...]]:
    pools = [scene.of_category(c) for c in parsed.anchor_categories]
    return [combo for combo in itertools.product(*pools) if len({a.id for a in combo}) == len(combo)]


def _matches_per_assignment(parsed: ParsedInstruction, scene: Scene,
                            thresholds: RelationThresholds) -> List[FrozenSet[int]]:
    candidates = scene.of_category(parsed.target_category)
    return [
        frozenset(c.id for c in candidates
                  if relation_holds(parsed.relation_kind, c, assignment, candidates, thresholds))
        for assignment in _assignments(parsed, scene)
    ]


def ground(parsed: ParsedInstruction, scene: Scene, config: Optional[RelationThresholds] = None) -> FrozenSet[int]:
    thresholds = config or RelationThresholds()
    if parsed.relation_kind is None:
        return frozenset(o.id for o in scene.of_category(parsed.target_category))
    # existential over anchor instances
    return frozenset().union(*_matches_per_assignment(parsed, scene, thresholds))


def _verdict(matched: FrozenSet[int], expected_target: int) -> Verdict:
    if matched == {expected_target}:
        return Verdict.UNIQUE_TARGET
    if len(matched) == 1:
        return Verdict.UNIQUE_WRONG
    return Verdict.AMBIGUOUS if matched else Verdict.EMPTY


def classify_error(parsed: ParsedInstruction, result_ids: Iterable[int], scene: Scene, expected_target: int,
                   config: Optional[RelationThresholds] = None) -> GroundingResult:
    if expected_target not in scene:
        raise UnknownTarget(f"expected target {expected_target} not in scene {scene.scene_id}")
    thresholds = config or RelationThresholds()
    matched = frozenset(result_ids)
    verdict = _verdict(matched, expected_target)
    if verdict is Verdict.UNIQUE_TARGET:
        return GroundingResult(matched, verdict)

    anchor_pools = [scene.of_category(c) for c in parsed.anchor_categories]
    if not scene.of_category(parsed.target_category) or any(not pool for pool in anchor_pools):
        return GroundingResult(matched, verdict, ErrorMode.HALLUCINATION)

    if parsed.relation_kind is not None and any(len(pool) >= 2 for pool in anchor_pools):
        if len(set(_matches_per_assignment(parsed, scene, thresholds))) > 1:
            return GroundingResult(matched, verdict, ErrorMode.AMBIGUOUS_ANCHOR)

    # anchors resolve (uniquely, or with one shared outcome): the relation itself decides
    if expected_target not in matched:
        return GroundingResult(matched, verdict, ErrorMode.WRONG_DESCRIPTION)
    return GroundingResult(matched, verdict, ErrorMode.WRONG_ANCHOR)


def ground_text(text: str, scene: Scene, expected_target: int, lexicon: Optional[Iterable[str]] = None,
                config: Optional[RelationThresholds] = None) -> GroundingResult:
    """Parse, ground and classify one instruction; parse failures become grounding failures."""
    vocabulary = set(CATEGORY_LEXICON if lexicon is None else lexicon) | set(scene.categories())
    verdict = Verdict.EMPTY
    try:
        parsed = parse_instruction(text, vocabulary)
    except UnknownCategory as e:
        return GroundingResult(frozenset(), verdict, ErrorMode.HALLUCINATION, str(e))
    except ParseError as e:
        return GroundingResult(frozenset(), verdict, ErrorMode.WRONG_DESCRIPTION, str(e))
    return classify_error(parsed, ground(parsed, scene, config), scene, expected_target, config)


def stratum(num_distractors: int) -> Optional[str]:
    if num_distractors >= 4:
        return '4+'
    if num_distractors in (1, 2):
        return str(num_distractors)
    return None


@dataclass
class EvaluationReport:
    overall_acc: float
    by_distractors: Dict[str, Optional[float]]
    errors: Dict[str, int]
    counts: Dict[str, int] = field(default_factory=dict)
    verdicts: Dict[str, int] = field(default_factory=dict)
    parse_failures: int = 0
    total: int = 0

    def to_dict(self) -> dict:
        return {
            'overall_acc': self.overall_acc,
            'by_distractors': dict(self.by_distractors),
            'errors': dict(self.errors),
            'counts': dict(self.counts),
            'verdicts': dict(self.verdicts),
            'drop_vs_1': degradation_study(self),
            'parse_failures': self.parse_failures,
            'total': self.total,
        }


def degradation_study(report: EvaluationReport) -> Dict[str, Optional[float]]:
    """Relative accuracy drop of each larger-|D| stratum against the |D|=1 stratum."""
    base = report.by_distractors.get('1')
    drops = {}
    for key in STRATA[1:]:
        acc = report.by_distractors.get(key)
        drops[key] = None if not base or acc is None else (base - acc) / base
    return drops


def _instruction_distractors(instruction, scene: Scene) -> int:
    known = getattr(instruction, 'num_distractors', None)
    if known is not None:
        return known
    return len(identify_distractors(scene, instruction.target_id, oracle_classifier()))


def evaluate_corpus(instructions: Sequence['Instruction'], scenes: SceneStore,
                    config: Optional[RelationThresholds] = None, lexicon: Optional[Iterable[str]] = None,
                    workers: int = 1) -> EvaluationReport:
    """
    Grounding accuracy over a corpus, overall and per distractor stratum.

    Work fans out over a thread pool; results are reduced in instruction
    order so the report does not depend on the worker count.
    """
    vocabulary = sorted(set(CATEGORY_LEXICON if lexicon is None else lexicon) | set(scenes.categories()))
    # resolve every scene up front so a missing one fails before any work
    resolved = [scenes.get(inst.scene_id) for inst in instructions]

    def evaluate_one(pair) -> Tuple[GroundingResult, int]:
        inst, scene = pair
        result = ground_text(inst.text, scene, inst.target_id, vocabulary, config)
        return result, _instruction_distractors(inst, scene)

    pairs = list(zip(instructions, resolved))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(evaluate_one, pairs))
    else:
        outcomes = [evaluate_one(p) for p in pairs]

    hits = {key: 0 for key in STRATA}
    counts = {key: 0 for key in STRATA}
    errors = {mode.value: 0 for mode in ErrorMode}
    verdicts = {v.value: 0 for v in Verdict}
    correct = parse_failures = 0
    for result, num_distractors in outcomes:
        ok = result.verdict is Verdict.UNIQUE_TARGET
        correct += ok
        verdicts[result.verdict.value] += 1
        if result.error_mode is not None:
            errors[result.error_mode.value] += 1
        if result.parse_error is not None:
            parse_failures += 1
        key = stratum(num_distractors)
        if key is not None:
            counts[key] += 1
            hits[key] += ok

    total = len(outcomes)
    return EvaluationReport(
        overall_acc=correct / total if total else 0.0,
        by_distractors={k: (hits[k] / counts[k] if counts[k] else None) for k in STRATA},
        errors=errors,
        counts=counts,
        verdicts=verdicts,
        parse_failures=parse_failures,
        total=total,
    )
