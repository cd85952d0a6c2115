import argparse
import json
import os
import sys
import time
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError
from tqdm.contrib.concurrent import thread_map

from align_losses import gradient_check_suite
from config import CATEGORY_LEXICON, LOSS_CONFIG, PATHS, RunConfig
from distractor_id import (Classifier, category_prototypes, centroid_feature_classifier, identify_distractors,
                           load_prototypes, oracle_classifier)
from errors import ColdkitError, MalformedFile, NoValidAnchor
from eval_metrics import evaluate_metrics, perturb_instruction, perturbation_study
from grounding_oracle import evaluate_corpus, ground_text
from instruction_gen import (Instruction, generate_blind_instruction, generate_instruction,
                             generate_near_only_instruction)
from prng import SplitMix64, derive_seed
from report_generator import ReportGenerator
from scene_model import Scene, SceneGenConfig, SceneStore, generate_scene, save_scene
from spatial_encoding import (build_token_sequence, encoding_subset, inject_ambiguous_anchor,
                              relative_position_map, select_anchor_candidates, token_sequence_record)


def write_jsonl(path: str, records: Sequence[dict]) -> str:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def read_jsonl(path: str) -> List[dict]:
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise MalformedFile(f"{path}:{line_no}: invalid JSON ({e})")
    return records


def write_json(path: str, data: dict) -> str:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(json.dumps(data, indent=2, ensure_ascii=False) + "\n")
    return path


def load_instructions(path: str) -> List[Instruction]:
    try:
        return [Instruction.from_dict(r) for r in read_jsonl(path)]
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ColdkitError):
            raise
        raise MalformedFile(f"{path}: bad instruction record ({e})")


def load_references(path: str, instructions: Sequence[Instruction]) -> List[List[str]]:
    """References keyed by (scene_id, target_id); each record holds "text" or "references"."""
    by_key: Dict[Tuple[str, int], List[str]] = {}
    for record in read_jsonl(path):
        texts = record.get('references') or [record['text']]
        by_key.setdefault((record['scene_id'], int(record['target_id'])), []).extend(texts)
    missing = [(i.scene_id, i.target_id) for i in instructions if (i.scene_id, i.target_id) not in by_key]
    if missing:
        raise MalformedFile(f"{path}: no reference for {missing[:3]}{'...' if len(missing) > 3 else ''}")
    return [by_key[(i.scene_id, i.target_id)] for i in instructions]


class ColdkitRunner:
    def __init__(self, config: RunConfig, quiet: bool = False):
        self.config = config
        self.quiet = quiet
        os.makedirs(config.output_dir, exist_ok=True)

    def _log(self, message: str = ""):
        if not self.quiet:
            print(message)

    def _banner(self, title: str):
        self._log(f"\n{'=' * 60}")
        self._log(title)
        self._log(f"Started at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        self._log(f"{'=' * 60}\n")

    def _output(self, name: str) -> str:
        return os.path.join(self.config.output_dir, name)

    @property
    def scenes_dir(self) -> str:
        return self.config.scenes_path or os.path.join(self.config.output_dir, 'scenes')

    def _store(self) -> SceneStore:
        store = SceneStore.from_dir(self.scenes_dir)
        self._log(f"✓ Loaded {len(store)} scenes from {self.scenes_dir}")
        return store

    def cmd_gen_scenes(self) -> List[str]:
        gen = self.config.gen
        self._banner(f"GENERATING {gen.count} SCENES (seed {self.config.seed})")
        distractor_spec = None
        if gen.distractors is not None:
            category, count = gen.distractors
            # N distractors means N + 1 objects of that category (the target included)
            distractor_spec = (category, count + 1)

        def build(index: int) -> str:
            scene = generate_scene(SceneGenConfig(
                seed=derive_seed(self.config.seed, 'scene', index),
                room_extent=tuple(gen.room_extent),
                category_pool=tuple(gen.categories),
                object_count=gen.object_count,
                distractor_spec=distractor_spec,
                min_separation=gen.min_separation,
                feature_dim=gen.feature_dim,
                scene_id=f"scene_{index:04d}",
            ))
            return save_scene(scene, os.path.join(self.scenes_dir, f"{scene.scene_id}.json"))

        paths = thread_map(build, range(gen.count), max_workers=self.config.workers,
                           desc="Generating scenes", disable=self.quiet)
        self._log(f"✓ Wrote {len(paths)} scene files to {self.scenes_dir}")
        return paths

    def _classifier(self, store: SceneStore) -> Classifier:
        if self.config.classifier == 'oracle':
            return oracle_classifier()
        if self.config.prototypes_path:
            return centroid_feature_classifier(load_prototypes(self.config.prototypes_path))
        dims = {s.feature_dim for s in store}
        if len(dims) != 1 or None in dims:
            raise MalformedFile("feature classifier needs scenes sharing one feature_dim, or --prototypes")
        categories = set(CATEGORY_LEXICON) | set(store.categories())
        return centroid_feature_classifier(category_prototypes(categories, dims.pop()))

    def _process_scene(self, scene: Scene, classifier: Classifier) -> Tuple[List[dict], List[dict]]:
        cfg = self.config
        instructions, sequences = [], []
        for target in scene.objects:
            distractors = identify_distractors(scene, target.id, classifier)
            if not distractors.members and not cfg.all_targets:
                continue
            try:
                anchors = select_anchor_candidates(scene, target.id, distractors, cfg.max_anchors)
            except NoValidAnchor:
                anchors = []

            target_seed = derive_seed(cfg.seed, scene.scene_id, target.id)
            if cfg.ablation == 'near-only':
                inst = generate_near_only_instruction(scene, target.id, distractors, anchors, cfg.thresholds)
            elif cfg.ablation == 'blind':
                inst = generate_blind_instruction(scene, target.id, distractors, cfg.thresholds)
            else:
                inst = generate_instruction(scene, target.id, distractors, anchors, target_seed, cfg.thresholds)
            instructions.append(inst.to_dict())

            encoded = anchors
            if anchors and SplitMix64(derive_seed(target_seed, 'inject')).random() < cfg.ambiguous_rate:
                encoded = inject_ambiguous_anchor(anchors, scene, target.id, derive_seed(target_seed, 'ambiguous'))
            rpm = relative_position_map(scene, encoding_subset(target.id, distractors, encoded))
            ts = build_token_sequence(scene, target.id, encoded, rpm, derive_seed(target_seed, 'shuffle'),
                                      cfg.shuffle_tokens)
            sequences.append(token_sequence_record(scene.scene_id, ts))
        return instructions, sequences

    def cmd_generate(self) -> Dict[str, str]:
        self._banner("GENERATING SPATIAL INSTRUCTIONS")
        self._log("STEP 1: Scene Loading")
        self._log("-" * 30)
        store = self._store()
        classifier = self._classifier(store)

        self._log("\nSTEP 2: Distractors, Encoding and Instruction Search")
        self._log("-" * 30)
        scenes = sorted(store, key=lambda s: s.scene_id)
        results = thread_map(lambda s: self._process_scene(s, classifier), scenes,
                             max_workers=self.config.workers, desc="Processing scenes", disable=self.quiet)

        instructions = [r for inst, _ in results for r in inst]
        sequences = [r for _, seqs in results for r in seqs]
        exclusive = sum(1 for r in instructions if r['status'] == 'exclusive')
        self._log(f"✓ {len(instructions)} instructions, {exclusive} exclusive")

        files = {
            'instructions': write_jsonl(self._output(PATHS['instructions_file']), instructions),
            'token_sequences': write_jsonl(self._output(PATHS['tokens_file']), sequences),
        }
        for kind, path in files.items():
            self._log(f"✓ {kind.replace('_', ' ').title()}: {path}")
        return files

    def cmd_ground(self, instructions_path: Optional[str] = None, text: Optional[str] = None,
                   scene_id: Optional[str] = None, target_id: Optional[int] = None) -> List[dict]:
        store = self._store()
        if instructions_path:
            queries = [(i.scene_id, i.target_id, i.text) for i in load_instructions(instructions_path)]
        elif text is not None and scene_id is not None and target_id is not None:
            queries = [(scene_id, target_id, text)]
        else:
            raise MalformedFile("ground needs --instructions, or --text with --scene-id and --target")

        lexicon = sorted(set(CATEGORY_LEXICON) | set(store.categories()))
        records = []
        for sid, tid, query in queries:
            result = ground_text(query, store.get(sid), tid, lexicon, self.config.thresholds)
            records.append({'scene_id': sid, 'target_id': tid, 'text': query, **result.to_dict()})
        write_jsonl(self._output(PATHS['grounding_file']), records)
        if len(records) == 1:
            r = records[0]
            self._log(f"✓ {r['text']!r} → {r['matched_ids']} ({r['verdict']}, {r['error_mode']})")
        self._log(f"✓ Grounded {len(records)} instructions → {self._output(PATHS['grounding_file'])}")
        return records

    def cmd_evaluate(self, instructions_path: str, references_path: Optional[str] = None,
                     perturb: Optional[str] = None, pdf: bool = False) -> dict:
        start_time = time.time()
        self._banner("EVALUATING INSTRUCTIONS")
        store = self._store()
        instructions = load_instructions(instructions_path)

        self._log("\nSTEP 1: Grounding Evaluation")
        self._log("-" * 30)
        grounding = evaluate_corpus(instructions, store, self.config.thresholds, workers=self.config.workers)
        report = grounding.to_dict()
        self._log(f"✓ Grounding accuracy: {grounding.overall_acc:.4f} over {grounding.total} instructions")

        references = None
        if references_path:
            self._log("\nSTEP 2: n-gram Metrics")
            self._log("-" * 30)
            references = load_references(references_path, instructions)
            metrics = evaluate_metrics([i.text for i in instructions], references)
            report['metrics'] = metrics.to_dict()
            self._log(f"✓ BLEU-4 {metrics.bleu[3]:.4f}, ROUGE-L {metrics.rouge_l:.4f}, CIDEr {metrics.cider:.4f}")

        if perturb:
            self._log(f"\nSTEP 3: Perturbation Study ({perturb})")
            self._log("-" * 30)
            study = perturbation_study(instructions, store, perturb, references, self.config.thresholds,
                                       workers=self.config.workers)
            report['perturbation'] = study.to_dict()
            self._log(f"✓ Grounding accuracy {study.grounding_acc_original:.4f} → {study.grounding_acc_perturbed:.4f}")

        report['run_config'] = self.config.model_dump(mode='json')
        path = write_json(self._output(PATHS['report_file']), report)
        generated = ReportGenerator(quiet=self.quiet).generate_all_documents(report, self.config.output_dir, pdf)

        self._log(f"\n{'=' * 60}")
        self._log("EVALUATION COMPLETE!")
        self._log(f"Total time: {time.time() - start_time:.1f} seconds")
        self._log(f"Report: {path}")
        for doc_type, doc_path in generated.items():
            self._log(f"   • {doc_type.title()}: {doc_path}")
        self._log(f"{'=' * 60}\n")
        return report

    def cmd_perturb(self, instructions_path: str, mode: str) -> str:
        instructions = load_instructions(instructions_path)
        perturbed = [perturb_instruction(i, mode).to_dict() for i in instructions]
        path = write_jsonl(self._output(f"perturbed_{mode}.jsonl"), perturbed)
        self._log(f"✓ Perturbed {len(perturbed)} instructions ({mode}) → {path}")
        return path

    def cmd_losses_selftest(self, seeds: int = LOSS_CONFIG['selftest_seeds']) -> bool:
        self._log(f"Running gradient checks over {seeds} seeds...")
        checks = gradient_check_suite(seeds)
        for check in checks:
            mark = "✓" if check.passed else "❌"
            self._log(f"{mark} {check.name}: worst {check.worst:.3e}")
        return all(c.passed for c in checks)


def _vec3(text: str) -> Tuple[float, float, float]:
    parts = [float(p) for p in text.split(',')]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return tuple(parts)


def _distractors(text: str) -> Tuple[str, int]:
    category, _, count = text.rpartition(':')
    if not category or not count.isdigit():
        raise argparse.ArgumentTypeError(f"expected category:count, got {text!r}")
    return category.strip().lower(), int(count)


def _categories(text: str) -> List[str]:
    return [c.strip().lower() for c in text.split(',') if c.strip()]


# (argparse dest, path into RunConfig)
OVERRIDES = [
    ('seed', ('seed',)),
    ('scenes', ('scenes_path',)),
    ('output_dir', ('output_dir',)),
    ('workers', ('workers',)),
    ('classifier', ('classifier',)),
    ('prototypes', ('prototypes_path',)),
    ('max_anchors', ('max_anchors',)),
    ('ambiguous_rate', ('ambiguous_rate',)),
    ('shuffle_tokens', ('shuffle_tokens',)),
    ('all_targets', ('all_targets',)),
    ('ablation', ('ablation',)),
    ('count', ('gen', 'count')),
    ('objects', ('gen', 'object_count')),
    ('room', ('gen', 'room_extent')),
    ('categories', ('gen', 'categories')),
    ('distractors', ('gen', 'distractors')),
    ('min_separation', ('gen', 'min_separation')),
    ('feature_dim', ('gen', 'feature_dim')),
    ('near', ('thresholds', 'near')),
    ('far', ('thresholds', 'far')),
    ('support_tolerance', ('thresholds', 'support_tolerance')),
    ('between_distance', ('thresholds', 'between_distance')),
]


def _merge(base: dict, update: dict) -> dict:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the JSON config file, then explicit flags."""
    data = RunConfig().model_dump()
    if getattr(args, 'config', None):
        with open(args.config, 'r', encoding='utf-8') as f:
            try:
                _merge(data, json.load(f))
            except json.JSONDecodeError as e:
                raise MalformedFile(f"{args.config}: invalid JSON ({e})")
    for dest, path in OVERRIDES:
        value = getattr(args, dest, None)
        if value is None:
            continue
        node = data
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = value
    return RunConfig.model_validate(data)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="JSON config file (flags override it)")
    common.add_argument('--seed', type=int, help="run seed (falls back to COLDKIT_SEED)")
    common.add_argument('--scenes', help="scene directory")
    common.add_argument('--output-dir', dest='output_dir')
    common.add_argument('--workers', type=int)
    common.add_argument('--quiet', action='store_true')

    thresholds = argparse.ArgumentParser(add_help=False)
    thresholds.add_argument('--near', type=float)
    thresholds.add_argument('--far', type=float)
    thresholds.add_argument('--support-tolerance', dest='support_tolerance', type=float)
    thresholds.add_argument('--between-distance', dest='between_distance', type=float)

    parser = argparse.ArgumentParser(prog='coldkit', description="Target-exclusive spatial instruction toolkit")
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen-scenes', parents=[common], help="generate seeded scene files")
    gen.add_argument('--count', type=int)
    gen.add_argument('--objects', type=int, help="objects drawn from the category pool")
    gen.add_argument('--room', type=_vec3, help="room extent x,y,z in meters")
    gen.add_argument('--categories', type=_categories, help="comma-separated category pool")
    gen.add_argument('--distractors', type=_distractors, help="category:N adds N distractors plus the target")
    gen.add_argument('--min-separation', dest='min_separation', type=float)
    gen.add_argument('--feature-dim', dest='feature_dim', type=int)

    generate = sub.add_parser('generate', parents=[common, thresholds], help="generate instructions")
    generate.add_argument('--classifier', choices=['oracle', 'features'])
    generate.add_argument('--prototypes', help="prototype JSON for the feature classifier")
    generate.add_argument('--max-anchors', dest='max_anchors', type=int)
    generate.add_argument('--ambiguous-rate', dest='ambiguous_rate', type=float)
    generate.add_argument('--all-targets', dest='all_targets', action='store_const', const=True)
    generate.add_argument('--no-shuffle', dest='shuffle_tokens', action='store_const', const=False,
                          help="keep anchor blocks in candidate order")
    generate.add_argument('--ablation', choices=['none', 'near-only', 'blind'])

    ground_cmd = sub.add_parser('ground', parents=[common, thresholds], help="ground instructions in scenes")
    ground_cmd.add_argument('--instructions')
    ground_cmd.add_argument('--text')
    ground_cmd.add_argument('--scene-id', dest='scene_id')
    ground_cmd.add_argument('--target', type=int)

    evaluate = sub.add_parser('evaluate', parents=[common, thresholds], help="evaluate an instruction corpus")
    evaluate.add_argument('--instructions', required=True)
    evaluate.add_argument('--references')
    evaluate.add_argument('--perturb', choices=['far', 'close'])
    evaluate.add_argument('--pdf', action='store_true')

    perturb = sub.add_parser('perturb', parents=[common], help="replace spatial terms with far/close")
    perturb.add_argument('--instructions', required=True)
    perturb.add_argument('--mode', choices=['far', 'close'], required=True)

    losses = sub.add_parser('losses', help="loss function utilities")
    losses_sub = losses.add_subparsers(dest='losses_command', required=True)
    selftest = losses_sub.add_parser('selftest', parents=[common], help="finite-difference gradient checks")
    selftest.add_argument('--seeds', type=int, default=LOSS_CONFIG['selftest_seeds'])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        runner = ColdkitRunner(build_run_config(args), quiet=args.quiet)
        if args.command == 'gen-scenes':
            runner.cmd_gen_scenes()
        elif args.command == 'generate':
            runner.cmd_generate()
        elif args.command == 'ground':
            runner.cmd_ground(args.instructions, args.text, args.scene_id, args.target)
        elif args.command == 'evaluate':
            runner.cmd_evaluate(args.instructions, args.references, args.perturb, args.pdf)
        elif args.command == 'perturb':
            runner.cmd_perturb(args.instructions, args.mode)
        elif args.command == 'losses':
            if not runner.cmd_losses_selftest(args.seeds):
                print("❌ ERROR: gradient checks failed", file=sys.stderr)
                return 1
    except ValidationError as e:
        print(f"❌ ERROR: InvalidConfig: {e}", file=sys.stderr)
        return 1
    except (ColdkitError, OSError) as e:
        print(f"❌ ERROR: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("\n\n⏹ Processing interrupted by user", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
