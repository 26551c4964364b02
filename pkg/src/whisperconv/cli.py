"""Command-line entry point.

Settings resolve in three layers: built-in defaults, then ``--config FILE``
(``key = value`` lines, keys named like the long flags), then flags given on
the command line.  Exit codes: 0 success, 1 validation or configuration
error, 2 missing prerequisite, 3 numeric failure, 4 partial failure under
``--strict``.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

import torch

from . import corpus, dsp, metrics, training
from .alignment import InfeasibleAlignmentError
from .features import cmvn
from .flow import Direction, FlowConfig, FlowModel, load_flow, save_flow
from .tokenizer import (
    FsqConfig,
    NumericError,
    RoleError,
    SeqModel,
    SeqModelConfig,
    SyntheticTeacher,
    FileTeacher,
    Tokenizer,
    load_tokenizer,
    save_tokenizer,
)

log = logging.getLogger("whisperconv")

EXIT_OK, EXIT_CONFIG, EXIT_DEPENDENCY, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3, 4
LOCK_NAME = ".whisperconv.lock"


class UsageError(Exception):
    pass


class DependencyError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# -- parser ------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed; per-component seeds are derived from it")
    p.add_argument("--config", default=None, help="optional key = value file; command-line flags override it")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="stderr log verbosity")


def _train_args(p, steps, lr, batch=8, frames=64):
    p.add_argument("--steps", type=int, default=steps, help="optimizer steps")
    p.add_argument("--lr", type=float, default=lr, help="Adam learning rate")
    p.add_argument("--batch", type=int, default=batch, help="utterance windows per batch")
    p.add_argument("--frames", type=int, default=frames, help="frames per training window")
    p.add_argument("--log-every", type=int, default=10, help="loss-log interval in steps")


def _model_args(p):
    p.add_argument("--dim-model", type=int, default=64, help="transformer width")
    p.add_argument("--dim-ff", type=int, default=128, help="feed-forward width")
    p.add_argument("--heads", type=int, default=4, help="attention heads")
    p.add_argument("--layers", type=int, default=2, help="transformer blocks")
    p.add_argument("--fsmn-left", type=int, default=3, help="FSMN look-back taps")
    p.add_argument("--fsmn-right", type=int, default=3, help="FSMN look-ahead taps")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = Parser(prog="whisperconv", description="Whispered/normal speech conversion toolkit.", formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("align", help="build the aligned whisper/normal corpus", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="utterance manifest with paired records")
    p.add_argument("--base-dir", default=None, help="root for relative audio paths (manifest directory if unset)")
    p.add_argument("--out", required=True, help="output directory for aligned tensors and aligned.jsonl")
    p.add_argument("--posteriorgrams", default=None, help="directory of <id>.post tensors plus vocab.txt for word-boundary metadata")
    p.add_argument("--radius", type=int, default=5, help="FastDTW search radius")
    p.add_argument("--distance", default="euclidean", choices=["euclidean", "sqeuclidean", "cityblock"], help="frame distance")
    p.add_argument("--invert", action="store_true", help="also write Griffin-Lim audio of each aligned whisper mel")
    p.add_argument("--force", action="store_true", help="recompute pairs whose outputs already exist")
    p.add_argument("--strict", action="store_true", help="exit 4 when any pair fails")
    _common(p)

    p = sub.add_parser("train-stage1", help="distill the semantic tokenizer", formatter_class=fmt)
    p.add_argument("--data", required=True, help="aligned corpus directory (both modes are used, unpaired)")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--teacher-dir", default=None, help="teacher embeddings as <pair_id>.<whisper|normal>.wft; a seeded synthetic teacher when unset")
    p.add_argument("--fsq-levels", type=int_list, default=(8, 5, 5, 5), help="FSQ levels per embedding dimension")
    _train_args(p, 500, 1e-4)
    _model_args(p)
    _common(p)

    p = sub.add_parser("train-stage2", help="train the flow-matching acoustic model", formatter_class=fmt)
    p.add_argument("--data", required=True, help="aligned corpus directory")
    p.add_argument("--tokenizer", required=True, help="stage-1 checkpoint directory")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--time-dim", type=int, default=32, help="sinusoidal time-feature size")
    _train_args(p, 2000, 1e-5)
    _model_args(p)
    _common(p)

    p = sub.add_parser("train-stage3", help="train a unified tokenizer (n2w first, then w2n)", formatter_class=fmt)
    p.add_argument("--direction", required=True, choices=["n2w", "w2n"], help="conversion direction")
    p.add_argument("--data", required=True, help="aligned corpus directory of real pairs")
    p.add_argument("--tokenizer", required=True, help="stage-1 checkpoint directory")
    p.add_argument("--flow", required=True, help="stage-2 checkpoint directory")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--n2w", default=None, help="n2w checkpoint used to synthesize pseudo pairs for w2n")
    p.add_argument("--pseudo-manifest", default=None, help="externally generated pseudo-pair manifest for w2n")
    p.add_argument("--base-dir", default=None, help="root for relative audio paths in --pseudo-manifest")
    p.add_argument("--mix", default="uniform", choices=["uniform", "balanced"], help="real/pseudo sampling: uniform over the union, or balanced halves")
    p.add_argument("--lam", type=float, default=0.5, help="consistency weight (lambda_n for w2n, lambda_w for n2w)")
    p.add_argument("--sampler-steps", type=int, default=10, help="Euler steps when synthesizing pseudo features")
    _train_args(p, 1000, 1e-4)
    _common(p)

    p = sub.add_parser("gen-pseudo", help="synthesize pseudo whisper audio from normal speech", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="manifest whose normal-mode records are converted")
    p.add_argument("--base-dir", default=None, help="root for relative audio paths (manifest directory if unset)")
    p.add_argument("--tokenizer", required=True, help="stage-1 checkpoint directory")
    p.add_argument("--n2w", required=True, help="stage-3 n2w checkpoint directory")
    p.add_argument("--flow", required=True, help="stage-2 checkpoint directory")
    p.add_argument("--out", required=True, help="output directory for audio and pseudo.tsv")
    p.add_argument("--limit", type=int, default=0, help="convert at most this many records (0 = all)")
    p.add_argument("--sampler-steps", type=int, default=10, help="Euler integration steps")
    p.add_argument("--vocoder-iterations", type=int, default=32, help="Griffin-Lim iterations")
    p.add_argument("--max-prompt-frames", type=int, default=100, help="longest timbre prompt in frames")
    _common(p)

    p = sub.add_parser("eval", help="score converted audio against references", formatter_class=fmt)
    p.add_argument("--converted", required=True, help="manifest of converted utterances")
    p.add_argument("--reference", required=True, help="manifest of reference utterances, matched by id")
    p.add_argument("--base-dir", default=None, help="root for relative audio paths (each manifest's directory if unset)")
    p.add_argument("--hypotheses", default=None, help="tab-separated id<TAB>ASR text for error rates")
    p.add_argument("--unit", default="word", choices=["word", "character"], help="WER or CER")
    p.add_argument("--embeddings", default=None, help="speaker embeddings as <id>.<converted|reference>.wft; mel mean/std stand-in when unset")
    p.add_argument("--out", required=True, help="directory for report.txt and metrics.jsonl")
    _common(p)

    p = sub.add_parser("stats", help="corpus statistics per language and provenance", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="utterance manifest")
    p.add_argument("--base-dir", default=None, help="root for relative audio paths (manifest directory if unset)")
    p.add_argument("--out", default=None, help="optional file for the table")
    _common(p)

    p = sub.add_parser("scale-study", help="pseudo-data scaling study on a synthetic corpus", formatter_class=fmt)
    p.add_argument("--out", required=True, help="directory for scale.tsv and table.txt")
    p.add_argument("--tiers", type=int_list, default=(200, 1000, 2000), help="pseudo pair counts")
    p.add_argument("--seeds", type=int_list, default=(0, 1, 2), help="run seeds per tier")
    p.add_argument("--pseudo-pool", type=int, default=2000, help="pseudo pairs available; larger tiers are rejected")
    p.add_argument("--epochs", type=int, default=4, help="pretraining passes over each tier")
    p.add_argument("--sft-steps", type=int, default=200, help="fine-tuning steps on real pairs")
    p.add_argument("--sft-lr", type=float, default=1e-4, help="fine-tuning learning rate")
    p.add_argument("--lr", type=float, default=1e-3, help="pretraining learning rate")
    p.add_argument("--real-pairs", type=int, default=16, help="real pairs for fine-tuning")
    p.add_argument("--lam", type=float, default=0.5, help="consistency weight")
    p.add_argument("--pseudo-gap", type=float, default=0.5, help="mismatch between pseudo and real mode relations")
    _common(p)
    return parser


# -- config files --------------------------------------------------------------


def read_config(path) -> list[tuple[str, str]]:
    items = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected key = value")
        items.append((key.strip().replace("_", "-"), value.strip()))
    return items


def config_argv(subparser: argparse.ArgumentParser, items) -> list[str]:
    """Translate config entries into flags placed before the real arguments."""
    actions = {a.option_strings[0][2:]: a for a in subparser._actions if a.option_strings and a.option_strings[0].startswith("--")}
    argv = []
    for key, value in items:
        action = actions.get(key)
        if action is None or key == "config":
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(f"--{key}")
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
        else:
            argv += [f"--{key}", value]
    return argv


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        extra = config_argv(sub, read_config(args.config))
        args = parser.parse_args([args.command] + extra + list(argv[1:]))
    return args


# -- helpers -----------------------------------------------------------------


@contextlib.contextmanager
def output_lock(directory):
    """Single writer per output directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise UsageError(f"{directory} is locked by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)


def _base_dir(args, manifest_path) -> Path:
    return Path(args.base_dir) if args.base_dir else Path(manifest_path).resolve().parent


def _require(path, what: str, hint: str) -> Path:
    if path is None or not (Path(path) / "manifest.json").exists():
        raise DependencyError(f"{what} not found at {path}; {hint}")
    return Path(path)


def _aligned(path) -> list[corpus.FeaturePair]:
    if not (Path(path) / corpus.ALIGNED_MANIFEST).exists():
        raise DependencyError(f"no aligned corpus at {path}; run 'whisperconv align' first")
    pairs = corpus.load_feature_pairs(path)
    if not pairs:
        raise UsageError(f"aligned corpus at {path} is empty")
    return pairs


def _train_config(args, component: str) -> training.TrainConfig:
    return training.TrainConfig(args.steps, args.lr, args.batch, args.frames, args.log_every, training.derive_seed(component, args.seed))


def _model_config(args, **kw):
    return dict(
        dim_model=args.dim_model,
        dim_ff=args.dim_ff,
        heads=args.heads,
        layers=args.layers,
        fsmn_left=args.fsmn_left,
        fsmn_right=args.fsmn_right,
        **kw,
    )


# -- commands ------------------------------------------------------------------


def cmd_align(args) -> int:
    records = corpus.load_manifest(args.manifest)
    post = corpus.PosteriorgramSource.from_directory(args.posteriorgrams) if args.posteriorgrams else None
    cfg = corpus.AlignConfig(radius=args.radius, distance=args.distance, invert=args.invert)
    with output_lock(args.out):
        result = corpus.build_aligned_corpus(records, args.out, _base_dir(args, args.manifest), cfg, post, args.force)
    print(f"pairs processed: {result.processed}, skipped (existing): {result.skipped}, failed: {len(result.failures)}")
    for pid, err in sorted(result.failures.items()):
        print(f"  failed {pid}: {err}")
    return EXIT_PARTIAL if result.failures and args.strict else EXIT_OK


def cmd_train_stage1(args) -> int:
    pairs = _aligned(args.data)
    fsq = FsqConfig(args.fsq_levels)
    feats, ids = [], []
    for p in pairs:
        feats += [cmvn(p.whisper), cmvn(p.normal)]
        ids += [f"{p.pair_id}.whisper", f"{p.pair_id}.normal"]
    dim = feats[0].shape[1]
    if args.teacher_dir:
        teacher = FileTeacher(args.teacher_dir, fsq.embed_dim)
        targets = []
        for utt, x in zip(ids, feats):
            z = teacher.embeddings(utt).numpy()
            if len(z) != len(x):
                raise UsageError(f"teacher embeddings for {utt} have {len(z)} frames, features have {len(x)}")
            targets.append(z)
    else:
        teacher = SyntheticTeacher(dim, fsq.embed_dim, seed=training.derive_seed("stage1.teacher", args.seed))
        targets = [teacher(x).numpy() for x in feats]
    torch.manual_seed(training.derive_seed("stage1.init", args.seed))
    model = SeqModel(SeqModelConfig(**_model_config(args, feature_dim=dim, embed_dim=fsq.embed_dim)), "distilled")
    with output_lock(args.out) as out:
        loss_log = training.LossLog(out / "loss.tsv")
        losses = training.train_distill(model, feats, targets, _train_config(args, "stage1"), loss_log)
        loss_log.write()
        save_tokenizer(out, Tokenizer(model, fsq), args.seed)
    print(f"stage 1: loss {losses[0]:.4f} -> {losses[-1]:.4f} over {len(losses)} steps")
    return EXIT_OK


def cmd_train_stage2(args) -> int:
    tok = load_tokenizer(_require(args.tokenizer, "stage-1 tokenizer checkpoint", "run train-stage1 first"))
    if tok.model.role != "distilled":
        raise UsageError("--tokenizer must be the stage-1 distilled checkpoint")
    pairs = _aligned(args.data)
    items = training.flow_items(tok, pairs)
    torch.manual_seed(training.derive_seed("stage2.init", args.seed))
    cfg = FlowConfig(mel_bins=pairs[0].normal.shape[1], codebook_size=tok.fsq.codebook_size, time_dim=args.time_dim, **_model_config(args))
    model = FlowModel(cfg)
    with output_lock(args.out) as out:
        loss_log = training.LossLog(out / "loss.tsv")
        losses = training.train_flow(model, items, _train_config(args, "stage2"), loss_log)
        loss_log.write()
        save_flow(out, model, args.seed)
    print(f"stage 2: loss {losses[0]:.4f} -> {losses[-1]:.4f} over {len(losses)} steps")
    return EXIT_OK


def _pseudo_from_manifest(args, distilled) -> training.UnifiedData:
    records = corpus.load_manifest(args.pseudo_manifest)
    inputs = corpus.AblationInputs(pseudo_records=records, base_dir=str(_base_dir(args, args.pseudo_manifest)))
    pairs = corpus.make_ablation_config("PSEUDO", inputs)
    return training.unified_data(distilled, [cmvn(p.whisper) for p in pairs], [cmvn(p.normal) for p in pairs], Direction.W2N)


def _balanced(real: training.UnifiedData, pseudo: training.UnifiedData) -> training.UnifiedData:
    """Repeat the smaller set so real and pseudo contribute equal item counts."""
    small, big = sorted((real, pseudo), key=len)
    if not len(small):
        return big
    reps = max(1, round(len(big) / len(small)))
    rep = training.UnifiedData(small.primary * reps, small.consistency * reps, small.target * reps)
    return rep.extend(big)


def cmd_train_stage3(args) -> int:
    direction = Direction.parse(args.direction)
    distilled = load_tokenizer(_require(args.tokenizer, "stage-1 tokenizer checkpoint", "run train-stage1 first"))
    flow = load_flow(_require(args.flow, "stage-2 flow checkpoint", "run train-stage2 first"))
    pseudo = None
    if direction == Direction.W2N:
        if args.pseudo_manifest:
            pseudo = _pseudo_from_manifest(args, distilled)
        elif args.n2w:
            n2w = load_tokenizer(_require(args.n2w, "n2w unified tokenizer checkpoint", "run train-stage3 --direction n2w first"))
            if n2w.model.role != "n2w":
                raise UsageError(f"--n2w holds a {n2w.model.role!r} checkpoint")
        else:
            raise DependencyError("w2n training needs an n2w checkpoint (--n2w) or an external --pseudo-manifest; run train-stage3 --direction n2w first")
    pairs = _aligned(args.data)
    real = training.unified_data(distilled, [cmvn(p.whisper) for p in pairs], [cmvn(p.normal) for p in pairs], direction)
    if direction == Direction.W2N and pseudo is None:
        normal_mels = [p.normal for p in pairs]
        fake = training.pseudo_whisper_features(n2w, distilled, flow, normal_mels, steps=args.sampler_steps, seed=training.derive_seed("stage3.pseudo", args.seed))
        pseudo = training.unified_data(distilled, [cmvn(w) for w in fake], [cmvn(n) for n in normal_mels], direction)
    data = real
    if pseudo is not None:
        data = _balanced(real, pseudo) if args.mix == "balanced" else real.extend(pseudo)
    model = distilled.model.derive(direction.name.lower())
    with output_lock(args.out) as out:
        loss_log = training.LossLog(out / "loss.tsv")
        losses = training.train_unified(model, data, args.lam, _train_config(args, f"stage3.{direction.name}"), loss_log)
        loss_log.write()
        save_tokenizer(out, Tokenizer(model, distilled.fsq), args.seed)
    n_pseudo = len(pseudo) if pseudo is not None else 0
    print(f"stage 3 {args.direction}: {len(real)} real + {n_pseudo} pseudo pairs, loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    return EXIT_OK


def cmd_gen_pseudo(args) -> int:
    distilled = load_tokenizer(_require(args.tokenizer, "stage-1 tokenizer checkpoint", "run train-stage1 first"))
    n2w = load_tokenizer(_require(args.n2w, "n2w unified tokenizer checkpoint", "run train-stage3 --direction n2w first"))
    flow = load_flow(_require(args.flow, "stage-2 flow checkpoint", "run train-stage2 first"))
    records = corpus.load_manifest(args.manifest)
    base = _base_dir(args, args.manifest)
    prompts = corpus.select_prompts(records, base)
    normals = sorted((r for r in records if r.mode == "normal"), key=lambda r: r.id)
    if args.limit:
        normals = normals[: args.limit]
    cfg = corpus.PseudoConfig(sampler_steps=args.sampler_steps, max_prompt_frames=args.max_prompt_frames, vocoder_iterations=args.vocoder_iterations)
    out_records = []
    with output_lock(args.out) as out:
        for k, rec in enumerate(normals):
            if rec.speaker not in prompts:
                log.warning("no prompt for speaker %s; skipping %s", rec.speaker, rec.id)
                continue
            seed = training.derive_seed(f"gen-pseudo.{rec.id}", args.seed)
            _, recs, _ = corpus.gen_pseudo_pair(rec, n2w, distilled, flow, prompts[rec.speaker], base, out, seed, cfg)
            out_records += recs
        corpus.write_manifest(out_records, out / "pseudo.tsv")
    print(f"pseudo pairs generated: {len(out_records) // 2}")
    return EXIT_OK


def cmd_eval(args) -> int:
    converted = corpus.load_manifest(args.converted)
    reference = corpus.load_manifest(args.reference)
    conv_base = _base_dir(args, args.converted)
    ref_base = _base_dir(args, args.reference)
    refs = {r.id: r for r in reference}
    hyps = metrics.load_hypotheses(args.hypotheses) if args.hypotheses else {}
    items, missing = [], []
    for r in converted:
        ref = refs.get(r.id)
        if ref is None:
            missing.append(r.id)
            continue
        items.append(
            metrics.EvalItem(r.id, corpus.resolve_audio(r, conv_base), corpus.resolve_audio(ref, ref_base), ref.transcript, hyps.get(r.id))
        )
    emb = metrics.tensor_embeddings(args.embeddings) if args.embeddings else None
    report = metrics.evaluate(items, missing, args.unit, embeddings=emb)
    table = report.format_table()
    with output_lock(args.out) as out:
        (out / "report.txt").write_text(table + "\n")
        report.write_records(out / "metrics.jsonl")
    print(table)
    return EXIT_OK


def cmd_stats(args) -> int:
    records = corpus.load_manifest(args.manifest)
    stats = corpus.corpus_stats(records, _base_dir(args, args.manifest))
    for w in stats.warnings:
        log.warning("unreadable audio: %s", w)
    table = corpus.format_stats(stats)
    if args.out:
        Path(args.out).write_text(table + "\n")
    print(table)
    return EXIT_OK


def cmd_scale_study(args) -> int:
    if not args.tiers or not args.seeds:
        raise UsageError("need at least one tier and one seed")
    too_big = [t for t in args.tiers if t > args.pseudo_pool]
    if too_big:
        raise UsageError(f"tiers {too_big} exceed the {args.pseudo_pool} available pseudo pairs")
    cfg = training.ScaleConfig(
        tiers=args.tiers,
        seeds=args.seeds,
        epochs=args.epochs,
        sft_steps=args.sft_steps,
        sft_lr=args.sft_lr,
        lr=args.lr,
        real_pairs=args.real_pairs,
        lam=args.lam,
        pseudo_gap=args.pseudo_gap,
        seed=args.seed,
    )
    with output_lock(args.out) as out:
        rows = training.scale_study(cfg, progress=log.info)
        training.write_scale_data(rows, out / "scale.tsv")
        table = training.scale_table(rows)
        (out / "table.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


COMMANDS = {
    "align": cmd_align,
    "train-stage1": cmd_train_stage1,
    "train-stage2": cmd_train_stage2,
    "train-stage3": cmd_train_stage3,
    "gen-pseudo": cmd_gen_pseudo,
    "eval": cmd_eval,
    "stats": cmd_stats,
    "scale-study": cmd_scale_study,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"whisperconv: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    torch.use_deterministic_algorithms(True)
    try:
        return COMMANDS[args.command](args)
    except DependencyError as exc:
        print(f"whisperconv: missing prerequisite: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (NumericError, FloatingPointError) as exc:
        print(f"whisperconv: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, RoleError, ValueError, OSError, dsp.AudioFormatError, InfeasibleAlignmentError) as exc:
        print(f"whisperconv: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
