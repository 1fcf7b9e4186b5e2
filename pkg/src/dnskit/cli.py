"""``dnskit`` command line: curate, synth, testset, groups, score, rank, rtcheck, validate.

Exit codes: 0 success, 1 check failed (rtcheck non-compliant), 2 usage error,
3 invalid config, 4 missing input, 5 processing failure. Errors are also
printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import curation, seeding
from .audio import AudioClip, read_wav, write_wav
from .config import ConfigError, PipelineConfig, load_config
from .evaluation import ratings as ratings_mod
from .evaluation.groups import RatingGroup, assemble_groups
from .evaluation.ranking import rank_models, ranking_table
from .evaluation.report import mos_table, score_models
from .evaluation.stats import PValueMatrix, anova_pairwise, spearman_rho
from .manifest import ClipManifestEntry, Corpus, load_manifest, read_jsonl, save_manifest, write_jsonl
from .rt import BackendDescriptor, SubprocessProcessor, load_processor, measure
from .synthesis import run_synthesis, sample_recipes
from .testset import Corpora, build_test_sets, category_counts, register_real_recordings

logger = logging.getLogger("dnskit")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING_INPUT = 4
EXIT_FAILURE = 5


class MissingInputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message, EXIT_USAGE)
        self.print_usage(sys.stderr)
        sys.exit(EXIT_USAGE)


def _emit_error(kind, message, code):
    print(json.dumps({"error": kind, "message": str(message), "exit_code": code}),
          file=sys.stderr)


def _dump_json(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require(path, what) -> Path:
    if path is None:
        raise MissingInputError(f"{what} not given")
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"{what} {p} does not exist")
    return p


def _config(args) -> PipelineConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    return load_config(args.config, overrides)


def _corpus(cfg: PipelineConfig, manifest, what) -> Corpus:
    path = _require(cfg.path(manifest), what)
    root = cfg.path(cfg.corpus.root) if cfg.corpus.root else path.parent
    return Corpus(load_manifest(path), root=root)


# -- curate ---------------------------------------------------------------

def cmd_curate(args) -> int:
    cfg = _config(args)
    out = Path(args.out_dir)
    c = cfg.curate
    stages = {"excerpts", "clean", "noise"} if args.stage == "all" else {args.stage}
    summary = {}
    if "excerpts" in stages and cfg.corpus.chapter_manifest:
        chapters = _corpus(cfg, cfg.corpus.chapter_manifest, "chapter manifest")
        keys = [e.chapter_id or e.clip_id for e in chapters.entries]
        if len(set(keys)) != len(keys):
            raise ValueError("chapter manifest must hold one entry per chapter id")
        excerpts = []
        for i, e in enumerate(chapters.entries):
            rng = seeding.stream(cfg.master_seed, "curate:excerpts", i)
            for ex in curation.sample_chapter_segments(chapters.load(e.clip_id), rng,
                                                       e.chapter_id or e.clip_id,
                                                       c.excerpts_per_chapter, c.segment_s):
                rel = f"excerpts/{ex.chapter_id}_{ex.index}.wav"
                write_wav(ex.clip, out / rel)
                excerpts.append(ClipManifestEntry(
                    ex.segment_id, rel, ex.clip.duration_s, speaker_id=e.speaker_id,
                    chapter_id=e.chapter_id or e.clip_id, offset_s=ex.offset_s,
                    source_id=e.clip_id))
        save_manifest(excerpts, out / "excerpts.jsonl")
        summary["excerpts"] = len(excerpts)
    if "clean" in stages and args.ratings:
        chapters = _corpus(cfg, cfg.corpus.chapter_manifest, "chapter manifest")
        by_chapter = defaultdict(list)
        for r in ratings_mod.read_ratings(_require(args.ratings, "ratings CSV")):
            by_chapter[r.clip_id.split("#")[0]].append((r.clip_id, r.score))
        qualities = [curation.ChapterQuality(ch, tuple(v)) for ch, v in sorted(by_chapter.items())]
        keep = set(curation.select_clean_chapters(qualities, c.mos_policy, c.mos_threshold))
        chosen = [e for e in chapters.entries if (e.chapter_id or e.clip_id) in keep]
        chosen = curation.filter_speakers_by_duration(chosen, c.speaker_min_minutes)
        segments = curation.segment_clips(chosen, c.segment_s)
        save_manifest(segments, out / "clean_manifest.jsonl")
        _dump_json({"chapter_mos": {q.chapter_id: q.chapter_mos for q in qualities},
                    "selected_chapters": sorted(keep),
                    "speakers_kept": sorted({e.speaker_id for e in chosen}),
                    "segments": len(segments)}, out / "clean_report.json")
        summary["clean_segments"] = len(segments)
    if "noise" in stages and cfg.corpus.noise_manifest:
        noise = load_manifest(_require(cfg.path(cfg.corpus.noise_manifest), "noise manifest"))
        speech_free = curation.remove_speech_clips(noise, c.speech_labels)
        selected, report = curation.balance_classes(speech_free, c.class_floor)
        save_manifest(selected, out / "noise_manifest.jsonl")
        _dump_json(report.to_dict(), out / "balance_report.json")
        summary["noise_clips"] = len(selected)
    if not summary:
        raise MissingInputError("nothing to curate: give corpus manifests in the config "
                                "(and --ratings for the clean stage)")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# -- synth ------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _config(args)
    speech = _corpus(cfg, cfg.corpus.speech_manifest, "speech manifest")
    noise = _corpus(cfg, cfg.corpus.noise_manifest, "noise manifest")
    rirs = _corpus(cfg, cfg.corpus.rir_manifest, "RIR manifest") if cfg.corpus.rir_manifest else None
    synth_cfg = cfg.synth.to_synthesis_config()
    recipes = sample_recipes(synth_cfg, args.count, cfg.master_seed, speech, noise, rirs)
    records = run_synthesis(recipes, speech, noise, rirs, synth_cfg, args.out_dir, args.jobs)
    print(json.dumps({"clips": len(records),
                      "manifest": str(Path(args.out_dir) / "mix_records.jsonl")}))
    return EXIT_OK


# -- testset ----------------------------------------------------------------

def _wavs(directory) -> list[Path]:
    return sorted(_require(directory, "real-recording directory").glob("*.wav"))


def cmd_testset(args) -> int:
    cfg = _config(args)
    corpora = Corpora(
        _corpus(cfg, cfg.corpus.speech_manifest, "speech manifest"),
        _corpus(cfg, cfg.corpus.noise_manifest, "noise manifest"),
        _corpus(cfg, cfg.corpus.rir_manifest, "RIR manifest") if cfg.corpus.rir_manifest else None)
    sets = build_test_sets(cfg.testset.to_plan(), corpora, cfg.master_seed, args.out_dir,
                           cfg.testset.disjoint, cfg.testset.dev_fraction,
                           cfg.synth.to_synthesis_config())
    real = {"dev": args.real_dev, "blind": args.real_blind}
    summary = {}
    for name, entries in sets.items():
        if real[name]:
            entries = entries + register_real_recordings("real", _wavs(real[name]))
        write_jsonl((e.to_dict() for e in entries), Path(args.out_dir) / name / "manifest.jsonl")
        summary[name] = category_counts(entries)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# -- groups -----------------------------------------------------------------

def _read_ids(path) -> list[str]:
    path = _require(path, "clip list")
    if path.suffix == ".jsonl":
        return [d["clip_id"] for d in read_jsonl(path)]
    return [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def cmd_groups(args) -> int:
    cfg = _config(args)
    e = cfg.eval
    clips = _read_ids(args.clips)
    gold = _read_ids(args.gold) if args.gold else list(e.gold_pool)
    trap = _read_ids(args.trap) if args.trap else list(e.trap_pool)
    groups = assemble_groups(clips, e.group_size, e.raters_per_clip, gold, trap, cfg.master_seed)
    out = Path(args.out_dir)
    write_jsonl((g.to_dict() for g in groups), out / "groups.jsonl")
    _dump_json({"groups": len(groups), "group_size": e.group_size,
                "raters_per_clip": e.raters_per_clip, "trap_expected": e.trap_expected,
                "max_groups_per_rater": e.max_groups_per_rater}, out / "groups_meta.json")
    print(json.dumps({"groups": len(groups)}))
    return EXIT_OK


# -- score ------------------------------------------------------------------

def cmd_score(args) -> int:
    cfg = _config(args)
    e = cfg.eval
    model_ratings = ratings_mod.read_ratings(_require(args.ratings, "ratings CSV"))
    noisy_ratings = (ratings_mod.read_ratings(_require(args.noisy_baseline, "noisy baseline CSV"))
                     if args.noisy_baseline else [])
    if args.groups:
        groups = [RatingGroup.from_dict(d) for d in read_jsonl(_require(args.groups, "groups"))]
        controls = {g.gold_clip_id for g in groups} | {g.trap_clip_id for g in groups}
    else:
        controls = set()
    complexity = json.loads(_require(args.complexity, "complexity map").read_text()) \
        if args.complexity else {}

    tagged = [(r, "model") for r in model_ratings] + [(r, "noisy") for r in noisy_ratings]
    kept, report = ratings_mod.filter_spam_raters(
        [r for r, _ in tagged], e.gold_tolerance, e.max_fail_fraction, e.trap_expected)
    kept_ids = {id(r) for r in kept}
    models_kept = [r for r, src in tagged if src == "model" and id(r) in kept_ids
                   and r.clip_id not in controls]
    noisy_kept = [r for r, src in tagged if src == "noisy" and id(r) in kept_ids
                  and r.clip_id not in controls]

    models, noisy = score_models(models_kept, noisy_kept, complexity)
    out = Path(args.out_dir)
    _dump_json(report.to_dict(), out / "spam_report.json")
    _dump_json({"models": [m.to_dict() for m in models],
                "noisy": noisy.to_dict() if noisy else None}, out / "summaries.json")
    per_clip = {m: ratings_mod.per_clip_means(rs)
                for m, rs in ratings_mod.group_by_model(models_kept).items()}
    _dump_json(per_clip, out / "per_clip.json")
    table = mos_table(models, noisy)
    (out / "mos_table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


# -- rank -------------------------------------------------------------------

def cmd_rank(args) -> int:
    cfg = _config(args)
    threshold = args.threshold if args.threshold is not None else cfg.eval.significance
    data = json.loads(_require(args.summaries, "summaries").read_text(encoding="utf-8"))
    entries = data["models"] if isinstance(data, dict) and "models" in data else data
    mos = {m["model"]: float(m["mos"]) for m in entries}
    complexity = {m["model"]: m["complexity"] for m in entries if m.get("complexity") is not None}
    if args.complexity:
        complexity.update(json.loads(_require(args.complexity, "complexity map").read_text()))
    out = Path(args.out_dir)
    if args.pvalues:
        pm = PValueMatrix.from_dict(json.loads(_require(args.pvalues, "p-values").read_text()))
        pm = PValueMatrix(pm.models, pm.p, threshold)
    elif args.per_clip:
        per_clip = json.loads(_require(args.per_clip, "per-clip scores").read_text())
        pm = anova_pairwise({m: per_clip[m] for m in mos}, threshold)
        _dump_json(pm.to_dict(), out / "pvalues.json")
    else:
        raise MissingInputError("give --pvalues or --per-clip")
    ranking = rank_models(mos, pm, complexity)
    _dump_json([r.to_dict() for r in ranking], out / "ranking.json")
    text = pm.table() + "\n\n" + ranking_table(ranking)
    (out / "ranking.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


# -- rtcheck ----------------------------------------------------------------

def cmd_rtcheck(args) -> int:
    cfg = _config(args)
    rt = cfg.rt
    frame_ms = args.frame_ms if args.frame_ms is not None else rt.frame_ms
    lookahead = args.lookahead_ms if args.lookahead_ms is not None else rt.lookahead_ms
    warmup = args.warmup if args.warmup is not None else rt.warmup_frames
    if args.input:
        clip = read_wav(_require(args.input, "input WAV"))
    else:
        rng = seeding.stream(cfg.master_seed, "rtcheck")
        n = int(round((warmup + 200) * frame_ms * 16))
        clip = AudioClip(np.clip(0.1 * rng.standard_normal(n), -1, 1))
    processor = load_processor(args.backend or rt.backend)
    try:
        desc = BackendDescriptor(frame_ms, lookahead, processor, args.backend or rt.backend)
        report, processed = measure(desc, clip, warmup, args.policy or rt.policy)
    finally:
        if isinstance(processor, SubprocessProcessor):
            processor.close()
    out = Path(args.out_dir)
    d = report.to_dict()
    if not args.keep_times:
        d.pop("frame_times_ms")
    _dump_json(d, out / "compliance_report.json")
    if processed is not None:
        write_wav(processed.with_samples(np.clip(processed.samples, -1.0, 1.0)),
                  out / "processed.wav")
    print(json.dumps({k: d[k] for k in ("passed", "structural_pass", "timing_pass", "mean_ms",
                                         "p99_ms", "max_ms", "budget_ms", "frames_over_budget")}))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# -- validate ---------------------------------------------------------------

def _read_condition_table(path) -> dict[str, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        if {"condition", "mos"} <= cols:
            return {row["condition"]: float(row["mos"]) for row in reader}
    # otherwise a ratings CSV: condition MOS over all ratings of the condition
    scores = defaultdict(list)
    for r in ratings_mod.read_ratings(path):
        scores[ratings_mod.split_clip_id(r.clip_id)[0]].append(r.score)
    return {k: float(np.mean(v)) for k, v in scores.items()}


def cmd_validate(args) -> int:
    _config(args)
    crowd = _read_condition_table(_require(args.crowd, "crowd MOS table"))
    lab = _read_condition_table(_require(args.lab, "lab MOS table"))
    common = sorted(set(crowd) & set(lab))
    if len(common) < 2:
        raise MissingInputError("fewer than two conditions shared by crowd and lab tables")
    rho = spearman_rho([crowd[c] for c in common], [lab[c] for c in common])
    result = {"spearman_rho": rho, "conditions": len(common)}
    if args.out_dir:
        _dump_json(result, Path(args.out_dir) / "validation.json")
    print(json.dumps(result))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dnskit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, fn, help_, out_default):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="pipeline config JSON (default: $DNSKIT_CONFIG)")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--out-dir", default=out_default)
        sp.set_defaults(func=fn)
        return sp

    sp = add("curate", cmd_curate, "clean-speech and noise corpus preparation", "out/curate")
    sp.add_argument("--stage", choices=("all", "excerpts", "clean", "noise"), default="all")
    sp.add_argument("--ratings", help="chapter-excerpt ratings CSV (clean stage)")

    sp = add("synth", cmd_synth, "training-set synthesis", "out/synth")
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--jobs", type=int, default=1)

    sp = add("testset", cmd_testset, "dev/blind test-set builds", "out/testset")
    sp.add_argument("--real-dev", help="directory of real recordings for the dev set")
    sp.add_argument("--real-blind", help="directory of real recordings for the blind set")

    sp = add("groups", cmd_groups, "rating-group plans", "out/groups")
    sp.add_argument("--clips", required=True, help="clip ids (text, one per line, or JSONL)")
    sp.add_argument("--gold", help="gold clip ids (overrides eval.gold_pool)")
    sp.add_argument("--trap", help="trap clip ids (overrides eval.trap_pool)")

    sp = add("score", cmd_score, "spam filtering and MOS/dMOS/CI tables", "out/score")
    sp.add_argument("--ratings", required=True)
    sp.add_argument("--noisy-baseline")
    sp.add_argument("--groups", help="groups JSONL; its gold/trap clips are excluded from MOS")
    sp.add_argument("--complexity", help="JSON map model -> RT/NRT or numeric cost")

    sp = add("rank", cmd_rank, "ANOVA p-values and tie-break ranking", "out/rank")
    sp.add_argument("--summaries", required=True)
    sp.add_argument("--pvalues")
    sp.add_argument("--per-clip", help="per-clip mean scores JSON from `score`")
    sp.add_argument("--complexity")
    sp.add_argument("--threshold", type=float)

    sp = add("rtcheck", cmd_rtcheck, "real-time compliance harness", "out/rtcheck")
    sp.add_argument("--backend", help="passthrough | python:mod:fn | exec:<command>")
    sp.add_argument("--input", help="WAV to stream (default: seeded noise)")
    sp.add_argument("--frame-ms", type=float)
    sp.add_argument("--lookahead-ms", type=float)
    sp.add_argument("--warmup", type=int)
    sp.add_argument("--policy", choices=("mean", "p99", "max"))
    sp.add_argument("--keep-times", action="store_true", help="store per-frame times")

    sp = add("validate", cmd_validate, "Spearman check of crowd MOS against lab MOS", None)
    sp.add_argument("--crowd", required=True)
    sp.add_argument("--lab", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit_error("config", exc, EXIT_CONFIG)
        return EXIT_CONFIG
    except (MissingInputError, FileNotFoundError) as exc:
        _emit_error("missing_input", exc, EXIT_MISSING_INPUT)
        return EXIT_MISSING_INPUT
    except Exception as exc:
        logger.debug("failure", exc_info=True)
        _emit_error("failure", f"{type(exc).__name__}: {exc}", EXIT_FAILURE)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
