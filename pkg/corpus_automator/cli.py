"""
Command Line Module
Wires the corpus construction stages into subcommands over one TOML config.
Exit status: 0 success, 1 configuration error, 2 failed videos or stage error.
"""

import argparse
import json
import logging
import os
import sys
from typing import Callable, Dict, List, Optional, Sequence

from .asrfilter import (UtteranceRecord, design_splits, manifest_stats, merge_manifests, read_manifest,
                        score_histogram, select_top_videos, stats_table, threshold_sweep, write_manifest)
from .catalog import FixtureDownloader, FixtureSubtitleLookup, FixtureVideoSearcher, SearchTerm, TermSource, collect
from .config import Config
from .ctcseg import filter_by_score
from .exceptions import ConfigError, CorpusError
from .logging_setup import logger, setup_logger, shutdown_logger
from .pipeline import BatchReport, CorpusProcessor, run_batch
from .plotting import save_histogram_png
from .settings import PipelineConfig, SettingsManager
from .spkfilter import (VariationResult, VideoClass, compute_eer, group_speakers, make_trials, read_trials,
                        score_trials, split_speakers, write_trials)
from .synth import make_fixture
from .utils import atomic_write_text, read_jsonl, write_jsonl

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILED = 2

SPLIT_DIR = "splits"
FILTERED_DIR = "filtered"


def _exit_code(report: BatchReport) -> int:
    return EXIT_FAILED if report.n_failed else EXIT_OK


def _write_json(path: str, payload: Dict):
    atomic_write_text(path, json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


def _require_catalog(processor: CorpusProcessor):
    if processor.catalog is None:
        raise ConfigError(["paths.catalog_dir: required by this subcommand"])


def _load_classification(cfg: PipelineConfig) -> List[VariationResult]:
    path = cfg.output_path(Config.CLASSIFICATION_FILE)
    if not os.path.exists(path):
        raise CorpusError(f"{path} not found, run spk-classify first")
    return [VariationResult.from_dict(row) for row in read_jsonl(path)]


def _load_speakers(cfg: PipelineConfig) -> Dict[str, str]:
    path = cfg.output_path(Config.SPEAKERS_FILE)
    if not os.path.exists(path):
        raise CorpusError(f"{path} not found, run spk-group first")
    return {row["video_id"]: row["speaker_id"] for row in read_jsonl(path)}


# Subcommands

def cmd_catalog_stats(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    _require_catalog(processor)
    stats = processor.catalog.stats()
    cfg = processor.cfg
    _write_json(cfg.output_path("catalog_stats.json"), stats.to_dict())
    for kind in ("manual", "auto"):
        ids = processor.catalog.video_ids(kind)
        atomic_write_text(cfg.output_path(f"{kind}_videos.txt"), "".join(v + "\n" for v in ids))
    print(json.dumps(stats.to_dict(), sort_keys=True))
    return EXIT_OK


def _read_terms(path: str) -> List[SearchTerm]:
    with open(path, "r", encoding="utf-8") as f:
        return [SearchTerm(line.strip(), TermSource.MANUAL) for line in f if line.strip()]


def cmd_catalog_collect(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    """Grow the catalog from local search and metadata files, then resolve files."""
    _require_catalog(processor)
    cfg = processor.cfg
    catalog = processor.catalog
    if args.terms:
        added, _ = catalog.add_terms(_read_terms(args.terms))
        logger.info(f"Added {added} search terms from {args.terms}")
    hits = collect(catalog, FixtureVideoSearcher(args.search), FixtureSubtitleLookup(args.metadata), args.max_results)
    catalog.save(cfg.paths.catalog_dir)
    _write_json(cfg.output_path("collect_hits.json"), hits)

    exit_code = EXIT_OK
    if args.fetch:
        downloader = FixtureDownloader(cfg.paths.audio_dir, cfg.paths.subtitle_dir)
        report = run_batch("fetch", catalog.video_ids("manual"),
                           lambda video_id: processor.fetch_video(video_id, downloader), cfg.parallelism)
        results = report.results()
        write_jsonl(cfg.output_path("downloads.jsonl"),
                    ({"video_id": v, **results[v]} for v in sorted(results)))
        exit_code = _exit_code(report)
    print(f"{len(catalog)} videos from {len(hits)} terms")
    return exit_code


def cmd_detect_auto(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    report = run_batch("detect-auto", processor.subtitle_videos(), processor.detect_auto,
                       processor.cfg.parallelism)
    rows = [{"video_id": video_id, "is_auto": result.is_auto, "mean_rel_lev": result.mean_rel_lev}
            for video_id, result in report.results().items()]
    write_jsonl(processor.cfg.output_path("auto_detection.jsonl"), rows)
    print(f"{sum(r['is_auto'] for r in rows)} of {len(rows)} subtitle tracks look automatic")
    return _exit_code(report)


def cmd_infer(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    report = run_batch("infer", processor.audio_videos(), processor.infer, processor.cfg.parallelism)
    return _exit_code(report)


def _align_command(mode: str) -> Callable[[CorpusProcessor, argparse.Namespace], int]:
    def command(processor: CorpusProcessor, args: argparse.Namespace) -> int:
        auto_flags = processor.auto_flags()
        report = run_batch(mode, processor.subtitle_videos(),
                           lambda video_id: processor.align_video(video_id, mode, auto_flags),
                           processor.cfg.parallelism)
        print(f"{mode}: {report.n_done} done, {report.n_skipped} skipped, {report.n_failed} failed")
        return _exit_code(report)
    return command


def cmd_filter(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    theta = args.theta if args.theta is not None else processor.cfg.score.theta
    if theta is None:
        raise ConfigError(["ctcseg.theta: required by filter when --theta is not given"])
    records = processor.load_records(args.source)
    kept = filter_by_score(records, theta)
    directory = processor.cfg.output_path(FILTERED_DIR, f"{args.source}_{theta:g}")
    write_manifest(directory, kept)
    stats = manifest_stats(kept)
    print(f"theta {theta:g}: kept {stats.n_utts} of {len(records)} utterances "
          f"from {stats.n_videos} videos, {stats.hours:.4f} h -> {directory}")
    return EXIT_OK


def _single_speaker_videos(cfg: PipelineConfig) -> Optional[set]:
    if not os.path.exists(cfg.output_path(Config.CLASSIFICATION_FILE)):
        return None
    return {r.video_id for r in _load_classification(cfg) if r.klass == VideoClass.SINGLE}


def cmd_split(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    cfg = processor.cfg
    result = design_splits(processor.load_records(args.source), cfg.split)
    manifests: Dict[str, List[UtteranceRecord]] = dict(result.manifests())

    single = _single_speaker_videos(cfg)
    if single is not None:
        manifests["train_single_speaker"] = [r for r in result.train if r.video_id in single]
    if cfg.top_videos:
        manifests["train_top"] = select_top_videos(result.train, cfg.top_videos)
    if "train_single_speaker" in manifests and "train_top" in manifests:
        manifests["train_merged"] = merge_manifests(manifests["train_single_speaker"], manifests["train_top"])

    for name, records in manifests.items():
        write_manifest(cfg.output_path(SPLIT_DIR, name), records)
        logger.info(f"Manifest {name}: {len(records)} utterances")
    atomic_write_text(cfg.output_path(SPLIT_DIR, "test_videos.txt"),
                      "".join(v + "\n" for v in result.test_videos))
    print(f"test videos: {', '.join(result.test_videos)}; "
          + ", ".join(f"{name}={len(records)}" for name, records in manifests.items()))
    return EXIT_OK


def cmd_stats(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    cfg = processor.cfg
    records = processor.load_records(args.source)
    rows = [("all", theta, stats) for theta, stats in threshold_sweep(records, Config.SWEEP_THETAS)]
    split_root = cfg.output_path(SPLIT_DIR)
    if os.path.isdir(split_root):
        for name in sorted(os.listdir(split_root)):
            manifest = os.path.join(split_root, name, Config.MANIFEST_FILE)
            if os.path.exists(manifest):
                rows.append((name, None, manifest_stats(read_manifest(manifest))))
    table = stats_table(rows)
    atomic_write_text(cfg.output_path(Config.STATS_FILE), table)
    print(table, end="")
    return EXIT_OK


def cmd_hist(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    cfg = processor.cfg
    if args.source == "spk":
        scores = [r.score for r in _load_classification(cfg) if r.score is not None]
        markers = [(cfg.classify.tau_low, "tau_low"), (cfg.classify.tau_high, "tau_high")]
    else:
        scores = [r.score for r in processor.load_records(args.source)]
        markers = [(cfg.split.easy_theta, "easy"), (cfg.split.normal_theta, "normal")]
    bins = score_histogram(scores, args.bin_width)
    atomic_write_text(cfg.output_path(f"hist_{args.source}.tsv"),
                      "".join(f"{b.lower:g}\t{b.upper:g}\t{b.count}\n" for b in bins))
    for b in bins:
        print(f"[{b.lower:g}, {b.upper:g})\t{b.count}")
    if args.png:
        save_histogram_png(bins, cfg.output_path(f"hist_{args.source}.png"),
                           title=f"{args.source} scores", markers=markers)
    return EXIT_OK


def cmd_spk_classify(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    report = run_batch("spk-classify", processor.embedding_videos(), processor.evaluate_speakers,
                       processor.cfg.parallelism)
    results = report.results()
    write_jsonl(processor.cfg.output_path(Config.CLASSIFICATION_FILE),
                (results[v].to_dict() for v in sorted(results)))
    counts: Dict[str, int] = {}
    for result in results.values():
        counts[result.klass.value] = counts.get(result.klass.value, 0) + 1
    print(", ".join(f"{k}={counts[k]}" for k in sorted(counts)))
    return _exit_code(report)


def cmd_spk_group(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    cfg = processor.cfg
    results = _load_classification(cfg)
    channels = {r.video_id: processor.channel_of(r.video_id) for r in results}
    speakers = group_speakers(results, channels)
    write_jsonl(cfg.output_path(Config.SPEAKERS_FILE),
                ({"video_id": v, "speaker_id": s} for v, s in speakers.items()))
    if args.n_test_speakers:
        test, train = split_speakers(speakers, args.n_test_speakers, cfg.seed)
        _write_json(cfg.output_path("speaker_split.json"), {"test": test, "train": train})
    print(f"{len(speakers)} single-speaker videos, {len(set(speakers.values()))} speakers")
    return EXIT_OK


def cmd_trials(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    cfg = processor.cfg
    speakers = _load_speakers(cfg)
    utterances = {v: processor.speech_embeddings(v).utt_ids for v in sorted(speakers)}
    trials = make_trials(speakers, utterances, cfg.trials)
    write_trials(cfg.output_path(Config.TRIALS_FILE), trials)
    print(f"{len(trials)} trials written")
    return EXIT_OK


def cmd_eer(processor: CorpusProcessor, args: argparse.Namespace) -> int:
    cfg = processor.cfg
    trials = read_trials(cfg.output_path(Config.TRIALS_FILE))
    embeddings = {}
    for video_id in sorted(_load_speakers(cfg)):
        embedding_set = processor.speech_embeddings(video_id)
        embeddings.update(zip(embedding_set.utt_ids, embedding_set.embeddings))
    scored = score_trials(trials, embeddings)
    result = compute_eer(scored)
    n_target = sum(1 for _, is_target in scored if is_target)
    _write_json(cfg.output_path("eer.json"), {"eer": result.eer, "threshold": result.threshold,
                                              "n_target": n_target, "n_nontarget": len(scored) - n_target})
    print(f"EER {result.eer:.4f} at threshold {result.threshold:.4f}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[CorpusProcessor, argparse.Namespace], int]] = {
    "catalog-stats": cmd_catalog_stats,
    "catalog-collect": cmd_catalog_collect,
    "detect-auto": cmd_detect_auto,
    "infer": cmd_infer,
    "align": _align_command("align"),
    "score": _align_command("score"),
    "filter": cmd_filter,
    "split": cmd_split,
    "stats": cmd_stats,
    "hist": cmd_hist,
    "spk-classify": cmd_spk_classify,
    "spk-group": cmd_spk_group,
    "trials": cmd_trials,
    "eer": cmd_eer,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corpus_automator",
                                     description="Build cleaned speech-corpus manifests from subtitled audio.")
    parser.add_argument("--config", help="TOML config file (defaults are used when omitted)")
    parser.add_argument("--seed", type=int, default=None, help="override every seed in the config")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("catalog-stats", "detect-auto", "infer", "align", "score", "spk-classify", "trials", "eer"):
        sub.add_parser(name)

    p = sub.add_parser("catalog-collect", help="add search results from local JSONL files to the catalog")
    p.add_argument("--search", required=True, help="JSONL of {\"term\", \"video_ids\"}")
    p.add_argument("--metadata", required=True, help="JSONL of video metadata keyed by video_id")
    p.add_argument("--terms", help="text file with one search term per line")
    p.add_argument("--max-results", type=int, default=Config.MAX_SEARCH_RESULTS)
    p.add_argument("--fetch", action="store_true", help="resolve audio and subtitles of manual-subtitle videos")

    p = sub.add_parser("filter", help="keep utterances scored strictly above theta")
    p.add_argument("--theta", type=float, default=None, help="defaults to ctcseg.theta from the config")
    p.add_argument("--source", choices=["align", "score"], default="align")

    for name in ("split", "stats"):
        p = sub.add_parser(name)
        p.add_argument("--source", choices=["align", "score"], default="align")

    p = sub.add_parser("hist", help="score histogram")
    p.add_argument("--bin-width", type=float, default=0.5)
    p.add_argument("--source", choices=["align", "score", "spk"], default="align")
    p.add_argument("--png", action="store_true", help="also render a PNG")

    p = sub.add_parser("spk-group")
    p.add_argument("--n-test-speakers", type=int, default=0)

    p = sub.add_parser("make-fixture", help="write the synthetic 5-video fixture")
    p.add_argument("directory")
    return parser


def run(subcommand: str, cfg: PipelineConfig, args: argparse.Namespace) -> int:
    """Run one subcommand; library errors become exit statuses, never tracebacks."""
    try:
        processor = CorpusProcessor(cfg)
        return COMMANDS[subcommand](processor, args)
    except ConfigError as e:
        for message in e.messages:
            print(f"config error: {message}", file=sys.stderr)
        return EXIT_CONFIG
    except CorpusError as e:
        logger.error(f"{subcommand} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "make-fixture":
        seed = Config.DEFAULT_SEED if args.seed is None else args.seed
        make_fixture(args.directory, seed)
        print(f"fixture written to {args.directory}")
        return EXIT_OK

    try:
        cfg = SettingsManager().load_config(args.config)
    except ConfigError as e:
        for message in e.messages:
            print(f"config error: {message}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.apply_seed(args.seed)

    setup_logger(getattr(logging, cfg.log_level), log_dir=cfg.output_path("logs"),
                 events_path=cfg.output_path(Config.EVENTS_FILE))
    try:
        logger.info(f"Running {args.command} with output in {cfg.paths.output_dir}")
        return run(args.command, cfg, args)
    finally:
        shutdown_logger()


if __name__ == "__main__":
    sys.exit(main())
