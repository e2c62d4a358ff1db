"""Per-video processing stages and the bounded-concurrency batch runner
used by the command line."""

import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence

from .asrfilter import UtteranceRecord, make_utt_id, records_from_alignments
from .catalog import Catalog, Downloader
from .chunker import infer_long, read_wav, toy_model
from .config import Config
from .ctcseg import (AlignedUtterance, align, prepare_utterances, read_alignments,
                     read_posteriors, score_cues, write_alignments, write_posteriors)
from .exceptions import CatalogError, CorpusError, UnalignableError
from .logging_setup import log_event, logger, timing_context
from .settings import PipelineConfig
from .spkfilter import EmbeddingSet, VariationResult, evaluate_video, read_embeddings, retain_segments, vad_mask
from .subtext import (AutoDetection, Num2WordsVerbalizer, SubtitleTrack, TokenTable, detect_auto_track,
                      load_charmap, normalize_text, read_track)
from .utils import read_jsonl, run_bounded, write_jsonl


class VideoSkipped(CorpusError):
    """A video lacks an input or is excluded by an earlier stage."""


class Status(str, Enum):
    DONE = "done"
    SKIPPED = "skipped"
    FAILED = "failed"


@dataclass
class VideoOutcome:
    video_id: str
    status: Status
    result: Any = None
    detail: str = ""


@dataclass
class BatchReport:
    stage: str
    outcomes: List[VideoOutcome] = field(default_factory=list)

    def _count(self, status: Status) -> int:
        return sum(1 for o in self.outcomes if o.status == status)

    @property
    def n_done(self) -> int:
        return self._count(Status.DONE)

    @property
    def n_skipped(self) -> int:
        return self._count(Status.SKIPPED)

    @property
    def n_failed(self) -> int:
        return self._count(Status.FAILED)

    def results(self) -> Dict[str, Any]:
        return {o.video_id: o.result for o in self.outcomes if o.status == Status.DONE}


def run_batch(stage: str, video_ids: Sequence[str], func: Callable[[str], Any],
              parallelism: int = 1) -> BatchReport:
    """Run ``func`` per video; skips and failures are recorded, never raised."""
    video_ids = list(video_ids)
    logger.info(f"Stage '{stage}': {len(video_ids)} videos, parallelism {parallelism}")
    results = run_bounded(video_ids, func, parallelism, progress=stage)

    report = BatchReport(stage=stage)
    for video_id, result in zip(video_ids, results):
        if isinstance(result, VideoSkipped):
            outcome = VideoOutcome(video_id, Status.SKIPPED, detail=str(result))
            log_event("video_skipped", logging.WARNING, f"Skipped {video_id}: {result}",
                      stage=stage, video_id=video_id, reason=str(result))
        elif isinstance(result, Exception):
            outcome = VideoOutcome(video_id, Status.FAILED, detail=f"{type(result).__name__}: {result}")
            logger.error(f"Error processing video '{video_id}' in {stage}: {result}",
                         exc_info=(type(result), result, result.__traceback__))
            log_event("video_failed", logging.ERROR, message=f"{stage} failed for {video_id}",
                      stage=stage, video_id=video_id, error=outcome.detail)
        else:
            outcome = VideoOutcome(video_id, Status.DONE, result=result)
            log_event("video_done", stage=stage, video_id=video_id)
        report.outcomes.append(outcome)

    log_event("batch_summary", message=f"Stage '{stage}': {report.n_done} done, "
                                       f"{report.n_skipped} skipped, {report.n_failed} failed",
              stage=stage, done=report.n_done, skipped=report.n_skipped, failed=report.n_failed)
    return report


class CorpusProcessor:
    """Resolves per-video inputs from the configured directories and runs one stage."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.catalog = Catalog.load(cfg.paths.catalog_dir) if cfg.paths.catalog_dir else None
        self._token_table: Optional[TokenTable] = None
        self._charmap: Optional[Dict[str, str]] = None
        self.verbalizer = Num2WordsVerbalizer(cfg.subtext.language)

    # Inputs

    @property
    def token_table(self) -> TokenTable:
        if self._token_table is None:
            if not self.cfg.paths.token_list:
                raise VideoSkipped("paths.token_list is not configured")
            self._token_table = TokenTable.load(self.cfg.paths.token_list, self.cfg.score.blank_id)
        return self._token_table

    @property
    def charmap(self) -> Dict[str, str]:
        if self._charmap is None:
            self._charmap = load_charmap(self.cfg.paths.charmap) if self.cfg.paths.charmap else {}
        return self._charmap

    def channel_of(self, video_id: str) -> str:
        if self.catalog is None:
            return ""
        return self.catalog.channel_of(video_id) or ""

    @staticmethod
    def _ids_in(directory: str, suffixes: Sequence[str]) -> List[str]:
        if not directory or not os.path.isdir(directory):
            return []
        ids = set()
        for name in os.listdir(directory):
            for suffix in suffixes:
                if name.endswith(suffix):
                    ids.add(name[:-len(suffix)])
        return sorted(ids)

    def subtitle_videos(self) -> List[str]:
        return self._ids_in(self.cfg.paths.subtitle_dir, Config.SUBTITLE_SUFFIXES)

    def audio_videos(self) -> List[str]:
        return self._ids_in(self.cfg.paths.audio_dir, (".wav",))

    def embedding_videos(self) -> List[str]:
        return self._ids_in(self.cfg.paths.embedding_dir, (Config.EMBEDDING_SUFFIX,))

    def _find(self, directory: str, video_id: str, suffixes: Sequence[str], what: str) -> str:
        for suffix in suffixes:
            path = os.path.join(directory, video_id + suffix) if directory else ""
            if path and os.path.exists(path):
                return path
        raise VideoSkipped(f"missing {what}")

    def load_track(self, video_id: str) -> SubtitleTrack:
        return read_track(self._find(self.cfg.paths.subtitle_dir, video_id, Config.SUBTITLE_SUFFIXES, "subtitles"))

    def posterior_path(self, video_id: str) -> str:
        """Configured posteriors first, then those written by the ``infer`` stage."""
        for directory in (self.cfg.paths.posterior_dir, self.cfg.output_path("posteriors")):
            path = os.path.join(directory, video_id + Config.POSTERIOR_SUFFIX) if directory else ""
            if path and os.path.exists(path):
                return path
        raise VideoSkipped("missing posteriors")

    def auto_flags(self) -> Dict[str, bool]:
        path = self.cfg.output_path("auto_detection.jsonl")
        if not os.path.exists(path):
            return {}
        return {row["video_id"]: bool(row["is_auto"]) for row in read_jsonl(path)}

    # Stages

    def fetch_video(self, video_id: str, downloader: Downloader) -> Dict[str, str]:
        try:
            return downloader.fetch(video_id, self.cfg.output_path("downloads"))
        except CatalogError as e:
            raise VideoSkipped(str(e)) from e

    def detect_auto(self, video_id: str) -> AutoDetection:
        track = self.load_track(video_id)
        return detect_auto_track(track, self.cfg.subtext.auto_threshold, self.cfg.subtext.pairing)

    def infer(self, video_id: str) -> str:
        samples = read_wav(self._find(self.cfg.paths.audio_dir, video_id, (".wav",), "audio"))
        model = toy_model(len(self.token_table), int(round(self.cfg.toy_window_ms * Config.SAMPLE_RATE_HZ / 1000)),
                          samples_per_frame=self.cfg.samples_per_frame)
        with timing_context("infer", video_id):
            posteriors = infer_long(samples, model, self.cfg.chunk)
        path = self.cfg.output_path("posteriors", video_id + Config.POSTERIOR_SUFFIX)
        write_posteriors(path, posteriors)
        return path

    def _utterances(self, video_id: str, track: SubtitleTrack):
        texts, unknown_rows = [], []
        for index, cue in enumerate(track.cues):
            text, unknown = normalize_text(cue.text, self.verbalizer, self.charmap, self.token_table)
            texts.append(text)
            if unknown:
                unknown_rows.append({"cue_index": index, "chars": unknown})
        if unknown_rows:
            log_event("unknown_chars", logging.WARNING, video_id=video_id, n_cues=len(unknown_rows))
        write_jsonl(self.cfg.output_path("unknown", video_id + Config.UNKNOWN_CHARS_SUFFIX), unknown_rows)
        utts, _ = prepare_utterances(texts, self.token_table)
        return utts

    def _check_manual(self, video_id: str, auto_flags: Dict[str, bool]):
        if auto_flags.get(video_id):
            raise VideoSkipped("automatic subtitles")
        if self.catalog is not None:
            record = self.catalog.get_video(video_id)
            if record is not None and not record.has_manual_subs:
                raise VideoSkipped("no manual subtitles in catalog")

    def align_video(self, video_id: str, mode: str, auto_flags: Dict[str, bool]) -> str:
        """Align (``mode='align'``) or score fixed cue timings (``mode='score'``)."""
        self._check_manual(video_id, auto_flags)
        track = self.load_track(video_id)
        posteriors = read_posteriors(self.posterior_path(video_id))
        utts = self._utterances(video_id, track)
        with timing_context(mode, video_id):
            if mode == "align":
                try:
                    aligned = align(posteriors, utts, self.cfg.score)
                except UnalignableError as e:
                    raise VideoSkipped(str(e)) from e
            else:
                posteriors.validate()
                spans = [(track.cues[u.utterance_index].start_s, track.cues[u.utterance_index].end_s) for u in utts]
                aligned = score_cues(posteriors, utts, spans, self.cfg.score)
        path = self.cfg.output_path(mode, video_id + Config.ALIGNMENTS_SUFFIX)
        write_alignments(path, aligned)
        return path

    def speech_embeddings(self, video_id: str) -> EmbeddingSet:
        """Embeddings of the utterances that survive VAD retention."""
        embedding_set = read_embeddings(
            self._find(self.cfg.paths.embedding_dir, video_id, (Config.EMBEDDING_SUFFIX,), "embeddings"))
        if not embedding_set.video_id:
            embedding_set.video_id = video_id
        if not embedding_set.channel_id:
            embedding_set.channel_id = self.channel_of(video_id)
        return self._retain_speech(video_id, embedding_set)

    def evaluate_speakers(self, video_id: str) -> VariationResult:
        return evaluate_video(self.speech_embeddings(video_id), self.cfg.classify)

    def _retain_speech(self, video_id: str, embedding_set: EmbeddingSet) -> EmbeddingSet:
        """Keep embeddings of cues that are mainly speech; needs audio and subtitles."""
        try:
            audio_path = self._find(self.cfg.paths.audio_dir, video_id, (".wav",), "audio")
            track = self.load_track(video_id)
        except VideoSkipped:
            logger.info(f"{video_id}: no audio or subtitles, VAD retention not applied")
            return embedding_set
        samples = read_wav(audio_path)
        kept = retain_segments(track.cues, vad_mask(samples, self.cfg.vad), self.cfg.vad,
                               samples.shape[0] / Config.SAMPLE_RATE_HZ)
        kept_ids = {make_utt_id(video_id, i) for i in kept}
        rows = [i for i, utt_id in enumerate(embedding_set.utt_ids) if utt_id in kept_ids]
        if embedding_set.utt_ids and len(rows) < embedding_set.n_utts:
            logger.info(f"{video_id}: VAD kept {len(rows)} of {embedding_set.n_utts} utterances")
        return embedding_set.subset(rows) if embedding_set.utt_ids else embedding_set

    # Collected outputs

    def load_records(self, source: str) -> List[UtteranceRecord]:
        directory = self.cfg.output_path(source)
        records: List[UtteranceRecord] = []
        for video_id in self._ids_in(directory, (Config.ALIGNMENTS_SUFFIX,)):
            aligned: List[AlignedUtterance] = read_alignments(
                os.path.join(directory, video_id + Config.ALIGNMENTS_SUFFIX))
            records.extend(records_from_alignments(video_id, self.channel_of(video_id), aligned))
        return sorted(records, key=lambda r: r.utt_id)
