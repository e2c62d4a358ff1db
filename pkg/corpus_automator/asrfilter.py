"""Manifests for ASR training and testing: utterance records built from
scored alignments, the video-level dev/eval/train split design, statistics
and score histograms."""

import json
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import Config
from .ctcseg import AlignedUtterance, filter_by_score
from .exceptions import ManifestError
from .logging_setup import logger
from .utils import atomic_write_text, iter_jsonl, write_jsonl


def make_utt_id(video_id: str, index: int) -> str:
    return f"{video_id}_{index:0{Config.UTT_ID_DIGITS}d}"


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    video_id: str
    channel_id: str
    start_s: float
    end_s: float
    text: str
    score: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def to_dict(self) -> Dict:
        return {
            "utt_id": self.utt_id,
            "video_id": self.video_id,
            "channel_id": self.channel_id,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "text": self.text,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "UtteranceRecord":
        record = cls(
            utt_id=str(data["utt_id"]),
            video_id=str(data["video_id"]),
            channel_id=str(data.get("channel_id", "") or ""),
            start_s=float(data["start_s"]),
            end_s=float(data["end_s"]),
            text=str(data["text"]),
            score=float(data["score"]),
        )
        if record.end_s <= record.start_s:
            raise ManifestError(f"{record.utt_id}: end_s must be greater than start_s")
        return record


def records_from_alignments(video_id: str, channel_id: str,
                            aligned: Iterable[AlignedUtterance]) -> List[UtteranceRecord]:
    records = []
    for utt in aligned:
        if utt.score is None or utt.end_s <= utt.start_s:
            logger.debug(f"Skipping unscored or empty utterance {utt.utterance_index} of {video_id}")
            continue
        records.append(UtteranceRecord(
            utt_id=make_utt_id(video_id, utt.utterance_index),
            video_id=video_id,
            channel_id=channel_id or "",
            start_s=round(float(utt.start_s), 6),
            end_s=round(float(utt.end_s), 6),
            text=utt.text,
            score=float(utt.score),
        ))
    return records


@dataclass(frozen=True)
class ManifestStats:
    n_videos: int = 0
    n_utts: int = 0
    hours: float = 0.0

    def to_dict(self) -> Dict:
        return {"n_videos": self.n_videos, "n_utts": self.n_utts, "hours": self.hours}


def manifest_stats(records: Iterable[UtteranceRecord]) -> ManifestStats:
    videos = set()
    n_utts = 0
    seconds = 0.0
    for record in records:
        videos.add(record.video_id)
        n_utts += 1
        seconds += record.end_s - record.start_s
    return ManifestStats(n_videos=len(videos), n_utts=n_utts, hours=seconds / 3600.0)


@dataclass
class SplitSpec:
    easy_theta: float = Config.EASY_THETA
    normal_theta: float = Config.NORMAL_THETA
    test_video_fraction: float = Config.TEST_VIDEO_FRACTION
    seed: int = Config.DEFAULT_SEED
    train_theta: Optional[float] = None
    test_videos: Optional[List[str]] = None
    exclude: Sequence[str] = field(default_factory=tuple)

    @property
    def effective_train_theta(self) -> float:
        return self.normal_theta if self.train_theta is None else self.train_theta

    def validate(self) -> "SplitSpec":
        errors = []
        if self.easy_theta < self.normal_theta:
            errors.append("easy_theta must be >= normal_theta")
        if not 0.0 < self.test_video_fraction < 1.0:
            errors.append("test_video_fraction must be in (0, 1)")
        if errors:
            raise ManifestError("; ".join(errors))
        return self


@dataclass
class SplitResult:
    test_videos: List[str]
    dev_easy: List[UtteranceRecord]
    eval_easy: List[UtteranceRecord]
    dev_normal: List[UtteranceRecord]
    eval_normal: List[UtteranceRecord]
    train: List[UtteranceRecord]

    def manifests(self) -> Dict[str, List[UtteranceRecord]]:
        return {
            "dev_easy": self.dev_easy,
            "eval_easy": self.eval_easy,
            "dev_normal": self.dev_normal,
            "eval_normal": self.eval_normal,
            "train": self.train,
        }


def _sorted(records: Iterable[UtteranceRecord]) -> List[UtteranceRecord]:
    return sorted(records, key=lambda r: r.utt_id)


def design_splits(records: Sequence[UtteranceRecord], spec: SplitSpec) -> SplitResult:
    """Pick test videos among those with an easy utterance and split them.

    Every utterance of a test video is assigned to dev or eval once, by a
    seeded draw that does not look at scores, so the easy sets are always
    subsets of the normal sets. Training data comes from the other videos.
    """
    spec.validate()
    if not records:
        raise ManifestError("no records to split")
    excluded = set(spec.exclude)
    records = _sorted(r for r in records if r.utt_id not in excluded)
    if excluded:
        logger.info(f"Applied exclusion list of {len(excluded)} utterances")

    eligible = sorted({r.video_id for r in records if r.score > spec.easy_theta})
    if not eligible:
        raise ManifestError(f"no video has an utterance scored above {spec.easy_theta}")

    rng = np.random.default_rng(spec.seed)
    if spec.test_videos is not None:
        known = {r.video_id for r in records}
        missing = sorted(set(spec.test_videos) - known)
        if missing:
            raise ManifestError(f"pinned test videos not in records: {', '.join(missing)}")
        test_videos = sorted(set(spec.test_videos))
    else:
        n_test = int(math.ceil(spec.test_video_fraction * len(eligible)))
        picks = rng.choice(len(eligible), size=n_test, replace=False)
        test_videos = sorted(eligible[i] for i in picks)

    test_set = set(test_videos)
    test_records = [r for r in records if r.video_id in test_set]
    order = np.random.default_rng([spec.seed, 1]).permutation(len(test_records))
    n_dev = (len(test_records) + 1) // 2
    dev_ids = {test_records[i].utt_id for i in order[:n_dev]}

    def pick(theta: float, in_dev: bool) -> List[UtteranceRecord]:
        return [r for r in test_records if r.score > theta and (r.utt_id in dev_ids) == in_dev]

    train_theta = spec.effective_train_theta
    result = SplitResult(
        test_videos=test_videos,
        dev_easy=pick(spec.easy_theta, True),
        eval_easy=pick(spec.easy_theta, False),
        dev_normal=pick(spec.normal_theta, True),
        eval_normal=pick(spec.normal_theta, False),
        train=[r for r in records if r.video_id not in test_set and r.score > train_theta],
    )
    logger.info(f"Split design: {len(test_videos)} test videos of {len(eligible)} eligible, "
                f"{len(result.train)} training utterances")
    return result


def _merge_key(record: UtteranceRecord) -> Tuple[float, str]:
    return record.score, json.dumps(record.to_dict(), sort_keys=True)


def merge_manifests(a: Iterable[UtteranceRecord], b: Iterable[UtteranceRecord]) -> List[UtteranceRecord]:
    """Union by ``utt_id`` keeping the higher score; conflicting text is an error."""
    merged: Dict[str, UtteranceRecord] = {}
    conflicts = set()
    for record in list(a) + list(b):
        existing = merged.get(record.utt_id)
        if existing is None:
            merged[record.utt_id] = record
            continue
        if existing.text != record.text:
            conflicts.add(record.utt_id)
            continue
        if _merge_key(record) > _merge_key(existing):
            merged[record.utt_id] = record
    if conflicts:
        raise ManifestError(f"conflicting text for utt_ids: {', '.join(sorted(conflicts))}")
    return _sorted(merged.values())


@dataclass(frozen=True)
class HistogramBin:
    lower: float
    upper: float
    count: int


def score_histogram(scores: Iterable, bin_width: float) -> List[HistogramBin]:
    """Counts per ``[k*w, (k+1)*w)`` bin, non-empty bins only, ascending.

    Accepts records or bare floats. Sentinel (unalignable) scores are skipped.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    counts: Dict[int, int] = defaultdict(int)
    skipped = 0
    for item in scores:
        score = float(getattr(item, "score", item))
        if score <= Config.LOG_ZERO or not math.isfinite(score):
            skipped += 1
            continue
        counts[int(math.floor(score / bin_width + 1e-9))] += 1
    if skipped:
        logger.debug(f"Histogram skipped {skipped} sentinel scores")
    return [HistogramBin(lower=k * bin_width, upper=(k + 1) * bin_width, count=counts[k])
            for k in sorted(counts)]


def select_top_videos(records: Iterable[UtteranceRecord], n_videos: int) -> List[UtteranceRecord]:
    """Records of the ``n_videos`` videos with the highest mean utterance score."""
    by_video: Dict[str, List[UtteranceRecord]] = defaultdict(list)
    for record in records:
        by_video[record.video_id].append(record)
    ranked = sorted(by_video, key=lambda v: (-float(np.mean([r.score for r in by_video[v]])), v))
    chosen = set(ranked[:max(n_videos, 0)])
    return _sorted(r for v in chosen for r in by_video[v])


def threshold_sweep(records: Sequence[UtteranceRecord],
                    thetas: Sequence[float] = Config.SWEEP_THETAS) -> List[Tuple[float, ManifestStats]]:
    return [(theta, manifest_stats(filter_by_score(records, theta))) for theta in thetas]


def stats_table(rows: Iterable[Tuple[str, Optional[float], ManifestStats]]) -> str:
    lines = ["name\ttheta\tn_videos\tn_utts\thours"]
    for name, theta, stats in rows:
        theta_text = "" if theta is None else f"{theta:g}"
        lines.append(f"{name}\t{theta_text}\t{stats.n_videos}\t{stats.n_utts}\t{stats.hours:.4f}")
    return "\n".join(lines) + "\n"


def write_manifest(directory: str, records: Iterable[UtteranceRecord]):
    """Write ``manifest.jsonl`` plus ``segments`` and ``text`` companions."""
    records = _sorted(records)
    seen = set()
    for record in records:
        if record.utt_id in seen:
            raise ManifestError(f"duplicate utt_id {record.utt_id}")
        seen.add(record.utt_id)
    write_jsonl(os.path.join(directory, Config.MANIFEST_FILE), (r.to_dict() for r in records))
    atomic_write_text(os.path.join(directory, Config.SEGMENTS_FILE), "".join(
        f"{r.utt_id} {r.video_id} {r.start_s:.2f} {r.end_s:.2f}\n" for r in records))
    atomic_write_text(os.path.join(directory, Config.TEXT_FILE), "".join(
        f"{r.utt_id}\t{r.text}\n" for r in records))


def read_manifest(path: str) -> List[UtteranceRecord]:
    """Read a manifest directory or a ``manifest.jsonl`` file."""
    if os.path.isdir(path):
        path = os.path.join(path, Config.MANIFEST_FILE)
    records = []
    for line_no, row in iter_jsonl(path):
        try:
            records.append(UtteranceRecord.from_dict(row))
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"{path}:{line_no}: invalid manifest record: {e}") from e
    return records
