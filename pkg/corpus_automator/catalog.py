"""Search-term, video and subtitle-availability bookkeeping."""

import os
import unicodedata
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

from .config import Config
from .exceptions import CatalogError
from .logging_setup import logger, timing_context
from .utils import iter_jsonl, read_jsonl, validate_jsonl_file, write_jsonl


class TermSource(str, Enum):
    WIKI_HYPERLINK = "wiki_hyperlink"
    TREND = "trend"
    MANUAL = "manual"


class UpsertResult(str, Enum):
    INSERTED = "inserted"
    UPDATED = "updated"


def normalize_term(text: str) -> str:
    """NFC, case-fold, trim and collapse internal whitespace."""
    text = unicodedata.normalize("NFC", text)
    return " ".join(text.casefold().split())


@dataclass(frozen=True)
class SearchTerm:
    text: str
    source: TermSource = TermSource.MANUAL

    @property
    def term_id(self) -> str:
        return normalize_term(self.text)

    def to_dict(self) -> Dict:
        return {"text": self.text, "source": self.source.value}


@dataclass
class VideoRecord:
    video_id: str
    channel_id: str = ""
    duration_s: float = 0.0
    has_manual_subs: bool = False
    has_auto_subs: bool = False
    found_by: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "video_id": self.video_id,
            "channel_id": self.channel_id,
            "duration_s": float(self.duration_s),
            "has_manual_subs": bool(self.has_manual_subs),
            "has_auto_subs": bool(self.has_auto_subs),
            "found_by": sorted(self.found_by),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "VideoRecord":
        return cls(
            video_id=str(data.get("video_id", "")).strip(),
            channel_id=str(data.get("channel_id", "") or "").strip(),
            duration_s=float(data.get("duration_s", 0.0)),
            has_manual_subs=bool(data.get("has_manual_subs", False)),
            has_auto_subs=bool(data.get("has_auto_subs", False)),
            found_by=[str(t) for t in data.get("found_by", [])],
        )


@dataclass(frozen=True)
class CatalogStats:
    n_terms: int = 0
    n_videos: int = 0
    n_manual: int = 0
    n_auto: int = 0
    videos_per_term: Optional[float] = None

    @property
    def manual_fraction(self) -> Optional[float]:
        return self.n_manual / self.n_videos if self.n_videos else None

    @property
    def auto_fraction(self) -> Optional[float]:
        return self.n_auto / self.n_videos if self.n_videos else None

    def to_dict(self) -> Dict:
        return {
            "n_terms": self.n_terms,
            "n_videos": self.n_videos,
            "n_manual": self.n_manual,
            "n_auto": self.n_auto,
            "videos_per_term": self.videos_per_term,
            "manual_fraction": self.manual_fraction,
            "auto_fraction": self.auto_fraction,
        }


def compute_stats(n_terms: int, videos: Iterable[VideoRecord]) -> CatalogStats:
    """Pure fold over video records; insertion order never matters."""
    n_videos = n_manual = n_auto = 0
    for video in videos:
        n_videos += 1
        n_manual += int(video.has_manual_subs)
        n_auto += int(video.has_auto_subs)
    return CatalogStats(
        n_terms=n_terms,
        n_videos=n_videos,
        n_manual=n_manual,
        n_auto=n_auto,
        videos_per_term=(n_videos / n_terms) if n_terms > 0 else None,
    )


class Catalog:
    """In-memory catalog with JSONL persistence, one file per entity kind.

    Mutation is single-writer; readers may share an instance freely.
    """

    def __init__(self):
        self._terms: Dict[str, SearchTerm] = {}
        self._videos: Dict[str, VideoRecord] = {}

    @property
    def terms(self) -> List[SearchTerm]:
        return list(self._terms.values())

    @property
    def videos(self) -> List[VideoRecord]:
        return [self._videos[k] for k in sorted(self._videos)]

    def __len__(self):
        return len(self._videos)

    def add_terms(self, terms: Iterable[SearchTerm]) -> Tuple[int, List[Dict]]:
        """Add terms, dropping duplicates after normalization.

        Returns ``(count_added, errors)``; each error is
        ``{"index": i, "text": ..., "error": ...}``.
        """
        added = 0
        errors: List[Dict] = []
        for i, term in enumerate(terms):
            if isinstance(term, str):
                term = SearchTerm(term)
            term_id = term.term_id
            if not term_id:
                errors.append({"index": i, "text": term.text, "error": "empty search term"})
                continue
            if term_id in self._terms:
                continue
            self._terms[term_id] = SearchTerm(term.text.strip(), TermSource(term.source))
            added += 1
        if errors:
            logger.warning(f"Rejected {len(errors)} search terms")
        return added, errors

    def upsert_video(self, video: VideoRecord) -> UpsertResult:
        if not video.video_id or not video.video_id.strip():
            raise CatalogError("video_id cannot be empty")
        if video.duration_s < 0:
            raise CatalogError(f"negative duration for video {video.video_id}")

        existing = self._videos.get(video.video_id)
        if existing is None:
            self._videos[video.video_id] = VideoRecord(
                video_id=video.video_id,
                channel_id=video.channel_id,
                duration_s=video.duration_s,
                has_manual_subs=video.has_manual_subs,
                has_auto_subs=video.has_auto_subs,
                found_by=sorted(set(video.found_by)),
            )
            return UpsertResult.INSERTED

        existing.found_by = sorted(set(existing.found_by) | set(video.found_by))
        # Latest observation wins for availability flags
        existing.has_manual_subs = video.has_manual_subs
        existing.has_auto_subs = video.has_auto_subs
        if video.channel_id:
            existing.channel_id = video.channel_id
        if video.duration_s:
            existing.duration_s = video.duration_s
        return UpsertResult.UPDATED

    def get_video(self, video_id: str) -> Optional[VideoRecord]:
        return self._videos.get(video_id)

    def channel_of(self, video_id: str) -> Optional[str]:
        video = self._videos.get(video_id)
        return video.channel_id if video and video.channel_id else None

    def video_ids(self, kind: str = "manual") -> List[str]:
        """Sorted ids of videos with ``manual`` or ``auto`` subtitles, or ``all``."""
        if kind == "manual":
            return [v.video_id for v in self.videos if v.has_manual_subs]
        if kind == "auto":
            return [v.video_id for v in self.videos if v.has_auto_subs]
        if kind == "all":
            return [v.video_id for v in self.videos]
        raise CatalogError(f"unknown subtitle kind: {kind}")

    def stats(self) -> CatalogStats:
        return compute_stats(len(self._terms), self._videos.values())

    def save(self, directory: str):
        with timing_context("save_catalog"):
            write_jsonl(os.path.join(directory, Config.TERMS_FILE),
                        (t.to_dict() for t in sorted(self._terms.values(), key=lambda t: t.term_id)))
            write_jsonl(os.path.join(directory, Config.VIDEOS_FILE), (v.to_dict() for v in self.videos))
            logger.info(f"Saved catalog with {len(self._terms)} terms and {len(self._videos)} videos")

    @classmethod
    def load(cls, directory: str) -> "Catalog":
        """Load ``terms.jsonl`` and ``videos.jsonl``; missing files mean empty."""
        catalog = cls()
        terms_path = os.path.join(directory, Config.TERMS_FILE)
        videos_path = os.path.join(directory, Config.VIDEOS_FILE)

        with timing_context("load_catalog"):
            for path in (terms_path, videos_path):
                if os.path.exists(path):
                    is_valid, error_msg = validate_jsonl_file(path)
                    if not is_valid:
                        raise CatalogError(f"Invalid catalog file {path}: {error_msg}")

            if os.path.exists(terms_path):
                terms = []
                for line_no, row in iter_jsonl(terms_path):
                    try:
                        terms.append(SearchTerm(str(row["text"]), TermSource(row.get("source", "manual"))))
                    except (KeyError, ValueError) as e:
                        logger.warning(f"Skipping invalid term at {terms_path}:{line_no}: {e}")
                catalog.add_terms(terms)

            if os.path.exists(videos_path):
                for line_no, row in iter_jsonl(videos_path):
                    try:
                        catalog.upsert_video(VideoRecord.from_dict(row))
                    except (CatalogError, ValueError, TypeError) as e:
                        logger.warning(f"Skipping invalid video at {videos_path}:{line_no}: {e}")

        logger.info(f"Loaded catalog: {len(catalog._terms)} terms, {len(catalog._videos)} videos")
        return catalog


class VideoSearcher(ABC):
    @abstractmethod
    def search(self, term: SearchTerm, max_results: int) -> List[str]:
        """Return candidate video ids for a search term."""


class SubtitleLookup(ABC):
    @abstractmethod
    def lookup(self, video_id: str) -> Dict:
        """Return ``channel_id``, ``duration_s``, ``has_manual_subs``, ``has_auto_subs``."""


class Downloader(ABC):
    @abstractmethod
    def fetch(self, video_id: str, dest_dir: str) -> Dict[str, str]:
        """Fetch audio and manual subtitles; return ``{"audio": path, "subtitles": path}``."""


class FixtureVideoSearcher(VideoSearcher):
    """Search results from a JSONL fixture: ``{"term": str, "video_ids": [str]}``."""

    def __init__(self, path: str):
        self.results: Dict[str, List[str]] = {}
        for row in read_jsonl(path):
            key = normalize_term(str(row["term"]))
            self.results.setdefault(key, []).extend(str(v) for v in row.get("video_ids", []))

    def search(self, term: SearchTerm, max_results: int) -> List[str]:
        return self.results.get(term.term_id, [])[:max_results]


class FixtureSubtitleLookup(SubtitleLookup):
    """Video metadata from a ``videos.jsonl``-shaped fixture."""

    def __init__(self, path: str):
        self.records = {str(row["video_id"]): row for row in read_jsonl(path)}

    def lookup(self, video_id: str) -> Dict:
        if video_id not in self.records:
            raise CatalogError(f"no metadata for video {video_id}")
        return self.records[video_id]


class FixtureDownloader(Downloader):
    """Resolves files already present in a local fixture directory."""

    def __init__(self, audio_dir: str, subtitle_dir: str):
        self.audio_dir = audio_dir
        self.subtitle_dir = subtitle_dir

    def fetch(self, video_id: str, dest_dir: str) -> Dict[str, str]:
        audio = os.path.join(self.audio_dir, f"{video_id}.wav")
        if not os.path.exists(audio):
            raise CatalogError(f"no audio for video {video_id}")
        found = {"audio": audio}
        for suffix in Config.SUBTITLE_SUFFIXES:
            path = os.path.join(self.subtitle_dir, f"{video_id}{suffix}")
            if os.path.exists(path):
                found["subtitles"] = path
                break
        return found


def collect(catalog: Catalog, searcher: VideoSearcher, lookup: SubtitleLookup,
            max_results: int = Config.MAX_SEARCH_RESULTS) -> Dict[str, int]:
    """Run every catalog term through the searcher and metadata lookup; returns hits per term id."""
    hits: Dict[str, int] = {}
    for term in catalog.terms:
        video_ids = searcher.search(term, max_results)
        hits[term.term_id] = len(video_ids)
        for video_id in video_ids:
            try:
                info = lookup.lookup(video_id)
            except CatalogError as e:
                logger.warning(f"Metadata lookup failed for {video_id}: {e}")
                continue
            record = VideoRecord.from_dict({**info, "video_id": video_id, "found_by": [term.term_id]})
            catalog.upsert_video(record)
    logger.info(f"Collected {len(catalog)} videos from {len(hits)} search terms")
    return hits
