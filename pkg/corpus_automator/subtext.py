"""Subtitle parsing, text normalization toward the model token set, and
detection of machine-generated (rolling) caption tracks."""

import html
import itertools
import re
import unicodedata
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import Levenshtein
from num2words import num2words

from .config import Config
from .exceptions import FormatError, SubtitleParseError
from .logging_setup import logger

RE_TAGS = re.compile(r"<[^>]*>")
RE_TIMING = re.compile(
    r"^\s*(?P<start>(?:\d+:)?\d{1,2}:\d{2}[.,]\d{1,3})\s*-->\s*"
    r"(?P<end>(?:\d+:)?\d{1,2}:\d{2}[.,]\d{1,3})(?:\s+.*)?$"
)
RE_SPACES = re.compile(r"\s+")


class SubtitleSource(str, Enum):
    MANUAL = "manual"
    AUTO = "auto"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Cue:
    text: str
    start_s: float
    end_s: float


@dataclass
class SubtitleTrack:
    cues: List[Cue] = field(default_factory=list)
    source: SubtitleSource = SubtitleSource.UNKNOWN

    def __len__(self):
        return len(self.cues)


def parse_timestamp(value: str) -> float:
    """``[hh:]mm:ss.mmm`` (``,`` also accepted as decimal mark) to seconds."""
    value = value.strip().replace(",", ".")
    parts = value.split(":")
    seconds = float(parts[-1])
    minutes = int(parts[-2]) if len(parts) >= 2 else 0
    hours = int(parts[-3]) if len(parts) >= 3 else 0
    return hours * 3600 + minutes * 60 + seconds


def format_timestamp(seconds: float, decimal_mark: str = ".") -> str:
    total_ms = int(round(seconds * 1000))
    hours, rem = divmod(total_ms, 3_600_000)
    minutes, rem = divmod(rem, 60_000)
    secs, ms = divmod(rem, 1000)
    return f"{hours:02d}:{minutes:02d}:{secs:02d}{decimal_mark}{ms:03d}"


def strip_markup(text: str) -> str:
    """Drop inline tags (styling, karaoke timestamps) and unescape entities."""
    text = RE_TAGS.sub("", text)
    text = html.unescape(text)
    return RE_SPACES.sub(" ", text).strip()


def normalize_cues(cues: Sequence[Cue]) -> List[Cue]:
    """Sort by start, clip each cue to end where the next begins, drop empties."""
    ordered = sorted(cues, key=lambda c: (c.start_s, c.end_s))
    result: List[Cue] = []
    for i, cue in enumerate(ordered):
        end_s = cue.end_s
        if i + 1 < len(ordered):
            end_s = min(end_s, ordered[i + 1].start_s)
        text = cue.text.strip()
        if end_s <= cue.start_s or not text:
            continue
        result.append(Cue(text=text, start_s=cue.start_s, end_s=end_s))
    return result


def _split_blocks(lines: List[str]) -> List[List[Tuple[int, str]]]:
    """Group lines into blank-line separated blocks of ``(line_no, text)``."""
    blocks: List[List[Tuple[int, str]]] = []
    current: List[Tuple[int, str]] = []
    for line_no, line in enumerate(lines, start=1):
        if line.strip():
            current.append((line_no, line.rstrip()))
        elif current:
            blocks.append(current)
            current = []
    if current:
        blocks.append(current)
    return blocks


def _cue_from_block(block: List[Tuple[int, str]], timing_index: int) -> Optional[Cue]:
    line_no, timing_line = block[timing_index]
    match = RE_TIMING.match(timing_line)
    if not match:
        raise SubtitleParseError(f"malformed timestamp line: {timing_line!r}", line_no)
    start_s = parse_timestamp(match.group("start"))
    end_s = parse_timestamp(match.group("end"))
    text = strip_markup(" ".join(line for _, line in block[timing_index + 1:]))
    if not text:
        return None
    return Cue(text=text, start_s=start_s, end_s=end_s)


def _parse_srt(lines: List[str]) -> List[Cue]:
    cues = []
    for block in _split_blocks(lines):
        # Index line is optional in practice; the timing line must come first or second
        timing_index = 0 if "-->" in block[0][1] else 1
        if timing_index >= len(block) or "-->" not in block[timing_index][1]:
            line_no = block[min(timing_index, len(block) - 1)][0]
            raise SubtitleParseError("expected a timestamp line", line_no)
        cue = _cue_from_block(block, timing_index)
        if cue is not None:
            cues.append(cue)
    return cues


def _parse_vtt(lines: List[str]) -> List[Cue]:
    blocks = _split_blocks(lines)
    if blocks and blocks[0][0][1].startswith("WEBVTT"):
        blocks = blocks[1:]
    cues = []
    for block in blocks:
        head = block[0][1]
        if head.startswith(("NOTE", "STYLE", "REGION")):
            continue
        timing_index = next((i for i, (_, line) in enumerate(block) if "-->" in line), None)
        if timing_index is None:
            raise SubtitleParseError("cue block without a timestamp line", block[0][0])
        if timing_index > 1:
            raise SubtitleParseError("unexpected text before timestamp line", block[1][0])
        cue = _cue_from_block(block, timing_index)
        if cue is not None:
            cues.append(cue)
    return cues


def detect_format(path: str) -> str:
    lowered = path.lower()
    for suffix in Config.SUBTITLE_SUFFIXES:
        if lowered.endswith(suffix):
            return suffix[1:]
    raise FormatError(f"unknown subtitle format: {path}")


def parse_track(data: bytes, fmt: str, source: SubtitleSource = SubtitleSource.UNKNOWN) -> SubtitleTrack:
    """Parse SRT or WebVTT bytes into a normalized track.

    Raises SubtitleParseError naming the line of a malformed timestamp.
    """
    try:
        content = data.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise SubtitleParseError(f"subtitle file is not UTF-8: {e}") from e
    lines = content.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    if not content.strip():
        return SubtitleTrack(cues=[], source=source)

    if fmt == "srt":
        cues = _parse_srt(lines)
    elif fmt == "vtt":
        cues = _parse_vtt(lines)
    else:
        raise FormatError(f"unsupported subtitle format: {fmt}")
    return SubtitleTrack(cues=normalize_cues(cues), source=source)


def read_track(path: str, source: SubtitleSource = SubtitleSource.UNKNOWN) -> SubtitleTrack:
    with open(path, "rb") as f:
        return parse_track(f.read(), detect_format(path), source)


def serialize_track(track: SubtitleTrack, fmt: str = "vtt") -> str:
    """Write cues back out; ``&``, ``<`` and ``>`` are escaped so parsing restores the text."""
    out: List[str] = []
    if fmt == "vtt":
        out.append("WEBVTT\n")
        for cue in track.cues:
            text = html.escape(cue.text, quote=False)
            out.append(f"{format_timestamp(cue.start_s)} --> {format_timestamp(cue.end_s)}\n{text}\n")
    elif fmt == "srt":
        for i, cue in enumerate(track.cues, start=1):
            text = html.escape(cue.text, quote=False)
            out.append(f"{i}\n{format_timestamp(cue.start_s, ',')} --> "
                       f"{format_timestamp(cue.end_s, ',')}\n{text}\n")
    else:
        raise FormatError(f"unsupported subtitle format: {fmt}")
    return "\n".join(out)


class Verbalizer(ABC):
    """Expands digits to their spoken form for one language."""

    language: str = "und"

    @abstractmethod
    def verbalize(self, text: str) -> str:
        """Return text without any decimal digit characters."""


class Num2WordsVerbalizer(Verbalizer):
    """Spells numbers with num2words.

    ``1,000`` is a grouped integer and ``3.5`` a decimal under the default
    marks; languages writing ``3,5`` pass ``decimal_mark=","`` and
    ``group_mark="."``.
    """

    def __init__(self, language: str = "en", decimal_mark: str = ".", group_mark: str = ","):
        if decimal_mark == group_mark:
            raise ValueError("decimal and group marks must differ")
        self.language = language
        self.decimal_mark = decimal_mark
        self.group_mark = group_mark
        group, dec = re.escape(group_mark), re.escape(decimal_mark)
        self.number_pattern = re.compile(rf"(?:\d{{1,3}}(?:{group}\d{{3}})+|\d+)(?:{dec}\d+)?")

    def _spell(self, match: re.Match) -> str:
        token = match.group(0).replace(self.group_mark, "")
        try:
            if self.decimal_mark in token:
                value = float(token.replace(self.decimal_mark, "."))
            else:
                value = int(token)
            return f" {num2words(value, lang=self.language)} "
        except (NotImplementedError, OverflowError, ValueError):
            return " " + " ".join(num2words(int(d), lang=self.language) for d in token if d.isdigit()) + " "

    def verbalize(self, text: str) -> str:
        spoken = self.number_pattern.sub(self._spell, text)
        # Any digit num2words could not cover (e.g. non-ASCII digits) is spelled one by one
        spoken = "".join(
            f" {num2words(unicodedata.digit(ch), lang=self.language)} " if ch.isdecimal() else ch
            for ch in spoken
        )
        return RE_SPACES.sub(" ", spoken).strip()


def load_charmap(path: str) -> Dict[str, str]:
    """Read ``from<TAB>to`` lines; chains are resolved so mapping is idempotent."""
    raw: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or len(parts[0]) != 1:
                raise FormatError(f"{path}:{line_no}: expected 'char<TAB>replacement'")
            raw[parts[0]] = parts[1]
    return resolve_charmap(raw)


def resolve_charmap(raw: Dict[str, str]) -> Dict[str, str]:
    resolved: Dict[str, str] = {}
    for src in raw:
        seen = {src}
        value = raw[src]
        while True:
            mapped = "".join(raw.get(ch, ch) for ch in value)
            if mapped == value:
                break
            if mapped in seen:
                raise FormatError(f"charmap cycle through {src!r}")
            seen.add(mapped)
            value = mapped
        resolved[src] = value
    return resolved


class TokenTable:
    """Model token inventory; index 0 is the blank."""

    def __init__(self, tokens: Sequence[str], blank_id: int = Config.BLANK_ID):
        self.tokens = list(tokens)
        self.blank_id = blank_id
        self.index = {tok: i for i, tok in enumerate(self.tokens) if i != blank_id}
        if "<space>" in self.index and " " not in self.index:
            self.index[" "] = self.index["<space>"]

    @classmethod
    def load(cls, path: str, blank_id: int = Config.BLANK_ID) -> "TokenTable":
        with open(path, "r", encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f]
        while tokens and tokens[-1] == "":
            tokens.pop()
        if len(tokens) < 2:
            raise FormatError(f"token list {path} needs a blank and at least one token")
        return cls(tokens, blank_id)

    def __len__(self):
        return len(self.tokens)

    def contains(self, ch: str) -> bool:
        return ch in self.index

    def encode(self, text: str) -> List[int]:
        return [self.index[ch] for ch in text if ch in self.index]


def normalize_text(text: str, verbalizer: Optional[Verbalizer] = None,
                   charmap: Optional[Dict[str, str]] = None,
                   token_table: Optional[TokenTable] = None) -> Tuple[str, List[str]]:
    """Verbalize digits, map characters, and report characters the model lacks.

    Expects plain cue text (``parse_track`` already removed markup).
    Returns ``(text, unknown_chars)``; unknown characters stay in the text.
    Whitespace is a separator and never reported.
    """
    text = unicodedata.normalize("NFC", text)
    if charmap:
        text = "".join(charmap.get(ch, ch) for ch in text)
    if verbalizer is not None:
        text = verbalizer.verbalize(text)
        if charmap:
            text = "".join(charmap.get(ch, ch) for ch in text)
    text = RE_SPACES.sub(" ", text).strip()

    unknown: List[str] = []
    if token_table is not None:
        unknown = sorted({ch for ch in text if not ch.isspace() and not token_table.contains(ch)})
    return text, unknown


def relative_levenshtein(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return Levenshtein.distance(a, b) / longest


@dataclass(frozen=True)
class AutoDetection:
    is_auto: bool
    mean_rel_lev: Optional[float]


def detect_auto_track(track: SubtitleTrack, threshold: float = Config.AUTO_SUB_THRESHOLD,
                      pairing: str = "adjacent") -> AutoDetection:
    """Rolling captions repeat the previous cue's text, pulling the mean distance toward 0."""
    texts = [cue.text for cue in track.cues]
    if len(texts) < 2:
        return AutoDetection(is_auto=False, mean_rel_lev=None)
    if pairing == "adjacent":
        pairs = zip(texts, texts[1:])
    elif pairing == "all":
        pairs = itertools.combinations(texts, 2)
    else:
        raise ValueError(f"unknown pairing: {pairing}")
    distances = [relative_levenshtein(a, b) for a, b in pairs]
    mean = sum(distances) / len(distances)
    logger.debug(f"Auto-subtitle check: mean relative distance {mean:.3f} over {len(distances)} pairs")
    return AutoDetection(is_auto=mean < threshold, mean_rel_lev=mean)
