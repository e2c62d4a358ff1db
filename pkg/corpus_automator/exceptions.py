"""Exception types raised by the corpus construction modules."""

from typing import Iterable, List, Optional


class CorpusError(ValueError):
    """Base class for all corpus_automator errors."""


class ConfigError(CorpusError):
    """Invalid pipeline configuration; carries every field-level message."""

    def __init__(self, messages: Iterable[str]):
        self.messages: List[str] = list(messages)
        super().__init__("; ".join(self.messages) or "invalid configuration")


class CatalogError(CorpusError):
    pass


class SubtitleParseError(CorpusError):
    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class FormatError(CorpusError):
    """A binary or text artifact does not match its declared format."""


class AudioFormatError(FormatError):
    pass


class AlignmentError(CorpusError):
    pass


class UnalignableError(AlignmentError):
    """No monotone path emits every token: audio and text do not match."""


class ChunkingError(CorpusError):
    pass


class ManifestError(CorpusError):
    pass


class SpeakerFilterError(CorpusError):
    pass


class InsufficientDataError(SpeakerFilterError):
    pass
