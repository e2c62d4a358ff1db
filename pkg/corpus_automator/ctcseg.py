"""CTC segmentation: best-path trellis over the ground-truth tokens of all
utterances in one audio file, backtracking for timings, and windowed
confidence scores used to clean the corpus.

Unreachable states and impossible log-probabilities are carried as
``LOG_ZERO`` (-1e30) rather than ``-inf`` so no arithmetic produces NaN.
"""

import math
import struct
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp

from .config import Config
from .exceptions import AlignmentError, FormatError, UnalignableError
from .logging_setup import logger
from .subtext import TokenTable
from .utils import atomic_write_bytes, iter_jsonl, write_jsonl

LOG_ZERO = Config.LOG_ZERO

STAY = 0
ADVANCE = 1
WAIT = 2

_CTCP_HEADER = struct.Struct("<4sIIIII")


@dataclass
class PosteriorMatrix:
    logp: np.ndarray
    samples_per_frame: int = Config.SAMPLES_PER_FRAME
    sample_rate_hz: int = Config.SAMPLE_RATE_HZ

    def __post_init__(self):
        self.logp = np.asarray(self.logp, dtype=np.float64)

    @property
    def n_frames(self) -> int:
        return int(self.logp.shape[0])

    @property
    def vocab_size(self) -> int:
        return int(self.logp.shape[1])

    @property
    def frame_duration_s(self) -> float:
        return self.samples_per_frame / self.sample_rate_hz

    @property
    def duration_s(self) -> float:
        return self.n_frames * self.frame_duration_s

    def frame_to_seconds(self, frame: int) -> float:
        return frame * self.samples_per_frame / self.sample_rate_hz

    def validate(self, check_normalized: bool = True, atol: float = 1e-4) -> "PosteriorMatrix":
        """Reject NaN and malformed shapes, clamp ``-inf`` to ``LOG_ZERO``."""
        if self.logp.ndim != 2:
            raise AlignmentError(f"posteriors must be 2-D, got shape {self.logp.shape}")
        if self.n_frames < 1 or self.vocab_size < 2:
            raise AlignmentError(f"posteriors need T >= 1 and V >= 2, got {self.logp.shape}")
        if self.samples_per_frame < 1 or self.sample_rate_hz < 1:
            raise AlignmentError("samples_per_frame and sample_rate_hz must be positive")
        if np.isnan(self.logp).any():
            raise AlignmentError("posteriors contain NaN")
        if np.isposinf(self.logp).any() or (self.logp > atol).any():
            raise AlignmentError("log-probabilities must be <= 0")
        self.logp = np.maximum(self.logp, LOG_ZERO)
        if check_normalized:
            row_sums = logsumexp(self.logp, axis=1)
            worst = float(np.max(np.abs(row_sums)))
            if worst > atol:
                raise AlignmentError(f"posterior rows are not normalized (max |logsumexp| = {worst:.2e})")
        return self

    def slice(self, start_frame: int, end_frame: int) -> "PosteriorMatrix":
        return PosteriorMatrix(self.logp[start_frame:end_frame], self.samples_per_frame, self.sample_rate_hz)


@dataclass(frozen=True)
class UtteranceText:
    tokens: Tuple[int, ...]
    text: str = ""
    utterance_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))

    def __len__(self):
        return len(self.tokens)


@dataclass
class Trellis:
    q: np.ndarray
    backpointers: np.ndarray
    boundary_set: frozenset
    tokens: np.ndarray
    blank_id: int = Config.BLANK_ID

    @property
    def n_tokens(self) -> int:
        return int(self.tokens.shape[0])


@dataclass
class AlignedUtterance:
    utterance_index: int
    start_frame: int
    end_frame: int
    start_s: float
    end_s: float
    score: Optional[float] = None
    text: str = ""
    path_logprobs: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> Dict:
        return {
            "utt_index": self.utterance_index,
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "score": self.score,
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "AlignedUtterance":
        return cls(
            utterance_index=int(data["utt_index"]),
            start_frame=int(data.get("start_frame", -1)),
            end_frame=int(data.get("end_frame", -1)),
            start_s=float(data["start_s"]),
            end_s=float(data["end_s"]),
            score=None if data.get("score") is None else float(data["score"]),
            text=str(data.get("text", "")),
        )


@dataclass
class ScoreConfig:
    window_frames: int = Config.WINDOW_FRAMES
    blank_id: int = Config.BLANK_ID
    theta: Optional[float] = None

    def validate(self) -> "ScoreConfig":
        if self.window_frames < 1:
            raise AlignmentError("window_frames must be >= 1")
        if self.blank_id < 0:
            raise AlignmentError("blank_id must be >= 0")
        return self


def _concatenate_tokens(utts: Sequence[UtteranceText], vocab_size: int,
                        blank_id: int) -> Tuple[np.ndarray, frozenset]:
    tokens: List[int] = []
    boundaries = {0}
    for utt in utts:
        if len(utt.tokens) == 0:
            raise AlignmentError(f"utterance {utt.utterance_index} has no tokens")
        for tok in utt.tokens:
            if tok == blank_id:
                raise AlignmentError(f"utterance {utt.utterance_index} contains the blank token")
            if not 0 <= tok < vocab_size:
                raise AlignmentError(f"utterance {utt.utterance_index}: token {tok} outside vocabulary")
        tokens.extend(utt.tokens)
        boundaries.add(len(tokens))
    return np.asarray(tokens, dtype=np.int64), frozenset(boundaries)


def build_trellis(posteriors: PosteriorMatrix, utts: Sequence[UtteranceText],
                  blank_id: int = Config.BLANK_ID) -> Trellis:
    """Forward pass over the concatenated tokens of every utterance.

    Row ``t`` consumes frame ``t-1``. Column ``j`` means ``j`` tokens have
    been emitted. At index 0 and at the last token of each utterance the
    path may also wait at no cost, so audio between utterances is free.
    """
    logp = posteriors.logp
    n_frames = posteriors.n_frames
    tokens, boundary_set = _concatenate_tokens(utts, posteriors.vocab_size, blank_id)
    n_tokens = tokens.shape[0]
    if n_tokens == 0:
        raise AlignmentError("cannot build a trellis without tokens")

    q = np.full((n_frames + 1, n_tokens + 1), LOG_ZERO, dtype=np.float64)
    backpointers = np.zeros((n_frames + 1, n_tokens + 1), dtype=np.int8)
    q[0, 0] = 0.0

    is_boundary = np.zeros(n_tokens + 1, dtype=bool)
    is_boundary[list(boundary_set)] = True

    for t in range(1, n_frames + 1):
        row = logp[t - 1]
        emit = row[tokens]
        stay = q[t - 1, 1:] + np.maximum(row[blank_id], emit)
        advance = q[t - 1, :-1] + emit

        take_advance = advance >= stay
        q[t, 1:] = np.where(take_advance, advance, stay)
        backpointers[t, 1:] = np.where(take_advance, ADVANCE, STAY)

        q[t, 0] = q[t - 1, 0]
        backpointers[t, 0] = WAIT
        wait = q[t - 1] > q[t]
        wait &= is_boundary
        q[t, wait] = q[t - 1, wait]
        backpointers[t, wait] = WAIT

        np.maximum(q[t], LOG_ZERO, out=q[t])

    return Trellis(q=q, backpointers=backpointers, boundary_set=boundary_set, tokens=tokens, blank_id=blank_id)


def _trace(trellis: Trellis, posteriors: PosteriorMatrix) -> Tuple[np.ndarray, np.ndarray]:
    """Follow backpointers from the best end anchor.

    Returns the frame of every token and the per-frame log-prob of the move
    taken on the path (zero for free waits and frames after the anchor).
    """
    q = trellis.q
    n_tokens = trellis.n_tokens
    final = q[1:, n_tokens]
    if final.max() <= LOG_ZERO:
        raise UnalignableError("unalignable: no path emits every token")
    t = int(np.argmax(final)) + 1

    logp = posteriors.logp
    token_frames = np.full(n_tokens, -1, dtype=np.int64)
    frame_logprobs = np.zeros(posteriors.n_frames, dtype=np.float64)
    j = n_tokens
    while t > 0:
        move = trellis.backpointers[t, j]
        row = logp[t - 1]
        if move == ADVANCE:
            token_frames[j - 1] = t - 1
            frame_logprobs[t - 1] = row[trellis.tokens[j - 1]]
            j -= 1
        elif move == STAY:
            frame_logprobs[t - 1] = max(row[trellis.blank_id], row[trellis.tokens[j - 1]])
        t -= 1
    if j != 0:
        raise AlignmentError(f"backtracking ended at token {j}, trellis is inconsistent")
    return token_frames, frame_logprobs


def backtrack(trellis: Trellis, posteriors: PosteriorMatrix,
              utts: Sequence[UtteranceText]) -> List[AlignedUtterance]:
    """Timings for every utterance; scores are left unset."""
    token_frames, frame_logprobs = _trace(trellis, posteriors)
    result = []
    offset = 0
    for utt in utts:
        start_frame = int(token_frames[offset])
        end_frame = int(token_frames[offset + len(utt.tokens) - 1])
        offset += len(utt.tokens)
        result.append(AlignedUtterance(
            utterance_index=utt.utterance_index,
            start_frame=start_frame,
            end_frame=end_frame,
            start_s=posteriors.frame_to_seconds(start_frame),
            end_s=posteriors.frame_to_seconds(end_frame + 1),
            text=utt.text,
            path_logprobs=frame_logprobs[start_frame:end_frame + 1].copy(),
        ))
    return result


def window_score(path_logprobs: Sequence[float], window_frames: int = Config.WINDOW_FRAMES) -> float:
    """Lowest mean log-prob over any ``window_frames`` consecutive frames."""
    values = np.asarray(path_logprobs, dtype=np.float64)
    if values.size == 0:
        raise AlignmentError("cannot score an empty path")
    if window_frames < 1:
        raise AlignmentError("window_frames must be >= 1")
    if values.size <= window_frames:
        return float(values.mean())
    return float(sliding_window_view(values, window_frames).mean(axis=1).min())


def align(posteriors: PosteriorMatrix, utts: Sequence[UtteranceText],
          cfg: Optional[ScoreConfig] = None) -> List[AlignedUtterance]:
    cfg = (cfg or ScoreConfig()).validate()
    if not utts:
        return []
    posteriors.validate()
    trellis = build_trellis(posteriors, utts, cfg.blank_id)
    aligned = backtrack(trellis, posteriors, utts)
    for utt in aligned:
        utt.score = max(window_score(utt.path_logprobs, cfg.window_frames), LOG_ZERO)
    return aligned


def segment_frames(posteriors: PosteriorMatrix, start_s: float, end_s: float) -> Tuple[int, int]:
    """Frame range ``[start, end)`` covering a span given in seconds."""
    frames_per_s = posteriors.sample_rate_hz / posteriors.samples_per_frame
    start_frame = int(math.floor(start_s * frames_per_s + 1e-9))
    end_frame = int(math.ceil(end_s * frames_per_s - 1e-9))
    return max(start_frame, 0), min(end_frame, posteriors.n_frames)


def score_segment(posteriors: PosteriorMatrix, utt: UtteranceText, start_s: float, end_s: float,
                  cfg: Optional[ScoreConfig] = None) -> float:
    """Score one utterance inside fixed (subtitle-provided) timings, no padding."""
    cfg = cfg or ScoreConfig()
    if not (0 <= start_s < end_s) or end_s > posteriors.duration_s + 1e-6:
        raise AlignmentError(
            f"segment [{start_s}, {end_s}) outside audio of {posteriors.duration_s:.3f}s")
    start_frame, end_frame = segment_frames(posteriors, start_s, end_s)
    if end_frame - start_frame < len(utt.tokens):
        return LOG_ZERO
    try:
        aligned = align(posteriors.slice(start_frame, end_frame), [utt], cfg)
    except UnalignableError:
        return LOG_ZERO
    return aligned[0].score


def score_cues(posteriors: PosteriorMatrix, utts: Sequence[UtteranceText],
               spans: Sequence[Tuple[float, float]], cfg: Optional[ScoreConfig] = None) -> List[AlignedUtterance]:
    """Apply :func:`score_segment` to every utterance with its own timing."""
    result = []
    for utt, (start_s, end_s) in zip(utts, spans):
        end_s = min(end_s, posteriors.duration_s)
        if not 0 <= start_s < end_s:
            logger.warning(f"Utterance {utt.utterance_index} timing [{start_s}, {end_s}) outside audio")
            score = LOG_ZERO
        else:
            score = score_segment(posteriors, utt, start_s, end_s, cfg)
        start_frame, end_frame = segment_frames(posteriors, max(start_s, 0.0), max(end_s, 0.0))
        result.append(AlignedUtterance(
            utterance_index=utt.utterance_index,
            start_frame=start_frame,
            end_frame=max(end_frame - 1, start_frame),
            start_s=float(start_s),
            end_s=float(end_s),
            score=score,
            text=utt.text,
        ))
    return result


def filter_by_score(aligned: Iterable, theta: float) -> List:
    """Keep items whose ``score`` is strictly greater than ``theta``."""
    return [item for item in aligned if item.score is not None and item.score > theta]


def prepare_utterances(texts: Sequence[str], token_table: TokenTable,
                       indices: Optional[Sequence[int]] = None) -> Tuple[List[UtteranceText], List[int]]:
    """Encode texts; returns ``(utterances, skipped_indices)``."""
    utts: List[UtteranceText] = []
    skipped: List[int] = []
    for i, text in enumerate(texts):
        index = indices[i] if indices is not None else i
        tokens = token_table.encode(text)
        if not tokens:
            skipped.append(index)
            continue
        utts.append(UtteranceText(tokens=tuple(tokens), text=text, utterance_index=index))
    if skipped:
        logger.warning(f"Skipped {len(skipped)} utterances with no known tokens: {skipped}")
    return utts, skipped


def write_posteriors(path: str, posteriors: PosteriorMatrix):
    logp = np.ascontiguousarray(posteriors.logp, dtype="<f4")
    header = _CTCP_HEADER.pack(Config.POSTERIOR_MAGIC, Config.POSTERIOR_VERSION,
                               logp.shape[0], logp.shape[1],
                               posteriors.samples_per_frame, posteriors.sample_rate_hz)
    atomic_write_bytes(path, header + logp.tobytes())


def read_posteriors(path: str) -> PosteriorMatrix:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _CTCP_HEADER.size:
        raise FormatError(f"{path}: truncated posterior header")
    magic, version, n_frames, vocab, spf, rate = _CTCP_HEADER.unpack_from(data)
    if magic != Config.POSTERIOR_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != Config.POSTERIOR_VERSION:
        raise FormatError(f"{path}: unsupported posterior version {version}")
    expected = _CTCP_HEADER.size + n_frames * vocab * 4
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    logp = np.frombuffer(data, dtype="<f4", offset=_CTCP_HEADER.size).reshape(n_frames, vocab)
    return PosteriorMatrix(logp.astype(np.float64), samples_per_frame=spf, sample_rate_hz=rate)


def write_alignments(path: str, aligned: Iterable[AlignedUtterance]):
    write_jsonl(path, (a.to_dict() for a in aligned))


def read_alignments(path: str) -> List[AlignedUtterance]:
    result = []
    for line_no, row in iter_jsonl(path):
        try:
            result.append(AlignedUtterance.from_dict(row))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{path}:{line_no}: invalid alignment record: {e}") from e
    return result
