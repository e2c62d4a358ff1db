"""Block-partitioned inference for audio too long for one model pass.

Audio is cut into cores of a nominal length, each core is inferred with
context padding on both sides, and the padding frames are dropped before
the posteriors are concatenated.
"""

import hashlib
import math
import os
import shutil
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np
import soundfile as sf
from scipy.special import log_softmax

from .config import Config
from .ctcseg import PosteriorMatrix
from .exceptions import AudioFormatError, ChunkingError
from .logging_setup import logger, timing_context
from .utils import run_bounded, safe_file_operation


class ModelAdapter(ABC):
    """Frame-synchronous acoustic model producing CTC log-posteriors."""

    samples_per_frame: int = Config.SAMPLES_PER_FRAME
    sample_rate_hz: int = Config.SAMPLE_RATE_HZ
    receptive_field_samples: int = 0

    @property
    @abstractmethod
    def vocab_size(self) -> int:
        ...

    @abstractmethod
    def infer(self, samples: np.ndarray) -> PosteriorMatrix:
        """Return ``floor(len(samples) / samples_per_frame)`` rows of log-probs."""


class ToyModel(ModelAdapter):
    """Deterministic stand-in for a neural model.

    Frame ``f`` covers samples ``[f*r, (f+1)*r)``; its row depends only on
    the samples within ``window_samples`` of that span, hashed with blake2b.
    """

    _LOGIT_SCALE = 1.0 / 32.0

    def __init__(self, vocab: Union[int, Sequence[str]], window_samples: int,
                 samples_per_frame: int = Config.SAMPLES_PER_FRAME,
                 sample_rate_hz: int = Config.SAMPLE_RATE_HZ):
        self._vocab_size = vocab if isinstance(vocab, int) else len(vocab)
        if self._vocab_size < 2:
            raise ChunkingError("toy model needs a vocabulary of at least 2 tokens")
        if window_samples < 0 or samples_per_frame < 1:
            raise ChunkingError("window_samples must be >= 0 and samples_per_frame >= 1")
        self.receptive_field_samples = int(window_samples)
        self.samples_per_frame = int(samples_per_frame)
        self.sample_rate_hz = int(sample_rate_hz)

    @property
    def vocab_size(self) -> int:
        return self._vocab_size

    def _frame_logits(self, window: bytes) -> np.ndarray:
        n_bytes = self._vocab_size
        chunks = []
        counter = 0
        while n_bytes > 0:
            digest = hashlib.blake2b(window, digest_size=64, salt=counter.to_bytes(16, "little")).digest()
            chunks.append(digest[:n_bytes])
            n_bytes -= len(digest)
            counter += 1
        raw = np.frombuffer(b"".join(chunks), dtype=np.uint8)
        return raw.astype(np.float64) * self._LOGIT_SCALE

    def infer(self, samples: np.ndarray) -> PosteriorMatrix:
        audio = np.ascontiguousarray(samples, dtype="<f4")
        r = self.samples_per_frame
        w = self.receptive_field_samples
        n_frames = audio.shape[0] // r
        logits = np.empty((n_frames, self._vocab_size), dtype=np.float64)
        for f in range(n_frames):
            lo = max(f * r - w, 0)
            hi = min((f + 1) * r + w, audio.shape[0])
            logits[f] = self._frame_logits(audio[lo:hi].tobytes())
        logp = log_softmax(logits, axis=1) if n_frames else logits
        return PosteriorMatrix(logp, self.samples_per_frame, self.sample_rate_hz)


def toy_model(vocab: Union[int, Sequence[str]], window_samples: int,
              samples_per_frame: int = Config.SAMPLES_PER_FRAME,
              sample_rate_hz: int = Config.SAMPLE_RATE_HZ) -> ToyModel:
    return ToyModel(vocab, window_samples, samples_per_frame, sample_rate_hz)


@dataclass
class ChunkConfig:
    max_block_s: float = Config.MAX_BLOCK_S
    min_overlap_ms: float = Config.MIN_OVERLAP_MS
    sample_rate_hz: int = Config.SAMPLE_RATE_HZ
    last_block_slack: float = Config.LAST_BLOCK_SLACK
    parallelism: int = 1

    def validate(self, samples_per_frame: int) -> "ChunkConfig":
        if self.min_overlap_ms < 0:
            raise ChunkingError("min_overlap_ms must be >= 0")
        if self.max_block_s * self.sample_rate_hz < samples_per_frame:
            raise ChunkingError("max_block_s is shorter than one frame")
        if self.last_block_slack < 1.0:
            raise ChunkingError("last_block_slack must be >= 1.0")
        if self.parallelism < 1:
            raise ChunkingError("parallelism must be >= 1")
        return self


@dataclass(frozen=True)
class Block:
    core_start: int
    core_end: int
    left_pad: int
    right_pad: int

    @property
    def input_start(self) -> int:
        return self.core_start - self.left_pad

    @property
    def input_end(self) -> int:
        return self.core_end + self.right_pad

    @property
    def core_length(self) -> int:
        return self.core_end - self.core_start


@dataclass
class BlockPlan:
    total_samples: int
    samples_per_frame: int
    nominal_samples: int
    pad_samples: int
    blocks: List[Block] = field(default_factory=list)

    @property
    def usable_samples(self) -> int:
        return (self.total_samples // self.samples_per_frame) * self.samples_per_frame

    @property
    def n_frames(self) -> int:
        return self.total_samples // self.samples_per_frame

    def __len__(self):
        return len(self.blocks)


def plan_blocks(total_samples: int, samples_per_frame: int, cfg: ChunkConfig) -> BlockPlan:
    """Partition ``[0, floor(total/r)*r)`` into frame-aligned cores.

    Cores are ``nominal`` long; a trailing remainder is merged into the last
    core when that keeps it within ``last_block_slack`` of nominal, otherwise
    it becomes a core of its own. Pads are ``min_overlap`` rounded up to whole
    frames, clipped at the file edges; the right edge clips to the true file
    end so trailing sub-frame samples stay visible as context.
    """
    r = samples_per_frame
    if total_samples < r:
        raise ChunkingError(f"audio shorter than one frame ({total_samples} < {r} samples)")
    cfg.validate(r)

    nominal = int(math.floor(cfg.max_block_s * cfg.sample_rate_hz / r)) * r
    pad = int(math.ceil(cfg.min_overlap_ms * cfg.sample_rate_hz / 1000.0 / r)) * r
    usable = (total_samples // r) * r

    n_full, remainder = divmod(usable, nominal)
    bounds = [(i * nominal, (i + 1) * nominal) for i in range(n_full)]
    if remainder:
        if bounds and remainder <= (cfg.last_block_slack - 1.0) * nominal + 1e-9:
            start, _ = bounds[-1]
            bounds[-1] = (start, usable)
        else:
            bounds.append((n_full * nominal, usable))

    blocks = [
        Block(core_start=start, core_end=end,
              left_pad=min(pad, start), right_pad=min(pad, total_samples - end))
        for start, end in bounds
    ]
    return BlockPlan(total_samples=total_samples, samples_per_frame=r,
                     nominal_samples=nominal, pad_samples=pad, blocks=blocks)


def direct_inference(samples: np.ndarray, model: ModelAdapter) -> PosteriorMatrix:
    return model.infer(np.asarray(samples))


def infer_long(samples: np.ndarray, model: ModelAdapter, cfg: ChunkConfig) -> PosteriorMatrix:
    samples = np.asarray(samples)
    r = model.samples_per_frame
    plan = plan_blocks(samples.shape[0], r, cfg)
    logger.debug(f"Inferring {samples.shape[0]} samples in {len(plan)} blocks "
                 f"(nominal {plan.nominal_samples}, pad {plan.pad_samples})")

    def run_block(index: int) -> np.ndarray:
        block = plan.blocks[index]
        segment = samples[block.input_start:block.input_end]
        posteriors = model.infer(segment)
        expected = (segment.shape[0] // r, model.vocab_size)
        if posteriors.logp.shape != expected:
            raise ChunkingError(f"block {index}: model returned shape {posteriors.logp.shape}, "
                                f"expected {expected}")
        first = block.left_pad // r
        return posteriors.logp[first:first + block.core_length // r]

    with timing_context("infer_long"):
        results = run_bounded(range(len(plan)), run_block, cfg.parallelism)

    parts = []
    for index, result in enumerate(results):
        if isinstance(result, ChunkingError):
            raise result
        if isinstance(result, Exception):
            raise ChunkingError(f"block {index}: inference failed: {result}") from result
        parts.append(result)

    logp = np.concatenate(parts, axis=0)
    if logp.shape[0] != plan.n_frames:
        raise ChunkingError(f"stitched {logp.shape[0]} frames, expected {plan.n_frames}")
    return PosteriorMatrix(logp, r, model.sample_rate_hz)


def read_wav(path: str) -> np.ndarray:
    """Read a PCM16 mono 16 kHz WAV as float32 samples in ``[-1, 1)``."""
    try:
        info = sf.info(path)
    except RuntimeError as e:
        raise AudioFormatError(f"{path}: cannot read audio: {e}") from e
    problems = []
    if info.samplerate != Config.SAMPLE_RATE_HZ:
        problems.append(f"sample rate {info.samplerate} Hz (need {Config.SAMPLE_RATE_HZ})")
    if info.channels != Config.AUDIO_CHANNELS:
        problems.append(f"{info.channels} channels (need mono)")
    if info.subtype != Config.AUDIO_SUBTYPE:
        problems.append(f"subtype {info.subtype} (need {Config.AUDIO_SUBTYPE})")
    if problems:
        raise AudioFormatError(f"{path}: unsupported audio: " + ", ".join(problems))
    samples, _ = sf.read(path, dtype="float32", always_2d=False)
    return samples


def write_wav(path: str, samples: np.ndarray, sample_rate_hz: int = Config.SAMPLE_RATE_HZ):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    temp_file = path + ".tmp"

    def save_operation():
        sf.write(temp_file, np.asarray(samples, dtype=np.float32), sample_rate_hz,
                 subtype=Config.AUDIO_SUBTYPE, format="WAV")
        shutil.move(temp_file, path)

    try:
        safe_file_operation(save_operation)
    finally:
        if os.path.exists(temp_file):
            os.remove(temp_file)
