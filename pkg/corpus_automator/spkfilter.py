"""Speaker-verification cleansing.

Per video: keep subtitle segments that are mainly speech, reduce the
utterance embeddings to 2-D and score their spread. Videos are classified
as TTS-like (no spread), single speaker or multi speaker; single-speaker
videos of one channel become one speaker. Trials and EER evaluate the
resulting corpus.
"""

import hashlib
import itertools
import json
import math
import os
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.decomposition import PCA
from sklearn.manifold import TSNE

from .config import Config
from .exceptions import FormatError, InsufficientDataError, SpeakerFilterError
from .logging_setup import logger
from .subtext import Cue
from .utils import atomic_write_bytes, atomic_write_text

_DVEC_HEADER = struct.Struct("<4sII")
_SILENCE_DB = -200.0


class VideoClass(str, Enum):
    TTS = "tts"
    SINGLE = "single"
    MULTI = "multi"
    UNDERSIZED = "undersized"


class TrialLabel(str, Enum):
    TARGET = "target"
    NONTARGET = "nontarget"


@dataclass
class VadConfig:
    frame_ms: float = Config.VAD_FRAME_MS
    hop_ms: float = Config.VAD_HOP_MS
    noise_floor_percentile: float = Config.VAD_NOISE_PERCENTILE
    margin_db: float = Config.VAD_MARGIN_DB
    hangover_frames: int = Config.VAD_HANGOVER_FRAMES
    speech_fraction_min: float = Config.VAD_SPEECH_FRACTION_MIN
    speech_floor_dbfs: float = Config.VAD_SPEECH_FLOOR_DBFS
    sample_rate_hz: int = Config.SAMPLE_RATE_HZ

    def frame_samples(self) -> int:
        return int(round(self.frame_ms * self.sample_rate_hz / 1000.0))

    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate_hz / 1000.0))

    def frame_center_s(self, index: np.ndarray) -> np.ndarray:
        return (index * self.hop_samples() + self.frame_samples() / 2.0) / self.sample_rate_hz


def frame_levels_db(samples: np.ndarray, cfg: VadConfig) -> np.ndarray:
    """Log-RMS level per analysis frame in dB relative to full scale."""
    samples = np.asarray(samples, dtype=np.float64)
    frame, hop = cfg.frame_samples(), cfg.hop_samples()
    if samples.shape[0] < frame:
        return np.empty(0, dtype=np.float64)
    frames = sliding_window_view(samples, frame)[::hop]
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    with np.errstate(divide="ignore"):
        levels = 20.0 * np.log10(rms)
    return np.maximum(levels, _SILENCE_DB)


def vad_mask(samples: np.ndarray, cfg: Optional[VadConfig] = None) -> np.ndarray:
    """Boolean voiced flag per frame.

    A frame is voiced when its level exceeds the noise-floor percentile plus
    the margin, capped at the absolute speech floor so steady loud signals
    count as voiced. Voiced runs are extended by ``hangover_frames``.
    """
    cfg = cfg or VadConfig()
    levels = frame_levels_db(samples, cfg)
    if levels.size == 0:
        return np.zeros(0, dtype=bool)
    threshold = min(float(np.percentile(levels, cfg.noise_floor_percentile)) + cfg.margin_db,
                    cfg.speech_floor_dbfs)
    voiced = levels > threshold
    if cfg.hangover_frames > 0:
        spread = np.convolve(voiced.astype(np.int64), np.ones(cfg.hangover_frames + 1, dtype=np.int64))
        voiced = spread[:levels.size] > 0
    return voiced


def retain_segments(cues: Sequence[Cue], mask: np.ndarray, cfg: Optional[VadConfig] = None,
                    audio_duration_s: Optional[float] = None) -> List[int]:
    """Indices of cues whose voiced-frame fraction is at least ``speech_fraction_min``.

    Frames are attributed to a cue by their center time.
    """
    cfg = cfg or VadConfig()
    mask = np.asarray(mask, dtype=bool)
    centers = cfg.frame_center_s(np.arange(mask.size))
    if audio_duration_s is None:
        audio_duration_s = ((mask.size - 1) * cfg.hop_samples() + cfg.frame_samples()) / cfg.sample_rate_hz \
            if mask.size else 0.0

    kept = []
    for index, cue in enumerate(cues):
        if cue.start_s < 0 or cue.end_s > audio_duration_s + 1e-6:
            logger.warning(f"Cue {index} [{cue.start_s:.2f}, {cue.end_s:.2f}) outside audio "
                           f"of {audio_duration_s:.2f}s, dropped")
            continue
        inside = (centers >= cue.start_s) & (centers < cue.end_s)
        n_frames = int(inside.sum())
        if n_frames == 0:
            logger.warning(f"Cue {index} covers no VAD frame, dropped")
            continue
        if mask[inside].sum() / n_frames >= cfg.speech_fraction_min:
            kept.append(index)
    return kept


@dataclass
class EmbeddingSet:
    video_id: str
    channel_id: str
    embeddings: np.ndarray
    utt_ids: List[str] = field(default_factory=list)

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim == 1:
            emb = emb.reshape(1, -1) if emb.size else emb.reshape(0, 0)
        if emb.ndim != 2:
            raise SpeakerFilterError(f"{self.video_id}: embeddings must be N x D, got shape {emb.shape}")
        norms = np.linalg.norm(emb, axis=1)
        if (norms == 0).any():
            raise SpeakerFilterError(f"{self.video_id}: zero-norm embedding")
        self.embeddings = emb / norms[:, None]
        if self.utt_ids and len(self.utt_ids) != self.embeddings.shape[0]:
            raise SpeakerFilterError(f"{self.video_id}: {len(self.utt_ids)} utt_ids for "
                                     f"{self.embeddings.shape[0]} embeddings")

    @property
    def n_utts(self) -> int:
        return int(self.embeddings.shape[0])

    def subset(self, indices: Sequence[int]) -> "EmbeddingSet":
        indices = list(indices)
        return EmbeddingSet(self.video_id, self.channel_id, self.embeddings[indices],
                            [self.utt_ids[i] for i in indices] if self.utt_ids else [])


def write_embeddings(path: str, embedding_set: EmbeddingSet):
    """``DVEC`` binary plus a JSON sidecar carrying the ids."""
    emb = np.ascontiguousarray(embedding_set.embeddings, dtype="<f4")
    n, d = emb.shape
    atomic_write_bytes(path, _DVEC_HEADER.pack(Config.EMBEDDING_MAGIC, n, d) + emb.tobytes())
    sidecar = {
        "video_id": embedding_set.video_id,
        "channel_id": embedding_set.channel_id,
        "utt_ids": list(embedding_set.utt_ids),
    }
    atomic_write_text(_sidecar_path(path), json.dumps(sidecar, ensure_ascii=False, sort_keys=True) + "\n")


def _sidecar_path(path: str) -> str:
    return os.path.splitext(path)[0] + Config.SIDECAR_SUFFIX


def read_embeddings(path: str) -> EmbeddingSet:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _DVEC_HEADER.size:
        raise FormatError(f"{path}: truncated embedding header")
    magic, n, d = _DVEC_HEADER.unpack_from(data)
    if magic != Config.EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _DVEC_HEADER.size + n * d * 4
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    emb = np.frombuffer(data, dtype="<f4", offset=_DVEC_HEADER.size).reshape(n, d).astype(np.float64)

    sidecar_path = _sidecar_path(path)
    if not os.path.exists(sidecar_path):
        raise FormatError(f"{path}: missing sidecar {sidecar_path}")
    with open(sidecar_path, "r", encoding="utf-8") as f:
        try:
            meta = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{sidecar_path}: invalid JSON: {e}") from e
    return EmbeddingSet(video_id=str(meta.get("video_id", "")),
                        channel_id=str(meta.get("channel_id", "") or ""),
                        embeddings=emb, utt_ids=[str(u) for u in meta.get("utt_ids", [])])


@dataclass
class ClassifyConfig:
    min_utts: int = Config.MIN_UTTS
    tau_low: float = Config.TAU_LOW
    tau_high: float = Config.TAU_HIGH
    reducer: str = "pca"
    pca_scale: float = Config.PCA_SCALE
    tsne_perplexity: float = Config.TSNE_PERPLEXITY
    tsne_iters: int = Config.TSNE_ITERS
    seed: int = Config.DEFAULT_SEED
    determinant_eps: float = Config.DETERMINANT_EPS

    def validate(self) -> "ClassifyConfig":
        errors = []
        if self.tau_low >= self.tau_high:
            errors.append("tau_low must be < tau_high")
        if self.reducer not in ("pca", "tsne"):
            errors.append(f"unknown reducer {self.reducer!r}")
        if self.min_utts < 0:
            errors.append("min_utts must be >= 0")
        if self.tsne_iters < 250:
            errors.append("tsne_iters must be >= 250")
        if errors:
            raise SpeakerFilterError("; ".join(errors))
        return self


@dataclass
class Reduction:
    points: np.ndarray
    reducer: str
    degenerate: bool = False


def _all_rows_identical(x: np.ndarray) -> bool:
    return bool(np.all(np.ptp(x, axis=0) <= 1e-12))


def reduce_2d(embeddings: np.ndarray, cfg: Optional[ClassifyConfig] = None) -> Reduction:
    cfg = cfg or ClassifyConfig()
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise InsufficientDataError(f"insufficient utterances: need >= 3, got {x.shape[0] if x.ndim else 0}")
    if x.shape[1] < 2:
        raise SpeakerFilterError("embeddings need at least 2 dimensions")
    if _all_rows_identical(x):
        return Reduction(points=np.zeros((x.shape[0], 2)), reducer=cfg.reducer, degenerate=True)

    if cfg.reducer == "pca":
        pca = PCA(n_components=2, svd_solver="full")
        points = pca.fit_transform(x)
        # Sign convention: the largest-magnitude loading of each axis is positive
        for k, loading in enumerate(pca.components_):
            if loading[np.argmax(np.abs(loading))] < 0:
                points[:, k] = -points[:, k]
        return Reduction(points=points * cfg.pca_scale, reducer="pca")

    perplexity = min(cfg.tsne_perplexity, (x.shape[0] - 1) / 3.0)
    tsne = TSNE(n_components=2, perplexity=perplexity, method="exact", max_iter=cfg.tsne_iters,
                init="pca", random_state=cfg.seed)
    return Reduction(points=tsne.fit_transform(x), reducer="tsne")


def variation_score(points: np.ndarray, eps: float = Config.DETERMINANT_EPS) -> float:
    """ln det of the unbiased 2x2 covariance; ``LOG_ZERO`` when (near) singular."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 3:
        raise InsufficientDataError("insufficient utterances: need >= 3 points")
    det = float(np.linalg.det(np.cov(points, rowvar=False, ddof=1)))
    if not det > eps:
        return Config.LOG_ZERO
    return math.log(det)


def classify_video(score: Optional[float], n_utts: int, cfg: Optional[ClassifyConfig] = None) -> VideoClass:
    cfg = cfg or ClassifyConfig()
    if n_utts <= cfg.min_utts or score is None:
        return VideoClass.UNDERSIZED
    if score < cfg.tau_low:
        return VideoClass.TTS
    if score <= cfg.tau_high:
        return VideoClass.SINGLE
    return VideoClass.MULTI


@dataclass
class VariationResult:
    video_id: str
    score: Optional[float]
    n_utts: int
    klass: VideoClass
    reducer: str
    channel_id: str = ""

    def to_dict(self) -> Dict:
        return {
            "video_id": self.video_id,
            "channel_id": self.channel_id,
            "score": self.score,
            "class": self.klass.value,
            "n_utts": self.n_utts,
            "reducer": self.reducer,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "VariationResult":
        return cls(video_id=str(data["video_id"]),
                   score=None if data.get("score") is None else float(data["score"]),
                   n_utts=int(data["n_utts"]), klass=VideoClass(data["class"]),
                   reducer=str(data.get("reducer", "pca")),
                   channel_id=str(data.get("channel_id", "") or ""))


def evaluate_video(embedding_set: EmbeddingSet, cfg: Optional[ClassifyConfig] = None) -> VariationResult:
    cfg = (cfg or ClassifyConfig()).validate()
    n_utts = embedding_set.n_utts
    score = None
    if n_utts >= 3:
        reduction = reduce_2d(embedding_set.embeddings, cfg)
        score = variation_score(reduction.points, cfg.determinant_eps)
        if reduction.degenerate:
            logger.debug(f"{embedding_set.video_id}: identical embeddings, degenerate reduction")
    klass = classify_video(score, n_utts, cfg)
    return VariationResult(video_id=embedding_set.video_id, score=score, n_utts=n_utts,
                           klass=klass, reducer=cfg.reducer, channel_id=embedding_set.channel_id)


def speaker_id_for_channel(channel_id: str) -> str:
    return "spk_" + hashlib.sha256(channel_id.encode("utf-8")).hexdigest()[:12]


def group_speakers(results: Iterable[VariationResult],
                   channels: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """Map single-speaker video ids to a speaker id derived from their channel."""
    channels = channels or {}
    speakers: Dict[str, str] = {}
    for result in results:
        if result.klass != VideoClass.SINGLE:
            continue
        channel_id = channels.get(result.video_id) or result.channel_id
        if not channel_id:
            logger.warning(f"Video {result.video_id} has no channel id, excluded from speakers")
            continue
        speakers[result.video_id] = speaker_id_for_channel(channel_id)
    return dict(sorted(speakers.items()))


def split_speakers(speaker_map: Mapping[str, str], n_test: int, seed: int = Config.DEFAULT_SEED
                   ) -> Tuple[List[str], List[str]]:
    """Disjoint ``(test_speakers, train_speakers)`` by a seeded draw."""
    speakers = sorted(set(speaker_map.values()))
    if not 0 <= n_test <= len(speakers):
        raise SpeakerFilterError(f"cannot pick {n_test} test speakers from {len(speakers)}")
    picks = np.random.default_rng(seed).choice(len(speakers), size=n_test, replace=False)
    test = sorted(speakers[i] for i in picks)
    test_set = set(test)
    return test, [s for s in speakers if s not in test_set]


@dataclass(frozen=True)
class Trial:
    enroll_utt_id: str
    test_utt_id: str
    label: TrialLabel

    def to_line(self) -> str:
        return f"{self.enroll_utt_id} {self.test_utt_id} {self.label.value}"


@dataclass
class TrialConfig:
    n_target: int = 0
    n_nontarget: int = 0
    seed: int = Config.DEFAULT_SEED


def _draw_pairs(pool_size: int, n_pairs: int, enumerate_pool: Callable[[], List[Tuple[int, int]]],
                draw: Callable[[int], Iterable[Tuple[int, int]]],
                rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Sorted distinct pairs from a pool of ``pool_size``.

    Pools at most twice the request are enumerated and subsampled. Larger
    ones are drawn from in batches with repeats redrawn, so memory follows
    ``n_pairs`` rather than the pool.
    """
    if n_pairs == 0:
        return []
    if 2 * n_pairs >= pool_size:
        pool = sorted((min(a, b), max(a, b)) for a, b in enumerate_pool())
        return [pool[i] for i in np.sort(rng.choice(len(pool), size=n_pairs, replace=False))]
    chosen = set()
    while len(chosen) < n_pairs:
        for a, b in draw(n_pairs - len(chosen)):
            chosen.add((min(a, b), max(a, b)))
    return sorted(chosen)


def _sample_within_pairs(groups: Sequence[np.ndarray], n_pairs: int,
                         rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Pairs ``(i, j)``, ``i < j``, drawn uniformly from members of the same group."""
    sizes = np.array([len(g) for g in groups], dtype=np.int64)
    counts = sizes * (sizes - 1) // 2

    def enumerate_pool():
        return [pair for g in groups for pair in itertools.combinations(g.tolist(), 2)]

    def draw(size):
        picked = rng.choice(len(groups), size=size, p=counts / counts.sum())
        a = rng.integers(0, sizes[picked])
        b = rng.integers(0, sizes[picked] - 1)
        b = np.where(b >= a, b + 1, b)
        return [(int(groups[g][x]), int(groups[g][y])) for g, x, y in zip(picked.tolist(), a.tolist(), b.tolist())]

    return _draw_pairs(int(counts.sum()), n_pairs, enumerate_pool, draw, rng)


def _sample_cross_pairs(groups: Sequence[np.ndarray], n_pairs: int,
                        rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Pairs ``(i, j)``, ``i < j``, drawn uniformly from members of different groups.

    The first member is drawn with weight equal to its number of cross-group
    partners and the second uniformly among those partners.
    """
    sizes = np.array([len(g) for g in groups], dtype=np.int64)
    total = int(sizes.sum())

    def enumerate_pool():
        return [(a, b) for g, h in itertools.combinations(range(len(groups)), 2)
                for a in groups[g].tolist() for b in groups[h].tolist()]

    def draw(size):
        members = np.concatenate(groups)
        group_of = np.repeat(np.arange(len(groups)), sizes)
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        weights = (total - sizes[group_of]).astype(np.float64)
        first = rng.choice(total, size=size, p=weights / weights.sum())
        g = group_of[first]
        # Skip over the first member's own group
        k = rng.integers(0, total - sizes[g])
        second = np.where(k < starts[g], k, k + sizes[g])
        return zip(members[first].tolist(), members[second].tolist())

    return _draw_pairs((total * total - int((sizes * sizes).sum())) // 2, n_pairs, enumerate_pool, draw, rng)


def make_trials(speakers: Mapping[str, str], utterances: Mapping[str, Sequence[str]],
                cfg: TrialConfig) -> List[Trial]:
    """Seeded target (same video) and nontarget (cross speaker) trials.

    ``speakers`` maps video id to speaker id; ``utterances`` maps video id to
    its utterance ids. Videos without a speaker are ignored.
    """
    videos = sorted(v for v in speakers if v in utterances)
    utt_ids: List[str] = []
    utt_speakers: List[str] = []
    video_groups: List[np.ndarray] = []
    for v in videos:
        start = len(utt_ids)
        for u in sorted(utterances[v]):
            utt_ids.append(u)
            utt_speakers.append(speakers[v])
        video_groups.append(np.arange(start, len(utt_ids)))
    spk = np.asarray(utt_speakers)
    speaker_groups = [np.flatnonzero(spk == s) for s in sorted(set(utt_speakers))]

    n = len(utt_ids)
    max_target = sum(len(g) * (len(g) - 1) // 2 for g in video_groups)
    max_nontarget = (n * n - sum(len(g) ** 2 for g in speaker_groups)) // 2
    if cfg.n_target > max_target or cfg.n_nontarget > max_nontarget or min(cfg.n_target, cfg.n_nontarget) < 0:
        raise SpeakerFilterError(
            f"requested {cfg.n_target} target and {cfg.n_nontarget} nontarget trials; "
            f"maxima are {max_target} target and {max_nontarget} nontarget")

    rng = np.random.default_rng(cfg.seed)
    trials = [Trial(utt_ids[i], utt_ids[j], TrialLabel.TARGET)
              for i, j in _sample_within_pairs(video_groups, cfg.n_target, rng)]
    trials.extend(Trial(utt_ids[i], utt_ids[j], TrialLabel.NONTARGET)
                  for i, j in _sample_cross_pairs(speaker_groups, cfg.n_nontarget, rng))
    return trials


def write_trials(path: str, trials: Iterable[Trial]):
    atomic_write_text(path, "".join(t.to_line() + "\n" for t in trials))


def read_trials(path: str) -> List[Trial]:
    trials = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise FormatError(f"{path}:{line_no}: expected 'enroll test target|nontarget'")
            try:
                trials.append(Trial(parts[0], parts[1], TrialLabel(parts[2])))
            except ValueError as e:
                raise FormatError(f"{path}:{line_no}: {e}") from e
    return trials


def score_trials(trials: Iterable[Trial], embeddings: Mapping[str, np.ndarray]) -> List[Tuple[float, bool]]:
    """Cosine similarity per trial, paired with ``is_target``."""
    scored = []
    for trial in trials:
        try:
            a = np.asarray(embeddings[trial.enroll_utt_id], dtype=np.float64)
            b = np.asarray(embeddings[trial.test_utt_id], dtype=np.float64)
        except KeyError as e:
            raise SpeakerFilterError(f"no embedding for utterance {e.args[0]}") from e
        similarity = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
        scored.append((similarity, trial.label == TrialLabel.TARGET))
    return scored


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float


def _is_target(label: Union[bool, str, TrialLabel]) -> bool:
    if isinstance(label, (bool, np.bool_)):
        return bool(label)
    return TrialLabel(label) == TrialLabel.TARGET


def compute_rocch(target_scores: np.ndarray, nontarget_scores: np.ndarray
                  ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lower convex hull of the (p_fa, p_miss) operating points.

    Points are taken at every observed score (accept when ``score >= thr``)
    and at ``+inf``. Returns ``(p_fa, p_miss, thresholds)`` ordered by p_fa.
    """
    thresholds = np.append(np.unique(np.concatenate([target_scores, nontarget_scores])), np.inf)
    tar = np.sort(target_scores)
    non = np.sort(nontarget_scores)
    p_miss = np.searchsorted(tar, thresholds, side="left") / tar.size
    p_fa = 1.0 - np.searchsorted(non, thresholds, side="left") / non.size

    order = np.lexsort((p_miss, p_fa))
    hull: List[int] = []
    for i in order:
        if hull and p_fa[hull[-1]] == p_fa[i]:
            continue
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (p_fa[a] - p_fa[o]) * (p_miss[i] - p_miss[o]) - (p_miss[a] - p_miss[o]) * (p_fa[i] - p_fa[o])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    hull_idx = np.asarray(hull)
    return p_fa[hull_idx], p_miss[hull_idx], thresholds[hull_idx]


def compute_eer(scores: Iterable[Tuple[float, Union[bool, str, TrialLabel]]]) -> EerResult:
    """EER where the ROC convex hull crosses ``p_miss == p_fa``."""
    pairs = [(float(s), _is_target(label)) for s, label in scores]
    tar = np.asarray([s for s, t in pairs if t], dtype=np.float64)
    non = np.asarray([s for s, t in pairs if not t], dtype=np.float64)
    if tar.size == 0 or non.size == 0:
        raise SpeakerFilterError("EER needs at least one target and one nontarget score")

    p_fa, p_miss, thresholds = compute_rocch(tar, non)
    diff = p_miss - p_fa
    for i in range(diff.size - 1):
        if diff[i] >= 0 >= diff[i + 1]:
            if diff[i] == diff[i + 1]:
                return EerResult(eer=float(p_fa[i]), threshold=float(thresholds[i]))
            s = diff[i] / (diff[i] - diff[i + 1])
            eer = p_fa[i] + s * (p_fa[i + 1] - p_fa[i])
            nearest = i if abs(diff[i]) <= abs(diff[i + 1]) else i + 1
            return EerResult(eer=float(eer), threshold=float(thresholds[nearest]))
    # Single hull vertex on the diagonal
    i = int(np.argmin(np.abs(diff)))
    return EerResult(eer=float(p_fa[i]), threshold=float(thresholds[i]))


def classification_report(predicted: Mapping[str, Union[str, VideoClass]],
                          annotated: Mapping[str, Union[str, VideoClass]]) -> Dict[str, Dict[str, int]]:
    """Confusion counts ``{annotated_class: {predicted_class: n}}`` over shared videos."""
    report: Dict[str, Dict[str, int]] = {}
    for video_id in sorted(set(predicted) & set(annotated)):
        truth = VideoClass(annotated[video_id]).value
        guess = VideoClass(predicted[video_id]).value
        row = report.setdefault(truth, {})
        row[guess] = row.get(guess, 0) + 1
    return report
