"""
Synthetic Fixture Module
Builds a small, fully deterministic corpus (audio, subtitles, posteriors,
embeddings, catalog, token list, charmap and config) together with a
construction sheet describing the ground truth every stage should recover.
"""

import json
import math
import os
import string
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .asrfilter import make_utt_id
from .catalog import Catalog, SearchTerm, TermSource, VideoRecord
from .chunker import write_wav
from .config import Config
from .ctcseg import PosteriorMatrix, write_posteriors
from .logging_setup import logger, timing_context
from .settings import SettingsManager, render_toml
from .spkfilter import EmbeddingSet, speaker_id_for_channel, write_embeddings
from .subtext import (Cue, Num2WordsVerbalizer, SubtitleTrack, TokenTable, load_charmap, normalize_text,
                      serialize_track)
from .utils import atomic_write_text

TOKENS = ["<blank>", "<space>"] + list(string.ascii_lowercase)

PREAMBLE_FRAMES = 10
GAP_FRAMES = 20
CUES_PER_VIDEO = 12
WORDS_PER_CUE = 3
CUE_OFFSETS_S = (-0.2, 0.0, 0.2)

# Peak probability on the ground-truth path per utterance quality
QUALITY_PEAK = {"easy": 0.95, "normal": 0.55, "bad": 0.5}
GAP_BLANK_PROB = 0.95

TONE_HZ = 220.0
TONE_AMPLITUDE = 0.5
NOISE_AMPLITUDE = 0.001

EMBEDDING_DIM = 64
EMBEDDING_SIGMA = 0.03

N_TARGET_TRIALS = 2
N_NONTARGET_TRIALS = 182

WORDS = [
    "apple", "river", "green", "market", "window", "silver", "garden", "morning",
    "yellow", "table", "planet", "violin", "bridge", "forest", "candle", "orange",
    "summer", "pocket", "rocket", "butter", "winter", "monkey", "island", "basket",
    "kitchen", "doctor", "letter", "mirror", "pepper", "ticket", "wonder", "jacket",
    "harbor", "meadow", "pillow", "castle", "dragon", "falcon", "lemon", "marble",
    "number", "puzzle", "quiet", "ribbon", "shadow", "thunder", "velvet", "zebra",
]

SEARCH_TERMS = [
    SearchTerm("Cooking basics", TermSource.WIKI_HYPERLINK),
    SearchTerm("Weather report", TermSource.TREND),
    SearchTerm("Morning news", TermSource.TREND),
    SearchTerm("Garden tips", TermSource.MANUAL),
    SearchTerm("cooking  Basics", TermSource.MANUAL),
]


@dataclass(frozen=True)
class VideoPlan:
    video_id: str
    channel_id: str
    qualities: Tuple[str, ...]
    speaker_class: str
    subtitle_format: str = "vtt"
    rolling: bool = False
    manual_subs: bool = True
    special_cues: Dict[int, str] = field(default_factory=dict)


def _repeat(*pattern: str) -> Tuple[str, ...]:
    return tuple(pattern[i % len(pattern)] for i in range(CUES_PER_VIDEO))


FIXTURE_VIDEOS = (
    VideoPlan("vid01", "chA", _repeat("easy"), "single",
              special_cues={2: "Chapter 3 begins.", 5: "Café opens early."}),
    VideoPlan("vid02", "chA", _repeat("normal"), "single", subtitle_format="srt"),
    VideoPlan("vid03", "chB", _repeat("easy", "normal"), "tts"),
    VideoPlan("vid04", "chC", _repeat("bad"), "multi"),
    VideoPlan("vid05", "chD", _repeat("easy"), "single", rolling=True, manual_subs=False),
)

# Fixed test set so the split expectations do not depend on the seed
FIXTURE_TEST_VIDEOS = ["vid03"]


def _sentence(words: Sequence[str]) -> str:
    text = " ".join(words)
    return text[0].upper() + text[1:] + "."


def cue_texts(plan: VideoPlan, rng: np.random.Generator) -> List[str]:
    if plan.rolling:
        words = [WORDS[i] for i in rng.choice(len(WORDS), size=CUES_PER_VIDEO + 1, replace=False)]
        return [_sentence(words[:k + 2]) for k in range(CUES_PER_VIDEO)]
    texts = []
    for index in range(CUES_PER_VIDEO):
        words = [WORDS[i] for i in rng.choice(len(WORDS), size=WORDS_PER_CUE, replace=False)]
        texts.append(plan.special_cues.get(index, _sentence(words)))
    return texts


def _peaked_rows(n_rows: int, vocab_size: int, peak_ids: Sequence[int], peak: float) -> np.ndarray:
    probs = np.full((n_rows, vocab_size), (1.0 - peak) / (vocab_size - 1))
    probs[np.arange(n_rows), np.asarray(peak_ids, dtype=np.int64)] = peak
    return probs


def truth_posteriors(token_seqs: Sequence[Sequence[int]], qualities: Sequence[str], vocab_size: int,
                     blank_id: int = Config.BLANK_ID) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """Log-posteriors with each utterance spoken on alternating frames.

    Returns ``(logp, spans)`` with the first and last token frame of every
    utterance. A ``bad`` utterance gets blank-heavy noise that matches no text.
    """
    spans: List[Tuple[int, int]] = []
    cursor = PREAMBLE_FRAMES
    for tokens in token_seqs:
        last = cursor + 2 * (len(tokens) - 1)
        spans.append((cursor, last))
        cursor = last + 1 + GAP_FRAMES
    n_frames = cursor

    noisy = all(q == "bad" for q in qualities)
    gap_peak = QUALITY_PEAK["bad"] if noisy else GAP_BLANK_PROB
    probs = _peaked_rows(n_frames, vocab_size, [blank_id] * n_frames, gap_peak)
    for tokens, quality, (first, last) in zip(token_seqs, qualities, spans):
        peak = QUALITY_PEAK[quality]
        length = last - first + 1
        peak_ids = [blank_id] * length
        if quality != "bad":
            peak_ids[::2] = tokens
        probs[first:last + 1] = _peaked_rows(length, vocab_size, peak_ids, peak)
    return np.log(probs), spans


def expected_score(quality: str, vocab_size: int = len(TOKENS)) -> float:
    """Score alignment should report for an utterance of this quality."""
    if quality == "bad":
        # Cheapest path emits every token on consecutive noise frames
        return math.log((1.0 - QUALITY_PEAK["bad"]) / (vocab_size - 1))
    return math.log(QUALITY_PEAK[quality])


def synth_audio(n_frames: int, spans: Sequence[Tuple[int, int]], rng: np.random.Generator,
                samples_per_frame: int = Config.SAMPLES_PER_FRAME,
                sample_rate_hz: int = Config.SAMPLE_RATE_HZ) -> np.ndarray:
    samples = rng.normal(0.0, NOISE_AMPLITUDE, size=n_frames * samples_per_frame)
    for first, last in spans:
        start, end = first * samples_per_frame, (last + 1) * samples_per_frame
        t = np.arange(end - start) / sample_rate_hz
        samples[start:end] = TONE_AMPLITUDE * np.sin(2 * np.pi * TONE_HZ * t)
    return np.clip(samples, -1.0, 1.0).astype(np.float32)


def synth_embeddings(speaker_class: str, mean: np.ndarray, rng: np.random.Generator,
                     n_utts: int = CUES_PER_VIDEO) -> np.ndarray:
    if speaker_class == "tts":
        return np.tile(mean, (n_utts, 1))
    if speaker_class == "single":
        return mean + EMBEDDING_SIGMA * rng.normal(size=(n_utts, mean.shape[0]))
    if speaker_class == "multi":
        other = rng.normal(size=mean.shape[0])
        other -= (other @ mean) * mean
        other /= np.linalg.norm(other)
        half = n_utts // 2
        centers = np.vstack([np.tile(mean, (half, 1)), np.tile(other, (n_utts - half, 1))])
        return centers + EMBEDDING_SIGMA * rng.normal(size=centers.shape)
    raise ValueError(f"unknown speaker class: {speaker_class}")


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _write_config(directory: str, seed: int):
    settings = SettingsManager().default_settings()
    settings["paths"].update({
        "audio_dir": "audio",
        "subtitle_dir": "subtitles",
        "posterior_dir": "posteriors",
        "embedding_dir": "embeddings",
        "catalog_dir": "catalog",
        "output_dir": "output",
        "token_list": "tokens.txt",
        "charmap": "charmap.tsv",
    })
    settings["run"].update({"parallelism": 2, "seed": seed})
    settings["chunker"].update({"max_block_s": 10.0})
    settings["split"].update({"test_videos": list(FIXTURE_TEST_VIDEOS)})
    settings["trials"].update({"n_target": N_TARGET_TRIALS, "n_nontarget": N_NONTARGET_TRIALS})
    atomic_write_text(os.path.join(directory, Config.CONFIG_FILE), render_toml(settings))


def _write_vocabulary(directory: str):
    atomic_write_text(os.path.join(directory, "tokens.txt"), "".join(tok + "\n" for tok in TOKENS))
    rows = [f"{ch}\t{ch.lower()}" for ch in string.ascii_uppercase]
    rows += [f"{ch}\t" for ch in ",.?!"]
    atomic_write_text(os.path.join(directory, "charmap.tsv"), "\n".join(rows) + "\n")


def _sweep_expectations(utterances: Sequence[Dict], skipped: Sequence[str]) -> Dict[str, Dict]:
    sweep = {}
    for theta in Config.SWEEP_THETAS:
        kept = [u for u in utterances
                if u["video_id"] not in skipped and expected_score(u["quality"]) > theta]
        sweep[f"{theta:g}"] = {
            "n_videos": len({u["video_id"] for u in kept}),
            "n_utts": len(kept),
            "hours": sum(u["end_s"] - u["start_s"] for u in kept) / 3600.0,
        }
    return sweep


def make_fixture(directory: str, seed: int = Config.DEFAULT_SEED) -> Dict:
    """Write the fixture under ``directory`` and return its construction sheet."""
    rng = np.random.default_rng(seed)
    os.makedirs(directory, exist_ok=True)
    _write_vocabulary(directory)
    token_table = TokenTable.load(os.path.join(directory, "tokens.txt"))
    charmap = load_charmap(os.path.join(directory, "charmap.tsv"))
    verbalizer = Num2WordsVerbalizer("en")
    frame_s = Config.SAMPLES_PER_FRAME / Config.SAMPLE_RATE_HZ

    catalog = Catalog()
    catalog.add_terms(SEARCH_TERMS)
    channel_means: Dict[str, np.ndarray] = {}
    utterances: List[Dict] = []
    videos: Dict[str, Dict] = {}
    unknown_chars: Dict[str, Dict[str, List[str]]] = {}

    with timing_context("make_fixture", directory):
        for plan in FIXTURE_VIDEOS:
            raw_texts = cue_texts(plan, rng)
            normalized = [normalize_text(t, verbalizer, charmap, token_table) for t in raw_texts]
            token_seqs = [token_table.encode(text) for text, _ in normalized]
            logp, spans = truth_posteriors(token_seqs, plan.qualities, len(TOKENS))
            n_frames = logp.shape[0]
            write_posteriors(os.path.join(directory, "posteriors", plan.video_id + Config.POSTERIOR_SUFFIX),
                             PosteriorMatrix(logp, Config.SAMPLES_PER_FRAME, Config.SAMPLE_RATE_HZ))
            write_wav(os.path.join(directory, "audio", plan.video_id + ".wav"), synth_audio(n_frames, spans, rng))

            offsets = rng.choice(len(CUE_OFFSETS_S), size=len(spans))
            cues = [Cue(text=text,
                        start_s=round(first * frame_s + CUE_OFFSETS_S[k], 3),
                        end_s=round((last + 1) * frame_s + CUE_OFFSETS_S[k], 3))
                    for text, (first, last), k in zip(raw_texts, spans, offsets)]
            subtitle_name = plan.video_id + "." + plan.subtitle_format
            atomic_write_text(os.path.join(directory, "subtitles", subtitle_name),
                              serialize_track(SubtitleTrack(cues), plan.subtitle_format))

            if plan.channel_id not in channel_means:
                channel_means[plan.channel_id] = _unit(rng, EMBEDDING_DIM)
            utt_ids = [make_utt_id(plan.video_id, i) for i in range(len(cues))]
            write_embeddings(os.path.join(directory, "embeddings", plan.video_id + Config.EMBEDDING_SUFFIX),
                             EmbeddingSet(plan.video_id, plan.channel_id,
                                          synth_embeddings(plan.speaker_class, channel_means[plan.channel_id], rng),
                                          utt_ids))

            catalog.upsert_video(VideoRecord(
                video_id=plan.video_id, channel_id=plan.channel_id, duration_s=round(n_frames * frame_s, 6),
                has_manual_subs=plan.manual_subs, has_auto_subs=True,
                found_by=[SEARCH_TERMS[len(videos) % len(SEARCH_TERMS)].term_id],
            ))

            for index, ((text, unknown), quality, (first, last)) in enumerate(zip(normalized, plan.qualities, spans)):
                if unknown:
                    unknown_chars.setdefault(plan.video_id, {})[str(index)] = unknown
                utterances.append({
                    "utt_id": utt_ids[index],
                    "video_id": plan.video_id,
                    "quality": quality,
                    "text": text,
                    "start_s": round(first * frame_s, 6),
                    "end_s": round((last + 1) * frame_s, 6),
                })
            videos[plan.video_id] = {
                "channel_id": plan.channel_id,
                "speaker_class": plan.speaker_class,
                "subtitle_file": subtitle_name,
                "rolling": plan.rolling,
                "manual_subs": plan.manual_subs,
                "n_frames": n_frames,
            }

        catalog.save(os.path.join(directory, "catalog"))
        _write_config(directory, seed)

    skipped = sorted(p.video_id for p in FIXTURE_VIDEOS if p.rolling or not p.manual_subs)
    aligned = [u for u in utterances if u["video_id"] not in skipped]
    test_set = set(FIXTURE_TEST_VIDEOS)
    single_videos = {p.video_id for p in FIXTURE_VIDEOS if p.speaker_class == "single"}
    train = [u for u in aligned if u["video_id"] not in test_set
             and expected_score(u["quality"]) > Config.NORMAL_THETA]

    construction = {
        "seed": seed,
        "frame_s": frame_s,
        "videos": videos,
        "utterances": utterances,
        "expected": {
            "n_terms": len({t.term_id for t in SEARCH_TERMS}),
            "auto": {p.video_id: p.rolling for p in FIXTURE_VIDEOS},
            "skipped_align": skipped,
            "unknown_chars": unknown_chars,
            "scores": {q: expected_score(q) for q in QUALITY_PEAK},
            "sweep": _sweep_expectations(utterances, skipped),
            "splits": {
                "test_videos": list(FIXTURE_TEST_VIDEOS),
                "test_easy": sum(1 for u in aligned if u["video_id"] in test_set
                                 and expected_score(u["quality"]) > Config.EASY_THETA),
                "test_normal": sum(1 for u in aligned if u["video_id"] in test_set
                                   and expected_score(u["quality"]) > Config.NORMAL_THETA),
                "train": len(train),
                "train_single_speaker": sum(1 for u in train if u["video_id"] in single_videos),
            },
            "classes": {p.video_id: p.speaker_class for p in FIXTURE_VIDEOS},
            "speakers": {p.video_id: speaker_id_for_channel(p.channel_id)
                         for p in FIXTURE_VIDEOS if p.speaker_class == "single"},
            "trials": {"n_target": N_TARGET_TRIALS, "n_nontarget": N_NONTARGET_TRIALS},
            "eer": 0.0,
        },
    }
    atomic_write_text(os.path.join(directory, Config.CONSTRUCTION_FILE),
                      json.dumps(construction, ensure_ascii=False, indent=2, sort_keys=True) + "\n")
    logger.info(f"Synthetic fixture with {len(FIXTURE_VIDEOS)} videos written to {directory}")
    return construction


def load_construction(directory: str) -> Optional[Dict]:
    path = os.path.join(directory, Config.CONSTRUCTION_FILE)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
