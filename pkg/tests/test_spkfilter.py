import itertools
import math

import numpy as np
import pytest
from sklearn.metrics import silhouette_score

from corpus_automator.config import Config
from corpus_automator.exceptions import FormatError, InsufficientDataError, SpeakerFilterError
from corpus_automator.spkfilter import (ClassifyConfig, EmbeddingSet, Trial, TrialConfig, TrialLabel, VadConfig,
                                        VariationResult, VideoClass, classification_report, classify_video,
                                        compute_eer, evaluate_video, frame_levels_db, group_speakers, make_trials,
                                        read_embeddings, read_trials, reduce_2d, retain_segments, score_trials,
                                        speaker_id_for_channel, split_speakers, vad_mask, variation_score,
                                        write_embeddings, write_trials)
from corpus_automator.subtext import Cue
from corpus_automator.synth import EMBEDDING_DIM, synth_embeddings

RATE = 16000


def tone(seconds, amplitude=0.5, freq=220.0):
    t = np.arange(int(seconds * RATE)) / RATE
    return amplitude * np.sin(2 * np.pi * freq * t)


def noise_then_tone(rng):
    return np.concatenate([rng.normal(0.0, 0.001, RATE), tone(1.0)])


# VAD

def test_silence_is_unvoiced():
    assert not vad_mask(np.zeros(RATE)).any()


def test_constant_tone_is_voiced():
    assert vad_mask(tone(1.0, amplitude=1.0)).all()
    assert vad_mask(tone(1.0)).all()


def test_short_audio_gives_empty_mask():
    assert vad_mask(np.zeros(100)).size == 0
    assert frame_levels_db(np.zeros(100), VadConfig()).size == 0


def test_noise_then_tone_is_half_voiced(rng):
    cfg = VadConfig()
    mask = vad_mask(noise_then_tone(rng), cfg)
    assert mask.size == (2 * RATE - cfg.frame_samples()) // cfg.hop_samples() + 1
    assert abs(mask.mean() - 0.5) <= (cfg.hangover_frames + 3) / mask.size
    assert not mask[:90].any()
    assert mask[-90:].all()


def test_retain_segments_on_noise_then_tone(rng):
    cfg = VadConfig()
    mask = vad_mask(noise_then_tone(rng), cfg)
    cues = [Cue("tone", 1.1, 1.9), Cue("noise", 0.1, 0.9), Cue("past the end", 1.9, 2.5), Cue("tone", 1.2, 1.5)]
    assert retain_segments(cues, mask, cfg, audio_duration_s=2.0) == [0, 3]


@pytest.mark.parametrize("first_voiced,kept", [(99, [0]), (100, [])])
def test_half_voiced_cue_is_kept(first_voiced, kept):
    # 100 frame centers fall in [0.5, 1.5)
    mask = np.zeros(200, dtype=bool)
    mask[first_voiced:] = True
    assert retain_segments([Cue("half", 0.5, 1.5)], mask, VadConfig()) == kept


# Embeddings and reduction

def test_embedding_set_normalizes_rows(rng):
    embedding_set = EmbeddingSet("v", "c", rng.normal(size=(5, 8)) * 3.0)
    np.testing.assert_allclose(np.linalg.norm(embedding_set.embeddings, axis=1), 1.0, atol=1e-6)
    with pytest.raises(SpeakerFilterError):
        EmbeddingSet("v", "c", np.zeros((2, 4)))
    with pytest.raises(SpeakerFilterError):
        EmbeddingSet("v", "c", np.ones((2, 4)), utt_ids=["only_one"])


def test_embedding_file(tmp_path, rng):
    original = EmbeddingSet("vid", "chan", rng.normal(size=(4, 16)), [f"vid_{i:05d}" for i in range(4)])
    path = str(tmp_path / "vid.dvec")
    write_embeddings(path, original)
    loaded = read_embeddings(path)
    assert (loaded.video_id, loaded.channel_id, loaded.utt_ids) == ("vid", "chan", original.utt_ids)
    np.testing.assert_allclose(loaded.embeddings, original.embeddings, atol=1e-6)
    assert loaded.subset([2, 0]).utt_ids == ["vid_00002", "vid_00000"]

    data = (tmp_path / "vid.dvec").read_bytes()
    (tmp_path / "bad.dvec").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        read_embeddings(str(tmp_path / "bad.dvec"))
    (tmp_path / "lonely.dvec").write_bytes(data)
    with pytest.raises(FormatError, match="sidecar"):
        read_embeddings(str(tmp_path / "lonely.dvec"))


def test_pca_of_planar_points_preserves_variance(rng):
    points = rng.normal(size=(50, 2)) * [3.0, 0.5]
    reduced = reduce_2d(points, ClassifyConfig(pca_scale=1.0)).points
    variances = np.var(reduced, axis=0, ddof=1)
    assert variances[0] >= variances[1]
    assert variances.sum() == pytest.approx(np.var(points, axis=0, ddof=1).sum())
    assert variation_score(reduced) == pytest.approx(variation_score(points))


def test_identical_rows_are_degenerate():
    rows = np.tile([0.6, 0.8, 0.0], (12, 1))
    reduction = reduce_2d(rows)
    assert reduction.degenerate
    assert np.all(reduction.points == reduction.points[0])
    assert variation_score(reduction.points) == Config.LOG_ZERO
    assert reduce_2d(rows, ClassifyConfig(reducer="tsne")).degenerate


def test_reduction_needs_three_rows():
    with pytest.raises(InsufficientDataError):
        reduce_2d(np.eye(2, 4))
    with pytest.raises(InsufficientDataError):
        variation_score(np.zeros((2, 2)))


def test_pca_keeps_two_blobs_apart(rng):
    centers = np.zeros((2, 64))
    centers[0, 0] = centers[1, 1] = 1.0
    labels = np.repeat([0, 1], 20)
    blobs = centers[labels] + 0.05 * rng.normal(size=(40, 64))
    assert silhouette_score(reduce_2d(blobs).points, labels) > 0.5


def test_tsne_is_seeded(rng):
    blobs = synth_embeddings("multi", np.eye(EMBEDDING_DIM)[0], rng, n_utts=12)
    cfg = ClassifyConfig(reducer="tsne", tsne_iters=250, seed=7)
    first = reduce_2d(blobs, cfg)
    assert first.points.shape == (12, 2)
    assert first.reducer == "tsne"
    np.testing.assert_allclose(reduce_2d(blobs, cfg).points, first.points)


# Variation score and classification

def test_standard_normal_scores_near_zero(rng):
    assert variation_score(rng.normal(size=(1000, 2))) == pytest.approx(0.0, abs=0.2)


def test_score_is_translation_invariant_and_scales_with_fourth_power(rng):
    points = rng.normal(size=(30, 2))
    base = variation_score(points)
    assert variation_score(points + [5.0, -3.0]) == pytest.approx(base)
    assert variation_score(points * 2.5) == pytest.approx(base + 4 * math.log(2.5))


@pytest.mark.parametrize("score,n_utts,expected", [
    (Config.LOG_ZERO, 12, VideoClass.TTS),
    (-0.5, 12, VideoClass.TTS),
    (0.0, 12, VideoClass.SINGLE),
    (4.0, 12, VideoClass.SINGLE),
    (8.5, 12, VideoClass.SINGLE),
    (9.0, 12, VideoClass.MULTI),
    (4.0, 10, VideoClass.UNDERSIZED),
    (None, 2, VideoClass.UNDERSIZED),
])
def test_classify_video(score, n_utts, expected):
    assert classify_video(score, n_utts) == expected


def test_classification_is_monotone_in_score():
    order = [VideoClass.TTS, VideoClass.SINGLE, VideoClass.MULTI]
    classes = [classify_video(s, 20) for s in np.linspace(-5.0, 15.0, 401)]
    ranks = [order.index(c) for c in classes]
    assert ranks == sorted(ranks)


def test_classify_config_validation():
    with pytest.raises(SpeakerFilterError):
        ClassifyConfig(tau_low=9.0, tau_high=8.5).validate()
    with pytest.raises(SpeakerFilterError):
        ClassifyConfig(reducer="umap").validate()


def test_synthetic_videos_are_classified_by_shape(rng):
    for speaker_class, expected in (("tts", VideoClass.TTS), ("single", VideoClass.SINGLE),
                                    ("multi", VideoClass.MULTI)):
        correct = 0
        for i in range(30):
            mean = rng.normal(size=EMBEDDING_DIM)
            mean /= np.linalg.norm(mean)
            embedding_set = EmbeddingSet(f"{speaker_class}{i}", "c", synth_embeddings(speaker_class, mean, rng))
            correct += evaluate_video(embedding_set).klass == expected
        assert correct / 30 >= 0.9, speaker_class


def test_small_videos_are_undersized(rng):
    embedding_set = EmbeddingSet("v", "c", synth_embeddings("single", np.eye(EMBEDDING_DIM)[0], rng, n_utts=10))
    result = evaluate_video(embedding_set)
    assert result.klass == VideoClass.UNDERSIZED
    assert result.score is not None
    assert VariationResult.from_dict(result.to_dict()) == result


def test_classification_report():
    report = classification_report({"a": "single", "b": "multi", "c": "single"},
                                   {"a": "single", "b": "single", "d": "tts"})
    assert report == {"single": {"single": 1, "multi": 1}}


# Speakers and trials

def result(video_id, klass, channel_id="ch"):
    return VariationResult(video_id, 5.0, 12, klass, "pca", channel_id)


def test_group_speakers_by_channel():
    results = [result("v1", VideoClass.SINGLE, "chA"), result("v2", VideoClass.SINGLE, "chA"),
               result("v3", VideoClass.SINGLE, "chB"), result("v4", VideoClass.MULTI, "chC"),
               result("v5", VideoClass.SINGLE, "")]
    speakers = group_speakers(results)
    assert list(speakers) == ["v1", "v2", "v3"]
    assert speakers["v1"] == speakers["v2"] == speaker_id_for_channel("chA")
    assert len(set(speakers.values())) == 2
    assert group_speakers(results, {"v5": "chD"})["v5"] == speaker_id_for_channel("chD")


def test_speaker_ids_are_stable():
    assert speaker_id_for_channel("chA") == speaker_id_for_channel("chA")
    assert speaker_id_for_channel("chA") != speaker_id_for_channel("chB")
    assert speaker_id_for_channel("chA").startswith("spk_")
    assert len(speaker_id_for_channel("chA")) == len("spk_") + 12


def test_split_speakers():
    speaker_map = {f"v{i}": f"s{i % 5}" for i in range(10)}
    test, train = split_speakers(speaker_map, 2, seed=4)
    assert len(test) == 2 and len(train) == 3
    assert not set(test) & set(train)
    assert sorted(test + train) == [f"s{i}" for i in range(5)]
    assert split_speakers(speaker_map, 2, seed=4) == (test, train)
    with pytest.raises(SpeakerFilterError):
        split_speakers(speaker_map, 6)


def test_two_speakers_two_utterances():
    speakers = {"v1": "s1", "v2": "s2"}
    utterances = {"v1": ["v1_0", "v1_1"], "v2": ["v2_0", "v2_1"]}
    trials = make_trials(speakers, utterances, TrialConfig(n_target=2, n_nontarget=2, seed=1))
    assert len(trials) == 4
    for trial in trials:
        same_video = trial.enroll_utt_id[:2] == trial.test_utt_id[:2]
        assert same_video == (trial.label == TrialLabel.TARGET)
    with pytest.raises(SpeakerFilterError, match="maxima are 2 target and 4 nontarget"):
        make_trials(speakers, utterances, TrialConfig(n_target=3, n_nontarget=1))


def test_trial_ratio_is_honored():
    speakers = {f"v{i}": f"s{i}" for i in range(4)}
    utterances = {v: [f"{v}_{j}" for j in range(6)] for v in speakers}
    cfg = TrialConfig(n_target=2, n_nontarget=182, seed=3)
    trials = make_trials(speakers, utterances, cfg)
    labels = [t.label for t in trials]
    assert labels.count(TrialLabel.TARGET) == 2
    assert labels.count(TrialLabel.NONTARGET) == 182
    pairs = [(t.enroll_utt_id, t.test_utt_id) for t in trials]
    assert len(set(pairs)) == len(pairs)
    assert all(a != b for a, b in pairs)
    assert make_trials(speakers, utterances, cfg) == trials


@pytest.mark.parametrize("n_videos,per_video", [(200, 100), (2, 10000)])
def test_nontarget_sampling_scales_with_request(n_videos, per_video):
    # The cross-speaker pool has about 10**8 pairs in both layouts
    speakers = {f"v{i:03d}": f"s{i:03d}" for i in range(n_videos)}
    utterances = {v: [f"{v}_{j:05d}" for j in range(per_video)] for v in speakers}
    cfg = TrialConfig(n_target=10, n_nontarget=5000, seed=7)
    trials = make_trials(speakers, utterances, cfg)
    nontarget = [(t.enroll_utt_id, t.test_utt_id) for t in trials if t.label == TrialLabel.NONTARGET]
    assert len(nontarget) == 5000
    assert len(set(nontarget)) == 5000
    assert all(a < b and a.split("_")[0] != b.split("_")[0] for a, b in nontarget)
    assert make_trials(speakers, utterances, cfg) == trials


def test_nontarget_sampling_near_the_maximum():
    speakers = {"v1": "s1", "v2": "s1", "v3": "s2"}
    utterances = {"v1": ["a0", "a1"], "v2": ["b0", "b1"], "v3": ["c0", "c1", "c2"]}
    trials = make_trials(speakers, utterances, TrialConfig(n_target=0, n_nontarget=12, seed=2))
    # Every pair across s1 and s2, and none within s1
    assert sorted((t.enroll_utt_id, t.test_utt_id) for t in trials) == sorted(
        (a, c) for a in ["a0", "a1", "b0", "b1"] for c in ["c0", "c1", "c2"])


def test_trial_file_and_scoring(tmp_path):
    trials = [Trial("a", "b", TrialLabel.TARGET), Trial("a", "c", TrialLabel.NONTARGET)]
    path = str(tmp_path / "trials.txt")
    write_trials(path, trials)
    assert read_trials(path) == trials
    (tmp_path / "broken.txt").write_text("a b maybe\n")
    with pytest.raises(FormatError):
        read_trials(str(tmp_path / "broken.txt"))

    embeddings = {"a": np.array([1.0, 0.0]), "b": np.array([2.0, 0.0]), "c": np.array([0.0, 3.0])}
    assert score_trials(trials, embeddings) == [(pytest.approx(1.0), True), (pytest.approx(0.0), False)]
    with pytest.raises(SpeakerFilterError):
        score_trials([Trial("a", "zzz", TrialLabel.TARGET)], embeddings)


# EER

def brute_force_eer(target, nontarget):
    """Lowest max(p_fa, p_miss) over every mixture of two operating points."""
    target, nontarget = np.asarray(target), np.asarray(nontarget)
    thresholds = sorted(set(target) | set(nontarget)) + [math.inf]
    points = [(float(np.mean(nontarget >= t)), float(np.mean(target < t))) for t in thresholds]
    best = 1.0
    for (fa1, miss1), (fa2, miss2) in itertools.combinations_with_replacement(points, 2):
        d1, d2 = miss1 - fa1, miss2 - fa2
        if d1 * d2 <= 0 and d1 != d2:
            value = fa1 + d1 / (d1 - d2) * (fa2 - fa1)
        else:
            value = min(max(fa1, miss1), max(fa2, miss2))
        best = min(best, value)
    return best


def labelled(target, nontarget):
    return [(s, True) for s in target] + [(s, False) for s in nontarget]


def test_hand_example():
    assert compute_eer(labelled([0.9, 0.6], [0.7, 0.2])).eer == pytest.approx(0.25)


def test_eer_matches_brute_force(rng):
    for _ in range(200):
        target = rng.integers(0, 10, size=int(rng.integers(1, 15))) / 10
        nontarget = rng.integers(0, 10, size=int(rng.integers(1, 15))) / 10
        assert compute_eer(labelled(target, nontarget)).eer == pytest.approx(
            brute_force_eer(target, nontarget), abs=1e-9)


def test_eer_is_invariant_under_increasing_transforms(rng):
    target, nontarget = rng.normal(1.0, 1.0, 50), rng.normal(0.0, 1.0, 80)
    base = compute_eer(labelled(target, nontarget)).eer
    assert compute_eer(labelled(np.exp(3 * target), np.exp(3 * nontarget))).eer == pytest.approx(base)


def test_perfect_separation_has_zero_eer():
    result = compute_eer(labelled([0.8, 0.9, 0.95], [0.1, 0.2]))
    assert result.eer == 0.0
    assert 0.2 < result.threshold <= 0.8


def test_coin_flip_labels_give_half(rng):
    scores = rng.uniform(size=10_000)
    labels = rng.random(10_000) < 0.5
    assert compute_eer(zip(scores, labels)).eer == pytest.approx(0.5, abs=0.02)


def test_eer_accepts_label_strings_and_needs_both_classes():
    assert compute_eer([(0.9, "target"), (0.1, TrialLabel.NONTARGET)]).eer == 0.0
    with pytest.raises(SpeakerFilterError):
        compute_eer([(0.9, True), (0.8, True)])
