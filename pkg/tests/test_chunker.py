import numpy as np
import pytest
import soundfile as sf
from scipy.special import logsumexp

from corpus_automator.chunker import (ChunkConfig, ModelAdapter, ToyModel, direct_inference, infer_long,
                                      plan_blocks, read_wav, toy_model, write_wav)
from corpus_automator.ctcseg import PosteriorMatrix
from corpus_automator.exceptions import AudioFormatError, ChunkingError

R = 160
WINDOW = 3200  # 200 ms of context on each side


def noise(rng, n_samples):
    return rng.uniform(-0.5, 0.5, size=n_samples).astype(np.float32)


def check_plan_laws(plan, total, r, cfg):
    usable = (total // r) * r
    cores = [(b.core_start, b.core_end) for b in plan.blocks]
    assert cores[0][0] == 0
    assert cores[-1][1] == usable
    for (_, end), (start, _) in zip(cores, cores[1:]):
        assert end == start
    for block in plan.blocks:
        assert block.core_start % r == 0 and block.core_end % r == 0
        assert block.core_length > 0
        assert block.left_pad == min(plan.pad_samples, block.core_start)
        assert block.right_pad == min(plan.pad_samples, total - block.core_end)
        assert block.left_pad % r == 0
    assert plan.pad_samples % r == 0
    assert plan.pad_samples >= cfg.min_overlap_ms * cfg.sample_rate_hz / 1000.0
    for block in plan.blocks[:-1]:
        assert block.core_length == plan.nominal_samples
    last = plan.blocks[-1].core_length
    assert last <= cfg.last_block_slack * plan.nominal_samples + 1e-9
    if len(plan) > 1 and last < plan.nominal_samples:
        assert last > (cfg.last_block_slack - 1.0) * plan.nominal_samples


def test_plan_laws_hold_for_random_inputs(rng):
    for _ in range(1000):
        r = int(rng.choice([160, 320, 640]))
        total = int(rng.integers(r, 400_000))
        cfg = ChunkConfig(max_block_s=float(rng.uniform(r / 16000, 5.0)),
                          min_overlap_ms=float(rng.uniform(0, 1000)))
        plan = plan_blocks(total, r, cfg)
        check_plan_laws(plan, total, r, cfg)
        assert plan_blocks(total, r, cfg) == plan


@pytest.mark.parametrize("total,n_blocks,last_core", [
    (32000, 2, 16000),
    (35200, 2, 19200),
    (36000, 2, 20000),
    (38400, 3, 6400),
    (8000, 1, 8000),
])
def test_remainder_merging(total, n_blocks, last_core):
    cfg = ChunkConfig(max_block_s=1.0, min_overlap_ms=600)
    plan = plan_blocks(total, R, cfg)
    assert plan.nominal_samples == 16000
    assert plan.pad_samples == 9600
    assert len(plan) == n_blocks
    assert plan.blocks[-1].core_length == last_core


def test_trailing_partial_frame_is_dropped_from_cores_but_kept_as_context():
    plan = plan_blocks(32000 + 100, R, ChunkConfig(max_block_s=1.0, min_overlap_ms=600))
    assert plan.n_frames == 200
    assert plan.blocks[-1].core_end == 32000
    assert plan.blocks[-1].right_pad == 100


@pytest.mark.parametrize("total,cfg", [
    (100, ChunkConfig(max_block_s=1.0)),
    (16000, ChunkConfig(max_block_s=0.001)),
    (16000, ChunkConfig(min_overlap_ms=-1)),
    (16000, ChunkConfig(last_block_slack=0.9)),
])
def test_invalid_plans(total, cfg):
    with pytest.raises(ChunkingError):
        plan_blocks(total, R, cfg)


def test_stitched_inference_equals_direct_inference(rng):
    model = ToyModel(28, WINDOW, samples_per_frame=R)
    for _ in range(100):
        samples = noise(rng, int(rng.integers(R, 48_000)))
        cfg = ChunkConfig(max_block_s=float(rng.uniform(0.05, 1.0)),
                          min_overlap_ms=float(rng.uniform(200, 400)),
                          parallelism=int(rng.integers(1, 4)))
        stitched = infer_long(samples, model, cfg)
        direct = direct_inference(samples, model)
        assert stitched.logp.shape == (samples.shape[0] // R, 28)
        np.testing.assert_array_equal(stitched.logp, direct.logp)


def test_single_block_is_direct_inference(rng):
    samples = noise(rng, 8000)
    model = toy_model(5, WINDOW, samples_per_frame=R)
    stitched = infer_long(samples, model, ChunkConfig(max_block_s=1.0))
    np.testing.assert_array_equal(stitched.logp, model.infer(samples).logp)


def test_without_overlap_block_edges_differ(rng):
    samples = noise(rng, 48_000)
    model = ToyModel(28, WINDOW, samples_per_frame=R)
    stitched = infer_long(samples, model, ChunkConfig(max_block_s=1.0, min_overlap_ms=0)).logp
    direct = direct_inference(samples, model).logp

    for edge in (100, 200):
        assert not np.array_equal(stitched[edge - 1], direct[edge - 1])
        assert not np.array_equal(stitched[edge], direct[edge])
    # Frames further than the window from any edge are unaffected
    np.testing.assert_array_equal(stitched[30:70], direct[30:70])


def test_toy_model_is_deterministic_and_local(rng):
    samples = noise(rng, 16000)
    model = ToyModel(["<blank>", "a", "b", "c"], window_samples=320, samples_per_frame=R)
    first = model.infer(samples).logp
    np.testing.assert_array_equal(first, model.infer(samples.copy()).logp)
    np.testing.assert_allclose(logsumexp(first, axis=1), 0.0, atol=1e-6)

    changed = samples.copy()
    changed[-R:] += 0.25
    second = model.infer(changed).logp
    # Frame 50 covers samples [8000, 8160); its window ends well before the change
    np.testing.assert_array_equal(first[50], second[50])
    assert not np.array_equal(first[-1], second[-1])


def test_toy_model_rejects_tiny_vocabulary():
    with pytest.raises(ChunkingError):
        ToyModel(1, 100)


class WrongShapeModel(ModelAdapter):
    samples_per_frame = R

    @property
    def vocab_size(self):
        return 3

    def infer(self, samples):
        return PosteriorMatrix(np.zeros((1, 3)), R)


def test_unexpected_model_output_names_the_block(rng):
    with pytest.raises(ChunkingError, match="block 0"):
        infer_long(noise(rng, 32000), WrongShapeModel(), ChunkConfig(max_block_s=1.0))


def test_wav_read_write(tmp_path, rng):
    samples = noise(rng, 1600)
    path = str(tmp_path / "audio" / "v.wav")
    write_wav(path, samples)
    loaded = read_wav(path)
    assert loaded.dtype == np.float32
    np.testing.assert_allclose(loaded, samples, atol=2.0 / 32768)


@pytest.mark.parametrize("rate,channels,subtype", [
    (8000, 1, "PCM_16"),
    (16000, 2, "PCM_16"),
    (16000, 1, "FLOAT"),
])
def test_unsupported_wav_is_rejected(tmp_path, rate, channels, subtype):
    path = str(tmp_path / "bad.wav")
    data = np.zeros((800, channels), dtype=np.float32)
    sf.write(path, data, rate, subtype=subtype, format="WAV")
    with pytest.raises(AudioFormatError):
        read_wav(path)


def test_non_audio_file_is_rejected(tmp_path):
    path = tmp_path / "notes.wav"
    path.write_text("not audio")
    with pytest.raises(AudioFormatError):
        read_wav(str(path))
