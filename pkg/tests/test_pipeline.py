import threading
import time

import pytest
from PIL import Image

from corpus_automator.asrfilter import HistogramBin
from corpus_automator.exceptions import FormatError
from corpus_automator.pipeline import CorpusProcessor, Status, VideoSkipped, run_batch
from corpus_automator.plotting import save_histogram_png
from corpus_automator.settings import SettingsManager
from corpus_automator.utils import atomic_write_text, read_jsonl, run_bounded, validate_jsonl_file, write_jsonl


def test_run_bounded_keeps_input_order_and_limits_concurrency():
    lock = threading.Lock()
    active, peak = [0], [0]

    def work(item):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.01 * (5 - item % 5))
        with lock:
            active[0] -= 1
        return item * item

    assert run_bounded(list(range(12)), work, max_concurrent=3) == [i * i for i in range(12)]
    assert 1 <= peak[0] <= 3


def test_run_bounded_returns_exceptions_in_place():
    def work(item):
        if item == 2:
            raise FormatError("broken")
        return item

    for concurrency in (1, 2):
        results = run_bounded([1, 2, 3], work, max_concurrent=concurrency)
        assert results[0] == 1 and results[2] == 3
        assert isinstance(results[1], FormatError)
    assert run_bounded([], work, max_concurrent=4) == []
    with pytest.raises(ValueError):
        run_bounded([1], work, max_concurrent=0)


def test_run_batch_accounting():
    def stage(video_id):
        if video_id == "skip":
            raise VideoSkipped("missing subtitles")
        if video_id == "bad":
            raise FormatError("bad magic")
        return video_id.upper()

    report = run_batch("test", ["a", "skip", "bad", "b"], stage, parallelism=2)
    assert (report.n_done, report.n_skipped, report.n_failed) == (2, 1, 1)
    assert report.results() == {"a": "A", "b": "B"}
    statuses = {o.video_id: o.status for o in report.outcomes}
    assert statuses["skip"] == Status.SKIPPED
    failed = next(o for o in report.outcomes if o.status == Status.FAILED)
    assert failed.detail == "FormatError: bad magic"


def test_processor_discovers_videos_and_falls_back_to_inferred_posteriors(fixture_corpus, tmp_path):
    directory, construction = fixture_corpus
    cfg = SettingsManager().load_config(str(directory / "config.toml"))
    processor = CorpusProcessor(cfg)
    video_ids = sorted(construction["videos"])
    assert processor.subtitle_videos() == video_ids
    assert processor.audio_videos() == video_ids
    assert processor.embedding_videos() == video_ids
    assert processor.channel_of("vid03") == "chB"
    assert processor.posterior_path("vid01") == str(directory / "posteriors" / "vid01.ctcp")

    cfg.paths.posterior_dir = str(tmp_path / "empty")
    cfg.paths.output_dir = str(tmp_path / "out")
    inferred = tmp_path / "out" / "posteriors" / "vid01.ctcp"
    inferred.parent.mkdir(parents=True)
    inferred.write_bytes(b"")
    assert processor.posterior_path("vid01") == str(inferred)
    with pytest.raises(VideoSkipped, match="missing posteriors"):
        processor.posterior_path("vid02")


def test_auto_subtitles_are_skipped_before_alignment(fixture_corpus, tmp_path):
    directory, _ = fixture_corpus
    cfg = SettingsManager().load_config(str(directory / "config.toml"))
    cfg.paths.output_dir = str(tmp_path / "out")
    processor = CorpusProcessor(cfg)
    with pytest.raises(VideoSkipped, match="automatic subtitles"):
        processor.align_video("vid02", "align", {"vid02": True})
    with pytest.raises(VideoSkipped, match="no manual subtitles"):
        processor.align_video("vid05", "align", {})


def test_jsonl_files_are_deterministic(tmp_path):
    path = str(tmp_path / "rows.jsonl")
    write_jsonl(path, [{"b": 1, "a": "é"}, {"c": None}])
    assert (tmp_path / "rows.jsonl").read_text(encoding="utf-8") == '{"a": "é", "b": 1}\n{"c": null}\n'
    assert read_jsonl(path) == [{"a": "é", "b": 1}, {"c": None}]
    atomic_write_text(str(tmp_path / "nested" / "x.txt"), "x")
    assert not (tmp_path / "nested" / "x.txt.tmp").exists()


@pytest.mark.parametrize("content,error", [
    ('{"a": 1}\n\n{"b": 2}\n', None),
    ('{"a": 1}\n[1, 2]\n', "Line 2 is not a JSON object"),
    ('{"a": 1}\n{"b": \n', "Invalid JSON"),
])
def test_validate_jsonl_file(tmp_path, content, error):
    path = tmp_path / "rows.jsonl"
    path.write_text(content, encoding="utf-8")
    is_valid, message = validate_jsonl_file(str(path))
    assert is_valid == (error is None)
    if error is None:
        assert message is None
    else:
        assert message.startswith(error)
    assert validate_jsonl_file(str(tmp_path / "missing.jsonl")) == (False, "File does not exist")


@pytest.mark.parametrize("bins", [
    [HistogramBin(-1.0, -0.5, 3), HistogramBin(-0.5, 0.0, 10)],
    [],
])
def test_histogram_png(tmp_path, bins):
    path = tmp_path / "hist.png"
    save_histogram_png(bins, str(path), title="scores", markers=[(-0.3, "easy")])
    with Image.open(path) as image:
        assert image.format == "PNG"
        assert image.size == (800, 480)
