import os

import pytest

from corpus_automator.catalog import (Catalog, FixtureDownloader, FixtureSubtitleLookup, FixtureVideoSearcher,
                                      SearchTerm, TermSource, UpsertResult, VideoRecord, collect, compute_stats,
                                      normalize_term)
from corpus_automator.exceptions import CatalogError
from corpus_automator.utils import write_jsonl


@pytest.mark.parametrize("raw,expected", [
    ("Cooking  Basics", "cooking basics"),
    ("  Straße ", "strasse"),
    ("Café", "café"),
    ("\tA\nB ", "a b"),
])
def test_normalize_term(raw, expected):
    assert normalize_term(raw) == expected


def test_add_terms_drops_duplicates_after_normalization():
    terms = [SearchTerm(f"Topic {i}", TermSource.WIKI_HYPERLINK) for i in range(47)]
    terms += [SearchTerm("topic 3"), SearchTerm("  TOPIC 10 "), SearchTerm("Topic   20", TermSource.TREND)]
    catalog = Catalog()
    added, errors = catalog.add_terms(terms)
    assert added == 47
    assert errors == []
    assert len(catalog.terms) == 47


def test_add_terms_reports_empty_terms():
    catalog = Catalog()
    added, errors = catalog.add_terms(["ok", "   ", "also ok"])
    assert added == 2
    assert errors == [{"index": 1, "text": "   ", "error": "empty search term"}]


def test_upsert_merges_found_by_and_updates_flags():
    catalog = Catalog()
    first = VideoRecord("v1", "ch", 10.0, has_manual_subs=False, has_auto_subs=True, found_by=["a"])
    assert catalog.upsert_video(first) == UpsertResult.INSERTED
    again = VideoRecord("v1", "", 0.0, has_manual_subs=True, has_auto_subs=True, found_by=["b", "a"])
    assert catalog.upsert_video(again) == UpsertResult.UPDATED

    video = catalog.get_video("v1")
    assert video.found_by == ["a", "b"]
    assert video.has_manual_subs
    assert video.channel_id == "ch"
    assert video.duration_s == 10.0
    assert len(catalog) == 1


@pytest.mark.parametrize("record", [VideoRecord(""), VideoRecord("  "), VideoRecord("v", duration_s=-1.0)])
def test_upsert_rejects_invalid_records(record):
    with pytest.raises(CatalogError):
        Catalog().upsert_video(record)


def test_stats_do_not_depend_on_order():
    videos = [VideoRecord(f"v{i}", has_manual_subs=i % 4 == 0, has_auto_subs=i % 2 == 0) for i in range(8)]
    forward = compute_stats(4, videos)
    backward = compute_stats(4, reversed(videos))
    assert forward == backward
    assert forward.n_manual == 2
    assert forward.n_auto == 4
    assert forward.manual_fraction == pytest.approx(0.25)
    assert forward.videos_per_term == pytest.approx(2.0)


def test_stats_of_empty_catalog():
    stats = Catalog().stats()
    assert stats.n_videos == 0
    assert stats.videos_per_term is None
    assert stats.manual_fraction is None


def test_video_ids_by_subtitle_kind():
    catalog = Catalog()
    catalog.upsert_video(VideoRecord("b", has_manual_subs=True, has_auto_subs=True))
    catalog.upsert_video(VideoRecord("a", has_auto_subs=True))
    assert catalog.video_ids("manual") == ["b"]
    assert catalog.video_ids("auto") == ["a", "b"]
    assert catalog.video_ids("all") == ["a", "b"]
    with pytest.raises(CatalogError):
        catalog.video_ids("other")


def test_save_and_load(tmp_path):
    catalog = Catalog()
    catalog.add_terms([SearchTerm("Weather", TermSource.TREND), SearchTerm("News")])
    catalog.upsert_video(VideoRecord("v1", "chA", 12.5, True, False, ["news"]))
    catalog.save(str(tmp_path))

    loaded = Catalog.load(str(tmp_path))
    assert sorted(t.term_id for t in loaded.terms) == ["news", "weather"]
    assert loaded.get_video("v1").to_dict() == catalog.get_video("v1").to_dict()
    assert loaded.channel_of("v1") == "chA"
    assert loaded.channel_of("missing") is None


def test_load_missing_directory_is_empty(tmp_path):
    assert len(Catalog.load(str(tmp_path / "nothing"))) == 0


def test_load_rejects_non_object_rows(tmp_path):
    (tmp_path / "videos.jsonl").write_text('{"video_id": "v1"}\n"v2"\n', encoding="utf-8")
    with pytest.raises(CatalogError, match="Line 2 is not a JSON object"):
        Catalog.load(str(tmp_path))


def test_collect_with_fixture_fetchers(tmp_path):
    write_jsonl(str(tmp_path / "search.jsonl"), [
        {"term": "Weather", "video_ids": ["v1", "v2", "v3"]},
        {"term": "news", "video_ids": ["v2"]},
    ])
    write_jsonl(str(tmp_path / "metadata.jsonl"), [
        {"video_id": "v1", "channel_id": "c1", "duration_s": 60.0, "has_manual_subs": True, "has_auto_subs": True},
        {"video_id": "v2", "channel_id": "c2", "duration_s": 30.0, "has_manual_subs": False, "has_auto_subs": True},
    ])
    catalog = Catalog()
    catalog.add_terms(["Weather", "News"])
    hits = collect(catalog, FixtureVideoSearcher(str(tmp_path / "search.jsonl")),
                   FixtureSubtitleLookup(str(tmp_path / "metadata.jsonl")), max_results=10)

    assert hits == {"weather": 3, "news": 1}
    # v3 has no metadata and is skipped
    assert catalog.video_ids("all") == ["v1", "v2"]
    assert catalog.get_video("v2").found_by == ["news", "weather"]
    assert catalog.stats().n_manual == 1


def test_fixture_downloader(tmp_path):
    (tmp_path / "audio").mkdir()
    (tmp_path / "subs").mkdir()
    (tmp_path / "audio" / "v1.wav").write_bytes(b"")
    (tmp_path / "subs" / "v1.srt").write_text("", encoding="utf-8")
    downloader = FixtureDownloader(str(tmp_path / "audio"), str(tmp_path / "subs"))

    found = downloader.fetch("v1", str(tmp_path))
    assert found == {"audio": os.path.join(str(tmp_path / "audio"), "v1.wav"),
                     "subtitles": os.path.join(str(tmp_path / "subs"), "v1.srt")}
    with pytest.raises(CatalogError):
        downloader.fetch("v2", str(tmp_path))
