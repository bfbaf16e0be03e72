import json
import subprocess
import sys

import numpy as np
import pytest

from vadd_bridge.augment import AugmentConfig
from vadd_bridge.extractors import build_extractors
from vadd_bridge.media import MediaError, audio_windows, middle_frames
from vadd_bridge.pipeline import (
    DATA_FILE,
    INDEX_FILE,
    Extractor,
    merge_shards,
    read_manifest,
    run_extraction,
    write_store,
)
from vadd_bridge.specs import DEFAULT_SPECS, OPENL3_FRAMES_PER_SECOND


def make_extractor(augment=None, segments=10):
    return Extractor(
        DEFAULT_SPECS,
        build_extractors(DEFAULT_SPECS, profile="lite"),
        segments_per_video=segments,
        augment=augment or AugmentConfig(),
    )


def run_primary_validation(store_dir):
    """The consumer-side check: the core toolkit must accept the store."""
    return subprocess.run(
        [sys.executable, "-m", "vadd.cli", "validate", "--store", str(store_dir)],
        capture_output=True,
        text=True,
    )


class TestMedia:
    def test_middle_frames_count(self, media_corpus):
        frames = middle_frames(media_corpus / "video" / "clip_a.avi", 10)
        assert len(frames) == 10
        assert frames[0].shape == (48, 64, 3)

    def test_audio_windows_shape(self, media_corpus):
        windows, rate = audio_windows(media_corpus / "audio" / "clip_a.wav", 10)
        assert windows.shape == (10, rate)

    def test_too_short_video_rejected(self, media_corpus, tmp_path):
        from conftest import write_test_video

        short = tmp_path / "short.avi"
        write_test_video(short, seconds=3)
        with pytest.raises(MediaError, match="3.00s"):
            middle_frames(short, 10)


class TestExtraction:
    def test_ten_second_input_gives_ten_segments(self, media_corpus):
        extractor = make_extractor()
        segments = extractor.extract_video(
            media_corpus / "video" / "clip_a.avi",
            media_corpus / "audio" / "clip_a.wav",
        )
        width = sum(s["dim"] for s in extractor.source_table())
        assert segments.shape == (10, width)
        assert np.all(np.isfinite(segments))

    def test_deterministic_re_extraction(self, media_corpus):
        extractor = make_extractor()
        one = extractor.extract_video(
            media_corpus / "video" / "clip_b.avi",
            media_corpus / "audio" / "clip_b.wav",
        )
        two = extractor.extract_video(
            media_corpus / "video" / "clip_b.avi",
            media_corpus / "audio" / "clip_b.wav",
        )
        assert one.tobytes() == two.tobytes()

    def test_openl3_window_averages_42_frames(self, media_corpus):
        extractors = build_extractors(DEFAULT_SPECS, profile="lite")
        openl3 = extractors["openl3"]
        windows, rate = audio_windows(media_corpus / "audio" / "clip_a.wav", 1)
        frames = openl3.embed_window(windows[0], rate)
        assert frames.shape == (OPENL3_FRAMES_PER_SECOND, 512)

    def test_undecodable_media_becomes_error_record(self, media_corpus, tmp_path):
        entries = read_manifest(media_corpus / "manifest.jsonl")
        entries[1].video_id = "broken"
        (media_corpus / "video" / "broken.avi").write_bytes(b"not a video")
        (media_corpus / "audio" / "broken.wav").write_bytes(b"not audio")
        result = run_extraction(
            entries, make_extractor(),
            media_corpus / "video", media_corpus / "audio",
        )
        assert [e.video_id for e in result.errors] == ["broken"]
        assert {r.video_id for r in result.records} == {"clip_a", "clip_c"}
        (media_corpus / "video" / "broken.avi").unlink()
        (media_corpus / "audio" / "broken.wav").unlink()


class TestStoreConformance:
    def test_store_passes_primary_validation(self, media_corpus, tmp_path):
        entries = read_manifest(media_corpus / "manifest.jsonl")
        result = run_extraction(
            entries, make_extractor(),
            media_corpus / "video", media_corpus / "audio",
        )
        assert result.errors == []
        out = tmp_path / "store"
        write_store(result, out)
        check = run_primary_validation(out)
        assert check.returncode == 0, check.stderr
        assert "3 records" in check.stdout

    def test_primary_select_reads_rows(self, media_corpus, tmp_path):
        from vadd.store import open_store

        entries = read_manifest(media_corpus / "manifest.jsonl")
        result = run_extraction(
            entries, make_extractor(),
            media_corpus / "video", media_corpus / "audio",
        )
        out = tmp_path / "store"
        write_store(result, out)
        store = open_store(out)
        assert store.segments_per_video == 10
        audio_view = store.select(modality="audio")
        assert audio_view.width == 512 + 512 + 128
        assert len(list(audio_view)) == 3 * 10

    def test_shard_merge_equals_single_pass(self, media_corpus, tmp_path):
        entries = read_manifest(media_corpus / "manifest.jsonl")
        extractor = make_extractor()
        whole = tmp_path / "whole"
        result = run_extraction(entries, extractor,
                                media_corpus / "video", media_corpus / "audio")
        write_store(result, whole)

        shard_dirs = []
        for i, chunk in enumerate((entries[:2], entries[2:])):
            shard = tmp_path / f"shard{i}"
            part = run_extraction(chunk, extractor,
                                  media_corpus / "video", media_corpus / "audio")
            write_store(part, shard)
            shard_dirs.append(shard)
        merged = tmp_path / "merged"
        merge_shards(shard_dirs, merged)
        assert (merged / DATA_FILE).read_bytes() == (whole / DATA_FILE).read_bytes()
        assert (merged / INDEX_FILE).read_bytes() == (whole / INDEX_FILE).read_bytes()


class TestAugmentation:
    def test_fixed_seed_reproducible(self, media_corpus):
        extractor = make_extractor()
        video = media_corpus / "video" / "clip_a.avi"
        audio = media_corpus / "audio" / "clip_a.wav"
        one = extractor.extract_video(video, audio, augment_seed=77)
        two = extractor.extract_video(video, audio, augment_seed=77)
        assert one.tobytes() == two.tobytes()

    def test_zero_strength_equals_unaugmented(self, media_corpus):
        identity = AugmentConfig(flip_prob=0.0, brightness=0.0, contrast=0.0,
                                 rotation_deg=0.0)
        extractor = make_extractor(augment=identity)
        video = media_corpus / "video" / "clip_a.avi"
        audio = media_corpus / "audio" / "clip_a.wav"
        plain = extractor.extract_video(video, audio)
        augmented = extractor.extract_video(video, audio, augment_seed=5)
        assert np.array_equal(plain, augmented)

    def test_augmentation_changes_visual_not_audio(self, media_corpus, tmp_path):
        from vadd.store import open_store

        entries = read_manifest(media_corpus / "manifest.jsonl")
        result = run_extraction(
            entries, make_extractor(),
            media_corpus / "video", media_corpus / "audio",
            augment_train=True, augment_seed=3,
        )
        # Two train clips get duplicates; the test clip does not.
        assert len(result.records) == 5
        out = tmp_path / "store"
        write_store(result, out)
        store = open_store(out)
        assert run_primary_validation(out).returncode == 0
        visual_cols = store.column_slice("visual")
        audio_cols = store.column_slice("audio")
        for vid in ("clip_a", "clip_b"):
            base = store.get(vid, augmented=False).segments
            aug = store.get(vid, augmented=True).segments
            assert np.array_equal(base[:, audio_cols], aug[:, audio_cols])
            assert not np.array_equal(base[:, visual_cols], aug[:, visual_cols])
        assert store.get("clip_c", augmented=True) is None

    def test_augmented_store_doubles_train_count(self, media_corpus):
        entries = read_manifest(media_corpus / "manifest.jsonl")
        train_only = [e for e in entries if e.split == "train"]
        result = run_extraction(
            train_only, make_extractor(),
            media_corpus / "video", media_corpus / "audio",
            augment_train=True,
        )
        assert len(result.records) == 2 * len(train_only)


class TestCli:
    def test_extract_command(self, media_corpus, tmp_path):
        out = tmp_path / "store"
        proc = subprocess.run(
            [sys.executable, "-m", "vadd_bridge.cli", "extract",
             "--manifest", str(media_corpus / "manifest.jsonl"),
             "--video-dir", str(media_corpus / "video"),
             "--audio-dir", str(media_corpus / "audio"),
             "--augment-train", "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        payload = json.loads(proc.stdout)
        assert payload["records"] == 5
        assert payload["errors"] == []
        assert run_primary_validation(out).returncode == 0
