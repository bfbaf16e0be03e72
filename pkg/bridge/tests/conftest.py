import json
import wave

import cv2
import numpy as np
import pytest


def write_test_video(path, seconds=10, fps=4, size=(64, 48), seed=0):
    rng = np.random.default_rng(seed)
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"MJPG"), float(fps), size
    )
    base = rng.integers(0, 200, size=(size[1], size[0], 3), dtype=np.uint8)
    for i in range(int(seconds * fps)):
        frame = np.clip(
            base.astype(np.int16) + rng.integers(-30, 30, size=base.shape), 0, 255
        ).astype(np.uint8)
        writer.write(frame)
    writer.release()


def write_test_audio(path, seconds=10, rate=16000, freq=440.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(seconds * rate) / rate
    signal = 0.5 * np.sin(2 * np.pi * freq * t) + 0.05 * rng.normal(size=len(t))
    samples = np.clip(signal * 32000, -32768, 32767).astype(np.int16)
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(rate)
        f.writeframes(samples.tobytes())


@pytest.fixture(scope="session")
def media_corpus(tmp_path_factory):
    """Three 10-second clips (one per split/scene combination used in tests)."""
    root = tmp_path_factory.mktemp("media")
    video_dir = root / "video"
    audio_dir = root / "audio"
    video_dir.mkdir()
    audio_dir.mkdir()
    entries = [
        {"video_id": "clip_a", "class": "park", "duration_s": 10, "split": "train"},
        {"video_id": "clip_b", "class": "bus", "duration_s": 10, "split": "train"},
        {"video_id": "clip_c", "class": "metro", "duration_s": 10, "split": "test"},
    ]
    for i, entry in enumerate(entries):
        write_test_video(video_dir / f"{entry['video_id']}.avi", seed=i)
        write_test_audio(audio_dir / f"{entry['video_id']}.wav",
                         freq=220.0 * (i + 1), seed=i)
    manifest = root / "manifest.jsonl"
    manifest.write_text(
        "\n".join(json.dumps(e) for e in entries) + "\n", encoding="utf-8"
    )
    return root
