"""Media decoding: middle-frame-per-second sampling and per-second audio windows."""

from __future__ import annotations

import wave
from pathlib import Path

import cv2
import numpy as np

VIDEO_EXTENSIONS = (".mp4", ".avi", ".mkv", ".mov", ".webm")


class MediaError(Exception):
    """A media file is missing, unreadable or too short."""


def find_video(directory: Path, video_id: str) -> Path:
    for ext in VIDEO_EXTENSIONS:
        candidate = directory / f"{video_id}{ext}"
        if candidate.exists():
            return candidate
    raise MediaError(f"no video file for {video_id!r} in {directory}")


def find_audio(directory: Path, video_id: str) -> Path:
    candidate = directory / f"{video_id}.wav"
    if candidate.exists():
        return candidate
    raise MediaError(f"no audio file for {video_id!r} in {directory}")


def middle_frames(path: Path, seconds: int) -> list[np.ndarray]:
    """The frame nearest the middle of each of the first `seconds` seconds.

    Returned frames are RGB uint8 arrays.
    """
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise MediaError(f"cannot decode {path}")
    try:
        fps = capture.get(cv2.CAP_PROP_FPS)
        total = int(capture.get(cv2.CAP_PROP_FRAME_COUNT))
        if fps <= 0 or total <= 0:
            raise MediaError(f"{path}: no readable frames")
        duration = total / fps
        if duration + 1e-9 < seconds:
            raise MediaError(
                f"{path}: only {duration:.2f}s of video, need {seconds}s"
            )
        wanted = [
            min(int(round((t + 0.5) * fps)), total - 1) for t in range(seconds)
        ]
        frames: list[np.ndarray] = []
        index = 0
        targets = iter(wanted)
        target = next(targets)
        while True:
            ok, frame = capture.read()
            if not ok:
                break
            while index == target:
                frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
                try:
                    target = next(targets)
                except StopIteration:
                    return frames
            index += 1
        raise MediaError(f"{path}: ran out of frames at index {index}")
    finally:
        capture.release()


def audio_windows(path: Path, seconds: int) -> tuple[np.ndarray, int]:
    """Float32 mono samples reshaped to one row per second, plus the rate."""
    try:
        with wave.open(str(path), "rb") as f:
            rate = f.getframerate()
            channels = f.getnchannels()
            width = f.getsampwidth()
            n = f.getnframes()
            raw = f.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise MediaError(f"cannot decode {path}: {exc}") from None
    if width == 2:
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    elif width == 4:
        samples = np.frombuffer(raw, dtype="<i4").astype(np.float32) / 2147483648.0
    elif width == 1:
        samples = (np.frombuffer(raw, dtype=np.uint8).astype(np.float32) - 128.0) / 128.0
    elif width == 3:
        as_bytes = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3)
        ints = (
            as_bytes[:, 0].astype(np.int32)
            | (as_bytes[:, 1].astype(np.int32) << 8)
            | (as_bytes[:, 2].astype(np.int32) << 16)
        )
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        samples = ints.astype(np.float32) / float(1 << 23)
    else:
        raise MediaError(f"{path}: unsupported sample width {width}")
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    if len(samples) < seconds * rate:
        raise MediaError(
            f"{path}: only {len(samples) / rate:.2f}s of audio, need {seconds}s"
        )
    windows = samples[: seconds * rate].reshape(seconds, rate)
    return windows, rate
