"""Mono 16-bit PCM WAV input/output.

Samples are exchanged with the rest of the package as float64 arrays in
[-1, 1): integer samples are divided by 32768 on read, and the writer
clamps to [-1, 1 - 2**-15] before requantizing.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from .errors import AudioFormatError

PCM_SCALE = 32768.0
PCM_MAX = 1.0 - 2.0 ** -15


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio samples with their sample rate.

    Samples are stored as a float64 array; values are nominally in
    [-1, 1] but intermediate processing results may exceed that range.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must all be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return len(self) / self.sample_rate


def read_wav(path_or_file) -> AudioBuffer:
    """Read a mono 16-bit PCM WAV file.

    Raises AudioFormatError for multi-channel, non-16-bit, or compressed
    files, or anything the wave module cannot parse.
    """
    try:
        with wave.open(path_or_file, "rb") as wav:
            n_channels = wav.getnchannels()
            samp_width = wav.getsampwidth()
            comp_type = wav.getcomptype()
            sample_rate = wav.getframerate()
            n_frames = wav.getnframes()
            raw = wav.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"cannot read WAV file: {exc}") from exc
    except FileNotFoundError as exc:
        raise AudioFormatError(str(exc)) from exc

    if comp_type != "NONE":
        raise AudioFormatError(f"compressed WAV not supported (comptype={comp_type})")
    if n_channels != 1:
        raise AudioFormatError(f"expected mono audio, got {n_channels} channels")
    if samp_width != 2:
        raise AudioFormatError(f"expected 16-bit PCM, got {8 * samp_width}-bit")

    ints = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(ints.astype(np.float64) / PCM_SCALE, sample_rate)


def write_wav(path_or_file, audio: AudioBuffer) -> None:
    """Write an AudioBuffer as mono 16-bit PCM, clamping out-of-range samples."""
    clipped = np.clip(audio.samples, -1.0, PCM_MAX)
    ints = np.round(clipped * PCM_SCALE).astype("<i2")
    with wave.open(path_or_file, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(audio.sample_rate)
        wav.writeframes(ints.tobytes())
