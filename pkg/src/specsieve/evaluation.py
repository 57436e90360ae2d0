"""Noise mixing, objective quality metrics, and the speech-distortion probe.

Both metrics operate on 32 ms frames with 50% overlap and clamp per-frame
(or per-band) SNRs to [-10, 35] dB before averaging. fw_seg_snr weights
band SNRs by the reference band magnitude raised to 0.2, over 25 Mel-spaced
triangular bands up to the Nyquist frequency.

speech_distortion_run measures how much the enhancement mask, computed
from a noisy mixture, damages the underlying clean speech: the identical
mask is applied to the clean signal and the result is scored against it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioBuffer
from .dictionary import Dictionary
from .dsp import istft, stft
from .enhancer import EnhanceConfig, apply_mask, compute_mask
from .errors import DataError

SNR_FLOOR_DB = -10.0
SNR_CEIL_DB = 35.0
METRIC_FRAME_MS = 32.0
FW_N_BANDS = 25
FW_WEIGHT_EXPONENT = 0.2
ACTIVE_FRAME_RATIO = 1e-6


@dataclass
class MetricReport:
    """Scores plus per-frame traces and the config that produced them."""

    seg_snr_db: float
    fw_seg_snr_db: float
    seg_snr_frames: np.ndarray = field(repr=False)
    fw_seg_snr_frames: np.ndarray = field(repr=False)
    config_echo: dict = field(default_factory=dict)


def mix_at_snr(
    clean: AudioBuffer, noise: AudioBuffer, snr_db: float, seed: int = 0
) -> tuple[AudioBuffer, AudioBuffer, float]:
    """Scale a noise segment onto the clean signal at an exact power SNR.

    A random segment offset is drawn from the seed; noise shorter than the
    clean signal is looped. Returns (mixture, scaled noise segment, scale)
    so the exact additive noise is available to oracles.
    """
    if clean.sample_rate != noise.sample_rate:
        raise ValueError(
            f"sample rates differ: clean {clean.sample_rate} Hz, "
            f"noise {noise.sample_rate} Hz"
        )
    if len(clean) == 0 or len(noise) == 0:
        raise DataError("cannot mix empty signals")
    clean_power = float(np.mean(clean.samples**2))
    if clean_power <= 0.0:
        raise DataError("silent clean signal: cannot set an SNR")

    rng = np.random.default_rng(seed)
    if len(noise) >= len(clean):
        offset = int(rng.integers(0, len(noise) - len(clean) + 1))
        segment = noise.samples[offset : offset + len(clean)]
    else:
        offset = int(rng.integers(0, len(noise)))
        segment = noise.samples[(offset + np.arange(len(clean))) % len(noise)]
    noise_power = float(np.mean(segment**2))
    if noise_power <= 0.0:
        raise DataError("silent noise segment: cannot set an SNR")

    scale = float(np.sqrt(clean_power / (noise_power * 10.0 ** (snr_db / 10.0))))
    scaled = segment * scale
    return (
        AudioBuffer(clean.samples + scaled, clean.sample_rate),
        AudioBuffer(scaled, clean.sample_rate),
        scale,
    )


def _frame_starts(n_samples: int, frame_len: int, hop: int) -> np.ndarray:
    if n_samples < frame_len:
        return np.zeros(1, dtype=np.int64)  # single truncated frame
    return np.arange(0, n_samples - frame_len + 1, hop)


def _clamp_db(values: np.ndarray) -> np.ndarray:
    return np.clip(values, SNR_FLOOR_DB, SNR_CEIL_DB)


def segmental_snr_frames(reference: AudioBuffer, test: AudioBuffer) -> np.ndarray:
    """Per-frame clamped SNR values; silent reference frames are skipped."""
    if len(reference) != len(test):
        raise ValueError(f"length mismatch: {len(reference)} vs {len(test)}")
    frame_len = int(round(METRIC_FRAME_MS / 1000.0 * reference.sample_rate))
    hop = frame_len // 2
    ref = reference.samples
    tst = test.samples
    scores = []
    for start in _frame_starts(len(ref), frame_len, hop):
        r = ref[start : start + frame_len]
        e = r - tst[start : start + frame_len]
        ref_energy = float(np.sum(r**2))
        if ref_energy <= 0.0:
            continue
        err_energy = float(np.sum(e**2))
        with np.errstate(divide="ignore"):
            snr = 10.0 * np.log10(ref_energy / err_energy) if err_energy > 0 else np.inf
        scores.append(snr)
    return _clamp_db(np.asarray(scores, dtype=np.float64))


def segmental_snr(reference: AudioBuffer, test: AudioBuffer) -> float:
    """Mean clamped per-frame SNR in dB."""
    frames = segmental_snr_frames(reference, test)
    if frames.size == 0:
        raise DataError("no frames with reference energy to score")
    return float(frames.mean())


def _mel(freq_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def _mel_inv(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def _mel_filterbank(n_bands: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters (peak 1) on a Mel-spaced grid up to Nyquist."""
    nyquist = sample_rate / 2.0
    points_hz = _mel_inv(np.linspace(_mel(0.0), _mel(nyquist), n_bands + 2))
    points_bin = points_hz / nyquist * (n_fft // 2)
    n_bins = n_fft // 2 + 1
    bins = np.arange(n_bins, dtype=np.float64)
    weights = np.zeros((n_bands, n_bins))
    for b in range(n_bands):
        lo, mid, hi = points_bin[b], points_bin[b + 1], points_bin[b + 2]
        up = (bins - lo) / max(mid - lo, 1e-12)
        down = (hi - bins) / max(hi - mid, 1e-12)
        weights[b] = np.clip(np.minimum(up, down), 0.0, 1.0)
    return weights


def fw_seg_snr_frames(reference: AudioBuffer, test: AudioBuffer) -> np.ndarray:
    """Per-frame magnitude-weighted band SNRs over active reference frames."""
    if len(reference) != len(test):
        raise ValueError(f"length mismatch: {len(reference)} vs {len(test)}")
    sr = reference.sample_rate
    frame_len = int(round(METRIC_FRAME_MS / 1000.0 * sr))
    hop = frame_len // 2
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(frame_len) / frame_len)
    bank = _mel_filterbank(FW_N_BANDS, frame_len, sr)

    starts = _frame_starts(len(reference), frame_len, hop)
    ref = reference.samples
    tst = test.samples

    frame_energies = np.array(
        [float(np.sum(ref[s : s + frame_len] ** 2)) for s in starts]
    )
    active_floor = ACTIVE_FRAME_RATIO * (
        frame_energies.mean() if frame_energies.size else 0.0
    )

    scores = []
    for start, energy in zip(starts, frame_energies):
        if energy <= active_floor or energy <= 0.0:
            continue
        r = ref[start : start + frame_len]
        t = tst[start : start + frame_len]
        if len(r) < frame_len:
            continue
        ref_spec = np.abs(np.fft.rfft(r * window)) ** 2
        tst_spec = np.abs(np.fft.rfft(t * window)) ** 2
        ref_band = bank @ ref_spec
        tst_band = bank @ tst_spec
        ref_mag = np.sqrt(ref_band)
        err = (ref_mag - np.sqrt(tst_band)) ** 2
        live = ref_band > 0.0
        if not np.any(live):
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            band_snr = 10.0 * np.log10(
                np.where(err > 0, ref_band / np.where(err > 0, err, 1.0), np.inf)
            )
        band_snr = _clamp_db(band_snr)
        weights = ref_mag**FW_WEIGHT_EXPONENT
        weights[~live] = 0.0
        scores.append(float(np.sum(weights * band_snr) / np.sum(weights)))
    return np.asarray(scores, dtype=np.float64)


def fw_seg_snr(reference: AudioBuffer, test: AudioBuffer) -> float:
    """Frequency-weighted segmental SNR in dB (higher is closer to reference)."""
    frames = fw_seg_snr_frames(reference, test)
    if frames.size == 0:
        raise DataError("no active reference frames to score")
    return float(frames.mean())


def evaluate_pair(reference: AudioBuffer, test: AudioBuffer, **config_echo) -> MetricReport:
    """Both metrics plus their traces for a (reference, test) pair."""
    seg = segmental_snr_frames(reference, test)
    fw = fw_seg_snr_frames(reference, test)
    if seg.size == 0 or fw.size == 0:
        raise DataError("no scoreable frames")
    return MetricReport(
        seg_snr_db=float(seg.mean()),
        fw_seg_snr_db=float(fw.mean()),
        seg_snr_frames=seg,
        fw_seg_snr_frames=fw,
        config_echo=dict(config_echo),
    )


def speech_distortion_run(
    clean: AudioBuffer,
    noise: AudioBuffer,
    snr_db: float,
    dictionary: Dictionary,
    config: EnhanceConfig | None = None,
    seed: int = 0,
) -> MetricReport:
    """Score the damage the mask does to the clean speech it tries to protect.

    The gain mask is computed from the noisy mixture exactly as in
    enhancement, then applied to the clean signal's spectrum; the
    reconstruction is compared against the original clean signal.
    """
    config = config or EnhanceConfig()
    noisy, _, _ = mix_at_snr(clean, noise, snr_db, seed=seed)
    mask = compute_mask(noisy, dictionary, config)
    clean_spec = stft(clean, dictionary.stft_config)
    masked = apply_mask(clean_spec, mask.dft_gains, config.sqrt_gain)
    out = istft(masked).samples
    if len(out) < len(clean):
        out = np.concatenate([out, np.zeros(len(clean) - len(out))])
    masked_clean = AudioBuffer(out[: len(clean)], clean.sample_rate)
    return evaluate_pair(
        clean,
        masked_clean,
        snr_db=snr_db,
        threshold=config.threshold,
        mask_mode=config.mask_mode,
        gain_floor=config.gain_floor,
        seed=seed,
    )
