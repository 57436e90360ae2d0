"""Time-frequency analysis, triangular filter banks, and gain expansion.

All functions here are pure: they never mutate their inputs, so they are
safe to call concurrently. The analysis defaults (10 ms square-root Hann
window, 50% hop, power-of-two FFT) give exact overlap-add reconstruction
away from the signal edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioBuffer

WINDOW_KINDS = ("sqrt_hann", "hann", "rect")


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters shared by analysis and synthesis.

    The same window is used for analysis and synthesis; with the default
    sqrt_hann window and hop = window_len // 2 the squared window sums to
    a constant across overlapped shifts (constant overlap-add).
    """

    sample_rate: int
    window_len: int
    hop: int
    fft_size: int
    window: str = "sqrt_hann"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not (0 < self.hop <= self.window_len <= self.fft_size):
            raise ValueError(
                f"need 0 < hop <= window_len <= fft_size, got "
                f"hop={self.hop}, window_len={self.window_len}, fft_size={self.fft_size}"
            )
        if self.window not in WINDOW_KINDS:
            raise ValueError(f"unknown window {self.window!r}, expected one of {WINDOW_KINDS}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


def make_stft_config(sample_rate: int = 16000, window_ms: float = 10.0) -> StftConfig:
    """Build the default analysis config: window from milliseconds, 50% hop,
    FFT zero-padded to the next power of two."""
    window_len = int(round(sample_rate * window_ms / 1000.0))
    if window_len < 2:
        raise ValueError(f"window of {window_ms} ms at {sample_rate} Hz is too short")
    return StftConfig(
        sample_rate=sample_rate,
        window_len=window_len,
        hop=window_len // 2,
        fft_size=_next_pow2(window_len),
    )


def window_array(kind: str, n: int) -> np.ndarray:
    """Return the n-point tapering window (periodic forms)."""
    if kind == "rect":
        return np.ones(n)
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    if kind == "hann":
        return hann
    if kind == "sqrt_hann":
        return np.sqrt(hann)
    raise ValueError(f"unknown window {kind!r}")


def cola_deviation(config: StftConfig) -> float:
    """Max relative deviation of the overlap-added squared window from constant.

    Evaluated away from the edges; ~0 means synthesis with the same window
    reconstructs unmodified analyses exactly on interior samples.
    """
    w2 = window_array(config.window, config.window_len) ** 2
    n_frames = 4 * (config.window_len // config.hop) + 4
    total = (n_frames - 1) * config.hop + config.window_len
    acc = np.zeros(total)
    for m in range(n_frames):
        acc[m * config.hop : m * config.hop + config.window_len] += w2
    interior = acc[config.window_len : total - config.window_len]
    ref = np.median(interior)
    return float(np.abs(interior - ref).max() / ref)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """STFT frames (n_frames x n_bins complex) plus the config that made them."""

    frames: np.ndarray
    config: StftConfig

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.complex128)
        if frames.ndim != 2 or frames.shape[1] != self.config.n_bins:
            raise ValueError(
                f"frames must have shape (n_frames, {self.config.n_bins}), got {frames.shape}"
            )
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def stft(audio: AudioBuffer, config: StftConfig) -> ComplexSpectrogram:
    """Forward STFT: frame m covers samples [m*hop, m*hop + window_len).

    Frames are windowed, zero-padded to fft_size, and transformed; only
    nonnegative-frequency bins are kept. Trailing samples that do not fill
    a window are dropped.
    """
    if audio.sample_rate != config.sample_rate:
        raise ValueError(
            f"audio rate {audio.sample_rate} Hz does not match config rate "
            f"{config.sample_rate} Hz"
        )
    x = audio.samples
    if len(x) < config.window_len:
        raise ValueError(
            f"input too short: {len(x)} samples < one window of {config.window_len}"
        )
    n_frames = 1 + (len(x) - config.window_len) // config.hop
    starts = config.hop * np.arange(n_frames)
    idx = starts[:, None] + np.arange(config.window_len)[None, :]
    segments = x[idx] * window_array(config.window, config.window_len)
    return ComplexSpectrogram(np.fft.rfft(segments, n=config.fft_size, axis=1), config)


def istft(spec: ComplexSpectrogram) -> AudioBuffer:
    """Overlap-add synthesis with the analysis window and COLA normalization.

    Output covers (n_frames - 1) * hop + window_len samples. Samples where
    the window envelope is ~0 (the very signal edges for tapered windows)
    are left at zero.
    """
    cfg = spec.config
    if spec.n_frames == 0:
        return AudioBuffer(np.zeros(0), cfg.sample_rate)
    win = window_array(cfg.window, cfg.window_len)
    segments = np.fft.irfft(spec.frames, n=cfg.fft_size, axis=1)[:, : cfg.window_len]
    total = (spec.n_frames - 1) * cfg.hop + cfg.window_len
    out = np.zeros(total)
    envelope = np.zeros(total)
    w2 = win * win
    for m in range(spec.n_frames):
        s = m * cfg.hop
        out[s : s + cfg.window_len] += segments[m] * win
        envelope[s : s + cfg.window_len] += w2
    live = envelope > 1e-10
    out[live] /= envelope[live]
    out[~live] = 0.0
    return AudioBuffer(out, cfg.sample_rate)


def power_spectrogram(spec: ComplexSpectrogram) -> np.ndarray:
    """Squared magnitude of each STFT bin, shape (n_frames, n_bins)."""
    frames = spec.frames
    return frames.real * frames.real + frames.imag * frames.imag


@dataclass(frozen=True)
class FilterBank:
    """Triangular band weights over DFT bins.

    weights has shape (n_bands, n_bins); every column sums to 1 (partition
    of unity), so summing band outputs preserves total power, and expanding
    band gains yields per-bin convex combinations.
    """

    n_bands: int
    weights: np.ndarray
    band_centers: np.ndarray = field(repr=False)

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]


def build_uniform_filterbank(n_bands: int, fft_size: int) -> FilterBank:
    """Triangular bands with uniformly spaced centers spanning bins 0..fft_size/2.

    Interior bands are full triangles between their neighbours' centers; the
    first and last are half-triangles, so the weights across bands sum to 1
    at every bin.
    """
    n_bins = fft_size // 2 + 1
    if not 2 <= n_bands <= n_bins:
        raise ValueError(f"n_bands must be in [2, {n_bins}], got {n_bands}")
    centers = np.linspace(0.0, n_bins - 1.0, n_bands)
    weights = np.zeros((n_bands, n_bins))
    bins = np.arange(n_bins, dtype=np.float64)
    # Each bin's weight is split between the two bands bracketing it, by
    # linear interpolation; w_lo + w_hi == 1 exactly.
    seg = np.minimum(
        np.searchsorted(centers, bins, side="right") - 1, n_bands - 2
    )
    left = centers[seg]
    width = centers[seg + 1] - left
    frac = (bins - left) / width
    w_hi = np.clip(frac, 0.0, 1.0)
    w_lo = 1.0 - w_hi
    cols = np.arange(n_bins)
    weights[seg, cols] = w_lo
    weights[seg + 1, cols] += w_hi
    return FilterBank(n_bands=n_bands, weights=weights, band_centers=centers)


def apply_filterbank(power_frame: np.ndarray, bank: FilterBank) -> np.ndarray:
    """Reduce DFT-bin powers to band powers: band b = sum_k w[b,k] * frame[k].

    Accepts a single frame (n_bins,) or a stack (n_frames, n_bins).
    """
    power_frame = np.asarray(power_frame, dtype=np.float64)
    if power_frame.shape[-1] != bank.n_bins:
        raise ValueError(
            f"frame has {power_frame.shape[-1]} bins, filter bank expects {bank.n_bins}"
        )
    return power_frame @ bank.weights.T


def expand_band_gains(band_gains: np.ndarray, bank: FilterBank) -> np.ndarray:
    """Interpolate band gains back to DFT-bin resolution through the bank.

    gain[k] = sum_b w[b,k] * band_gains[b]; by partition of unity each bin
    gain is a convex combination of the band gains. Accepts (n_bands,) or
    (n_frames, n_bands).
    """
    band_gains = np.asarray(band_gains, dtype=np.float64)
    if not np.all(np.isfinite(band_gains)):
        raise ValueError("band gains must be finite")
    if band_gains.shape[-1] != bank.n_bands:
        raise ValueError(
            f"got {band_gains.shape[-1]} gains, filter bank has {bank.n_bands} bands"
        )
    return band_gains @ bank.weights
