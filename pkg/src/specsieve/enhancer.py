"""Enhancement of noisy speech through dictionary matching and outlier masking.

For every frame a patch of band powers is matched against the dictionary
under squared log distance, with a closed-form scalar correcting the level
difference between training speech and the input. Bins whose exponential
tail probability against the matched entry falls below a threshold are
treated as noise-dominated; spectral subtraction estimates the noise there,
and a Wiener-like gain (noisy minus noise, over noisy) is built per patch,
averaged over the overlapping patches covering each frame, expanded back
to DFT resolution, and applied to the noisy spectrum (noisy phase kept).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .audio_io import AudioBuffer
from .dictionary import Dictionary
from .dsp import (
    ComplexSpectrogram,
    apply_filterbank,
    expand_band_gains,
    istft,
    power_spectrogram,
    stft,
)

MaskMode = Literal["outlier", "vq_baseline"]


@dataclass(frozen=True)
class EnhanceConfig:
    """Knobs for a single enhancement run.

    threshold is the outlier p-value cutoff; 0 disables noise removal
    entirely (identity mask), 1 marks every nonzero bin. gain_floor
    bounds the per-bin suppression from below. sqrt_gain applies the
    square root of the power-ratio gain to the complex spectrum instead
    of the gain itself.
    """

    threshold: float = 1e-4
    epsilon_floor: float = 1e-10
    mask_mode: MaskMode = "outlier"
    gain_floor: float = 0.0
    sqrt_gain: bool = False

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if not 0.0 <= self.gain_floor < 1.0:
            raise ValueError(f"gain_floor must be in [0, 1), got {self.gain_floor}")
        if self.mask_mode not in ("outlier", "vq_baseline"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")
        if not self.epsilon_floor > 0:
            raise ValueError(f"epsilon_floor must be positive, got {self.epsilon_floor}")


@dataclass(frozen=True)
class MatchResult:
    """Best dictionary entry for one noisy patch."""

    entry_index: int
    scale: float
    log_distance: float


@dataclass(frozen=True)
class PatchMask:
    """Per-element gains for the patch starting at start_frame."""

    gains: np.ndarray
    start_frame: int


@dataclass(frozen=True)
class PatchDiagnostic:
    """One record per matched patch, for the diagnostics stream."""

    start_frame: int
    entry_index: int
    scale: float
    log_distance: float
    n_outliers: int


@dataclass
class MaskComputation:
    """Everything produced on the way to the final DFT-resolution mask."""

    spec: ComplexSpectrogram
    features: np.ndarray          # (n_patches, feature_dim) floored band powers
    patch_gains: np.ndarray       # (n_patches, feature_dim) in [gain_floor, 1]
    outlier_flags: np.ndarray     # (n_patches, feature_dim) bool
    band_gains: np.ndarray        # (n_frames, n_bands)
    dft_gains: np.ndarray         # (n_frames, n_bins)
    diagnostics: list[PatchDiagnostic]


def optimal_scale(noisy: np.ndarray, entry: np.ndarray) -> float:
    """Closed-form level correction: geometric mean of elementwise ratios.

    This is the stationary point of the squared log distance between the
    noisy vector and the scaled entry.
    """
    noisy = np.asarray(noisy, dtype=np.float64)
    entry = np.asarray(entry, dtype=np.float64)
    if noisy.shape != entry.shape:
        raise ValueError(f"shape mismatch: {noisy.shape} vs {entry.shape}")
    if np.any(noisy <= 0) or np.any(entry <= 0):
        raise ValueError("vectors must be strictly positive (apply the floor first)")
    return float(np.exp(np.mean(np.log(noisy) - np.log(entry))))


def match_features(features: np.ndarray, dictionary: Dictionary) -> list[MatchResult]:
    """Best dictionary entry per feature row, level-corrected, ties -> lowest index.

    For each row computes the optimal scale against every entry and the
    residual squared log distance, then keeps the minimizer.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != dictionary.feature_dim:
        raise ValueError(
            f"feature length {features.shape[1]} != dictionary entry length "
            f"{dictionary.feature_dim}"
        )
    if np.any(features <= 0) or not np.all(np.isfinite(features)):
        raise ValueError("features must be strictly positive and finite")
    log_f = np.log(features)
    log_e = np.log(dictionary.entries.astype(np.float64))

    results = []
    # Chunk the patch axis so the (chunk, K, D) residual tensor stays small.
    chunk = max(1, int(2e6 / max(log_e.size, 1)))
    for lo in range(0, log_f.shape[0], chunk):
        diff = log_f[lo : lo + chunk, None, :] - log_e[None, :, :]
        log_scale = diff.mean(axis=2)
        dist = ((diff - log_scale[:, :, None]) ** 2).sum(axis=2)
        best = dist.argmin(axis=1)
        rows = np.arange(best.size)
        for j, s, d in zip(best, log_scale[rows, best], dist[rows, best]):
            results.append(MatchResult(int(j), float(np.exp(s)), float(d)))
    return results


def best_match(noisy: np.ndarray, dictionary: Dictionary) -> MatchResult:
    """Search the whole dictionary for the closest entry to one noisy patch."""
    if dictionary.n_entries == 0:
        raise ValueError("dictionary is empty")
    return match_features(np.atleast_2d(noisy), dictionary)[0]


def pvalue_exponential(observed: float, mean: float) -> float:
    """Tail probability P(X >= observed) for X exponential with the given mean."""
    if mean <= 0:
        raise ValueError(f"mean must be positive, got {mean}")
    if observed < 0:
        raise ValueError(f"observed power must be nonnegative, got {observed}")
    return math.exp(-observed / mean)


def estimate_noise_patch(
    noisy: np.ndarray, speech_estimate: np.ndarray, threshold: float
) -> np.ndarray:
    """Spectral-subtraction noise estimate restricted to outlier bins.

    A bin is an outlier when its exponential tail probability against the
    matched speech estimate is below threshold; elsewhere the noise is
    assumed absent. Output is nonnegative and never exceeds the noisy power.
    """
    noisy = np.asarray(noisy, dtype=np.float64)
    speech_estimate = np.asarray(speech_estimate, dtype=np.float64)
    if noisy.shape != speech_estimate.shape:
        raise ValueError(f"shape mismatch: {noisy.shape} vs {speech_estimate.shape}")
    if np.any(speech_estimate <= 0):
        raise ValueError("speech estimate must be strictly positive")
    pvalues = np.exp(-noisy / speech_estimate)
    outliers = pvalues < threshold
    return np.where(outliers, np.maximum(noisy - speech_estimate, 0.0), 0.0)


def mask_patch(noisy: np.ndarray, noise: np.ndarray, gain_floor: float = 0.0) -> np.ndarray:
    """Wiener-like gains (noisy - noise) / noisy, floored at gain_floor."""
    noisy = np.asarray(noisy, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noisy.shape != noise.shape:
        raise ValueError(f"shape mismatch: {noisy.shape} vs {noise.shape}")
    if np.any(noisy <= 0):
        raise ValueError("noisy powers must be strictly positive (apply the floor first)")
    return np.maximum((noisy - noise) / noisy, gain_floor)


def vq_mask_patch(
    noisy: np.ndarray, speech_estimate: np.ndarray, gain_floor: float = 0.0
) -> np.ndarray:
    """Baseline gains from direct quantization: speech estimate over noisy.

    The ratio can exceed 1 where the matched entry is louder than the
    input; it is clamped so the baseline never amplifies.
    """
    noisy = np.asarray(noisy, dtype=np.float64)
    speech_estimate = np.asarray(speech_estimate, dtype=np.float64)
    if noisy.shape != speech_estimate.shape:
        raise ValueError(f"shape mismatch: {noisy.shape} vs {speech_estimate.shape}")
    if np.any(noisy <= 0) or np.any(speech_estimate <= 0):
        raise ValueError("both vectors must be strictly positive")
    return np.maximum(np.minimum(speech_estimate / noisy, 1.0), gain_floor)


def aggregate_frame_masks(
    patch_masks: Sequence[PatchMask], n_frames: int, patch_len: int, n_bands: int
) -> np.ndarray:
    """Average overlapping patch gains into per-frame band gains.

    Patches start at every frame 0..n_frames - patch_len; a frame covered
    by several patches takes the arithmetic mean of their gains at the
    matching within-patch offset, and edge frames average whatever covers
    them.
    """
    n_starts = n_frames - patch_len + 1
    if n_starts < 1:
        raise ValueError(f"{n_frames} frames cannot host a patch of {patch_len}")
    if len(patch_masks) != n_starts:
        raise ValueError(
            f"expected one mask per start frame ({n_starts}), got {len(patch_masks)}"
        )
    gains = np.zeros((n_starts, patch_len * n_bands))
    seen = set()
    for mask in patch_masks:
        if not 0 <= mask.start_frame < n_starts or mask.start_frame in seen:
            raise ValueError(f"invalid or duplicate start frame {mask.start_frame}")
        if mask.gains.shape != (patch_len * n_bands,):
            raise ValueError(
                f"mask at frame {mask.start_frame} has shape {mask.gains.shape}, "
                f"expected ({patch_len * n_bands},)"
            )
        seen.add(mask.start_frame)
        gains[mask.start_frame] = mask.gains

    stacked = gains.reshape(n_starts, patch_len, n_bands)
    sums = np.zeros((n_frames, n_bands))
    counts = np.zeros(n_frames)
    for offset in range(patch_len):
        sums[offset : offset + n_starts] += stacked[:, offset, :]
        counts[offset : offset + n_starts] += 1.0
    return sums / counts[:, None]


def compute_mask(
    noisy: AudioBuffer, dictionary: Dictionary, config: EnhanceConfig
) -> MaskComputation:
    """Run the masking pipeline up to (but not including) synthesis.

    Produces per-patch gains and outlier flags, frame-level band gains,
    and the final DFT-resolution gains, along with per-patch diagnostics.
    """
    stft_cfg = dictionary.stft_config
    if noisy.sample_rate != stft_cfg.sample_rate:
        raise ValueError(
            f"input rate {noisy.sample_rate} Hz does not match dictionary rate "
            f"{stft_cfg.sample_rate} Hz"
        )
    spec = stft(noisy, stft_cfg)
    bank = dictionary.filterbank()
    reduced = np.maximum(
        apply_filterbank(power_spectrogram(spec), bank), config.epsilon_floor
    )
    n_frames = reduced.shape[0]
    patch_len = dictionary.patch_len
    if n_frames < patch_len:
        raise ValueError(
            f"input too short: {n_frames} frames < one patch of {patch_len}"
        )
    n_starts = n_frames - patch_len + 1
    idx = np.arange(n_starts)[:, None] + np.arange(patch_len)[None, :]
    features = reduced[idx].reshape(n_starts, -1)

    matches = match_features(features, dictionary)
    entries = dictionary.entries.astype(np.float64)

    patch_masks = []
    patch_gains = np.empty_like(features)
    outlier_flags = np.zeros(features.shape, dtype=bool)
    diagnostics = []
    for start, match in enumerate(matches):
        feature = features[start]
        speech_est = match.scale * entries[match.entry_index]
        flags = np.exp(-feature / speech_est) < config.threshold
        if config.mask_mode == "vq_baseline":
            gains = vq_mask_patch(feature, speech_est, config.gain_floor)
        else:
            noise = estimate_noise_patch(feature, speech_est, config.threshold)
            gains = mask_patch(feature, noise, config.gain_floor)
        patch_gains[start] = gains
        outlier_flags[start] = flags
        patch_masks.append(PatchMask(gains=gains, start_frame=start))
        diagnostics.append(
            PatchDiagnostic(
                start_frame=start,
                entry_index=match.entry_index,
                scale=match.scale,
                log_distance=match.log_distance,
                n_outliers=int(flags.sum()),
            )
        )

    band_gains = aggregate_frame_masks(
        patch_masks, n_frames, patch_len, dictionary.n_bands
    )
    dft_gains = expand_band_gains(band_gains, bank)
    return MaskComputation(
        spec=spec,
        features=features,
        patch_gains=patch_gains,
        outlier_flags=outlier_flags,
        band_gains=band_gains,
        dft_gains=dft_gains,
        diagnostics=diagnostics,
    )


def apply_mask(spec: ComplexSpectrogram, dft_gains: np.ndarray, sqrt_gain: bool) -> ComplexSpectrogram:
    """Scale the complex spectrum by the mask (noisy phase retained)."""
    factor = np.sqrt(dft_gains) if sqrt_gain else dft_gains
    return ComplexSpectrogram(spec.frames * factor, spec.config)


def _fit_length(samples: np.ndarray, n: int) -> np.ndarray:
    if len(samples) >= n:
        return samples[:n]
    return np.concatenate([samples, np.zeros(n - len(samples))])


def enhance(
    noisy: AudioBuffer, dictionary: Dictionary, config: EnhanceConfig | None = None
) -> tuple[AudioBuffer, list[PatchDiagnostic]]:
    """Enhance one utterance; output has the same length as the input.

    Returns the enhanced audio and the per-patch diagnostics (matched entry,
    level correction, log distance, outlier count).
    """
    config = config or EnhanceConfig()
    mask = compute_mask(noisy, dictionary, config)
    masked = apply_mask(mask.spec, mask.dft_gains, config.sqrt_gain)
    out = istft(masked)
    return (
        AudioBuffer(_fit_length(out.samples, len(noisy)), noisy.sample_rate),
        mask.diagnostics,
    )
