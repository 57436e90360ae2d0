"""specsieve: dictionary-based single-channel speech enhancement.

Train a dictionary of clean-speech spectral patches, then enhance noisy
audio by flagging time-frequency bins that are statistical outliers to the
best-matching entry and masking them out.
"""

from .audio_io import AudioBuffer, read_wav, write_wav
from .dictionary import (
    Dictionary,
    TrainConfig,
    TrainSummary,
    kmeans_log,
    load_dictionary,
    normalize_sentence_power,
    sample_patches,
    save_dictionary,
    train_dictionary,
)
from .dsp import (
    ComplexSpectrogram,
    FilterBank,
    StftConfig,
    apply_filterbank,
    build_uniform_filterbank,
    expand_band_gains,
    istft,
    make_stft_config,
    power_spectrogram,
    stft,
)
from .enhancer import (
    EnhanceConfig,
    MatchResult,
    PatchDiagnostic,
    best_match,
    compute_mask,
    enhance,
    estimate_noise_patch,
    mask_patch,
    optimal_scale,
    pvalue_exponential,
    vq_mask_patch,
)
from .errors import AudioFormatError, DataError, DictionaryFormatError
from .evaluation import (
    MetricReport,
    evaluate_pair,
    fw_seg_snr,
    mix_at_snr,
    segmental_snr,
    speech_distortion_run,
)

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "AudioFormatError",
    "ComplexSpectrogram",
    "DataError",
    "Dictionary",
    "DictionaryFormatError",
    "EnhanceConfig",
    "FilterBank",
    "MatchResult",
    "MetricReport",
    "PatchDiagnostic",
    "StftConfig",
    "TrainConfig",
    "TrainSummary",
    "apply_filterbank",
    "best_match",
    "build_uniform_filterbank",
    "compute_mask",
    "enhance",
    "estimate_noise_patch",
    "evaluate_pair",
    "expand_band_gains",
    "fw_seg_snr",
    "istft",
    "kmeans_log",
    "load_dictionary",
    "make_stft_config",
    "mask_patch",
    "mix_at_snr",
    "normalize_sentence_power",
    "optimal_scale",
    "power_spectrogram",
    "pvalue_exponential",
    "read_wav",
    "sample_patches",
    "save_dictionary",
    "segmental_snr",
    "speech_distortion_run",
    "stft",
    "train_dictionary",
    "vq_mask_patch",
    "write_wav",
]
