"""Pydantic request/response models for the HTTP service.

Audio travels as base64-encoded mono 16-bit PCM WAV bytes; dictionaries as
base64 of the binary dictionary format.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    dictionary_loaded: bool


class DictionaryInfo(BaseModel):
    n_entries: int
    patch_len: int
    n_bands: int
    sample_rate: int
    window_len: int
    hop: int
    fft_size: int
    epsilon_floor: float
    rng_seed: int
    provenance: str


class LoadDictionaryRequest(BaseModel):
    """Load from a server-side path or an inline blob (exactly one)."""

    path: Optional[str] = None
    dictionary_b64: Optional[str] = None


class TrainRequest(BaseModel):
    """Provide the corpus inline or as a server-side directory (exactly one)."""

    corpus_wavs_b64: Optional[list[str]] = None
    corpus_dir: Optional[str] = None
    patch_len: int = Field(default=2, ge=1)
    n_bands: int = Field(default=60, ge=2)
    n_clusters: int = Field(default=800, ge=1)
    n_patches: int = Field(default=10000, ge=1)
    stride: Optional[int] = Field(default=None, description="Defaults to patch_len + 1.")
    window_ms: float = Field(default=10.0, gt=0)
    sample_rate: int = Field(default=16000, gt=0)
    max_iters: int = Field(default=100, ge=1)
    seed: int = 0
    out_path: Optional[str] = Field(default=None, description="Also save server-side.")
    load: bool = Field(default=True, description="Keep as the service dictionary.")


class TrainResponse(BaseModel):
    info: DictionaryInfo
    dictionary_b64: str
    n_patches_collected: int
    n_patches_used: int
    n_iterations: int
    final_objective: float
    saved_to: Optional[str] = None


class PatchDiagnosticModel(BaseModel):
    start_frame: int
    entry_index: int
    scale: float
    log_distance: float
    n_outliers: int


class EnhanceRequest(BaseModel):
    audio_wav_b64: str
    threshold: float = Field(default=1e-4, ge=0.0, le=1.0)
    mode: Literal["outlier", "vq"] = "outlier"
    gain_floor: float = Field(default=0.0, ge=0.0, lt=1.0)
    sqrt_gain: bool = False
    include_diagnostics: bool = False
    dictionary_b64: Optional[str] = Field(
        default=None, description="Use this dictionary instead of the loaded one."
    )


class EnhanceResponse(BaseModel):
    audio_wav_b64: str
    sample_rate: int
    n_patches: int
    n_outlier_bins: int
    diagnostics: Optional[list[PatchDiagnosticModel]] = None


class MixRequest(BaseModel):
    clean_wav_b64: str
    noise_wav_b64: str
    snr_db: float
    seed: int = 0


class MixResponse(BaseModel):
    noisy_wav_b64: str
    scaled_noise_wav_b64: str
    noise_scale: float


class EvaluateRequest(BaseModel):
    reference_wav_b64: str
    test_wav_b64: str


class EvaluateResponse(BaseModel):
    seg_snr_db: float
    fw_seg_snr_db: float


class DistortRequest(BaseModel):
    clean_wav_b64: str
    noise_wav_b64: str
    snr_db: float
    threshold: float = Field(default=1e-4, ge=0.0, le=1.0)
    mode: Literal["outlier", "vq"] = "outlier"
    seed: int = 0
    dictionary_b64: Optional[str] = None


class DistortResponse(BaseModel):
    seg_snr_db: float
    fw_seg_snr_db: float
    snr_db: float
    mode: str
    threshold: float
