"""Clean-speech patch dictionary: training, persistence, loading.

Training pipeline per sentence: STFT -> power -> per-sentence power
normalization -> non-overlapping patch sampling in the filter-band domain.
The pooled patches are clustered with k-means under squared log distance;
centroid updates use the elementwise geometric mean, which is the exact
minimizer of that distance, so the objective never increases.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioBuffer
from .dsp import (
    FilterBank,
    StftConfig,
    apply_filterbank,
    build_uniform_filterbank,
    power_spectrogram,
    stft,
)
from .errors import DataError, DictionaryFormatError

DICT_MAGIC = b"ODCT"
DICT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Patch sampling and clustering parameters.

    sample_stride is the frame distance between consecutive training patch
    starts; it must exceed patch_len so training patches never overlap.
    """

    patch_len: int = 2
    sample_stride: int = 3
    n_bands: int = 60
    n_clusters: int = 800
    n_patches: int = 10000
    epsilon_floor: float = 1e-10
    max_iters: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if self.patch_len < 1:
            raise ValueError(f"patch_len must be >= 1, got {self.patch_len}")
        if self.sample_stride <= self.patch_len:
            raise ValueError(
                f"sample_stride must exceed patch_len to avoid overlapped patches, "
                f"got stride={self.sample_stride}, patch_len={self.patch_len}"
            )
        if self.n_bands < 2:
            raise ValueError(f"n_bands must be >= 2, got {self.n_bands}")
        if self.n_clusters < 1:
            raise ValueError(f"n_clusters must be >= 1, got {self.n_clusters}")
        if self.n_patches < self.n_clusters:
            raise ValueError(
                f"n_patches ({self.n_patches}) must be >= n_clusters ({self.n_clusters})"
            )
        if not self.epsilon_floor > 0:
            raise ValueError(f"epsilon_floor must be positive, got {self.epsilon_floor}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class Dictionary:
    """K cluster centroids plus the analysis metadata to reproduce features.

    entries has shape (n_entries, patch_len * n_bands), float32, every value
    >= epsilon_floor so logarithms stay finite.
    """

    entries: np.ndarray
    patch_len: int
    n_bands: int
    stft_config: StftConfig
    epsilon_floor: float
    rng_seed: int
    provenance: str

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.float32)
        if entries.ndim != 2:
            raise ValueError(f"entries must be 2-D, got shape {entries.shape}")
        if entries.shape[0] < 1:
            raise ValueError("dictionary needs at least one entry")
        if entries.shape[1] != self.patch_len * self.n_bands:
            raise ValueError(
                f"entry length {entries.shape[1]} != patch_len*n_bands = "
                f"{self.patch_len * self.n_bands}"
            )
        if not np.all(np.isfinite(entries)) or np.any(entries <= 0):
            raise ValueError("entries must be finite and strictly positive")
        object.__setattr__(self, "entries", entries)

    @property
    def n_entries(self) -> int:
        return self.entries.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.entries.shape[1]

    def filterbank(self) -> FilterBank:
        return build_uniform_filterbank(self.n_bands, self.stft_config.fft_size)


@dataclass
class TrainSummary:
    """Bookkeeping from a training run."""

    n_sentences: int
    n_patches_collected: int
    n_patches_used: int
    n_iterations: int
    objective_trace: list[float]
    assignments: np.ndarray = field(repr=False)

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]


def normalize_sentence_power(power: np.ndarray) -> tuple[np.ndarray, float]:
    """Scale a power spectrogram so the mean time-frequency bin power is 1.

    Returns (scaled spectrogram, normalization constant A) with
    A = bin count / total power.
    """
    power = np.asarray(power, dtype=np.float64)
    if power.size == 0:
        raise ValueError("cannot normalize an empty spectrogram")
    total = float(power.sum())
    if total <= 0.0:
        raise DataError("silent sentence: spectrogram has no power to normalize")
    scale = power.size / total
    return power * scale, scale


def sample_patches(power: np.ndarray, bank: FilterBank, cfg: TrainConfig) -> np.ndarray:
    """Cut non-overlapping patches of patch_len frames in the band domain.

    Patches start at frames 0, stride, 2*stride, ...; each is the
    concatenation of patch_len consecutive band-power frames (frame-major),
    floored at epsilon_floor. Returns shape (n_patches, patch_len * n_bands);
    fewer than patch_len frames yields an empty array.
    """
    reduced = apply_filterbank(power, bank)
    n_frames = reduced.shape[0]
    starts = np.arange(0, max(n_frames - cfg.patch_len + 1, 0), cfg.sample_stride)
    if starts.size == 0:
        return np.zeros((0, cfg.patch_len * bank.n_bands))
    idx = starts[:, None] + np.arange(cfg.patch_len)[None, :]
    patches = reduced[idx].reshape(starts.size, -1)
    return np.maximum(patches, cfg.epsilon_floor)


def _log_sq_distances(log_points: np.ndarray, log_centroids: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances in the log domain, (P, K)."""
    p_sq = np.einsum("ij,ij->i", log_points, log_points)
    c_sq = np.einsum("ij,ij->i", log_centroids, log_centroids)
    d = p_sq[:, None] + c_sq[None, :] - 2.0 * (log_points @ log_centroids.T)
    return np.maximum(d, 0.0)


def kmeans_log(
    patches: np.ndarray,
    n_clusters: int,
    max_iters: int = 100,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """k-means under squared log distance.

    Assignment picks the nearest centroid (ties -> lowest index); the update
    step takes the elementwise geometric mean of each cluster's members.
    Empty clusters are reseeded with the patch currently farthest from its
    centroid. Returns (centroids (K, D), assignments (P,), objective trace),
    where the trace is evaluated after each assignment step and is
    non-increasing.
    """
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 2:
        raise ValueError(f"patches must be 2-D, got shape {patches.shape}")
    n_points = patches.shape[0]
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    if n_points < n_clusters:
        raise ValueError(
            f"need at least as many patches as clusters: {n_points} < {n_clusters}"
        )
    if np.any(patches <= 0) or not np.all(np.isfinite(patches)):
        raise ValueError("patches must be strictly positive and finite")

    log_p = np.log(patches)
    rng = np.random.default_rng(seed)
    init = rng.choice(n_points, size=n_clusters, replace=False)
    log_c = log_p[init].copy()

    assignments = np.full(n_points, -1, dtype=np.int64)
    trace: list[float] = []
    for _ in range(max_iters):
        d = _log_sq_distances(log_p, log_c)
        new_assign = d.argmin(axis=1)
        min_d = d[np.arange(n_points), new_assign]

        # Reseed clusters that lost all members from the worst-fit patch.
        counts = np.bincount(new_assign, minlength=n_clusters)
        for k in np.flatnonzero(counts == 0):
            worst = int(min_d.argmax())
            log_c[k] = log_p[worst]
            new_assign[worst] = k
            min_d[worst] = 0.0
            counts = np.bincount(new_assign, minlength=n_clusters)

        trace.append(float(min_d.sum()))
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign

        sums = np.zeros_like(log_c)
        np.add.at(sums, assignments, log_p)
        log_c = sums / counts[:, None]

    return np.exp(log_c), assignments, trace


def _f32_floor(value: float) -> np.float32:
    """Smallest float32 >= value (so flooring in float32 honors a float64 bound)."""
    f = np.float32(value)
    if float(f) < value:
        f = np.nextafter(f, np.float32(np.inf))
    return f


def train_dictionary(
    corpus: list[AudioBuffer],
    cfg: TrainConfig,
    stft_cfg: StftConfig,
) -> tuple[Dictionary, TrainSummary]:
    """Run the full training pipeline over a corpus of clean sentences.

    Sentences that are silent or shorter than one patch contribute nothing.
    If more than cfg.n_patches patches are collected, a uniform random
    subset (seeded) is kept. Raises DataError when fewer patches than
    clusters are available.
    """
    if not corpus:
        raise ValueError("corpus must contain at least one sentence")
    bank = build_uniform_filterbank(cfg.n_bands, stft_cfg.fft_size)
    hasher = hashlib.sha256()
    pooled = []
    for sentence in corpus:
        hasher.update(struct.pack("<I", sentence.sample_rate))
        hasher.update(sentence.samples.tobytes())
        if len(sentence) < stft_cfg.window_len:
            continue
        power = power_spectrogram(stft(sentence, stft_cfg))
        if power.sum() <= 0.0:
            continue
        normalized, _ = normalize_sentence_power(power)
        patches = sample_patches(normalized, bank, cfg)
        if patches.size:
            pooled.append(patches)

    collected = np.concatenate(pooled, axis=0) if pooled else np.zeros((0, 0))
    n_collected = collected.shape[0]
    if n_collected < cfg.n_clusters:
        raise DataError(
            f"collected {n_collected} training patches but need at least "
            f"{cfg.n_clusters} (one per cluster)"
        )

    rng = np.random.default_rng(cfg.rng_seed)
    if n_collected > cfg.n_patches:
        keep = np.sort(rng.choice(n_collected, size=cfg.n_patches, replace=False))
        collected = collected[keep]

    centroids, assignments, trace = kmeans_log(
        collected, cfg.n_clusters, max_iters=cfg.max_iters, seed=cfg.rng_seed
    )
    entries = np.maximum(
        centroids.astype(np.float32), _f32_floor(cfg.epsilon_floor)
    )
    provenance = (
        f"corpus_sha256={hasher.hexdigest()[:16]};sentences={len(corpus)};"
        f"patches_collected={n_collected};patches_used={collected.shape[0]};"
        f"kmeans_iters={len(trace)};seed={cfg.rng_seed}"
    )
    dictionary = Dictionary(
        entries=entries,
        patch_len=cfg.patch_len,
        n_bands=cfg.n_bands,
        stft_config=stft_cfg,
        epsilon_floor=cfg.epsilon_floor,
        rng_seed=cfg.rng_seed,
        provenance=provenance,
    )
    summary = TrainSummary(
        n_sentences=len(corpus),
        n_patches_collected=n_collected,
        n_patches_used=collected.shape[0],
        n_iterations=len(trace),
        objective_trace=trace,
        assignments=assignments,
    )
    return dictionary, summary


_HEADER = struct.Struct("<4sIIIIIIII d Q")


def dictionary_to_bytes(dictionary: Dictionary) -> bytes:
    """Serialize to the binary dictionary format (little-endian, f32 entries)."""
    cfg = dictionary.stft_config
    if cfg.window != "sqrt_hann":
        raise ValueError(
            f"dictionary format stores only sqrt_hann-window configs, got {cfg.window!r}"
        )
    prov = dictionary.provenance.encode("utf-8")
    header = _HEADER.pack(
        DICT_MAGIC,
        DICT_VERSION,
        cfg.sample_rate,
        cfg.window_len,
        cfg.hop,
        cfg.fft_size,
        dictionary.n_bands,
        dictionary.patch_len,
        dictionary.n_entries,
        dictionary.epsilon_floor,
        dictionary.rng_seed,
    )
    body = dictionary.entries.astype("<f4").tobytes(order="C")
    return header + struct.pack("<I", len(prov)) + prov + body


def save_dictionary(dictionary: Dictionary, path) -> None:
    """Write the dictionary file format to path."""
    blob = dictionary_to_bytes(dictionary)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_dictionary(path) -> Dictionary:
    """Parse a dictionary file, with distinct errors for each failure mode."""
    with open(path, "rb") as fh:
        blob = fh.read()
    return dictionary_from_bytes(blob)


def dictionary_from_bytes(blob: bytes) -> Dictionary:
    if len(blob) < _HEADER.size + 4:
        raise DictionaryFormatError("truncated dictionary file: header incomplete")
    (
        magic,
        version,
        sample_rate,
        window_len,
        hop,
        fft_size,
        n_bands,
        patch_len,
        n_entries,
        eps_floor,
        rng_seed,
    ) = _HEADER.unpack_from(blob, 0)
    if magic != DICT_MAGIC:
        raise DictionaryFormatError(f"bad magic {magic!r}, expected {DICT_MAGIC!r}")
    if version != DICT_VERSION:
        raise DictionaryFormatError(
            f"unsupported dictionary version {version}, expected {DICT_VERSION}"
        )
    offset = _HEADER.size
    (prov_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if len(blob) < offset + prov_len:
        raise DictionaryFormatError("truncated dictionary file: provenance incomplete")
    provenance = blob[offset : offset + prov_len].decode("utf-8")
    offset += prov_len

    n_values = n_entries * patch_len * n_bands
    expected = offset + 4 * n_values
    if len(blob) < expected:
        raise DictionaryFormatError(
            f"truncated dictionary file: expected {expected} bytes, got {len(blob)}"
        )
    if len(blob) > expected:
        raise DictionaryFormatError(
            f"dimension inconsistency: {len(blob) - expected} trailing bytes after "
            f"{n_values} entry values"
        )
    entries = np.frombuffer(blob, dtype="<f4", count=n_values, offset=offset)
    entries = entries.reshape(n_entries, patch_len * n_bands).copy()
    if not np.all(np.isfinite(entries)) or np.any(entries <= 0):
        raise DictionaryFormatError("dictionary entries must be finite and positive")
    try:
        stft_cfg = StftConfig(
            sample_rate=sample_rate,
            window_len=window_len,
            hop=hop,
            fft_size=fft_size,
        )
        return Dictionary(
            entries=entries,
            patch_len=patch_len,
            n_bands=n_bands,
            stft_config=stft_cfg,
            epsilon_floor=eps_floor,
            rng_seed=rng_seed,
            provenance=provenance,
        )
    except ValueError as exc:
        raise DictionaryFormatError(f"dimension inconsistency: {exc}") from exc
