"""FastAPI service wrapping the enhancement library.

The service holds at most one dictionary in memory (loaded at startup,
via /dictionary/load, or by training with load=true); /enhance uses it
unless the request carries its own dictionary blob. All handlers are
stateless apart from that single slot.
"""

from __future__ import annotations

import base64
import binascii
import io
from pathlib import Path

from fastapi import FastAPI, HTTPException

from ..audio_io import AudioBuffer, read_wav, write_wav
from ..dictionary import (
    Dictionary,
    TrainConfig,
    dictionary_from_bytes,
    dictionary_to_bytes,
    load_dictionary,
    save_dictionary,
    train_dictionary,
)
from ..dsp import make_stft_config
from ..enhancer import EnhanceConfig, enhance
from ..errors import DataError
from ..evaluation import evaluate_pair, mix_at_snr, speech_distortion_run
from .schemas import (
    DictionaryInfo,
    DistortRequest,
    DistortResponse,
    EnhanceRequest,
    EnhanceResponse,
    EvaluateRequest,
    EvaluateResponse,
    HealthResponse,
    LoadDictionaryRequest,
    MixRequest,
    MixResponse,
    PatchDiagnosticModel,
    TrainRequest,
    TrainResponse,
)


def _decode_wav(b64: str, what: str) -> AudioBuffer:
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(status_code=400, detail=f"{what}: invalid base64")
    try:
        return read_wav(io.BytesIO(raw))
    except DataError as exc:
        raise HTTPException(status_code=400, detail=f"{what}: {exc}")


def _encode_wav(audio: AudioBuffer) -> str:
    buf = io.BytesIO()
    write_wav(buf, audio)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _decode_dictionary(b64: str) -> Dictionary:
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(status_code=400, detail="dictionary_b64: invalid base64")
    try:
        return dictionary_from_bytes(raw)
    except DataError as exc:
        raise HTTPException(status_code=400, detail=str(exc))


def _info(dictionary: Dictionary) -> DictionaryInfo:
    cfg = dictionary.stft_config
    return DictionaryInfo(
        n_entries=dictionary.n_entries,
        patch_len=dictionary.patch_len,
        n_bands=dictionary.n_bands,
        sample_rate=cfg.sample_rate,
        window_len=cfg.window_len,
        hop=cfg.hop,
        fft_size=cfg.fft_size,
        epsilon_floor=dictionary.epsilon_floor,
        rng_seed=dictionary.rng_seed,
        provenance=dictionary.provenance,
    )


def create_app(dictionary_path: str | None = None) -> FastAPI:
    app = FastAPI(
        title="specsieve",
        description="Dictionary-based speech enhancement with outlier noise detection.",
        version="0.1.0",
    )
    app.state.dictionary = load_dictionary(dictionary_path) if dictionary_path else None

    def current_dictionary(override_b64: str | None) -> Dictionary:
        if override_b64:
            return _decode_dictionary(override_b64)
        if app.state.dictionary is None:
            raise HTTPException(
                status_code=409,
                detail="no dictionary loaded; train one, POST /dictionary/load, "
                "or send dictionary_b64 with the request",
            )
        return app.state.dictionary

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(
            status="ok", dictionary_loaded=app.state.dictionary is not None
        )

    @app.get("/dictionary", response_model=DictionaryInfo)
    def dictionary_info():
        if app.state.dictionary is None:
            raise HTTPException(status_code=404, detail="no dictionary loaded")
        return _info(app.state.dictionary)

    @app.post("/dictionary/load", response_model=DictionaryInfo)
    def dictionary_load(request: LoadDictionaryRequest):
        if (request.path is None) == (request.dictionary_b64 is None):
            raise HTTPException(
                status_code=400, detail="provide exactly one of path or dictionary_b64"
            )
        if request.path is not None:
            try:
                dictionary = load_dictionary(request.path)
            except (DataError, OSError) as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        else:
            dictionary = _decode_dictionary(request.dictionary_b64)
        app.state.dictionary = dictionary
        return _info(dictionary)

    @app.post("/train", response_model=TrainResponse)
    def train(request: TrainRequest):
        if (request.corpus_wavs_b64 is None) == (request.corpus_dir is None):
            raise HTTPException(
                status_code=400,
                detail="provide exactly one of corpus_wavs_b64 or corpus_dir",
            )
        try:
            stft_cfg = make_stft_config(request.sample_rate, request.window_ms)
            train_cfg = TrainConfig(
                patch_len=request.patch_len,
                sample_stride=request.stride or request.patch_len + 1,
                n_bands=request.n_bands,
                n_clusters=request.n_clusters,
                n_patches=request.n_patches,
                max_iters=request.max_iters,
                rng_seed=request.seed,
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

        corpus = []
        if request.corpus_wavs_b64 is not None:
            for i, b64 in enumerate(request.corpus_wavs_b64):
                audio = _decode_wav(b64, f"corpus_wavs_b64[{i}]")
                if audio.sample_rate != stft_cfg.sample_rate:
                    raise HTTPException(
                        status_code=400,
                        detail=f"corpus_wavs_b64[{i}]: rate {audio.sample_rate} != "
                        f"{stft_cfg.sample_rate}",
                    )
                corpus.append(audio)
        else:
            for wav_path in sorted(Path(request.corpus_dir).glob("*.wav")):
                try:
                    audio = read_wav(str(wav_path))
                except DataError:
                    continue
                if audio.sample_rate == stft_cfg.sample_rate:
                    corpus.append(audio)
        if not corpus:
            raise HTTPException(status_code=400, detail="no usable corpus sentences")

        try:
            dictionary, summary = train_dictionary(corpus, train_cfg, stft_cfg)
        except DataError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

        saved_to = None
        if request.out_path:
            save_dictionary(dictionary, request.out_path)
            saved_to = request.out_path
        if request.load:
            app.state.dictionary = dictionary
        return TrainResponse(
            info=_info(dictionary),
            dictionary_b64=base64.b64encode(dictionary_to_bytes(dictionary)).decode("ascii"),
            n_patches_collected=summary.n_patches_collected,
            n_patches_used=summary.n_patches_used,
            n_iterations=summary.n_iterations,
            final_objective=summary.final_objective,
            saved_to=saved_to,
        )

    @app.post("/enhance", response_model=EnhanceResponse)
    def enhance_endpoint(request: EnhanceRequest):
        dictionary = current_dictionary(request.dictionary_b64)
        noisy = _decode_wav(request.audio_wav_b64, "audio_wav_b64")
        try:
            config = EnhanceConfig(
                threshold=request.threshold,
                mask_mode="vq_baseline" if request.mode == "vq" else "outlier",
                gain_floor=request.gain_floor,
                sqrt_gain=request.sqrt_gain,
            )
            enhanced, diagnostics = enhance(noisy, dictionary, config)
        except (ValueError, DataError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        diag_models = None
        if request.include_diagnostics:
            diag_models = [
                PatchDiagnosticModel(
                    start_frame=rec.start_frame,
                    entry_index=rec.entry_index,
                    scale=rec.scale,
                    log_distance=rec.log_distance,
                    n_outliers=rec.n_outliers,
                )
                for rec in diagnostics
            ]
        return EnhanceResponse(
            audio_wav_b64=_encode_wav(enhanced),
            sample_rate=enhanced.sample_rate,
            n_patches=len(diagnostics),
            n_outlier_bins=sum(rec.n_outliers for rec in diagnostics),
            diagnostics=diag_models,
        )

    @app.post("/mix", response_model=MixResponse)
    def mix_endpoint(request: MixRequest):
        clean = _decode_wav(request.clean_wav_b64, "clean_wav_b64")
        noise = _decode_wav(request.noise_wav_b64, "noise_wav_b64")
        try:
            noisy, scaled, scale = mix_at_snr(clean, noise, request.snr_db, seed=request.seed)
        except (ValueError, DataError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return MixResponse(
            noisy_wav_b64=_encode_wav(noisy),
            scaled_noise_wav_b64=_encode_wav(scaled),
            noise_scale=scale,
        )

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate_endpoint(request: EvaluateRequest):
        reference = _decode_wav(request.reference_wav_b64, "reference_wav_b64")
        test = _decode_wav(request.test_wav_b64, "test_wav_b64")
        try:
            report = evaluate_pair(reference, test)
        except (ValueError, DataError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return EvaluateResponse(
            seg_snr_db=report.seg_snr_db, fw_seg_snr_db=report.fw_seg_snr_db
        )

    @app.post("/distort", response_model=DistortResponse)
    def distort_endpoint(request: DistortRequest):
        dictionary = current_dictionary(request.dictionary_b64)
        clean = _decode_wav(request.clean_wav_b64, "clean_wav_b64")
        noise = _decode_wav(request.noise_wav_b64, "noise_wav_b64")
        try:
            config = EnhanceConfig(
                threshold=request.threshold,
                mask_mode="vq_baseline" if request.mode == "vq" else "outlier",
            )
            report = speech_distortion_run(
                clean, noise, request.snr_db, dictionary, config, seed=request.seed
            )
        except (ValueError, DataError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return DistortResponse(
            seg_snr_db=report.seg_snr_db,
            fw_seg_snr_db=report.fw_seg_snr_db,
            snr_db=request.snr_db,
            mode=request.mode,
            threshold=request.threshold,
        )

    return app
