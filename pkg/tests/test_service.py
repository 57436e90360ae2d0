"""HTTP service endpoints and the CLI thin-client path against a live server."""

import base64
import io
import socket
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from specsieve import AudioBuffer, read_wav, save_dictionary, write_wav
from specsieve.dictionary import dictionary_to_bytes
from specsieve.enhancer import EnhanceConfig, enhance
from specsieve.service import create_app

from synth import speech_like


def wav_b64(audio: AudioBuffer) -> str:
    buf = io.BytesIO()
    write_wav(buf, audio)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def b64_wav(b64: str) -> AudioBuffer:
    return read_wav(io.BytesIO(base64.b64decode(b64)))


@pytest.fixture(scope="module")
def corpus_b64():
    return [
        wav_b64(AudioBuffer(speech_like(3.0, seed=300 + i), 16000)) for i in range(4)
    ]


@pytest.fixture(scope="module")
def trained_client(corpus_b64):
    client = TestClient(create_app())
    response = client.post(
        "/train",
        json={
            "corpus_wavs_b64": corpus_b64,
            "n_clusters": 12,
            "n_patches": 1500,
            "seed": 5,
        },
    )
    assert response.status_code == 200
    return client


@pytest.fixture(scope="module")
def noisy_clip(rng_module):
    clean = speech_like(1.2, seed=555)
    return AudioBuffer(clean + rng_module.standard_normal(len(clean)) * 0.03, 16000)


@pytest.fixture(scope="module")
def rng_module():
    return np.random.default_rng(99)


class TestHealthAndDictionary:
    def test_health_reports_no_dictionary(self):
        client = TestClient(create_app())
        body = client.get("/health").json()
        assert body == {"status": "ok", "dictionary_loaded": False}

    def test_dictionary_info_404_when_unloaded(self):
        client = TestClient(create_app())
        assert client.get("/dictionary").status_code == 404

    def test_startup_with_dictionary_path(self, trained_client, tmp_path, corpus_b64):
        blob = base64.b64decode(
            trained_client.post(
                "/train",
                json={
                    "corpus_wavs_b64": corpus_b64,
                    "n_clusters": 4,
                    "n_patches": 200,
                    "load": False,
                },
            ).json()["dictionary_b64"]
        )
        path = tmp_path / "svc.dict"
        path.write_bytes(blob)
        client = TestClient(create_app(dictionary_path=str(path)))
        assert client.get("/health").json()["dictionary_loaded"] is True
        assert client.get("/dictionary").json()["n_entries"] == 4

    def test_load_endpoint_from_blob(self, trained_client, corpus_b64):
        blob_b64 = trained_client.post(
            "/train",
            json={
                "corpus_wavs_b64": corpus_b64,
                "n_clusters": 3,
                "n_patches": 150,
                "load": False,
            },
        ).json()["dictionary_b64"]
        client = TestClient(create_app())
        response = client.post("/dictionary/load", json={"dictionary_b64": blob_b64})
        assert response.status_code == 200
        assert response.json()["n_entries"] == 3
        assert client.get("/health").json()["dictionary_loaded"] is True

    def test_load_requires_exactly_one_source(self):
        client = TestClient(create_app())
        assert client.post("/dictionary/load", json={}).status_code == 400
        assert (
            client.post(
                "/dictionary/load", json={"path": "x", "dictionary_b64": "y"}
            ).status_code
            == 400
        )

    def test_load_bad_blob_rejected(self):
        client = TestClient(create_app())
        bad = base64.b64encode(b"XXXX" + bytes(60)).decode()
        response = client.post("/dictionary/load", json={"dictionary_b64": bad})
        assert response.status_code == 400
        assert "magic" in response.json()["detail"]


class TestTrainEndpoint:
    def test_train_reports_summary(self, corpus_b64):
        client = TestClient(create_app())
        body = client.post(
            "/train",
            json={"corpus_wavs_b64": corpus_b64, "n_clusters": 5, "n_patches": 400},
        ).json()
        assert body["info"]["n_entries"] == 5
        assert body["n_patches_used"] == 400
        assert body["n_iterations"] >= 1
        assert body["final_objective"] > 0

    def test_train_saves_server_side(self, corpus_b64, tmp_path):
        client = TestClient(create_app())
        out = tmp_path / "saved.dict"
        body = client.post(
            "/train",
            json={
                "corpus_wavs_b64": corpus_b64,
                "n_clusters": 4,
                "n_patches": 200,
                "out_path": str(out),
            },
        ).json()
        assert body["saved_to"] == str(out)
        assert out.read_bytes() == base64.b64decode(body["dictionary_b64"])

    def test_train_requires_exactly_one_corpus_source(self):
        client = TestClient(create_app())
        assert client.post("/train", json={}).status_code == 400

    def test_train_rejects_rate_mismatch(self):
        client = TestClient(create_app())
        wrong = wav_b64(AudioBuffer(np.zeros(4000), 8000))
        response = client.post("/train", json={"corpus_wavs_b64": [wrong]})
        assert response.status_code == 400
        assert "rate" in response.json()["detail"]

    def test_train_corpus_dir(self, tmp_path):
        for i in range(3):
            write_wav(
                str(tmp_path / f"s{i}.wav"),
                AudioBuffer(speech_like(2.0, seed=400 + i), 16000),
            )
        client = TestClient(create_app())
        response = client.post(
            "/train",
            json={"corpus_dir": str(tmp_path), "n_clusters": 3, "n_patches": 100},
        )
        assert response.status_code == 200
        assert response.json()["info"]["n_entries"] == 3


class TestEnhanceEndpoint:
    def test_enhance_matches_local_pipeline(self, trained_client, noisy_clip, corpus_b64):
        response = trained_client.post(
            "/enhance", json={"audio_wav_b64": wav_b64(noisy_clip)}
        )
        assert response.status_code == 200
        body = response.json()
        remote = b64_wav(body["audio_wav_b64"])

        info = trained_client.get("/dictionary")
        assert info.status_code == 200
        blob_b64 = trained_client.post(
            "/train",
            json={
                "corpus_wavs_b64": corpus_b64,
                "n_clusters": info.json()["n_entries"],
                "n_patches": 1500,
                "seed": 5,
                "load": False,
            },
        ).json()["dictionary_b64"]
        from specsieve.dictionary import dictionary_from_bytes

        local_dict = dictionary_from_bytes(base64.b64decode(blob_b64))
        # the service quantizes to 16-bit WAV; compare the same way
        buf = io.BytesIO()
        local, diagnostics = enhance(b64_wav(wav_b64(noisy_clip)), local_dict, EnhanceConfig())
        write_wav(buf, local)
        expected = read_wav(io.BytesIO(buf.getvalue()))
        np.testing.assert_array_equal(remote.samples, expected.samples)
        assert body["n_patches"] == len(diagnostics)

    def test_enhance_without_dictionary_409(self, noisy_clip):
        client = TestClient(create_app())
        response = client.post("/enhance", json={"audio_wav_b64": wav_b64(noisy_clip)})
        assert response.status_code == 409

    def test_enhance_with_inline_dictionary(self, trained_client, noisy_clip, small_dictionary):
        blob = base64.b64encode(dictionary_to_bytes(small_dictionary)).decode()
        client = TestClient(create_app())  # no dictionary loaded
        response = client.post(
            "/enhance",
            json={"audio_wav_b64": wav_b64(noisy_clip), "dictionary_b64": blob},
        )
        assert response.status_code == 200

    def test_diagnostics_included_on_request(self, trained_client, noisy_clip):
        body = trained_client.post(
            "/enhance",
            json={"audio_wav_b64": wav_b64(noisy_clip), "include_diagnostics": True},
        ).json()
        assert body["diagnostics"] is not None
        assert len(body["diagnostics"]) == body["n_patches"]
        assert body["diagnostics"][0]["start_frame"] == 0

    def test_validation_422_for_bad_threshold(self, trained_client, noisy_clip):
        response = trained_client.post(
            "/enhance",
            json={"audio_wav_b64": wav_b64(noisy_clip), "threshold": 2.0},
        )
        assert response.status_code == 422

    def test_bad_base64_400(self, trained_client):
        response = trained_client.post("/enhance", json={"audio_wav_b64": "@@@"})
        assert response.status_code == 400

    def test_rate_mismatch_400(self, trained_client):
        clip = wav_b64(AudioBuffer(np.zeros(4000), 8000))
        response = trained_client.post("/enhance", json={"audio_wav_b64": clip})
        assert response.status_code == 400
        assert "rate" in response.json()["detail"]


class TestMixEvaluateDistort:
    def test_mix_scale_reported(self, trained_client, rng_module):
        x = AudioBuffer(rng_module.standard_normal(6000) * 0.2, 16000)
        body = trained_client.post(
            "/mix",
            json={"clean_wav_b64": wav_b64(x), "noise_wav_b64": wav_b64(x), "snr_db": 0.0},
        ).json()
        assert body["noise_scale"] == pytest.approx(1.0, rel=1e-6)
        mixture = b64_wav(body["noisy_wav_b64"])
        assert len(mixture) == 6000

    def test_evaluate_self_scores_ceiling(self, trained_client):
        x = wav_b64(AudioBuffer(speech_like(0.8, seed=12), 16000))
        body = trained_client.post(
            "/evaluate", json={"reference_wav_b64": x, "test_wav_b64": x}
        ).json()
        assert body["seg_snr_db"] == 35.0
        assert body["fw_seg_snr_db"] == 35.0

    def test_distort_outlier_vs_vq(self, trained_client):
        clean = wav_b64(AudioBuffer(speech_like(1.2, seed=13), 16000))
        from synth import tone

        noise = wav_b64(AudioBuffer(tone(3.0, 2000.0), 16000))
        scores = {}
        for mode in ("outlier", "vq"):
            body = trained_client.post(
                "/distort",
                json={
                    "clean_wav_b64": clean,
                    "noise_wav_b64": noise,
                    "snr_db": 0.0,
                    "mode": mode,
                    "seed": 4,
                },
            ).json()
            scores[mode] = body["fw_seg_snr_db"]
        assert scores["outlier"] > scores["vq"]

    def test_silent_mix_400(self, trained_client):
        silent = wav_b64(AudioBuffer(np.zeros(4000), 16000))
        response = trained_client.post(
            "/mix",
            json={"clean_wav_b64": silent, "noise_wav_b64": silent, "snr_db": 0.0},
        )
        assert response.status_code == 400


@pytest.fixture(scope="module")
def live_server(small_dictionary, tmp_path_factory):
    import uvicorn

    dict_path = tmp_path_factory.mktemp("srv") / "model.dict"
    save_dictionary(small_dictionary, dict_path)

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]

    config = uvicorn.Config(
        create_app(dictionary_path=str(dict_path)),
        host="127.0.0.1",
        port=port,
        log_level="error",
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            pytest.fail("server did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestCliThinClient:
    """Drive `specsieve enhance --server` against a live uvicorn instance."""

    def test_enhance_via_server(self, live_server, noisy_clip, small_dictionary, tmp_path):
        from specsieve.cli import main

        in_wav = tmp_path / "in.wav"
        out_wav = tmp_path / "out.wav"
        write_wav(str(in_wav), noisy_clip)
        rc = main(
            [
                "enhance", str(in_wav), "unused.dict", str(out_wav),
                "--server", live_server,
            ]
        )
        assert rc == 0
        remote = read_wav(str(out_wav))

        local, _ = enhance(read_wav(str(in_wav)), small_dictionary, EnhanceConfig())
        buf = io.BytesIO()
        write_wav(buf, local)
        expected = read_wav(io.BytesIO(buf.getvalue()))
        np.testing.assert_array_equal(remote.samples, expected.samples)

    def test_server_unreachable_is_data_error(self, noisy_clip, tmp_path):
        from specsieve.cli import main

        in_wav = tmp_path / "in.wav"
        write_wav(str(in_wav), noisy_clip)
        rc = main(
            [
                "enhance", str(in_wav), "unused.dict", str(tmp_path / "out.wav"),
                "--server", "http://127.0.0.1:9",  # discard port, nothing listens
            ]
        )
        assert rc == 2
