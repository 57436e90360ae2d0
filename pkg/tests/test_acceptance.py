"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. The larger regressions (criteria 8-10) train a dictionary on ten
minutes of synthetic clean speech; everything is seeded and deterministic.
"""

import time

import numpy as np
import pytest

from specsieve import (
    AudioBuffer,
    EnhanceConfig,
    TrainConfig,
    build_uniform_filterbank,
    compute_mask,
    enhance,
    istft,
    kmeans_log,
    mix_at_snr,
    pvalue_exponential,
    segmental_snr,
    speech_distortion_run,
    stft,
    train_dictionary,
    write_wav,
)
from specsieve.cli import main as cli_main
from specsieve.dsp import make_stft_config

from synth import chirp, speech_like, tone


def report(number, description, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[{status}] criterion {number}: {description}{suffix}")
    assert passed, f"criterion {number} failed: {description}{suffix}"


@pytest.fixture(scope="module")
def regression_dictionary():
    """K=100, L=2, N'=60 dictionary from ten minutes of synthetic speech."""
    corpus = [AudioBuffer(speech_like(5.0, seed=1000 + i), 16000) for i in range(120)]
    cfg = TrainConfig(
        patch_len=2, n_bands=60, n_clusters=100, n_patches=10000,
        rng_seed=0, max_iters=60,
    )
    dictionary, _ = train_dictionary(corpus, cfg, make_stft_config(16000, 10.0))
    return dictionary


@pytest.fixture(scope="module")
def held_out_utterances():
    return [
        AudioBuffer(speech_like(3.0, seed=9001), 16000),
        AudioBuffer(speech_like(3.0, seed=9002), 16000),
    ]


def test_criterion_1_round_trip():
    cfg = make_stft_config(16000, 10.0)
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    worst_snr = np.inf
    for _ in range(100):
        n = int(rng.integers(2000, 8000))
        x = rng.standard_normal(n)
        back = istft(stft(AudioBuffer(x, 16000), cfg)).samples
        w = cfg.window_len
        ref = x[w : len(back) - w]
        err = back[w : len(back) - w] - ref
        snr = 10 * np.log10(np.sum(ref**2) / max(np.sum(err**2), 1e-300))
        worst_snr = min(worst_snr, snr)
    elapsed = time.perf_counter() - started
    report(
        1,
        "istft(stft(x)) SNR >= 60 dB on 100 seeded signals in < 5 s",
        worst_snr >= 60.0 and elapsed < 5.0,
        f"worst SNR {worst_snr:.1f} dB, {elapsed:.2f} s",
    )


def test_criterion_2_power_conservation():
    bank = build_uniform_filterbank(60, 256)
    rng = np.random.default_rng(7)
    frames = rng.uniform(0.0, 10.0, (1000, 129))
    band_totals = (frames @ bank.weights.T).sum(axis=1)
    bin_totals = frames.sum(axis=1)
    rel = np.abs(band_totals - bin_totals) / bin_totals
    report(
        2,
        "band powers match bin powers within 1e-9 relative on 1000 frames",
        bool(rel.max() < 1e-9),
        f"max rel dev {rel.max():.2e}",
    )


def test_criterion_3_closed_form_scale_beats_grid():
    rng = np.random.default_rng(31)
    dim = 24
    n_pairs = 1000
    noisy = rng.uniform(0.05, 20.0, (n_pairs, dim))
    entries = rng.uniform(0.05, 20.0, (n_pairs, dim))
    diff = np.log(noisy) - np.log(entries)
    log_star = diff.mean(axis=1)
    d_star = ((diff - log_star[:, None]) ** 2).sum(axis=1)

    grid_offsets = np.linspace(-3 * np.log(10), 3 * np.log(10), 2001)
    ok = True
    margin = np.inf
    for lo in range(0, n_pairs, 100):
        hi = min(lo + 100, n_pairs)
        log_a = log_star[lo:hi, None] + grid_offsets[None, :]
        residual = diff[lo:hi, None, :] - log_a[:, :, None]
        d_grid = (residual**2).sum(axis=2).min(axis=1)
        margin = min(margin, float((d_grid - d_star[lo:hi]).min()))
        if not np.all(d_star[lo:hi] <= d_grid + 1e-9):
            ok = False
    report(
        3,
        "analytic scale beats a 2001-point log grid on 1000 pairs",
        ok,
        f"min grid excess {margin:.2e}",
    )


def test_criterion_4_pvalue_calibration():
    rng = np.random.default_rng(404)
    n = 10**5
    mean = 2.3
    draws = rng.exponential(scale=mean, size=n)
    pvalues = np.array([pvalue_exponential(y, mean) for y in draws])
    ok = True
    details = []
    for c in (0.1, 0.01):
        fraction = float(np.mean(pvalues < c))
        bound = 3 * np.sqrt(c * (1 - c) / n)
        details.append(f"c={c}: {fraction:.5f} (|dev| {abs(fraction - c):.5f} <= {bound:.5f})")
        if abs(fraction - c) > bound:
            ok = False
    report(4, "empirical outlier fraction within 3-sigma of c", ok, "; ".join(details))


def test_criterion_5_identity_limit(regression_dictionary, held_out_utterances):
    clip = held_out_utterances[0]
    config = EnhanceConfig(threshold=0.0)
    mask = compute_mask(clip, regression_dictionary, config)
    all_ones = bool(np.all(mask.patch_gains == 1.0))

    out, _ = enhance(clip, regression_dictionary, config)
    cfg = regression_dictionary.stft_config
    w = cfg.window_len
    covered = (stft(clip, cfg).n_frames - 1) * cfg.hop + cfg.window_len
    ref = clip.samples[w : covered - w]
    err = out.samples[w : covered - w] - ref
    snr = 10 * np.log10(np.sum(ref**2) / max(np.sum(err**2), 1e-300))
    report(
        5,
        "threshold below representable p-values leaves audio at round-trip fidelity",
        all_ones and snr >= 60.0,
        f"gains all 1: {all_ones}, interior SNR {snr:.1f} dB",
    )


def test_criterion_6_monotone_in_threshold(regression_dictionary, held_out_utterances):
    clip = held_out_utterances[0]
    rng = np.random.default_rng(66)
    noisy = AudioBuffer(
        clip.samples + rng.standard_normal(len(clip)) * 0.05, 16000
    )
    nested = True
    pointwise = True
    previous = None
    for c in (1e-6, 1e-4, 1e-2, 1e-1):
        mask = compute_mask(noisy, regression_dictionary, EnhanceConfig(threshold=c))
        if previous is not None:
            nested &= bool(np.all(previous.outlier_flags <= mask.outlier_flags))
            pointwise &= bool(np.all(mask.patch_gains <= previous.patch_gains + 1e-15))
            pointwise &= bool(np.all(mask.dft_gains <= previous.dft_gains + 1e-12))
        previous = mask
    report(
        6,
        "outlier sets nest and gains fall pointwise as c grows",
        nested and pointwise,
        f"nested: {nested}, pointwise: {pointwise}",
    )


def test_criterion_7_kmeans_properties():
    rng = np.random.default_rng(77)
    # objective never increases
    patches = rng.uniform(0.1, 10.0, (400, 8))
    _, _, trace = kmeans_log(patches, 10, seed=3)
    monotone = bool(np.all(np.diff(trace) <= 1e-9))

    # exact recovery of two tight groups
    low = 1.0 * (1 + rng.uniform(-0.01, 0.01, (4, 4)))
    high = 100.0 * (1 + rng.uniform(-0.01, 0.01, (4, 4)))
    grouped = np.vstack([low, high])
    _, assignments, _ = kmeans_log(grouped, 2, seed=0)
    groups = {frozenset(np.flatnonzero(assignments == k)) for k in (0, 1)}
    recovered = groups == {frozenset(range(4)), frozenset(range(4, 8))}

    # K=1 centroid is the elementwise geometric mean
    sample = rng.uniform(0.2, 5.0, (50, 6))
    centroid, _, _ = kmeans_log(sample, 1, seed=0)
    expected = np.exp(np.log(sample).mean(axis=0))
    geo_ok = bool(np.all(np.abs(centroid[0] - expected) / expected < 1e-9))

    report(
        7,
        "k-means: monotone objective, exact 2-group recovery, geometric-mean centroid",
        monotone and recovered and geo_ok,
        f"monotone: {monotone}, recovery: {recovered}, geomean: {geo_ok}",
    )


def test_criterion_8_directional_enhancement(regression_dictionary, held_out_utterances):
    config = EnhanceConfig(threshold=1e-4)
    ok = True
    details = []
    for i, clean in enumerate(held_out_utterances):
        noises = {
            "tone": AudioBuffer(tone(2 * clean.duration, 2000.0), 16000),
            "chirp": AudioBuffer(chirp(2 * clean.duration, 500.0, 6000.0), 16000),
        }
        for name, noise in noises.items():
            noisy, _, _ = mix_at_snr(clean, noise, 0.0, seed=80 + i)
            started = time.perf_counter()
            enhanced, _ = enhance(noisy, regression_dictionary, config)
            elapsed = time.perf_counter() - started
            gain = segmental_snr(clean, enhanced) - segmental_snr(clean, noisy)
            details.append(f"utt{i}/{name}: +{gain:.1f} dB in {elapsed:.1f} s")
            if gain < 3.0 or elapsed >= 120.0:
                ok = False
    report(
        8,
        "enhancement gains >= 3 dB segSNR on tone and chirp at 0 dB, < 2 min each",
        ok,
        "; ".join(details),
    )


def test_criterion_9_speech_preservation(regression_dictionary, held_out_utterances):
    ok = True
    details = []
    for i, clean in enumerate(held_out_utterances):
        noises = {
            "tone": AudioBuffer(tone(2 * clean.duration, 2000.0), 16000),
            "chirp": AudioBuffer(chirp(2 * clean.duration, 500.0, 6000.0), 16000),
        }
        for name, noise in noises.items():
            outlier = speech_distortion_run(
                clean, noise, 0.0, regression_dictionary,
                EnhanceConfig(mask_mode="outlier"), seed=80 + i,
            ).fw_seg_snr_db
            vq = speech_distortion_run(
                clean, noise, 0.0, regression_dictionary,
                EnhanceConfig(mask_mode="vq_baseline"), seed=80 + i,
            ).fw_seg_snr_db
            details.append(f"utt{i}/{name}: outlier {outlier:.1f} vs vq {vq:.1f}")
            if outlier < vq:
                ok = False
    report(
        9,
        "clean-through-mask fwSegSNR: outlier mode >= vq baseline on every utterance",
        ok,
        "; ".join(details),
    )


def test_criterion_10_determinism(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for i in range(4):
        write_wav(
            str(corpus / f"s{i}.wav"),
            AudioBuffer(speech_like(3.0, seed=500 + i), 16000),
        )
    noisy_path = tmp_path / "noisy.wav"
    clean = speech_like(1.5, seed=901)
    noise = np.random.default_rng(902).standard_normal(len(clean)) * 0.05
    write_wav(str(noisy_path), AudioBuffer(clean + noise, 16000))

    outputs = []
    for run in ("a", "b"):
        dict_path = tmp_path / f"{run}.dict"
        wav_path = tmp_path / f"{run}.wav"
        assert cli_main(
            [
                "train", str(corpus), str(dict_path),
                "--n-clusters", "16", "--n-patches", "1000", "--seed", "7",
            ]
        ) == 0
        assert cli_main(
            ["enhance", str(noisy_path), str(dict_path), str(wav_path)]
        ) == 0
        outputs.append((dict_path.read_bytes(), wav_path.read_bytes()))
    dict_same = outputs[0][0] == outputs[1][0]
    wav_same = outputs[0][1] == outputs[1][1]
    report(
        10,
        "identical seeds give byte-identical dictionary and enhanced WAV",
        dict_same and wav_same,
        f"dictionary: {dict_same}, wav: {wav_same}",
    )
