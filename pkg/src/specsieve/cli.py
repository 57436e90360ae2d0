"""Command-line interface: train, enhance, mix, eval, distort, serve.

Every subcommand is a thin wrapper over the library. Exit codes: 0 on
success, 1 for usage errors (bad flags or parameter values), 2 for data
errors (unreadable files, malformed dictionaries, silent signals).
A key=value config file can seed any option via --config; explicit flags
take precedence.
"""

from __future__ import annotations

import base64
import json
import sys
import urllib.error
import urllib.request
from pathlib import Path

import click
import numpy as np

from .audio_io import AudioBuffer, read_wav, write_wav
from .dictionary import (
    TrainConfig,
    load_dictionary,
    save_dictionary,
    train_dictionary,
)
from .dsp import make_stft_config
from .enhancer import EnhanceConfig, enhance
from .errors import DataError
from .evaluation import evaluate_pair, mix_at_snr, speech_distortion_run


def _load_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    mapping = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise click.UsageError(f"cannot read config file: {exc}")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        mapping[key.strip().replace("-", "_")] = value.strip()
    return mapping


def _merge_config(ctx: click.Context, overrides: dict[str, str], **values):
    """Fill in values from the config file for params left at their defaults."""
    merged = {}
    for name, value in values.items():
        source = ctx.get_parameter_source(name)
        if name in overrides and source == click.core.ParameterSource.DEFAULT:
            raw = overrides[name]
            caster = type(value) if value is not None else str
            if caster is bool:
                merged[name] = raw.lower() in ("1", "true", "yes", "on")
            else:
                try:
                    merged[name] = caster(raw)
                except ValueError:
                    raise click.UsageError(
                        f"config value {name}={raw!r} is not a valid {caster.__name__}"
                    )
        else:
            merged[name] = value
    return merged


def _read_audio(path) -> AudioBuffer:
    return read_wav(str(path))


@click.group()
def cli():
    """Dictionary-based speech enhancement with outlier noise detection."""


@cli.command()
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_path", type=click.Path(dir_okay=False))
@click.option("--patch-len", default=2, show_default=True, help="Frames per patch.")
@click.option("--n-bands", default=60, show_default=True, help="Triangular filter bands.")
@click.option("--n-clusters", default=800, show_default=True, help="Dictionary entries.")
@click.option("--n-patches", default=10000, show_default=True, help="Training patch budget.")
@click.option("--stride", default=None, type=int, help="Patch sampling stride [default: patch-len + 1].")
@click.option("--window-ms", default=10.0, show_default=True, help="Analysis window length.")
@click.option("--sample-rate", default=16000, show_default=True, help="Expected corpus rate (Hz).")
@click.option("--max-iters", default=100, show_default=True, help="k-means iteration cap.")
@click.option("--seed", default=0, show_default=True, help="RNG seed for sampling and clustering.")
@click.option("--config", "config_path", default=None, type=click.Path(), help="key=value defaults file.")
@click.pass_context
def train(ctx, corpus_dir, out_path, patch_len, n_bands, n_clusters, n_patches,
          stride, window_ms, sample_rate, max_iters, seed, config_path):
    """Train a dictionary from a directory of clean-speech WAV files."""
    overrides = _load_config_file(config_path)
    merged = _merge_config(
        ctx, overrides, patch_len=patch_len, n_bands=n_bands, n_clusters=n_clusters,
        n_patches=n_patches, stride=stride, window_ms=window_ms,
        sample_rate=sample_rate, max_iters=max_iters, seed=seed,
    )
    if merged["stride"] is None:
        merged["stride"] = merged["patch_len"] + 1
    try:
        train_cfg = TrainConfig(
            patch_len=merged["patch_len"],
            sample_stride=merged["stride"],
            n_bands=merged["n_bands"],
            n_clusters=merged["n_clusters"],
            n_patches=merged["n_patches"],
            max_iters=merged["max_iters"],
            rng_seed=merged["seed"],
        )
        stft_cfg = make_stft_config(merged["sample_rate"], merged["window_ms"])
    except ValueError as exc:
        raise click.UsageError(str(exc))

    corpus = []
    for wav_path in sorted(Path(corpus_dir).glob("*.wav")):
        try:
            audio = _read_audio(wav_path)
        except DataError as exc:
            click.echo(f"warning: skipping {wav_path.name}: {exc}", err=True)
            continue
        if audio.sample_rate != stft_cfg.sample_rate:
            click.echo(
                f"warning: skipping {wav_path.name}: rate {audio.sample_rate} != "
                f"{stft_cfg.sample_rate}", err=True,
            )
            continue
        corpus.append(audio)
    if not corpus:
        raise DataError(f"no usable WAV files in {corpus_dir}")

    dictionary, summary = train_dictionary(corpus, train_cfg, stft_cfg)
    save_dictionary(dictionary, out_path)
    click.echo(f"sentences={len(corpus)}")
    click.echo(f"patches_collected={summary.n_patches_collected}")
    click.echo(f"patches_used={summary.n_patches_used}")
    click.echo(f"iterations={summary.n_iterations}")
    click.echo(f"final_objective={summary.final_objective:.6f}")
    click.echo(f"dictionary={out_path}")


def _enhance_via_server(server: str, in_wav: str, out_wav: str, threshold: float,
                        mode: str, gain_floor: float, sqrt_gain: bool) -> None:
    payload = {
        "audio_wav_b64": base64.b64encode(Path(in_wav).read_bytes()).decode("ascii"),
        "threshold": threshold,
        "mode": "vq" if mode == "vq" else "outlier",
        "gain_floor": gain_floor,
        "sqrt_gain": sqrt_gain,
    }
    request = urllib.request.Request(
        server.rstrip("/") + "/enhance",
        data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json"},
    )
    try:
        with urllib.request.urlopen(request) as response:
            body = json.loads(response.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", errors="replace")
        raise DataError(f"server returned {exc.code}: {detail}")
    except urllib.error.URLError as exc:
        raise DataError(f"cannot reach server {server}: {exc.reason}")
    Path(out_wav).write_bytes(base64.b64decode(body["audio_wav_b64"]))


@cli.command(name="enhance")
@click.argument("in_wav", type=click.Path(exists=True, dir_okay=False))
@click.argument("dict_path", type=click.Path(dir_okay=False))
@click.argument("out_wav", type=click.Path(dir_okay=False))
@click.option("--threshold", default=1e-4, show_default=True,
              help="Outlier p-value threshold; 0 disables removal.")
@click.option("--mode", default="outlier", show_default=True,
              type=click.Choice(["outlier", "vq"]), help="Masking rule.")
@click.option("--gain-floor", default=0.0, show_default=True, help="Minimum per-bin gain.")
@click.option("--sqrt-gain", is_flag=True, default=False,
              help="Apply the square root of the power gain to the spectrum.")
@click.option("--diagnostics", "diagnostics_path", default=None, type=click.Path(),
              help="Write per-patch JSON lines here ('-' for stdout).")
@click.option("--server", default=None,
              help="Enhance via a running service; DICT_PATH is ignored (the "
              "server holds the dictionary), pass '-' as a placeholder.")
@click.option("--config", "config_path", default=None, type=click.Path(), help="key=value defaults file.")
@click.pass_context
def enhance_cmd(ctx, in_wav, dict_path, out_wav, threshold, mode, gain_floor,
                sqrt_gain, diagnostics_path, server, config_path):
    """Enhance a noisy WAV using a trained dictionary."""
    overrides = _load_config_file(config_path)
    merged = _merge_config(
        ctx, overrides, threshold=threshold, mode=mode, gain_floor=gain_floor,
        sqrt_gain=sqrt_gain, server=server,
    )
    try:
        config = EnhanceConfig(
            threshold=merged["threshold"],
            mask_mode="vq_baseline" if merged["mode"] == "vq" else "outlier",
            gain_floor=merged["gain_floor"],
            sqrt_gain=merged["sqrt_gain"],
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))

    if merged["server"]:
        _enhance_via_server(
            merged["server"], in_wav, out_wav, merged["threshold"], merged["mode"],
            merged["gain_floor"], merged["sqrt_gain"],
        )
        click.echo(f"enhanced={out_wav} (via {merged['server']})")
        return

    dictionary = load_dictionary(dict_path)
    noisy = _read_audio(in_wav)
    if noisy.sample_rate != dictionary.stft_config.sample_rate:
        raise DataError(
            f"sample rate mismatch: input {noisy.sample_rate} Hz, dictionary "
            f"{dictionary.stft_config.sample_rate} Hz"
        )
    enhanced, diagnostics = enhance(noisy, dictionary, config)
    write_wav(str(out_wav), enhanced)
    if diagnostics_path:
        lines = "\n".join(
            json.dumps(
                {
                    "start_frame": rec.start_frame,
                    "entry_index": rec.entry_index,
                    "scale": rec.scale,
                    "log_distance": rec.log_distance,
                    "n_outliers": rec.n_outliers,
                }
            )
            for rec in diagnostics
        )
        if diagnostics_path == "-":
            click.echo(lines)
        else:
            Path(diagnostics_path).write_text(lines + "\n")
    click.echo(f"enhanced={out_wav}")
    click.echo(f"patches={len(diagnostics)}")
    click.echo(f"outlier_bins={sum(r.n_outliers for r in diagnostics)}")


@cli.command()
@click.argument("clean_wav", type=click.Path(exists=True, dir_okay=False))
@click.argument("noise_wav", type=click.Path(exists=True, dir_okay=False))
@click.argument("snr_db", type=float)
@click.argument("out_wav", type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True, help="Noise segment offset seed.")
@click.option("--noise-out", default=None, type=click.Path(), help="Also write the scaled noise.")
@click.option("--config", "config_path", default=None, type=click.Path(), help="key=value defaults file.")
@click.pass_context
def mix(ctx, clean_wav, noise_wav, snr_db, out_wav, seed, noise_out, config_path):
    """Mix noise into clean speech at an exact target SNR."""
    overrides = _load_config_file(config_path)
    merged = _merge_config(ctx, overrides, seed=seed)
    clean = _read_audio(clean_wav)
    noise = _read_audio(noise_wav)
    noisy, scaled, scale = mix_at_snr(clean, noise, snr_db, seed=merged["seed"])
    write_wav(str(out_wav), noisy)
    if noise_out:
        write_wav(str(noise_out), scaled)
    clean_rms = float(np.sqrt(np.mean(clean.samples**2)))
    click.echo(f"snr_db={snr_db:.2f}")
    click.echo(f"noise_scale={scale:.6f}")
    click.echo(f"clean_rms={clean_rms:.6f}")
    click.echo(f"mixture={out_wav}")


@cli.command(name="eval")
@click.argument("reference_wav", type=click.Path(exists=True, dir_okay=False))
@click.argument("test_wav", type=click.Path(exists=True, dir_okay=False))
@click.option("--report", "report_path", default=None, type=click.Path(),
              help="Also write a JSON report.")
def eval_cmd(reference_wav, test_wav, report_path):
    """Print segmental and frequency-weighted segmental SNR of test vs reference."""
    reference = _read_audio(reference_wav)
    test = _read_audio(test_wav)
    if len(reference) != len(test):
        raise DataError(
            f"length mismatch: reference {len(reference)} samples, test {len(test)}"
        )
    report = evaluate_pair(reference, test)
    click.echo(f"seg_snr_db={report.seg_snr_db:.2f}")
    click.echo(f"fw_seg_snr_db={report.fw_seg_snr_db:.2f}")
    if report_path:
        Path(report_path).write_text(
            json.dumps(
                {
                    "seg_snr_db": report.seg_snr_db,
                    "fw_seg_snr_db": report.fw_seg_snr_db,
                    "seg_snr_frames": report.seg_snr_frames.tolist(),
                    "fw_seg_snr_frames": report.fw_seg_snr_frames.tolist(),
                },
                indent=2,
            )
        )


@cli.command()
@click.argument("clean_wav", type=click.Path(exists=True, dir_okay=False))
@click.argument("dict_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--noise", "noise_wavs", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False), help="Noise WAV (repeatable).")
@click.option("--snr", "snrs", multiple=True, type=float, default=(0.0,),
              show_default=True, help="Target SNR in dB (repeatable).")
@click.option("--mode", "modes", multiple=True, default=("outlier",), show_default=True,
              type=click.Choice(["outlier", "vq"]), help="Masking rule (repeatable).")
@click.option("--threshold", default=1e-4, show_default=True, help="Outlier p-value threshold.")
@click.option("--seed", default=0, show_default=True, help="Noise segment offset seed.")
@click.option("--report", "report_path", default=None, type=click.Path(),
              help="Also write a JSON report.")
def distort(clean_wav, dict_path, noise_wavs, snrs, modes, threshold, seed, report_path):
    """Measure how the mask computed from each mixture distorts the clean speech.

    Prints one row per noise file, SNR, and mode: the mask is computed from
    the mixture, applied to the clean signal, and the result is scored
    against the clean signal.
    """
    clean = _read_audio(clean_wav)
    dictionary = load_dictionary(dict_path)
    rows = []
    for noise_path in noise_wavs:
        noise = _read_audio(noise_path)
        for snr_db in snrs:
            for mode in modes:
                try:
                    config = EnhanceConfig(
                        threshold=threshold,
                        mask_mode="vq_baseline" if mode == "vq" else "outlier",
                    )
                except ValueError as exc:
                    raise click.UsageError(str(exc))
                report = speech_distortion_run(
                    clean, noise, snr_db, dictionary, config, seed=seed
                )
                rows.append(
                    {
                        "noise": Path(noise_path).name,
                        "snr_db": snr_db,
                        "mode": mode,
                        "fw_seg_snr_db": report.fw_seg_snr_db,
                        "seg_snr_db": report.seg_snr_db,
                    }
                )
    header = f"{'noise':<20} {'snr_db':>7} {'mode':<8} {'fw_seg_snr_db':>14} {'seg_snr_db':>11}"
    click.echo(header)
    for row in rows:
        click.echo(
            f"{row['noise']:<20} {row['snr_db']:>7.1f} {row['mode']:<8} "
            f"{row['fw_seg_snr_db']:>14.2f} {row['seg_snr_db']:>11.2f}"
        )
    if report_path:
        Path(report_path).write_text(json.dumps(rows, indent=2))


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--dictionary", "dict_path", default=None, type=click.Path(exists=True),
              help="Dictionary to load at startup.")
def serve(host, port, dict_path):
    """Run the HTTP enhancement service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(dictionary_path=dict_path), host=host, port=port)


def main(argv=None) -> int:
    """Entry point with explicit exit-code semantics."""
    try:
        cli.main(args=argv, prog_name="specsieve", standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except (DataError, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
