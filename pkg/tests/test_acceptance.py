"""Acceptance gate: one test per release criterion.

Each test exercises its criterion at the stated tolerance and appends
one pass/fail line to the summary block that conftest prints after the
run. Criteria 8, 10, and 11 share a single timed full-matrix run over
the bundled desk corpus.
"""

import hashlib
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from conftest import ACCEPTANCE_RESULTS

from phonobeam.audio import StftConfig, Waveform, istft, stft, write_wav
from phonobeam.beamforming import (
    CovarianceField,
    gevd_mwf_weights,
    mvdr_weights,
    mwf_weights,
    steering_from_covariance,
)
from phonobeam.beamforming import _loaded, enhance_binaural
from phonobeam.bsseval import (
    Decomposition,
    decompose,
    input_decomposition,
    input_metrics,
    metrics_from_decomposition,
    segment_metrics,
)
from phonobeam.noise import NoiseSpec, speech_shaped_noise
from phonobeam.phonemes import aggregate, parse_alignment, score_segments
from phonobeam.pipeline import emit_report, run_matrix, validate_config
from phonobeam.scene import (
    SceneConfig,
    build_scene,
    detect_activity,
    load_rir_set,
    noise_gain_for_snr,
    synth_test_rirs,
)


@contextmanager
def criterion(number, name):
    info = {}
    try:
        yield info
    except BaseException:
        ACCEPTANCE_RESULTS.append(f"criterion {number:02d} FAIL {name}")
        raise
    detail = info.get("detail", "")
    suffix = f" [{detail}]" if detail else ""
    ACCEPTANCE_RESULTS.append(f"criterion {number:02d} PASS {name}{suffix}")


def _field(matrices, frames=10):
    mats = np.asarray(matrices, dtype=np.complex128)
    return CovarianceField(0.5 * (mats + mats.conj().transpose(0, 2, 1)), frames)


def _wishart(rng, f, m, columns=None):
    columns = columns or 2 * m
    a = rng.standard_normal((f, m, columns)) + 1j * rng.standard_normal((f, m, columns))
    return a @ a.conj().transpose(0, 2, 1) / columns


@pytest.fixture(scope="module")
def desk_run(desk_corpus, tmp_path_factory):
    """One timed full-matrix run plus an in-place rerun for criterion 8."""
    cfg = validate_config(desk_corpus / "config.yaml")
    out_dir = tmp_path_factory.mktemp("desk_run") / "out"

    started = time.perf_counter()
    records, manifest = run_matrix(cfg)
    emit_report(records, manifest, out_dir)
    elapsed = time.perf_counter() - started

    def tree_digest():
        digest = hashlib.sha256()
        for path in sorted(out_dir.rglob("*")):
            if path.is_file():
                digest.update(str(path.relative_to(out_dir)).encode())
                digest.update(path.read_bytes())
        return digest.hexdigest()

    first_digest = tree_digest()
    records2, manifest2 = run_matrix(cfg)
    emit_report(records2, manifest2, out_dir)
    second_digest = tree_digest()
    return {
        "cfg": cfg,
        "records": records,
        "manifest": manifest,
        "elapsed": elapsed,
        "digests": (first_digest, second_digest),
    }


def test_criterion_01_stft_round_trip():
    with criterion(1, "STFT round trip on 100 random signals") as info:
        rng = np.random.default_rng(101)
        cfg = StftConfig()
        worst = 0.0
        started = time.perf_counter()
        for _ in range(100):
            n = int(rng.uniform(0.1, 3.0) * 16000)
            w = Waveform(rng.standard_normal(n) * 0.1, 16000)
            back = istft(stft(w, cfg))
            err = np.linalg.norm(back.samples - w.samples) / np.linalg.norm(w.samples)
            worst = max(worst, err)
        elapsed = time.perf_counter() - started
        assert worst <= 1e-6
        assert elapsed < 5.0
        info["detail"] = f"max rel err {worst:.1e}, {elapsed:.2f}s"


def test_criterion_02_speech_shaped_noise():
    with criterion(2, "speech-shaped noise magnitude/realness/energy") as info:
        rng = np.random.default_rng(202)
        worst_mag = worst_sym = worst_energy = 0.0
        for n in (8000, 8001, 12345):
            donor_samples = np.convolve(
                rng.standard_normal(n), [0.5, 0.3, 0.2], mode="same"
            ) * 0.1
            donor = Waveform(donor_samples, 16000)
            ssn = speech_shaped_noise(donor, seed=7)
            mag_d = np.abs(np.fft.rfft(donor.samples))
            mag_s = np.abs(np.fft.rfft(ssn.samples))
            scale = mag_d.max()
            worst_mag = max(worst_mag, np.max(np.abs(mag_s - mag_d)) / scale)
            # realness via conjugate symmetry of the full DFT
            full = np.fft.fft(ssn.samples)
            sym = np.abs(full - np.conj(full[(-np.arange(n)) % n])).max()
            worst_sym = max(worst_sym, sym / np.abs(full).max())
            e_d = np.sum(donor.samples**2)
            worst_energy = max(worst_energy, abs(np.sum(ssn.samples**2) - e_d) / e_d)
        assert worst_mag <= 1e-6
        assert worst_sym <= 1e-9
        assert worst_energy <= 1e-6
        info["detail"] = f"mag {worst_mag:.1e}, sym {worst_sym:.1e}, energy {worst_energy:.1e}"


def test_criterion_03_snr_calibration():
    with criterion(3, "active-segment SNR calibration within 0.01 dB") as info:
        rng = np.random.default_rng(303)
        worst = 0.0
        for pair in range(20):
            n = int(rng.uniform(0.4, 1.5) * 16000)
            speech_samples = rng.standard_normal(n) * 0.1
            quiet = rng.integers(0, n // 2)
            speech_samples[quiet : quiet + n // 4] *= 1e-4  # inactive stretch
            speech = Waveform(speech_samples, 16000)
            noise = Waveform(rng.standard_normal(n) * rng.uniform(0.01, 2.0), 16000)
            activity = detect_activity(speech)
            for target in (-5.0, 0.0, 5.0):
                gain = noise_gain_for_snr(speech, noise, target, activity)
                scaled = Waveform(gain * noise.samples, 16000)
                frames = activity.shape[0]

                def active_energy(w):
                    padded = np.pad(w.samples, (0, frames * 320 - n))
                    per = (padded.reshape(frames, 320) ** 2).sum(axis=1)
                    return per[activity].sum()

                measured = 10 * np.log10(active_energy(speech) / active_energy(scaled))
                worst = max(worst, abs(measured - target))
        assert worst <= 0.01
        info["detail"] = f"max deviation {worst:.2e} dB"


def test_criterion_04_mvdr_constraint_and_optimality():
    with criterion(4, "MVDR distortionless and noise-power optimality") as info:
        rng = np.random.default_rng(404)
        worst_gain = 0.0
        worst_excess = -np.inf
        for trial in range(10):
            m = 2 if trial < 5 else 4
            f = 12
            r_n = _field(_wishart(rng, f, m) + 0.2 * np.eye(m))
            r_s = _field(10.0 * _wishart(rng, f, m, columns=1) + 0.01 * np.eye(m))
            steering = steering_from_covariance(r_s)
            w = mvdr_weights(r_n, steering).weights
            gains = np.einsum("fm,fm->f", w.conj(), steering)
            worst_gain = max(worst_gain, np.max(np.abs(gains - 1.0)))
            # optimality against the objective the filter minimizes
            loaded = _loaded(r_n.matrices)
            power_w = np.einsum("fm,fmn,fn->f", w.conj(), loaded, w).real
            for _ in range(100):
                u = rng.standard_normal((f, m)) + 1j * rng.standard_normal((f, m))
                # project onto the distortionless constraint set
                overlap = np.einsum("fm,fm->f", steering.conj(), u)
                u = u + (1.0 - overlap)[:, None] * steering
                power_u = np.einsum("fm,fmn,fn->f", u.conj(), loaded, u).real
                excess = np.max((power_w - power_u) / power_u)
                worst_excess = max(worst_excess, excess)
        assert worst_gain <= 1e-8
        assert worst_excess <= 1e-10
        info["detail"] = f"gain err {worst_gain:.1e}, max excess {worst_excess:.1e}"


def test_criterion_05_mwf_residual_and_scalar_wiener():
    with criterion(5, "MWF normal equations and scalar Wiener gain") as info:
        rng = np.random.default_rng(505)
        worst_residual = 0.0
        for _ in range(10):
            f, m = 16, 4
            r_s = _field(10.0 * _wishart(rng, f, m) + 0.5 * np.eye(m))
            r_n = _field(_wishart(rng, f, m) + 0.5 * np.eye(m))
            r_x = _field(r_s.matrices + r_n.matrices)
            w = mwf_weights(r_x, r_s).weights
            rhs = r_s.matrices[:, :, 0]
            residual = np.einsum("fmn,fn->fm", r_x.matrices, w) - rhs
            rel = np.linalg.norm(residual, axis=1) / np.linalg.norm(rhs, axis=1)
            worst_residual = max(worst_residual, rel.max())
        worst_scalar = 0.0
        for _ in range(20):
            sigma_s, sigma_n = rng.uniform(0.1, 10.0, 2)
            r_x = _field(np.array([[[sigma_s + sigma_n]]]))
            r_s = _field(np.array([[[sigma_s]]]))
            w = mwf_weights(r_x, r_s).weights[0, 0]
            worst_scalar = max(
                worst_scalar, abs(w - sigma_s / (sigma_s + sigma_n))
            )
        assert worst_residual <= 1e-6
        assert worst_scalar <= 1e-10
        info["detail"] = f"residual {worst_residual:.1e}, scalar {worst_scalar:.1e}"


def test_criterion_06_gevd_mwf_equivalences():
    with criterion(6, "GEVD-MWF equals MWF at full rank and rank-1 speech") as info:
        rng = np.random.default_rng(606)
        f, m = 16, 4
        worst_full = 0.0
        for _ in range(5):
            r_s = _field(50.0 * _wishart(rng, f, m) + 10.0 * np.eye(m))
            r_n = _field(_wishart(rng, f, m, columns=4 * m) / 4.0 + 0.5 * np.eye(m))
            r_x = _field(r_s.matrices + r_n.matrices)
            diff = np.abs(
                gevd_mwf_weights(r_x, r_n, rank=m).weights
                - mwf_weights(r_x, r_s).weights
            ).max()
            worst_full = max(worst_full, diff)
        worst_rank1 = 0.0
        for _ in range(5):
            d = rng.standard_normal((f, m)) + 1j * rng.standard_normal((f, m))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            r_s = _field(100.0 * np.einsum("fm,fn->fmn", d, d.conj()))
            r_n = _field(_wishart(rng, f, m, columns=4 * m) / 4.0 + 0.5 * np.eye(m))
            r_x = _field(r_s.matrices + r_n.matrices)
            diff = np.abs(
                gevd_mwf_weights(r_x, r_n, rank=1).weights
                - mwf_weights(r_x, r_s).weights
            ).max()
            worst_rank1 = max(worst_rank1, diff)
        assert worst_full <= 1e-6
        assert worst_rank1 <= 1e-6
        info["detail"] = f"full-rank {worst_full:.1e}, rank-1 {worst_rank1:.1e}"


def _dense_oracle_metrics(estimate, speech, noise, length):
    rows = estimate.shape[0] + length - 1

    def shift_matrix(signal):
        out = np.zeros((rows, length))
        for k in range(length):
            out[k : k + signal.shape[0], k] = signal
        return out

    padded = np.zeros(rows)
    padded[: estimate.shape[0]] = estimate
    basis_s = shift_matrix(speech)
    joint = np.concatenate([basis_s, shift_matrix(noise)], axis=1)
    s_target = basis_s @ np.linalg.lstsq(basis_s, padded, rcond=None)[0]
    in_span = joint @ np.linalg.lstsq(joint, padded, rcond=None)[0]
    return metrics_from_decomposition(
        Decomposition(
            s_target, in_span - s_target, padded - in_span, length, estimate.shape[0]
        )
    )


def test_criterion_07_bss_eval_oracle():
    with criterion(7, "BSS-eval matches dense least squares, input protocol") as info:
        rng = np.random.default_rng(707)
        worst_db = worst_recon = 0.0
        for _ in range(50):
            n = int(rng.integers(200, 2001))
            length = int(rng.integers(1, 17))
            speech = rng.standard_normal(n)
            noise = rng.standard_normal(n)
            h_s = rng.standard_normal(min(length, 4)) * 0.5
            h_n = rng.standard_normal(min(length, 4)) * 0.3
            estimate = (
                np.convolve(speech, h_s)[:n]
                + np.convolve(noise, h_n)[:n]
                + 0.05 * rng.standard_normal(n)
            )
            d = decompose(estimate, speech, noise, length)
            got = metrics_from_decomposition(d)
            want = _dense_oracle_metrics(estimate, speech, noise, length)
            worst_db = max(
                worst_db,
                abs(got.sdr_db - want.sdr_db),
                abs(got.sir_db - want.sir_db),
                abs(got.sar_db - want.sar_db),
            )
            padded = np.zeros(n + length - 1)
            padded[:n] = estimate
            recon = np.max(np.abs(d.s_target + d.e_interf + d.e_artif - padded))
            worst_recon = max(worst_recon, recon / max(1.0, np.abs(padded).max()))
        worst_gap = 0.0
        min_sar = np.inf
        for _ in range(10):
            n = int(rng.integers(500, 1500))
            speech = rng.standard_normal(n)
            noise = rng.standard_normal(n)
            mix = metrics_from_decomposition(decompose(speech + noise, speech, noise, 16))
            min_sar = min(min_sar, mix.sar_db)
            worst_gap = max(worst_gap, abs(mix.sdr_db - mix.sir_db))
        assert worst_db <= 1e-6
        assert worst_recon <= 1e-9
        assert min_sar >= 60.0
        assert worst_gap <= 0.1
        info["detail"] = (
            f"metric dev {worst_db:.1e} dB, recon {worst_recon:.1e}, "
            f"SAR_in >= {min_sar:.0f} dB"
        )


def test_criterion_08_end_to_end_desk_run(desk_run):
    with criterion(8, "desk matrix speed, gains, and byte-identical rerun") as info:
        records = desk_run["records"]
        assert not desk_run["manifest"].failures
        deltas = {}
        for algorithm in ("mvdr", "mwf", "gevd_mwf"):
            rows = [
                r for r in records
                if r.scope == "utterance" and r.algorithm == algorithm
                and r.ear == "L" and r.target_snr_db == 0.0
            ]
            assert len(rows) == 20  # 10 utterances x 2 noise kinds
            deltas[algorithm] = float(
                np.mean([r.sir_out_db - r.sir_in_db for r in rows])
            )
            assert deltas[algorithm] >= 5.0
        assert desk_run["elapsed"] < 180.0
        first, second = desk_run["digests"]
        assert first == second
        info["detail"] = (
            f"{desk_run['elapsed']:.0f}s, dSIR "
            + ", ".join(f"{a} {v:.1f} dB" for a, v in deltas.items())
        )


def test_criterion_09_head_shadow_asymmetry(desk_corpus, tmp_path):
    with criterion(9, "doubled right-ear noise gain shifts SIR_in by 6 dB") as info:
        channels = ("L1", "L2", "R1", "R2")
        speech_rirs = synth_test_rirs(
            0, {c: 0 for c in channels}, {c: 1.0 for c in channels}
        )
        noise_gains = {"L1": 0.5, "L2": 0.5, "R1": 1.0, "R2": 1.0}
        noise_rirs = synth_test_rirs(45, {c: 0 for c in channels}, noise_gains)
        rirs = speech_rirs.merged(noise_rirs)

        gaps, deltas = [], {"mvdr": [], "mwf": [], "gevd_mwf": []}
        for stem in ("utt00", "utt01", "utt02"):
            scene = build_scene(
                SceneConfig(
                    str(desk_corpus / "speech" / f"{stem}.wav"),
                    NoiseSpec("white"), 45, 0.0, rirs, seed=99,
                )
            )
            sir_in = {
                ear: input_metrics(scene, ear).sir_db for ear in ("L", "R")
            }
            gaps.append(sir_in["L"] - sir_in["R"])
            for algorithm in deltas:
                left, right = enhance_binaural(scene, algorithm)
                for ear, estimate in (("L", left), ("R", right)):
                    ref = {"L": "L1", "R": "R1"}[ear]
                    out = metrics_from_decomposition(
                        decompose(
                            estimate,
                            scene.speech_image.channel(ref),
                            scene.noise_image.channel(ref),
                        )
                    )
                    deltas[algorithm].append(
                        (ear, out.sir_db - sir_in[ear])
                    )
        for gap in gaps:
            assert abs(gap - 6.02) <= 0.5
        for algorithm in ("mwf", "gevd_mwf"):
            left_gain = np.mean([d for e, d in deltas[algorithm] if e == "L"])
            right_gain = np.mean([d for e, d in deltas[algorithm] if e == "R"])
            assert right_gain > left_gain
        info["detail"] = f"mean gap {np.mean(gaps):.2f} dB"


def test_criterion_10_phoneme_machinery(desk_corpus, desk_run):
    with criterion(10, "partition accounting, aggregation identity, whole-segment") as info:
        # row accounting on a real scene
        scene = build_scene(
            SceneConfig(
                str(desk_corpus / "speech" / "utt00.wav"),
                NoiseSpec("white"), 45, 0.0,
                load_rir_set(desk_corpus / "rirs"), seed=5,
            )
        )
        d = input_decomposition(scene, "L")
        alignment = parse_alignment(desk_corpus / "alignments" / "utt00.csv")
        scores = score_segments(d, alignment.segments, scene.sample_rate)
        accounted = len(scores.scored) + scores.skipped_short + alignment.silence_rows
        assert accounted == alignment.total_rows

        # count-weighted group means reproduce the grand mean
        phoneme_records = [r for r in desk_run["records"] if r.scope == "phoneme"]
        grand = float(np.mean([r.sir_out_db for r in phoneme_records]))
        worst_identity = 0.0
        for group_by in (("category",), ("category", "algorithm"), ("phoneme",)):
            rows = aggregate(phoneme_records, group_by)
            weighted = sum(row["count"] * row["sir_out_db_mean"] for row in rows)
            total = sum(row["count"] for row in rows)
            assert total == len(phoneme_records)
            worst_identity = max(
                worst_identity, abs(weighted / total - grand) / abs(grand)
            )
        assert worst_identity <= 1e-12

        # the full-signal segment is the utterance metric, exactly
        whole = metrics_from_decomposition(d)
        seg = segment_metrics(d, 0, d.n_samples)
        assert (seg.sdr_db, seg.sir_db, seg.sar_db) == (
            whole.sdr_db, whole.sir_db, whole.sar_db,
        )
        info["detail"] = f"aggregation identity {worst_identity:.1e}"


def test_criterion_11_sibilant_spectral_masking(desk_run):
    with criterion(11, "sibilant SIR_in lower under white than shaped noise") as info:
        records = [
            r for r in desk_run["records"]
            if r.scope == "phoneme" and r.category == "sibilant"
            and r.algorithm == "mvdr"  # sir_in is algorithm-independent
        ]
        margins = {}
        for snr in (-5.0, 0.0, 5.0):
            by_kind = {}
            for kind in ("white", "speech_shaped"):
                values = [
                    r.sir_in_db for r in records
                    if r.noise_kind == kind and r.target_snr_db == snr
                ]
                assert values
                by_kind[kind] = float(np.mean(values))
            margins[snr] = by_kind["speech_shaped"] - by_kind["white"]
            assert margins[snr] >= 1.0
        info["detail"] = ", ".join(
            f"{snr:+g} dB: {margin:.2f}" for snr, margin in margins.items()
        )
