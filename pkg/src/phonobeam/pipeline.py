"""Run configuration, matrix orchestration, and report emission.

A run is the cross product utterances x noise kinds x SNRs x angles,
with every algorithm and ear evaluated on each scene. Scene seeds are
derived by hashing (master_seed, utterance, noise, snr, angle), so any
subset rerun reproduces the full run's records bit for bit. Scene
failures are recorded and skipped; they never poison other scenes.
"""

import csv
import hashlib
import json
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Optional

import yaml

from . import __version__
from .audio import StftConfig
from .beamforming import ALGORITHMS, enhance_binaural
from .bsseval import decompose, input_decomposition, metrics_from_decomposition
from .noise import NOISE_KINDS, NoiseSpec
from .phonemes import (
    EvalRecord,
    aggregate,
    load_category_map,
    parse_alignment,
    score_segments,
)
from .scene import (
    ActivityDetectorConfig,
    BINAURAL_LAYOUT,
    SceneConfig,
    build_scene,
    load_rir_set,
)

EARS = ("L", "R")

RECORD_COLUMNS = (
    "utterance_id", "ear", "algorithm", "noise_kind", "noise_angle_deg",
    "target_snr_db", "scope", "phoneme", "category", "sir_in_db",
    "sdr_out_db", "sir_out_db", "sar_out_db", "segment_duration_s",
)

SUMMARY_GROUP = ("scope", "category", "algorithm", "noise_kind", "target_snr_db", "ear")

INPUT_ALGORITHM = "input"


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved evaluation matrix description."""

    speech_dir: Path
    rir_root: Path
    output_dir: Path
    noise_kinds: tuple
    snr_db: tuple
    noise_angles_deg: tuple
    algorithms: tuple
    ears: tuple
    alignment_dir: Optional[Path] = None
    ssn_donor: Optional[Path] = None
    recorded_noise: Optional[Path] = None
    category_map: Optional[Path] = None
    stft_window: int = 512
    stft_hop: int = 256
    activity_frame: int = 320
    activity_threshold_db: float = 40.0
    metric_filter_length: int = 512
    min_segment_s: float = 0.032
    gevd_rank: int = 1
    speech_angle_deg: int = 0
    master_seed: int = 0
    workers: int = 1


_DEFAULTS = {
    "speech_dir": None,
    "alignment_dir": None,
    "rir_root": None,
    "noise_kinds": ["white"],
    "ssn_donor": None,
    "recorded_noise": None,
    "snr_db": [-5.0, 0.0, 5.0],
    "noise_angles_deg": [45, 90],
    "algorithms": list(ALGORITHMS),
    "ears": list(EARS),
    "stft_window": 512,
    "stft_hop": 256,
    "activity_frame": 320,
    "activity_threshold_db": 40.0,
    "metric_filter_length": 512,
    "min_segment_s": 0.032,
    "gevd_rank": 1,
    "speech_angle_deg": 0,
    "category_map": None,
    "output_dir": "out",
    "master_seed": 0,
    "workers": 1,
}

_REQUIRED = ("speech_dir", "rir_root")
_PATH_KEYS = (
    "speech_dir", "alignment_dir", "rir_root", "ssn_donor", "recorded_noise",
    "category_map", "output_dir",
)


def _dedup(values, key_name):
    seen, out = set(), []
    for value in values:
        if value in seen:
            warnings.warn(f"duplicate {key_name} value {value!r} dropped")
            continue
        seen.add(value)
        out.append(value)
    return out


def validate_config(path):
    """Parse, default, and cross-check a YAML run config.

    Relative paths are resolved against the config file's directory.
    Raises ConfigError on unknown keys, missing paths, or an empty
    matrix dimension.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as error:
        raise ConfigError(f"{path}: {error}")
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a key-value mapping at top level")
    unknown = sorted(set(raw) - set(_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key in _REQUIRED:
        if raw.get(key) is None:
            raise ConfigError(f"missing required config key {key!r}")

    merged = {**_DEFAULTS, **raw}
    base = path.parent
    for key in _PATH_KEYS:
        if merged[key] is not None:
            merged[key] = (base / merged[key]).resolve()

    for key in ("noise_kinds", "snr_db", "noise_angles_deg", "algorithms", "ears"):
        value = merged[key]
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"config key {key!r} must be a non-empty list")
    merged["snr_db"] = [float(v) for v in _dedup(merged["snr_db"], "snr_db")]
    merged["noise_angles_deg"] = [
        int(v) for v in _dedup(merged["noise_angles_deg"], "noise_angles_deg")
    ]

    for kind in merged["noise_kinds"]:
        if kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {kind!r}, expected one of {NOISE_KINDS}")
    for algorithm in merged["algorithms"]:
        if algorithm not in ALGORITHMS:
            raise ConfigError(
                f"unknown algorithm {algorithm!r}, expected one of {ALGORITHMS}"
            )
    for ear in merged["ears"]:
        if ear not in EARS:
            raise ConfigError(f"unknown ear {ear!r}, expected L or R")

    if "speech_shaped" in merged["noise_kinds"] and merged["ssn_donor"] is None:
        raise ConfigError("speech_shaped noise requires the ssn_donor key")
    if "recorded" in merged["noise_kinds"] and merged["recorded_noise"] is None:
        raise ConfigError("recorded noise requires the recorded_noise key")

    if not merged["speech_dir"].is_dir():
        raise ConfigError(f"speech_dir {merged['speech_dir']} is not a directory")
    if not sorted(merged["speech_dir"].glob("*.wav")):
        raise ConfigError(f"speech_dir {merged['speech_dir']} contains no WAV files")
    if merged["alignment_dir"] is not None and not merged["alignment_dir"].is_dir():
        raise ConfigError(f"alignment_dir {merged['alignment_dir']} is not a directory")
    for key in ("ssn_donor", "recorded_noise", "category_map"):
        if merged[key] is not None and not merged[key].is_file():
            raise ConfigError(f"{key} file {merged[key]} does not exist")
    if not merged["rir_root"].is_dir():
        raise ConfigError(f"rir_root {merged['rir_root']} is not a directory")
    needed_angles = set(merged["noise_angles_deg"]) | {merged["speech_angle_deg"]}
    for angle in sorted(needed_angles):
        angle_dir = merged["rir_root"] / str(angle)
        if not angle_dir.is_dir():
            raise ConfigError(
                f"angle {angle} requested but {angle_dir} does not exist"
            )
        missing = [
            ch for ch in BINAURAL_LAYOUT if not (angle_dir / f"{ch}.wav").is_file()
        ]
        if missing:
            raise ConfigError(
                f"angle {angle} is missing channels {missing} under {angle_dir}"
            )

    if not 0 < merged["stft_hop"] <= merged["stft_window"]:
        raise ConfigError("need 0 < stft_hop <= stft_window")
    if merged["activity_frame"] <= 0 or merged["activity_threshold_db"] <= 0:
        raise ConfigError("activity detector parameters must be positive")
    if merged["metric_filter_length"] < 1:
        raise ConfigError("metric_filter_length must be at least 1")
    if merged["min_segment_s"] < 0:
        raise ConfigError("min_segment_s must be non-negative")
    if not 1 <= merged["gevd_rank"] <= len(BINAURAL_LAYOUT):
        raise ConfigError(f"gevd_rank must be in [1, {len(BINAURAL_LAYOUT)}]")
    if merged["workers"] < 1:
        raise ConfigError("workers must be at least 1")

    for key in ("noise_kinds", "snr_db", "noise_angles_deg", "algorithms", "ears"):
        merged[key] = tuple(merged[key])
    merged["master_seed"] = int(merged["master_seed"])
    return RunConfig(**merged)


def derive_scene_seed(master_seed, utterance_id, noise_kind, snr_db, angle):
    """Stable 64-bit seed for one scene of the matrix."""
    text = f"{master_seed}|{utterance_id}|{noise_kind}|{snr_db:g}|{angle}"
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a run byte-identically."""

    version: str
    config: dict
    scene_seeds: dict
    input_digests: dict
    failures: tuple

    def to_json(self):
        payload = {
            "version": self.version,
            "config": self.config,
            "scene_seeds": self.scene_seeds,
            "input_digests": self.input_digests,
            "failures": list(self.failures),
        }
        return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)


@dataclass(frozen=True)
class _SceneJob:
    utterance_id: str
    speech_path: str
    alignment_path: Optional[str]
    noise_kind: str
    snr_db: float
    angle: int
    seed: int


def _noise_spec(cfg, kind):
    if kind == "white":
        return NoiseSpec("white")
    if kind == "speech_shaped":
        return NoiseSpec("speech_shaped", source_path=str(cfg.ssn_donor))
    return NoiseSpec("recorded", source_path=str(cfg.recorded_noise))


def _utterance_record(job, ear, algorithm, sir_in, triple, duration):
    return EvalRecord(
        utterance_id=job.utterance_id,
        ear=ear,
        algorithm=algorithm,
        noise_kind=job.noise_kind,
        noise_angle_deg=job.angle,
        target_snr_db=job.snr_db,
        scope="utterance",
        phoneme=None,
        category=None,
        sir_in_db=sir_in,
        sdr_out_db=triple.sdr_db,
        sir_out_db=triple.sir_db,
        sar_out_db=triple.sar_db,
        segment_duration_s=duration,
    )


def _run_scene(cfg, job):
    """Evaluate one scene; returns (records, error-or-None)."""
    try:
        rirs = load_rir_set(cfg.rir_root)
        scene = build_scene(
            SceneConfig(
                speech_path=job.speech_path,
                noise=_noise_spec(cfg, job.noise_kind),
                noise_angle=job.angle,
                target_snr_db=job.snr_db,
                rir_set=rirs,
                seed=job.seed,
                speech_angle=cfg.speech_angle_deg,
            ),
            detector=ActivityDetectorConfig(cfg.activity_frame, cfg.activity_threshold_db),
        )
        stft_cfg = StftConfig(cfg.stft_window, cfg.stft_hop)
        duration = scene.mixture.num_samples / scene.sample_rate
        category_map = load_category_map(cfg.category_map)
        segments = ()
        if job.alignment_path is not None:
            segments = parse_alignment(job.alignment_path).segments

        records = []
        input_decompositions = {}
        for ear in cfg.ears:
            d_in = input_decomposition(scene, ear, cfg.metric_filter_length)
            input_decompositions[ear] = d_in
            m_in = metrics_from_decomposition(d_in)
            records.append(
                _utterance_record(job, ear, INPUT_ALGORITHM, m_in.sir_db, m_in, duration)
            )

        for algorithm in cfg.algorithms:
            left, right = enhance_binaural(
                scene, algorithm, stft_cfg=stft_cfg, gevd_rank=cfg.gevd_rank
            )
            estimates = {"L": left, "R": right}
            for ear in cfg.ears:
                reference = {"L": "L1", "R": "R1"}[ear]
                d_out = decompose(
                    estimates[ear],
                    scene.speech_image.channel(reference),
                    scene.noise_image.channel(reference),
                    cfg.metric_filter_length,
                )
                m_in = metrics_from_decomposition(input_decompositions[ear])
                m_out = metrics_from_decomposition(d_out)
                records.append(
                    _utterance_record(job, ear, algorithm, m_in.sir_db, m_out, duration)
                )
                if not segments:
                    continue
                scored_in = score_segments(
                    input_decompositions[ear], segments, scene.sample_rate,
                    cfg.min_segment_s,
                )
                scored_out = score_segments(
                    d_out, segments, scene.sample_rate, cfg.min_segment_s
                )
                for (segment, m_seg_in), (_, m_seg_out) in zip(
                    scored_in.scored, scored_out.scored
                ):
                    records.append(
                        EvalRecord(
                            utterance_id=job.utterance_id,
                            ear=ear,
                            algorithm=algorithm,
                            noise_kind=job.noise_kind,
                            noise_angle_deg=job.angle,
                            target_snr_db=job.snr_db,
                            scope="phoneme",
                            phoneme=segment.label,
                            category=category_map.categorize(segment.label),
                            sir_in_db=m_seg_in.sir_db,
                            sdr_out_db=m_seg_out.sdr_db,
                            sir_out_db=m_seg_out.sir_db,
                            sar_out_db=m_seg_out.sar_db,
                            segment_duration_s=segment.duration,
                            segment_start_s=segment.start,
                        )
                    )
        return records, None
    except Exception as error:  # noqa: BLE001 - scene isolation boundary
        detail = traceback.format_exc(limit=3)
        return [], f"{type(error).__name__}: {error}\n{detail}"


def _record_sort_key(record):
    return (
        record.utterance_id,
        record.noise_kind,
        record.target_snr_db,
        record.noise_angle_deg,
        record.algorithm,
        record.ear,
        0 if record.scope == "utterance" else 1,
        record.segment_start_s if record.segment_start_s is not None else -1.0,
    )


def _file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _config_snapshot(cfg):
    snapshot = {}
    for field_name, value in vars(cfg).items():
        snapshot[field_name] = str(value) if isinstance(value, Path) else (
            list(value) if isinstance(value, tuple) else value
        )
    return snapshot


def run_matrix(cfg):
    """Evaluate the whole matrix.

    Returns
    -------
    (records, manifest) : records sorted deterministically (utterance,
    noise, snr, angle, algorithm, ear, scope, segment start), manifest
    capturing the config snapshot, per-scene seeds, and input digests.
    """
    speech_files = sorted(cfg.speech_dir.glob("*.wav"))
    jobs = []
    scene_seeds = {}
    alignment_paths = {}
    for speech_path in speech_files:
        utterance_id = speech_path.stem
        alignment = None
        if cfg.alignment_dir is not None:
            candidate = cfg.alignment_dir / f"{utterance_id}.csv"
            if candidate.is_file():
                alignment = str(candidate)
            else:
                warnings.warn(f"no alignment for {utterance_id}; utterance-level only")
        alignment_paths[utterance_id] = alignment
        for noise_kind in cfg.noise_kinds:
            for snr_db in cfg.snr_db:
                for angle in cfg.noise_angles_deg:
                    seed = derive_scene_seed(
                        cfg.master_seed, utterance_id, noise_kind, snr_db, angle
                    )
                    scene_seeds[f"{utterance_id}|{noise_kind}|{snr_db:g}|{angle}"] = seed
                    jobs.append(
                        _SceneJob(
                            utterance_id, str(speech_path), alignment,
                            noise_kind, snr_db, angle, seed,
                        )
                    )
    if cfg.alignment_dir is None:
        warnings.warn("no alignment_dir configured; utterance-level records only")

    worker = partial(_run_scene, cfg)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(worker, jobs))
    else:
        outcomes = [worker(job) for job in jobs]

    records = []
    failures = []
    for job, (scene_records, error) in zip(jobs, outcomes):
        if error is not None:
            failures.append(
                {
                    "utterance_id": job.utterance_id,
                    "noise_kind": job.noise_kind,
                    "target_snr_db": job.snr_db,
                    "noise_angle_deg": job.angle,
                    "error": error,
                }
            )
            continue
        records.extend(scene_records)
    records.sort(key=_record_sort_key)

    digests = {}
    for speech_path in speech_files:
        digests[speech_path.name] = _file_digest(speech_path)
    for utterance_id, alignment in sorted(alignment_paths.items()):
        if alignment is not None:
            digests[Path(alignment).name] = _file_digest(alignment)
    for rir_path in sorted(cfg.rir_root.rglob("*.wav")):
        digests[str(rir_path.relative_to(cfg.rir_root.parent))] = _file_digest(rir_path)
    for extra in (cfg.ssn_donor, cfg.recorded_noise, cfg.category_map):
        if extra is not None:
            digests[Path(extra).name] = _file_digest(extra)

    manifest = RunManifest(
        version=__version__,
        config=_config_snapshot(cfg),
        scene_seeds=scene_seeds,
        input_digests=digests,
        failures=tuple(failures),
    )
    return records, manifest


def _fmt_db(value):
    return f"{round(float(value), 4) + 0.0:.4f}"


def _fmt_snr(value):
    return f"{float(value):g}"


def _record_row(record):
    return [
        record.utterance_id,
        record.ear,
        record.algorithm,
        record.noise_kind,
        str(record.noise_angle_deg),
        _fmt_snr(record.target_snr_db),
        record.scope,
        record.phoneme or "",
        record.category or "",
        _fmt_db(record.sir_in_db),
        _fmt_db(record.sdr_out_db),
        _fmt_db(record.sir_out_db),
        _fmt_db(record.sar_out_db),
        _fmt_db(record.segment_duration_s),
    ]


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _aggregate_rows(records, group_by):
    rows = []
    for summary in aggregate(records, group_by):
        row = []
        for field_name in group_by:
            value = summary[field_name]
            if value is None:
                row.append("")
            elif field_name == "target_snr_db":
                row.append(_fmt_snr(value))
            else:
                row.append(str(value))
        row.append(str(summary["count"]))
        for metric in ("sir_in_db", "sdr_out_db", "sir_out_db", "sar_out_db"):
            row.append(_fmt_db(summary[f"{metric}_mean"]))
        rows.append(row)
    return rows


def _aggregate_header(group_by):
    return list(group_by) + [
        "count", "sir_in_db_mean", "sdr_out_db_mean", "sir_out_db_mean",
        "sar_out_db_mean",
    ]


def emit_report(records, manifest, output_dir):
    """Write records.csv, summary.csv, manifest.json, and figure_data/.

    Returns the list of written paths. Output is deterministic for
    deterministic records (no timestamps, sorted keys, fixed formats).
    """
    if not records:
        raise ValueError("no records to report")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []

    records_path = output_dir / "records.csv"
    _write_csv(records_path, RECORD_COLUMNS, [_record_row(r) for r in records])
    written.append(records_path)

    summary_path = output_dir / "summary.csv"
    _write_csv(
        summary_path,
        _aggregate_header(SUMMARY_GROUP),
        _aggregate_rows(records, SUMMARY_GROUP),
    )
    written.append(summary_path)

    manifest_path = output_dir / "manifest.json"
    manifest_path.write_text(manifest.to_json() + "\n", encoding="utf-8")
    written.append(manifest_path)

    figure_dir = output_dir / "figure_data"
    figure_dir.mkdir(exist_ok=True)
    utterance_records = [r for r in records if r.scope == "utterance"]
    phoneme_records = [r for r in records if r.scope == "phoneme"]
    groupings = [
        ("by_ear.csv", utterance_records, ("algorithm", "ear")),
        ("by_noise.csv", utterance_records, ("algorithm", "noise_kind")),
        ("by_snr.csv", utterance_records, ("algorithm", "target_snr_db")),
        ("by_angle.csv", utterance_records, ("algorithm", "noise_angle_deg")),
        ("by_category.csv", phoneme_records, ("category",)),
        ("by_category_algorithm.csv", phoneme_records, ("category", "algorithm")),
        ("by_category_noise.csv", phoneme_records, ("category", "noise_kind")),
        ("by_category_snr.csv", phoneme_records, ("category", "target_snr_db")),
    ]
    for name, subset, group_by in groupings:
        if not subset:
            continue
        figure_path = figure_dir / name
        _write_csv(figure_path, _aggregate_header(group_by), _aggregate_rows(subset, group_by))
        written.append(figure_path)
    if not phoneme_records:
        warnings.warn("no phoneme-scope records; figure_data covers utterance level only")
    return written
