"""Command line front end.

Subcommands: run (evaluate a configured matrix), validate (check a
config without running), report (re-aggregate an existing records.csv),
fixtures (write the bundled synthetic desk corpus). Exit codes: 0 on
success, 1 when some scenes failed but a report was written, 2 on
configuration errors.
"""

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from .fixtures import build_desk_corpus
from .phonemes import EvalRecord
from .pipeline import (
    ConfigError,
    _aggregate_header,
    _aggregate_rows,
    _write_csv,
    emit_report,
    run_matrix,
    validate_config,
)

_GROUPABLE = (
    "utterance_id", "ear", "algorithm", "noise_kind", "noise_angle_deg",
    "target_snr_db", "scope", "phoneme", "category",
)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="phonobeam",
        description="Phoneme-scale evaluation of binaural speech enhancement.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="evaluate the configured matrix")
    run_parser.add_argument("config", help="path to a YAML run config")
    run_parser.add_argument(
        "--workers", type=int, default=None,
        help="override the configured worker count",
    )
    run_parser.add_argument(
        "--output-dir", default=None,
        help="override the configured output directory",
    )

    validate_parser = sub.add_parser("validate", help="check a config and exit")
    validate_parser.add_argument("config", help="path to a YAML run config")

    report_parser = sub.add_parser(
        "report", help="re-aggregate an existing records.csv"
    )
    report_parser.add_argument("records", help="path to a records.csv")
    report_parser.add_argument(
        "--group-by", default="scope,category,algorithm",
        help="comma-separated record fields to group on "
             f"(choices: {', '.join(_GROUPABLE)})",
    )
    report_parser.add_argument(
        "--output", default=None,
        help="write the aggregate CSV here instead of stdout",
    )

    fixtures_parser = sub.add_parser(
        "fixtures", help="write the bundled synthetic desk corpus"
    )
    fixtures_parser.add_argument("output_dir", help="corpus root to create")
    fixtures_parser.add_argument(
        "--seed", type=int, default=20260826, help="corpus generator seed"
    )
    return parser


def _load_records(path):
    """Read a records.csv back into EvalRecord objects."""
    records = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            scope = row["scope"]
            records.append(
                EvalRecord(
                    utterance_id=row["utterance_id"],
                    ear=row["ear"],
                    algorithm=row["algorithm"],
                    noise_kind=row["noise_kind"],
                    noise_angle_deg=int(row["noise_angle_deg"]),
                    target_snr_db=float(row["target_snr_db"]),
                    scope=scope,
                    phoneme=row["phoneme"] if scope == "phoneme" else None,
                    category=row["category"] if scope == "phoneme" else None,
                    sir_in_db=float(row["sir_in_db"]),
                    sdr_out_db=float(row["sdr_out_db"]),
                    sir_out_db=float(row["sir_out_db"]),
                    sar_out_db=float(row["sar_out_db"]),
                    segment_duration_s=float(row["segment_duration_s"]),
                )
            )
    return records


def _cmd_run(args):
    try:
        cfg = validate_config(args.config)
    except ConfigError as error:
        print(f"config error: {error}", file=sys.stderr)
        return 2
    if args.workers is not None:
        if args.workers < 1:
            print("config error: workers must be at least 1", file=sys.stderr)
            return 2
        cfg = replace(cfg, workers=args.workers)
    if args.output_dir is not None:
        cfg = replace(cfg, output_dir=Path(args.output_dir).resolve())
    records, manifest = run_matrix(cfg)
    if not records:
        print("all scenes failed; nothing to report", file=sys.stderr)
        for failure in manifest.failures:
            print(f"  {failure['utterance_id']}: {failure['error'].splitlines()[0]}",
                  file=sys.stderr)
        return 1
    written = emit_report(records, manifest, cfg.output_dir)
    print(f"wrote {len(records)} records across {len(written)} files to {cfg.output_dir}")
    if manifest.failures:
        print(f"{len(manifest.failures)} scene(s) failed:", file=sys.stderr)
        for failure in manifest.failures:
            print(
                f"  {failure['utterance_id']} {failure['noise_kind']} "
                f"{failure['target_snr_db']:g} dB {failure['noise_angle_deg']} deg: "
                f"{failure['error'].splitlines()[0]}",
                file=sys.stderr,
            )
        return 1
    return 0


def _cmd_validate(args):
    try:
        cfg = validate_config(args.config)
    except ConfigError as error:
        print(f"config error: {error}", file=sys.stderr)
        return 2
    utterances = len(sorted(cfg.speech_dir.glob("*.wav")))
    scenes = (
        utterances * len(cfg.noise_kinds) * len(cfg.snr_db) * len(cfg.noise_angles_deg)
    )
    print(f"config ok: {utterances} utterances, {scenes} scenes, "
          f"{len(cfg.algorithms)} algorithms, ears {'/'.join(cfg.ears)}")
    return 0


def _cmd_report(args):
    group_by = tuple(field.strip() for field in args.group_by.split(",") if field.strip())
    if not group_by:
        print("config error: --group-by selects no fields", file=sys.stderr)
        return 2
    unknown = [field for field in group_by if field not in _GROUPABLE]
    if unknown:
        print(f"config error: cannot group by {', '.join(unknown)}", file=sys.stderr)
        return 2
    records_path = Path(args.records)
    if not records_path.is_file():
        print(f"config error: records file {records_path} does not exist", file=sys.stderr)
        return 2
    try:
        records = _load_records(records_path)
    except (KeyError, ValueError) as error:
        print(f"config error: malformed records file: {error}", file=sys.stderr)
        return 2
    header = _aggregate_header(group_by)
    rows = _aggregate_rows(records, group_by)
    if args.output is not None:
        _write_csv(args.output, header, rows)
        print(f"wrote {len(rows)} groups to {args.output}")
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return 0


def _cmd_fixtures(args):
    config_path = build_desk_corpus(Path(args.output_dir), seed=args.seed)
    print(f"desk corpus written; run config at {config_path}")
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handler = {
        "run": _cmd_run,
        "validate": _cmd_validate,
        "report": _cmd_report,
        "fixtures": _cmd_fixtures,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
