"""Command-line entry point tying simulation, attacks, defense sweeps and
hashed-trace queries into reproducible experiments.

Every command writes a manifest next to its outputs before finalizing them;
re-running a command with an identical manifest reproduces the outputs byte
for byte (seeds default to 1, never to the clock).

Exit codes: 0 success, 2 usage or validation failure, 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .attacks import THREATS, PosDatabase
from .core import DeviceIdParseError, OuiTable, ValueTable, parse_device_id
from .csi import (
    HashedId,
    RoleRules,
    TraceStore,
    appearance_features,
    classify_role,
    ingest,
    match_candidate,
    presence_window,
)
from .evaluation import build_gold, evaluate_against_truth
from .experiments import (
    DEFAULT_DEFENSE_EPOCH,
    DEFAULT_INCIDENT_WINDOW,
    DEFAULT_KNOB_FRACTION,
    DEFENSES,
    AttackParams,
    evaluate_defense,
    matrix_rows,
    metrics_csv_rows,
    run_attacks,
)
from .scenario import ScenarioError, load_scenario
from .trace import (
    RECORD_SCHEMA,
    TraceBundle,
    TraceFormatError,
    canonical_json,
    write_records,
)
from .world import SimulationError, run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTERNAL = 3


class UsageError(ValueError):
    pass


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_manifest(out_dir: Path, command: str, **fields: object) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "out": str(out_dir),
    }
    manifest.update(fields)
    _write_atomic(out_dir / "manifest.json", canonical_json(manifest) + "\n")


def _csv_text(rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _load_salt(path: str) -> int:
    text = Path(path).read_text(encoding="utf-8").strip()
    try:
        return int(text, 0) & ((1 << 64) - 1)
    except ValueError:
        raise UsageError(f"salt file {path}: expected an integer, got {text!r}") from None


def _parse_incident(text: str) -> tuple[str, int, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError("--incident expects scanner:tick:window")
    try:
        return parts[0], int(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError("--incident tick and window must be integers") from None


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(
        out_dir,
        "simulate",
        scenario=args.scenario,
        seed=args.seed,
        config_digest=scenario.digest(),
    )
    bundle = run(scenario, args.seed)
    _write_atomic(out_dir / "trace.jsonl", "".join(l + "\n" for l in bundle.to_lines()))
    return EXIT_OK


def cmd_attack(args: argparse.Namespace) -> int:
    bundle = TraceBundle.load(args.trace)
    threats = tuple(t.strip() for t in args.threats.split(",")) if args.threats else THREATS
    for t in threats:
        if t not in THREATS:
            raise UsageError(f"unknown threat {t!r}; choose from {', '.join(THREATS)}")

    pos: Optional[PosDatabase] = None
    if args.pos_db:
        pos = PosDatabase.load(args.pos_db)
    elif args.pos_from_truth:
        pos = PosDatabase.from_truth(bundle.truth)

    oui = OuiTable.load(args.oui_table) if args.oui_table else None
    values = ValueTable.load(args.value_table) if args.value_table else None

    scenario = load_scenario(args.scenario) if args.scenario else None
    if scenario is not None:
        bundle.config_digest = scenario.digest()

    params = AttackParams(
        merge_gap=args.merge_gap,
        delta=args.delta,
        min_cooccurrence=args.cooccurrence,
        similarity=args.similarity,
        window=args.window,
        confirm=args.confirm,
        epoch_length=args.epoch_length,
    )
    gold = build_gold(scenario, args.seed) if scenario is not None else None
    if args.incident:
        params.incident = _parse_incident(args.incident)
    elif gold is not None:
        found = gold.incident()
        if found is not None:
            params.incident = (found[0], found[1], DEFAULT_INCIDENT_WINDOW)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(
        out_dir,
        "attack",
        trace=args.trace,
        scenario=args.scenario,
        seed=args.seed,
        threats=list(threats),
        config_digest=bundle.config_digest,
    )

    attack_run = run_attacks(bundle, threats, params, pos=pos, oui=oui, values=values)
    for rec in attack_run.reports:
        if bundle.config_digest:
            rec["config_digest"] = bundle.config_digest
    write_records(out_dir / "report.jsonl", attack_run.reports)

    if bundle.truth and gold is not None:
        metrics = evaluate_against_truth(
            attack_run.outputs,
            bundle,
            gold,
            transaction_tolerance=params.window,
            incident_window=(params.incident[2] if params.incident else DEFAULT_INCIDENT_WINDOW),
            pos=pos,
            epoch_length=args.epoch_length,
        )
        _write_atomic(out_dir / "metrics.csv", _csv_text(metrics_csv_rows(metrics)))
    return EXIT_OK


def cmd_defense_matrix(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    selected = (
        [d.strip() for d in args.defenses.split(",")]
        if args.defenses
        else [d for d in DEFENSES if d != "baseline"]
    )
    for d in selected:
        if d not in DEFENSES:
            raise UsageError(f"unknown defense {d!r}; choose from {', '.join(DEFENSES)}")
    ordered = ["baseline"] + [d for d in selected if d != "baseline"]

    oui = OuiTable.load(args.oui_table) if args.oui_table else None
    values = ValueTable.load(args.value_table) if args.value_table else None

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(
        out_dir,
        "defense-matrix",
        scenario=args.scenario,
        seed=args.seed,
        defenses=ordered,
        config_digest=scenario.digest(),
    )

    cells = [
        evaluate_defense(
            scenario.raw,
            args.seed,
            defense,
            oui=oui,
            values=values,
            epoch_length=args.epoch_length,
            knob_fraction=args.knob_fraction,
        )
        for defense in ordered
    ]
    _write_atomic(out_dir / "matrix.csv", _csv_text(matrix_rows(cells)))
    for cell in cells:
        _write_atomic(
            out_dir / f"trace-{cell.defense}.jsonl",
            "".join(l + "\n" for l in cell.bundle.to_lines()),
        )
    return EXIT_OK


def cmd_csi(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.csi_command == "ingest":
        salt = _load_salt(args.salt_file)
        bundle = TraceBundle.load(args.trace)
        write_manifest(out_dir, "csi-ingest", trace=args.trace)
        store = ingest(bundle.sightings, salt)
        store.serialize(out_dir / "store.jsonl")
        return EXIT_OK

    if args.csi_command == "match":
        salt = _load_salt(args.salt_file)
        store = TraceStore.deserialize(args.store, salt)
        candidate = parse_device_id(args.id)
        write_manifest(out_dir, "csi-match", store=args.store, candidate=args.id)
        rows = match_candidate(candidate, store)
        write_records(
            out_dir / "matches.jsonl",
            [
                {
                    "kind": "hashed-sighting",
                    "digest": str(r.digest),
                    "scanner_id": r.scanner_id,
                    "tick": r.tick,
                    "class": r.cls.value,
                    "name": r.name,
                }
                for r in rows
            ],
        )
        return EXIT_OK

    if args.csi_command == "presence":
        if args.window_from > args.window_to:
            raise UsageError("--from must be <= --to")
        store = TraceStore.deserialize(args.store, salt=0)
        write_manifest(
            out_dir,
            "csi-presence",
            store=args.store,
            scanner=args.scanner,
            window=[args.window_from, args.window_to],
        )
        found = presence_window(store, args.scanner, args.window_from, args.window_to)
        write_records(
            out_dir / "presence.jsonl",
            [{"kind": "presence", "digest": str(d)} for d in found],
        )
        return EXIT_OK

    if args.csi_command == "classify":
        store = TraceStore.deserialize(args.store, salt=0)
        write_manifest(out_dir, "csi-classify", store=args.store)
        rules = RoleRules()
        subjects = (
            [HashedId.parse(args.subject)] if args.subject else store.subjects()
        )
        records = []
        for subject in subjects:
            features = appearance_features(
                store, subject, args.ticks_per_hour, rules.night_window
            )
            records.append(
                {
                    "kind": "role",
                    "digest": str(subject),
                    "label": classify_role(features, rules),
                    "n_sightings": features.n_sightings,
                    "n_distinct_scanners": features.n_distinct_scanners,
                    "night_fraction": round(features.night_fraction, 6),
                }
            )
        write_records(out_dir / "roles.jsonl", records)
        return EXIT_OK

    raise UsageError(f"unknown csi subcommand {args.csi_command!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="btprivacy",
        description="Bluetooth discovery privacy testbed: simulate, attack, defend, query.",
    )
    parser.add_argument(
        "--print-schema",
        action="store_true",
        help="dump the line-record field schema and exit",
    )
    sub = parser.add_subparsers(dest="command")

    sim = sub.add_parser("simulate", help="run a scenario and write its trace")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--seed", type=int, default=1)
    sim.add_argument("--out", required=True)

    atk = sub.add_parser("attack", help="run threat inference over a trace")
    atk.add_argument("--trace", required=True)
    atk.add_argument("--threats", default="", help="comma-separated subset (default: all)")
    atk.add_argument("--pos-db", default="")
    atk.add_argument(
        "--pos-from-truth",
        action="store_true",
        help="build the sale registry from the trace's own truth records",
    )
    atk.add_argument("--scenario", default="", help="enables metric scoring against truth")
    atk.add_argument("--seed", type=int, default=1)
    atk.add_argument("--oui-table", default="")
    atk.add_argument("--value-table", default="")
    atk.add_argument("--merge-gap", type=int, default=300)
    atk.add_argument("--delta", type=int, default=60)
    atk.add_argument("--cooccurrence", type=int, default=3)
    atk.add_argument("--similarity", type=float, default=0.5)
    atk.add_argument("--window", type=int, default=600)
    atk.add_argument("--confirm", type=int, default=2)
    atk.add_argument("--epoch-length", type=int, default=DEFAULT_DEFENSE_EPOCH)
    atk.add_argument("--incident", default="", help="scanner:tick:window")
    atk.add_argument("--out", required=True)

    mat = sub.add_parser("defense-matrix", help="baseline plus each defense, attacked and scored")
    mat.add_argument("--scenario", required=True)
    mat.add_argument("--seed", type=int, default=1)
    mat.add_argument("--defenses", default="", help="comma-separated subset (default: all)")
    mat.add_argument("--epoch-length", type=int, default=DEFAULT_DEFENSE_EPOCH)
    mat.add_argument("--knob-fraction", type=float, default=DEFAULT_KNOB_FRACTION)
    mat.add_argument("--oui-table", default="")
    mat.add_argument("--value-table", default="")
    mat.add_argument("--out", required=True)

    csi = sub.add_parser("csi", help="hashed store operations and queries")
    csi_sub = csi.add_subparsers(dest="csi_command")

    csi_ingest = csi_sub.add_parser("ingest")
    csi_ingest.add_argument("--trace", required=True)
    csi_ingest.add_argument("--salt-file", required=True)
    csi_ingest.add_argument("--out", required=True)

    csi_match = csi_sub.add_parser("match")
    csi_match.add_argument("--store", required=True)
    csi_match.add_argument("--salt-file", required=True)
    csi_match.add_argument("--id", required=True)
    csi_match.add_argument("--out", required=True)

    csi_presence = csi_sub.add_parser("presence")
    csi_presence.add_argument("--store", required=True)
    csi_presence.add_argument("--scanner", required=True)
    csi_presence.add_argument("--from", dest="window_from", type=int, required=True)
    csi_presence.add_argument("--to", dest="window_to", type=int, required=True)
    csi_presence.add_argument("--out", required=True)

    csi_classify = csi_sub.add_parser("classify")
    csi_classify.add_argument("--store", required=True)
    csi_classify.add_argument("--subject", default="")
    csi_classify.add_argument("--ticks-per-hour", type=int, default=3600)
    csi_classify.add_argument("--out", required=True)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_schema:
        sys.stdout.write(canonical_json(RECORD_SCHEMA) + "\n")
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "attack":
            return cmd_attack(args)
        if args.command == "defense-matrix":
            return cmd_defense_matrix(args)
        if args.command == "csi":
            if not getattr(args, "csi_command", None):
                parser.parse_args(["csi", "--help"])
                return EXIT_USAGE
            return cmd_csi(args)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, ScenarioError, TraceFormatError, DeviceIdParseError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (SimulationError, AssertionError) as exc:
        sys.stderr.write(f"internal error: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
