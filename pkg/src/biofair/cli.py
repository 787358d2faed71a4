"""Command line front end.

Exit codes: 0 ok, 1 input/config error, 2 audit gate failure, 3 impossibility
counterexample found.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from ._io import atomic_write_text, canonical_json, sha256_bytes, sha256_file
from .errors import BiofairError, ParameterError, SchemaError, SpecError
from .fairness import DEFAULT_EPSILON, audit
from .impossibility import verify, verify_synthetic
from .rates import OperatingPointSpec, ScoreArrays, curve_from_arrays, format_det_csv
from .scores import AttributeSchema, load_scores, partition, write_scores
from .synth import PRESETS, PopulationSpec, generate, schema_for

EXIT_OK, EXIT_INPUT, EXIT_GATE, EXIT_COUNTEREXAMPLE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which is reserved for the gate
        raise ParameterError(message)


class Run:
    """Collects provenance for one invocation and writes outputs with it."""

    def __init__(self, command: str, argv: Sequence[str]):
        self.manifest = {
            "command": command,
            "command_line": list(argv),
            "tool_version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "inputs": {},
            "schema_digest": None,
            "seed": None,
            "outputs": {},
        }

    def input(self, path) -> None:
        self.manifest["inputs"][str(path)] = sha256_file(path)

    def write_payload(self, path: Path, key: str, payload: dict) -> None:
        body = canonical_json(payload)
        self.manifest["outputs"][str(path)] = {"payload_sha256": sha256_bytes(body.encode())}
        atomic_write_text(path, canonical_json({"manifest": self.manifest, key: payload}))

    def write_text(self, path: Path, text: str) -> None:
        self.manifest["outputs"][str(path)] = {"sha256": sha256_bytes(text.encode())}
        atomic_write_text(path, text)

    def finish(self, out_dir: Path) -> None:
        atomic_write_text(out_dir / "manifest.json", canonical_json(self.manifest))


def _load_schema(run: Run, path: str) -> AttributeSchema:
    if not Path(path).is_file():
        raise SchemaError(f"schema file not found: {path}")
    schema = AttributeSchema.load(path)
    run.input(path)
    run.manifest["schema_digest"] = schema.digest
    return schema


def _load_scores(run: Run, path: str, schema: AttributeSchema):
    records = load_scores(path, schema)
    run.manifest["inputs"][str(path)] = records.digest
    return records


def _partitions(text: str) -> list[list[str]]:
    parts = [[a.strip() for a in p.split("+") if a.strip()] for p in text.split(",") if p.strip()]
    if not parts:
        raise ParameterError("no partitions given")
    return parts


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label)


def cmd_audit(args, argv) -> int:
    run = Run("audit", argv)
    schema = _load_schema(run, args.schema)
    records = _load_scores(run, args.scores, schema)
    specs = OperatingPointSpec.parse_list(args.operating_points)
    report = audit(records, schema, _partitions(args.partitions), specs, args.epsilon)
    out = Path(args.out)
    run.write_payload(out / "report.json", "report", report.to_dict())
    run.write_text(out / "report.csv", report.to_csv())
    run.finish(out)
    flagged = [f"{e.partition}@{e.operating_point}:{c.value}" for e in report.entries for c, g in e.criteria.items() if g.unfair]
    print(f"audit: {len(report.entries)} entries, {len(flagged)} unfair criteria -> {out}")
    if args.gate and flagged:
        print("GATE-FAILED " + " ".join(flagged))
        return EXIT_GATE
    return EXIT_OK


def cmd_sweep(args, argv) -> int:
    run = Run("sweep", argv)
    schema = _load_schema(run, args.schema)
    records = _load_scores(run, args.scores, schema)
    out = Path(args.out)
    run.write_text(out / "det_pooled.csv", format_det_csv(curve_from_arrays(ScoreArrays.from_records(records))))
    if args.group_by:
        part = partition(records, schema, [a.strip() for a in args.group_by.split("+")])
        for cell in part.cells:
            sub = [records[i] for i in cell.indices]
            try:
                text = format_det_csv(curve_from_arrays(ScoreArrays.from_records(sub)))
            except BiofairError as exc:
                print(f"sweep: cell {cell.label}: skipped ({exc})", file=sys.stderr)
                continue
            run.write_text(out / f"det_{_slug(part.name)}_{_slug(cell.label)}.csv", text)
    run.finish(out)
    print(f"sweep: wrote {len(run.manifest['outputs'])} DET file(s) -> {out}")
    return EXIT_OK


def cmd_synth(args, argv) -> int:
    run = Run("synth", argv)
    if args.preset:
        spec = PRESETS[args.preset](args.seed)
    else:
        if not Path(args.spec).is_file():
            raise SpecError(f"population spec not found: {args.spec}")
        spec = PopulationSpec.load(args.spec)
        run.input(args.spec)
        spec = spec.with_seed(args.seed)
    run.manifest["seed"] = spec.seed
    schema = schema_for(spec)
    run.manifest["schema_digest"] = schema.digest
    records = generate(spec)
    out = Path(args.out)
    write_scores(records, schema, out / "scores.csv")
    run.manifest["outputs"][str(out / "scores.csv")] = {"sha256": sha256_file(out / "scores.csv")}
    run.write_text(out / "schema.json", canonical_json(schema.to_dict()))
    run.write_payload(out / "spec.json", "spec", spec.to_dict())
    run.finish(out)
    print(f"synth: {len(records)} records (seed {spec.seed}) -> {out / 'scores.csv'}")
    return EXIT_OK


def cmd_check_impossibility(args, argv) -> int:
    run = Run("check-impossibility", argv)
    if args.synthetic:
        run.manifest["seed"] = args.seed
        verdict = verify_synthetic(args.trials, args.seed, args.epsilon)
    else:
        if not (args.scores and args.schema and args.group_by):
            raise ParameterError("need --scores, --schema and --group-by, or --synthetic")
        schema = _load_schema(run, args.schema)
        records = _load_scores(run, args.scores, schema)
        part = partition(records, schema, [a.strip() for a in args.group_by.split("+")])
        verdict = verify(records, part, args.epsilon)
    if args.out:
        out = Path(args.out)
        run.write_payload(out / "verdict.json", "verdict", verdict.to_dict())
        run.finish(out)
    print(verdict.summary_line())
    return EXIT_OK if verdict.confirmed else EXIT_COUNTEREXAMPLE


def _epsilon(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"epsilon must lie in (0, 1), got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="biofair", description="Fairness audits for biometric verification scores.")
    p.add_argument("--version", action="version", version=f"biofair {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("audit", help="fairness report at shared operating points")
    a.add_argument("--scores", required=True)
    a.add_argument("--schema", required=True)
    a.add_argument("--partitions", required=True, help="comma list; join axes with '+' for intersections, e.g. age,gender,age+gender")
    a.add_argument("--operating-points", default="fgr@0.001,near-zfir", help="comma list of eer, fgr@<rate>, zfgr, zfir, near-zfir, fixed@<tau>")
    a.add_argument("--epsilon", type=_epsilon, default=DEFAULT_EPSILON)
    a.add_argument("--out", required=True, help="output directory")
    a.add_argument("--gate", action="store_true", help="exit 2 if any criterion is flagged unfair")
    a.set_defaults(func=cmd_audit)

    s = sub.add_parser("sweep", help="DET curves over all candidate thresholds")
    s.add_argument("--scores", required=True)
    s.add_argument("--schema", required=True)
    s.add_argument("--group-by")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    y = sub.add_parser("synth", help="generate a seeded synthetic score file")
    src = y.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec")
    src.add_argument("--preset", choices=sorted(PRESETS))
    y.add_argument("--seed", type=int, required=True)
    y.add_argument("--out", required=True)
    y.set_defaults(func=cmd_synth)

    c = sub.add_parser("check-impossibility", help="sweep thresholds for simultaneous satisfaction of all criteria")
    c.add_argument("--scores")
    c.add_argument("--schema")
    c.add_argument("--group-by")
    c.add_argument("--synthetic", action="store_true")
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--epsilon", type=_epsilon, default=DEFAULT_EPSILON)
    c.add_argument("--out")
    c.set_defaults(func=cmd_check_impossibility)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "seed", 0) is not None and getattr(args, "seed", 0) < 0:
            raise ParameterError("--seed must be non-negative")
        return args.func(args, argv)
    except (BiofairError, OSError) as exc:
        kind = type(exc).__name__
        print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
