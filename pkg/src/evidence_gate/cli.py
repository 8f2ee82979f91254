"""Command-line entry point: validate, run, verify, audit, bench.

Exit codes are stable: 0 success, 1 gate failure or hallucination found,
2 usage error or unreadable input, 3 store unreachable.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

from . import bench as bench_mod
from .approval import GateConfig
from .contract import ContractError, check_schema, parse_contract
from .ledger import EmptyLedger, LedgerStatus, MalformedLedger, audit_ledger, emit_ledger, load_ledger, write_audit_report
from .pipeline import (
    VARIANTS,
    MisconfiguredVariant,
    PipelineConfig,
    StoreUnreachableAtStart,
    run_task,
    system_clock,
    variant_by_name,
)
from .plotting import plot_hallucination_rates, plot_outcome_matrix
from .reflection import PatchLedger, Rulebook
from .store import StoreUnreachable, open_store
from .verification import FailureClass, verify

EXIT_OK = 0
EXIT_GATE = 1
EXIT_USAGE = 2
EXIT_UNREACHABLE = 3

STORE_ENV = "EVIBOUND_STORE"
LEDGER_NAME = "claims_ledger.json"


class UsageError(Exception):
    pass


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def parse_clock(spec: str | None) -> Callable[[], datetime]:
    if spec is None:
        return system_clock
    kind, _, value = spec.partition(":")
    if kind != "fixed" or not value:
        raise UsageError(f"--clock expects fixed:<iso8601>, got {spec!r}")
    try:
        moment = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        raise UsageError(f"bad timestamp in --clock: {value!r}") from None
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return lambda: moment


def load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    # accept both {"store": {"root": ...}} and a flat "store.root" key
    store = data.get("store")
    if isinstance(store, dict) and "root" in store:
        data["store.root"] = store["root"]
    return data


def pipeline_config(args: argparse.Namespace, config: dict[str, Any]) -> PipelineConfig:
    merged = dict(config)
    if getattr(args, "tau", None) is not None:
        merged["tau"] = args.tau
    if getattr(args, "max_retries", None) is not None:
        merged["max_retries_per_phase"] = args.max_retries
    try:
        return PipelineConfig.from_mapping(merged)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def store_uri(args: argparse.Namespace, config: dict[str, Any]) -> str:
    uri = getattr(args, "store", None) or config.get("store.root") or os.environ.get(STORE_ENV)
    if not uri:
        raise UsageError(f"no store given: pass --store or set {STORE_ENV}")
    return str(uri)


def load_rulebook(path: str | None) -> Rulebook | None:
    if path is None:
        return None
    try:
        return Rulebook.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read rulebook {path}: {exc}") from None


# --------------------------------------------------------------------------
# commands


def cmd_validate(args: argparse.Namespace) -> int:
    path = Path(args.contract)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    try:
        contract = parse_contract(path.read_bytes())
    except ContractError as exc:
        print(f"{type(exc).__name__}: {exc}")
        return EXIT_GATE
    violations = check_schema(contract, run_id_format=args.run_id_format)
    for violation in violations:
        print(violation)
    return EXIT_GATE if violations else EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    variant = variant_by_name(args.variant or config.get("variant", "evibound"))
    pconfig = pipeline_config(args, config)
    task_dir = Path(args.tasks)
    if not task_dir.is_dir():
        raise UsageError(f"no such task directory: {task_dir}")
    try:
        scripts = bench_mod.load_task_dir(task_dir)
    except ContractError as exc:
        _err(f"bad contract in {task_dir}: {exc}")
        return EXIT_USAGE
    if not scripts:
        raise UsageError(f"no contracts found in {task_dir}")
    store = open_store(store_uri(args, config), seed=args.seed)
    rulebook = bench_mod.bench_rulebook(scripts, load_rulebook(args.rulebook))
    clock = parse_clock(args.clock)
    patches = PatchLedger()
    entries = []
    try:
        for script in scripts.values():
            entry = run_task(script.contract, script.executor_for(variant), script.panel, variant, store, pconfig,
                             rulebook=rulebook, clock=clock, patch_ledger=patches)
            entries.append(entry)
            print(f"{entry.task_id} {entry.status.value}")
    except StoreUnreachableAtStart as exc:
        _err(f"store unreachable: {exc}")
        return EXIT_UNREACHABLE
    out = Path(args.out)
    emit_ledger(entries, out / LEDGER_NAME)
    patches.write(out)
    return EXIT_OK if all(e.status is LedgerStatus.VERIFIED_SUCCESS for e in entries) else EXIT_GATE


def cmd_verify(args: argparse.Namespace) -> int:
    path = Path(args.contract)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    try:
        contract = parse_contract(path.read_bytes())
    except ContractError as exc:
        raise UsageError(f"bad contract: {exc}") from None
    store = open_store(store_uri(args, {}), create=False)
    outcome = verify(contract, args.run_id, store, check_run_id_format=args.run_id_format)
    print(outcome)
    if outcome.passed:
        return EXIT_OK
    _err(outcome.failure.value)
    return EXIT_UNREACHABLE if outcome.failure is FailureClass.TRACKER_UNREACHABLE else EXIT_GATE


def cmd_audit(args: argparse.Namespace) -> int:
    path = Path(args.ledger)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    try:
        entries = load_ledger(path)
        store = open_store(store_uri(args, {}), create=False)
        report = audit_ledger(entries, store)
    except (MalformedLedger, EmptyLedger) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_USAGE
    except StoreUnreachable as exc:
        _err(f"store unreachable: {exc.detail}")
        return EXIT_UNREACHABLE
    for task_id, verdict in sorted(report.verdicts.items()):
        print(f"{task_id} {verdict.value}")
    print(report.summary_line())
    if args.out:
        write_audit_report(report, args.out)
    return EXIT_OK if report.hallucinated == 0 else EXIT_GATE


def cmd_bench(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    pconfig = pipeline_config(args, config)
    clock = parse_clock(args.clock) if args.clock else bench_mod.fixed_clock()
    names = list(VARIANTS) if args.variant == "all" else [variant_by_name(args.variant).name]
    out = Path(args.out)
    rulebook = load_rulebook(args.rulebook)

    rows, matrix, mismatched = [], {}, []
    for name in names:
        variant = VARIANTS[name]
        target = out / name if len(names) > 1 else out
        store = open_store(str(target / "store"), seed=args.seed)
        result = bench_mod.run_benchmark(variant, store=store, config=pconfig, clock=clock,
                                         rulebook=rulebook, parallel=args.parallel)
        emit_ledger(result.entries, target / LEDGER_NAME)
        write_audit_report(result.report, target / "audit_report.json")
        result.patches.write(target)
        row = bench_mod.summary_row(result)
        rows.append(row)
        matrix[name] = {t: v.value for t, v in result.report.verdicts.items()}
        mismatched += [(name, *m) for m in result.mismatches()]
        print(f"{name}: hallucination {row['hallucination']}")

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    with open(out / "outcomes.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task_id", *names])
        for task_id in sorted(matrix[names[0]]):
            writer.writerow([task_id, *(matrix[n][task_id] for n in names)])
    if not args.no_figures:
        plot_hallucination_rates(rows, out / "hallucination_rates.png")
        plot_outcome_matrix(matrix, out / "outcome_matrix.png")

    # tab-delimited table on stdout, same columns as summary.csv
    print("\t".join(rows[0]))
    for row in rows:
        print("\t".join(str(v) for v in row.values()))
    for name, task_id, want, got in mismatched:
        _err(f"{name} {task_id}: expected {want}, got {got}")
    return EXIT_GATE if mismatched else EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evidence-gate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def store_flag(p: argparse.ArgumentParser) -> None:
        p.add_argument("--store", help=f"store URI (file path, file://, http(s)://, memory:); default ${STORE_ENV}")

    def tuning_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--tau", type=float, help="consensus and patch confidence threshold (default 0.7)")
        p.add_argument("--max-retries", type=int, help="retry budget per retry phase (default 2)")
        p.add_argument("--clock", help="fixed:<iso8601> pins ledger timestamps")
        p.add_argument("--config", help="JSON config with variant, tau, hard_veto_threshold, "
                                        "max_retries_per_phase, store.root")
        p.add_argument("--rulebook", help="JSON reflection rulebook replacing the built-in rules")
        p.add_argument("--seed", type=int, help="seed for run id allocation")

    p = sub.add_parser("validate", help="static contract checks (no reviewer panel)")
    p.add_argument("contract")
    p.add_argument("--run-id-format", action="store_true", help="require 32-hex run ids")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run a directory of task contracts through the pipeline")
    p.add_argument("--tasks", required=True, help="directory of <task>.json contracts")
    p.add_argument("--variant", choices=sorted(VARIANTS, key=str.lower), type=_variant_choice)
    p.add_argument("--out", default="ledgers", help="output directory (default ledgers/)")
    store_flag(p)
    tuning_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="check one claimed run against a contract")
    p.add_argument("--contract", required=True)
    p.add_argument("--run-id", help="claimed run id (default: the contract's)")
    p.add_argument("--run-id-format", action="store_true", help="also require a 32-hex run id")
    store_flag(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("audit", help="re-check every success claim of a ledger against the store")
    p.add_argument("--ledger", required=True)
    p.add_argument("--out", help="also write the audit report as JSON")
    store_flag(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bench", help="run the eight-task benchmark")
    p.add_argument("--variant", default="all", choices=[*sorted(VARIANTS, key=str.lower), "all"],
                   type=_variant_choice)
    p.add_argument("--out", required=True)
    p.add_argument("--parallel", action="store_true", help="run tasks concurrently (run ids then vary)")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    tuning_flags(p)
    p.set_defaults(func=cmd_bench, seed=0)
    return parser


def _variant_choice(value: str) -> str:
    if value.lower() == "all":
        return "all"
    try:
        return variant_by_name(value).name
    except MisconfiguredVariant:
        return value  # argparse reports the bad choice


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        _err(f"error: {exc}")
        return EXIT_USAGE
    except MisconfiguredVariant as exc:
        _err(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
