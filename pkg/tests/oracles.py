"""Independent reference models used by the tests.

The verification oracle works from a plain description of the store state
(which files each run holds, its status and metrics) rather than from the
store API, evaluates every check on its own, and only then picks the first
failing one in the protocol's precedence order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from evidence_gate.contract import AcceptanceContract, MetricSpec, ValueType
from evidence_gate.store import MemoryStore, RunStatus, TrackingStore

# no entry is a directory prefix of another, so any subset can be logged
FILE_POOL = (
    "model.pt",
    "metrics.json",
    "training.log",
    "reports/summary.md",
    "reports/results.json",
    "attentions/0.npy",
    "attentions/1.npy",
    "deep/a/b/c.bin",
)
# "reports" and "deep/a" are directories once a nested file exists; never valid artifacts
REQUIRABLE = FILE_POOL + ("reports", "deep/a", "summary.md")
METRIC_NAMES = ("val_loss", "acc", "epochs")
VALUE_GRID = (-1.0, 0.0, 0.5, 1.0, 1.234, 5.0, 7.2)
STATUSES = tuple(RunStatus)


@dataclass
class RunState:
    status: RunStatus
    files: frozenset[str]
    metrics: dict[str, float]


@dataclass
class WorldState:
    runs: dict[str, RunState]
    claimed: str  # label of a run in ``runs`` or a string that names no run
    artifacts: tuple[str, ...]
    required: dict[str, tuple[float, float]] | None
    unreachable: bool = False
    listing_fails: frozenset[str] = field(default_factory=frozenset)


def random_world(rng: random.Random) -> WorldState:
    """Small random state, weighted so every outcome class shows up regularly."""
    runs = {}
    for label in ("r0", "r1")[: rng.randint(1, 2)]:
        files = frozenset(f for f in FILE_POOL if rng.random() < 0.6)
        metrics = {m: rng.choice(VALUE_GRID) for m in METRIC_NAMES if rng.random() < 0.8}
        status = RunStatus.FINISHED if rng.random() < 0.7 else rng.choice(STATUSES)
        runs[label] = RunState(status, files, metrics)
    claimed = rng.choice(list(runs)) if rng.random() < 0.85 else rng.choice(["ghost", "<to_be_generated>", "0" * 32])
    target = runs.get(claimed)
    # mostly require artifacts the claimed run has, sometimes anything
    if target is not None and target.files and rng.random() < 0.7:
        pool = sorted(target.files)
        artifacts = tuple(rng.sample(pool, rng.randint(0, min(4, len(pool)))))
    else:
        artifacts = tuple(rng.sample(REQUIRABLE, rng.randint(0, 4)))
    required = None
    if rng.random() < 0.8:
        required = {}
        for name in rng.sample(METRIC_NAMES, rng.randint(0, 3)):
            value = target.metrics.get(name) if target is not None else None
            if value is not None and rng.random() < 0.6:
                lo, hi = rng.choice([(value, value), (min(VALUE_GRID), max(VALUE_GRID)), (value - 1, value)])
            else:
                lo, hi = sorted(rng.sample(VALUE_GRID, 2))
            required[name] = (lo, hi)
    listing_fails = frozenset(label for label in runs if rng.random() < 0.05)
    return WorldState(runs, claimed, artifacts, required, rng.random() < 0.03, listing_fails)


def oracle_verdict(world: WorldState) -> str | None:
    """First failing check's class name, or None when every check holds."""
    run = world.runs.get(world.claimed)
    metric_failure = None
    for name, (lo, hi) in (world.required or {}).items():
        if run is None:
            break
        if name not in run.metrics:
            metric_failure = "MetricMissing"
            break
        if not (lo <= run.metrics[name] and run.metrics[name] <= hi):
            metric_failure = "MetricOutOfRange"
            break

    predicates = [
        ("TrackerUnreachable", world.unreachable),
        ("RunNotQueryable", run is None),
        ("NotFinished", run is not None and run.status is not RunStatus.FINISHED),
        ("ArtifactListingFailed", world.claimed in world.listing_fails),
        ("ArtifactMissing", run is not None and not set(world.artifacts) <= run.files),
        (metric_failure or "", metric_failure is not None),
    ]
    failed = [name for name, holds in predicates if holds]
    return failed[0] if failed else None


def materialize(world: WorldState, store: TrackingStore | None = None) -> tuple[TrackingStore, AcceptanceContract, str]:
    """Build a store matching ``world``; returns (store, contract, claimed run id)."""
    store = store or MemoryStore()
    ids = {}
    for label, state in world.runs.items():
        run_id = store.create_run()
        ids[label] = run_id
        for name, value in state.metrics.items():
            store.log_metric(run_id, name, value)
        for path in sorted(state.files):
            store.log_artifact(run_id, path, path.encode())
        if state.status is not RunStatus.RUNNING:
            store.set_status(run_id, state.status)
    if world.listing_fails or world.unreachable:
        # fault hooks exist on the memory store only
        for label in world.listing_fails:
            store.failing_listings.add(ids[label])
        store.unreachable = world.unreachable
    metrics = {name: MetricSpec(ValueType.FLOAT) for name in METRIC_NAMES}
    contract = AcceptanceContract(
        task_id="T00",
        description="oracle state",
        run_id=None,
        metrics=metrics,
        artifacts=world.artifacts,
        required_metrics=world.required,
    )
    return store, contract, ids.get(world.claimed, world.claimed)
