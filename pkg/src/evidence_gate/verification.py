"""Post-execution verification of claimed runs, and failure routing."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .contract import AcceptanceContract, is_run_id
from .store import RunStatus, StoreError, StoreUnreachable, TrackingStore


class FailureClass(str, enum.Enum):
    TRACKER_UNREACHABLE = "TrackerUnreachable"
    RUN_NOT_QUERYABLE = "RunNotQueryable"
    NOT_FINISHED = "NotFinished"
    ARTIFACT_MISSING = "ArtifactMissing"
    ARTIFACT_LISTING_FAILED = "ArtifactListingFailed"
    METRIC_MISSING = "MetricMissing"
    METRIC_OUT_OF_RANGE = "MetricOutOfRange"
    SCOPE_ISSUE = "ScopeIssue"


class RoutingTarget(str, enum.Enum):
    PHASE_3 = "Phase3"
    PHASE_4_5 = "Phase4_5"
    PHASE_5_5 = "Phase5_5"
    PHASE_6_5 = "Phase6_5"
    HALT = "Halt"


ROUTING = {
    FailureClass.RUN_NOT_QUERYABLE: RoutingTarget.PHASE_6_5,
    FailureClass.ARTIFACT_MISSING: RoutingTarget.PHASE_6_5,
    FailureClass.ARTIFACT_LISTING_FAILED: RoutingTarget.PHASE_6_5,
    FailureClass.NOT_FINISHED: RoutingTarget.PHASE_5_5,
    FailureClass.METRIC_MISSING: RoutingTarget.PHASE_4_5,
    FailureClass.METRIC_OUT_OF_RANGE: RoutingTarget.PHASE_4_5,
    FailureClass.SCOPE_ISSUE: RoutingTarget.PHASE_3,
    FailureClass.TRACKER_UNREACHABLE: RoutingTarget.HALT,
}


@dataclass(frozen=True)
class VerificationOutcome:
    passed: bool
    failure: FailureClass | None = None
    detail: str = ""
    # the artifact path or metric name a failure is about
    subject: str | None = None

    def __post_init__(self) -> None:
        if self.passed != (self.failure is None):
            raise ValueError("an outcome passes exactly when it carries no failure")

    def __str__(self) -> str:
        return "VERIFICATION_PASSED" if self.passed else f"VERIFICATION_FAILED ({self.detail})"


PASSED = VerificationOutcome(True, None, "all checks passed")


def _fail(failure: FailureClass, detail: str, subject: str | None = None) -> VerificationOutcome:
    return VerificationOutcome(False, failure, detail, subject)


def verify(
    contract: AcceptanceContract,
    claimed_run_id: str | None,
    store: TrackingStore,
    *,
    check_run_id_format: bool = False,
) -> VerificationOutcome:
    """Check the claimed run against the contract; stops at the first failing check.

    Order: run queryable, status FINISHED, every artifact present in the
    recursive listing, then required metrics (only if the contract has any).
    The optional run id format check runs last.
    """
    run_id = claimed_run_id if claimed_run_id is not None else contract.run_id
    if run_id is None:
        return _fail(FailureClass.RUN_NOT_QUERYABLE, "run_id not queryable: no run_id claimed")

    try:
        run = store.get_run(run_id)
    except StoreUnreachable as exc:
        return _fail(FailureClass.TRACKER_UNREACHABLE, f"tracker unreachable: {exc.detail}")
    except StoreError:
        return _fail(FailureClass.RUN_NOT_QUERYABLE, "run_id not queryable", run_id)

    if run.status is not RunStatus.FINISHED:
        return _fail(FailureClass.NOT_FINISHED, f"execution not finished: {run.status.value}")

    try:
        listing = store.list_artifacts(run_id, recursive=True)
    except StoreError as exc:
        return _fail(FailureClass.ARTIFACT_LISTING_FAILED, f"artifact listing failed: {exc.detail}")
    present = {entry.path for entry in listing if not entry.is_directory}
    for required in contract.artifacts:
        if required not in present:
            return _fail(FailureClass.ARTIFACT_MISSING, f"artifact missing: {required}", required)

    if contract.required_metrics is not None:
        for name, (lo, hi) in contract.required_metrics.items():
            if name not in run.metrics:
                return _fail(FailureClass.METRIC_MISSING, f"metric missing: {name}", name)
            if not lo <= run.metrics[name] <= hi:
                return _fail(FailureClass.METRIC_OUT_OF_RANGE, f"metric out of range: {name}", name)

    if check_run_id_format and not is_run_id(run_id):
        return _fail(FailureClass.RUN_NOT_QUERYABLE, "run_id format invalid", run_id)
    return PASSED


def route(failure: FailureClass) -> RoutingTarget:
    return ROUTING[FailureClass(failure)]
