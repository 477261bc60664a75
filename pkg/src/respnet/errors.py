"""Typed error hierarchy shared by every subsystem.

Each error carries a stable machine-readable ``code`` and the HTTP status
class the service layer maps it to (4xx for client faults, 5xx for internal
ones). Graph-validation findings are data, not errors, and live in
``model.Violation``.
"""

from __future__ import annotations

from typing import Any


class ServiceError(Exception):
    """Base class; ``code`` is stable across releases, ``message`` is not."""

    code = "internal_error"
    http_status = 500

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = {k: v for k, v in details.items() if v is not None}

    def to_payload(self) -> dict:
        payload: dict = {"code": self.code, "message": self.message}
        if self.details:
            payload["details"] = self.details
        return payload


# --- hierarchy / graph -------------------------------------------------------

class UnknownParent(ServiceError):
    code = "unknown_parent"
    http_status = 404


class DuplicateId(ServiceError):
    code = "duplicate_id"
    http_status = 409


class InvalidSpec(ServiceError):
    """A field in an entity descriptor violates a type invariant."""

    code = "invalid_spec"
    http_status = 400

    def __init__(self, message: str, field: str | None = None, **details: Any) -> None:
        super().__init__(message, field=field, **details)


class UnknownList(ServiceError):
    code = "unknown_list"
    http_status = 404


class NonPositiveWeight(ServiceError):
    code = "non_positive_weight"
    http_status = 400


class UnknownTemplate(ServiceError):
    code = "unknown_template"
    http_status = 404


class CategoryMismatch(ServiceError):
    code = "category_mismatch"
    http_status = 400


class HasChildren(ServiceError):
    """Deleting an entity with children is rejected; no cascade."""

    code = "has_children"
    http_status = 409


# --- scoring -----------------------------------------------------------------

class UnknownItem(ServiceError):
    code = "unknown_item"
    http_status = 404


class UnknownEntity(ServiceError):
    code = "unknown_entity"
    http_status = 404


class EmptyChildren(ServiceError):
    code = "empty_children"
    http_status = 400


class AlreadyClosed(ServiceError):
    code = "already_closed"
    http_status = 409


class LateEvent(ServiceError):
    """Event timestamped on a day that already has an immutable snapshot."""

    code = "late_event"
    http_status = 409


class MissingSnapshot(ServiceError):
    code = "missing_snapshot"
    http_status = 404


class UnknownEnterprise(ServiceError):
    code = "unknown_enterprise"
    http_status = 404


class NoLeader(ServiceError):
    code = "no_leader"
    http_status = 409


class OutOfRange(ServiceError):
    code = "out_of_range"
    http_status = 400


# --- telemetry ---------------------------------------------------------------

class UnknownTargetItem(ServiceError):
    code = "unknown_target_item"
    http_status = 404


class InvalidRule(ServiceError):
    code = "invalid_rule"
    http_status = 400


class UnitMismatch(ServiceError):
    code = "unit_mismatch"
    http_status = 400


class AlreadyAccrued(ServiceError):
    code = "already_accrued"
    http_status = 409


# --- scheduler ---------------------------------------------------------------

class NoPeriodicRule(ServiceError):
    code = "no_periodic_rule"
    http_status = 400


class InvalidHorizon(ServiceError):
    code = "invalid_horizon"
    http_status = 400


class NoPendingInstance(ServiceError):
    code = "no_pending_instance"
    http_status = 404


class AlreadySwept(ServiceError):
    code = "already_swept"
    http_status = 409


# --- service / storage / cli -------------------------------------------------

class ConfigInvalid(ServiceError):
    code = "config_invalid"
    http_status = 400


class DataDirLocked(ServiceError):
    code = "data_dir_locked"
    http_status = 409


class CorruptLedger(ServiceError):
    code = "corrupt_ledger"
    http_status = 500

    def __init__(self, message: str, path: str | None = None,
                 line: int | None = None, **details: Any) -> None:
        super().__init__(message, path=path, line=line, **details)


class ServiceUnreachable(ServiceError):
    code = "service_unreachable"
    http_status = 503
