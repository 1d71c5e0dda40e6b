"""Case domain model: the typed representation of a forensic case bundle.

Everything an examiner hands to the drafting pipeline lives here: the
mandate, the evidence items, extracted location/message records, device
profiles and the lab's method steps.  All value types are immutable after
construction; validation reports issues as data instead of raising.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from enum import Enum
from typing import Mapping, Optional, Sequence

import re

__all__ = [
    "LlmPotential",
    "InputSource",
    "ReportSectionKind",
    "SectionMetadata",
    "section_metadata",
    "ItemKind",
    "ImageHash",
    "EvidenceItem",
    "DeviceProfile",
    "Direction",
    "Sender",
    "MessageRecord",
    "LocationRecord",
    "Mandate",
    "MethodStep",
    "CaseBundle",
    "ValidationIssue",
    "validate_bundle",
    "bundle_to_json",
    "bundle_from_json",
    "format_offset",
    "parse_offset",
]


class LlmPotential(Enum):
    """How much of a section an assistant can usefully draft."""

    HIGH = "high"
    MEDIUM_STAR = "medium_star"  # workable, but only through a longer conversation
    MEDIUM_LOW = "medium_low"
    LOW = "low"


class InputSource(Enum):
    MANDATE = "mandate"
    LAB_LOG = "lab_log"
    TOOL_REPORT = "tool_report"
    PRIOR_SECTIONS = "prior_sections"
    EXAMINER_KNOWLEDGE = "examiner_knowledge"


class ReportSectionKind(Enum):
    INTRODUCTION = "introduction"
    ITEMS_RECEIVED = "items_received"
    METHODOLOGY = "methodology"
    RESULTS = "results"
    DISCUSSION = "discussion"
    CONCLUSION = "conclusion"


@dataclass(frozen=True)
class SectionMetadata:
    llm_potential: LlmPotential
    input_sources: frozenset[InputSource]


_SECTION_TABLE: dict[ReportSectionKind, SectionMetadata] = {
    ReportSectionKind.INTRODUCTION: SectionMetadata(
        LlmPotential.HIGH, frozenset({InputSource.MANDATE, InputSource.LAB_LOG})
    ),
    ReportSectionKind.ITEMS_RECEIVED: SectionMetadata(
        LlmPotential.HIGH,
        frozenset({InputSource.MANDATE, InputSource.LAB_LOG, InputSource.TOOL_REPORT}),
    ),
    ReportSectionKind.METHODOLOGY: SectionMetadata(
        LlmPotential.HIGH, frozenset({InputSource.LAB_LOG})
    ),
    ReportSectionKind.RESULTS: SectionMetadata(
        LlmPotential.MEDIUM_STAR,
        frozenset({InputSource.LAB_LOG, InputSource.TOOL_REPORT}),
    ),
    ReportSectionKind.DISCUSSION: SectionMetadata(
        LlmPotential.LOW,
        frozenset({InputSource.EXAMINER_KNOWLEDGE, InputSource.LAB_LOG}),
    ),
    ReportSectionKind.CONCLUSION: SectionMetadata(
        LlmPotential.MEDIUM_LOW, frozenset({InputSource.PRIOR_SECTIONS})
    ),
}


def section_metadata(kind: ReportSectionKind) -> SectionMetadata:
    """Drafting potential and legal input sources for a report section."""
    return _SECTION_TABLE[kind]


class ItemKind(Enum):
    PHYSICAL_DEVICE = "physical_device"
    FORENSIC_IMAGE = "forensic_image"


@dataclass(frozen=True)
class ImageHash:
    algorithm: str  # e.g. "SHA-256"
    digest: str  # hex

    def as_text(self) -> str:
        return f"{self.algorithm}:{self.digest}"


@dataclass(frozen=True)
class EvidenceItem:
    item_id: str
    kind: ItemKind
    vendor: str
    model: str
    storage_size: Optional[int] = None  # bytes
    hash: Optional[ImageHash] = None  # forensic images only
    physical_condition: Optional[str] = None  # physical devices only
    acquisition_methods: tuple[str, ...] = ()


_MAC_RE = re.compile(r"^[0-9A-Fa-f]{2}(:[0-9A-Fa-f]{2}){5}$")


@dataclass(frozen=True)
class DeviceProfile:
    vendor: str
    model_code: str
    os_version: str
    mac_address: str
    timezone: str  # IANA name as reported by the device


class Direction(Enum):
    INCOMING = "incoming"
    OUTGOING = "outgoing"
    SYSTEM = "system"


@dataclass(frozen=True)
class Sender:
    identifier: str
    display_name: Optional[str] = None

    def as_text(self) -> str:
        if self.display_name:
            return f"{self.identifier} {self.display_name}"
        return self.identifier


@dataclass(frozen=True)
class MessageRecord:
    body: str
    timestamp: datetime  # always offset-aware
    app: str = ""
    sender: Optional[Sender] = None  # None for system events
    direction: Optional[Direction] = None
    source_files: tuple[str, ...] = ()
    deleted: Optional[bool] = None


@dataclass(frozen=True)
class LocationRecord:
    name: str
    timestamp: datetime  # always offset-aware
    category: str
    latitude: float
    longitude: float
    related_location: Optional[str] = None
    source_file: Optional[str] = None
    size_bytes: Optional[int] = None


@dataclass(frozen=True)
class Mandate:
    description: str = ""
    questions: tuple[str, ...] = ()
    received_date: Optional[date] = None
    deadline: Optional[date] = None
    investigator_name: Optional[str] = None
    suspects: tuple[str, ...] = ()
    transmitted_items: tuple[str, ...] = ()


@dataclass(frozen=True)
class MethodStep:
    ordinal: int
    action: str
    purpose: str = ""
    tool_name: Optional[str] = None
    tool_version: Optional[str] = None


@dataclass(frozen=True)
class CaseBundle:
    mandate: Mandate
    items: tuple[EvidenceItem, ...] = ()
    device_profiles: Mapping[str, DeviceProfile] = field(default_factory=dict)
    locations: Mapping[str, tuple[LocationRecord, ...]] = field(default_factory=dict)
    messages: Mapping[str, tuple[MessageRecord, ...]] = field(default_factory=dict)
    method_steps: tuple[MethodStep, ...] = ()

    def item_ids(self) -> tuple[str, ...]:
        return tuple(item.item_id for item in self.items)

    def all_locations(self) -> tuple[LocationRecord, ...]:
        return tuple(rec for recs in self.locations.values() for rec in recs)

    def all_messages(self) -> tuple[MessageRecord, ...]:
        return tuple(rec for recs in self.messages.values() for rec in recs)


@dataclass(frozen=True)
class ValidationIssue:
    path: str  # e.g. "items[0].hash"
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def _aware(ts: datetime) -> bool:
    return ts.tzinfo is not None and ts.utcoffset() is not None


def validate_bundle(bundle: CaseBundle) -> list[ValidationIssue]:
    """Check every declared invariant; returns issues instead of raising.

    An empty list means the bundle is fit for prompting and grounding.
    """
    issues: list[ValidationIssue] = []
    out = issues.append

    m = bundle.mandate
    if not m.questions:
        out(ValidationIssue("mandate.questions", "mandate carries no questions"))
    if m.deadline and m.received_date and m.deadline < m.received_date:
        out(ValidationIssue("mandate.deadline", "deadline precedes received date"))

    seen_ids: set[str] = set()
    for i, item in enumerate(bundle.items):
        path = f"items[{i}]"
        if item.item_id in seen_ids:
            out(ValidationIssue(path, f"duplicate item_id {item.item_id!r}"))
        seen_ids.add(item.item_id)
        if item.hash is not None and item.kind is not ItemKind.FORENSIC_IMAGE:
            out(ValidationIssue(f"{path}.hash", "hash only applies to forensic images"))
        if len(set(item.acquisition_methods)) != len(item.acquisition_methods):
            out(ValidationIssue(f"{path}.acquisition_methods", "duplicate methods"))

    for item_id, profile in bundle.device_profiles.items():
        if item_id not in seen_ids:
            out(ValidationIssue(f"device_profiles[{item_id!r}]", "unknown item_id"))
        if not _MAC_RE.match(profile.mac_address):
            out(
                ValidationIssue(
                    f"device_profiles[{item_id!r}].mac_address",
                    f"not six colon-separated hex octets: {profile.mac_address!r}",
                )
            )

    for item_id, recs in bundle.locations.items():
        if item_id not in seen_ids:
            out(ValidationIssue(f"locations[{item_id!r}]", "unknown item_id"))
        for j, rec in enumerate(recs):
            path = f"locations[{item_id!r}][{j}]"
            if not _aware(rec.timestamp):
                out(ValidationIssue(f"{path}.timestamp", "missing UTC offset"))
            if not -90.0 <= rec.latitude <= 90.0:
                out(ValidationIssue(f"{path}.latitude", f"out of range: {rec.latitude}"))
            if not -180.0 <= rec.longitude <= 180.0:
                out(ValidationIssue(f"{path}.longitude", f"out of range: {rec.longitude}"))

    for item_id, mrecs in bundle.messages.items():
        if item_id not in seen_ids:
            out(ValidationIssue(f"messages[{item_id!r}]", "unknown item_id"))
        for j, rec in enumerate(mrecs):
            path = f"messages[{item_id!r}][{j}]"
            if not _aware(rec.timestamp):
                out(ValidationIssue(f"{path}.timestamp", "missing UTC offset"))
            if not rec.body.strip():
                out(ValidationIssue(f"{path}.body", "empty body"))

    ordinals = [s.ordinal for s in bundle.method_steps]
    if ordinals and ordinals != list(range(1, len(ordinals) + 1)):
        out(
            ValidationIssue(
                "method_steps",
                f"ordinals must run 1..{len(ordinals)} without gaps, got {ordinals}",
            )
        )

    return issues


# ---------------------------------------------------------------------------
# offset helpers

def format_offset(ts: datetime) -> str:
    """Render an offset the way the source formats spell it: UTC+0, UTC-5."""
    off = ts.utcoffset()
    if off is None:
        raise ValueError("naive timestamp has no offset to format")
    total = int(off.total_seconds())
    sign = "-" if total < 0 else "+"
    total = abs(total)
    hours, rem = divmod(total, 3600)
    minutes = rem // 60
    if minutes:
        return f"UTC{sign}{hours}:{minutes:02d}"
    return f"UTC{sign}{hours}"


def parse_offset(text: str) -> timezone:
    """Parse UTC+0 / UTC-5 / UTC+5:30 into a fixed-offset timezone."""
    m = re.fullmatch(r"UTC([+-])(\d{1,2})(?::(\d{2}))?", text.strip())
    if not m:
        raise ValueError(f"unrecognized offset: {text!r}")
    sign = -1 if m.group(1) == "-" else 1
    hours = int(m.group(2))
    minutes = int(m.group(3) or 0)
    return timezone(sign * timedelta(hours=hours, minutes=minutes))


# ---------------------------------------------------------------------------
# serialization: one human-auditable JSON document, field names as above

def _mandate_to_dict(m: Mandate) -> dict:
    return {
        "description": m.description,
        "questions": list(m.questions),
        "received_date": m.received_date.isoformat() if m.received_date else None,
        "deadline": m.deadline.isoformat() if m.deadline else None,
        "investigator_name": m.investigator_name,
        "suspects": list(m.suspects),
        "transmitted_items": list(m.transmitted_items),
    }


def _mandate_from_dict(d: dict) -> Mandate:
    return Mandate(
        description=d.get("description", ""),
        questions=tuple(d.get("questions", ())),
        received_date=date.fromisoformat(d["received_date"]) if d.get("received_date") else None,
        deadline=date.fromisoformat(d["deadline"]) if d.get("deadline") else None,
        investigator_name=d.get("investigator_name"),
        suspects=tuple(d.get("suspects", ())),
        transmitted_items=tuple(d.get("transmitted_items", ())),
    )


def _item_to_dict(item: EvidenceItem) -> dict:
    return {
        "item_id": item.item_id,
        "kind": item.kind.value,
        "vendor": item.vendor,
        "model": item.model,
        "storage_size": item.storage_size,
        "hash": {"algorithm": item.hash.algorithm, "digest": item.hash.digest}
        if item.hash
        else None,
        "physical_condition": item.physical_condition,
        "acquisition_methods": list(item.acquisition_methods),
    }


def _item_from_dict(d: dict) -> EvidenceItem:
    h = d.get("hash")
    return EvidenceItem(
        item_id=d["item_id"],
        kind=ItemKind(d["kind"]),
        vendor=d.get("vendor", ""),
        model=d.get("model", ""),
        storage_size=d.get("storage_size"),
        hash=ImageHash(h["algorithm"], h["digest"]) if h else None,
        physical_condition=d.get("physical_condition"),
        acquisition_methods=tuple(d.get("acquisition_methods", ())),
    )


def _profile_to_dict(p: DeviceProfile) -> dict:
    return {
        "vendor": p.vendor,
        "model_code": p.model_code,
        "os_version": p.os_version,
        "mac_address": p.mac_address,
        "timezone": p.timezone,
    }


def _profile_from_dict(d: dict) -> DeviceProfile:
    return DeviceProfile(
        vendor=d.get("vendor", ""),
        model_code=d.get("model_code", ""),
        os_version=d.get("os_version", ""),
        mac_address=d.get("mac_address", ""),
        timezone=d.get("timezone", ""),
    )


def _location_to_dict(r: LocationRecord) -> dict:
    return {
        "name": r.name,
        "timestamp": r.timestamp.isoformat(),
        "category": r.category,
        "latitude": r.latitude,
        "longitude": r.longitude,
        "related_location": r.related_location,
        "source_file": r.source_file,
        "size_bytes": r.size_bytes,
    }


def _location_from_dict(d: dict) -> LocationRecord:
    return LocationRecord(
        name=d["name"],
        timestamp=datetime.fromisoformat(d["timestamp"]),
        category=d.get("category", ""),
        latitude=d["latitude"],
        longitude=d["longitude"],
        related_location=d.get("related_location"),
        source_file=d.get("source_file"),
        size_bytes=d.get("size_bytes"),
    )


def _message_to_dict(r: MessageRecord) -> dict:
    return {
        "body": r.body,
        "timestamp": r.timestamp.isoformat(),
        "app": r.app,
        "sender": {"identifier": r.sender.identifier, "display_name": r.sender.display_name}
        if r.sender
        else None,
        "direction": r.direction.value if r.direction else None,
        "source_files": list(r.source_files),
        "deleted": r.deleted,
    }


def _message_from_dict(d: dict) -> MessageRecord:
    s = d.get("sender")
    return MessageRecord(
        body=d["body"],
        timestamp=datetime.fromisoformat(d["timestamp"]),
        app=d.get("app", ""),
        sender=Sender(s["identifier"], s.get("display_name")) if s else None,
        direction=Direction(d["direction"]) if d.get("direction") else None,
        source_files=tuple(d.get("source_files", ())),
        deleted=d.get("deleted"),
    )


def _step_to_dict(s: MethodStep) -> dict:
    return {
        "ordinal": s.ordinal,
        "action": s.action,
        "purpose": s.purpose,
        "tool_name": s.tool_name,
        "tool_version": s.tool_version,
    }


def _step_from_dict(d: dict) -> MethodStep:
    return MethodStep(
        ordinal=d["ordinal"],
        action=d["action"],
        purpose=d.get("purpose", ""),
        tool_name=d.get("tool_name"),
        tool_version=d.get("tool_version"),
    )


def bundle_to_json(bundle: CaseBundle) -> str:
    doc = {
        "mandate": _mandate_to_dict(bundle.mandate),
        "items": [_item_to_dict(i) for i in bundle.items],
        "device_profiles": {k: _profile_to_dict(v) for k, v in bundle.device_profiles.items()},
        "locations": {
            k: [_location_to_dict(r) for r in v] for k, v in bundle.locations.items()
        },
        "messages": {
            k: [_message_to_dict(r) for r in v] for k, v in bundle.messages.items()
        },
        "method_steps": [_step_to_dict(s) for s in bundle.method_steps],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def bundle_from_json(text: str) -> CaseBundle:
    doc = json.loads(text)
    return CaseBundle(
        mandate=_mandate_from_dict(doc.get("mandate", {})),
        items=tuple(_item_from_dict(d) for d in doc.get("items", ())),
        device_profiles={
            k: _profile_from_dict(v) for k, v in doc.get("device_profiles", {}).items()
        },
        locations={
            k: tuple(_location_from_dict(r) for r in v)
            for k, v in doc.get("locations", {}).items()
        },
        messages={
            k: tuple(_message_from_dict(r) for r in v)
            for k, v in doc.get("messages", {}).items()
        },
        method_steps=tuple(_step_from_dict(d) for d in doc.get("method_steps", ())),
    )
