"""Deterministic grounding checks for generated drafts.

Claims (coordinates, timestamps, person names, filenames, byte counts,
place names, tool versions) are extracted from a draft by pattern and
roster lookup, then verified against the case bundle under explicit
tolerances.  A claim with no support is a hallucination.  Completeness is
the fraction of the section's required facts whose key content appears in
the draft.  Unknown capitalized phrases are deliberately not claims; the
check is lexical and conservative, a reviewer's net rather than a lie
detector.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from typing import Optional, Sequence, Union

from .ingest import (
    SourceFormat,
    parse_csv_messages,
    parse_lablog_locations,
    parse_lablog_messages,
    parse_mandate,
    parse_method_steps,
    parse_tool_report_locations,
    parse_tool_report_messages,
)
from .model import CaseBundle, Mandate, ReportSectionKind
from .transform import DEFAULT_CLUSTER_RADIUS_M, group_locations_spatial

__all__ = [
    "Tolerances",
    "ClaimKind",
    "ClaimStatus",
    "Claim",
    "Roster",
    "build_roster",
    "extract_claims",
    "verify",
    "TokenPhrase",
    "CoordinateAlternative",
    "RequiredFact",
    "required_facts_for",
    "facts_from_input",
    "GroundingReport",
    "score",
    "tokens_of",
]


@dataclass(frozen=True)
class Tolerances:
    coordinate_decimal_places: int = 4  # ~11 m at the equator
    timestamp_slack: timedelta = timedelta(minutes=1)


class ClaimKind(Enum):
    COORDINATE = "coordinate"
    TIMESTAMP = "timestamp"
    PERSON_NAME = "person_name"
    FILENAME = "filename"
    NUMERIC_VALUE = "numeric_value"
    PLACE_NAME = "place_name"
    TOOL_VERSION = "tool_version"


class ClaimStatus(Enum):
    GROUNDED = "grounded"
    UNGROUNDED = "ungrounded"


@dataclass(frozen=True)
class Claim:
    kind: ClaimKind
    surface_text: str
    normalized_value: str
    span: tuple[int, int]


_TOKEN_RE = re.compile(r"[0-9a-z][0-9a-z_.:/'’-]*")


def tokens_of(text: str) -> list[str]:
    """Casefolded tokens; filenames, decimals and MACs stay in one piece."""
    out = []
    for tok in _TOKEN_RE.findall(text.casefold()):
        tok = tok.rstrip("._:/-'’")
        if tok:
            out.append(tok)
    return out


def _norm_phrase(text: str) -> str:
    return " ".join(tokens_of(text))


# ---------------------------------------------------------------------------
# rosters: names the bundle itself vouches for

@dataclass(frozen=True)
class Roster:
    person_names: tuple[str, ...] = ()
    place_names: tuple[str, ...] = ()


def build_roster(bundle: CaseBundle) -> Roster:
    persons: list[str] = []
    for s in bundle.mandate.suspects:
        persons.append(s)
    if bundle.mandate.investigator_name:
        persons.append(bundle.mandate.investigator_name)
    for msg in bundle.all_messages():
        if msg.sender and msg.sender.display_name:
            persons.append(msg.sender.display_name)

    places: list[str] = []
    for rec in bundle.all_locations():
        if rec.related_location:
            places.append(rec.related_location)
            for segment in rec.related_location.split(","):
                segment = segment.strip()
                if segment and not segment.isdigit():
                    places.append(segment)

    def dedupe(seq: list[str]) -> tuple[str, ...]:
        seen: set[str] = set()
        out = []
        for s in seq:
            key = _norm_phrase(s)
            if key and key not in seen:
                seen.add(key)
                out.append(s)
        return tuple(out)

    return Roster(person_names=dedupe(persons), place_names=dedupe(places))


# ---------------------------------------------------------------------------
# claim extraction

_COORD_PAIR = re.compile(r"(-?\d{1,3}[.,]\d{3,})\s*,\s+(-?\d{1,3}[.,]\d{3,})")
_TIMESTAMP = re.compile(
    r"\b(\d{2})([./])(\d{2})\2(\d{4})\s+(\d{1,2}):(\d{2})(?::(\d{2}))?"
    r"(?:\s*\(?(UTC[+-]\d{1,2}(?::\d{2})?)\)?)?"
)
_VERSION = re.compile(r"\b\d{1,3}(?:\.\d{1,3}){2,}\b")
_BYTE_COUNT = re.compile(r"\b(\d{4,})\s*(?:bytes|octets)\b", re.IGNORECASE)
_FILENAME = re.compile(
    r"\b[\w][\w-]*(?:\.[\w-]+)*\.(?:jpe?g|png|gif|heic|mp4|mov|avi|amr|"
    r"db-wal|db-shm|db|sqlite|plist|txt|csv|pdf|docx?|xlsx?|zip|bin|log)\b",
    re.IGNORECASE,
)
_HONORIFIC = re.compile(r"\b(?:M(?:rs?|s)|Dr|Mme|Mlle)\.?\s+[A-Z][\w'-]+")


def _num(token: str) -> float:
    return float(token.replace(",", "."))


def _claims_overlapping(span: tuple[int, int], taken: list[tuple[int, int]]) -> bool:
    return any(not (span[1] <= s or e <= span[0]) for s, e in taken)


def extract_claims(draft_text: str, roster: Optional[Roster] = None) -> list[Claim]:
    """Pattern- and roster-based claim extraction, earlier kinds take
    precedence on overlapping spans."""
    claims: list[Claim] = []
    taken: list[tuple[int, int]] = []

    def add(kind: ClaimKind, m_span: tuple[int, int], surface: str, normalized: str) -> None:
        if _claims_overlapping(m_span, taken):
            return
        taken.append(m_span)
        claims.append(Claim(kind, surface, normalized, m_span))

    for m in _TIMESTAMP.finditer(draft_text):
        a, b, sep, c = int(m.group(1)), int(m.group(3)), m.group(2), int(m.group(4))
        day, month = (a, b) if sep == "." else (b, a)
        try:
            datetime(c, month, day)
        except ValueError:
            continue
        second = int(m.group(7) or 0)
        offset = m.group(8) or ""
        normalized = f"{c:04d}-{month:02d}-{day:02d}T{int(m.group(5)):02d}:{int(m.group(6)):02d}:{second:02d}"
        if offset:
            normalized += f" {offset}"
        add(ClaimKind.TIMESTAMP, m.span(), m.group(0), normalized)

    for m in _COORD_PAIR.finditer(draft_text):
        try:
            lat, lon = _num(m.group(1)), _num(m.group(2))
        except ValueError:
            continue
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            continue
        add(ClaimKind.COORDINATE, m.span(), m.group(0), f"{lat:.6f},{lon:.6f}")

    for m in _VERSION.finditer(draft_text):
        add(ClaimKind.TOOL_VERSION, m.span(), m.group(0), m.group(0))

    for m in _BYTE_COUNT.finditer(draft_text):
        add(ClaimKind.NUMERIC_VALUE, m.span(), m.group(0), m.group(1))

    for m in _FILENAME.finditer(draft_text):
        add(ClaimKind.FILENAME, m.span(), m.group(0), m.group(0).casefold())

    for m in _HONORIFIC.finditer(draft_text):
        add(ClaimKind.PERSON_NAME, m.span(), m.group(0), _norm_phrase(m.group(0)))

    if roster:
        for phrase in roster.person_names:
            for m in re.finditer(rf"\b{re.escape(phrase)}\b", draft_text, re.IGNORECASE):
                add(ClaimKind.PERSON_NAME, m.span(), m.group(0), _norm_phrase(m.group(0)))
        for phrase in roster.place_names:
            for m in re.finditer(rf"\b{re.escape(phrase)}\b", draft_text, re.IGNORECASE):
                add(ClaimKind.PLACE_NAME, m.span(), m.group(0), _norm_phrase(m.group(0)))

    claims.sort(key=lambda c: c.span)
    return claims


# ---------------------------------------------------------------------------
# verification against the bundle

class _BundleIndex:
    def __init__(self, bundle: CaseBundle):
        self.coords: list[tuple[float, float]] = []
        self.instants: list[datetime] = []
        self.filenames: list[str] = []
        self.places: list[str] = []
        self.sizes: set[int] = set()
        self.versions: set[str] = set()
        self.persons: list[str] = []

        for rec in bundle.all_locations():
            self.coords.append((rec.latitude, rec.longitude))
            self.instants.append(rec.timestamp)
            self.filenames.append(rec.name.casefold())
            if rec.source_file:
                self.filenames.append(rec.source_file.casefold())
                self._mine_sizes(rec.source_file)
            if rec.related_location:
                self.places.append(_norm_phrase(rec.related_location))
            if rec.size_bytes is not None:
                self.sizes.add(rec.size_bytes)

        for msg in bundle.all_messages():
            self.instants.append(msg.timestamp)
            for src in msg.source_files:
                self.filenames.append(src.casefold())
                self._mine_sizes(src)
            if msg.sender:
                if msg.sender.display_name:
                    self.persons.append(_norm_phrase(msg.sender.display_name))
                self.persons.append(msg.sender.identifier.casefold())

        for item in bundle.items:
            if item.storage_size is not None:
                self.sizes.add(item.storage_size)

        for step in bundle.method_steps:
            if step.tool_version:
                self.versions.add(step.tool_version)
        for profile in bundle.device_profiles.values():
            if profile.os_version:
                self.versions.add(profile.os_version)

        for s in bundle.mandate.suspects:
            self.persons.append(_norm_phrase(s))
        if bundle.mandate.investigator_name:
            self.persons.append(_norm_phrase(bundle.mandate.investigator_name))

    def _mine_sizes(self, text: str) -> None:
        # stored source strings often carry "(Size : N bytes)" annotations
        for m in _BYTE_COUNT.finditer(text):
            self.sizes.add(int(m.group(1)))


def _coordinate_grounded(
    lat: float, lon: float, index: _BundleIndex, places: int
) -> bool:
    for blat, blon in index.coords:
        if round(blat, places) == round(lat, places) and round(blon, places) == round(lon, places):
            return True
    return False


def _timestamp_grounded(normalized: str, index: _BundleIndex, slack: timedelta) -> bool:
    parts = normalized.split(" ")
    naive = datetime.fromisoformat(parts[0])
    if len(parts) > 1:
        from .model import parse_offset

        claimed = naive.replace(tzinfo=parse_offset(parts[1]))
        return any(abs(claimed - inst) <= slack for inst in index.instants)
    # no offset stated: match wall-clock time as each record displays it
    for inst in index.instants:
        wall = inst.replace(tzinfo=None)
        if abs(wall - naive) <= slack:
            return True
    return False


def verify(
    claims: Sequence[Claim], bundle: CaseBundle, tolerances: Tolerances = Tolerances()
) -> list[tuple[Claim, ClaimStatus]]:
    """Each claim is grounded iff the bundle supports it within tolerance."""
    index = _BundleIndex(bundle)
    out: list[tuple[Claim, ClaimStatus]] = []
    for claim in claims:
        ok = False
        if claim.kind is ClaimKind.COORDINATE:
            lat_s, lon_s = claim.normalized_value.split(",")
            ok = _coordinate_grounded(
                float(lat_s), float(lon_s), index, tolerances.coordinate_decimal_places
            )
        elif claim.kind is ClaimKind.TIMESTAMP:
            ok = _timestamp_grounded(claim.normalized_value, index, tolerances.timestamp_slack)
        elif claim.kind is ClaimKind.PERSON_NAME:
            ok = any(
                claim.normalized_value == p
                or claim.normalized_value in p
                or p in claim.normalized_value
                for p in index.persons
            )
        elif claim.kind is ClaimKind.FILENAME:
            ok = any(claim.normalized_value in f for f in index.filenames)
        elif claim.kind is ClaimKind.PLACE_NAME:
            ok = any(claim.normalized_value in p for p in index.places)
        elif claim.kind is ClaimKind.TOOL_VERSION:
            ok = claim.normalized_value in index.versions
        elif claim.kind is ClaimKind.NUMERIC_VALUE:
            ok = int(claim.normalized_value) in index.sizes
        out.append((claim, ClaimStatus.GROUNDED if ok else ClaimStatus.UNGROUNDED))
    return out


# ---------------------------------------------------------------------------
# required facts

@dataclass(frozen=True)
class TokenPhrase:
    text: str

    def satisfied_by(self, draft_tokens: set[str], draft_coords, places: int) -> bool:
        wanted = tokens_of(self.text)
        return bool(wanted) and all(t in draft_tokens for t in wanted)


@dataclass(frozen=True)
class CoordinateAlternative:
    latitude: float
    longitude: float

    def satisfied_by(self, draft_tokens: set[str], draft_coords, places: int) -> bool:
        return any(
            round(lat, places) == round(self.latitude, places)
            and round(lon, places) == round(self.longitude, places)
            for lat, lon in draft_coords
        )


FactAlternative = Union[TokenPhrase, CoordinateAlternative]


@dataclass(frozen=True)
class RequiredFact:
    description: str
    alternatives: tuple[FactAlternative, ...]

    def satisfied_by(self, draft_tokens: set[str], draft_coords, places: int) -> bool:
        return any(a.satisfied_by(draft_tokens, draft_coords, places) for a in self.alternatives)


def _phrase_fact(description: str, text: str) -> RequiredFact:
    return RequiredFact(description, (TokenPhrase(text),))


def _mandate_intro_facts(mandate: Mandate) -> list[RequiredFact]:
    facts = [_phrase_fact(f"question {i}", q) for i, q in enumerate(mandate.questions, 1)]
    facts += [_phrase_fact(f"suspect {s}", s) for s in mandate.suspects]
    if mandate.investigator_name:
        facts.append(_phrase_fact("investigator", mandate.investigator_name))
    facts += [_phrase_fact(f"transmitted item {i}", t) for i, t in enumerate(mandate.transmitted_items, 1)]
    return facts


def _item_facts_from_lines(lines: Sequence[str]) -> list[RequiredFact]:
    facts: list[RequiredFact] = []
    for line in lines:
        m = re.match(r"Item\s+(\S+?):\s+(.+?)\s*\(", line)
        if not m:
            facts.append(_phrase_fact("item", line))
            continue
        item_ref = m.group(1)
        facts.append(_phrase_fact(f"item {item_ref} make and model", m.group(2)))
        idents: list[FactAlternative] = []
        hm = re.search(r"\bhash\s+([0-9A-Fa-f]{8,})", line)
        if hm:
            idents.append(TokenPhrase(hm.group(1)))
        mm = re.search(r"\bMAC address\s+(\S+)", line)
        if mm:
            idents.append(TokenPhrase(mm.group(1)))
        if idents:
            facts.append(RequiredFact(f"item {item_ref} identifier", tuple(idents)))
        am = re.search(r"\bacquisition:\s*(.+)$", line)
        if am:
            facts.append(_phrase_fact(f"item {item_ref} acquisition", am.group(1)))
    return facts


def _items_received_facts(bundle: CaseBundle) -> list[RequiredFact]:
    facts: list[RequiredFact] = []
    for item in bundle.items:
        facts.append(_phrase_fact(f"item {item.item_id} make and model", f"{item.vendor} {item.model}"))
        idents: list[FactAlternative] = []
        if item.hash is not None:
            idents.append(TokenPhrase(item.hash.digest))
        profile = bundle.device_profiles.get(item.item_id)
        if profile is not None and profile.mac_address:
            idents.append(TokenPhrase(profile.mac_address))
        if idents:
            facts.append(RequiredFact(f"item {item.item_id} identifier", tuple(idents)))
        if item.acquisition_methods:
            facts.append(
                _phrase_fact(f"item {item.item_id} acquisition", ", ".join(item.acquisition_methods))
            )
    return facts


def _method_facts(steps) -> list[RequiredFact]:
    facts: list[RequiredFact] = []
    for step in steps:
        facts.append(_phrase_fact(f"step {step.ordinal} action", step.action))
        if step.tool_name:
            facts.append(_phrase_fact(f"step {step.ordinal} tool", step.tool_name))
    return facts


def _message_facts(messages) -> list[RequiredFact]:
    return [
        _phrase_fact(f"message {i}", " ".join(msg.body.split()))
        for i, msg in enumerate(messages, 1)
    ]


def _location_cluster_facts(records) -> list[RequiredFact]:
    facts: list[RequiredFact] = []
    clusters = group_locations_spatial(records, DEFAULT_CLUSTER_RADIUS_M)
    for cluster in clusters:
        alts: list[FactAlternative] = [TokenPhrase(cluster.label)]
        alts.append(CoordinateAlternative(*cluster.centroid))
        for idx in cluster.member_indices:
            alts.append(CoordinateAlternative(records[idx].latitude, records[idx].longitude))
        facts.append(RequiredFact(f"location cluster {cluster.label}", tuple(alts)))
    return facts


def required_facts_for(
    section: ReportSectionKind,
    bundle: CaseBundle,
    topic: "PromptTopicLike" = None,
) -> list[RequiredFact]:
    """The facts a draft of this section must carry, derived from the bundle.

    For Results, topic narrows the facts to conversations or locations;
    left unset, both apply.  Items land at the end of the Introduction
    list; Discussion and Conclusion require nothing (never drafted).
    """
    topic_value = getattr(topic, "value", topic)
    if section is ReportSectionKind.INTRODUCTION:
        return _mandate_intro_facts(bundle.mandate)
    if section is ReportSectionKind.ITEMS_RECEIVED:
        return _items_received_facts(bundle)
    if section is ReportSectionKind.METHODOLOGY:
        return _method_facts(bundle.method_steps)
    if section is ReportSectionKind.RESULTS:
        facts: list[RequiredFact] = []
        if topic_value in (None, "general", "conversations"):
            facts += _message_facts(bundle.all_messages())
        if topic_value in (None, "general", "locations"):
            facts += _location_cluster_facts(bundle.all_locations())
        return facts
    return []


PromptTopicLike = Optional[object]


def facts_from_input(
    section: ReportSectionKind,
    input_format: SourceFormat,
    topic: PromptTopicLike,
    input_text: str,
) -> list[RequiredFact]:
    """Rebuild the required-fact list from a rendered input block alone.

    Mirrors required_facts_for: parsing a faithfully rendered input yields
    the same facts the bundle would require.  This is what lets a fault
    profile drop or keep exact facts without seeing the bundle.
    """
    topic_value = getattr(topic, "value", topic)
    if section is ReportSectionKind.INTRODUCTION:
        mandate, _ = parse_mandate(input_text)
        return _mandate_intro_facts(mandate)
    if section is ReportSectionKind.ITEMS_RECEIVED:
        mandate, _ = parse_mandate(input_text)
        return _item_facts_from_lines(mandate.transmitted_items)
    if section is ReportSectionKind.METHODOLOGY:
        steps, _ = parse_method_steps(input_text)
        return _method_facts(steps)
    if section is ReportSectionKind.RESULTS and topic_value == "conversations":
        parser = {
            SourceFormat.TOOL_REPORT_EXCERPT: parse_tool_report_messages,
            SourceFormat.LAB_LOG_TABLE: parse_lablog_messages,
            SourceFormat.REDUCED_CSV: parse_csv_messages,
        }[input_format]
        messages, _ = parser(input_text)
        return _message_facts(messages)
    if section is ReportSectionKind.RESULTS and topic_value == "locations":
        if input_format is SourceFormat.REDUCED_CSV:
            from .prompting import parse_csv_locations

            records, _ = parse_csv_locations(input_text)
        elif input_format is SourceFormat.TOOL_REPORT_EXCERPT:
            records, _ = parse_tool_report_locations(input_text)
        else:
            records, _ = parse_lablog_locations(input_text)
        return _location_cluster_facts(records)
    raise ValueError(f"no fact derivation for {section.value!r} with topic {topic_value!r}")


# ---------------------------------------------------------------------------
# scoring

@dataclass(frozen=True)
class GroundingReport:
    draft_ref: str
    claims: tuple[tuple[Claim, ClaimStatus], ...]
    hallucination_count: int
    required_facts: tuple[tuple[str, bool], ...]
    completeness: float

    def to_dict(self) -> dict:
        return {
            "draft_ref": self.draft_ref,
            "hallucination_count": self.hallucination_count,
            "completeness": self.completeness,
            "claims": [
                {
                    "kind": c.kind.value,
                    "surface_text": c.surface_text,
                    "normalized_value": c.normalized_value,
                    "span": list(c.span),
                    "status": s.value,
                }
                for c, s in self.claims
            ],
            "required_facts": [
                {"description": d, "satisfied": ok} for d, ok in self.required_facts
            ],
        }


def score(
    draft,
    bundle: CaseBundle,
    section: ReportSectionKind,
    tolerances: Tolerances = Tolerances(),
    topic: PromptTopicLike = None,
) -> GroundingReport:
    """Extract, verify and tally.  draft is a GeneratedDraft or plain text."""
    if isinstance(draft, str):
        text, ref = draft, "text"
    else:
        text = draft.text
        ref = f"{draft.backend_label}:{draft.prompt_id}"

    roster = build_roster(bundle)
    checked = verify(extract_claims(text, roster), bundle, tolerances)
    hallucinations = sum(1 for _, s in checked if s is ClaimStatus.UNGROUNDED)

    draft_tokens = set(tokens_of(text))
    draft_coords = []
    for claim, _status in checked:
        if claim.kind is ClaimKind.COORDINATE:
            lat_s, lon_s = claim.normalized_value.split(",")
            draft_coords.append((float(lat_s), float(lon_s)))

    facts = required_facts_for(section, bundle, topic)
    places = tolerances.coordinate_decimal_places
    results = tuple(
        (f.description, f.satisfied_by(draft_tokens, draft_coords, places)) for f in facts
    )
    satisfied = sum(1 for _, ok in results if ok)
    completeness = satisfied / len(results) if results else 1.0

    return GroundingReport(
        draft_ref=ref,
        claims=tuple(checked),
        hallucination_count=hallucinations,
        required_facts=results,
        completeness=completeness,
    )
