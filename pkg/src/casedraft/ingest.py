"""Recoverable parsers for the source texts a case bundle is built from.

Four layouts are understood: commercial tool-report excerpts, lab-log
tables, reduced CSV exports, and free-text mandates.  Parsers never raise
on malformed content; they return whatever records could be recovered plus
a list of diagnostics carrying line numbers.  Labels may appear in English
or French; a built-in synonym table maps them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from enum import Enum
from typing import Callable, Optional

from .model import (
    DeviceProfile,
    Direction,
    LocationRecord,
    Mandate,
    MessageRecord,
    MethodStep,
    Sender,
)

__all__ = [
    "SourceFormat",
    "Severity",
    "ParseDiagnostic",
    "FRENCH_LABELS",
    "parse_mandate",
    "parse_tool_report_locations",
    "parse_lablog_locations",
    "parse_tool_report_messages",
    "parse_lablog_messages",
    "parse_csv_messages",
    "parse_device_profile",
    "parse_method_steps",
]


class SourceFormat(Enum):
    TOOL_REPORT_EXCERPT = "tool_report_excerpt"
    LAB_LOG_TABLE = "lab_log_table"
    REDUCED_CSV = "reduced_csv"
    MANDATE_TEXT = "mandate_text"


class Severity(Enum):
    WARNING = "warning"
    ERROR = "error"


@dataclass(frozen=True)
class ParseDiagnostic:
    line_number: int
    severity: Severity
    message: str

    def render(self, source: str = "<input>") -> str:
        return f"{source}:{self.line_number}: {self.severity.value}: {self.message}"


def errors(diags: list[ParseDiagnostic]) -> list[ParseDiagnostic]:
    return [d for d in diags if d.severity is Severity.ERROR]


# Synonyms seen in tool output localized to French.  Keys are casefolded.
FRENCH_LABELS = {
    "fichier source": "Source File",
    "entrant": "Incoming",
    "sortant": "Outgoing",
    "taille": "Size",
    "octets": "bytes",
    "heure": "Hour",
}

_DIRECTIONS = {
    "incoming": Direction.INCOMING,
    "entrant": Direction.INCOMING,
    "outgoing": Direction.OUTGOING,
    "sortant": Direction.OUTGOING,
    "system": Direction.SYSTEM,
}

UTC = timezone.utc


def _warn(diags: list, line: int, msg: str) -> None:
    diags.append(ParseDiagnostic(line, Severity.WARNING, msg))


def _err(diags: list, line: int, msg: str) -> None:
    diags.append(ParseDiagnostic(line, Severity.ERROR, msg))


def _decimal(token: str) -> float:
    """Parse a number whose decimal mark may be a comma (38,9075)."""
    t = token.strip()
    if "," in t and "." not in t:
        t = t.replace(",", ".", 1)
    return float(t)


_OFFSET_RE = r"UTC[+-]\d{1,2}(?::\d{2})?"


def _offset_from(text: Optional[str], default: timezone) -> timezone:
    if not text:
        return default
    m = re.fullmatch(r"UTC([+-])(\d{1,2})(?::(\d{2}))?", text)
    if not m:
        return default
    sign = -1 if m.group(1) == "-" else 1
    return timezone(sign * timedelta(hours=int(m.group(2)), minutes=int(m.group(3) or 0)))


def _instant(
    day: int, month: int, year: int, time_text: str, offset: timezone
) -> Optional[datetime]:
    tm = re.fullmatch(r"(\d{1,2}):(\d{2})(?::(\d{2}))?", time_text.strip())
    if not tm:
        return None
    try:
        return datetime(
            year, month, day,
            int(tm.group(1)), int(tm.group(2)), int(tm.group(3) or 0),
            tzinfo=offset,
        )
    except ValueError:
        return None


# timestamp with day first: 05.02.2019 12:16:04(UTC-5), seconds and offset optional
_TS_DAYFIRST = re.compile(
    r"(\d{2})\.(\d{2})\.(\d{4})\s+(\d{1,2}:\d{2}(?::\d{2})?)\s*(?:\((" + _OFFSET_RE + r")\))?"
)
# timestamp with month first: 02/14/2019 14:33:44, as tool reports render Hour
_TS_MONTHFIRST = re.compile(
    r"(\d{2})/(\d{2})/(\d{4})\s+(\d{1,2}:\d{2}(?::\d{2})?)\s*(?:\((" + _OFFSET_RE + r")\))?"
)


def _dayfirst_instant(m: re.Match, default_offset: timezone) -> Optional[datetime]:
    off = _offset_from(m.group(5), default_offset)
    return _instant(int(m.group(1)), int(m.group(2)), int(m.group(3)), m.group(4), off)


def _monthfirst_instant(m: re.Match, default_offset: timezone) -> Optional[datetime]:
    off = _offset_from(m.group(5), default_offset)
    return _instant(int(m.group(2)), int(m.group(1)), int(m.group(3)), m.group(4), off)


def _app_from_sources(sources: tuple[str, ...]) -> str:
    joined = " ".join(sources).casefold()
    if "telegram" in joined:
        return "Telegram"
    if "whatsapp" in joined:
        return "WhatsApp"
    if "mail" in joined:
        return "Email"
    return ""


def _sender_from(text: str, parenthesized: bool = False) -> Optional[Sender]:
    """Build a Sender from '695862679 (Wonder Woman)' or '695862679 Wonder Woman'."""
    t = text.strip()
    if not t or t == "-":
        return None
    if parenthesized:
        m = re.fullmatch(r"(\S+)(?:\s*\(([^)]*)\))?", t)
        if m:
            return Sender(m.group(1), (m.group(2) or "").strip() or None)
        return Sender(t)
    parts = t.split(None, 1)
    if parts[0].isdigit() and len(parts) > 1:
        return Sender(parts[0], parts[1].strip())
    if parts[0].isdigit():
        return Sender(parts[0])
    return Sender(t)


# ---------------------------------------------------------------------------
# tool-report locations

_TOOL_LOC_START = re.compile(r"^\s*(\d+)\s+\(([^)]*)\)\s*Name\s*:\s*(.*)$")
_HOUR_LABEL = re.compile(r"^\s*(?:Hour|Heure)\s*:\s*(.*)$", re.IGNORECASE)
_SOURCE_LABEL = re.compile(r"^\s*(?:Source File|Fichier source)\s*:\s*(.*)$", re.IGNORECASE)
_SIZE_IN_TEXT = re.compile(r"\(\s*(?:Size|Taille)\s*:\s*(\d+)\s*(?:octets|bytes)\s*\)", re.IGNORECASE)


def _coord_pair(text: str) -> Optional[tuple[float, float]]:
    parts = re.split(r",\s+", text.strip())
    if len(parts) != 2:
        return None
    try:
        lat, lon = _decimal(parts[0]), _decimal(parts[1])
    except ValueError:
        return None
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        return None
    return lat, lon


def parse_tool_report_locations(
    text: str, default_offset: timezone = UTC
) -> tuple[list[LocationRecord], list[ParseDiagnostic]]:
    """Parse numbered location entries as a commercial tool report prints them.

    Entries start with ``N (lat, lon) Name: file`` and continue with an
    Hour line, a wrapped Source File path carrying a size, and a category
    line.  Decimal marks may be dots or commas.  Timestamps are read at
    UTC+0 unless the entry carries an explicit offset.
    """
    diags: list[ParseDiagnostic] = []
    records: list[LocationRecord] = []
    lines = text.splitlines()

    entries: list[tuple[int, re.Match, list[tuple[int, str]]]] = []
    current: Optional[list[tuple[int, str]]] = None
    for n, line in enumerate(lines, start=1):
        if line.lstrip().startswith("#"):
            continue
        m = _TOOL_LOC_START.match(line)
        if m:
            current = []
            entries.append((n, m, current))
        elif current is not None and line.strip():
            current.append((n, line))

    for start_line, head, body in entries:
        name = head.group(3).strip()
        coords = _coord_pair(head.group(2))
        if coords is None:
            _err(diags, start_line, f"unreadable coordinate pair: {head.group(2)!r}")
            continue

        ts: Optional[datetime] = None
        category = ""
        source_parts: list[str] = []
        in_source = False
        size: Optional[int] = None

        for n, line in body:
            hm = _HOUR_LABEL.match(line)
            if hm:
                tm = _TS_MONTHFIRST.search(hm.group(1))
                if tm:
                    ts = _monthfirst_instant(tm, default_offset)
                if ts is None:
                    _err(diags, n, f"unreadable timestamp: {hm.group(1)!r}")
                in_source = False
                continue
            sm = _SOURCE_LABEL.match(line)
            if sm:
                in_source = True
                source_parts.append(sm.group(1).strip())
                continue
            if in_source and size is None:
                source_parts.append(line.strip())
                if _SIZE_IN_TEXT.search(line):
                    in_source = False
                continue
            if not category:
                category = line.strip()
            else:
                _warn(diags, n, f"unexpected line in entry: {line.strip()!r}")

        source_text = " ".join(p for p in source_parts if p)
        szm = _SIZE_IN_TEXT.search(source_text)
        if szm:
            size = int(szm.group(1))
            source_text = _SIZE_IN_TEXT.sub("", source_text)
        source_text = re.sub(r"\s+", " ", source_text).strip()
        source_text = re.sub(r"\s*:\s*$", "", source_text)

        if ts is None:
            _err(diags, start_line, f"entry {head.group(1)} has no parseable timestamp; dropped")
            continue
        if not category:
            _warn(diags, start_line, f"entry {head.group(1)} has no category line")

        records.append(
            LocationRecord(
                name=name,
                timestamp=ts,
                category=category,
                latitude=coords[0],
                longitude=coords[1],
                source_file=source_text or None,
                size_bytes=size,
            )
        )

    return records, diags


# ---------------------------------------------------------------------------
# lab-log locations

_LAB_LOC_ROW = re.compile(
    r"^(?P<name>\S+)\s+"
    r"(?P<day>\d{2})\.(?P<month>\d{2})\.(?P<year>\d{4})\s+"
    r"(?P<time>\d{1,2}:\d{2}(?::\d{2})?)\s*(?:\((?P<off>" + _OFFSET_RE + r")\))?\s+"
    r"(?P<category>.*?)\s+"
    r"(?P<lat>[-+]?\d{1,3}(?:[.,]\d+)?)\s+"
    r"(?P<lon>[-+]?\d{1,3}(?:[.,]\d+)?)"
    r"(?:\s+(?P<related>\S.*?))?\s*$"
)

_LAB_LOC_HEADER = re.compile(r"^\s*Name\s", re.IGNORECASE)


def parse_lablog_locations(
    text: str, default_offset: timezone = UTC
) -> tuple[list[LocationRecord], list[ParseDiagnostic]]:
    """Parse the lab log's one-row-per-record location table.

    Columns: Name, Time (day-first, comma decimals), Category, Latitude,
    Longitude, Related Location.  Delimiters are tabs or space runs, which
    the row pattern absorbs.  Timestamps default to UTC+0 when the row has
    no explicit offset.
    """
    diags: list[ParseDiagnostic] = []
    records: list[LocationRecord] = []
    saw_header = False

    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if _LAB_LOC_HEADER.match(line) and "latitude" in line.casefold():
            saw_header = True
            continue
        m = _LAB_LOC_ROW.match(line.strip())
        if not m:
            # bad rows are recoverable; a missing header is not
            _warn(diags, n, f"skipping unreadable table row: {line.strip()[:60]!r}")
            continue
        off = _offset_from(m.group("off"), default_offset)
        ts = _instant(
            int(m.group("day")), int(m.group("month")), int(m.group("year")),
            m.group("time"), off,
        )
        if ts is None:
            _warn(diags, n, f"skipping row with unreadable timestamp: {line.strip()[:60]!r}")
            continue
        try:
            lat, lon = _decimal(m.group("lat")), _decimal(m.group("lon"))
        except ValueError:
            _warn(diags, n, "skipping row with unreadable coordinates")
            continue
        related = (m.group("related") or "").strip() or None
        records.append(
            LocationRecord(
                name=m.group("name"),
                timestamp=ts,
                category=m.group("category").strip(),
                latitude=lat,
                longitude=lon,
                related_location=related,
            )
        )

    if not saw_header:
        _err(diags, 1, "header row not found")
    return records, diags


# ---------------------------------------------------------------------------
# tool-report messages

_TOOL_MSG_START = re.compile(
    r"^\s*(?P<day>\d{2})\.(?P<month>\d{2})\.(?P<year>\d{4})\s+"
    r"(?P<time>\d{1,2}:\d{2}(?::\d{2})?)\s*\((?P<off>" + _OFFSET_RE + r")\)\s*"
    r"Direction\s*:\s*(?P<direction>[A-Za-zÀ-ſ]+)\s*"
    r"(?:,\s*(?P<sender>.+?))?\s*$"
)


def parse_tool_report_messages(
    text: str, default_offset: timezone = UTC
) -> tuple[list[MessageRecord], list[ParseDiagnostic]]:
    """Parse chat entries as a tool report prints them.

    An entry opens with ``DD.MM.YYYY HH:MM(UTC+0)Direction:...`` optionally
    followed by ``, id (Display Name)``; body lines follow, then one or more
    source-file lines.  Direction labels may be English or French.
    """
    diags: list[ParseDiagnostic] = []
    records: list[MessageRecord] = []
    lines = text.splitlines()

    starts = [
        (i, _TOOL_MSG_START.match(lines[i]))
        for i in range(len(lines))
        if _TOOL_MSG_START.match(lines[i])
    ]
    if not starts:
        return records, diags

    bounds = [i for i, _ in starts] + [len(lines)]
    for k, (i, head) in enumerate(starts):
        line_no = i + 1
        off = _offset_from(head.group("off"), default_offset)
        ts = _instant(
            int(head.group("day")), int(head.group("month")), int(head.group("year")),
            head.group("time"), off,
        )
        if ts is None:
            _err(diags, line_no, "entry has no parseable timestamp; dropped")
            continue

        dir_label = head.group("direction").casefold()
        direction = _DIRECTIONS.get(dir_label)
        if direction is None:
            _warn(diags, line_no, f"unknown direction label: {head.group('direction')!r}")
        sender = _sender_from(head.group("sender") or "", parenthesized=True)

        body_lines: list[str] = []
        sources: list[str] = []
        seen_source = False
        for j in range(i + 1, bounds[k + 1]):
            raw = lines[j]
            if not raw.strip():
                continue
            sm = _SOURCE_LABEL.match(raw)
            if sm:
                seen_source = True
                sources.append(sm.group(1).strip())
            elif seen_source:
                sources.append(raw.strip())
            else:
                body_lines.append(raw.strip())

        body = "\n".join(body_lines).strip()
        if not body:
            _err(diags, line_no, "entry has no message body; dropped")
            continue

        src = tuple(s for s in sources if s)
        records.append(
            MessageRecord(
                body=body,
                timestamp=ts,
                app=_app_from_sources(src),
                sender=sender,
                direction=direction,
                source_files=src,
            )
        )

    return records, diags


# ---------------------------------------------------------------------------
# lab-log messages

_LAB_MSG_ROW = re.compile(
    r"^(?P<sender>.*?)\s*"
    r"(?P<day>\d{2})\.(?P<month>\d{2})\.(?P<year>\d{4})\s+"
    r"(?P<time>\d{1,2}:\d{2}(?::\d{2})?)\s*\((?P<off>" + _OFFSET_RE + r")\)\s*"
    r"(?P<rest>.*)$"
)

_SOURCEISH = re.compile(r":\s*0x[0-9A-Fa-f]+|\(Table\s*:", re.IGNORECASE)


def _parse_deleted(token: str) -> Optional[bool]:
    t = token.strip().casefold()
    if t in {"yes", "true", "deleted"}:
        return True
    if t in {"no", "false"}:
        return False
    return None


def parse_lablog_messages(
    text: str, default_offset: timezone = UTC
) -> tuple[list[MessageRecord], list[ParseDiagnostic]]:
    """Parse the lab log's columnar message layout.

    Each record is a header row (From, Timestamp with explicit offset,
    Deleted, Instant Message, Status) followed by the body on its own line
    and source-file lines, possibly chained with '&'.
    """
    diags: list[ParseDiagnostic] = []
    records: list[MessageRecord] = []
    lines = text.splitlines()

    rows: list[tuple[int, re.Match]] = []
    for i, line in enumerate(lines):
        m = _LAB_MSG_ROW.match(line)
        if m:
            rows.append((i, m))

    if not rows:
        return records, diags

    bounds = [i for i, _ in rows] + [len(lines)]
    for k, (i, row) in enumerate(rows):
        line_no = i + 1
        off = _offset_from(row.group("off"), default_offset)
        ts = _instant(
            int(row.group("day")), int(row.group("month")), int(row.group("year")),
            row.group("time"), off,
        )
        if ts is None:
            _err(diags, line_no, "row has no parseable timestamp; dropped")
            continue

        sender = _sender_from(row.group("sender"))
        rest = row.group("rest").split()
        deleted = _parse_deleted(rest[0]) if rest else None

        body_lines: list[str] = []
        source_text_parts: list[str] = []
        in_source = False
        for j in range(i + 1, bounds[k + 1]):
            raw = lines[j].strip()
            if not raw:
                continue
            if _SOURCEISH.search(raw) or raw.startswith("USERDATA"):
                in_source = True
            if in_source:
                source_text_parts.append(raw)
            else:
                body_lines.append(raw)

        body = "\n".join(body_lines).strip()
        if not body:
            _err(diags, line_no, "row has no message body; dropped")
            continue

        source_text = " ".join(source_text_parts)
        sources = tuple(s.strip() for s in re.split(r"\s*&\s*", source_text) if s.strip())
        records.append(
            MessageRecord(
                body=body,
                timestamp=ts,
                app=_app_from_sources(sources),
                sender=sender,
                deleted=deleted,
                source_files=sources,
            )
        )

    return records, diags


# ---------------------------------------------------------------------------
# reduced CSV messages

def _split_csv_row(line: str) -> list[str]:
    # the delimiter is ' ; ': pad so edge delimiters keep their spaces
    cells = re.split(r"\s;\s", f" {line} ")
    return [c.strip() for c in cells]


def parse_csv_messages(
    text: str, default_offset: timezone = UTC
) -> tuple[list[MessageRecord], list[ParseDiagnostic]]:
    """Parse the reduced ' ; '-delimited export (From, Body, Timestamp).

    Rows with empty From and Timestamp cells continue the previous body on
    a new line.  Cell padding is insignificant.
    """
    diags: list[ParseDiagnostic] = []
    lines = [l for l in text.splitlines()]

    if ";" not in text:
        _err(diags, 1, "field delimiter ' ; ' never found")
        return [], diags

    drafts: list[dict] = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        cells = _split_csv_row(line)
        if len(cells) < 2:
            _err(diags, n, "row has no ' ; ' delimiter; dropped")
            continue
        while len(cells) < 3:
            cells.append("")
        frm, body, ts_text = cells[0], cells[1], cells[2]

        if frm.casefold().startswith("from") and "body" in line.casefold():
            continue  # header row

        if not frm and not ts_text:
            if not drafts:
                _err(diags, n, "continuation row with nothing to continue; dropped")
                continue
            drafts[-1]["body"] += "\n" + body
            continue

        tm = _TS_DAYFIRST.search(ts_text)
        ts = _dayfirst_instant(tm, default_offset) if tm else None
        if ts is None:
            _err(diags, n, f"row has no parseable timestamp: {ts_text!r}; dropped")
            continue
        drafts.append({"sender": _sender_from(frm), "body": body, "timestamp": ts, "line": n})

    records: list[MessageRecord] = []
    for d in drafts:
        body = d["body"].strip()
        if not body:
            _err(diags, d["line"], "row has no message body; dropped")
            continue
        records.append(MessageRecord(body=body, timestamp=d["timestamp"], sender=d["sender"]))
    return records, diags


# ---------------------------------------------------------------------------
# device profile tables

_PROFILE_KEYS: list[tuple[str, str]] = [
    ("detected phone vendor", "vendor"),
    ("detected phone model", "model_code"),
    ("os version", "os_version"),
    ("mac address", "mac_address"),
    ("time zone", "timezone"),
    ("timezone", "timezone"),
]


def parse_device_profile(text: str) -> tuple[DeviceProfile, list[ParseDiagnostic]]:
    """Parse a key-value device table (vendor, model, OS, MAC, time zone).

    A three-column variant with a trailing source column is tolerated; the
    extra column is ignored.  Vendor or model missing is an Error.
    """
    diags: list[ParseDiagnostic] = []
    fields: dict[str, str] = {}

    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        folded = re.sub(r"\s+", " ", stripped).casefold()
        if folded in {"name value source", "name value"}:
            continue
        matched = False
        for key, field_name in _PROFILE_KEYS:
            if folded.startswith(key):
                remainder = stripped[len(key):].lstrip(" :\t")
                cells = re.split(r"\t+|\s{2,}", remainder)
                value = cells[0].strip() if cells else ""
                if not value:
                    _warn(diags, n, f"row for {field_name!r} has no value")
                elif field_name in fields:
                    _warn(diags, n, f"duplicate row for {field_name!r}; keeping first")
                else:
                    fields[field_name] = value
                matched = True
                break
        if not matched:
            _warn(diags, n, f"unrecognized row: {stripped[:50]!r}")

    for required in ("vendor", "model_code"):
        if required not in fields:
            _err(diags, 1, f"table is missing {required!r}")

    profile = DeviceProfile(
        vendor=fields.get("vendor", ""),
        model_code=fields.get("model_code", ""),
        os_version=fields.get("os_version", ""),
        mac_address=fields.get("mac_address", ""),
        timezone=fields.get("timezone", ""),
    )
    return profile, diags


# ---------------------------------------------------------------------------
# mandate text

_BLOCK_LABEL = re.compile(
    r"^\s*(Date|Description|Mandate|Note|Items|Transmitted items)\s*:\s*",
    re.IGNORECASE,
)
_ENUMERATOR = re.compile(
    r"(?:(?<=\s)|^)\(?(?:x{0,1}(?:ix|iv|v?i{0,3})|\d{1,2})\)?[.)]\s+"
)
_DEADLINE_CLAUSE = re.compile(
    r"before\s+(?:the\s+)?(\d{1,2})(?:st|nd|rd|th)?(?:\s+day)?\s+of\s+([A-Za-z]+),?\s+(\d{4})",
    re.IGNORECASE,
)
_CLOSING_SENTENCE = re.compile(r"\bWe request\b.*$", re.IGNORECASE | re.DOTALL)
_INVESTIGATOR = re.compile(
    r"investigator\s+(?:is\s+)?([^\s.,;!?]+(?:\s+[A-Z][^\s.,;!?]*)*)",
    re.IGNORECASE,
)
_HONORIFIC_NAME = re.compile(r"\b(M(?:rs?|s)|Dr|Mme|Mlle)\.?\s+([A-Z][\w'-]+)")
_MONTHS = {
    name.casefold(): i
    for i, name in enumerate(
        ["January", "February", "March", "April", "May", "June", "July",
         "August", "September", "October", "November", "December"],
        start=1,
    )
}
_ELLIPSIS = re.compile(r"\(\.{3}\)|\(…\)|…")


def _flatten(lines: list[str]) -> str:
    return re.sub(r"\s+", " ", " ".join(lines)).strip()


def _parse_block_date(text: str) -> Optional[date]:
    m = re.search(r"(\d{2})\.(\d{2})\.(\d{4})", text)
    if m:
        try:
            return date(int(m.group(3)), int(m.group(2)), int(m.group(1)))
        except ValueError:
            return None
    m = re.search(r"(\d{4})-(\d{2})-(\d{2})", text)
    if m:
        try:
            return date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
        except ValueError:
            return None
    return None


def _split_enumerated(text: str) -> list[str]:
    marks = list(_ENUMERATOR.finditer(text))
    out = []
    for i, m in enumerate(marks):
        end = marks[i + 1].start() if i + 1 < len(marks) else len(text)
        out.append(text[m.end():end].strip())
    return out


def parse_mandate(text: str) -> tuple[Mandate, list[ParseDiagnostic]]:
    """Parse a mandate's labeled blocks into structured fields.

    Recognized blocks: Date, Description, Mandate (with enumerated
    questions and an optional closing deadline sentence), Note (carries the
    investigator), and an optional Items list.  Suspects are whoever the
    text calls by an honorific.  Missing Description or Mandate blocks are
    Errors; a partial Mandate is still returned.
    """
    diags: list[ParseDiagnostic] = []
    blocks: dict[str, list[str]] = {}
    block_lines: dict[str, int] = {}
    label: Optional[str] = None

    for n, line in enumerate(text.splitlines(), start=1):
        m = _BLOCK_LABEL.match(line)
        if m:
            label = m.group(1).casefold()
            if label == "transmitted items":
                label = "items"
            blocks.setdefault(label, []).append(line[m.end():])
            block_lines.setdefault(label, n)
        elif label:
            blocks[label].append(line)

    received = None
    if "date" in blocks:
        received = _parse_block_date(_flatten(blocks["date"]))
        if received is None:
            _warn(diags, block_lines["date"], "Date block has no readable date")

    description = ""
    if "description" in blocks:
        description = _flatten(blocks["description"])
    else:
        _err(diags, 1, "no Description block found")

    questions: tuple[str, ...] = ()
    deadline: Optional[date] = None
    if "mandate" in blocks:
        mandate_text = _flatten(blocks["mandate"])
        dm = _DEADLINE_CLAUSE.search(mandate_text)
        if dm:
            month = _MONTHS.get(dm.group(2).casefold())
            if month:
                try:
                    deadline = date(int(dm.group(3)), month, int(dm.group(1)))
                except ValueError:
                    _warn(diags, block_lines["mandate"], "deadline clause has no valid date")
            else:
                _warn(diags, block_lines["mandate"], f"unknown month: {dm.group(2)!r}")
        body = _CLOSING_SENTENCE.sub("", mandate_text)
        items = _split_enumerated(body)
        cleaned = []
        for q in items:
            q = _ELLIPSIS.sub("", q).strip()
            q = re.sub(r"\s+", " ", q)
            if q:
                cleaned.append(q)
        questions = tuple(cleaned)
        if not questions:
            _warn(diags, block_lines["mandate"], "Mandate block has no enumerated questions")
    else:
        _err(diags, 1, "no Mandate block found")

    investigator = None
    if "note" in blocks:
        im = _INVESTIGATOR.search(_flatten(blocks["note"]))
        if im:
            investigator = im.group(1).strip()
        else:
            _warn(diags, block_lines["note"], "Note block names no investigator")

    transmitted: tuple[str, ...] = ()
    if "items" in blocks:
        flat = _flatten(blocks["items"])
        listed = _split_enumerated(flat)
        if not listed:
            listed = [p.strip() for p in re.split(r"\s*(?:;|,(?!\d)| and )\s*", flat) if p.strip()]
        transmitted = tuple(listed)

    suspects: list[str] = []
    seen: set[tuple[str, str]] = set()
    for hm in _HONORIFIC_NAME.finditer(text):
        key = (hm.group(1).casefold(), hm.group(2).casefold())
        if key not in seen:
            seen.add(key)
            suspects.append(f"{hm.group(1)} {hm.group(2)}")

    mandate = Mandate(
        description=description,
        questions=questions,
        received_date=received,
        deadline=deadline,
        investigator_name=investigator,
        suspects=tuple(suspects),
        transmitted_items=transmitted,
    )
    return mandate, diags


# ---------------------------------------------------------------------------
# method-step tables (lab-log methodology layout)

_STEP_ROW = re.compile(r"^\s*(\d+)[.)]?\s+(.*)$")


def parse_method_steps(text: str) -> tuple[list[MethodStep], list[ParseDiagnostic]]:
    """Parse the lab log's numbered step table: Step, Action, Purpose, Tool, Version."""
    diags: list[ParseDiagnostic] = []
    steps: list[MethodStep] = []
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.casefold().startswith("step"):
            continue
        m = _STEP_ROW.match(stripped)
        if not m:
            _err(diags, n, f"unreadable step row: {stripped[:50]!r}")
            continue
        cells = [c.strip() for c in re.split(r"\t+|\s{2,}", m.group(2)) if c.strip()]
        if not cells:
            _err(diags, n, "step row has no action")
            continue
        action = cells[0]
        purpose = cells[1] if len(cells) > 1 and cells[1] != "-" else ""
        tool = cells[2] if len(cells) > 2 and cells[2] != "-" else None
        version = cells[3] if len(cells) > 3 and cells[3] != "-" else None
        steps.append(
            MethodStep(
                ordinal=int(m.group(1)),
                action=action,
                purpose=purpose,
                tool_name=tool,
                tool_version=version,
            )
        )
    if not steps:
        _err(diags, 1, "no step rows found")
    return steps, diags
