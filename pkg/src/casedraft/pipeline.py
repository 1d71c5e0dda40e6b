"""End-to-end orchestration: assemble report documents, run the experiment
matrix against configured backends, persist results append-only, and fold
the store into summary statistics.

The store is a line-delimited JSON file.  Records are never rewritten;
re-running an experiment appends under a fresh run identifier derived from
the store's current content, so identical configurations reproduce
identical bytes.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .gateway import BackendConfig, GatewayError, GeneratedDraft, generate
from .grounding import GroundingReport, Tolerances, score
from .model import CaseBundle, ReportSectionKind
from .prompting import PromptSpec, PromptTopic, build_matrix

__all__ = [
    "DISCLAIMER_BANNER",
    "SECTION_ORDER",
    "SECTION_TITLES",
    "DraftContent",
    "ManualPlaceholder",
    "ReportDocument",
    "assemble",
    "render_markdown",
    "append_records",
    "read_store",
    "next_run_id",
    "run_experiment",
    "SummaryRow",
    "SummaryTable",
    "summarize",
]

DISCLAIMER_BANNER = (
    "DRAFT - produced with machine assistance. Every statement must be "
    "verified against the case file by the responsible examiner before release."
)

SECTION_ORDER: tuple[ReportSectionKind, ...] = (
    ReportSectionKind.INTRODUCTION,
    ReportSectionKind.ITEMS_RECEIVED,
    ReportSectionKind.METHODOLOGY,
    ReportSectionKind.RESULTS,
    ReportSectionKind.DISCUSSION,
    ReportSectionKind.CONCLUSION,
)

SECTION_TITLES = {
    ReportSectionKind.INTRODUCTION: "Introduction",
    ReportSectionKind.ITEMS_RECEIVED: "Items Received",
    ReportSectionKind.METHODOLOGY: "Methodology",
    ReportSectionKind.RESULTS: "Results",
    ReportSectionKind.DISCUSSION: "Discussion",
    ReportSectionKind.CONCLUSION: "Conclusion",
}

_MANUAL_ONLY = {ReportSectionKind.DISCUSSION, ReportSectionKind.CONCLUSION}


@dataclass(frozen=True)
class DraftContent:
    text: str
    backend_label: str
    prompt_id: str
    created_at: datetime
    hallucination_count: int


@dataclass(frozen=True)
class ManualPlaceholder:
    note: str = "To be completed by the examiner."


SectionContent = Union[DraftContent, ManualPlaceholder]


@dataclass(frozen=True)
class ReportDocument:
    sections: tuple[tuple[ReportSectionKind, SectionContent], ...]

    def content(self, kind: ReportSectionKind) -> SectionContent:
        for k, c in self.sections:
            if k is kind:
                return c
        raise KeyError(kind)


def assemble(
    bundle: CaseBundle,
    drafts: Mapping[ReportSectionKind, GeneratedDraft],
    tolerances: Tolerances = Tolerances(),
) -> ReportDocument:
    """Compose the six-section document from chosen drafts.

    Discussion and Conclusion never take drafts; offering one is an error.
    Undrafted sections get a placeholder.  Each drafted section is scored
    against the bundle so its provenance line carries a hallucination count.
    """
    for kind in drafts:
        if kind in _MANUAL_ONLY:
            raise ValueError(f"{kind.value} is reserved for the examiner; no draft accepted")

    sections: list[tuple[ReportSectionKind, SectionContent]] = []
    for kind in SECTION_ORDER:
        if kind in _MANUAL_ONLY:
            note = (
                "Interpretation is reserved for the examiner."
                if kind is ReportSectionKind.DISCUSSION
                else "Conclusions are reserved for the examiner."
            )
            sections.append((kind, ManualPlaceholder(note)))
            continue
        draft = drafts.get(kind)
        if draft is None:
            sections.append((kind, ManualPlaceholder()))
            continue
        report = score(draft, bundle, kind, tolerances)
        sections.append(
            (
                kind,
                DraftContent(
                    text=draft.text,
                    backend_label=draft.backend_label,
                    prompt_id=draft.prompt_id,
                    created_at=draft.created_at,
                    hallucination_count=report.hallucination_count,
                ),
            )
        )
    return ReportDocument(tuple(sections))


def render_markdown(document: ReportDocument) -> str:
    """Render the document: disclaimer banner, then one heading per section."""
    out = [f"> {DISCLAIMER_BANNER}", ""]
    for kind, content in document.sections:
        out.append(f"# {SECTION_TITLES[kind]}")
        out.append("")
        if isinstance(content, DraftContent):
            out.append(
                f"<!-- backend={content.backend_label} prompt={content.prompt_id} "
                f"created={content.created_at.isoformat()} "
                f"hallucinations={content.hallucination_count} -->"
            )
            out.append("")
            out.append(content.text.rstrip("\n"))
        else:
            out.append(f"*{content.note}*")
        out.append("")
    return "\n".join(out).rstrip("\n") + "\n"


# ---------------------------------------------------------------------------
# append-only results store

def append_records(path: Union[str, Path], records: Sequence[dict]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_store(path: Union[str, Path]) -> list[dict]:
    p = Path(path)
    if not p.exists():
        return []
    records = []
    with open(p, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def next_run_id(existing: Sequence[dict]) -> str:
    runs = {r.get("run_id") for r in existing if r.get("run_id")}
    return f"run-{len(runs) + 1:04d}"


def run_experiment(
    bundle: CaseBundle,
    configs: Sequence[BackendConfig],
    store_path: Union[str, Path],
    prompts: Optional[Sequence[PromptSpec]] = None,
    tolerances: Tolerances = Tolerances(),
) -> list[dict]:
    """Run every prompt against every backend, appending one record each.

    A backend failure becomes an error record, never an abort.  Prompts run
    sequentially in matrix order so a store is reproducible byte for byte.
    """
    if prompts is None:
        prompts = build_matrix(bundle)
    run_id = next_run_id(read_store(store_path))

    records: list[dict] = []
    for config in configs:
        for prompt in prompts:
            base = {"run_id": run_id, "backend": config.name, "prompt": prompt.to_dict()}
            try:
                draft = generate(config, prompt)
                report = score(draft, bundle, prompt.section, tolerances, prompt.topic)
                base["record_kind"] = "result"
                base["draft"] = draft.to_dict()
                base["grounding"] = report.to_dict()
            except GatewayError as exc:
                base["record_kind"] = "error"
                base["error"] = str(exc)
            records.append(base)
            append_records(store_path, [base])
    return records


# ---------------------------------------------------------------------------
# summary statistics

@dataclass(frozen=True)
class SummaryRow:
    backend: str
    section: str
    input_format: str
    count: int
    error_count: int
    mean_latency_s: Optional[float]
    median_latency_s: Optional[float]
    mean_hallucinations: Optional[float]
    mean_completeness: Optional[float]

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "section": self.section,
            "input_format": self.input_format,
            "count": self.count,
            "error_count": self.error_count,
            "mean_latency_s": self.mean_latency_s,
            "median_latency_s": self.median_latency_s,
            "mean_hallucinations": self.mean_hallucinations,
            "mean_completeness": self.mean_completeness,
        }


@dataclass(frozen=True)
class SummaryTable:
    rows: tuple[SummaryRow, ...]

    def to_dicts(self) -> list[dict]:
        return [r.to_dict() for r in self.rows]

    def render_text(self) -> str:
        headers = [
            "backend", "section", "format", "n", "err",
            "lat_mean", "lat_median", "halluc_mean", "complete_mean",
        ]
        def fmt(v, spec=".3f"):
            return "-" if v is None else format(v, spec)

        body = [
            [
                r.backend, r.section, r.input_format, str(r.count), str(r.error_count),
                fmt(r.mean_latency_s), fmt(r.median_latency_s),
                fmt(r.mean_hallucinations, ".2f"), fmt(r.mean_completeness, ".3f"),
            ]
            for r in self.rows
        ]
        table = [headers] + body
        widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in table]
        return "\n".join(lines) + "\n"


def summarize(records: Sequence[dict]) -> SummaryTable:
    """Pure fold of store records into per-(backend, section, format) stats.

    Order-independent: the same set of records always yields the same table.
    Latency, hallucination and completeness means cover result records;
    error records only count toward count and error_count.
    """
    groups: dict[tuple[str, str, str], list[dict]] = {}
    for record in records:
        prompt = record.get("prompt", {})
        key = (
            record.get("backend", "?"),
            prompt.get("section", "?"),
            prompt.get("input_format", "?"),
        )
        groups.setdefault(key, []).append(record)

    rows: list[SummaryRow] = []
    for key in sorted(groups):
        group = groups[key]
        results = [r for r in group if r.get("record_kind") == "result"]
        latencies = [r["draft"]["latency_s"] for r in results]
        hallucinations = [r["grounding"]["hallucination_count"] for r in results]
        completeness = [r["grounding"]["completeness"] for r in results]
        rows.append(
            SummaryRow(
                backend=key[0],
                section=key[1],
                input_format=key[2],
                count=len(group),
                error_count=len(group) - len(results),
                mean_latency_s=statistics.mean(latencies) if latencies else None,
                median_latency_s=statistics.median(latencies) if latencies else None,
                mean_hallucinations=statistics.mean(hallucinations) if hallucinations else None,
                mean_completeness=statistics.mean(completeness) if completeness else None,
            )
        )
    return SummaryTable(tuple(rows))
