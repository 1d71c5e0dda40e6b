"""Report assembly, the results store, experiment runs, and the CLI."""

from __future__ import annotations

import json
import random

import pytest

from casedraft.cli import main
from casedraft.gateway import BackendConfig, BackendKind, generate
from casedraft.model import ReportSectionKind, bundle_to_json
from casedraft.pipeline import (
    DISCLAIMER_BANNER,
    SECTION_TITLES,
    DraftContent,
    ManualPlaceholder,
    append_records,
    assemble,
    next_run_id,
    read_store,
    render_markdown,
    run_experiment,
    summarize,
)
from casedraft.prompting import (
    Placement,
    PromptVariant,
    build_matrix,
    build_prompt,
    render_input,
)
from casedraft.ingest import SourceFormat

from conftest import DATA_DIR

MOCK = BackendConfig(name="mock", kind=BackendKind.MOCK)


def intro_draft(bundle):
    text = render_input(bundle, ReportSectionKind.INTRODUCTION, SourceFormat.MANDATE_TEXT)
    prompt = build_prompt(
        ReportSectionKind.INTRODUCTION, SourceFormat.MANDATE_TEXT, text,
        PromptVariant(placement=Placement.REQUEST_LAST),
    )
    return generate(MOCK, prompt)


# --- assembly ----------------------------------------------------------------

def test_assemble_rejects_discussion_draft(golden_bundle):
    draft = intro_draft(golden_bundle)
    with pytest.raises(ValueError, match="reserved for the examiner"):
        assemble(golden_bundle, {ReportSectionKind.DISCUSSION: draft})
    with pytest.raises(ValueError, match="reserved for the examiner"):
        assemble(golden_bundle, {ReportSectionKind.CONCLUSION: draft})


def test_assemble_orders_all_six_sections(golden_bundle):
    document = assemble(golden_bundle, {})
    assert [k.value for k, _ in document.sections] == [
        "introduction", "items_received", "methodology",
        "results", "discussion", "conclusion",
    ]
    assert all(isinstance(c, ManualPlaceholder) for _, c in document.sections)


def test_assemble_scores_drafted_sections(golden_bundle):
    draft = intro_draft(golden_bundle)
    document = assemble(golden_bundle, {ReportSectionKind.INTRODUCTION: draft})
    content = document.content(ReportSectionKind.INTRODUCTION)
    assert isinstance(content, DraftContent)
    assert content.backend_label == "mock"
    assert content.prompt_id == draft.prompt_id
    assert content.hallucination_count == 0
    # the other five remain placeholders
    assert isinstance(document.content(ReportSectionKind.RESULTS), ManualPlaceholder)


def test_manual_sections_carry_examiner_notes(golden_bundle):
    document = assemble(golden_bundle, {})
    assert "Interpretation" in document.content(ReportSectionKind.DISCUSSION).note
    assert "Conclusions" in document.content(ReportSectionKind.CONCLUSION).note


# --- rendering -----------------------------------------------------------------

def test_render_markdown_layout(golden_bundle):
    draft = intro_draft(golden_bundle)
    text = render_markdown(assemble(golden_bundle, {ReportSectionKind.INTRODUCTION: draft}))
    lines = text.splitlines()
    assert lines[0] == f"> {DISCLAIMER_BANNER}"
    headings = [l for l in lines if l.startswith("# ")]
    assert headings == [f"# {SECTION_TITLES[k]}" for k, _ in assemble(golden_bundle, {}).sections]
    assert f"<!-- backend=mock prompt={draft.prompt_id}" in text
    assert "*Interpretation is reserved for the examiner.*" in text
    assert text.endswith("\n") and not text.endswith("\n\n")


def test_render_markdown_placeholder_only(golden_bundle):
    text = render_markdown(assemble(golden_bundle, {}))
    assert text.count("# ") >= 6
    assert "<!--" not in text  # no provenance without drafts


# --- results store ---------------------------------------------------------------

def test_store_round_trip(tmp_path):
    path = tmp_path / "store.jsonl"
    append_records(path, [{"a": 1}, {"b": "x"}])
    append_records(path, [{"c": [1, 2]}])
    assert read_store(path) == [{"a": 1}, {"b": "x"}, {"c": [1, 2]}]


def test_read_store_missing_file(tmp_path):
    assert read_store(tmp_path / "absent.jsonl") == []


def test_read_store_skips_blank_lines(tmp_path):
    path = tmp_path / "store.jsonl"
    path.write_text('{"a": 1}\n\n{"b": 2}\n', encoding="utf-8")
    assert read_store(path) == [{"a": 1}, {"b": 2}]


def test_next_run_id_counts_distinct_runs():
    assert next_run_id([]) == "run-0001"
    assert next_run_id([{"run_id": "run-0001"}] * 3) == "run-0002"
    assert next_run_id([{"run_id": "run-0001"}, {"run_id": "run-0002"}]) == "run-0003"


# --- experiment runs ------------------------------------------------------------

def test_run_experiment_mock_records(golden_bundle, tmp_path):
    store = tmp_path / "store.jsonl"
    records = run_experiment(golden_bundle, [MOCK], store)
    assert len(records) == 36
    assert {r["record_kind"] for r in records} == {"result"}
    assert {r["run_id"] for r in records} == {"run-0001"}
    assert read_store(store) == records
    # a second run on the same store appends under the next id
    again = run_experiment(golden_bundle, [MOCK], store)
    assert {r["run_id"] for r in again} == {"run-0002"}
    assert len(read_store(store)) == 72


def test_run_experiment_is_byte_deterministic(golden_bundle, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run_experiment(golden_bundle, [MOCK], a)
    run_experiment(golden_bundle, [MOCK], b)
    assert a.read_bytes() == b.read_bytes()


def test_run_experiment_turns_failures_into_error_records(golden_bundle, tmp_path, stub_server):
    stub_server.state["fail_on"] = {3}
    config = BackendConfig(
        name="flaky",
        kind=BackendKind.LOCAL_GENERATE,
        endpoint_url=stub_server.url,
        max_retries=0,
    )
    records = run_experiment(golden_bundle, [config], tmp_path / "store.jsonl")
    kinds = [r["record_kind"] for r in records]
    assert len(records) == 36
    assert kinds.count("error") == 1
    assert kinds.count("result") == 35
    assert kinds[2] == "error"  # third request hit the injected 503
    assert "error" in records[2]


# --- summary statistics -----------------------------------------------------------

def test_summarize_grouping_and_means(golden_bundle, tmp_path):
    records = run_experiment(golden_bundle, [MOCK], tmp_path / "s.jsonl")
    table = summarize(records)
    keys = [(r.backend, r.section, r.input_format) for r in table.rows]
    assert keys == [
        ("mock", "introduction", "mandate_text"),
        ("mock", "items_received", "mandate_text"),
        ("mock", "methodology", "lab_log_table"),
        ("mock", "results", "lab_log_table"),
        ("mock", "results", "reduced_csv"),
        ("mock", "results", "tool_report_excerpt"),
    ]
    assert [r.count for r in table.rows] == [4, 4, 4, 8, 8, 8]
    for row in table.rows:
        assert row.error_count == 0
        assert row.mean_latency_s == 0.0
        assert row.median_latency_s == 0.0
        assert row.mean_hallucinations == 0.0
        assert row.mean_completeness == 1.0


def test_summarize_is_order_independent(golden_bundle, tmp_path):
    records = run_experiment(golden_bundle, [MOCK], tmp_path / "s.jsonl")
    shuffled = list(records)
    random.Random(11).shuffle(shuffled)
    assert summarize(shuffled).to_dicts() == summarize(records).to_dicts()


def test_summarize_error_records_only_count():
    records = [
        {
            "backend": "b", "record_kind": "result",
            "prompt": {"section": "results", "input_format": "reduced_csv"},
            "draft": {"latency_s": 2.0},
            "grounding": {"hallucination_count": 1, "completeness": 0.5},
        },
        {
            "backend": "b", "record_kind": "result",
            "prompt": {"section": "results", "input_format": "reduced_csv"},
            "draft": {"latency_s": 4.0},
            "grounding": {"hallucination_count": 3, "completeness": 1.0},
        },
        {
            "backend": "b", "record_kind": "error",
            "prompt": {"section": "results", "input_format": "reduced_csv"},
            "error": "boom",
        },
    ]
    row = summarize(records).rows[0]
    assert (row.count, row.error_count) == (3, 1)
    assert row.mean_latency_s == 3.0
    assert row.median_latency_s == 3.0
    assert row.mean_hallucinations == 2.0
    assert row.mean_completeness == 0.75


def test_summary_table_renders_text(golden_bundle, tmp_path):
    records = run_experiment(golden_bundle, [MOCK], tmp_path / "s.jsonl")
    text = summarize(records).render_text()
    assert "backend" in text.splitlines()[0]
    assert "mock" in text


# --- command line ------------------------------------------------------------------

@pytest.fixture()
def bundle_file(golden_bundle, tmp_path):
    path = tmp_path / "bundle.json"
    path.write_text(bundle_to_json(golden_bundle), encoding="utf-8")
    return path


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "backends.json"
    path.write_text(json.dumps({"profiles": {"mock": {"kind": "mock"}}}), encoding="utf-8")
    return path


def test_cli_ingest_builds_bundle(tmp_path, capsys):
    out = tmp_path / "bundle.json"
    rc = main([
        "ingest",
        "--mandate", str(DATA_DIR / "full_mandate.txt"),
        "--lablog-locations", f"S1={DATA_DIR / 'lablog_locations.txt'}",
        "--lablog-messages", f"IP6={DATA_DIR / 'lablog_messages.txt'}",
        "--device-profile", f"S1={DATA_DIR / 'device_lablog.txt'}",
        "--method-steps", str(DATA_DIR / "method_steps.txt"),
        "--default-offset", "UTC-5",
        "-o", str(out),
    ])
    assert rc == 0
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert len(doc["mandate"]["questions"]) == 5
    assert len(doc["locations"]["S1"]) == 3
    assert len(doc["messages"]["IP6"]) == 3
    assert doc["device_profiles"]["S1"]["vendor"] == "Samsung"
    # auto-registered items inherit profile details
    assert {i["item_id"] for i in doc["items"]} == {"S1", "IP6"}


def test_cli_validate(bundle_file):
    assert main(["validate", "--bundle", str(bundle_file)]) == 0


def test_cli_validate_missing_file(tmp_path, capsys):
    rc = main(["validate", "--bundle", str(tmp_path / "nope.json")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_cli_transform_spatial(bundle_file, tmp_path):
    out = tmp_path / "clusters.json"
    rc = main(["transform", "spatial", "--bundle", str(bundle_file), "-o", str(out)])
    assert rc == 0
    clusters = json.loads(out.read_text(encoding="utf-8"))
    assert len(clusters) == 1
    assert clusters[0]["member_indices"] == [0, 1, 2]


def test_cli_transform_csv(bundle_file, tmp_path):
    out = tmp_path / "messages.csv"
    rc = main(["transform", "csv", "--bundle", str(bundle_file), "-o", str(out)])
    assert rc == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4  # header + three messages


def test_cli_transform_places(bundle_file, tmp_path):
    out = tmp_path / "places.json"
    rc = main([
        "transform", "places", "--bundle", str(bundle_file),
        "--gazetteer", str(DATA_DIR / "gazetteer.txt"), "-o", str(out),
    ])
    assert rc == 0
    places = json.loads(out.read_text(encoding="utf-8"))
    assert [p["place"] for p in places] == [
        "Healy Hall", "Healy Hall", "Georgetown University",
    ]


def test_cli_transform_colocate_requires_items(bundle_file, capsys):
    rc = main(["transform", "colocate", "--bundle", str(bundle_file)])
    assert rc == 2
    assert "--item" in capsys.readouterr().err


def test_cli_matrix(bundle_file, tmp_path):
    out = tmp_path / "matrix.json"
    assert main(["matrix", "--bundle", str(bundle_file), "-o", str(out)]) == 0
    prompts = json.loads(out.read_text(encoding="utf-8"))
    assert len(prompts) == 36


def test_cli_generate_and_score(bundle_file, config_file, tmp_path):
    draft_path = tmp_path / "draft.json"
    rc = main([
        "generate", "--bundle", str(bundle_file), "--config", str(config_file),
        "--backend", "mock", "--index", "0", "-o", str(draft_path),
    ])
    assert rc == 0
    draft = json.loads(draft_path.read_text(encoding="utf-8"))
    assert draft["backend_label"] == "mock"

    report_path = tmp_path / "report.json"
    rc = main([
        "score", "--bundle", str(bundle_file), "--section", "introduction",
        "--draft", str(draft_path), "-o", str(report_path),
    ])
    assert rc == 0
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["hallucination_count"] == 0
    assert report["completeness"] == 1.0


def test_cli_generate_unknown_backend(bundle_file, config_file, capsys):
    rc = main([
        "generate", "--bundle", str(bundle_file), "--config", str(config_file),
        "--backend", "missing",
    ])
    assert rc == 2
    assert "missing" in capsys.readouterr().err


def test_cli_score_plain_text(bundle_file, tmp_path):
    text_path = tmp_path / "draft.txt"
    text_path.write_text("Mr Sforza and Mr Moriarty.", encoding="utf-8")
    out = tmp_path / "report.json"
    rc = main([
        "score", "--bundle", str(bundle_file), "--section", "introduction",
        "--text", str(text_path), "-o", str(out),
    ])
    assert rc == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["hallucination_count"] == 1


def test_cli_assemble(bundle_file, config_file, tmp_path):
    draft_path = tmp_path / "draft.json"
    main([
        "generate", "--bundle", str(bundle_file), "--config", str(config_file),
        "--backend", "mock", "--index", "0", "-o", str(draft_path),
    ])
    report_path = tmp_path / "report.md"
    rc = main([
        "assemble", "--bundle", str(bundle_file),
        "-d", f"introduction={draft_path}", "-o", str(report_path),
    ])
    assert rc == 0
    text = report_path.read_text(encoding="utf-8")
    assert text.startswith("> ")
    assert len([l for l in text.splitlines() if l.startswith("# ")]) == 6


def test_cli_assemble_rejects_conclusion_draft(bundle_file, config_file, tmp_path, capsys):
    draft_path = tmp_path / "draft.json"
    main([
        "generate", "--bundle", str(bundle_file), "--config", str(config_file),
        "--backend", "mock", "-o", str(draft_path),
    ])
    rc = main([
        "assemble", "--bundle", str(bundle_file), "-d", f"conclusion={draft_path}",
    ])
    assert rc == 2
    assert "reserved" in capsys.readouterr().err


def test_cli_experiment_and_summarize(bundle_file, config_file, tmp_path, capsys):
    store = tmp_path / "store.jsonl"
    rc = main([
        "experiment", "--bundle", str(bundle_file), "--config", str(config_file),
        "--backends", "mock", "--store", str(store),
    ])
    assert rc == 0
    assert "appended 36 records" in capsys.readouterr().out

    out = tmp_path / "summary.json"
    rc = main(["summarize", "--store", str(store), "--json", "-o", str(out)])
    assert rc == 0
    rows = json.loads(out.read_text(encoding="utf-8"))
    assert sum(r["count"] for r in rows) == 36
