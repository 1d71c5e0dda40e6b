"""Command-line interface.

Subcommands mirror the pipeline stages: ingest sources into a bundle,
validate it, run record transforms, enumerate the prompt matrix, generate
and score single drafts, assemble a report, run the full experiment, and
summarize a results store.  Parse diagnostics go to stderr as
file:line: severity: message; recoverable problems never fail the run.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timedelta
from pathlib import Path

from . import gateway, grounding, ingest, pipeline, prompting, transform
from .model import (
    CaseBundle,
    EvidenceItem,
    ItemKind,
    Mandate,
    ReportSectionKind,
    bundle_from_json,
    bundle_to_json,
    parse_offset,
    validate_bundle,
    _item_from_dict,
)

def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _emit_diags(diags, source: str) -> None:
    for d in diags:
        print(d.render(source), file=sys.stderr)


def _item_file_pairs(values):
    pairs = []
    for value in values or ():
        if "=" not in value:
            raise ValueError(f"expected ITEM=FILE, got {value!r}")
        item_id, path = value.split("=", 1)
        pairs.append((item_id, path))
    return pairs


def _load_bundle(path: str) -> CaseBundle:
    return bundle_from_json(_read(path))


def _save_text(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# ingest

def _cmd_ingest(args) -> int:
    try:
        offset = parse_offset(args.default_offset)
    except ValueError as exc:
        return _fail(str(exc))

    mandate = Mandate()
    if args.mandate:
        try:
            text = _read(args.mandate)
        except OSError as exc:
            return _fail(str(exc))
        mandate, diags = ingest.parse_mandate(text)
        _emit_diags(diags, args.mandate)

    locations: dict[str, list] = {}
    messages: dict[str, list] = {}
    profiles = {}
    parser_flags = [
        (args.tool_locations, ingest.parse_tool_report_locations, locations),
        (args.lablog_locations, ingest.parse_lablog_locations, locations),
        (args.tool_messages, ingest.parse_tool_report_messages, messages),
        (args.lablog_messages, ingest.parse_lablog_messages, messages),
        (args.csv_messages, ingest.parse_csv_messages, messages),
    ]
    try:
        for values, parser, sink in parser_flags:
            for item_id, path in _item_file_pairs(values):
                text = _read(path)
                records, diags = parser(text, default_offset=offset)
                _emit_diags(diags, path)
                sink.setdefault(item_id, []).extend(records)
        for item_id, path in _item_file_pairs(args.device_profile):
            profile, diags = ingest.parse_device_profile(_read(path))
            _emit_diags(diags, path)
            profiles[item_id] = profile
    except (OSError, ValueError) as exc:
        return _fail(str(exc))

    steps = ()
    if args.method_steps:
        try:
            parsed, diags = ingest.parse_method_steps(_read(args.method_steps))
        except OSError as exc:
            return _fail(str(exc))
        _emit_diags(diags, args.method_steps)
        steps = tuple(parsed)

    items: dict[str, EvidenceItem] = {}
    if args.items:
        try:
            for d in json.loads(_read(args.items)):
                item = _item_from_dict(d)
                items[item.item_id] = item
        except (OSError, ValueError, KeyError) as exc:
            return _fail(f"items file: {exc}")
    for item_id in list(locations) + list(messages) + list(profiles):
        if item_id not in items:
            profile = profiles.get(item_id)
            items[item_id] = EvidenceItem(
                item_id=item_id,
                kind=ItemKind.PHYSICAL_DEVICE,
                vendor=profile.vendor if profile else "",
                model=profile.model_code if profile else "",
            )

    bundle = CaseBundle(
        mandate=mandate,
        items=tuple(items.values()),
        device_profiles=profiles,
        locations={k: tuple(v) for k, v in locations.items()},
        messages={k: tuple(v) for k, v in messages.items()},
        method_steps=steps,
    )
    try:
        _save_text(bundle_to_json(bundle), args.output)
    except OSError as exc:
        return _fail(str(exc))
    return 0


def _cmd_validate(args) -> int:
    try:
        bundle = _load_bundle(args.bundle)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(str(exc))
    issues = validate_bundle(bundle)
    for issue in issues:
        print(str(issue), file=sys.stderr)
    return 1 if issues else 0


# ---------------------------------------------------------------------------
# transforms

def _records_for(bundle: CaseBundle, item: str | None, kind: str):
    source = bundle.locations if kind == "locations" else bundle.messages
    if item:
        return list(source.get(item, ()))
    return [rec for recs in source.values() for rec in recs]


def _cluster_dict(cluster: transform.LocationCluster) -> dict:
    return {
        "member_indices": list(cluster.member_indices),
        "centroid": list(cluster.centroid),
        "time_span": [cluster.time_span[0].isoformat(), cluster.time_span[1].isoformat()],
        "label": cluster.label,
    }


def _cmd_transform(args) -> int:
    try:
        bundle = _load_bundle(args.bundle)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(str(exc))

    op = args.op
    try:
        if op == "spatial":
            records = _records_for(bundle, args.item, "locations")
            clusters = transform.group_locations_spatial(records, args.radius)
            out = [_cluster_dict(c) for c in clusters]
        elif op == "chrono":
            records = _records_for(bundle, args.item, "locations")
            clusters = transform.group_locations_chronological(
                records, timedelta(minutes=args.max_gap_minutes)
            )
            out = [_cluster_dict(c) for c in clusters]
        elif op == "days":
            records = _records_for(bundle, args.item, "locations")
            buckets = transform.bucket_by_day(records, parse_offset(args.offset))
            out = {day.isoformat(): [r.name for r in recs] for day, recs in buckets.items()}
        elif op == "colocate":
            if not args.item or not args.item_b:
                return _fail("colocate needs --item and --item-b")
            a = list(bundle.locations.get(args.item, ()))
            b = list(bundle.locations.get(args.item_b, ()))
            candidates = transform.detect_colocations(
                a, b, args.radius, timedelta(minutes=args.window_minutes)
            )
            out = [
                {
                    "index_a": c.index_a,
                    "index_b": c.index_b,
                    "distance_m": c.distance_m,
                    "time_gap_s": c.time_gap.total_seconds(),
                }
                for c in candidates
            ]
        elif op == "csv":
            records = _records_for(bundle, args.item, "messages")
            _save_text(transform.reduce_to_csv(records), args.output)
            return 0
        elif op == "places":
            if not args.gazetteer:
                return _fail("places needs --gazetteer")
            gazetteer = transform.load_gazetteer(_read(args.gazetteer))
            records = _records_for(bundle, args.item, "locations")
            out = [
                {
                    "name": r.name,
                    "place": transform.resolve_place(r.latitude, r.longitude, gazetteer),
                }
                for r in records
            ]
        else:
            return _fail(f"unknown transform op {op!r}")
    except (ValueError, OSError) as exc:
        return _fail(str(exc))

    _save_text(json.dumps(out, indent=2, ensure_ascii=False) + "\n", args.output)
    return 0


# ---------------------------------------------------------------------------
# prompts and generation

def _cmd_matrix(args) -> int:
    try:
        bundle = _load_bundle(args.bundle)
        prompts = prompting.build_matrix(bundle, french_labels=args.french_labels)
        _save_text(prompting.matrix_to_json(prompts), args.output)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(str(exc))
    return 0


def _load_profiles(path: str) -> dict[str, gateway.BackendConfig]:
    doc = json.loads(_read(path))
    return {
        name: gateway.backend_config_from_dict(name, entry)
        for name, entry in doc.get("profiles", {}).items()
    }


def _cmd_generate(args) -> int:
    try:
        bundle = _load_bundle(args.bundle)
        profiles = _load_profiles(args.config)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(str(exc))
    config = profiles.get(args.backend)
    if config is None:
        return _fail(f"no backend profile named {args.backend!r}")

    prompts = prompting.build_matrix(bundle, french_labels=args.french_labels)
    chosen = None
    if args.prompt_id:
        chosen = next((p for p in prompts if p.prompt_id == args.prompt_id), None)
        if chosen is None:
            return _fail(f"prompt {args.prompt_id!r} is not in the matrix")
    else:
        if not 0 <= args.index < len(prompts):
            return _fail(f"--index out of range 0..{len(prompts) - 1}")
        chosen = prompts[args.index]

    try:
        draft = gateway.generate(config, chosen)
    except gateway.GatewayError as exc:
        return _fail(str(exc))
    _save_text(json.dumps(draft.to_dict(), indent=2, ensure_ascii=False) + "\n", args.output)
    return 0


def _draft_from_dict(d: dict) -> gateway.GeneratedDraft:
    return gateway.GeneratedDraft(
        prompt_id=d["prompt_id"],
        backend_label=d["backend_label"],
        text=d["text"],
        latency_s=d.get("latency_s", 0.0),
        created_at=datetime.fromisoformat(d["created_at"]),
        token_estimate=d.get("token_estimate"),
    )


def _cmd_score(args) -> int:
    try:
        bundle = _load_bundle(args.bundle)
        section = ReportSectionKind(args.section)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(str(exc))
    topic = args.topic
    try:
        if args.draft:
            draft = _draft_from_dict(json.loads(_read(args.draft)))
            report = grounding.score(draft, bundle, section, topic=topic)
        else:
            report = grounding.score(_read(args.text), bundle, section, topic=topic)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(str(exc))
    _save_text(json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", args.output)
    return 0


def _cmd_assemble(args) -> int:
    try:
        bundle = _load_bundle(args.bundle)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(str(exc))
    drafts = {}
    try:
        for pair in args.draft or ():
            if "=" not in pair:
                return _fail(f"expected SECTION=FILE, got {pair!r}")
            name, path = pair.split("=", 1)
            drafts[ReportSectionKind(name)] = _draft_from_dict(json.loads(_read(path)))
        document = pipeline.assemble(bundle, drafts)
        _save_text(pipeline.render_markdown(document), args.output)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(str(exc))
    return 0


def _cmd_experiment(args) -> int:
    try:
        bundle = _load_bundle(args.bundle)
        profiles = _load_profiles(args.config)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(str(exc))
    names = [n.strip() for n in args.backends.split(",") if n.strip()]
    missing = [n for n in names if n not in profiles]
    if missing:
        return _fail(f"no backend profile named {missing[0]!r}")

    prompts = prompting.build_matrix(bundle, french_labels=args.french_labels)
    records = pipeline.run_experiment(
        bundle, [profiles[n] for n in names], args.store, prompts
    )
    run_id = records[0]["run_id"] if records else "-"
    errors = sum(1 for r in records if r.get("record_kind") == "error")
    print(f"appended {len(records)} records to {args.store} as {run_id} ({errors} errors)")
    return 0


def _cmd_summarize(args) -> int:
    try:
        records = pipeline.read_store(args.store)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    table = pipeline.summarize(records)
    if args.json:
        _save_text(json.dumps(table.to_dicts(), indent=2) + "\n", args.output)
    else:
        _save_text(table.render_text(), args.output)
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="casedraft",
        description="Draft forensic report sections from a case bundle and check them against the evidence.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse source texts into a bundle file")
    p.add_argument("--mandate", help="mandate text file")
    p.add_argument("--tool-locations", action="append", metavar="ITEM=FILE")
    p.add_argument("--lablog-locations", action="append", metavar="ITEM=FILE")
    p.add_argument("--tool-messages", action="append", metavar="ITEM=FILE")
    p.add_argument("--lablog-messages", action="append", metavar="ITEM=FILE")
    p.add_argument("--csv-messages", action="append", metavar="ITEM=FILE")
    p.add_argument("--device-profile", action="append", metavar="ITEM=FILE")
    p.add_argument("--method-steps", metavar="FILE")
    p.add_argument("--items", metavar="FILE", help="JSON list of evidence items")
    p.add_argument("--default-offset", default="UTC+0")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("validate", help="check a bundle's invariants")
    p.add_argument("--bundle", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("transform", help="cluster, bucket, co-locate, reduce")
    p.add_argument("op", choices=["spatial", "chrono", "days", "colocate", "csv", "places"])
    p.add_argument("--bundle", required=True)
    p.add_argument("--item")
    p.add_argument("--item-b")
    p.add_argument("--radius", type=float, default=transform.DEFAULT_CLUSTER_RADIUS_M)
    p.add_argument("--max-gap-minutes", type=float, default=60.0)
    p.add_argument("--window-minutes", type=float, default=60.0)
    p.add_argument("--offset", default="UTC+0")
    p.add_argument("--gazetteer")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("matrix", help="enumerate the 36-prompt experiment matrix")
    p.add_argument("--bundle", required=True)
    p.add_argument("--french-labels", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_matrix)

    p = sub.add_parser("generate", help="run one prompt against one backend")
    p.add_argument("--bundle", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--backend", required=True)
    p.add_argument("--prompt-id")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--french-labels", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("score", help="ground a draft against the bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--section", required=True,
                   choices=[k.value for k in ReportSectionKind])
    p.add_argument("--topic", choices=["conversations", "locations"])
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--draft", help="draft JSON from generate")
    group.add_argument("--text", help="plain text file")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("assemble", help="compose the six-section report")
    p.add_argument("--bundle", required=True)
    p.add_argument("-d", "--draft", action="append", metavar="SECTION=FILE")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_assemble)

    p = sub.add_parser("experiment", help="run the matrix against backends")
    p.add_argument("--bundle", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--backends", required=True, help="comma-separated profile names")
    p.add_argument("--store", required=True)
    p.add_argument("--french-labels", action="store_true")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("summarize", help="fold a results store into statistics")
    p.add_argument("--store", required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_summarize)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
