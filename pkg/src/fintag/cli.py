"""Command-line interface: the pipeline as subcommands for batch use.

Exit codes: 0 success, 1 operational error, 2 usage error. All randomness
hangs off --seed, and every output artifact embeds the effective config
and toolkit version in a `_meta` header (JSONL) or `meta` key (JSON), so
identical inputs and seeds produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .corpus import (
    IngestStats,
    distribution_report,
    emit_training_pair,
    filter_grounded,
    ingest,
    split as split_records,
    write_pairs,
)
from .detect_eval import (
    DEFAULT_LABELS,
    FAVA_LABELS,
    evaluate_corpus,
    read_gold_documents,
    read_predictions,
)
from .edit_eval import containment_judge, llm_judge, read_editing_rows, score_corpus
from .insertion import (
    InserterConfig,
    InsertionFailure,
    insert_llm,
    insert_rule_based,
    load_exemplars,
    plan_errors,
)
from .llm_client import ClientError, ClientProfile, LlmClient
from .markup import (
    ErrorType,
    Form,
    derive_erroneous,
    derive_original,
    parse,
    serialize,
    to_target_output,
)
from .quality import (
    QualityTally,
    check,
    fix,
    read_records,
    write_records,
)


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except (OSError, ValueError, KeyError, ClientError, InsertionFailure) as exc:
        print(f"fintag: error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fintag",
        description="Financial error-tag toolkit: insertion, quality gate, evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"fintag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("insert", help="corrupt clean QA responses into tagged records")
    p.add_argument("--input", required=True, help="QA JSONL: id/documents/question/response")
    p.add_argument("--output", required=True, help="tagged-record JSONL to write")
    p.add_argument("--mode", choices=("rule", "llm"), default="rule")
    p.add_argument("--source", default="all", help="dataset label recorded per record")
    p.add_argument("--sources-out", help="optional JSON map of record id to source label")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="INI config file")
    p.add_argument("--exemplars", help="exemplar pool JSONL for llm mode")
    p.add_argument("--max-retries", type=int, default=2)
    p.add_argument("--jobs", type=int, default=4, help="worker parallelism for llm mode")
    p.add_argument("--no-ground-filter", action="store_true")
    p.set_defaults(handler=_cmd_insert)

    p = sub.add_parser("validate", help="run the quality check over records")
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="issue JSONL (default: stdout)")
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("fix", help="repair fixable records, discard the rest")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--discarded", help="JSONL of discarded record ids and reasons")
    p.add_argument("--tally", help="JSON quality tally per provenance")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_fix)

    p = sub.add_parser("derive", help="render a passage form from tagged records")
    p.add_argument("--input", required=True)
    p.add_argument("--form", required=True, choices=("original", "erroneous", "target"))
    p.add_argument("--output", help="default: stdout")
    p.add_argument("--raw", action="store_true", help="input is one plain tagged passage, not JSONL")
    p.set_defaults(handler=_cmd_derive)

    p = sub.add_parser("split", help="deterministic train/validation split of a JSONL file")
    p.add_argument("--input", required=True)
    p.add_argument("--train-out", required=True)
    p.add_argument("--val-out", required=True)
    p.add_argument("--ratio", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_split)

    p = sub.add_parser("pairs", help="emit training pairs from records plus their QA source")
    p.add_argument("--records", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--source", default="all")
    p.set_defaults(handler=_cmd_pairs)

    p = sub.add_parser("report", help="error-type distribution report")
    p.add_argument("--input", required=True, help="tagged-record JSONL")
    p.add_argument("--sources", help="JSON map of record id to source label")
    p.add_argument("--output", help="default: stdout")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(handler=_cmd_report)

    p = sub.add_parser("eval-detect", help="score predictions against gold pairs")
    p.add_argument("--gold", required=True, help="training-pair JSONL")
    p.add_argument("--pred", required=True, help="predictions JSONL: id/raw")
    p.add_argument("--label-set", choices=("default", "fava"), default="default")
    p.add_argument("--match-mode", choices=("overlap", "exact"), default="overlap")
    p.add_argument("--output", help="report JSON path (default: stdout)")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(handler=_cmd_eval_detect)

    p = sub.add_parser("eval-edit", help="FactScore-style editing evaluation")
    p.add_argument("--input", required=True, help="JSONL: id/edited/reference")
    p.add_argument("--judge", choices=("containment", "llm"), default="containment")
    p.add_argument("--profile", help="client profile name (llm judge)")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--output", help="default: stdout")
    p.set_defaults(handler=_cmd_eval_edit)

    return parser


# --- config ----------------------------------------------------------------


def _load_ini(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    return cp


def _inserter_config(cp: configparser.ConfigParser) -> InserterConfig:
    if not cp.has_section("inserter"):
        return InserterConfig()
    section = cp["inserter"]
    weights = dict()
    for kind in ErrorType:
        key = f"weight.{kind.value}"
        if key in section:
            weights[kind] = section.getfloat(key)
    kwargs = {}
    if "clean_probability" in section:
        kwargs["clean_probability"] = section.getfloat("clean_probability")
    if "tokens_per_error" in section:
        kwargs["tokens_per_error"] = section.getint("tokens_per_error")
    if "max_errors" in section:
        kwargs["max_errors"] = section.getint("max_errors")
    if weights:
        kwargs["type_weights"] = weights
    return InserterConfig(**kwargs)


def _client_profiles(cp: configparser.ConfigParser) -> list[ClientProfile]:
    profiles = []
    for section_name in cp.sections():
        if not section_name.startswith("client:"):
            continue
        section = cp[section_name]
        profiles.append(
            ClientProfile(
                name=section_name.split(":", 1)[1],
                endpoint=section.get("endpoint", ""),
                model=section.get("model", ""),
                temperature=section.getfloat("temperature", 0.0),
                timeout=section.getfloat("timeout", 30.0),
                max_in_flight=section.getint("max_in_flight", 4),
                cache_path=section.get("cache_path", fallback=None),
                api_key_env=section.get("api_key_env", "FRED_API_KEY"),
            )
        )
    return profiles


def _config_echo(config: InserterConfig) -> dict:
    return {
        "clean_probability": config.clean_probability,
        "type_weights": {k.value: w for k, w in config.type_weights.items()},
        "tokens_per_error": config.tokens_per_error,
        "max_errors": config.max_errors,
    }


def _meta(command: str, **extra) -> dict:
    return {"tool": "fintag", "version": __version__, "command": command, **extra}


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, ensure_ascii=False, indent=2)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# --- commands --------------------------------------------------------------


def _cmd_insert(args) -> int:
    cp = _load_ini(args.config)
    config = _inserter_config(cp)
    stats = IngestStats()
    qa_records = [
        qa
        for qa in ingest(args.input, args.source, stats=stats)
        if args.no_ground_filter or filter_grounded(qa, stats=stats)
    ]
    exemplars = load_exemplars(args.exemplars) if args.exemplars else None

    records = []
    failures = 0
    skips = 0
    if args.mode == "rule":
        for i, qa in enumerate(qa_records):
            plan = plan_errors(qa.response, config, seed=args.seed + i)
            result = insert_rule_based(
                qa.response, qa.reference, plan, seed=args.seed + i, record_id=qa.id
            )
            skips += len(result.skipped)
            records.append(result.record)
    else:
        profiles = _client_profiles(cp)
        if not profiles:
            raise ValueError("llm mode needs at least one [client:...] config section")
        clients = [LlmClient(profile) for profile in profiles]

        def run(item):
            i, qa = item
            plan = plan_errors(qa.response, config, seed=args.seed + i)
            client = clients[i % len(clients)]
            try:
                return insert_llm(
                    qa.response,
                    qa.reference,
                    plan,
                    client,
                    max_retries=args.max_retries,
                    exemplar_pool=exemplars,
                    record_id=qa.id,
                )
            except InsertionFailure:
                return None

        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            for record in pool.map(run, enumerate(qa_records)):  # input order kept
                if record is None:
                    failures += 1
                else:
                    records.append(record)

    meta = _meta(
        "insert",
        seed=args.seed,
        mode=args.mode,
        source=args.source,
        config=_config_echo(config),
    )
    write_records(args.output, records, meta=meta)
    if args.sources_out:
        _write_json(args.sources_out, {r.id: args.source for r in records})
    print(
        f"insert: read={stats.read} kept={len(qa_records)} skipped_lines={stats.skipped} "
        f"records={len(records)} site_skips={skips} failures={failures}",
        file=sys.stderr,
    )
    return 0


def _cmd_validate(args) -> int:
    rows = []
    clean = 0
    for record, warnings in read_records(args.input):
        issues = check(record, warnings)
        if not issues:
            clean += 1
            continue
        rows.append(
            {
                "id": record.id,
                "issues": [
                    {
                        "kind": issue.kind.value,
                        "segment_index": issue.segment_index,
                        "detail": issue.detail,
                        "fixable": issue.fixable,
                    }
                    for issue in issues
                ],
            }
        )
    payload = {"meta": _meta("validate"), "clean": clean, "flagged": rows}
    _write_json(args.output, payload)
    return 0


def _cmd_fix(args) -> int:
    tally = QualityTally()
    fixed_records = []
    discarded = []
    for record, warnings in read_records(args.input):
        issues = check(record, warnings)
        outcome = fix(record, warnings)
        tally.add(record.provenance or "unknown", issues, discarded=not outcome.fixed)
        if outcome.fixed:
            fixed_records.append(outcome.record)
        else:
            discarded.append(
                {"id": record.id, "reasons": [i.kind.value for i in outcome.reasons]}
            )
    write_records(args.output, fixed_records, meta=_meta("fix", seed=args.seed))
    if args.discarded:
        with open(args.discarded, "w", encoding="utf-8") as fh:
            for row in discarded:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    if args.tally:
        _write_json(args.tally, {"meta": _meta("fix"), "tally": tally.to_json()})
    print(
        f"fix: kept={len(fixed_records)} discarded={len(discarded)}\n{tally.format_table()}",
        file=sys.stderr,
    )
    return 0


def _derive_text(doc, form: str) -> str:
    if form == "original":
        return derive_original(doc)
    if form == "erroneous":
        return derive_erroneous(doc)[0]
    return serialize(to_target_output(doc))


def _cmd_derive(args) -> int:
    if args.raw:
        text = Path(args.input).read_text(encoding="utf-8")
        if text.endswith("\n"):
            text = text[:-1]
        doc, warnings = parse(text, Form.TAGGED_PASSAGE)
        for w in warnings:
            print(f"warning: {w.message}", file=sys.stderr)
        out = _derive_text(doc, args.form)
        if args.output:
            Path(args.output).write_text(out + "\n", encoding="utf-8")
        else:
            print(out)
        return 0
    lines = []
    for record, warnings in read_records(args.input):
        lines.append(json.dumps({"id": record.id, "text": _derive_text(record.doc, args.form)}, ensure_ascii=False))
    body = "\n".join(
        [json.dumps({"_meta": _meta("derive", form=args.form)}, ensure_ascii=False)] + lines
    ) + "\n"
    if args.output:
        Path(args.output).write_text(body, encoding="utf-8")
    else:
        sys.stdout.write(body)
    return 0


def _cmd_split(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        lines = [
            line.rstrip("\n")
            for line in fh
            if line.strip() and "_meta" not in _maybe_keys(line)
        ]
    train, val = split_records(lines, ratio=args.ratio, seed=args.seed)
    header = json.dumps(
        {"_meta": _meta("split", seed=args.seed, ratio=args.ratio)}, ensure_ascii=False
    )
    Path(args.train_out).write_text("\n".join([header] + train) + "\n", encoding="utf-8")
    Path(args.val_out).write_text("\n".join([header] + val) + "\n", encoding="utf-8")
    print(f"split: train={len(train)} val={len(val)}", file=sys.stderr)
    return 0


def _maybe_keys(line: str):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return ()
    return obj.keys() if isinstance(obj, dict) else ()


def _cmd_pairs(args) -> int:
    qa_by_id = {qa.id: qa for qa in ingest(args.qa, args.source)}
    pairs = []
    for record, warnings in read_records(args.records):
        issues = check(record, warnings)
        if issues:
            print(f"pairs: skipping {record.id}: fails quality gate", file=sys.stderr)
            continue
        qa = qa_by_id.get(record.id)
        if qa is None:
            print(f"pairs: skipping {record.id}: no QA source", file=sys.stderr)
            continue
        pairs.append(emit_training_pair(record, qa))
    write_pairs(args.output, pairs, meta=_meta("pairs", source=args.source))
    print(f"pairs: wrote {len(pairs)}", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    records = [record for record, _ in read_records(args.input)]
    source_of = None
    if args.sources:
        source_of = json.loads(Path(args.sources).read_text(encoding="utf-8"))
    report = distribution_report(records, source_of)
    if args.format == "json":
        _write_json(args.output, {"meta": _meta("report"), **report.to_json()})
    else:
        text = report.format_table()
        if args.output:
            Path(args.output).write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
    return 0


def _cmd_eval_detect(args) -> int:
    labels = FAVA_LABELS if args.label_set == "fava" else DEFAULT_LABELS
    gold = read_gold_documents(args.gold, labels)
    preds = read_predictions(args.pred)
    report = evaluate_corpus(gold, preds, labels, args.match_mode)
    if args.format == "json":
        payload = {
            "meta": _meta(
                "eval-detect", label_set=args.label_set, match_mode=args.match_mode
            ),
            **report.to_json(),
        }
        _write_json(args.output, payload)
    else:
        text = report.format_table()
        if args.output:
            Path(args.output).write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
    return 0


def _cmd_eval_edit(args) -> int:
    rows = read_editing_rows(args.input)
    if args.judge == "containment":
        judge = containment_judge
    else:
        cp = _load_ini(args.config)
        profiles = {p.name: p for p in _client_profiles(cp)}
        if args.profile not in profiles:
            raise ValueError(f"unknown client profile {args.profile!r}")
        judge = llm_judge(LlmClient(profiles[args.profile]))
    results, mean = score_corpus(rows, judge)
    payload = {
        "meta": _meta("eval-edit", judge=args.judge),
        "records": results,
        "mean_score": round(mean, 4),
        "mean_pct": round(100 * mean, 1),
    }
    _write_json(args.output, payload)
    # One table-style row: editor/judge label and the percentage score.
    print(f"{args.judge:<16}{100 * mean:6.1f}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
