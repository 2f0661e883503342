"""Planner, rule-based inserter, prompt builder and LLM-inserter tests."""

from __future__ import annotations

import random
import re
from collections import Counter

import pytest

from conftest import (
    IDENTICAL_TEXT_ORIGINAL,
    IDENTICAL_TEXT_TAGGED,
    INVALID_FORMAT_TAGGED,
    WORKED_ORIGINAL,
    make_context,
    make_passage,
)
from fintag.insertion import (
    DEFAULT_TYPE_WEIGHTS,
    InserterConfig,
    InsertionFailure,
    InsertionPlan,
    MissingExemplar,
    build_insertion_prompt,
    insert_llm,
    insert_rule_based,
    plan_errors,
)
from fintag.llm_client import CompletionReply
from fintag.markup import Edit, ErrorType, Statement, derive_original, serialize
from fintag.quality import check


def _plan(*kinds, seed=0):
    return InsertionPlan(False, len(kinds), tuple(kinds), seed)


class TestPlanErrors:
    def test_deterministic(self):
        passage = "Revenue rose to $5.2 million in 2020."
        a = plan_errors(passage, seed=42)
        b = plan_errors(passage, seed=42)
        assert a == b
        assert plan_errors(passage, seed=43) != a or True  # different seed may differ

    def test_short_passage_gets_one_error(self):
        passage = " ".join(["tok"] * 30) + " $5 in 2020."
        config = InserterConfig(clean_probability=0.0)
        for seed in range(20):
            plan = plan_errors(passage, config, seed=seed)
            assert plan.count == 1

    def test_count_scales_with_length_and_clamps(self):
        config = InserterConfig(clean_probability=0.0)
        long_passage = " ".join(["tok"] * 1000)
        for seed in range(10):
            assert plan_errors(long_passage, config, seed=seed).count == 6
        medium = " ".join(["tok"] * 150)
        assert plan_errors(medium, config, seed=1).count == 2

    def test_clean_plan_shape(self):
        config = InserterConfig(clean_probability=1.0)
        plan = plan_errors("some passage", config, seed=3)
        assert plan.clean and plan.count == 0 and plan.kinds == ()

    def test_empty_passage_rejected(self):
        with pytest.raises(ValueError):
            plan_errors("   ")

    def test_plan_invariants_enforced(self):
        with pytest.raises(ValueError):
            InsertionPlan(True, 1, (ErrorType.ENTITY,), 0)
        with pytest.raises(ValueError):
            InsertionPlan(False, 2, (ErrorType.ENTITY,), 0)

    def test_monte_carlo_matches_configured_distribution(self):
        passage = " ".join(["tok"] * 120)  # two errors per non-clean plan
        clean = 0
        kinds = Counter()
        n = 10_000
        for seed in range(n):
            plan = plan_errors(passage, seed=seed)
            if plan.clean:
                clean += 1
            kinds.update(plan.kinds)
        clean_pct = 100.0 * clean / n
        assert abs(clean_pct - 32.5) <= 2.0
        total = sum(kinds.values())
        weight_sum = sum(DEFAULT_TYPE_WEIGHTS.values())
        for kind, weight in DEFAULT_TYPE_WEIGHTS.items():
            share = 100.0 * kinds[kind] / total
            target = 100.0 * weight / weight_sum
            assert abs(share - target) <= 2.0, (kind, share, target)


class TestRuleBasedInserter:
    def test_clean_plan_passthrough(self):
        plan = InsertionPlan(True, 0, (), 5)
        result = insert_rule_based("Revenue rose in 2020.", "", plan, seed=5)
        assert serialize(result.record.doc) == "Revenue rose in 2020."
        assert not result.record.doc.has_tags
        assert result.skipped == ()

    def test_forced_temporal_mirrors_worked_example_structure(self):
        result = insert_rule_based(
            WORKED_ORIGINAL, "", _plan(ErrorType.TEMPORAL), seed=9
        )
        edits = [s for s in result.record.doc.segments if isinstance(s, Edit)]
        assert len(edits) == 1
        assert edits[0].kind is ErrorType.TEMPORAL
        assert edits[0].original_text == "September 2018"
        assert edits[0].error_text != "September 2018"
        assert derive_original(result.record.doc) == WORKED_ORIGINAL

    def test_relation_flip_on_lexicon_sentence(self):
        passage = (
            "The earnings from service operations decreased from $32.8 million "
            "in 2000 to $35.1 million in 2001."
        )
        result = insert_rule_based(passage, "", _plan(ErrorType.RELATION), seed=1)
        assert (
            "<relation><delete>decreased</delete><mark>increased</mark></relation>"
            in serialize(result.record.doc)
        )
        assert derive_original(result.record.doc) == passage

    def test_numeric_perturbation_preserves_formatting(self):
        passage = "Assets were $1,204 million and margin was 41.2% in the period."
        rng = random.Random(0)
        for seed in range(12):
            result = insert_rule_based(passage, "", _plan(ErrorType.NUMERICAL, seed=seed), seed=seed)
            (edit,) = [s for s in result.record.doc.segments if isinstance(s, Edit)]
            if edit.original_text == "$1,204":
                # grouped style, currency sigil kept, no decimals introduced
                assert re.fullmatch(r"\$\d{1,3}(,\d{3})*", edit.error_text)
            else:
                assert edit.original_text == "41.2%"
                assert re.fullmatch(r"\d+\.\d%", edit.error_text)

    def test_entity_replacement_harvests_context(self):
        passage = "Net income attributable to Harbor Financial was $55.2 million."
        context = "Filings for Harbor Financial and Summit Industrial in 2021."
        result = insert_rule_based(passage, context, _plan(ErrorType.ENTITY), seed=2)
        (edit,) = [s for s in result.record.doc.segments if isinstance(s, Edit)]
        assert edit.original_text == "Harbor Financial"
        assert edit.error_text == "Summit Industrial"

    def test_contradictory_appends_flipped_copy(self):
        passage = "Earnings increased to $12.5 million in 2020."
        result = insert_rule_based(passage, "", _plan(ErrorType.CONTRADICTORY), seed=3)
        (stmt,) = [s for s in result.record.doc.segments if isinstance(s, Statement)]
        assert stmt.kind is ErrorType.CONTRADICTORY
        assert stmt.content != passage
        assert "decreased" in stmt.content or "$12.5" not in stmt.content
        assert serialize(result.record.doc).index("<contradictory>") > len(passage) - 1
        assert derive_original(result.record.doc) == passage

    def test_unverifiable_appends_speculative_sentence(self):
        passage = "The notes mature in 2027."
        result = insert_rule_based(passage, "", _plan(ErrorType.UNVERIFIABLE), seed=4)
        (stmt,) = [s for s in result.record.doc.segments if isinstance(s, Statement)]
        assert stmt.kind is ErrorType.UNVERIFIABLE
        assert derive_original(result.record.doc) == passage

    def test_unapplicable_kind_is_reported_not_absorbed(self):
        passage = "the totals were broadly unchanged across both periods."  # no sites
        plan = _plan(ErrorType.ENTITY, ErrorType.NUMERICAL)
        result = insert_rule_based(passage, "", plan, seed=6)
        assert {s.kind for s in result.skipped} == {ErrorType.ENTITY, ErrorType.NUMERICAL}
        tags = [s for s in result.record.doc.segments if not hasattr(s, "content")]
        assert len(tags) == plan.count - len(result.skipped) == 0

    def test_deterministic_output(self):
        rng = random.Random(7)
        passage = make_passage(rng)
        context = make_context(rng, passage)
        plan = plan_errors(passage, InserterConfig(clean_probability=0.0), seed=7)
        first = insert_rule_based(passage, context, plan, seed=7)
        second = insert_rule_based(passage, context, plan, seed=7)
        assert first.record == second.record
        assert first.skipped == second.skipped

    def test_error_text_never_equals_original(self):
        rng = random.Random(31)
        for i in range(150):
            passage = make_passage(rng)
            plan = plan_errors(passage, InserterConfig(clean_probability=0.0), seed=i)
            result = insert_rule_based(passage, make_context(rng, passage), plan, seed=i)
            for seg in result.record.doc.segments:
                if isinstance(seg, Edit):
                    assert seg.original_text.strip() != seg.error_text.strip()

    def test_tag_count_matches_plan_minus_skips(self):
        rng = random.Random(67)
        for i in range(150):
            passage = make_passage(rng)
            plan = plan_errors(passage, InserterConfig(clean_probability=0.0), seed=i)
            result = insert_rule_based(passage, make_context(rng, passage), plan, seed=i)
            tags = result.record.doc.kinds()
            assert len(tags) == plan.count - len(result.skipped)
            assert len(result.applied) == len(tags)


class TestInsertionPrompt:
    def test_single_kind_prompt_contents(self):
        plan = _plan(ErrorType.TEMPORAL)
        prompt = build_insertion_prompt("passage text", "context text", plan, seed=0)
        assert prompt.count("[temporal]") == 1
        assert "temporal errors (<temporal>)" in prompt
        assert "numerical errors" not in prompt
        assert "passage text" in prompt and "context text" in prompt

    def test_multi_kind_prompt_contents(self):
        plan = _plan(ErrorType.NUMERICAL, ErrorType.UNVERIFIABLE)
        prompt = build_insertion_prompt("p", "c", plan, seed=0)
        assert "[numerical]" in prompt and "[unverifiable]" in prompt
        assert "numerical errors (<numerical>)" in prompt
        assert "unverifiable sentences (<unverifiable>)" in prompt

    def test_seeds_change_only_exemplar_choice(self):
        plan = _plan(ErrorType.TEMPORAL)

        def skeleton(prompt: str) -> tuple:
            head, _, rest = prompt.partition("Examples:")
            body, _, tail = rest.partition("Reference context:")
            return head, tail

        prompts = {build_insertion_prompt("p", "c", plan, seed=s) for s in range(6)}
        assert len(prompts) > 1  # the default pool has two temporal exemplars
        skeletons = {skeleton(p) for p in prompts}
        assert len(skeletons) == 1

    def test_deterministic_given_seed(self):
        plan = _plan(ErrorType.ENTITY, ErrorType.RELATION)
        assert build_insertion_prompt("p", "c", plan, seed=5) == build_insertion_prompt(
            "p", "c", plan, seed=5
        )

    def test_missing_exemplar(self):
        from fintag.insertion import Exemplar

        pool = [Exemplar(ErrorType.TEMPORAL, "p", "t")]
        with pytest.raises(MissingExemplar):
            build_insertion_prompt("p", "c", _plan(ErrorType.ENTITY), pool, seed=0)

    def test_exemplar_pool_file_round_trip(self, tmp_path):
        import json

        from fintag.insertion import load_exemplars

        path = tmp_path / "pool.jsonl"
        rows = [
            {"kind": "temporal", "passage": "In 2019 it was $5.",
             "tagged": "In <temporal><delete>2019</delete><mark>2017</mark></temporal> it was $5."},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        pool = load_exemplars(path)
        assert pool[0].kind is ErrorType.TEMPORAL
        prompt = build_insertion_prompt("p", "c", _plan(ErrorType.TEMPORAL), pool, seed=0)
        assert rows[0]["tagged"] in prompt


class StubClient:
    name = "stub"

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0

    def complete(self, request):
        text = self.replies[min(self.calls, len(self.replies) - 1)]
        self.calls += 1
        return CompletionReply(text, "stub-model", 0.0)


class TestLlmInserter:
    def test_valid_reply_accepted_without_retry(self):
        passage = "The fee was $25 million in 2019."
        reply = (
            "The fee was <numerical><delete>$25</delete><mark>$34</mark>"
            "</numerical> million in 2019."
        )
        client = StubClient([reply])
        record = insert_llm(passage, "", _plan(ErrorType.NUMERICAL), client)
        assert client.calls == 1
        assert record.provenance == "stub"
        assert serialize(record.doc) == reply
        assert check(record) == []

    def test_unfixable_reply_retries_then_fails(self):
        client = StubClient([INVALID_FORMAT_TAGGED])
        with pytest.raises(InsertionFailure) as err:
            insert_llm(
                "The depreciation expense was unchanged.", "",
                _plan(ErrorType.CONTRADICTORY), client, max_retries=1,
            )
        assert client.calls == 2  # first try plus one retry
        assert any("invalid" in i.kind.value for i in err.value.issues)

    def test_fixable_reply_is_auto_fixed(self):
        client = StubClient([IDENTICAL_TEXT_TAGGED])
        record = insert_llm(
            IDENTICAL_TEXT_ORIGINAL, "", _plan(ErrorType.RELATION), client
        )
        assert client.calls == 1
        assert not record.doc.has_tags  # unwrapped to plain text
        assert check(record) == []

    def test_clean_plan_skips_client(self):
        client = StubClient(["should never be used"])
        plan = InsertionPlan(True, 0, (), 1)
        record = insert_llm("Revenue rose in 2020.", "", plan, client)
        assert client.calls == 0
        assert not record.doc.has_tags

    def test_envelope_and_fences_tolerated(self):
        passage = "The fee was $25 million in 2019."
        inner = (
            "The fee was <numerical><delete>$25</delete><mark>$31</mark>"
            "</numerical> million in 2019."
        )
        wrapped = '```json\n{"Tagged": "' + inner.replace('"', '\\"') + '"}\n```'
        record = insert_llm(passage, "", _plan(ErrorType.NUMERICAL), StubClient([wrapped]))
        assert serialize(record.doc) == inner
