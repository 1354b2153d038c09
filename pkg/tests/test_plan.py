import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kitchenr.plan import (
    ParseError,
    Plan,
    PlanStep,
    builtin_templates,
    exact_match,
    exact_match_corpus,
    generate_instructions,
    parse_plan,
    read_plans_jsonl,
    write_records_jsonl,
)

FOUR_STEP = (
    "move to the blue zone, pick the cup, move to the green zone, place the cup"
)


class TestParsePlan:
    def test_four_step_round_trip(self):
        plan = parse_plan(FOUR_STEP)
        assert [s.text for s in plan.steps] == [
            "move to the blue zone",
            "pick the cup",
            "move to the green zone",
            "place the cup",
        ]
        assert plan.render() == FOUR_STEP

    def test_whitespace_and_case_normalized(self):
        plan = parse_plan("  Move  to the BLUE zone ,PICK the cup")
        assert plan.steps[0].text == "move to the blue zone"
        assert plan.steps[1].text == "pick the cup"

    def test_unknown_verb_reports_step_index(self):
        with pytest.raises(ParseError) as exc:
            parse_plan("grab the cup, move to the blue zone")
        assert exc.value.step_index == 0
        with pytest.raises(ParseError) as exc:
            parse_plan("move to the blue zone, juggle the cup")
        assert exc.value.step_index == 1

    def test_empty_input_is_empty_plan(self):
        assert parse_plan("") == Plan(())
        assert parse_plan("   ") == Plan(())

    def test_verb_and_argument_split(self):
        step = PlanStep("move to the red zone")
        assert step.verb == "move to"
        assert step.argument == "the red zone"
        assert PlanStep("pick the fork").verb == "pick"

    def test_reparse_is_stable(self):
        plan = parse_plan(FOUR_STEP)
        assert parse_plan(plan.render()) == plan


class TestExactMatch:
    GT = parse_plan(FOUR_STEP)

    def test_identical_plans_score_one(self):
        acc, ind = exact_match(self.GT, self.GT)
        assert acc == 1.0
        assert ind == [1, 1, 1, 1]

    def test_positional_alignment(self):
        # Same steps in a different order only score where positions agree.
        pred = parse_plan(
            "move to the blue zone, move to the green zone, pick the cup, place the cup"
        )
        acc, ind = exact_match(pred, self.GT)
        assert ind == [1, 0, 0, 1]
        assert acc == 0.5

    def test_short_prediction(self):
        pred = parse_plan("move to the blue zone")
        acc, ind = exact_match(pred, self.GT)
        assert ind == [1, 0, 0, 0]
        assert acc == 0.25

    def test_extra_steps_do_not_penalize(self):
        pred = parse_plan(FOUR_STEP + ", move to the red zone")
        acc, _ = exact_match(pred, self.GT)
        assert acc == 1.0

    def test_empty_prediction_scores_zero(self):
        acc, ind = exact_match(Plan(()), self.GT)
        assert acc == 0.0
        assert ind == [0, 0, 0, 0]

    def test_empty_ground_truth_rejected(self):
        with pytest.raises(ValueError):
            exact_match(Plan(()), Plan(()))

    def test_corpus_mean(self):
        half = parse_plan("move to the blue zone, pick the cup")
        score = exact_match_corpus([(self.GT, self.GT), (half, self.GT)])
        assert score == pytest.approx(0.75)

    @settings(max_examples=30, deadline=None)
    @given(k=st.integers(0, 4))
    def test_prefix_score_is_k_over_n(self, k):
        pred = Plan(self.GT.steps[:k])
        acc, _ = exact_match(pred, self.GT)
        assert acc == pytest.approx(k / 4)


class TestTemplates:
    def test_library_well_formed(self):
        templates = builtin_templates()
        assert len(templates) == 20
        assert len({t.id for t in templates}) == 20
        for t in templates:
            assert 4 <= len(t.plan_steps) <= 8

    def test_generation_deterministic(self, scene):
        a = generate_instructions(scene, builtin_templates(), 50, seed=9)
        b = generate_instructions(scene, builtin_templates(), 50, seed=9)
        assert a == b
        assert [r.id for r in a] == [f"inst_{i:04d}" for i in range(50)]

    def test_generated_plans_parse_and_self_score(self, scene):
        records = generate_instructions(scene, builtin_templates(), 563, seed=1)
        assert len(records) == 563
        pairs = []
        for r in records:
            plan = parse_plan(r.gt_plan.render())
            assert plan == r.gt_plan
            pairs.append((plan, r.gt_plan))
        assert exact_match_corpus(pairs) == 1.0

    def test_generated_zones_and_objects_exist(self, scene):
        zone_words = set(scene.zones)
        for r in generate_instructions(scene, builtin_templates(), 100, seed=3):
            for step in r.gt_plan.steps:
                if step.verb == "move to":
                    # "the <zone> zone"
                    assert step.argument.split()[1] in zone_words

    def test_zone_slots_distinct(self, scene):
        for r in generate_instructions(scene, builtin_templates(), 200, seed=5):
            moves = [s.argument.split()[1] for s in r.gt_plan.steps if s.verb == "move to"]
            # Multi-zone templates draw their zones without replacement, so
            # a plan never moves to the same zone twice in a row.
            for a, b in zip(moves, moves[1:]):
                assert a != b


class TestJsonl:
    def test_round_trip(self, tmp_path, scene):
        records = generate_instructions(scene, builtin_templates(), 25, seed=2)
        path = tmp_path / "instructions.jsonl"
        write_records_jsonl(path, records)
        plans = read_plans_jsonl(path)
        assert set(plans) == {r.id for r in records}
        for r in records:
            assert plans[r.id] == r.gt_plan

    def test_reads_plan_as_string(self, tmp_path):
        path = tmp_path / "pred.jsonl"
        path.write_text('{"id": "inst_0000", "plan": "%s"}\n' % FOUR_STEP)
        plans = read_plans_jsonl(path)
        assert plans["inst_0000"] == parse_plan(FOUR_STEP)

    def test_skips_blank_lines(self, tmp_path):
        path = tmp_path / "pred.jsonl"
        path.write_text('\n{"id": "a", "plan": ["pick the cup", "place the cup", '
                        '"pick the cup", "place the cup"]}\n\n')
        assert len(read_plans_jsonl(path)) == 1
