from __future__ import annotations

import random

import pytest

from robosync import dsl
from robosync.config import parse_config

from conftest import generate_program


def test_reference_program_parses(behavior_text):
    program = dsl.parse_program(behavior_text)
    assert len(program.rules) == 1
    rule = program.rules[0]
    assert rule.condition == dsl.Comparison("touch", "<", 3.0, level=True)
    assert rule.then_behavior == "gentle_response"
    assert rule.else_behavior == "aggressive_response"
    assert set(program.definitions) == {"gentle_response", "aggressive_response"}
    gentle = program.definitions["gentle_response"]
    assert gentle.body == (dsl.Move("arms", "slowly"), dsl.Play("greeting.wav"))
    aggressive = program.definitions["aggressive_response"]
    assert aggressive.body == (dsl.Move("arms", "quickly"), dsl.Play("warning.wav"))


def test_empty_document():
    program = dsl.parse_program("")
    assert program.rules == ()
    assert program.definitions == {}


def test_comments_and_blank_lines():
    program = dsl.parse_program("# a comment\n\nDEFINE nop\n# empty body\nEND\n")
    assert list(program.definitions) == ["nop"]
    assert program.definitions["nop"].body == ()


def test_unclosed_define_reports_expected_end():
    with pytest.raises(dsl.ParseError) as exc:
        dsl.parse_program("DEFINE x\nMOVE arms SLOWLY\n")
    assert "END" in exc.value.expected


def test_duplicate_define_rejected():
    with pytest.raises(dsl.ParseError, match="duplicate DEFINE"):
        dsl.parse_program("DEFINE x\nEND\nDEFINE x\nEND\n")


def test_parse_error_carries_span():
    with pytest.raises(dsl.ParseError) as exc:
        dsl.parse_program("WHEN touch ? 3\nDO x\nEND\n")
    assert exc.value.span.line == 1
    assert exc.value.span.column == 12


def test_unknown_keyword_rejected():
    with pytest.raises(dsl.ParseError, match="unknown keyword 'JUMP'"):
        dsl.parse_program("JUMP\n")


def test_precedence_and_binds_tighter_than_or():
    program = dsl.parse_program("WHEN a < 1 OR b > 2 AND c == 3\nDO x\nEND\n")
    cond = program.rules[0].condition
    assert cond == dsl.Or(
        dsl.Comparison("a", "<", 1.0),
        dsl.And(dsl.Comparison("b", ">", 2.0), dsl.Comparison("c", "==", 3.0)),
    )


def test_parentheses_override_precedence():
    program = dsl.parse_program("WHEN (a < 1 OR b > 2) AND NOT c != 3\nDO x\nEND\n")
    cond = program.rules[0].condition
    assert cond == dsl.And(
        dsl.Or(dsl.Comparison("a", "<", 1.0), dsl.Comparison("b", ">", 2.0)),
        dsl.Not(dsl.Comparison("c", "!=", 3.0)),
    )


def test_level_keyword_is_recorded_sugar():
    sugared = dsl.parse_program("WHEN touch LEVEL < 3\nDO x\nEND\n").rules[0].condition
    bare = dsl.parse_program("WHEN touch < 3\nDO x\nEND\n").rules[0].condition
    assert sugared != bare  # the sugar round-trips
    assert sugared.signal == bare.signal
    snapshot = {"touch": 2.0}
    assert dsl.eval_condition(sugared, snapshot) == dsl.eval_condition(bare, snapshot)


def test_statements_parse():
    text = "DEFINE d\nMOVE arms 0.5\nSET grip 3.25\nWAIT 100 ms\nWAIT 250 us\nEND\n"
    body = dsl.parse_program(text).definitions["d"].body
    assert body == (
        dsl.Move("arms", 0.5),
        dsl.Set("grip", 3.25),
        dsl.Wait(100_000),
        dsl.Wait(250),
    )


def test_move_speed_range_checked():
    with pytest.raises(dsl.ParseError, match="within"):
        dsl.parse_program("DEFINE d\nMOVE arms 1.5\nEND\n")


def test_wait_requires_positive_integer():
    with pytest.raises(dsl.ParseError, match="positive integer"):
        dsl.parse_program("DEFINE d\nWAIT 0 ms\nEND\n")
    with pytest.raises(dsl.ParseError, match="positive integer"):
        dsl.parse_program("DEFINE d\nWAIT 1.5 ms\nEND\n")


def test_play_requires_sound_marker():
    with pytest.raises(dsl.ParseError) as exc:
        dsl.parse_program('DEFINE d\nPLAY tune "x.wav"\nEND\n')
    assert "sound" in exc.value.expected


# ---------------------------------------------------------------------------
# formatting


def test_format_empty_program():
    assert dsl.format_program(dsl.BehaviorProgram()) == ""


def test_format_reference_program_roundtrips(behavior_text):
    program = dsl.parse_program(behavior_text)
    formatted = dsl.format_program(program)
    assert dsl.parse_program(formatted) == program
    assert "    MOVE arms SLOWLY" in formatted  # 4-space indent inside DEFINE


def test_format_preserves_nesting():
    program = dsl.parse_program("WHEN NOT (a < 1 OR b > 2) AND c == 3\nDO x\nEND\n")
    assert dsl.parse_program(dsl.format_program(program)) == program


def test_format_right_nested_connectives():
    cond = dsl.Or(dsl.Comparison("a", "<", 1.0), dsl.Or(dsl.Comparison("b", "<", 2.0), dsl.Comparison("c", "<", 3.0)))
    program = dsl.BehaviorProgram(rules=(dsl.Rule(cond, "x"),))
    reparsed = dsl.parse_program(dsl.format_program(program))
    assert reparsed == program


def test_fuzzed_programs_roundtrip():
    rng = random.Random(0xD51)
    for _ in range(1000):
        program = generate_program(rng, max_depth=4)
        assert dsl.parse_program(dsl.format_program(program)) == program


def test_parse_determinism(behavior_text):
    first = dsl.parse_program(behavior_text)
    second = dsl.parse_program(behavior_text)
    assert first == second
    assert dsl.format_program(first) == dsl.format_program(second)


# ---------------------------------------------------------------------------
# evaluation


def test_eval_gentle_branch_boundary():
    cond = dsl.Comparison("touch", "<", 3.0)
    assert dsl.eval_condition(cond, {"touch": 2.0}) is True
    assert dsl.eval_condition(cond, {"touch": 3.0}) is False


def test_eval_missing_signal():
    with pytest.raises(dsl.MissingSignalError) as exc:
        dsl.eval_condition(dsl.Comparison("touch", "<", 3.0), {})
    assert exc.value.signal == "touch"


def test_eval_and_truth_table():
    cond = dsl.And(dsl.Comparison("touch", "<", 3.0), dsl.Comparison("proximity", ">", 1.0))
    for touch, proximity in ((0.0, 2.0), (0.0, 0.0), (5.0, 2.0), (5.0, 0.0)):
        expected = (touch < 3.0) and (proximity > 1.0)
        assert dsl.eval_condition(cond, {"touch": touch, "proximity": proximity}) == expected


def _brute_force_eval(cond, snapshot):
    # Independent reference evaluator: plain recursion, no shared helpers.
    if isinstance(cond, dsl.Comparison):
        left = snapshot[cond.signal]
        return {
            "<": left < cond.value,
            "<=": left <= cond.value,
            ">": left > cond.value,
            ">=": left >= cond.value,
            "==": left == cond.value,
            "!=": left != cond.value,
        }[cond.op]
    if isinstance(cond, dsl.And):
        return _brute_force_eval(cond.left, snapshot) and _brute_force_eval(cond.right, snapshot)
    if isinstance(cond, dsl.Or):
        return _brute_force_eval(cond.left, snapshot) or _brute_force_eval(cond.right, snapshot)
    return not _brute_force_eval(cond.inner, snapshot)


def test_eval_matches_brute_force_on_random_trees():
    from conftest import _gen_condition, _WORDS

    rng = random.Random(0xE7A1)
    for _ in range(1000):
        cond = _gen_condition(rng, depth=6)
        snapshot = {word: rng.uniform(-100, 100) for word in _WORDS}
        assert dsl.eval_condition(cond, snapshot) == _brute_force_eval(cond, snapshot)


# ---------------------------------------------------------------------------
# binding


def test_bind_reference_program(behavior_text, touch_config_text):
    config = parse_config(touch_config_text)
    bound = dsl.bind_program(dsl.parse_program(behavior_text), config)
    assert bound.signal_topics == {"touch": "touch_proc"}
    assert bound.priorities["gentle_response"] == pytest.approx(2 / 3)
    assert bound.priorities["aggressive_response"] == pytest.approx(1 / 3)
    assert bound.audio_actuator == "sound"
    assert bound.speed_words == {"slowly": 0.25, "quickly": 1.0}


def test_bind_uses_config_behavior_priority(behavior_text, touch_config_text):
    import json

    doc = json.loads(touch_config_text)
    doc["behaviors"] = [{"name": "gentle_response", "priority": 0.9}]
    config = parse_config(json.dumps(doc))
    bound = dsl.bind_program(dsl.parse_program(behavior_text), config)
    assert bound.priorities["gentle_response"] == 0.9
    assert 0.0 < bound.priorities["aggressive_response"] < 1.0
    assert bound.priorities["aggressive_response"] != 0.9


def test_bind_signal_prefers_algorithm_output(behavior_text):
    config = parse_config(
        """
        {
            "sensors": [{"name": "touch", "type": "virtual"}],
            "actuators": [
                {"name": "arms", "type": "pwm"},
                {"name": "sound", "type": "audio"}
            ],
            "algorithms": [
                {"name": "lvl", "plugin": "touch_level", "inputs": ["touch"],
                 "output": "touch_lvl", "params": {"thresholds": "1,2,4"}}
            ]
        }
        """
    )
    bound = dsl.bind_program(dsl.parse_program(behavior_text), config)
    assert bound.signal_topics == {"touch": "touch_lvl"}


def test_bind_unknown_behavior_collected(touch_config_text):
    config = parse_config(touch_config_text)
    program = dsl.parse_program("WHEN touch < 3\nDO dance\nEND\n")
    with pytest.raises(dsl.BindErrors) as exc:
        dsl.bind_program(program, config)
    messages = [e.message for e in exc.value.errors]
    assert messages == ["dance: no DEFINE block for DO target"]


def test_bind_unknown_actuator_has_span(touch_config_text):
    config = parse_config(touch_config_text)
    program = dsl.parse_program("DEFINE d\nMOVE legs SLOWLY\nEND\n")
    with pytest.raises(dsl.BindErrors) as exc:
        dsl.bind_program(program, config)
    (error,) = exc.value.errors
    assert error.message == "legs: unknown actuator"
    assert error.span is not None and error.span.line == 2


def test_bind_unknown_signal(touch_config_text):
    config = parse_config(touch_config_text)
    program = dsl.parse_program("WHEN warp < 3\nDO d\nEND\nDEFINE d\nEND\n")
    with pytest.raises(dsl.BindErrors) as exc:
        dsl.bind_program(program, config)
    assert [e.message for e in exc.value.errors] == ["warp: unknown signal"]


def test_bind_errors_aggregate(touch_config_text):
    config = parse_config(touch_config_text)
    program = dsl.parse_program("WHEN warp < 3\nDO dance\nEND\nDEFINE d\nMOVE legs 0.1\nEND\n")
    with pytest.raises(dsl.BindErrors) as exc:
        dsl.bind_program(program, config)
    assert len(exc.value.errors) == 3


def test_play_needs_exactly_one_audio_actuator(behavior_text):
    no_audio = parse_config(
        '{"sensors": [{"name": "touch", "type": "virtual"}], "actuators": [{"name": "arms", "type": "pwm"}]}'
    )
    with pytest.raises(dsl.BindErrors, match="audio"):
        dsl.bind_program(dsl.parse_program(behavior_text), no_audio)


def test_bind_keeps_orders(behavior_text, touch_config_text):
    config = parse_config(touch_config_text)
    program = dsl.parse_program(behavior_text)
    bound = dsl.bind_program(program, config)
    assert bound.program is program
    assert list(bound.program.definitions) == ["gentle_response", "aggressive_response"]
