from __future__ import annotations

import random
from pathlib import Path

import pytest
from hypothesis import settings

from robosync import dsl

settings.register_profile("deterministic", derandomize=True, deadline=None)
settings.load_profile("deterministic")

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def minimal_config_text() -> str:
    return (FIXTURES / "minimal_config.json").read_text()


@pytest.fixture(scope="session")
def behavior_text() -> str:
    return (FIXTURES / "behavior.rsb").read_text()


@pytest.fixture(scope="session")
def touch_config_text() -> str:
    return (FIXTURES / "touch_config.json").read_text()


@pytest.fixture(scope="session")
def touch_trace_text() -> str:
    return (FIXTURES / "touch_trace.jsonl").read_text()


# ---------------------------------------------------------------------------
# seeded program generator shared by the round-trip tests


_WORDS = (
    "touch", "force", "arms", "legs", "head", "dance", "greet", "warn",
    "sensor_a", "sensor_b", "motor_x", "motor_y", "wave", "nod", "spin",
)


def _gen_number(rng: random.Random) -> float:
    choice = rng.randrange(4)
    if choice == 0:
        return float(rng.randint(-50, 50))
    if choice == 1:
        return round(rng.uniform(-100.0, 100.0), 3)
    if choice == 2:
        return rng.uniform(-1000.0, 1000.0)
    return round(rng.uniform(0.0, 10.0), 1)


def _gen_condition(rng: random.Random, depth: int) -> dsl.Condition:
    if depth <= 0 or rng.random() < 0.4:
        return dsl.Comparison(
            signal=rng.choice(_WORDS),
            op=rng.choice(("<", "<=", ">", ">=", "==", "!=")),
            value=_gen_number(rng),
            level=rng.random() < 0.3,
        )
    kind = rng.randrange(3)
    if kind == 0:
        return dsl.And(_gen_condition(rng, depth - 1), _gen_condition(rng, depth - 1))
    if kind == 1:
        return dsl.Or(_gen_condition(rng, depth - 1), _gen_condition(rng, depth - 1))
    return dsl.Not(_gen_condition(rng, depth - 1))


def _gen_statement(rng: random.Random) -> dsl.Statement:
    kind = rng.randrange(4)
    if kind == 0:
        speed: float | str
        if rng.random() < 0.5:
            speed = rng.choice(("slowly", "quickly"))
        else:
            speed = round(rng.uniform(0.0, 1.0), 3)
        return dsl.Move(rng.choice(_WORDS), speed)
    if kind == 1:
        return dsl.Play(f"{rng.choice(_WORDS)}.wav")
    if kind == 2:
        return dsl.Set(rng.choice(_WORDS), _gen_number(rng))
    if rng.random() < 0.5:
        return dsl.Wait(rng.randint(1, 5000) * 1000)
    return dsl.Wait(rng.randint(1, 999))


def generate_program(rng: random.Random, max_depth: int = 4) -> dsl.BehaviorProgram:
    """Random well-formed program with rule/definition counts and condition
    depth bounded by max_depth."""
    rules = []
    for _ in range(rng.randrange(max_depth + 1)):
        rules.append(
            dsl.Rule(
                condition=_gen_condition(rng, rng.randrange(max_depth + 1)),
                then_behavior=rng.choice(_WORDS),
                else_behavior=rng.choice(_WORDS) if rng.random() < 0.5 else None,
            )
        )
    definitions: dict[str, dsl.Definition] = {}
    names = rng.sample(_WORDS, rng.randrange(max_depth + 1))
    for name in names:
        body = tuple(_gen_statement(rng) for _ in range(rng.randrange(4)))
        definitions[name] = dsl.Definition(name, body)
    return dsl.BehaviorProgram(tuple(rules), definitions)
