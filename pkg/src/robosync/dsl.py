"""Behavior definition language: lexer, recursive-descent parser, canonical
formatter, condition evaluator, and the binder that resolves a parsed program
against a system configuration.

Grammar (line oriented; keywords uppercase; '#' starts a comment; identifiers
match [a-z][a-z0-9_]*):

    Program     := (Rule | Definition)*
    Rule        := WHEN Cond NL DO ident NL (ELSE NL DO ident NL)? END
    Cond        := AndExpr (OR AndExpr)*
    AndExpr     := Unary (AND Unary)*
    Unary       := NOT Unary | '(' Cond ')' | Comparison
    Comparison  := ident [LEVEL] ('<'|'<='|'>'|'>='|'=='|'!=') number
    Definition  := DEFINE ident NL Statement* END
    Statement   := MOVE ident (SLOWLY | QUICKLY | number)
                 | PLAY sound string
                 | SET ident number
                 | WAIT integer (ms | us)

The LEVEL keyword is decorative: `touch LEVEL < 3` reads the same processed
value as `touch < 3`; the sugar is recorded so formatting round-trips.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Union

from .config import ActuatorSpec, SystemConfig

# Normalized actuator speeds for the DSL adverbs; override per binding via
# the speed_words argument of bind_program.
SPEED_WORDS: dict[str, float] = {"slowly": 0.25, "quickly": 1.0}

PASSTHROUGH_TOPIC_SUFFIX = "_proc"

_KEYWORDS = frozenset(
    "WHEN DO ELSE END DEFINE MOVE PLAY SET WAIT LEVEL AND OR NOT SLOWLY QUICKLY".split()
)
_COMPARISON_OPS = ("<=", ">=", "==", "!=", "<", ">")
_IDENT_RE = re.compile(r"[a-z][a-z0-9_]*")
_UPPER_RE = re.compile(r"[A-Z][A-Z_]*")
_NUMBER_RE = re.compile(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?")


@dataclass(frozen=True, slots=True)
class SourceSpan:
    line: int
    column: int
    length: int = 1


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan, expected: frozenset[str] = frozenset()):
        super().__init__(f"{span.line}:{span.column}: {message}")
        self.message = message
        self.span = span
        self.expected = expected


class MissingSignalError(Exception):
    def __init__(self, signal: str):
        super().__init__(f"no value for signal {signal!r}")
        self.signal = signal


@dataclass(frozen=True, slots=True)
class BindError:
    message: str
    span: SourceSpan | None = None


class BindErrors(Exception):
    def __init__(self, errors: list[BindError]):
        super().__init__("; ".join(e.message for e in errors))
        self.errors = tuple(errors)


# ---------------------------------------------------------------------------
# abstract syntax


@dataclass(frozen=True)
class Comparison:
    signal: str
    op: str
    value: float
    level: bool = False
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass(frozen=True)
class And:
    left: "Condition"
    right: "Condition"


@dataclass(frozen=True)
class Or:
    left: "Condition"
    right: "Condition"


@dataclass(frozen=True)
class Not:
    inner: "Condition"


Condition = Union[Comparison, And, Or, Not]


@dataclass(frozen=True)
class Move:
    actuator: str
    speed: float | str  # a real in [0, 1] or one of the adverbs ("slowly"/"quickly")
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Play:
    resource: str
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Set:
    actuator: str
    value: float
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Wait:
    duration_us: int
    span: SourceSpan | None = field(default=None, compare=False)


Statement = Union[Move, Play, Set, Wait]


@dataclass(frozen=True)
class Definition:
    name: str
    body: tuple[Statement, ...]
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Rule:
    condition: Condition
    then_behavior: str
    else_behavior: str | None = None
    span: SourceSpan | None = field(default=None, compare=False)
    then_span: SourceSpan | None = field(default=None, compare=False)
    else_span: SourceSpan | None = field(default=None, compare=False)


@dataclass(frozen=True)
class BehaviorProgram:
    rules: tuple[Rule, ...] = ()
    definitions: dict[str, Definition] = field(default_factory=dict)


@dataclass(frozen=True)
class BoundProgram:
    """A program with every name resolved against a configuration."""

    program: BehaviorProgram
    signal_topics: dict[str, str]  # condition signal -> processing-layer topic
    priorities: dict[str, float]  # definition name -> scheduling priority
    actuators: dict[str, ActuatorSpec]
    audio_actuator: str | None
    speed_words: dict[str, float]


# ---------------------------------------------------------------------------
# lexer


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str  # keyword text, or one of IDENT NUMBER STRING OP LPAREN RPAREN NEWLINE EOF
    text: str
    value: object
    span: SourceSpan


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        start_count = len(tokens)
        col = 0
        n = len(line)
        while col < n:
            ch = line[col]
            if ch in " \t\r":
                col += 1
                continue
            if ch == "#":
                break
            span = SourceSpan(line_no, col + 1)
            if ch == "(":
                tokens.append(_Token("LPAREN", "(", None, span))
                col += 1
                continue
            if ch == ")":
                tokens.append(_Token("RPAREN", ")", None, span))
                col += 1
                continue
            if ch == '"':
                end = line.find('"', col + 1)
                if end < 0:
                    raise ParseError("unterminated string", span)
                literal = line[col + 1 : end]
                tokens.append(
                    _Token("STRING", literal, literal, SourceSpan(line_no, col + 1, end - col + 1))
                )
                col = end + 1
                continue
            two = line[col : col + 2]
            if two in _COMPARISON_OPS:
                tokens.append(_Token("OP", two, two, SourceSpan(line_no, col + 1, 2)))
                col += 2
                continue
            if ch in "<>":
                tokens.append(_Token("OP", ch, ch, span))
                col += 1
                continue
            m = _UPPER_RE.match(line, col)
            if m:
                word = m.group()
                if word not in _KEYWORDS:
                    raise ParseError(f"unknown keyword {word!r}", SourceSpan(line_no, col + 1, len(word)))
                tokens.append(_Token(word, word, None, SourceSpan(line_no, col + 1, len(word))))
                col = m.end()
                continue
            m = _IDENT_RE.match(line, col)
            if m:
                word = m.group()
                tokens.append(_Token("IDENT", word, word, SourceSpan(line_no, col + 1, len(word))))
                col = m.end()
                continue
            m = _NUMBER_RE.match(line, col)
            if m:
                literal = m.group()
                tokens.append(
                    _Token("NUMBER", literal, float(literal), SourceSpan(line_no, col + 1, len(literal)))
                )
                col = m.end()
                continue
            raise ParseError(f"unexpected character {ch!r}", span)
        if len(tokens) > start_count:
            tokens.append(_Token("NEWLINE", "\n", None, SourceSpan(line_no, n + 1)))
    last_line = text.count("\n") + 1
    tokens.append(_Token("EOF", "", None, SourceSpan(last_line, 1)))
    return tokens


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self._tokens = tokens
        self._pos = 0

    @property
    def tok(self) -> _Token:
        return self._tokens[self._pos]

    def at(self, kind: str) -> bool:
        return self.tok.kind == kind

    def advance(self) -> _Token:
        tok = self.tok
        if tok.kind != "EOF":
            self._pos += 1
        return tok

    def error(self, expected: set[str]) -> ParseError:
        tok = self.tok
        found = tok.kind if tok.kind != "IDENT" else f"identifier {tok.text!r}"
        wanted = ", ".join(sorted(expected))
        return ParseError(f"expected {wanted}, found {found}", tok.span, frozenset(expected))

    def expect(self, kind: str) -> _Token:
        if self.at(kind):
            return self.advance()
        raise self.error({kind})

    def expect_end_of_line(self) -> None:
        if self.at("EOF"):
            return
        self.expect("NEWLINE")

    def skip_newlines(self) -> None:
        while self.at("NEWLINE"):
            self.advance()

    # -- grammar productions

    def program(self) -> BehaviorProgram:
        rules: list[Rule] = []
        definitions: dict[str, Definition] = {}
        self.skip_newlines()
        while not self.at("EOF"):
            if self.at("WHEN"):
                rules.append(self.rule())
            elif self.at("DEFINE"):
                definition = self.definition()
                if definition.name in definitions:
                    raise ParseError(
                        f"duplicate DEFINE {definition.name!r}",
                        definition.span or self.tok.span,
                    )
                definitions[definition.name] = definition
            else:
                raise self.error({"WHEN", "DEFINE"})
            self.skip_newlines()
        return BehaviorProgram(tuple(rules), definitions)

    def rule(self) -> Rule:
        start = self.expect("WHEN")
        condition = self.condition()
        self.expect("NEWLINE")
        self.expect("DO")
        then_tok = self.expect("IDENT")
        self.expect_end_of_line()
        self.skip_newlines()
        else_name = None
        else_span = None
        if self.at("ELSE"):
            self.advance()
            self.expect("NEWLINE")
            self.skip_newlines()
            self.expect("DO")
            else_tok = self.expect("IDENT")
            else_name = else_tok.text
            else_span = else_tok.span
            self.expect_end_of_line()
            self.skip_newlines()
        self.expect("END")
        self.expect_end_of_line()
        return Rule(
            condition=condition,
            then_behavior=then_tok.text,
            else_behavior=else_name,
            span=start.span,
            then_span=then_tok.span,
            else_span=else_span,
        )

    def condition(self) -> Condition:
        left = self.and_expr()
        while self.at("OR"):
            self.advance()
            left = Or(left, self.and_expr())
        return left

    def and_expr(self) -> Condition:
        left = self.unary()
        while self.at("AND"):
            self.advance()
            left = And(left, self.unary())
        return left

    def unary(self) -> Condition:
        if self.at("NOT"):
            self.advance()
            return Not(self.unary())
        if self.at("LPAREN"):
            self.advance()
            inner = self.condition()
            self.expect("RPAREN")
            return inner
        return self.comparison()

    def comparison(self) -> Comparison:
        if not self.at("IDENT"):
            raise self.error({"IDENT", "NOT", "LPAREN"})
        signal = self.advance()
        level = False
        if self.at("LEVEL"):
            self.advance()
            level = True
        if not self.at("OP"):
            raise self.error(set(_COMPARISON_OPS))
        op = self.advance()
        number = self.expect("NUMBER")
        return Comparison(signal.text, op.text, float(number.value), level, span=signal.span)  # type: ignore[arg-type]

    def definition(self) -> Definition:
        start = self.expect("DEFINE")
        name = self.expect("IDENT")
        self.expect("NEWLINE")
        body: list[Statement] = []
        self.skip_newlines()
        while not self.at("END"):
            body.append(self.statement())
            self.skip_newlines()
        self.expect("END")
        self.expect_end_of_line()
        return Definition(name.text, tuple(body), span=start.span)

    def statement(self) -> Statement:
        if self.at("MOVE"):
            self.advance()
            actuator = self.expect("IDENT")
            if self.at("SLOWLY") or self.at("QUICKLY"):
                word = self.advance()
                speed: float | str = word.kind.lower()
            elif self.at("NUMBER"):
                number = self.advance()
                speed = float(number.value)  # type: ignore[arg-type]
                if not (0.0 <= speed <= 1.0):
                    raise ParseError("MOVE speed must be within [0, 1]", number.span)
            else:
                raise self.error({"SLOWLY", "QUICKLY", "NUMBER"})
            self.expect_end_of_line()
            return Move(actuator.text, speed, span=actuator.span)
        if self.at("PLAY"):
            self.advance()
            kind_tok = self.tok
            if not (self.at("IDENT") and kind_tok.text == "sound"):
                raise self.error({"sound"})
            self.advance()
            resource = self.expect("STRING")
            self.expect_end_of_line()
            return Play(str(resource.value), span=resource.span)
        if self.at("SET"):
            self.advance()
            actuator = self.expect("IDENT")
            number = self.expect("NUMBER")
            self.expect_end_of_line()
            return Set(actuator.text, float(number.value), span=actuator.span)  # type: ignore[arg-type]
        if self.at("WAIT"):
            self.advance()
            number = self.expect("NUMBER")
            amount = float(number.value)  # type: ignore[arg-type]
            if amount != int(amount) or amount < 1:
                raise ParseError("WAIT duration must be a positive integer", number.span)
            unit_tok = self.tok
            if not (self.at("IDENT") and unit_tok.text in ("ms", "us")):
                raise self.error({"ms", "us"})
            self.advance()
            duration_us = int(amount) * (1000 if unit_tok.text == "ms" else 1)
            self.expect_end_of_line()
            return Wait(duration_us, span=number.span)
        raise self.error({"MOVE", "PLAY", "SET", "WAIT", "END"})


def parse_program(text: str) -> BehaviorProgram:
    """Parse DSL source into a program; raises ParseError with a source span."""
    return _Parser(_lex(text)).program()


# ---------------------------------------------------------------------------
# canonical formatter

_PREC_OR = 1
_PREC_AND = 2
_PREC_NOT = 3


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _format_condition(cond: Condition, parent_prec: int = 0, right_side: bool = False) -> str:
    if isinstance(cond, Comparison):
        level = " LEVEL" if cond.level else ""
        return f"{cond.signal}{level} {cond.op} {_format_number(cond.value)}"
    if isinstance(cond, Not):
        inner = _format_condition(cond.inner, _PREC_NOT)
        return f"NOT {inner}"
    if isinstance(cond, And):
        prec, word = _PREC_AND, "AND"
    else:
        prec, word = _PREC_OR, "OR"
    text = (
        f"{_format_condition(cond.left, prec)} {word} "
        f"{_format_condition(cond.right, prec, right_side=True)}"
    )
    if prec < parent_prec or (prec == parent_prec and right_side):
        return f"({text})"
    return text


def _format_statement(stmt: Statement) -> str:
    if isinstance(stmt, Move):
        if isinstance(stmt.speed, str):
            speed = stmt.speed.upper()
        else:
            speed = _format_number(stmt.speed)
        return f"MOVE {stmt.actuator} {speed}"
    if isinstance(stmt, Play):
        return f'PLAY sound "{stmt.resource}"'
    if isinstance(stmt, Set):
        return f"SET {stmt.actuator} {_format_number(stmt.value)}"
    if stmt.duration_us % 1000 == 0:
        return f"WAIT {stmt.duration_us // 1000} ms"
    return f"WAIT {stmt.duration_us} us"


def format_program(program: BehaviorProgram) -> str:
    """Pretty-print a program canonically; re-parsing reproduces the AST."""
    blocks: list[str] = []
    for rule in program.rules:
        lines = [f"WHEN {_format_condition(rule.condition)}", f"DO {rule.then_behavior}"]
        if rule.else_behavior is not None:
            lines.append("ELSE")
            lines.append(f"DO {rule.else_behavior}")
        lines.append("END")
        blocks.append("\n".join(lines))
    for definition in program.definitions.values():
        lines = [f"DEFINE {definition.name}"]
        for stmt in definition.body:
            lines.append(f"    {_format_statement(stmt)}")
        lines.append("END")
        blocks.append("\n".join(lines))
    if not blocks:
        return ""
    return "\n\n".join(blocks) + "\n"


# ---------------------------------------------------------------------------
# evaluation

_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def eval_condition(cond: Condition, snapshot: Mapping[str, float]) -> bool:
    """Evaluate a condition against the latest signal values."""
    match cond:
        case Comparison(signal=signal, op=op, value=value):
            if signal not in snapshot:
                raise MissingSignalError(signal)
            return _OPS[op](snapshot[signal], value)
        case And(left=left, right=right):
            return eval_condition(left, snapshot) and eval_condition(right, snapshot)
        case Or(left=left, right=right):
            return eval_condition(left, snapshot) or eval_condition(right, snapshot)
        case Not(inner=inner):
            return not eval_condition(inner, snapshot)
    raise TypeError(f"not a condition: {cond!r}")


def condition_signals(cond: Condition) -> list[tuple[str, SourceSpan | None]]:
    """The signals a condition references, in first-appearance order."""
    out: list[tuple[str, SourceSpan | None]] = []
    seen: set[str] = set()

    def walk(node: Condition) -> None:
        match node:
            case Comparison(signal=signal, span=span):
                if signal not in seen:
                    seen.add(signal)
                    out.append((signal, span))
            case And(left=left, right=right) | Or(left=left, right=right):
                walk(left)
                walk(right)
            case Not(inner=inner):
                walk(inner)

    walk(cond)
    return out


def passthrough_topic(sensor: str) -> str:
    """Processing-layer topic carrying a sensor's gated values when no
    algorithm consumes it."""
    return f"{sensor}{PASSTHROUGH_TOPIC_SUFFIX}"


# ---------------------------------------------------------------------------
# binding


def bind_program(
    program: BehaviorProgram,
    config: SystemConfig,
    speed_words: Mapping[str, float] | None = None,
) -> BoundProgram:
    """Resolve signals, behaviors, and actuators against a validated config.

    Signals bind to the output topic of the first algorithm consuming that
    sensor, to the sensor's passthrough topic otherwise, or directly to an
    algorithm output named verbatim.  Definitions take the priority of the
    config behavior with the same name when one exists; the rest draw from
    the default pool over the definition listing.  All failures are collected
    and raised together as BindErrors.
    """
    from .config import fill_priorities  # local to keep module-level imports slim

    errors: list[BindError] = []
    speeds = dict(SPEED_WORDS if speed_words is None else speed_words)

    sensor_topic: dict[str, str] = {}
    algorithm_outputs = {alg.output for alg in config.algorithms}
    for alg in config.algorithms:
        for sensor in alg.inputs:
            sensor_topic.setdefault(sensor, alg.output)
    for sensor in config.sensors:
        sensor_topic.setdefault(sensor.name, passthrough_topic(sensor.name))

    signal_topics: dict[str, str] = {}
    for rule in program.rules:
        for signal, span in condition_signals(rule.condition):
            if signal in signal_topics:
                continue
            if signal in sensor_topic:
                signal_topics[signal] = sensor_topic[signal]
            elif signal in algorithm_outputs:
                signal_topics[signal] = signal
            else:
                errors.append(BindError(f"{signal}: unknown signal", span))
        for target, span in ((rule.then_behavior, rule.then_span), (rule.else_behavior, rule.else_span)):
            if target is not None and target not in program.definitions:
                errors.append(BindError(f"{target}: no DEFINE block for DO target", span))

    behavior_specs = {b.name: b for b in config.behaviors}
    definition_names = list(program.definitions)
    declared: list[float | None] = []
    for name in definition_names:
        spec = behavior_specs.get(name)
        declared.append(spec.priority if spec is not None else None)
    priorities = dict(zip(definition_names, fill_priorities(declared)))

    actuator_specs = {a.name: a for a in config.actuators}
    audio = [a.name for a in config.actuators if a.kind == "audio"]
    used_actuators: dict[str, ActuatorSpec] = {}
    needs_audio = False
    for definition in program.definitions.values():
        for stmt in definition.body:
            if isinstance(stmt, (Move, Set)):
                spec = actuator_specs.get(stmt.actuator)
                if spec is None:
                    errors.append(BindError(f"{stmt.actuator}: unknown actuator", stmt.span))
                else:
                    used_actuators[stmt.actuator] = spec
            elif isinstance(stmt, Play):
                needs_audio = True
                if len(audio) != 1:
                    errors.append(
                        BindError(
                            f"PLAY requires exactly one audio actuator, found {len(audio)}",
                            stmt.span,
                        )
                    )

    if errors:
        raise BindErrors(errors)

    # needs_audio implies exactly one audio actuator here (errored otherwise)
    audio_name = audio[0] if len(audio) == 1 else None
    if audio_name is not None:
        used_actuators.setdefault(audio_name, actuator_specs[audio_name])
    return BoundProgram(
        program=program,
        signal_topics=signal_topics,
        priorities=priorities,
        actuators=used_actuators,
        audio_actuator=audio_name,
        speed_words=speeds,
    )
