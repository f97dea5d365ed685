"""Reasoning-path grammar: parsing, serialization, grounding, typing."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgrelay.errors import HopOutOfRange, ParseError, UnknownEntity
from kgrelay.kg import DATETIME, NUMERIC, Literal
from kgrelay.reasoning import (
    ComparisonOp,
    Constraint,
    EntityMatch,
    NumericCompare,
    ReasoningPath,
    StringMatch,
    canonicalize,
    classify_threshold,
    ground_reasoning_path,
    parse_reasoning_path,
    predicted_depth,
    serialize_reasoning_path,
)
from conftest import WORKED_TEXT
from oracle import random_ungrounded_path


def test_parse_worked_example():
    rp = parse_reasoning_path(WORKED_TEXT)
    assert rp.topic_surface == "USA"
    assert rp.path == ("country.presidents", "president.office_holder")
    assert rp.depth == 2
    assert predicted_depth(rp) == 2
    assert rp.constraints == (
        Constraint(2, "education.institution", EntityMatch("Harvard")),
        Constraint(
            2,
            "position.from",
            NumericCompare(ComparisonOp.GE, Literal(DATETIME, "2000")),
        ),
    )
    assert rp.topic_entity is None


def test_parse_single_hop_no_constraints():
    rp = parse_reasoning_path("TOPIC: USA\nPATH: country.presidents")
    assert rp.path == ("country.presidents",)
    assert rp.constraints == ()


@pytest.mark.parametrize(
    "body,value",
    [
        ("entity=New York", EntityMatch("New York")),
        ('op=EQ; value="7"', NumericCompare(ComparisonOp.EQ, Literal(NUMERIC, "7"))),
        ('op=LT; value="1999-04"',
         NumericCompare(ComparisonOp.LT, Literal(DATETIME, "1999-04"))),
        ("op=ARGMAX", NumericCompare(ComparisonOp.ARGMAX)),
        ("op=ARGMIN", NumericCompare(ComparisonOp.ARGMIN)),
        ('string="Main St."', StringMatch("Main St.")),
        ('string="say \\"hi\\""', StringMatch('say "hi"')),
    ],
)
def test_parse_constraint_bodies(body, value):
    rp = parse_reasoning_path(
        f"TOPIC: A\nPATH: r\nCONSTRAINT: hop=1; rel=s.t; {body}"
    )
    assert rp.constraints == (Constraint(1, "s.t", value),)


@pytest.mark.parametrize(
    "text,line",
    [
        ("", 0),
        ("PATH: r", 1),                               # no TOPIC
        ("TOPIC: A", 1),                              # no PATH
        ("TOPIC: A\nTOPIC: B", 2),
        ("TOPIC: A\nPATH: r ->", 2),                  # empty relation
        ("TOPIC: A\nPATH: two words", 2),
        ("TOPIC: A\nPATH: r\nstray line", 3),
        ("TOPIC: A\nPATH: r\nCONSTRAINT: hop=1; rel=s; op=XX; value=\"1\"", 3),
        ("TOPIC: A\nPATH: r\nCONSTRAINT: hop=1; rel=s; op=EQ; value=7", 3),
        ("TOPIC: A\nPATH: r\nCONSTRAINT: hop=1; rel=s; op=EQ; value=\"x\"", 3),
        ("TOPIC: A\nPATH: r\nCONSTRAINT: hop=1; rel=s; entity=", 3),
        ("TOPIC: A\nPATH: r\nCONSTRAINT: rel=s; entity=B", 3),
    ],
)
def test_parse_errors(text, line):
    with pytest.raises(ParseError) as err:
        parse_reasoning_path(text)
    if line:
        assert err.value.line == line


def test_parse_hop_out_of_range():
    with pytest.raises(HopOutOfRange):
        parse_reasoning_path("TOPIC: A\nPATH: r\nCONSTRAINT: hop=2; rel=s; entity=B")
    with pytest.raises(HopOutOfRange):
        parse_reasoning_path("TOPIC: A\nPATH: r\nCONSTRAINT: hop=0; rel=s; entity=B")


def test_constructor_validates():
    with pytest.raises(ValueError):
        ReasoningPath("", ("r",))
    with pytest.raises(ValueError):
        ReasoningPath("A", ())
    with pytest.raises(HopOutOfRange):
        ReasoningPath("A", ("r",), (Constraint(3, "s", EntityMatch("B")),))
    with pytest.raises(ValueError):
        NumericCompare(ComparisonOp.ARGMAX, Literal(NUMERIC, "1"))
    with pytest.raises(ValueError):
        NumericCompare(ComparisonOp.GE)
    with pytest.raises(ValueError):
        NumericCompare(ComparisonOp.GE, Literal("string", "x"))


# --- threshold typing ---

@pytest.mark.parametrize(
    "text,kind",
    [
        ("2000", DATETIME),       # four digits read as a year
        ("1999-04", DATETIME),
        ("1999-04-30", DATETIME),
        ("200", NUMERIC),
        ("20000", NUMERIC),
        ("3.5", NUMERIC),
        ("-12", NUMERIC),
        ("1e3", NUMERIC),
        ("0", NUMERIC),
    ],
)
def test_classify_threshold(text, kind):
    assert classify_threshold(text) == Literal(kind, text)


@pytest.mark.parametrize("text", ["abc", "NaN", "Infinity", "-Inf", "1999-4", ""])
def test_classify_threshold_rejects(text):
    with pytest.raises(ParseError):
        classify_threshold(text)


# --- serialization ---

def test_serialize_worked_example_is_canonical():
    rp = parse_reasoning_path(WORKED_TEXT)
    assert serialize_reasoning_path(rp) == (
        "TOPIC: USA\n"
        "PATH: country.presidents -> president.office_holder\n"
        "CONSTRAINT: hop=2; rel=education.institution; entity=Harvard\n"
        'CONSTRAINT: hop=2; rel=position.from; op=GE; value="2000"'
    )


def test_serialize_sorts_constraints():
    shuffled = (
        "TOPIC: USA\n"
        "PATH: a -> b\n"
        'CONSTRAINT: hop=2; rel=z.z; string="s"\n'
        "CONSTRAINT: hop=1; rel=a.a; entity=X\n"
        "CONSTRAINT: hop=2; rel=a.a; op=ARGMAX"
    )
    out = serialize_reasoning_path(parse_reasoning_path(shuffled))
    assert out.splitlines()[2:] == [
        "CONSTRAINT: hop=1; rel=a.a; entity=X",
        "CONSTRAINT: hop=2; rel=a.a; op=ARGMAX",
        'CONSTRAINT: hop=2; rel=z.z; string="s"',
    ]


def test_canonicalize_retypes_thresholds():
    # A numeric literal whose text is date-shaped becomes a date.
    rp = ReasoningPath(
        "A", ("r",),
        (Constraint(1, "s", NumericCompare(ComparisonOp.EQ, Literal(NUMERIC, "2000"))),),
    )
    fixed = canonicalize(rp)
    assert fixed.constraints[0].value.threshold == Literal(DATETIME, "2000")
    assert canonicalize(fixed) == fixed  # idempotent


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 10_000))
def test_parse_serialize_roundtrip(seed):
    from dataclasses import replace

    rng = random.Random(seed)
    rp = random_ungrounded_path(rng)
    text = serialize_reasoning_path(rp)
    again = parse_reasoning_path(text)
    # the text form carries no grounding, on topic or constraint entities
    stripped = tuple(
        replace(c, value=replace(c.value, entity=None))
        if isinstance(c.value, EntityMatch)
        else c
        for c in rp.constraints
    )
    assert again == canonicalize(ReasoningPath(rp.topic_surface, rp.path, stripped))
    assert serialize_reasoning_path(again) == text


def test_skeleton_drops_constraints(worked_path):
    bare = worked_path.skeleton()
    assert bare.constraints == ()
    assert bare.path == worked_path.path
    assert bare.topic_entity == worked_path.topic_entity


# --- grounding ---

def test_ground_worked_example(presidents):
    rp = ground_reasoning_path(presidents, parse_reasoning_path(WORKED_TEXT))
    assert rp.topic_entity == "USA"
    assert rp.constraints[0].value.entity == "Harvard"


def test_ground_topic_strict(presidents):
    rp = parse_reasoning_path("TOPIC: Atlantis\nPATH: r")
    with pytest.raises(UnknownEntity):
        ground_reasoning_path(presidents, rp)


def test_ground_constraint_lenient(presidents):
    rp = parse_reasoning_path(
        "TOPIC: usa\nPATH: country.presidents\n"
        "CONSTRAINT: hop=1; rel=x.y; entity=Atlantis"
    )
    grounded = ground_reasoning_path(presidents, rp)
    assert grounded.topic_entity == "USA"
    assert grounded.constraints[0].value.entity is None
    assert grounded.constraints[0].value.surface == "Atlantis"
