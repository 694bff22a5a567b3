import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guiact.action import (
    ActionType,
    Direction,
    FormatError,
    InvariantViolation,
    SchemaViolation,
    SpecialKey,
    TaskStatus,
    UnifiedAction,
    action_type_of,
    canonicalize,
    has_unquoted_whitespace,
    parse_unified,
    serialize_compact,
    validate,
)

GOLDEN = [
    b'{"POINT":[480,320]}',
    b'{"POINT":[480,320],"duration":1000}',
    b'{"POINT":[500,200],"to":"down"}',
    b'{"PRESS":"HOME"}',
    b'{"TYPE":"Hello, world!"}',
    b'{"duration":500}',
    b'{"STATUS":"finish"}',
]

coords = st.tuples(st.integers(0, 1000), st.integers(0, 1000))
texts = st.text(max_size=20)
statuses = st.sampled_from(list(TaskStatus))
durations = st.none() | st.integers(0, 100_000)


@st.composite
def actions(draw):
    kind = draw(st.sampled_from(["point", "swipe", "type", "press", "bare"]))
    kw = {"status": draw(statuses), "thought": draw(st.none() | texts)}
    if kind in ("point", "swipe"):
        kw["point"] = draw(coords)
        kw["duration"] = draw(durations)
        if kind == "swipe":
            kw["to"] = draw(st.sampled_from(list(Direction)) | coords)
    elif kind == "type":
        kw["type_text"] = draw(texts)
        kw["duration"] = draw(durations)
    elif kind == "press":
        kw["press"] = draw(st.sampled_from([SpecialKey.HOME, SpecialKey.BACK, SpecialKey.ENTER]))
    else:
        kw["duration"] = draw(durations)
    return UnifiedAction(**kw)


def test_parse_point():
    a = parse_unified(b'{"POINT":[480,320]}')
    assert a.point == (480, 320)
    assert a.status is TaskStatus.CONTINUE
    assert a.to is None and a.duration is None and a.press is None and a.type_text is None


def test_parse_status_only():
    a = parse_unified('{"STATUS":"finish"}')
    assert a == UnifiedAction(status=TaskStatus.FINISH)
    assert action_type_of(a) is ActionType.STATUS_ONLY


@pytest.mark.parametrize("text,err", [
    ('{"POINT":[1001,0]}', SchemaViolation),
    ('{"POINT":[-1,0]}', SchemaViolation),
    ('{"POINT":[1.5,2]}', SchemaViolation),
    ('{"POINT":[1,2,3]}', SchemaViolation),
    ('{"POINT":[true,2]}', SchemaViolation),
    ('{"PRESS":"MENU"}', SchemaViolation),
    ('{"PRESS":"RECENT"}', SchemaViolation),
    ('{"STATUS":"done"}', SchemaViolation),
    ('{"to":"down"}', SchemaViolation),
    ('{"POINT":[1,2],"PRESS":"HOME"}', SchemaViolation),
    ('{"TYPE":"a","PRESS":"HOME"}', SchemaViolation),
    ('{"duration":-5}', SchemaViolation),
    ('{"duration":1.0}', SchemaViolation),
    ('{"CLICK":[1,2]}', SchemaViolation),
    ('{"PRESS":"HOME","PRESS":"BACK"}', SchemaViolation),
    ('[1,2]', SchemaViolation),
    ('{POINT: [1,2]}', FormatError),
    ('{"POINT":[480', FormatError),
    ('{"duration":NaN}', FormatError),
    ('', FormatError),
    (b'\xff\xfe', FormatError),
])
def test_parse_rejects(text, err):
    with pytest.raises(err):
        parse_unified(text)


def test_recent_is_evaluation_only():
    a = parse_unified('{"PRESS":"RECENT"}', evaluation=True)
    assert a.press is SpecialKey.RECENT
    with pytest.raises(InvariantViolation):
        serialize_compact(a)
    assert serialize_compact(a, evaluation=True) == b'{"PRESS":"RECENT"}'


@pytest.mark.parametrize("text,verdict", [
    ('{"POINT":[500,200],"to":"down"}', "valid"),
    ('{"PRESS":"MENU"}', "schema_violation"),
    ('{POINT: [1,2]}', "format_error"),
])
def test_validate_examples(text, verdict):
    rep = validate(text)
    assert rep.verdict == verdict
    assert rep.ok == (verdict == "valid")
    assert (rep.detail == "") == rep.ok


def test_require_thought():
    assert validate('{"POINT":[1,2]}', require_thought=True).verdict == "schema_violation"
    assert validate('{"thought":"tap it","POINT":[1,2]}', require_thought=True).ok


def test_serialize_examples():
    assert serialize_compact(UnifiedAction(point=(480, 320), duration=1000)) == b'{"POINT":[480,320],"duration":1000}'
    assert serialize_compact(UnifiedAction(press=SpecialKey.HOME)) == b'{"PRESS":"HOME"}'


@pytest.mark.parametrize("line", GOLDEN)
def test_golden_round_trip(line):
    assert serialize_compact(parse_unified(line)) == line


def test_key_order_and_raw_utf8():
    a = UnifiedAction(thought="想", point=(1, 2), to=(3, 4), duration=900, status=TaskStatus.FINISH)
    assert serialize_compact(a) == '{"thought":"想","POINT":[1,2],"to":[3,4],"duration":900,"STATUS":"finish"}'.encode()
    assert serialize_compact(UnifiedAction(type_text="返回")) == '{"TYPE":"返回"}'.encode("utf-8")


def test_default_duration_dropped_only_when_redundant():
    assert serialize_compact(UnifiedAction(point=(1, 2), duration=200)) == b'{"POINT":[1,2]}'
    assert serialize_compact(UnifiedAction(duration=200)) == b'{"duration":200}'
    assert serialize_compact(UnifiedAction(status=TaskStatus.CONTINUE)) == b"{}"


def test_constructor_rejects_bad_actions():
    with pytest.raises(InvariantViolation):
        UnifiedAction(to=Direction.UP)
    with pytest.raises(InvariantViolation):
        UnifiedAction(point=(1, 1001))
    with pytest.raises(InvariantViolation):
        UnifiedAction(press="MENU")


@pytest.mark.parametrize("text,kind", [
    ('{"POINT":[480,320]}', ActionType.CLICK),
    ('{"POINT":[480,320],"duration":200}', ActionType.CLICK),
    ('{"POINT":[480,320],"duration":201}', ActionType.LONG_PRESS),
    ('{"POINT":[480,320],"duration":1000}', ActionType.LONG_PRESS),
    ('{"POINT":[500,200],"to":"down"}', ActionType.SWIPE),
    ('{"POINT":[500,200],"to":[500,800],"duration":1000}', ActionType.SWIPE),
    ('{"TYPE":"x"}', ActionType.TYPE),
    ('{"PRESS":"BACK"}', ActionType.PRESS),
    ('{"duration":500}', ActionType.WAIT),
    ('{"STATUS":"impossible"}', ActionType.STATUS_ONLY),
    ('{"POINT":[1,2],"STATUS":"finish"}', ActionType.CLICK),
])
def test_action_type(text, kind):
    assert action_type_of(parse_unified(text)) is kind


def test_status_compound_flag():
    assert parse_unified('{"POINT":[1,2],"STATUS":"finish"}').is_status_compound
    assert not parse_unified('{"STATUS":"finish"}').is_status_compound


def test_thought_ignored_by_equality():
    assert parse_unified('{"thought":"a","POINT":[1,2]}') == parse_unified('{"POINT":[1,2]}')


@given(actions())
def test_serialized_output_is_compact_and_round_trips(a):
    data = serialize_compact(a)
    assert not has_unquoted_whitespace(data)
    assert parse_unified(data) == canonicalize(a)
    assert serialize_compact(parse_unified(data)) == data


@given(actions(), texts)
def test_type_stable_under_thought(a, thought):
    from dataclasses import replace
    assert action_type_of(replace(a, thought=thought)) is action_type_of(a)


@settings(max_examples=300)
@given(st.text(max_size=40) | st.binary(max_size=40))
def test_validate_agrees_with_parse(blob):
    rep = validate(blob)
    try:
        parse_unified(blob)
    except (FormatError, SchemaViolation) as e:
        assert rep.verdict == e.category
    else:
        assert rep.ok


def test_unquoted_whitespace_detector():
    assert has_unquoted_whitespace(b'{"a": 1}')
    assert not has_unquoted_whitespace(b'{"a":"x y\\" z"}')
    assert has_unquoted_whitespace(b'{"a":"x\\\\" ,"b":1}')
