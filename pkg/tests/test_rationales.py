import pytest
from hypothesis import given, strategies as st

from chartsynth.rationales import (
    BadBindingError,
    DuplicateBindingError,
    MissingAnswerError,
    RationaleError,
    RationaleProgram,
    RationaleStep,
    RationaleSyntaxError,
    ToolCall,
    UndefinedBindingError,
    UnknownOpError,
    VqaCall,
    parse_rationale,
    print_rationale,
)

THREE_STEP = (
    'ans_0=VQA("What is the value of 2002?")\n'
    'ans_1=VQA("What is the value of 2003?")\n'
    "ans=avg(ans_0, ans_1)"
)


def test_three_step_program_parses():
    program = parse_rationale(THREE_STEP)
    assert len(program.steps) == 3
    assert program.steps[0].call == VqaCall("What is the value of 2002?")
    assert program.steps[2].call == ToolCall("avg", ("ans_0", "ans_1"))


def test_minimal_single_step():
    program = parse_rationale('ans=VQA("What color is X?")')
    assert len(program.steps) == 1


def test_undefined_binding_diagnostic():
    with pytest.raises(UndefinedBindingError, match="ans_0"):
        parse_rationale("ans=avg(ans_0)")


def test_duplicate_binding_diagnostic():
    with pytest.raises(DuplicateBindingError):
        parse_rationale('ans_0=VQA("a?")\nans_0=VQA("b?")\nans=avg(ans_0)')


def test_missing_final_answer_diagnostic():
    with pytest.raises(MissingAnswerError):
        parse_rationale('ans_0=VQA("a?")')
    with pytest.raises(MissingAnswerError):
        parse_rationale('ans=VQA("a?")\nans_0=VQA("b?")')


def test_unknown_op_diagnostic():
    with pytest.raises(UnknownOpError, match="frobnicate"):
        parse_rationale("ans=frobnicate(1, 2)")


def test_syntax_error_has_line_number():
    with pytest.raises(RationaleSyntaxError) as err:
        parse_rationale('ans_0=VQA("ok?")\nansavg(ans_0)')
    assert err.value.line == 2


def test_bad_binding_name():
    with pytest.raises(BadBindingError):
        parse_rationale('result=VQA("x?")\nans=avg(1)')


def test_arity_checks():
    with pytest.raises(RationaleError, match="2 args"):
        parse_rationale("ans=diff(1)")
    with pytest.raises(RationaleError, match="at least 1"):
        parse_rationale("ans=sum()")


def test_semicolon_and_spacing_tolerance():
    messy = ' ans_0 = vqa( "What is the value of a?" ) ; ans = SUM(ans_0,  2 ) '
    program = parse_rationale(messy)
    assert print_rationale(program) == (
        'ans_0 = VQA("What is the value of a?")\nans = sum(ans_0, 2)'
    )


def test_number_literals_allowed():
    program = parse_rationale("ans_0=VQA(\"v?\")\nans=ratio(ans_0, 2.5)")
    assert program.steps[1].call.args == ("ans_0", 2.5)


def test_escaped_quotes_round_trip():
    program = parse_rationale('ans=VQA("say \\"hi\\" now?")')
    assert program.steps[0].call.question == 'say "hi" now?'
    assert parse_rationale(print_rationale(program)) == program


def test_print_canonical_form():
    program = RationaleProgram(
        steps=(RationaleStep("ans", VqaCall("What color is X?")),)
    )
    assert print_rationale(program) == 'ans = VQA("What color is X?")'


def test_print_parse_idempotent_on_messy_input():
    messy = 'ans_0=VQA("v of a?");ans_1=VQA("v of b?")\nans= Avg( ans_0 ,ans_1 )'
    once = print_rationale(parse_rationale(messy))
    twice = print_rationale(parse_rationale(once))
    assert once == twice


def test_question_with_separator_characters_round_trips():
    tricky = 'ans = VQA("is a; b # \\"c\\" bigger?")'
    program = parse_rationale(tricky)
    assert program.steps[0].call.question == 'is a; b # "c" bigger?'
    assert parse_rationale(print_rationale(program)) == program


def test_multiline_question_rejected():
    with pytest.raises(RationaleError, match="single-line"):
        RationaleProgram(steps=(RationaleStep("ans", VqaCall("a\nb?")),))


def test_program_invariants_enforced_at_construction():
    with pytest.raises(RationaleError):
        RationaleProgram(steps=())
    with pytest.raises(MissingAnswerError):
        RationaleProgram(steps=(RationaleStep("ans_0", VqaCall("x?")),))
    with pytest.raises(UndefinedBindingError):
        RationaleProgram(steps=(RationaleStep("ans", ToolCall("sum", ("ans_9",))),))


# --- properties -----------------------------------------------------------------

_questions = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Zl", "Zp")),
    min_size=1,
    max_size=40,
)
_ops2 = st.sampled_from(["diff", "ratio", "times", "compare_greater", "compare_less"])
_opsN = st.sampled_from(["sum", "avg", "min", "max", "count"])


@st.composite
def rationale_programs(draw):
    n_vqa = draw(st.integers(1, 4))
    steps = [
        RationaleStep(f"ans_{i}", VqaCall(draw(_questions))) for i in range(n_vqa)
    ]
    names = [f"ans_{i}" for i in range(n_vqa)]
    n_tools = draw(st.integers(0, 3))
    for t in range(n_tools):
        target = "ans" if t == n_tools - 1 else f"ans_{n_vqa + t}"
        args_pool = st.sampled_from(names) | st.floats(
            allow_nan=False, allow_infinity=False, width=32
        )
        if draw(st.booleans()):
            call = ToolCall(draw(_ops2), (draw(args_pool), draw(args_pool)))
        else:
            call = ToolCall(draw(_opsN), tuple(draw(st.lists(args_pool, min_size=1, max_size=4))))
        steps.append(RationaleStep(target, call))
        names.append(target)
    if n_tools == 0:
        steps[-1] = RationaleStep("ans", steps[-1].call)
    return RationaleProgram(steps=tuple(steps))


@given(rationale_programs())
def test_round_trip_identity(program):
    assert parse_rationale(print_rationale(program)) == program
