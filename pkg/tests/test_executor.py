import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from chartsynth.charts import ChartSpec, Entry, Group
from chartsynth.executor import (
    AnswererError,
    CoercionError,
    GroundTruthAnswerer,
    ScriptedAnswerer,
    ServiceAnswerer,
    coerce_numeric,
    execute,
    ground_truth_answer,
)
from chartsynth.rationales import parse_rationale


def test_scripted_average():
    program = parse_rationale(
        'ans_0=VQA("a?")\nans_1=VQA("b?")\nans=avg(ans_0, ans_1)'
    )
    answerer = ScriptedAnswerer({"a?": "4", "b?": "6"})
    trace = execute(program, "img", answerer)
    assert trace.ok and trace.answer == "5"
    assert [s.value for s in trace.steps] == ["4", "6", "5"]


def test_total_of_two_series_question(two_series_spec):
    # the canonical two-lookup-plus-sum decomposition
    program = parse_rationale(
        'ans_0=VQA("What is the value of Democrats in 2010?")\n'
        'ans_1=VQA("What is the value of Republicans in 2010?")\n'
        "ans=sum(ans_0, ans_1)"
    )
    answerer = GroundTruthAnswerer.from_specs([two_series_spec])
    trace = execute(program, "series2", answerer)
    expected = sum(
        e.value
        for g in two_series_spec.groups
        for e in g.entries
        if e.label == "2010"
    )
    assert trace.ok
    assert trace.answer == f"{expected:g}"


def test_non_numeric_operand_fails_at_consuming_step():
    program = parse_rationale('ans_0=VQA("c?")\nans=sum(ans_0, ans_0)')
    trace = execute(program, "img", ScriptedAnswerer({"c?": "blue"}))
    assert not trace.ok
    assert trace.failed_step == 2
    assert "non-numeric" in trace.failure
    assert len(trace.steps) == 1  # only the completed step is traced


def test_monotone_failure_first_consumer_only():
    program = parse_rationale(
        'ans_0=VQA("a?")\nans_1=VQA("b?")\nans_2=sum(ans_0, ans_0)\n'
        "ans=sum(ans_2, ans_1)"
    )
    good = {"a?": "1", "b?": "2"}
    for corrupt, expect_step in (("a?", 3), ("b?", 4)):
        replies = dict(good)
        replies[corrupt] = "mud"
        trace = execute(program, "img", ScriptedAnswerer(replies))
        assert not trace.ok
        assert trace.failed_step == expect_step


def test_tool_ops():
    cases = {
        "ans=diff(ans_0, ans_1)": "4",
        "ans=times(ans_0, ans_1)": "21",
        "ans=ratio(ans_0, ans_1)": "2.33",
        "ans=min(ans_0, ans_1)": "3",
        "ans=max(ans_0, ans_1)": "7",
        "ans=count(ans_0, ans_1)": "2",
        "ans=compare_greater(ans_0, ans_1)": "Yes",
        "ans=compare_less(ans_0, ans_1)": "No",
    }
    header = 'ans_0=VQA("x?")\nans_1=VQA("y?")\n'
    answerer = ScriptedAnswerer({"x?": "7", "y?": "3"})
    for tail, expected in cases.items():
        trace = execute(parse_rationale(header + tail), "img", answerer)
        assert trace.ok and trace.answer == expected, tail


def test_ratio_by_zero_fails():
    program = parse_rationale('ans_0=VQA("x?")\nans=ratio(ans_0, 0)')
    trace = execute(program, "img", ScriptedAnswerer({"x?": "7"}))
    assert not trace.ok and "zero" in trace.failure


def test_answerer_failure_is_a_step_failure():
    program = parse_rationale('ans=VQA("who?")')
    trace = execute(program, "img", ScriptedAnswerer({}))
    assert not trace.ok and trace.failed_step == 1


def test_determinism(two_series_spec):
    program = parse_rationale(
        'ans_0=VQA("What is the value of Democrats in 2009?")\nans=sum(ans_0, 1)'
    )
    answerer = GroundTruthAnswerer.from_specs([two_series_spec])
    traces = [execute(program, "series2", answerer) for _ in range(3)]
    assert len({t.answer for t in traces}) == 1


def test_diagnostic_line():
    program = parse_rationale('ans=VQA("who?")')
    trace = execute(program, "img9", ScriptedAnswerer({}))
    assert trace.diagnostic("img9").startswith("img9, 1, ")


# --- numeric coercion ---------------------------------------------------------


@pytest.mark.parametrize(
    "text,expected",
    [
        ("1,234.5", 1234.5),
        ("42%", 42.0),
        (" 7 ", 7.0),
        ("$12", 12.0),
        ("€1,000", 1000.0),
        ("-3.25", -3.25),
        (".5", 0.5),
        ("1e3", 1000.0),
    ],
)
def test_coerce_numeric_accepts(text, expected):
    assert coerce_numeric(text) == expected


@pytest.mark.parametrize("text", ["midnightblue", "", "12 apples", "--3", "1.2.3"])
def test_coerce_numeric_rejects(text):
    with pytest.raises(CoercionError):
        coerce_numeric(text)


# --- ground-truth answering -----------------------------------------------------


def test_value_of_label(three_bar_spec):
    assert ground_truth_answer(three_bar_spec, "What is the value of 2002?") == "31"
    assert ground_truth_answer(three_bar_spec, "What is the value of 2004?") == "12.5"


def test_value_lookup_is_strict(three_bar_spec, two_series_spec):
    with pytest.raises(AnswererError, match="unsupported pattern"):
        ground_truth_answer(three_bar_spec, "What is the capital of France?")
    with pytest.raises(AnswererError):
        ground_truth_answer(three_bar_spec, "What is the value of 1999?")
    with pytest.raises(AnswererError, match="2 elements"):
        ground_truth_answer(two_series_spec, "What is the value of 2010?")


def test_color_questions(three_bar_spec):
    assert ground_truth_answer(three_bar_spec, "What color is 2002 represented?") == "silver"
    assert (
        ground_truth_answer(three_bar_spec, "Which category is represented by crimson?") == "2004"
    )
    assert ground_truth_answer(three_bar_spec, "What is the value of the silver bar?") == "31"


def test_decorated_name_phrases(two_series_spec):
    q = "What is the value of the Democrats category?"
    with pytest.raises(AnswererError):
        ground_truth_answer(two_series_spec, q)  # two entries, still ambiguous
    assert (
        ground_truth_answer(two_series_spec, "What color is the Democrats category represented?")
        == "steelblue"
    )


def test_group_scoped_value(two_series_spec):
    assert (
        ground_truth_answer(two_series_spec, "What is the value of Republicans in 2009?") == "28"
    )
    assert (
        ground_truth_answer(two_series_spec, "What is the value of 2009 in Republicans?") == "28"
    )


def test_positional_questions(three_bar_spec):
    assert ground_truth_answer(three_bar_spec, "What is the value of the left bar?") == "31"
    assert (
        ground_truth_answer(three_bar_spec, "What is the value of the second bar from the right?")
        == "37"
    )
    assert ground_truth_answer(three_bar_spec, "What does the right bar represent?") == "2004"
    assert (
        ground_truth_answer(three_bar_spec, "What is represented by the third bar from the right?")
        == "2002"
    )


def test_extreme_questions(three_bar_spec):
    assert (
        ground_truth_answer(three_bar_spec, "What is the value of the smallest category?")
        == "12.5"
    )
    assert (
        ground_truth_answer(three_bar_spec, "What is the value of the second largest category?")
        == "31"
    )
    assert ground_truth_answer(three_bar_spec, "What is the largest category?") == "2003"


def test_count_questions(three_bar_spec, two_series_spec):
    assert ground_truth_answer(three_bar_spec, "How many bars are shown in the plot?") == "3"
    assert (
        ground_truth_answer(three_bar_spec, "How many silver bars are shown in the plot?") == "1"
    )
    assert (
        ground_truth_answer(two_series_spec, "How many crimson bars are shown in the plot?")
        == "2"
    )
    assert (
        ground_truth_answer(
            three_bar_spec, "How many colors are used to represent the bars in the plot?"
        )
        == "3"
    )
    with pytest.raises(AnswererError):
        ground_truth_answer(three_bar_spec, "How many dots are shown in the plot?")


def test_unknown_image():
    answerer = GroundTruthAnswerer({})
    with pytest.raises(AnswererError, match="no chart annotations"):
        answerer.answer("nope", "What is the value of a?")


# --- service answerer -------------------------------------------------------------


class _AnswerHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if self.path != "/answer":
            self.send_response(404)
            self.end_headers()
            return
        reply = {"answer": f"echo:{body['question']}"}
        payload = (json.dumps(reply) + "\n").encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def answer_server():
    server = HTTPServer(("127.0.0.1", 0), _AnswerHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_service_answerer_round_trip(answer_server):
    answerer = ServiceAnswerer(answer_server, timeout=5.0)
    assert answerer.answer("img", "What is the value of a?") == "echo:What is the value of a?"


def test_service_answerer_unreachable():
    answerer = ServiceAnswerer("http://127.0.0.1:9", timeout=0.2, retries=2, backoff=0.01)
    with pytest.raises(AnswererError):
        answerer.answer("img", "q?")
