import random

import pytest

from chartsynth.charts import BBox, ChartSpec, Entry, Group
from chartsynth.queries import (
    AmbiguityError,
    CapabilityError,
    ElementSet,
    QueryArithmeticError,
    QueryError,
    QueryTypeError,
    RangeError,
    SelectionError,
    evaluate_query,
    parse_query_program,
    print_query_program,
    spatial_rank,
    value_to_text,
)


def run(text, spec):
    return evaluate_query(parse_query_program(text), spec)


def simple(entries, chart_type="vertical_bar", **kwargs):
    return ChartSpec(
        image_id="t",
        chart_type=chart_type,
        groups=(Group("", tuple(entries)),),
        **kwargs,
    )


def test_direct_value_lookup():
    spec = simple([Entry("a", 2.0), Entry("b", 4.0)])
    program = 's = select_by_label("a")\nans = query_value(s)'
    assert run(program, spec) == 2.0


def test_two_smallest_average():
    # brute force over all 2-subsets of {2, 4, 9} puts {a, b} lowest; (2+4)/2 = 3
    spec = simple([Entry("a", 2.0), Entry("b", 4.0), Entry("c", 9.0)])
    program = 's = select_extreme("min", 2)\nans = avg(s)'
    assert run(program, spec) == 3.0


def test_duplicate_color_projection_is_ambiguous():
    spec = simple([Entry("a", 1.0, "red"), Entry("b", 2.0, "red")])
    program = 's = select_by_color("red")\nans = query_value(s)'
    with pytest.raises(AmbiguityError):
        run(program, spec)


def test_group_name_selection(two_series_spec):
    program = 's = select_by_label("Democrats")\nans = avg(s)'
    assert run(program, two_series_spec) == 38.0


def test_group_scoped_selection(two_series_spec):
    program = 's = select_by_label("2010", "Republicans")\nans = query_value(s)'
    assert run(program, two_series_spec) == 40.5
    # role order is forgiving
    program = 's = select_by_label("Republicans", "2010")\nans = query_value(s)'
    assert run(program, two_series_spec) == 40.5


def test_unknown_label_is_selection_error():
    spec = simple([Entry("a", 2.0)])
    with pytest.raises(SelectionError):
        run('s = select_by_label("zzz")\nans = query_value(s)', spec)


def test_query_color_and_label(three_bar_spec):
    assert run('s = select_by_label("2003")\nans = query_color(s)', three_bar_spec) == "midnightblue"
    assert run('s = select_by_color("crimson")\nans = query_label(s)', three_bar_spec) == "2004"


def test_count_forms(three_bar_spec, two_series_spec):
    assert run("ans = count()", three_bar_spec) == 3.0
    assert run('ans = count("colors")', three_bar_spec) == 3.0
    assert run('ans = count("colors")', two_series_spec) == 2.0
    assert run('s = select_by_color("steelblue")\nans = count(s)', two_series_spec) == 2.0


def test_arithmetic_ops():
    spec = simple([Entry("a", 10.0), Entry("b", 4.0)])
    prog = (
        'x = select_by_label("a")\nvx = query_value(x)\n'
        'y = select_by_label("b")\nvy = query_value(y)\n'
    )
    assert run(prog + "ans = sum(vx, vy)", spec) == 14.0
    assert run(prog + "ans = diff(vx, vy)", spec) == 6.0
    assert run(prog + "ans = diff(vy, vx)", spec) == -6.0  # signed, not absolute
    assert run(prog + "ans = ratio(vx, vy)", spec) == 2.5
    assert run(prog + "ans = avg(vx, vy)", spec) == 7.0
    assert run(prog + 'ans = compare(vx, vy, "greater")', spec) is True
    assert run(prog + 'ans = compare(vx, vy, "less")', spec) is False


def test_ratio_zero_denominator():
    spec = simple([Entry("a", 1.0), Entry("b", 0.0)])
    prog = (
        'x = select_by_label("a")\nvx = query_value(x)\n'
        'y = select_by_label("b")\nvy = query_value(y)\nans = ratio(vx, vy)'
    )
    with pytest.raises(QueryArithmeticError):
        run(prog, spec)


def test_type_errors():
    spec = simple([Entry("a", 1.0), Entry("b", 2.0)])
    with pytest.raises(QueryTypeError):
        run('s = select_by_label("a")\nans = diff(s, s)', spec)
    with pytest.raises(QueryTypeError):
        run('ans = query_value(3)', spec)


# --- spatial ranking -------------------------------------------------------------


def bars_at(centers_x, heights=None):
    heights = heights or [50.0] * len(centers_x)
    entries = [
        Entry(f"b{i}", 10.0 * (i + 1), bbox=BBox(cx - 5, 100.0 - h, 10.0, h))
        for i, (cx, h) in enumerate(zip(centers_x, heights))
    ]
    return simple(entries)


def test_spatial_rank_left_right():
    spec = bars_at([10.0, 50.0, 90.0])
    left = spatial_rank(spec, "left", 1)
    assert spec.groups[0].entries[left.members[0][1]].label == "b0"
    second_right = spatial_rank(spec, "right", 2)
    assert spec.groups[0].entries[second_right.members[0][1]].label == "b1"


def test_spatial_rank_top_is_smallest_y_center():
    # brute-force sort of bbox y-centers picks the tallest bar as "top"
    spec = bars_at([10.0, 50.0, 90.0], heights=[40.0, 90.0, 20.0])
    centers = [(e.bbox.center[1], e.label) for e in spec.groups[0].entries]
    expected = min(centers)[1]
    top = spatial_rank(spec, "top", 1)
    assert spec.groups[0].entries[top.members[0][1]].label == expected


def test_spatial_rank_errors(pie_spec):
    spec = bars_at([10.0, 50.0])
    with pytest.raises(RangeError):
        spatial_rank(spec, "left", 3)
    with pytest.raises(CapabilityError):
        spatial_rank(pie_spec, "left", 1)
    no_boxes = simple([Entry("a", 1.0)])
    with pytest.raises(CapabilityError):
        spatial_rank(no_boxes, "left", 1)


def test_select_by_position_in_program():
    spec = bars_at([10.0, 50.0, 90.0])
    assert run('s = select_by_position("right", 1)\nans = query_value(s)', spec) == 30.0


# --- canonical text form ----------------------------------------------------------


def test_program_text_round_trip():
    text = 's = select_extreme("min", 2)\nans = avg(s)'
    program = parse_query_program(text)
    assert print_query_program(program) == text
    assert parse_query_program(print_query_program(program)) == program


def test_parse_rejects_bad_programs():
    with pytest.raises(QueryError):
        parse_query_program("ans = explode()")
    with pytest.raises(QueryError):
        parse_query_program("x = count()")  # must end in ans
    with pytest.raises(QueryError):
        parse_query_program("ans = query_value(missing)")
    with pytest.raises(QueryError):
        parse_query_program('ans = select_by_label($N)')  # slots disallowed by default


def test_slot_parsing_for_catalogs():
    program = parse_query_program("ans = select_by_label($N)", allow_slots=True)
    assert program.slot_symbols() == {"N"}
    assert print_query_program(program) == "ans = select_by_label($N)"


def test_step_validation():
    with pytest.raises(QueryError, match="defined twice"):
        parse_query_program("a = count()\na = count()\nans = sum(a)")
    with pytest.raises(QueryError, match="takes"):
        parse_query_program("ans = diff(1)")


# --- oracle equivalence and permutation covariance ----------------------------------


def test_oracle_equivalence_random_specs():
    rng = random.Random(42)
    for _ in range(300):
        values = [round(rng.uniform(1, 500), 2) for _ in range(rng.randint(2, 7))]
        labels = [f"c{i}" for i in range(len(values))]
        spec = simple([Entry(l, v) for l, v in zip(labels, values)], chart_type="line")
        i, j = rng.sample(range(len(values)), 2)
        prog = (
            f'x = select_by_label("{labels[i]}")\nvx = query_value(x)\n'
            f'y = select_by_label("{labels[j]}")\nvy = query_value(y)\n'
        )
        checks = {
            "ans = sum(vx, vy)": values[i] + values[j],
            "ans = avg(vx, vy)": (values[i] + values[j]) / 2,
            "ans = diff(vx, vy)": values[i] - values[j],
            "ans = ratio(vx, vy)": values[i] / values[j],
            "s = select_extreme(\"min\", 2)\nans = avg(s)": sum(sorted(values)[:2]) / 2,
            "s = select_extreme(\"max\", 1)\nans = query_value(s)": max(values),
            "ans = count()": float(len(values)),
        }
        for tail, expected in checks.items():
            got = run(prog + tail if tail.startswith("ans =") and "select" not in tail else tail, spec)
            assert got == pytest.approx(expected, rel=1e-9)


def test_permutation_covariance():
    rng = random.Random(7)
    values = [3.25, 9.5, 1.75, 7.0, 5.5]
    entries = [Entry(f"c{i}", v) for i, v in enumerate(values)]
    programs = [
        'ans = count()',
        's = select_extreme("min", 2)\nans = avg(s)',
        's = select_by_label("c3")\nans = query_value(s)',
        'x = select_by_label("c0")\nvx = query_value(x)\n'
        'y = select_by_label("c2")\nvy = query_value(y)\nans = compare(vx, vy, "greater")',
    ]
    baseline = [run(p, simple(entries, chart_type="line")) for p in programs]
    for _ in range(10):
        shuffled = entries[:]
        rng.shuffle(shuffled)
        spec = simple(shuffled, chart_type="line")
        assert [run(p, spec) for p in programs] == baseline


def test_value_to_text():
    assert value_to_text(3.0) == "3"
    assert value_to_text(2.5) == "2.5"
    assert value_to_text(1.0 / 3.0) == "0.33"
    assert value_to_text(True) == "Yes"
    assert value_to_text(False) == "No"
    assert value_to_text("silver") == "silver"
    with pytest.raises(QueryTypeError):
        value_to_text(ElementSet(members=((0, 0),)))
