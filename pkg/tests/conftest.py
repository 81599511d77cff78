import pytest

from chartsynth.charts import BBox, ChartSpec, Entry, Group


@pytest.fixture
def three_bar_spec():
    """Single unnamed series, three colored bars with boxes."""
    return ChartSpec(
        image_id="bars3",
        chart_type="vertical_bar",
        groups=(
            Group(
                "",
                (
                    Entry("2002", 31.0, "silver", BBox(10, 100, 20, 100)),
                    Entry("2003", 37.0, "midnightblue", BBox(40, 80, 20, 120)),
                    Entry("2004", 12.5, "crimson", BBox(70, 150, 20, 50)),
                ),
            ),
        ),
    )


@pytest.fixture
def two_series_spec():
    """Two named series over shared year labels."""
    return ChartSpec(
        image_id="series2",
        chart_type="vertical_bar",
        groups=(
            Group("Democrats", (Entry("2009", 31.0, "steelblue"), Entry("2010", 45.0, "steelblue"))),
            Group("Republicans", (Entry("2009", 28.0, "crimson"), Entry("2010", 40.5, "crimson"))),
        ),
    )


@pytest.fixture
def pie_spec():
    return ChartSpec(
        image_id="pie1",
        chart_type="pie",
        groups=(
            Group("", (Entry("a", 10.0, "gold"), Entry("b", 30.0, "teal"), Entry("c", 60.0, "plum"))),
        ),
        element_kind="slice",
    )
