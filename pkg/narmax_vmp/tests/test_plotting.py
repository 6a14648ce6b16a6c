import math
import xml.etree.ElementTree as ET

import pandas as pd
import pytest

from estimator.errors import InputFormatError
from experiments.harness import AGGREGATE_COLUMNS
from experiments.plotting import FAILURE_PANEL_HEIGHT, PANEL_HEIGHT, Axis, plot_sweep, write_sweep_svg

SVG = "{http://www.w3.org/2000/svg}"


def aggregates(rows):
    return pd.DataFrame(
        [
            {
                "sweep_value": value,
                "estimator": estimator,
                "mean_rms_simulation": mean,
                "sem_rms_simulation": sem,
                "mean_rms_prediction": mean,
                "sem_rms_prediction": sem,
                "failure_proportion": failures,
                "n_runs": 10,
            }
            for value, estimator, mean, sem, failures in rows
        ],
        columns=AGGREGATE_COLUMNS,
    )


def elements(svg, tag):
    return ET.fromstring(svg).findall(f"{SVG}{tag}")


def vertices(element):
    return element.get("points").split()


class TestPlotSweep:
    def test_empty_table_draws_axes_only(self):
        svg = plot_sweep(pd.DataFrame(columns=AGGREGATE_COLUMNS))
        assert elements(svg, "polyline") == []
        assert elements(svg, "polygon") == []
        assert elements(svg, "circle") == []
        assert len(elements(svg, "line")) >= 2

    def test_single_series(self):
        svg = plot_sweep(aggregates([(16, "vmp", 0.5, 0.1, 0.0), (32, "vmp", 0.25, 0.05, 0.0)]))
        [line] = elements(svg, "polyline")
        assert len(vertices(line)) == 2
        assert len(elements(svg, "circle")) == 2

    def test_ribbon_has_both_edges(self):
        frame = aggregates([(v, "rls", 1.0 / v, 0.1 / v, 0.0) for v in (16, 64, 256)])
        [ribbon] = elements(plot_sweep(frame), "polygon")
        assert len(vertices(ribbon)) == 6

    def test_one_line_per_estimator(self):
        rows = [(v, name, 0.1, 0.01, 0.0) for name in ("vmp", "rls", "ils") for v in (16, 32)]
        svg = plot_sweep(aggregates(rows))
        lines = elements(svg, "polyline")
        assert len(lines) == 3
        assert {line.get("stroke") for line in lines} == {"#1f77b4", "#d62728", "#2ca02c"}

    def test_failed_cells_are_skipped(self):
        frame = aggregates([(16, "ils", math.nan, math.nan, 1.0), (32, "ils", 0.3, 0.0, 0.2), (64, "ils", 0.2, 0.0, 0.0)])
        [line] = elements(plot_sweep(frame), "polyline")
        assert len(vertices(line)) == 2

    def test_failure_panel(self):
        frame = aggregates([(16, "vmp", 0.5, 0.1, 0.4), (32, "vmp", 0.25, 0.05, 0.1)])
        svg = plot_sweep(frame, failures=True)
        root = ET.fromstring(svg)
        assert root.get("height") == str(PANEL_HEIGHT + FAILURE_PANEL_HEIGHT)
        assert len(elements(svg, "polyline")) == 2

    def test_non_positive_values_use_linear_axis(self):
        frame = aggregates([(0.01, "vmp", 0.0, 0.0, 0.0), (0.1, "vmp", 0.5, 0.1, 0.0)])
        [line] = elements(plot_sweep(frame, metric="rms_prediction"), "polyline")
        assert len(vertices(line)) == 2

    def test_text_is_escaped(self):
        svg = plot_sweep(aggregates([(16, "vmp", 0.5, 0.1, 0.0)]), title="noise <0.1 & more>")
        assert "noise &lt;0.1 &amp; more&gt;" in svg
        ET.fromstring(svg)

    def test_deterministic(self):
        frame = aggregates([(16, "vmp", 0.5, 0.1, 0.0), (32, "vmp", 0.25, 0.05, 0.0)])
        assert plot_sweep(frame, failures=True) == plot_sweep(frame.copy(), failures=True)

    def test_missing_column(self):
        frame = aggregates([(16, "vmp", 0.5, 0.1, 0.0)]).drop(columns=["sem_rms_simulation"])
        with pytest.raises(InputFormatError):
            plot_sweep(frame)

    def test_unknown_metric(self):
        with pytest.raises(InputFormatError):
            plot_sweep(aggregates([]), metric="rms_free_run")

    def test_write_sweep_svg(self, tmp_path):
        frame = aggregates([(16, "vmp", 0.5, 0.1, 0.0)])
        first, second = tmp_path / "a.svg", tmp_path / "b.svg"
        write_sweep_svg(frame, first)
        write_sweep_svg(frame, second)
        assert first.read_bytes() == second.read_bytes()
        assert first.read_bytes().startswith(b"<svg")


class TestAxis:
    def test_log_mapping(self):
        axis = Axis(10.0, 1000.0, 0.0, 200.0, log=True)
        assert axis(10.0) == pytest.approx(0.0)
        assert axis(100.0) == pytest.approx(100.0)
        assert axis.ticks() == [10.0, 100.0, 1000.0]

    def test_degenerate_range_is_padded(self):
        axis = Axis(5.0, 5.0, 0.0, 100.0, log=False)
        assert axis(5.0) == pytest.approx(50.0)
