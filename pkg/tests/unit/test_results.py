"""Tests for result table generation and parsing."""

from __future__ import annotations

import numpy as np
import pytest

from fluctlab._results import (
    WEAK_ERROR_COLUMNS,
    generate_csv,
    generate_dat,
    parse_csv,
    parse_weak_error_csv,
    records_csv,
    trajectory_csv,
    weak_error_csv,
    weak_error_dat,
)
from fluctlab.experiments import CoercivityLevel, RefinementLevel, WeakErrorRow
from fluctlab.particles import Snapshot

ROWS = [
    WeakErrorRow(64, 0.0173, 0.0014, -0.0004, 0.0013, 1000),
    WeakErrorRow(128, 0.0081, 0.0014, -0.0004, 0.0013, 1000),
]


# =============================================================================
# Generic tables
# =============================================================================


class TestGenerate:
    def test_header_and_cells(self):
        text = generate_csv(("a", "b", "c"), [{"a": 1, "b": 0.1, "c": None}])
        assert text == "a,b,c\n1,0.1,\n"

    def test_booleans_lowercase(self):
        assert generate_csv(("x",), [{"x": True}]) == "x\ntrue\n"

    def test_dat_uses_nan_for_missing(self):
        text = generate_dat(("a", "b"), [{"a": 1, "b": None}])
        assert text == "# a b\n1 nan\n"

    def test_float_repr_is_exact(self):
        value = 0.1 + 0.2
        assert parse_csv(generate_csv(("v",), [{"v": value}]))[0]["v"] == value


class TestParse:
    def test_types(self):
        rows = parse_csv("N,gap,stalled,diff\n64,0.5,false,\n")
        assert rows == [{"N": 64, "gap": 0.5, "stalled": False, "diff": None}]
        assert isinstance(rows[0]["N"], int)

    def test_empty(self):
        assert parse_csv("") == []

    def test_skips_blank_lines(self):
        assert len(parse_csv("a\n1\n\n2\n")) == 2

    def test_wrong_cell_count(self):
        with pytest.raises(ValueError, match="Invalid result line 3"):
            parse_csv("a,b\n1,2\n3\n")

    def test_non_numeric(self):
        with pytest.raises(ValueError, match="column 'a'"):
            parse_csv("a\nabc\n")


# =============================================================================
# Weak-error tables
# =============================================================================


class TestWeakErrorTable:
    def test_columns(self):
        header = weak_error_csv(ROWS).splitlines()[0]
        assert tuple(header.split(",")) == WEAK_ERROR_COLUMNS

    def test_parse_recomputes_gap(self):
        parsed = parse_weak_error_csv(weak_error_csv(ROWS))
        assert parsed == ROWS
        assert parsed[0].gap == pytest.approx(0.0177)
        assert parsed[0].samples_p == ()

    def test_missing_columns(self):
        with pytest.raises(ValueError, match="lacks columns"):
            parse_weak_error_csv("N,est_p\n64,0.1\n")

    def test_dat_matches_csv_rows(self):
        lines = weak_error_dat(ROWS).splitlines()
        assert lines[0] == "# " + " ".join(WEAK_ERROR_COLUMNS)
        assert lines[1].split()[0] == "64"
        assert len(lines) == 3


# =============================================================================
# Records and trajectories
# =============================================================================


class TestRecords:
    def test_columns_from_first_record(self):
        levels = [
            RefinementLevel(8, 8, 0, 0.001, 0.5, 0.01),
            RefinementLevel(16, 16, 0, 0.001, 0.49, 0.01, diff=-0.01, diff_se=0.014),
        ]
        rows = parse_csv(records_csv(levels))
        assert rows[0]["diff"] is None
        assert rows[1]["diff"] == pytest.approx(-0.01)
        assert rows[1]["kmax"] == 16

    def test_empty(self):
        assert records_csv([]) == ""

    def test_coercivity_levels(self):
        text = records_csv([CoercivityLevel(4, 2.0, 9.87, 0.0)])
        assert text.splitlines()[0] == "n,C,delta,min_margin"

    def test_trajectory(self):
        snaps = [
            Snapshot(0.0, np.array([[0.1, 0.2], [0.3, 0.4]])),
            Snapshot(0.5, np.array([[0.15, 0.25], [0.35, 0.45]])),
        ]
        rows = parse_csv(trajectory_csv(snaps, replica=3))
        assert len(rows) == 4
        assert rows[3] == {"t": 0.5, "replica": 3, "particle": 1, "x1": 0.35, "x2": 0.45}
