import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perioscope.series import (
    ObservedSeries,
    SeriesError,
    linear_interpolate,
    load_csv,
    load_json,
    load_series,
    mask_from_blocks,
    observed_mean,
    robust_scale,
    save_csv,
    scan_mask,
    scan_missing_blocks,
)


def masks(min_size=4, max_size=40):
    return st.lists(st.booleans(), min_size=min_size, max_size=max_size).filter(any)


class TestObservedSeries:
    def test_invariants_enforced(self):
        with pytest.raises(SeriesError, match="too short"):
            ObservedSeries([1.0, 2.0, 3.0], [1, 1, 1])
        with pytest.raises(SeriesError, match="differ in length"):
            ObservedSeries([1.0] * 5, [1] * 4)
        with pytest.raises(SeriesError, match="no observed"):
            ObservedSeries([1.0] * 5, [0] * 5)
        with pytest.raises(SeriesError, match="0 or 1"):
            ObservedSeries([1.0] * 4, [1, 2, 1, 1])
        with pytest.raises(SeriesError, match="finite"):
            ObservedSeries([1.0, np.inf, 1.0, 1.0], [1, 1, 1, 1])

    def test_placeholders_are_never_read(self):
        s = ObservedSeries([1.0, np.nan, np.inf, 4.0], [1, 0, 0, 1])
        assert np.all(np.isfinite(s.values))
        assert s.values[1] == 0.0 and s.values[2] == 0.0

    def test_immutable(self):
        s = ObservedSeries([1.0, 2.0, 3.0, 4.0], [1, 1, 0, 1])
        with pytest.raises(ValueError):
            s.values[0] = 7.0
        with pytest.raises(ValueError):
            s.mask[0] = False

    def test_from_values_none_and_nan(self):
        s = ObservedSeries.from_values([1.0, None, float("nan"), 4.0, 5.0])
        assert s.mask.tolist() == [True, False, False, True, True]
        assert s.n_observed == 3

    @given(masks(), st.integers(0, 2**32 - 1))
    def test_json_round_trip_bit_exact(self, mask, seed):
        vals = np.random.default_rng(seed).normal(size=len(mask)) * 1e3
        s = ObservedSeries(vals, mask)
        back = ObservedSeries.from_json(s.to_json())
        assert back.mask.tolist() == s.mask.tolist()
        assert np.array_equal(back.values[back.mask], s.values[s.mask])
        payload = json.loads(s.to_json())
        assert all((v is None) == (not m) for v, m in zip(payload["values"], mask))

    @given(masks(), st.integers(0, 2**32 - 1))
    def test_csv_round_trip_bit_exact(self, tmp_path_factory, mask, seed):
        path = tmp_path_factory.mktemp("csv") / "s.csv"
        vals = np.random.default_rng(seed).normal(size=len(mask)) / 7.0
        s = ObservedSeries(vals, mask)
        save_csv(s, path)
        back = load_csv(path)
        assert back.mask.tolist() == s.mask.tolist()
        assert np.array_equal(back.values[back.mask], s.values[s.mask])


class TestLoadCsv:
    def test_blank_line_is_missing(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1.0\n\n3.0\n4.0\n")
        s = load_csv(p)
        assert s.mask.tolist() == [True, False, True, True]
        assert s.values[[0, 2, 3]].tolist() == [1.0, 3.0, 4.0]

    def test_three_rows_is_too_short(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1.0\n\n3.0")
        with pytest.raises(SeriesError, match="too short"):
            load_csv(p)

    def test_single_value_too_short(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("5.0")
        with pytest.raises(SeriesError, match="too short"):
            load_csv(p)

    def test_named_column_fully_observed(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("time,value\n0,2\n1,2\n2,2\n3,2\n")
        s = load_csv(p, "value")
        assert len(s) == 4 and s.mask.all()
        assert s.values.tolist() == [2.0] * 4
        assert load_csv(p, 1).values.tolist() == [2.0] * 4

    def test_missing_markers(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("value\n1\nNaN\nnan\nnull\n\n6\n")
        s = load_csv(p)
        assert s.mask.tolist() == [True, False, False, False, False, True]

    def test_bad_cell_reports_row(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("value\n1\n2\nabc\n4\n")
        with pytest.raises(SeriesError, match="row 4"):
            load_csv(p)

    def test_unknown_column(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("value\n1\n2\n3\n4\n")
        with pytest.raises(SeriesError, match="not found"):
            load_csv(p, "other")

    def test_unreadable(self, tmp_path):
        with pytest.raises(SeriesError, match="cannot read"):
            load_csv(tmp_path / "missing.csv")

    def test_load_series_dispatch(self, tmp_path):
        s = ObservedSeries([1.0, 2.0, 0.0, 4.0], [1, 1, 0, 1])
        (tmp_path / "s.json").write_text(s.to_json())
        assert load_series(tmp_path / "s.json").mask.tolist() == s.mask.tolist()
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(SeriesError):
            load_json(tmp_path / "bad.json")


class TestMissingBlocks:
    @pytest.mark.parametrize(
        "mask, blocks, longest, ratio",
        [
            ([1, 1, 1, 0, 0, 0, 1, 1, 1, 1], [(3, 3)], 3, 0.3),
            ([1] * 8, [], 0, 0.0),
            ([1, 0, 1, 0, 1, 1], [(1, 1), (3, 1)], 1, 2 / 6),
        ],
    )
    def test_examples(self, mask, blocks, longest, ratio):
        rep = scan_missing_blocks(ObservedSeries(np.zeros(len(mask)), mask))
        assert rep.blocks == blocks
        assert rep.max_block_len == longest
        assert rep.missing_ratio == pytest.approx(ratio)

    def test_safe_regime_flag(self):
        n = 30
        rep = scan_missing_blocks(ObservedSeries(np.zeros(n), mask_from_blocks(n, [(5, 9)])))
        assert rep.within_safe_regime
        rep = scan_missing_blocks(ObservedSeries(np.zeros(n), mask_from_blocks(n, [(5, 10)])))
        assert not rep.within_safe_regime

    def test_reconstruction_exhaustive(self):
        for n in range(4, 17):
            for bits in itertools.product((0, 1), repeat=n):
                if not any(bits):
                    continue
                mask = np.array(bits, dtype=bool)
                rep = scan_mask(mask)
                assert np.array_equal(mask_from_blocks(n, rep.blocks), mask)
                assert sum(length for _, length in rep.blocks) == n - mask.sum()
                starts = [b[0] for b in rep.blocks]
                assert starts == sorted(starts)
                # maximal runs: consecutive blocks are separated by an observed sample
                for (a, la), (b, _) in zip(rep.blocks, rep.blocks[1:]):
                    assert a + la < b


class TestHelpers:
    @pytest.mark.parametrize(
        "values, mask, expected",
        [([1, 9, 5, 5], [1, 1, 0, 0], 5.0), ([3, 3, 3, 3], [1] * 4, 3.0), ([1, 2, 3, 4], [1] * 4, 2.5)],
    )
    def test_observed_mean(self, values, mask, expected):
        assert observed_mean(ObservedSeries(values, mask)) == expected

    def test_interpolate_examples(self):
        s = linear_interpolate(ObservedSeries([0, 0, 0, 3], [1, 0, 0, 1]))
        assert s.values.tolist() == [0.0, 1.0, 2.0, 3.0]
        s = linear_interpolate(ObservedSeries([0, 2, 4, 6], [0, 1, 1, 1]))
        assert s.values.tolist() == [2.0, 2.0, 4.0, 6.0]
        s = linear_interpolate(ObservedSeries([0, 2, 4, 9], [1, 1, 1, 0]))
        assert s.values.tolist() == [0.0, 2.0, 4.0, 4.0]
        full = ObservedSeries([1.0, 5.0, 2.0, 8.0], [1] * 4)
        assert linear_interpolate(full).values.tolist() == full.values.tolist()

    def test_interpolate_needs_two_points(self):
        with pytest.raises(SeriesError):
            linear_interpolate(ObservedSeries([1, 0, 0, 0], [1, 0, 0, 0]))

    @given(masks().filter(lambda m: sum(m) >= 2), st.integers(0, 2**32 - 1))
    def test_interpolate_idempotent(self, mask, seed):
        vals = np.random.default_rng(seed).normal(size=len(mask))
        once = linear_interpolate(ObservedSeries(vals, mask))
        twice = linear_interpolate(once)
        assert once.mask.all()
        assert np.array_equal(once.values, twice.values)
        assert np.array_equal(once.values[np.array(mask)], vals[np.array(mask)])

    def test_robust_scale(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 100.0])
        assert robust_scale(x) == pytest.approx(1.4826)
        assert robust_scale(np.array([1.0, 1.0, 1.0, 5.0])) == pytest.approx(np.std([1, 1, 1, 5]))
