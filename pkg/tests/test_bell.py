import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coinlab.bell import (
    EmptyClass,
    SettingCounts,
    chsh_S,
    chsh_stderr,
    correlation_E,
    correlation_stderr,
    correlation_table,
    render_report,
    tally,
    write_report_csv,
)
from coinlab.matcher import AdjustmentSet, match
from coinlab.synth import SynthConfig, generate_run
from oracles import tally_oracle


class FakePairs:
    def __init__(self, symbol_a, symbol_b):
        self.symbol_a = np.asarray(symbol_a, dtype=np.uint8)
        self.symbol_b = np.asarray(symbol_b, dtype=np.uint8)

    def __len__(self):
        return self.symbol_a.shape[0]


def counts_from(table):
    return SettingCounts(np.asarray(table, dtype=np.int64))


class TestTally:
    def test_empty(self):
        c = tally(FakePairs([], []))
        assert c.counts.shape == (2, 2, 2, 2)
        assert c.total() == 0

    def test_single_pair_lands_in_right_cell(self):
        # symbol 0 = setting 0 det 0; symbol 3 = setting 1 det 1
        c = tally(FakePairs([0], [3]))
        want = np.zeros((2, 2, 2, 2), dtype=np.int64)
        want[0, 1, 0, 1] = 1
        assert np.array_equal(c.counts, want)

    def test_all_sixteen_cells(self):
        sa, sb = np.divmod(np.arange(16), 4)
        c = tally(FakePairs(sa, sb))
        assert c.total() == 16
        assert np.all(c.counts.reshape(-1) == 1)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = rng.integers(0, 400)
            sa = rng.integers(0, 4, n)
            sb = rng.integers(0, 4, n)
            c = tally(FakePairs(sa, sb))
            assert np.array_equal(c.counts, tally_oracle(sa, sb))

    def test_iterable_of_record_pairs(self):
        pairs = FakePairs([0, 2], [1, 3])
        from_arrays = tally(pairs)
        records = list(zip(pairs.symbol_a, pairs.symbol_b))

        class Rec:
            def __init__(self, s):
                self.symbol = int(s)

        from_records = tally([(Rec(a), Rec(b)) for a, b in records])
        assert np.array_equal(from_arrays.counts, from_records.counts)

    def test_negative_counts_rejected(self):
        table = np.zeros((2, 2, 2, 2), dtype=np.int64)
        table[0, 0, 0, 0] = -1
        with pytest.raises(ValueError):
            SettingCounts(table)

    def test_bad_shape_rejected(self):
        with pytest.raises(ValueError):
            SettingCounts(np.zeros((2, 2, 2), dtype=np.int64))


class TestCorrelation:
    def test_perfect_agreement(self):
        table = np.zeros((2, 2, 2, 2), dtype=np.int64)
        table[0, 0, 0, 0] = 50
        table[0, 0, 1, 1] = 50
        assert correlation_E(counts_from(table), 0, 0) == 1.0

    def test_perfect_anticorrelation(self):
        table = np.zeros((2, 2, 2, 2), dtype=np.int64)
        table[1, 0, 0, 1] = 30
        table[1, 0, 1, 0] = 70
        assert correlation_E(counts_from(table), 1, 0) == -1.0

    def test_balanced_is_zero(self):
        table = np.zeros((2, 2, 2, 2), dtype=np.int64)
        table[0, 1] = [[25, 25], [25, 25]]
        c = counts_from(table)
        assert correlation_E(c, 0, 1) == 0.0
        assert correlation_stderr(c, 0, 1) == pytest.approx(0.1)

    def test_known_fraction(self):
        table = np.zeros((2, 2, 2, 2), dtype=np.int64)
        table[1, 1] = [[40, 10], [10, 40]]
        assert correlation_E(counts_from(table), 1, 1) == pytest.approx(0.6)

    def test_empty_class_raises(self):
        table = np.zeros((2, 2, 2, 2), dtype=np.int64)
        table[0, 0, 0, 0] = 5
        c = counts_from(table)
        with pytest.raises(EmptyClass):
            correlation_E(c, 1, 1)

    def test_stderr_extremes_are_zero(self):
        table = np.zeros((2, 2, 2, 2), dtype=np.int64)
        table[0, 0, 0, 0] = 100
        assert correlation_stderr(counts_from(table), 0, 0) == 0.0


class TestChsh:
    def build(self, e00, e01, e10, e11, n=1000):
        """Counts with the requested per-pair correlations, equal class sizes."""
        table = np.zeros((2, 2, 2, 2), dtype=np.int64)
        for (i, j), e in zip([(0, 0), (0, 1), (1, 0), (1, 1)], [e00, e01, e10, e11]):
            agree = int(round(n * (1 + e) / 2))
            table[i, j, 0, 0] = agree // 2
            table[i, j, 1, 1] = agree - agree // 2
            dis = n - agree
            table[i, j, 0, 1] = dis // 2
            table[i, j, 1, 0] = dis - dis // 2
        return counts_from(table)

    def test_signature_combination(self):
        c = self.build(0.5, -0.5, 0.5, 0.5)
        assert chsh_S(c) == pytest.approx(2.0)

    def test_algebraic_maximum(self):
        assert chsh_S(self.build(1.0, -1.0, 1.0, 1.0)) == pytest.approx(4.0)

    def test_quantum_value(self):
        v = 1 / math.sqrt(2)
        assert chsh_S(self.build(v, -v, v, v, n=10**6)) == pytest.approx(
            2 * math.sqrt(2), abs=1e-5
        )

    def test_stderr_quadrature(self):
        c = self.build(0.0, 0.0, 0.0, 0.0)
        per_term = correlation_stderr(c, 0, 0)
        assert chsh_stderr(c) == pytest.approx(2 * per_term)

    @given(
        st.lists(st.integers(min_value=1, max_value=500), min_size=16, max_size=16)
    )
    @settings(max_examples=60, deadline=None)
    def test_bounds_hold_for_any_counts(self, flat):
        c = counts_from(np.array(flat, dtype=np.int64).reshape(2, 2, 2, 2))
        for i in (0, 1):
            for j in (0, 1):
                assert abs(correlation_E(c, i, j)) <= 1.0
        assert abs(chsh_S(c)) <= 4.0
        assert chsh_stderr(c) >= 0.0

    def test_correlation_table_layout(self):
        c = self.build(0.5, -0.5, 0.5, 0.5)
        tab = correlation_table(c)
        assert [(r["setting_a"], r["setting_b"]) for r in tab] == [
            (0, 0), (0, 1), (1, 0), (1, 1),
        ]
        assert [r["E"] for r in tab] == pytest.approx([0.5, -0.5, 0.5, 0.5])
        for r in tab:
            i, j = r["setting_a"], r["setting_b"]
            assert r["n_pp"] == c.counts[i, j, 0, 0]
            assert r["stderr"] == pytest.approx(correlation_stderr(c, i, j))


class TestSyntheticS:
    def analyze(self, cfg, window_ps=4000):
        a, b, _ = generate_run(cfg)
        _, _, pairs = match(a, b, AdjustmentSet(), window_ps)
        return tally(pairs)

    def test_ideal_visibility(self):
        cfg = SynthConfig(duration_s=2.0, pair_rate_hz=10_000, seed=30)
        c = self.analyze(cfg)
        s = chsh_S(c)
        assert s == pytest.approx(2 * math.sqrt(2), abs=3 * chsh_stderr(c) + 0.01)

    def test_reduced_visibility_scales_linearly(self):
        cfg = SynthConfig(duration_s=2.0, pair_rate_hz=10_000, visibility=0.6, seed=31)
        c = self.analyze(cfg)
        assert chsh_S(c) == pytest.approx(0.6 * 2 * math.sqrt(2), abs=0.05)

    def test_classical_visibility_stays_below_two(self):
        v = 1 / math.sqrt(2) - 0.02
        cfg = SynthConfig(duration_s=2.0, pair_rate_hz=10_000, visibility=v, seed=32)
        c = self.analyze(cfg)
        assert chsh_S(c) <= 2.0 + 3 * chsh_stderr(c)

    def test_near_duplicate_partners_barely_move_s(self):
        # clone 2% of bob's events 30 ps away: multiples are excluded from
        # mutual pairs, so S shifts by less than a few stderr
        cfg = SynthConfig(duration_s=2.0, pair_rate_hz=10_000, seed=33)
        a, b, _ = generate_run(cfg)
        _, _, pairs0 = match(a, b, AdjustmentSet(), 4000)
        c0 = tally(pairs0)
        rng = np.random.default_rng(0)
        take = rng.random(len(b)) < 0.02
        t2 = np.concatenate([b.t, b.t[take] + 30])
        s2 = np.concatenate([b.setting, b.setting[take]])
        d2 = np.concatenate([b.detector, b.detector[take]])
        order = np.lexsort((d2, t2))
        b2 = b.replace(t=t2[order], setting=s2[order], detector=d2[order])
        _, _, pairs2 = match(a, b2, AdjustmentSet(), 4000)
        c2 = tally(pairs2)
        sigma = math.hypot(chsh_stderr(c0), chsh_stderr(c2))
        assert abs(chsh_S(c2) - chsh_S(c0)) <= 4 * sigma


class TestReports:
    def table(self):
        rng = np.random.default_rng(8)
        return counts_from(rng.integers(20, 200, (2, 2, 2, 2)))

    def test_render_contains_all_rows_and_s_line(self):
        c = self.table()
        text = render_report(c)
        lines = text.splitlines()
        assert lines[0].split() == [
            "setting_a", "setting_b", "n_pp", "n_pm", "n_mp", "n_mm", "E", "stderr",
        ]
        body = [ln.split() for ln in lines[1:5]]
        assert [(int(r[0]), int(r[1])) for r in body] == [
            (0, 0), (0, 1), (1, 0), (1, 1),
        ]
        for r in body:
            i, j = int(r[0]), int(r[1])
            assert float(r[6]) == pytest.approx(correlation_E(c, i, j), abs=5e-5)
        s_line = [ln for ln in lines if ln.startswith("S =")]
        assert len(s_line) == 1
        assert f"{chsh_S(c):.4f}" in s_line[0]
        assert f"(n = {c.total()})" in s_line[0]

    def test_csv_round_trips(self, tmp_path):
        c = self.table()
        out = tmp_path / "bell.csv"
        write_report_csv(c, out)
        lines = out.read_text(encoding="ascii").splitlines()
        assert lines[0] == "row,setting_a,setting_b,n_pp,n_pm,n_mp,n_mm,value,stderr"
        assert len(lines) == 6
        for line in lines[1:5]:
            row, i, j, pp, pm, mp, mm, val, err = line.split(",")
            i, j = int(i), int(j)
            assert row == "E"
            assert [int(pp), int(pm), int(mp), int(mm)] == [
                c.counts[i, j, 0, 0], c.counts[i, j, 0, 1],
                c.counts[i, j, 1, 0], c.counts[i, j, 1, 1],
            ]
            assert float(val) == pytest.approx(correlation_E(c, i, j), abs=5e-7)
        row, i, j, pp, pm, mp, mm, val, err = lines[5].split(",")
        assert row == "S" and i == "" and pp == ""
        assert float(val) == pytest.approx(chsh_S(c), abs=5e-7)
        assert float(err) == pytest.approx(chsh_stderr(c), abs=5e-7)
