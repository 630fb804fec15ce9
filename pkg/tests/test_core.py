import numpy as np
import pytest
from hypothesis import given, strategies as st

from coinlab.core import (
    ALICE,
    BOB,
    EventRecord,
    EventStream,
    RunMetadata,
    angle_of,
    check_no_duplicates,
    decode_symbol,
    normalize_side,
    quantize,
    quantize_array,
    sort_canonical,
    symbol_code,
)
from oracles import quantize_oracle


class TestSymbolCode:
    def test_all_four_codes(self):
        assert symbol_code(0, 0) == 0
        assert symbol_code(1, 0) == 1
        assert symbol_code(0, 1) == 2
        assert symbol_code(1, 1) == 3

    def test_roundtrip(self):
        for code in range(4):
            assert symbol_code(*decode_symbol(code)) == code

    @pytest.mark.parametrize("setting,detector", [(2, 0), (-1, 0), (0, 2), (0, -1)])
    def test_rejects_non_bits(self, setting, detector):
        with pytest.raises(ValueError):
            symbol_code(setting, detector)

    def test_decode_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            decode_symbol(4)


class TestAngles:
    def test_alice_table(self):
        assert [angle_of(ALICE, c) for c in range(4)] == [0.0, 45.0, 90.0, 135.0]

    def test_bob_table(self):
        assert [angle_of(BOB, c) for c in range(4)] == [22.5, 67.5, 112.5, 157.5]

    def test_detector_bit_adds_quarter_turn(self):
        for side in (ALICE, BOB):
            for setting in (0, 1):
                assert angle_of(side, setting + 2) == angle_of(side, setting) + 90.0

    def test_bad_side(self):
        with pytest.raises(ValueError):
            angle_of("carol", 0)

    def test_side_normalization(self):
        assert normalize_side("Alice") == ALICE
        assert normalize_side(" BOB ") == BOB


class TestQuantize:
    @pytest.mark.parametrize(
        "t,tick,expected",
        [
            (0, 75, 0),
            (112, 75, 75),
            (113, 75, 150),
            (37, 75, 0),
            (38, 75, 75),
            (150, 75, 150),
            (3, 2, 4),      # exact tie resolves upward
            (-3, 2, -2),    # and still upward for negatives
            (-112, 75, -75),
        ],
    )
    def test_examples(self, t, tick, expected):
        assert quantize(t, tick) == expected
        assert quantize_oracle(t, tick) == expected

    @given(st.integers(-(10**12), 10**12), st.integers(1, 10**4))
    def test_matches_bruteforce(self, t, tick):
        assert quantize(t, tick) == quantize_oracle(t, tick)

    @given(st.integers(-(10**12), 10**12), st.integers(1, 10**4))
    def test_idempotent(self, t, tick):
        q = quantize(t, tick)
        assert q % tick == 0
        assert quantize(q, tick) == q

    def test_rejects_bad_tick(self):
        for tick in (0, -75):
            with pytest.raises(ValueError):
                quantize(100, tick)
            with pytest.raises(ValueError):
                quantize_array(np.array([100.0]), tick)

    def test_array_matches_scalar(self):
        rng = np.random.default_rng(0)
        t = rng.integers(-(10**9), 10**9, 500)
        for tick in (1, 2, 75, 1000):
            got = quantize_array(t.astype(np.float64), tick)
            want = np.array([quantize(int(v), tick) for v in t])
            np.testing.assert_array_equal(got, want)

    def test_array_half_tie_goes_up(self):
        got = quantize_array(np.array([3.0, -3.0, 1.0]), 2)
        np.testing.assert_array_equal(got, [4, -2, 2])


class TestEventStream:
    def make(self):
        return EventStream(
            ALICE,
            np.array([0, 75, 75, 150]),
            np.array([0, 1, 1, 0]),
            np.array([0, 0, 1, 1]),
            RunMetadata("r0", 75),
        )

    def test_basic(self):
        s = self.make()
        assert len(s) == 4
        assert s.t.dtype == np.int64
        assert list(s.symbols) == [0, 1, 3, 2]
        assert s.record(1) == EventRecord(75, 1, 0)
        assert [r.t for r in s.records()] == [0, 75, 75, 150]

    def test_equality(self):
        assert self.make() == self.make()
        other = self.make()
        other.t = other.t.copy()
        other.t[0] = 75
        assert self.make() != other

    def test_from_records_roundtrip(self):
        s = self.make()
        again = EventStream.from_records(ALICE, s.records(), s.meta)
        assert again == s

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            EventStream(ALICE, np.array([100, 50]), np.zeros(2), np.zeros(2))

    def test_rejects_non_binary_bits(self):
        with pytest.raises(ValueError):
            EventStream(ALICE, np.array([0, 75]), np.array([0, 2]), np.zeros(2))
        with pytest.raises(ValueError):
            EventStream(ALICE, np.array([0, 75]), np.zeros(2), np.array([3, 0]))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            EventStream(ALICE, np.array([0, 75]), np.zeros(1), np.zeros(2))

    def test_rejects_bad_side(self):
        with pytest.raises(ValueError):
            EventStream("charlie", np.array([0]), np.zeros(1), np.zeros(1))

    def test_empty_is_valid(self):
        s = EventStream(BOB, np.array([], dtype=np.int64), np.array([]), np.array([]))
        assert len(s) == 0


class TestCanonicalOrder:
    def test_sort_by_time_then_detector(self):
        t = np.array([100, 50, 100], dtype=np.int64)
        s = np.array([0, 1, 1], dtype=np.uint8)
        d = np.array([1, 0, 0], dtype=np.uint8)
        t2, s2, d2 = sort_canonical(t, s, d)
        assert list(t2) == [50, 100, 100]
        assert list(d2) == [0, 0, 1]
        assert list(s2) == [1, 1, 0]

    def test_duplicate_detection(self):
        t = np.array([50, 100, 100, 100], dtype=np.int64)
        d = np.array([0, 0, 0, 1], dtype=np.uint8)
        dup = check_no_duplicates(t, d)
        # same timestamp on different detectors is legal; same (t, det) is not
        assert list(dup) == [False, False, True, False]
