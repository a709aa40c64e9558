import math

import numpy as np
import pytest

from gnnjed.channel import PROAKIS_C, Transmitter
from gnnjed.estimators import BcjrEqualizer, BpEqualizer
from gnnjed.evaluation import (CSV_COLUMNS, BerResult, StopRule, bmi_sweep, latency_cycles, monte_carlo, read_csv,
                               snr_at_ber, write_csv)

from oracles import ThresholdDetector, awgn_ber


@pytest.mark.parametrize("args, kwargs, expected", [
    (("gnn-flood",), {"iters": 12}, 144),
    (("bcjr", 132, 4), {}, 138),
    (("bp",), {"iters": 7}, 14),
    (("nbp",), {"iters": 1}, 2),
    (("turbo", 132, 4), {"schedule": (2, 5)}, 296),
    (("jed",), {"schedule": "(3,[3,5])"}, 288),
    (("duidd",), {"schedule": "(2,[5,5])"}, 40),
    (("disjoint-gnn",), {"schedule": "(1,[10,10])"}, 140),
])
def test_latency_table(args, kwargs, expected):
    assert latency_cycles(*args, **kwargs) == expected


def test_latency_errors():
    with pytest.raises(ValueError):
        latency_cycles("fpga")
    with pytest.raises(ValueError):
        latency_cycles("bp")


def test_awgn_threshold_matches_q_function():
    tx = Transmitter([1.0], n_symbols=5000)
    res = monte_carlo(ThresholdDetector(), tx, [4.0, 6.0, 8.0], StopRule(200, 400), batch_size=20, seed=1)
    for r in res:
        p = awgn_ber(r.snr_db)
        se = math.sqrt(p * (1 - p) / r.bits_simulated)
        assert r.bit_errors >= 100
        assert abs(r.ber - p) <= 2 * se, (r.snr_db, r.ber, p)


def test_awgn_9_6_db_near_1e5():
    tx = Transmitter([1.0], n_symbols=20000)
    (r,) = monte_carlo(ThresholdDetector(), tx, [9.6], StopRule(40, 200), batch_size=20, seed=2)
    assert awgn_ber(9.6) / 2 < r.ber < 2 * awgn_ber(9.6)


def test_zero_noise_bcjr():
    rx = BcjrEqualizer([1.0], n_symbols=64).fit()
    (r,) = monte_carlo(rx, Transmitter([1.0], n_symbols=64), [60.0], StopRule(1, 500), batch_size=100)
    assert r.bit_errors == 0 and r.ber == 0.0 and r.frames == 500 and r.rel_std_error == math.inf


def test_stop_rule_and_fields():
    rx = BcjrEqualizer(PROAKIS_C, n_symbols=40).fit()
    res = monte_carlo(rx, Transmitter(PROAKIS_C, n_symbols=40), [4.0], StopRule(100, 10_000), batch_size=25)
    (r,) = res
    assert r.bit_errors >= 100 and r.frames % 25 == 0 and r.frames < 10_000
    assert r.ber == r.bit_errors / r.bits_simulated and 0 <= r.ber <= 1
    assert r.rel_std_error == pytest.approx(math.sqrt((1 - r.ber) / r.bit_errors))
    assert r.latency_cycles == 46
    with pytest.raises(ValueError):
        StopRule(0, 10)


def test_one_row_per_iteration():
    rx = BpEqualizer(PROAKIS_C, n_symbols=30, n_iter=4).fit()
    res = monte_carlo(rx, Transmitter(PROAKIS_C, n_symbols=30), [8.0, 10.0], StopRule(50, 300), batch_size=50)
    assert [(r.snr_db, r.iteration) for r in res] == [(s, t) for s in (8.0, 10.0) for t in (1, 2, 3, 4)]
    assert [r.latency_cycles for r in res[:4]] == [2, 4, 6, 8]


def test_identical_seeds_identical_tables_across_workers(tmp_path):
    rx = BpEqualizer(PROAKIS_C, n_symbols=30, n_iter=3).fit()
    tx = Transmitter(PROAKIS_C, n_symbols=30)
    runs = [monte_carlo(rx, tx, [6.0, 9.0], StopRule(60, 400), batch_size=40, seed=5, workers=w) for w in (1, 1, 3)]
    paths = [write_csv(r, tmp_path / f"r{i}.csv") for i, r in enumerate(runs)]
    blobs = [p.read_bytes() for p in paths]
    assert blobs[0] == blobs[1] == blobs[2]


def test_csv_layout(tmp_path):
    r = BerResult("bcjr", 10.0, 1, 100, 3, 2, 1, 0.03, 0.5, 0.5, 138)
    path = write_csv([r], tmp_path / "out.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    row = read_csv(path)[0]
    assert row["receiver"] == "bcjr" and float(row["ber"]) == 0.03 and int(row["latency_cycles"]) == 138


class _Fixed:
    receiver_id = "fixed"

    def __init__(self, value):
        self.value = value

    def staged_bit_llrs(self, batch):
        b = batch.symbol_bits
        return [np.where(b == 0, self.value, -self.value).astype(float)]

    def target_bits(self, batch):
        return batch.symbol_bits

    def stage_latency(self):
        return [0]


def test_bmi_limits():
    tx = Transmitter([1.0], n_symbols=100)
    (perfect,) = bmi_sweep(_Fixed(30.0), tx, [0.0], min_bits=1000, batch_size=10)
    (zero,) = bmi_sweep(_Fixed(0.0), tx, [0.0], min_bits=1000, batch_size=10)
    assert perfect.bmi > 0.999 and zero.bmi == pytest.approx(0.0, abs=1e-12)


def test_bmi_non_decreasing_for_bcjr_on_awgn():
    rx = BcjrEqualizer([1.0], n_symbols=1000).fit()
    res = bmi_sweep(rx, Transmitter([1.0], n_symbols=1000), [-4.0, -2.0, 0.0, 2.0, 4.0], min_bits=100_000,
                    batch_size=50)
    bmis = [r.bmi for r in res]
    # per-bit information terms are bounded by 1, so one standard error is at most 1/sqrt(n)
    se = 1 / math.sqrt(res[0].bits)
    assert all(b2 >= b1 - se for b1, b2 in zip(bmis, bmis[1:]))
    assert bmis[-1] > bmis[0] + 0.2


def test_snr_at_ber():
    assert snr_at_ber([0, 1, 2], [1e-1, 1e-2, 1e-3], 1e-2) == pytest.approx(1.0)
    assert snr_at_ber([0, 1], [1e-1, 1e-3], 1e-2) == pytest.approx(0.5)
    assert math.isnan(snr_at_ber([0, 1], [1e-1, 1e-2], 1e-5))
