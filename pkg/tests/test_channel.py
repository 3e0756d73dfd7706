import math

import numpy as np
import pytest
from scipy import stats

from synstego.channel import (
    bound_audit,
    capacity_report,
    confusion,
    effective_capacity,
    effective_capacity_detail,
    paired_t_test,
    per_kb_capacity,
    sentence_density,
)
from synstego.errors import (
    CompressorMismatch,
    EmptySamples,
    InvalidF,
    LengthMismatch,
    ValidationError,
    ZeroVariance,
)
from synstego.metrics import CompressionEstimate
from synstego.payload import Color

# Frozen from mpmath at 50 digits.
C_0957 = 2.6234018227047526505
C_0548 = 0.73773376304190938424


def test_confusion_counts():
    assigned = [Color.RED, Color.RED, Color.BLUE, Color.WHITE]
    decoded = ["red", "green", "blue", "white"]
    cm = confusion(assigned, decoded)
    assert cm.total == 4
    assert cm.counts[0][0] == 1 and cm.counts[0][2] == 1
    assert cm.overall_accuracy == 0.75
    acc = cm.per_color_accuracy
    assert acc[0] == 0.5 and acc[Color.BLUE] == 1.0 and acc[Color.YELLOW] is None
    rows = cm.csv_rows()
    assert len(rows) == 8 and rows[0]["assigned"] == "red" and rows[0]["green"] == 1
    with pytest.raises(LengthMismatch):
        confusion([Color.RED], [])
    with pytest.raises(LengthMismatch):
        confusion([], [])


@pytest.mark.parametrize("n_b", [1, 2, 3, 4])
def test_capacity_endpoints(n_b):
    assert effective_capacity(n_b, 1.0) == n_b
    assert effective_capacity(n_b, 0.0) == pytest.approx(math.log2(2**n_b / (2**n_b - 1)), rel=1e-12)
    assert effective_capacity(n_b, 1 / 2**n_b) == pytest.approx(0.0, abs=1e-12)


def test_capacity_known_values():
    assert effective_capacity(3, 0.957) == pytest.approx(C_0957, abs=1e-9)
    assert effective_capacity(3, 0.548) == pytest.approx(C_0548, abs=1e-9)


def test_capacity_grid_monotone_and_bounded():
    for n_b in range(1, 6):
        floor = 1 / 2**n_b
        grid = np.linspace(floor, 1.0, 200)
        values = [effective_capacity(n_b, float(f)) for f in grid]
        assert all(0.0 <= v <= n_b + 1e-12 for v in values)
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_capacity_clamp_and_errors():
    # below chance the formula rises again; it never goes negative in exact arithmetic
    d = effective_capacity_detail(3, 0.1)
    assert d.bits == d.raw > 0 and not d.clamped
    assert effective_capacity_detail(3, 0.125).bits >= 0.0
    assert not effective_capacity_detail(3, 0.9).clamped
    with pytest.raises(InvalidF):
        effective_capacity(3, 1.2)
    with pytest.raises(ValidationError):
        effective_capacity(0, 0.5)


def test_sentence_density_and_per_kb():
    assert sentence_density(["a" * 1000], [14]) == 14.0
    assert sentence_density(["One. Two! Three?"]) == pytest.approx(3 / 0.016)
    rep = per_kb_capacity(3.0, ["a" * 2000], [26])
    assert rep.sentences_per_kb == 13.0 and rep.c_per_kb == 39.0
    rep = capacity_report(3, 0.957, ["a" * 1000], [15])
    assert rep.c_per_kb == pytest.approx(C_0957 * 15)
    with pytest.raises(EmptySamples):
        sentence_density([])
    with pytest.raises(EmptySamples):
        sentence_density(["", ""])


def test_paired_t_fixture():
    a = [1.1, 0.8, 1.3, 1.4, 0.9]
    b = [1.0, 1.0, 1.0, 1.0, 1.0]
    s = paired_t_test(a, b)
    assert s.t_stat == pytest.approx(0.8770580193070292, rel=1e-12)
    assert s.df == 4
    assert s.p_value == pytest.approx(0.4299733794885493, rel=1e-10)
    assert s.frac_decrease == 0.6
    assert s.mean_shift == pytest.approx(-0.1)


def test_paired_t_against_reference_and_antisymmetry():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        a = rng.normal(0, 1, n).tolist()
        b = (np.asarray(a) + rng.normal(0.2, 0.5, n)).tolist()
        s, r = paired_t_test(a, b), paired_t_test(b, a)
        ref = stats.ttest_rel(a, b)
        assert s.t_stat == pytest.approx(ref.statistic, rel=1e-9)
        assert s.p_value == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-300)
        assert r.t_stat == pytest.approx(-s.t_stat, rel=1e-12)
        assert r.p_value == pytest.approx(s.p_value, rel=1e-12)
        assert r.cohens_d == pytest.approx(-s.cohens_d, rel=1e-12)


def test_paired_t_errors():
    with pytest.raises(ZeroVariance):
        paired_t_test([1.0, 2.0, 3.0], [0.0, 1.0, 2.0])
    with pytest.raises(LengthMismatch):
        paired_t_test([1.0], [2.0])
    with pytest.raises(LengthMismatch):
        paired_t_test([1.0, 2.0], [2.0])


def _est(bits, raw, cid="zlib-9"):
    return CompressionEstimate("x", bits, raw, cid)


def test_bound_audit():
    a = bound_audit(_est(800, 2000), _est(830, 2100), 30)
    assert a.gap == 30 and a.passed and a.label == "HEURISTIC"
    b = bound_audit(_est(800, 2000), _est(820, 2100), 30)
    assert not b.passed
    c = bound_audit(_est(800, 2000), _est(820, 2100), 30, slack=1.0)
    assert c.passed  # 20 >= 30 - log2(4100)
    with pytest.raises(CompressorMismatch):
        bound_audit(_est(1, 8), _est(1, 8, "bz2-9"), 3)
