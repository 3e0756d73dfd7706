"""Channel quality and detection statistics."""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass
from typing import Sequence

from .corpus import segment_sentences
from .errors import (
    CompressorMismatch,
    EmptySamples,
    InvalidF,
    LengthMismatch,
    ValidationError,
    ZeroVariance,
)
from .metrics import CompressionEstimate
from .payload import COLOR_NAMES, PALETTE, Color
from .special import t_sf_two_sided

PAIRED_COLUMNS = (
    "n", "mean_a", "std_a", "min_a", "max_a", "mean_b", "std_b", "min_b", "max_b",
    "mean_diff", "t_stat", "df", "p_value", "frac_decrease", "cohens_d",
)
CAPACITY_COLUMNS = ("condition", "n_b", "f", "c_sentence", "raw_c_sentence", "clamped", "sentences_per_kb", "c_per_kb")


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: tuple[tuple[int, ...], ...]

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    @property
    def overall_accuracy(self) -> float:
        return sum(self.counts[i][i] for i in range(len(PALETTE))) / self.total

    @property
    def per_color_accuracy(self) -> tuple[float | None, ...]:
        return tuple(
            row[i] / sum(row) if sum(row) else None for i, row in enumerate(self.counts)
        )

    def to_dict(self) -> dict:
        return {
            "labels": list(COLOR_NAMES),
            "counts": [list(r) for r in self.counts],
            "total": self.total,
            "per_color_accuracy": list(self.per_color_accuracy),
            "overall_accuracy": self.overall_accuracy,
        }

    def csv_rows(self) -> list[dict]:
        return [
            {"assigned": COLOR_NAMES[i], **{COLOR_NAMES[j]: row[j] for j in range(len(row))}}
            for i, row in enumerate(self.counts)
        ]


def confusion(assigned: Sequence[Color | str], decoded: Sequence[Color | str]) -> ConfusionMatrix:
    """Rows are assigned colors, columns decoded colors."""
    if len(assigned) != len(decoded):
        raise LengthMismatch(f"{len(assigned)} assigned vs {len(decoded)} decoded")
    if not assigned:
        raise LengthMismatch("confusion needs at least one pair")
    k = len(PALETTE)
    counts = [[0] * k for _ in range(k)]
    for a, d in zip(assigned, decoded):
        counts[Color.parse(a)][Color.parse(d)] += 1
    return ConfusionMatrix(tuple(tuple(r) for r in counts))


@dataclass(frozen=True)
class EffectiveCapacity:
    bits: float
    raw: float
    clamped: bool


def effective_capacity_detail(n_b: float, f: float) -> EffectiveCapacity:
    if n_b < 1:
        raise ValidationError(f"n_b must be >= 1, got {n_b}")
    if not (0.0 <= f <= 1.0) or math.isnan(f):
        raise InvalidF(f"f must lie in [0, 1], got {f}")
    # 0 * log(1/0) terms are taken as 0 (continuous extension at f = 0 and f = 1)
    hit = 0.0 if f == 0.0 else f * math.log2(1.0 / f)
    miss = 0.0 if f == 1.0 else (1.0 - f) * (math.log2(2.0**n_b - 1.0) - math.log2(1.0 - f))
    raw = n_b - hit - miss
    return EffectiveCapacity(max(raw, 0.0), raw, raw < 0.0)


def effective_capacity(n_b: float, f: float) -> float:
    """Bits per sentence left after imperfect decoding at success rate ``f``."""
    return effective_capacity_detail(n_b, f).bits


@dataclass(frozen=True)
class CapacityReport:
    n_b: float
    f: float | None
    c_sentence: float
    sentences_per_kb: float
    raw_c_sentence: float | None = None
    clamped: bool = False
    condition: str = ""

    @property
    def c_per_kb(self) -> float:
        return self.c_sentence * self.sentences_per_kb

    def to_dict(self) -> dict:
        d = asdict(self)
        d["c_per_kb"] = self.c_per_kb
        return d


def sentence_density(text_samples: Sequence[str], sentence_counts: Sequence[int] | None = None) -> float:
    """Sentences per kB (1000 bytes of UTF-8)."""
    if not text_samples:
        raise EmptySamples("no text samples")
    total_bytes = sum(len(t.encode("utf-8")) for t in text_samples)
    if total_bytes == 0:
        raise EmptySamples("text samples are empty")
    if sentence_counts is None:
        sentence_counts = [len(segment_sentences(t)) if t.strip() else 0 for t in text_samples]
    return sum(sentence_counts) / (total_bytes / 1000.0)


def per_kb_capacity(
    c_sentence: float,
    text_samples: Sequence[str],
    sentence_counts: Sequence[int] | None = None,
    n_b: float = 3,
    f: float | None = None,
    condition: str = "",
) -> CapacityReport:
    density = sentence_density(text_samples, sentence_counts)
    return CapacityReport(n_b, f, c_sentence, density, condition=condition)


def capacity_report(n_b: float, f: float, text_samples: Sequence[str],
                    sentence_counts: Sequence[int] | None = None, condition: str = "") -> CapacityReport:
    detail = effective_capacity_detail(n_b, f)
    density = sentence_density(text_samples, sentence_counts)
    return CapacityReport(n_b, f, detail.bits, density, detail.raw, detail.clamped, condition)


@dataclass(frozen=True)
class PairedStats:
    n: int
    mean_a: float
    std_a: float
    min_a: float
    max_a: float
    mean_b: float
    std_b: float
    min_b: float
    max_b: float
    mean_diff: float
    t_stat: float
    df: int
    p_value: float
    frac_decrease: float
    cohens_d: float

    @property
    def mean_shift(self) -> float:
        """Mean of ``b - a``: the shift from condition a to condition b."""
        return -self.mean_diff

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_shift"] = self.mean_shift
        return d


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> PairedStats:
    """Two-sided paired Student t-test on ``d = a - b``.

    ``frac_decrease`` is the share of pairs with ``b < a``; ``cohens_d`` is
    ``mean(d) / sd(d)``, so it is negative when ``b`` tends to be larger.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} values")
    n = len(a)
    if n < 2:
        raise LengthMismatch("paired t-test needs at least two pairs")
    d = [x - y for x, y in zip(a, b)]
    mean_d = math.fsum(d) / n
    sd = statistics.stdev(d)
    if sd == 0.0 or all(x == d[0] for x in d):
        raise ZeroVariance(f"all {n} differences equal {d[0]!r}")
    t = mean_d / (sd / math.sqrt(n))
    return PairedStats(
        n=n,
        mean_a=statistics.fmean(a), std_a=statistics.stdev(a), min_a=min(a), max_a=max(a),
        mean_b=statistics.fmean(b), std_b=statistics.stdev(b), min_b=min(b), max_b=max(b),
        mean_diff=mean_d,
        t_stat=t,
        df=n - 1,
        p_value=t_sf_two_sided(t, n - 1),
        frac_decrease=sum(1 for x, y in zip(a, b) if y < x) / n,
        cohens_d=mean_d / sd,
    )


@dataclass(frozen=True)
class BoundAudit:
    """Directional check of the payload-complexity floor using compressed lengths.

    Compressed lengths only upper-bound algorithmic complexity, so a pass or a
    fail here is evidence, not a verdict.
    """

    gap: int
    payload_bits: int
    log2_n: float
    slack: float
    passed: bool
    compressor_id: str
    label: str = "HEURISTIC"

    def to_dict(self) -> dict:
        return asdict(self)


def bound_audit(
    cover_est: CompressionEstimate,
    stego_est: CompressionEstimate,
    payload_bits: int,
    slack: float = 0.0,
) -> BoundAudit:
    if cover_est.compressor_id != stego_est.compressor_id:
        raise CompressorMismatch(f"{cover_est.compressor_id!r} vs {stego_est.compressor_id!r}")
    gap = stego_est.compressed_bits - cover_est.compressed_bits
    log2_n = math.log2(cover_est.raw_bits + stego_est.raw_bits)
    return BoundAudit(
        gap=gap,
        payload_bits=payload_bits,
        log2_n=log2_n,
        slack=slack,
        passed=gap >= payload_bits - slack * log2_n,
        compressor_id=cover_est.compressor_id,
    )
