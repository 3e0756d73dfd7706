"""Computable complexity proxies: model-based scores and compression lengths."""

from __future__ import annotations

import bz2
import lzma
import math
import zlib
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import (
    DegenerateDenominator,
    DistributionMismatch,
    EmptyText,
    InvalidBound,
    ModelMismatch,
    UnsupportedCapability,
    ValidationError,
)
from .providers import DistributionSlice, Provider

XPPL_MODES = ("exact", "top-k")

SCORE_COLUMNS = (
    "text_id", "token_count", "cross_entropy", "perplexity", "cross_perplexity", "binoculars",
    "base_model_id", "ref_model_id", "tokenizer_id", "xppl_mode", "xppl_mass_deficit",
)
QUAD_COLUMNS = ("pair_id", "Q", "stego_binoculars", "cover_binoculars", "stego_tokens", "cover_tokens", "equal_length_flag")
COMPRESSION_COLUMNS = ("text_id", "compressed_bits", "raw_bits", "ratio", "compressor_id")


@dataclass(frozen=True)
class ScoreRecord:
    text_id: str
    token_count: int
    cross_entropy: float
    perplexity: float
    cross_perplexity: float
    binoculars: float
    base_model_id: str
    ref_model_id: str
    tokenizer_id: str
    xppl_mode: str
    xppl_mass_deficit: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreRecord":
        return cls(**{k: d[k] for k in SCORE_COLUMNS})


@dataclass(frozen=True)
class QuadScore:
    pair_id: str
    Q: float
    stego_record: ScoreRecord
    cover_record: ScoreRecord
    equal_length_flag: bool

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "Q": self.Q,
            "equal_length_flag": self.equal_length_flag,
            "stego_record": self.stego_record.to_dict(),
            "cover_record": self.cover_record.to_dict(),
        }

    def row(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "Q": self.Q,
            "stego_binoculars": self.stego_record.binoculars,
            "cover_binoculars": self.cover_record.binoculars,
            "stego_tokens": self.stego_record.token_count,
            "cover_tokens": self.cover_record.token_count,
            "equal_length_flag": self.equal_length_flag,
        }


@dataclass(frozen=True)
class CompressionEstimate:
    text_id: str
    compressed_bits: int
    raw_bits: int
    compressor_id: str

    @property
    def ratio(self) -> float:
        return self.compressed_bits / self.raw_bits

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratio"] = self.ratio
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CompressionEstimate":
        return cls(d["text_id"], int(d["compressed_bits"]), int(d["raw_bits"]), d["compressor_id"])


# Model-based proxies ----------------------------------------------------------

def cross_entropy(text: str, model: Provider) -> float:
    """Mean negative base-2 log-probability per token, in bits/token."""
    return _mean_surprisal(model.token_logprobs(text))


def _mean_surprisal(lps) -> float:
    if not lps:
        raise EmptyText("text produced no scored tokens")
    return -math.fsum(t.logprob for t in lps) / len(lps)


def perplexity(text: str, model: Provider) -> float:
    return 2.0 ** cross_entropy(text, model)


def _check_pair(base: Provider, ref: Provider) -> None:
    if base.tokenizer_id != ref.tokenizer_id:
        raise DistributionMismatch(
            f"tokenizers differ: {base.tokenizer_id!r} vs {ref.tokenizer_id!r}"
        )


def _position_ce(p_base: np.ndarray, p_ref: np.ndarray) -> float:
    return float(-np.dot(p_base, np.log2(p_ref)))


def _exact_rate(text: str, base: Provider, ref: Provider) -> float:
    for m in (base, ref):
        if not getattr(m, "full_vocabulary", False) or not hasattr(m, "full_distributions"):
            raise UnsupportedCapability(f"{m!r} cannot expose full next-token distributions")
    if tuple(base.vocabulary) != tuple(ref.vocabulary):
        raise DistributionMismatch("models do not share a vocabulary")
    rows_b = base.full_distributions(text)
    rows_r = ref.full_distributions(text)
    if len(rows_b) != len(rows_r) or not rows_b:
        raise DistributionMismatch("models scored different numbers of positions")
    return math.fsum(_position_ce(b, r) for b, r in zip(rows_b, rows_r)) / len(rows_b)


def _topk_position(sb: DistributionSlice, sr: DistributionSlice) -> tuple[float, float]:
    db, dr = sb.as_dict(), sr.as_dict()
    shared = [t for t in db if t in dr]
    if not shared:
        raise DistributionMismatch(f"no shared tokens in top-k at position {sb.prefix_position}")
    pb = np.array([db[t] for t in shared])
    pr = np.array([dr[t] for t in shared])
    ce = _position_ce(pb / pb.sum(), pr / pr.sum())
    return ce, 1.0 - min(sb.mass, sr.mass)


def _topk_rate(text: str, base: Provider, ref: Provider, k: int) -> tuple[float, float]:
    slices_b = base.position_distributions(text, k)
    slices_r = ref.position_distributions(text, k)
    if len(slices_b) != len(slices_r) or not slices_b:
        raise DistributionMismatch("models scored different numbers of positions")
    parts = [_topk_position(b, r) for b, r in zip(slices_b, slices_r)]
    rate = math.fsum(ce for ce, _ in parts) / len(parts)
    deficit = max(d for _, d in parts)
    return rate, max(0.0, deficit)


def log2_cross_perplexity(
    text: str, base: Provider, ref: Provider, mode: str = "exact", top_k: int | None = None
) -> tuple[float, float]:
    """Return ``(log2 X-PPL, mass deficit)``.

    Per position ``i`` the cross-entropy ``-sum_v P_base(v) log2 P_ref(v)`` is
    taken between the two next-token distributions, then averaged over
    positions. ``top-k`` keeps tokens present in both top-k lists and
    renormalizes each side over them; the deficit is the worst per-position
    ``1 - min(mass_base, mass_ref)``.
    """
    if mode not in XPPL_MODES:
        raise ValidationError(f"xppl mode must be one of {XPPL_MODES}")
    _check_pair(base, ref)
    if mode == "exact":
        return _exact_rate(text, base, ref), 0.0
    if top_k is None or top_k < 1:
        raise ValidationError("top-k mode requires top_k >= 1")
    return _topk_rate(text, base, ref, top_k)


def cross_perplexity(
    text: str, base: Provider, ref: Provider, mode: str = "exact", top_k: int | None = None
) -> float:
    return 2.0 ** log2_cross_perplexity(text, base, ref, mode, top_k)[0]


def binoculars(
    text: str,
    base: Provider,
    ref: Provider,
    mode: str = "exact",
    top_k: int | None = None,
    text_id: str = "",
) -> ScoreRecord:
    """Score ``text``: base-model log-perplexity over log cross-perplexity."""
    lps = base.token_logprobs(text)
    H = _mean_surprisal(lps)
    log_xppl, deficit = log2_cross_perplexity(text, base, ref, mode, top_k)
    if log_xppl <= 0.0:
        raise DegenerateDenominator(f"cross-perplexity {2.0 ** log_xppl:g} <= 1")
    return ScoreRecord(
        text_id=text_id,
        token_count=len(lps),
        cross_entropy=H,
        perplexity=2.0 ** H,
        cross_perplexity=2.0 ** log_xppl,
        binoculars=H / log_xppl,
        base_model_id=base.model_id,
        ref_model_id=ref.model_id,
        tokenizer_id=base.tokenizer_id,
        xppl_mode=mode,
        xppl_mass_deficit=deficit,
    )


def binoculars_from_values(ppl: float, xppl: float) -> float:
    if xppl <= 1.0:
        raise DegenerateDenominator(f"cross-perplexity {xppl:g} <= 1")
    return math.log2(ppl) / math.log2(xppl)


def quadroculars(stego: ScoreRecord, cover: ScoreRecord, pair_id: str = "") -> QuadScore:
    for attr in ("base_model_id", "ref_model_id", "tokenizer_id"):
        if getattr(stego, attr) != getattr(cover, attr):
            raise ModelMismatch(f"{attr} differs: {getattr(stego, attr)!r} vs {getattr(cover, attr)!r}")
    return QuadScore(
        pair_id=pair_id or f"{stego.text_id}|{cover.text_id}",
        Q=stego.binoculars - cover.binoculars,
        stego_record=stego,
        cover_record=cover,
        equal_length_flag=stego.token_count == cover.token_count,
    )


@dataclass(frozen=True)
class ResidualBound:
    bound: float
    delta_term: float
    delta_scale: float

    @property
    def total(self) -> float:
        return self.bound + self.delta_term


def residual_bound(
    epsilon: float, delta: float, D: float, log_alphabet: float | None = None
) -> ResidualBound:
    """Bound on the Quadroculars residual for model error ``epsilon`` and
    cross-perplexity drift ``delta``, with ``D`` the covertext's log2 X-PPL.

    ``bound`` is ``2*epsilon/(D - delta)``. The denominator-perturbation term
    is ``delta * (log_alphabet + epsilon) / (D * (D - delta))``; it is
    reported only when ``log_alphabet`` (bits per token ceiling) is given.
    """
    if epsilon < 0 or delta < 0:
        raise InvalidBound("epsilon and delta must be non-negative")
    if D <= delta:
        raise InvalidBound(f"D={D} must exceed delta={delta}")
    bound = 2.0 * epsilon / (D - delta)
    if log_alphabet is None:
        return ResidualBound(bound, 0.0, float("nan"))
    scale = (log_alphabet + epsilon) / (D * (D - delta))
    return ResidualBound(bound, delta * scale, scale)


# Compression proxies ----------------------------------------------------------

COMPRESSORS: dict[str, tuple[Callable[[bytes], bytes], Callable[[bytes], bytes]]] = {
    "zlib-9": (lambda b: zlib.compress(b, 9), zlib.decompress),
    "zlib-6": (lambda b: zlib.compress(b, 6), zlib.decompress),
    "bz2-9": (lambda b: bz2.compress(b, 9), bz2.decompress),
    "lzma-6": (lambda b: lzma.compress(b, preset=6), lzma.decompress),
}
DEFAULT_COMPRESSOR = "zlib-9"


def _as_bytes(x: str | bytes) -> bytes:
    return x.encode("utf-8") if isinstance(x, str) else bytes(x)


def _compressor(compressor_id: str):
    try:
        return COMPRESSORS[compressor_id]
    except KeyError:
        raise ValidationError(f"unknown compressor {compressor_id!r}; have {sorted(COMPRESSORS)}") from None


def compress(x: str | bytes, compressor_id: str = DEFAULT_COMPRESSOR) -> bytes:
    return _compressor(compressor_id)[0](_as_bytes(x))


def decompress(blob: bytes, compressor_id: str = DEFAULT_COMPRESSOR) -> bytes:
    return _compressor(compressor_id)[1](blob)


def compressed_length(
    text: str | bytes, compressor_id: str = DEFAULT_COMPRESSOR, text_id: str = ""
) -> CompressionEstimate:
    raw = _as_bytes(text)
    if not raw:
        raise EmptyText("cannot compress empty input")
    return CompressionEstimate(text_id, 8 * len(compress(raw, compressor_id)), 8 * len(raw), compressor_id)


def ncd(x: str | bytes, y: str | bytes, compressor_id: str = DEFAULT_COMPRESSOR) -> float:
    bx, by = _as_bytes(x), _as_bytes(y)
    if not bx or not by:
        raise EmptyText("ncd needs two non-empty inputs")
    cx = len(compress(bx, compressor_id))
    cy = len(compress(by, compressor_id))
    cxy = len(compress(bx + by, compressor_id))
    return (cxy - min(cx, cy)) / max(cx, cy)
