"""Corpus loading, sentence segmentation and seeded dataset construction."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusTooSmall, EmptyInput, IoError, ParseError, ValidationError
from .payload import BITS_PER_COLOR, COLOR_NAMES, BitString, Color, ColorSequence, colors_to_bits

DEFAULT_N_RANGE = (1, 6)
RNG_NAME = "numpy.PCG64"
SAMPLING_NOTE = "sentences without replacement within an entry, with replacement across entries"

_BOUNDARY = re.compile(r"[.!?]+[\"'”’)\]]*(?=\s)")
_BLANK_LINE = re.compile(r"\n[ \t]*\n")


@dataclass(frozen=True)
class SentenceUnit:
    text: str
    source_id: str = "doc"
    index_in_doc: int = 0

    def to_dict(self) -> dict:
        return {"text": self.text, "source_id": self.source_id, "index_in_doc": self.index_in_doc}

    @classmethod
    def from_dict(cls, d: dict) -> "SentenceUnit":
        return cls(d["text"], d.get("source_id", "doc"), int(d.get("index_in_doc", 0)))


@dataclass(frozen=True)
class DatasetEntry:
    entry_id: str
    sentences: tuple[SentenceUnit, ...]
    colors: tuple[Color, ...]
    payload_bits: BitString
    seed_info: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.sentences)
        if n < 1 or len(self.colors) != n or len(self.payload_bits) != BITS_PER_COLOR * n:
            raise ValidationError(f"malformed dataset entry {self.entry_id!r}")

    @property
    def n(self) -> int:
        return len(self.sentences)

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "sentences": [s.to_dict() for s in self.sentences],
            "colors": [c.label for c in self.colors],
            "payload_bits": str(self.payload_bits),
            "seed_info": self.seed_info,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetEntry":
        return cls(
            entry_id=d["entry_id"],
            sentences=tuple(SentenceUnit.from_dict(s) for s in d["sentences"]),
            colors=tuple(Color.parse(c) for c in d["colors"]),
            payload_bits=BitString.from_str(d["payload_bits"]),
            seed_info=d.get("seed_info", {}),
        )


@lru_cache(maxsize=None)
def _bundled_abbreviations() -> frozenset[str]:
    text = resources.files("synstego").joinpath("data/abbreviations.txt").read_text("utf-8")
    return parse_abbreviations(text)


def parse_abbreviations(text: str) -> frozenset[str]:
    return frozenset(
        line.strip().lower().rstrip(".")
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    )


def load_abbreviations(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        return _bundled_abbreviations()
    try:
        return parse_abbreviations(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read abbreviation list {path}: {exc}") from exc


def _ends_with_abbreviation(chunk: str, abbreviations: frozenset[str]) -> bool:
    if not chunk.endswith("."):
        return False
    word = chunk.rsplit(None, 1)[-1].lower().rstrip(".")
    word = word.lstrip("\"'(“‘[")
    return word in abbreviations


def segment_sentences(
    text: str,
    source_id: str = "doc",
    abbreviations: frozenset[str] | None = None,
) -> list[SentenceUnit]:
    """Split ``text`` at terminal punctuation followed by whitespace.

    Blank lines also end a sentence. Whitespace inside a sentence, including
    single line breaks, is collapsed to one space.
    """
    if not text or not text.strip():
        raise EmptyInput("input text is empty")
    abbreviations = _bundled_abbreviations() if abbreviations is None else abbreviations

    pieces: list[str] = []
    for block in _BLANK_LINE.split(text):
        start = 0
        for m in _BOUNDARY.finditer(block):
            candidate = block[start:m.end()]
            if _ends_with_abbreviation(candidate.rstrip("\"'”’)]"), abbreviations):
                continue
            pieces.append(candidate)
            start = m.end()
        pieces.append(block[start:])

    texts = [" ".join(p.split()) for p in pieces]
    return [
        SentenceUnit(t, source_id, i)
        for i, t in enumerate(t for t in texts if t)
    ]


def load_corpus(
    path: str | Path,
    format: str | None = None,
    abbreviations: frozenset[str] | None = None,
) -> list[SentenceUnit]:
    """Read a plain-text (segmented here) or JSONL (pre-segmented) corpus.

    ``format`` is ``"text"`` or ``"jsonl"``; inferred from the suffix when omitted.
    """
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "text"
    try:
        raw = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IoError(f"cannot read corpus {path}: {exc}") from exc

    if format in ("text", "plain-text", "txt"):
        return segment_sentences(raw, source_id=path.stem, abbreviations=abbreviations)
    if format != "jsonl":
        raise ValidationError(f"unknown corpus format {format!r}")

    units: list[SentenceUnit] = []
    counters: dict[str, int] = {}
    for lineno, line in enumerate(raw.splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, lineno) from exc
        if not isinstance(row, dict) or not isinstance(row.get("text"), str):
            raise ParseError("row lacks a string 'text' field", lineno)
        text = " ".join(row["text"].split())
        if not text:
            raise ParseError("empty 'text' field", lineno)
        source = str(row.get("source_id", path.stem))
        idx = counters.get(source, 0)
        counters[source] = idx + 1
        units.append(SentenceUnit(text, source, idx))
    return units


def entry_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent PCG64 stream for entry ``stream`` derived from ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def build_dataset(
    corpus: Sequence[SentenceUnit],
    n_entries: int,
    n_range: tuple[int, int] = DEFAULT_N_RANGE,
    seed: int = 0,
) -> list[DatasetEntry]:
    lo, hi = n_range
    if lo < 1 or hi < lo:
        raise ValidationError(f"invalid n_range {n_range!r}")
    if n_entries < 0:
        raise ValidationError("n_entries must be non-negative")
    if n_entries and len(corpus) < hi:
        raise CorpusTooSmall(f"corpus has {len(corpus)} sentences, need at least {hi}")

    entries = []
    for i in range(n_entries):
        rng = entry_rng(seed, i)
        n = int(rng.integers(lo, hi + 1))
        picks = rng.choice(len(corpus), size=n, replace=False)
        colors = tuple(Color(int(c)) for c in rng.integers(0, len(COLOR_NAMES), size=n))
        payload = colors_to_bits(ColorSequence(colors, BITS_PER_COLOR * n))
        entries.append(
            DatasetEntry(
                entry_id=f"e{i:05d}",
                sentences=tuple(corpus[int(p)] for p in picks),
                colors=colors,
                payload_bits=payload,
                seed_info={"seed": seed, "stream": i, "rng": RNG_NAME, "sampling": SAMPLING_NOTE},
            )
        )
    return entries


def sample_corpus_path() -> Path:
    return Path(str(resources.files("synstego").joinpath("data/sample_corpus.txt")))


def texts(units: Iterable[SentenceUnit]) -> list[str]:
    return [u.text for u in units]
