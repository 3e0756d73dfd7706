"""Synesthetic color-code encoder/decoder and the paraphrase attack.

Each covertext sentence carries one palette color. The lexicon strategies are
deterministic and offline; the LLM strategies send versioned prompt templates
to a :class:`~synstego.providers.Provider`.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from .corpus import DatasetEntry
from .errors import ColorNameLeak, PreconditionError, ValidationError
from .lexicon import Lexicon, color_name_leaks, default_lexicon
from .payload import BITS_PER_COLOR, BitString, Color, ColorSequence, colors_to_bits
from .providers import Provider, parse_color_reply


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("synstego").joinpath(f"data/prompts/{name}.txt").read_text("utf-8")


def template_version(template: str) -> str:
    m = re.match(r"\s*\[task:\s*(\w+)\s*\|\s*template\s+(v\d+)\]", template)
    return f"{m.group(1)}-{m.group(2)}" if m else "unversioned"


def sub_rng(seed: int, entry_id: str, *stream: int) -> np.random.Generator:
    """Per-entry PCG64 stream, independent of processing order."""
    key = (zlib.crc32(entry_id.encode("utf-8")), *stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class StegoEntry:
    entry_id: str
    stego_sentences: tuple[str, ...]
    assigned_colors: tuple[Color, ...]
    encoder_kind: str
    covertext_ref: str
    payload_len: int = -1
    history: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.stego_sentences) != len(self.assigned_colors):
            raise ValidationError(f"{self.entry_id}: sentence and color counts differ")
        if self.payload_len < 0:
            object.__setattr__(self, "payload_len", BITS_PER_COLOR * len(self.assigned_colors))

    @property
    def text(self) -> str:
        return " ".join(self.stego_sentences)

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "stego_sentences": list(self.stego_sentences),
            "assigned_colors": [c.label for c in self.assigned_colors],
            "encoder_kind": self.encoder_kind,
            "covertext_ref": self.covertext_ref,
            "payload_len": self.payload_len,
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StegoEntry":
        return cls(
            entry_id=d["entry_id"],
            stego_sentences=tuple(d["stego_sentences"]),
            assigned_colors=tuple(Color.parse(c) for c in d["assigned_colors"]),
            encoder_kind=d.get("encoder_kind", "lexicon"),
            covertext_ref=d.get("covertext_ref", d["entry_id"]),
            payload_len=int(d.get("payload_len", -1)),
            history=tuple(d.get("history", ())),
        )


@dataclass(frozen=True)
class DecodeResult:
    entry_id: str
    decoded_colors: tuple[Color, ...]
    decoded_bits: BitString
    per_sentence_correct: tuple[bool, ...] | None
    decoder_kind: str

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "decoded_colors": [c.label for c in self.decoded_colors],
            "decoded_bits": str(self.decoded_bits),
            "per_sentence_correct": None if self.per_sentence_correct is None else list(self.per_sentence_correct),
            "decoder_kind": self.decoder_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecodeResult":
        correct = d.get("per_sentence_correct")
        return cls(
            entry_id=d["entry_id"],
            decoded_colors=tuple(Color.parse(c) for c in d["decoded_colors"]),
            decoded_bits=BitString.from_str(d["decoded_bits"]),
            per_sentence_correct=None if correct is None else tuple(bool(x) for x in correct),
            decoder_kind=d.get("decoder_kind", "lexicon"),
        )


# Strategies -----------------------------------------------------------------

@dataclass
class LexiconEncoder:
    lexicon: Lexicon = field(default_factory=default_lexicon)
    seed: int = 0
    kind: str = "lexicon"

    def rewrite(self, sentence: str, color: Color, entry_id: str, index: int, attempt: int) -> str:
        rng = sub_rng(self.seed, entry_id, index, attempt)
        return self.lexicon.insert(sentence, color, int(rng.integers(0, 1 << 30)))

    def describe(self) -> str:
        return f"lexicon:{self.lexicon.version}"


@dataclass
class LLMEncoder:
    provider: Provider
    template: str = field(default_factory=lambda: load_template("encode"))
    kind: str = "llm"

    def rewrite(self, sentence: str, color: Color, entry_id: str, index: int, attempt: int) -> str:
        reply = self.provider.generate(self.template.format(sentence=sentence, color=color.label))
        return " ".join(reply.split())

    def describe(self) -> str:
        return f"llm:{self.provider.model_id}:{template_version(self.template)}"


@dataclass
class LexiconDecoder:
    lexicon: Lexicon = field(default_factory=default_lexicon)
    kind: str = "lexicon"

    def classify(self, sentence: str) -> Color:
        return self.lexicon.classify(sentence)


@dataclass
class LLMDecoder:
    provider: Provider
    template: str = field(default_factory=lambda: load_template("decode"))
    kind: str = "llm"

    def classify(self, sentence: str) -> Color:
        return parse_color_reply(self.provider.generate(self.template.format(sentence=sentence)))


@dataclass
class RuleAttacker:
    """Independently drops each lexicon noun with probability ``q``."""

    q: float
    seed: int = 0
    lexicon: Lexicon = field(default_factory=default_lexicon)
    kind: str = "rule"

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValidationError(f"strip probability must lie in [0, 1], got {self.q}")

    def paraphrase(self, stego: StegoEntry) -> tuple[str, ...]:
        rng = sub_rng(self.seed, stego.entry_id)
        return tuple(
            self.lexicon.strip(s, lambda noun: rng.random() < self.q) for s in stego.stego_sentences
        )

    def describe(self) -> str:
        return f"rule:q={self.q:g}:seed={self.seed}"


@dataclass
class LLMAttacker:
    provider: Provider
    template: str = field(default_factory=lambda: load_template("paraphrase"))
    kind: str = "llm"

    def paraphrase(self, stego: StegoEntry) -> tuple[str, ...]:
        return tuple(
            " ".join(self.provider.generate(self.template.format(sentence=s)).split())
            for s in stego.stego_sentences
        )

    def describe(self) -> str:
        return f"llm:{self.provider.model_id}:{template_version(self.template)}"


def _as_encoder(encoder):
    if encoder is None or encoder == "lexicon":
        return LexiconEncoder()
    if isinstance(encoder, Provider):
        return LLMEncoder(encoder)
    return encoder


def _as_decoder(decoder):
    if decoder is None or decoder == "lexicon":
        return LexiconDecoder()
    if isinstance(decoder, Provider):
        return LLMDecoder(decoder)
    return decoder


# Operations -----------------------------------------------------------------

def encode_entry(entry: DatasetEntry, encoder=None) -> StegoEntry:
    """Rewrite every sentence of ``entry`` to evoke its assigned color.

    A rewrite that names a palette color is attempted once more; a second leak
    raises :class:`ColorNameLeak`.
    """
    if len(entry.sentences) != len(entry.colors) or not entry.sentences:
        raise PreconditionError(f"{entry.entry_id}: needs matching, non-empty sentences and colors")
    encoder = _as_encoder(encoder)
    out = []
    for i, (unit, color) in enumerate(zip(entry.sentences, entry.colors)):
        for attempt in range(2):
            rewritten = encoder.rewrite(unit.text, color, entry.entry_id, i, attempt)
            leaks = color_name_leaks(rewritten)
            if not leaks:
                break
        else:
            raise ColorNameLeak(f"{entry.entry_id}[{i}]: rewrite names {sorted(set(leaks))}")
        out.append(rewritten)
    return StegoEntry(
        entry_id=entry.entry_id,
        stego_sentences=tuple(out),
        assigned_colors=tuple(entry.colors),
        encoder_kind=encoder.kind,
        covertext_ref=entry.entry_id,
        payload_len=len(entry.payload_bits),
        history=(f"encode:{encoder.describe()}",),
    )


def decode_entry(stego: StegoEntry, decoder=None, known_colors: bool = True) -> DecodeResult:
    if not stego.stego_sentences:
        raise PreconditionError(f"{stego.entry_id}: nothing to decode")
    decoder = _as_decoder(decoder)
    decoded = tuple(decoder.classify(s) for s in stego.stego_sentences)
    bits = colors_to_bits(ColorSequence(decoded, stego.payload_len))
    correct = (
        tuple(d == a for d, a in zip(decoded, stego.assigned_colors)) if known_colors else None
    )
    return DecodeResult(stego.entry_id, decoded, bits, correct, decoder.kind)


def paraphrase_entry(stego: StegoEntry, attacker) -> StegoEntry:
    if isinstance(attacker, Provider):
        attacker = LLMAttacker(attacker)
    sentences = attacker.paraphrase(stego)
    if len(sentences) != len(stego.stego_sentences):
        raise ValidationError(f"{stego.entry_id}: paraphrase changed the sentence count")
    return StegoEntry(
        entry_id=stego.entry_id,
        stego_sentences=sentences,
        assigned_colors=stego.assigned_colors,
        encoder_kind=stego.encoder_kind,
        covertext_ref=stego.covertext_ref,
        payload_len=stego.payload_len,
        history=stego.history + (f"paraphrase:{attacker.describe()}",),
    )


def accuracy(results: Sequence[DecodeResult]) -> float:
    flags = [f for r in results for f in (r.per_sentence_correct or ())]
    return sum(flags) / len(flags) if flags else float("nan")
