"""Color lexicon: noun tables, hit counting, noun insertion and stripping."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable

from .errors import IoError, ValidationError
from .payload import COLOR_NAMES, PALETTE, Color

MIN_NOUNS_PER_COLOR = 20

_WORD = re.compile(r"[A-Za-z][A-Za-z'-]*")
_AND_WORD = re.compile(r"(?P<and>\band\s+)?(?P<word>\b[A-Za-z][A-Za-z'-]*)", re.IGNORECASE)
_TAIL_PUNCT = re.compile(r"[.!?]+[\"'”’)\]]*$")
_SPACE_BEFORE_PUNCT = re.compile(r"\s+([.!?,;:])")


def words(sentence: str) -> list[str]:
    return [w.lower() for w in _WORD.findall(sentence)]


def color_name_leaks(sentence: str) -> list[str]:
    """Palette color names present in ``sentence`` as whole words."""
    names = set(COLOR_NAMES)
    return [w for w in words(sentence) if w in names]


@dataclass(frozen=True, eq=False)
class Lexicon:
    nouns: dict[Color, tuple[str, ...]]
    version: str

    def __post_init__(self):
        seen: dict[str, Color] = {}
        for color in PALETTE:
            entries = self.nouns.get(color, ())
            if len(entries) < MIN_NOUNS_PER_COLOR:
                raise ValidationError(f"lexicon needs >= {MIN_NOUNS_PER_COLOR} nouns for {color}")
            for noun in entries:
                if noun != noun.lower() or not _WORD.fullmatch(noun):
                    raise ValidationError(f"lexicon noun {noun!r} must be a lowercase word")
                if noun in COLOR_NAMES:
                    raise ValidationError(f"lexicon noun {noun!r} is a color name")
                if noun in seen:
                    raise ValidationError(f"noun {noun!r} listed for {seen[noun]} and {color}")
                seen[noun] = color
        object.__setattr__(self, "_index", seen)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "Lexicon":
        unknown = set(mapping) - set(COLOR_NAMES)
        if unknown:
            raise ValidationError(f"unknown colors in lexicon: {sorted(unknown)}")
        canonical = json.dumps({k: list(mapping[k]) for k in COLOR_NAMES if k in mapping}, sort_keys=True)
        version = "lex-" + hashlib.sha256(canonical.encode()).hexdigest()[:12]
        nouns = {Color.parse(k): tuple(v) for k, v in mapping.items()}
        return cls(nouns, version)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Lexicon":
        if path is None:
            return default_lexicon()
        try:
            mapping = json.loads(Path(path).read_text("utf-8"))
        except OSError as exc:
            raise IoError(f"cannot read lexicon {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"lexicon {path} is not valid JSON: {exc}") from exc
        return cls.from_mapping(mapping)

    def to_mapping(self) -> dict[str, list[str]]:
        return {c.label: list(self.nouns[c]) for c in PALETTE}

    def color_of(self, word: str) -> Color | None:
        return self._index.get(word.lower())

    def all_nouns(self) -> list[str]:
        return [n for c in PALETTE for n in self.nouns[c]]

    def hits(self, sentence: str) -> list[int]:
        counts = [0] * len(PALETTE)
        for w in words(sentence):
            c = self._index.get(w)
            if c is not None:
                counts[c] += 1
        return counts

    def classify(self, sentence: str) -> Color:
        """Color with the most lexicon hits; ties go to the lowest palette index."""
        counts = self.hits(sentence)
        return Color(max(range(len(counts)), key=lambda i: (counts[i], -i)))

    def nouns_in(self, sentence: str) -> list[str]:
        return [w for w in words(sentence) if w in self._index]

    def insert(self, sentence: str, color: Color, choice: int) -> str:
        """Add ``and <noun>`` just before the sentence's closing punctuation."""
        options = self.nouns[Color.parse(color)]
        noun = options[choice % len(options)]
        s = sentence.rstrip()
        m = _TAIL_PUNCT.search(s)
        if m:
            return f"{s[:m.start()]} and {noun}{s[m.start():]}"
        return f"{s} and {noun}"

    def strip(self, sentence: str, remove: Callable[[str], bool] = lambda noun: True) -> str:
        """Drop lexicon nouns (with a preceding ``and``) for which ``remove`` says so.

        ``remove`` is called once per noun occurrence, left to right.
        """
        changed = False

        def repl(m: re.Match) -> str:
            nonlocal changed
            word = m.group("word")
            if word.lower() in self._index and remove(word.lower()):
                changed = True
                return ""
            return m.group(0)

        out = _AND_WORD.sub(repl, sentence)
        if not changed:
            return sentence
        out = _SPACE_BEFORE_PUNCT.sub(r"\1", out)
        return " ".join(out.split())


@lru_cache(maxsize=None)
def default_lexicon() -> Lexicon:
    text = resources.files("synstego").joinpath("data/lexicon.json").read_text("utf-8")
    return Lexicon.from_mapping(json.loads(text))
