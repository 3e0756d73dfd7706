"""Text-model providers: generation, token log-probabilities, next-token distributions.

Every log-probability leaving this module is base 2. Remote servers report
natural logs; conversion happens here and nowhere else.
"""

from __future__ import annotations

import logging
import math
import os
import re
import threading
import time
import zlib
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import (
    EmptyText,
    InvalidK,
    RateLimited,
    RemoteError,
    Timeout,
    UnsupportedCapability,
    ValidationError,
)
from .lexicon import Lexicon, default_lexicon
from .payload import COLOR_NAMES, Color

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
PROVIDER_KINDS = ("remote", "mock-uniform", "mock-lexicon")
API_KEY_ENV = "STEGO_API_KEY"
WHITESPACE_TOKENIZER = "whitespace-v1"
UNIFORM_PLACEHOLDER = "[mock-uniform output]"


@dataclass(frozen=True)
class ProviderConfig:
    provider_kind: str = "mock-lexicon"
    model_id: str = ""
    endpoint: str | None = None
    timeout: float = 60.0
    max_in_flight: int = 4
    top_k: int = 20
    max_retries: int = 3
    backoff_base: float = 0.5
    backoff_max: float = 8.0
    vocab_size: int = 256
    temperature: float = 1.0
    max_tokens: int = 256
    chat: bool = True
    # Remote models sharing a tokenizer must declare the same id here;
    # cross-perplexity refuses to compare distributions across tokenizers.
    tokenizer: str | None = None

    def __post_init__(self):
        if self.provider_kind not in PROVIDER_KINDS:
            raise ValidationError(f"provider_kind must be one of {PROVIDER_KINDS}")
        if self.max_in_flight < 1:
            raise ValidationError("max_in_flight must be >= 1")
        if self.top_k < 1:
            raise ValidationError("top_k must be >= 1")
        if self.provider_kind == "remote" and not self.endpoint:
            raise ValidationError("remote provider needs an endpoint")
        if self.vocab_size < 1:
            raise ValidationError("vocab_size must be >= 1")
        if self.temperature <= 0 and self.provider_kind == "mock-lexicon":
            raise ValidationError("mock-lexicon temperature must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ProviderConfig":
        known = {f.name for f in fields(cls)}
        d = dict(d)
        if "kind" in d:
            d["provider_kind"] = d.pop("kind")
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown provider config keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TokenLogProb:
    token: str
    logprob: float
    position: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DistributionSlice:
    prefix_position: int
    entries: tuple[tuple[str, float], ...]
    truncated: bool
    mass: float = field(default=-1.0)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(sorted(self.entries, key=lambda e: -e[1])))
        if self.mass < 0:
            object.__setattr__(self, "mass", math.fsum(p for _, p in self.entries))

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)


class Provider:
    """Common surface; subclasses override the capabilities they support."""

    kind = "abstract"
    tokenizer_id = "none"
    full_vocabulary = False

    def __init__(self, model_id: str):
        self.model_id = model_id

    def generate(self, prompt: str, **params) -> str:
        raise UnsupportedCapability(f"{self.kind} cannot generate")

    def token_logprobs(self, text: str) -> list[TokenLogProb]:
        raise UnsupportedCapability(f"{self.kind} has no token logprobs")

    def next_token_distribution(self, prefix: str, k: int) -> DistributionSlice:
        raise UnsupportedCapability(f"{self.kind} has no next-token distributions")

    def position_distributions(self, text: str, k: int | None = None) -> list[DistributionSlice]:
        """One distribution per token scored by :meth:`token_logprobs`.

        ``k=None`` asks for the full vocabulary.
        """
        raise UnsupportedCapability(f"{self.kind} has no per-position distributions")

    def close(self) -> None:
        pass

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.model_id!r}>"


def _check_text(text: str) -> None:
    if not text or not text.strip():
        raise EmptyText("text is empty")


def _check_k(k: int | None) -> None:
    if k is not None and k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")


class _VocabularyModel(Provider):
    """Whitespace-tokenized model with an explicit finite vocabulary."""

    tokenizer_id = WHITESPACE_TOKENIZER
    full_vocabulary = True
    vocabulary: tuple[str, ...] = ()

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def token_id(self, token: str) -> int:
        raise NotImplementedError

    def probabilities(self, position: int, previous: Sequence[str]) -> np.ndarray:
        raise NotImplementedError

    def token_logprobs(self, text: str) -> list[TokenLogProb]:
        _check_text(text)
        tokens = self.tokenize(text)
        out = []
        for i, tok in enumerate(tokens):
            p = self.probabilities(i, tokens[:i])[self.token_id(tok)]
            out.append(TokenLogProb(tok, math.log2(p), i))
        return out

    def _slice(self, position: int, probs: np.ndarray, k: int | None) -> DistributionSlice:
        V = len(probs)
        k = V if k is None else min(k, V)
        order = np.lexsort((np.arange(V), -probs))[:k]
        entries = tuple((self.vocabulary[j], float(probs[j])) for j in order)
        return DistributionSlice(position, entries, truncated=k < V)

    def next_token_distribution(self, prefix: str, k: int) -> DistributionSlice:
        _check_k(k)
        previous = self.tokenize(prefix)
        return self._slice(len(previous), self.probabilities(len(previous), previous), k)

    def position_distributions(self, text: str, k: int | None = None) -> list[DistributionSlice]:
        _check_text(text)
        _check_k(k)
        tokens = self.tokenize(text)
        return [self._slice(i, self.probabilities(i, tokens[:i]), k) for i in range(len(tokens))]

    def full_distributions(self, text: str) -> list[np.ndarray]:
        """Full probability vectors, aligned on :attr:`vocabulary`."""
        _check_text(text)
        tokens = self.tokenize(text)
        return [self.probabilities(i, tokens[:i]) for i in range(len(tokens))]


class UniformMock(_VocabularyModel):
    """Every token has probability 1/V at every position."""

    kind = "mock-uniform"

    def __init__(self, vocab_size: int = 256, model_id: str = ""):
        super().__init__(model_id or f"mock-uniform-V{vocab_size}")
        self.vocab_size = vocab_size
        width = len(str(vocab_size - 1))
        self.vocabulary = tuple(f"t{j:0{width}d}" for j in range(vocab_size))
        self._probs = np.full(vocab_size, 1.0 / vocab_size)
        self._probs.flags.writeable = False

    def token_id(self, token: str) -> int:
        return zlib.crc32(token.encode("utf-8")) % self.vocab_size

    def probabilities(self, position, previous):
        return self._probs

    def generate(self, prompt: str, **params) -> str:
        return UNIFORM_PLACEHOLDER


class TableMock(_VocabularyModel):
    """Model defined by an explicit table: ``table(position, previous) -> probabilities``.

    Tokens outside ``vocabulary`` are rejected. Intended for hand-checkable fixtures.
    """

    kind = "mock-table"

    def __init__(
        self,
        vocabulary: Sequence[str],
        table: Callable[[int, Sequence[str]], Sequence[float]] | Sequence[Sequence[float]],
        model_id: str = "mock-table",
        tokenizer_id: str = WHITESPACE_TOKENIZER,
    ):
        super().__init__(model_id)
        self.vocabulary = tuple(vocabulary)
        self.tokenizer_id = tokenizer_id
        self._ids = {t: j for j, t in enumerate(self.vocabulary)}
        self._table = table

    def token_id(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise ValidationError(f"token {token!r} not in table vocabulary") from None

    def probabilities(self, position, previous):
        if callable(self._table):
            row = self._table(position, previous)
        else:
            row = self._table[position]
        probs = np.asarray(row, dtype=float)
        if probs.shape != (len(self.vocabulary),) or abs(probs.sum() - 1.0) > 1e-9 or (probs <= 0).any():
            raise ValidationError(f"table row at position {position} is not a positive distribution")
        return probs


# Common English words and their rough rank; the rest of the mass goes to
# hashed unknown-word buckets and, sparsely, to lexicon nouns.
_COMMON_WORDS = """
the of and to a in was he it that his for on with as had at by she her they from
but not be is were an this which their all we one have after been when so there
would who its him no more out up into over what two about some them could than
only then other before time any new first our these also each years until while
under may very three long last every most many because same again back against
through during between still never without made few small old high such both those
""".split()

_LEXICON_MASS = 0.002
_COMMON_MASS = 0.5
_UNKNOWN_BUCKETS = 512


@lru_cache(maxsize=None)
def _lexicon_vocabulary(lexicon: Lexicon) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    common = list(dict.fromkeys(_COMMON_WORDS))
    nouns = lexicon.all_nouns()
    unknown = [f"<unk:{j:03d}>" for j in range(_UNKNOWN_BUCKETS)]
    vocab = tuple(common + nouns + unknown)

    zipf = 1.0 / np.arange(1, len(common) + 1)
    weights = np.concatenate([
        _COMMON_MASS * zipf / zipf.sum(),
        np.full(len(nouns), _LEXICON_MASS / len(nouns)),
        np.full(len(unknown), (1.0 - _COMMON_MASS - _LEXICON_MASS) / len(unknown)),
    ])
    salts = np.array([zlib.crc32(t.encode()) for t in vocab], dtype=np.uint64)
    weights.flags.writeable = False
    salts.flags.writeable = False
    return vocab, weights, salts


def _normalize(token: str) -> str:
    return token.strip(".,;:!?\"'()[]“”‘’").lower()


class LexiconMock(_VocabularyModel):
    """Deterministic offline model aware of the color lexicon.

    Scoring: a bigram-flavoured distribution over common words, lexicon nouns
    and 512 hashed unknown-word buckets. Lexicon nouns are rare (about 16 bits
    each), so inserting them raises cross-entropy. ``temperature`` flattens or
    sharpens the distribution, which gives a distinct reference model.

    Generation: routes ``[task: ...]`` prompts to lexicon encode, decode and
    paraphrase rules; any other prompt is echoed back.
    """

    kind = "mock-lexicon"

    def __init__(self, lexicon: Lexicon | None = None, temperature: float = 1.0, model_id: str = ""):
        super().__init__(model_id or f"mock-lexicon-T{temperature:g}")
        self.lexicon = lexicon or default_lexicon()
        self.temperature = temperature
        self.vocabulary, self._weights, self._salts = _lexicon_vocabulary(self.lexicon)
        self._ids = {t: j for j, t in enumerate(self.vocabulary)}
        self._unknown_offset = len(self.vocabulary) - _UNKNOWN_BUCKETS

    def token_id(self, token: str) -> int:
        norm = _normalize(token)
        j = self._ids.get(norm)
        if j is not None:
            return j
        return self._unknown_offset + zlib.crc32(norm.encode("utf-8")) % _UNKNOWN_BUCKETS

    @lru_cache(maxsize=4096)
    def _context_probs(self, context: int) -> np.ndarray:
        mixed = (self._salts ^ np.uint64(context & 0xFFFFFFFF)) * np.uint64(2654435761)
        modulation = 1.0 + 0.5 * (mixed % np.uint64(1009)).astype(float) / 1009.0
        w = (self._weights * modulation) ** (1.0 / self.temperature)
        p = w / w.sum()
        p.flags.writeable = False
        return p

    def probabilities(self, position, previous):
        context = self.token_id(previous[-1]) if previous else -1
        return self._context_probs(context)

    def generate(self, prompt: str, **params) -> str:
        task = re.match(r"\s*\[task:\s*(\w+)", prompt)
        sentence = _field(prompt, "Sentence")
        if task is None or sentence is None:
            return prompt.strip().splitlines()[-1] if prompt.strip() else ""
        name = task.group(1)
        if name == "encode":
            color = Color.parse(_field(prompt, "Color") or "red")
            choice = zlib.crc32(f"{color.label}|{sentence}".encode("utf-8"))
            return self.lexicon.insert(sentence, color, choice)
        if name == "decode":
            return self.lexicon.classify(sentence).label
        if name == "paraphrase":
            return self.lexicon.strip(sentence)
        return sentence


def _field(prompt: str, name: str) -> str | None:
    m = re.search(rf"^{name}:\s*(.*)$", prompt, re.MULTILINE)
    return m.group(1).strip() if m else None


class RemoteProvider(Provider):
    """Client for OpenAI-compatible ``/v1/completions`` and ``/v1/chat/completions``.

    Token scoring uses ``echo=true`` with ``logprobs``; servers that omit
    logprobs raise :class:`UnsupportedCapability`. The first prompt token has
    no conditional log-probability on these servers, so it is not scored.
    """

    kind = "remote"

    def __init__(self, config: ProviderConfig, client=None):
        import httpx

        super().__init__(config.model_id)
        self.config = config
        self.tokenizer_id = config.tokenizer or f"remote:{config.model_id}"
        self._semaphore = threading.BoundedSemaphore(config.max_in_flight)
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._httpx = httpx
        self._client = client or httpx.Client(
            base_url=config.endpoint.rstrip("/"), headers=headers, timeout=config.timeout
        )

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        httpx = self._httpx
        cfg = self.config
        for attempt in range(cfg.max_retries + 1):
            with self._semaphore:
                try:
                    resp = self._client.post(path, json=payload)
                except httpx.TimeoutException as exc:
                    raise Timeout(f"{path} timed out after {cfg.timeout}s") from exc
                except httpx.HTTPError as exc:
                    raise RemoteError(None, f"{type(exc).__name__}: {exc}") from exc
            if resp.status_code == 429:
                if attempt == cfg.max_retries:
                    raise RateLimited(429, resp.text[:500])
                delay = min(cfg.backoff_max, cfg.backoff_base * 2**attempt)
                log.warning("rate limited on %s, retrying in %.2fs", path, delay)
                time.sleep(delay)
                continue
            if resp.status_code >= 400:
                raise RemoteError(resp.status_code, resp.text[:500])
            try:
                return resp.json()
            except ValueError as exc:
                raise RemoteError(resp.status_code, "response is not JSON") from exc
        raise AssertionError("unreachable")

    def generate(self, prompt: str, **params) -> str:
        cfg = self.config
        body = {
            "model": cfg.model_id,
            "temperature": params.get("temperature", cfg.temperature),
            "max_tokens": params.get("max_tokens", cfg.max_tokens),
        }
        if cfg.chat:
            body["messages"] = [{"role": "user", "content": prompt}]
            data = self._post("/v1/chat/completions", body)
            try:
                return data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise RemoteError(200, f"malformed chat response: {data!r}"[:500]) from exc
        body["prompt"] = prompt
        data = self._post("/v1/completions", body)
        try:
            return data["choices"][0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise RemoteError(200, f"malformed completion response: {data!r}"[:500]) from exc

    def _echo(self, text: str, k: int) -> dict:
        body = {
            "model": self.config.model_id,
            "prompt": text,
            "max_tokens": 1,
            "temperature": 0.0,
            "echo": True,
            "logprobs": k,
        }
        data = self._post("/v1/completions", body)
        try:
            lp = data["choices"][0]["logprobs"]
        except (KeyError, IndexError, TypeError):
            lp = None
        if not lp or lp.get("token_logprobs") is None:
            raise UnsupportedCapability(f"{self.config.endpoint} returned no logprobs")
        n = len(lp["tokens"])
        offsets = lp.get("text_offset")
        if offsets is not None:
            n = sum(1 for o in offsets if o < len(text))
        else:
            n -= 1  # drop the generated token
        return {key: (lp.get(key) or [None] * n)[:n] for key in ("tokens", "token_logprobs", "top_logprobs")}

    def token_logprobs(self, text: str) -> list[TokenLogProb]:
        _check_text(text)
        lp = self._echo(text, 0)
        return [
            TokenLogProb(tok, min(0.0, ln / LN2), i)
            for i, (tok, ln) in enumerate(zip(lp["tokens"], lp["token_logprobs"]))
            if ln is not None
        ]

    def next_token_distribution(self, prefix: str, k: int) -> DistributionSlice:
        _check_k(k)
        body = {
            "model": self.config.model_id,
            "prompt": prefix,
            "max_tokens": 1,
            "temperature": 0.0,
            "logprobs": k,
        }
        data = self._post("/v1/completions", body)
        try:
            top = data["choices"][0]["logprobs"]["top_logprobs"][0]
        except (KeyError, IndexError, TypeError):
            raise UnsupportedCapability(f"{self.config.endpoint} returned no top logprobs") from None
        return _slice_from_top(len(prefix), top, k)

    def position_distributions(self, text: str, k: int | None = None) -> list[DistributionSlice]:
        _check_text(text)
        if k is None:
            raise UnsupportedCapability("remote providers cannot expose full-vocabulary distributions")
        _check_k(k)
        lp = self._echo(text, k)
        out = []
        for i, (ln, top) in enumerate(zip(lp["token_logprobs"], lp["top_logprobs"])):
            if ln is None:
                continue
            if not top:
                raise UnsupportedCapability(f"{self.config.endpoint} returned no top logprobs")
            out.append(_slice_from_top(i, top, k))
        return out


def _slice_from_top(position: int, top: dict, k: int) -> DistributionSlice:
    entries = sorted(((t, math.exp(ln)) for t, ln in top.items()), key=lambda e: -e[1])[:k]
    return DistributionSlice(position, tuple(entries), truncated=True)


def make_provider(config: ProviderConfig, lexicon: Lexicon | None = None) -> Provider:
    if config.provider_kind == "mock-uniform":
        return UniformMock(config.vocab_size, config.model_id)
    if config.provider_kind == "mock-lexicon":
        return LexiconMock(lexicon, config.temperature, config.model_id)
    return RemoteProvider(config)


def parse_color_reply(reply: str) -> Color:
    """First palette color named in a model reply; red when none is named."""
    for w in re.findall(r"[A-Za-z]+", reply.lower()):
        if w in COLOR_NAMES:
            return Color.parse(w)
    return Color.RED


__all__ = [
    "API_KEY_ENV",
    "DistributionSlice",
    "LexiconMock",
    "Provider",
    "ProviderConfig",
    "RemoteProvider",
    "TableMock",
    "TokenLogProb",
    "UniformMock",
    "make_provider",
    "parse_color_reply",
]
