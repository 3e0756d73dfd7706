import pytest
from hypothesis import given, settings, strategies as st

from synstego.codec import (
    LexiconEncoder,
    LLMAttacker,
    LLMDecoder,
    LLMEncoder,
    RuleAttacker,
    StegoEntry,
    decode_entry,
    encode_entry,
    paraphrase_entry,
)
from synstego.corpus import DatasetEntry, SentenceUnit
from synstego.errors import ColorNameLeak, PreconditionError, ValidationError
from synstego.lexicon import Lexicon, color_name_leaks, default_lexicon
from synstego.payload import COLOR_NAMES, PALETTE, Color, bits_to_colors
from synstego.providers import LexiconMock, UniformMock

LEX = default_lexicon()
COVER = "The project was finally completed after months of effort"


def entry(sentences, colors, entry_id="t0"):
    colors = tuple(Color.parse(c) for c in colors)
    bits = "".join(c.code for c in colors)
    from synstego.payload import BitString

    return DatasetEntry(entry_id, tuple(SentenceUnit(s) for s in sentences), colors, BitString.from_str(bits))


def test_lexicon_invariants():
    nouns = LEX.all_nouns()
    assert len(nouns) == len(set(nouns))
    assert all(len(LEX.nouns[c]) >= 20 for c in PALETTE)
    assert all(n == n.lower() and n not in COLOR_NAMES for n in nouns)
    assert "bloodshed" in LEX.nouns[Color.RED]


@pytest.mark.parametrize(
    "mapping",
    [
        {c: [f"{c}x{i}" for i in range(19)] for c in COLOR_NAMES},
        {**{c: [f"{c}x{i}" for i in range(20)] for c in COLOR_NAMES}, "red": ["red"] + [f"r{i}" for i in range(20)]},
        {**{c: [f"{c}x{i}" for i in range(20)] for c in COLOR_NAMES}, "blue": [f"redx{i}" for i in range(20)]},
        {**{c: [f"{c}x{i}" for i in range(20)] for c in COLOR_NAMES}, "white": ["Snow"] + [f"w{i}" for i in range(20)]},
    ],
)
def test_lexicon_rejects_bad_tables(mapping):
    with pytest.raises(ValidationError):
        Lexicon.from_mapping(mapping)


def test_insert_places_noun_before_final_punctuation():
    assert LEX.insert("It ended.", Color.RED, 1) == "It ended and bloodshed."
    assert LEX.insert("It ended", Color.RED, 0) == "It ended and blood"
    assert LEX.insert('He said "go!"', Color.RED, 2) == 'He said "go and fire!"'


def test_strip_removes_and_phrase():
    assert LEX.strip("It ended and bloodshed.") == "It ended."
    assert LEX.nouns_in(LEX.strip("Coal, ink and tar remained.")) == []
    s = "Nothing to remove here."
    assert LEX.strip(s) == s


def test_encode_worked_example():
    stego = encode_entry(entry([COVER], ["red"]))
    (sentence,) = stego.stego_sentences
    assert sentence.startswith(COVER)
    hits = LEX.nouns_in(sentence)
    assert len(hits) == 1 and LEX.color_of(hits[0]) is Color.RED
    assert decode_entry(stego).decoded_colors == (Color.RED,)
    assert str(decode_entry(stego).decoded_bits) == "000"


def test_encode_rejects_empty_entry():
    bad = object.__new__(DatasetEntry)
    object.__setattr__(bad, "entry_id", "x")
    object.__setattr__(bad, "sentences", ())
    object.__setattr__(bad, "colors", ())
    with pytest.raises(PreconditionError):
        encode_entry(bad)


def test_encode_is_deterministic(dataset300):
    a = [encode_entry(e, LexiconEncoder(seed=3)).to_dict() for e in dataset300[:30]]
    b = [encode_entry(e, LexiconEncoder(seed=3)).to_dict() for e in dataset300[:30]]
    assert a == b


def test_color_name_leak_after_retry():
    with pytest.raises(ColorNameLeak):
        encode_entry(entry(["The red door opened."], ["blue"]))


def test_llm_encoder_retries_once_on_leak():
    class Flaky:
        model_id = "flaky"

        def __init__(self):
            self.calls = 0

        def generate(self, prompt, **kw):
            self.calls += 1
            return "A green meadow." if self.calls == 1 else "A quiet meadow and fern."

    p = Flaky()
    stego = encode_entry(entry(["A quiet field."], ["green"]), LLMEncoder(p))
    assert p.calls == 2
    assert stego.stego_sentences == ("A quiet meadow and fern.",)
    assert stego.encoder_kind == "llm"


def test_decode_tie_break_and_hits():
    dec = decode_entry(StegoEntry("x", ("Nothing here.", "coal and snow", "snow snow coal"), (Color.RED,) * 3, "lexicon", "x"))
    assert dec.decoded_colors == (Color.RED, Color.BLACK, Color.WHITE)
    assert dec.per_sentence_correct == (True, False, False)


def test_decode_rejects_empty():
    with pytest.raises(PreconditionError):
        decode_entry(StegoEntry("x", (), (), "lexicon", "x"))


def test_closure_and_invariants(dataset300, encoded300):
    for e, s in zip(dataset300, encoded300):
        d = decode_entry(s)
        assert d.decoded_bits == e.payload_bits
        assert all(d.per_sentence_correct)
        assert len(s.stego_sentences) == e.n
        assert not any(color_name_leaks(t) for t in s.stego_sentences)
        assert len(s.text) > len(" ".join(u.text for u in e.sentences))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=3, max_size=18).filter(lambda b: len(b) % 3 == 0), st.integers(0, 10_000))
def test_closure_property(bits, seed):
    colors = bits_to_colors("".join(map(str, bits))).colors
    sentences = [f"Sentence number {i} ended quietly." for i in range(len(colors))]
    e = entry(sentences, colors, f"p{seed}")
    d = decode_entry(encode_entry(e, LexiconEncoder(seed=seed)))
    assert d.decoded_bits == e.payload_bits


def test_rule_attack_extremes(encoded300):
    for s in encoded300[:50]:
        same = paraphrase_entry(s, RuleAttacker(0.0, seed=1))
        assert same.stego_sentences == s.stego_sentences
        gone = paraphrase_entry(s, RuleAttacker(1.0, seed=1))
        assert all(LEX.nouns_in(t) == [] for t in gone.stego_sentences)
        assert len(gone.stego_sentences) == len(s.stego_sentences)


def test_rule_attack_validation_and_determinism(encoded300):
    with pytest.raises(ValidationError):
        RuleAttacker(1.5)
    a = [paraphrase_entry(s, RuleAttacker(0.5, seed=9)).to_dict() for s in encoded300[:40]]
    b = [paraphrase_entry(s, RuleAttacker(0.5, seed=9)).to_dict() for s in reversed(encoded300[:40])]
    assert a == list(reversed(b))


def test_rule_attack_strips_back_to_cover(dataset300, encoded300):
    for e, s in zip(dataset300[:50], encoded300[:50]):
        gone = paraphrase_entry(s, RuleAttacker(1.0))
        assert gone.stego_sentences == tuple(u.text for u in e.sentences)


def test_llm_roles_with_lexicon_mock(dataset300):
    mock = LexiconMock()
    for e in dataset300[:20]:
        s = encode_entry(e, mock)
        assert s.encoder_kind == "llm"
        assert decode_entry(s, mock).decoded_bits == e.payload_bits
        attacked = paraphrase_entry(s, LLMAttacker(mock))
        assert attacked.stego_sentences == tuple(u.text for u in e.sentences)
    assert decode_entry(s, LLMDecoder(UniformMock())).decoded_colors == (Color.RED,) * e.n


def test_stego_serialization_roundtrip(encoded300):
    import json

    from synstego.codec import DecodeResult
    from synstego.jsonl import dumps

    for s in encoded300[:10]:
        assert StegoEntry.from_dict(json.loads(dumps(s.to_dict()))) == s
        d = decode_entry(s)
        assert DecodeResult.from_dict(json.loads(dumps(d.to_dict()))) == d
