import pytest
from hypothesis import given, strategies as st

from diffstyle.corpus import NUM, SPECIALS, SentencePair
from diffstyle.tokenizer import Vocabulary, build_vocab


@pytest.fixture
def vocab():
    return build_vocab([SentencePair(("a", "b"), ("b", "a"))])


def test_minimal_corpus(vocab):
    assert vocab.itos == list(SPECIALS) + ["a", "b"]
    assert vocab.pad_id == 0


def test_specials_not_duplicated():
    v = build_vocab([SentencePair(("a", NUM), (NUM, "b"))])
    assert v.itos.count(NUM) == 1


def test_encode_padding(vocab):
    a, b = vocab.stoi["a"], vocab.stoi["b"]
    assert vocab.encode(["a", "b"], 5) == [a, b, vocab.eos_id, 0, 0]
    assert vocab.encode(["a", "b"], 5, pad=False) == [a, b, vocab.eos_id]


def test_encode_oov_and_truncation(vocab):
    assert vocab.encode(["zzz"], 3) == [vocab.unk_id, vocab.eos_id, vocab.pad_id]
    assert vocab.encode(["a"] * 10, 4) == [vocab.stoi["a"]] * 3 + [vocab.eos_id]
    with pytest.raises(ValueError):
        vocab.encode(["a"], 1)


def test_decode(vocab):
    a, b = vocab.stoi["a"], vocab.stoi["b"]
    assert vocab.decode([vocab.eos_id, a]) == []
    assert vocab.decode([a, vocab.pad_id, b, vocab.eos_id]) == ["a", "b"]
    with pytest.raises(ValueError):
        vocab.decode([len(vocab)])


@given(st.lists(st.sampled_from(["a", "b"]), max_size=7), st.integers(8, 12))
def test_round_trip(tokens, max_len):
    v = build_vocab([SentencePair(("a", "b"), ("b", "a"))])
    ids = v.encode(tokens, max_len)
    assert len(ids) == max_len
    assert v.decode(ids) == tokens


def test_deterministic_and_file_round_trip(tmp_path):
    pairs = [SentencePair(("x", "y", "z"), ("z", "w"), ("ToPast",)), SentencePair(("q",), ("x",))]
    v1, v2 = build_vocab(pairs), build_vocab(pairs)
    assert v1 == v2
    v1.save(tmp_path / "vocab.txt")
    assert Vocabulary.load(tmp_path / "vocab.txt") == v1
    assert (tmp_path / "vocab.txt").read_text().splitlines()[0] == "<PAD>"
