from collections import Counter

import pytest
from hypothesis import given, strategies as st

from diffstyle import corpus
from diffstyle.corpus import NUM, SEP, UNK, CorpusError, SentencePair


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_pairs_basic(tmp_path):
    p = write(tmp_path, "x.tsv", "he walks to the store\the walked to the store\n")
    (pair,) = corpus.load_pairs(p, "ToPast")
    assert pair.source == ("he", "walks", "to", "the", "store")
    assert pair.target == ("he", "walked", "to", "the", "store")
    assert pair.transfers == ("ToPast",)
    assert pair.extra_info == ()


def test_load_pairs_stem_names_transfers(tmp_path):
    p = write(tmp_path, "ActiveToPassive+ToPast.tsv", "a b\tc d\n")
    (pair,) = corpus.load_pairs(p)
    # canonical order puts tense first
    assert pair.transfers == ("ToPast", "ActiveToPassive")


def test_load_pairs_extra_info(tmp_path):
    p = write(tmp_path, "InformationAddition.tsv",
              "the stock was up according to the man\tthe stock was up according to the lazy man\tman lazy\n")
    (pair,) = corpus.load_pairs(p)
    assert pair.extra_info == ("man", "lazy")


def test_load_pairs_errors(tmp_path):
    with pytest.raises(CorpusError, match="no pairs"):
        corpus.load_pairs(write(tmp_path, "ToPast.tsv", ""))
    bad = write(tmp_path, "ToFuture.tsv", "a\tb\n" "a\tb\tc\td\n")
    with pytest.raises(CorpusError, match=":2:"):
        corpus.load_pairs(bad)
    with pytest.raises(CorpusError, match=":1:"):
        corpus.load_pairs(write(tmp_path, "ToPresent.tsv", "a b\tc\tunexpected\n"))
    with pytest.raises(CorpusError, match="unknown transfer"):
        corpus.load_pairs(write(tmp_path, "Nope.tsv", "a\tb\n"))


def test_preprocess_examples():
    counts = Counter({"the": 5, "price": 3, "rose": 4, "%": 3, "zyzzyva": 2})
    assert corpus.preprocess(["The", "price", "rose", "5", "%"], counts) == ["the", "price", "rose", NUM, "%"]
    assert corpus.preprocess(["zyzzyva"], counts) == [UNK]
    assert corpus.preprocess(["3.5", "-12", "1,000,000", "+7.25"], counts) == [NUM] * 4


@pytest.mark.parametrize("tok", ["3.5", "1,234", "-0.5", "42", ".5"])
def test_numeric(tok):
    assert corpus.is_numeric(tok)


@pytest.mark.parametrize("tok", ["abc", "1,23", "3-4", "-", ".", "1.2.3", "'s"])
def test_not_numeric(tok):
    assert not corpus.is_numeric(tok)


words = st.lists(st.sampled_from(["a", "B", "c", "7", "1.5", "zz", "NUM", "UNK", "<TOPAST>", "q"]), max_size=12)


@given(words, st.dictionaries(st.sampled_from(["a", "b", "c", "zz", "q"]), st.integers(0, 6)))
def test_preprocess_idempotent(tokens, counts):
    once = corpus.preprocess(tokens, counts)
    assert corpus.preprocess(once, counts) == once


def test_train_tokens_in_vocabulary_after_preprocess():
    pairs = [SentencePair(("a", "b", "5"), ("a", "c")), SentencePair(("a", "b"), ("b", "b", "d"))]
    counts = corpus.count_tokens(pairs)
    for p in pairs:
        for tok in corpus.pair_tokens(corpus.preprocess_pair(p, counts)):
            assert corpus.is_special(tok) or counts[tok] >= 3


def make_pairs(n):
    return [SentencePair((f"s{i}",), (f"t{i}",)) for i in range(n)]


def test_split_sizes():
    assert corpus.split_sizes(100) == (90, 5, 5)
    assert corpus.split_sizes(3) == (1, 1, 1)
    with pytest.raises(CorpusError):
        corpus.split_sizes(2)
    with pytest.raises(CorpusError):
        corpus.split_sizes(10, (0.5, 0.3, 0.3))


def test_split_deterministic_and_partition():
    pairs = make_pairs(100)
    a, b = corpus.split(pairs, seed=3), corpus.split(pairs, seed=3)
    assert (len(a.train), len(a.valid), len(a.test)) == (90, 5, 5)
    assert a.indices == b.indices
    assert corpus.split(pairs, seed=4).indices != a.indices
    all_idx = a.indices["train"] + a.indices["valid"] + a.indices["test"]
    assert sorted(all_idx) == list(range(100))


@given(st.integers(3, 300), st.integers(0, 10_000))
def test_split_partitions(n, seed):
    s = corpus.split(make_pairs(n), seed=seed)
    idx = s.indices["train"] + s.indices["valid"] + s.indices["test"]
    assert sorted(idx) == list(range(n))
    assert len(s.train) >= len(s.valid) >= 1 or n < 20


def test_manifest_round_trip(tmp_path):
    s = corpus.split(make_pairs(20), seed=1)
    corpus.write_manifest(tmp_path / "m.txt", {"ToPast": s.indices})
    assert corpus.read_manifest(tmp_path / "m.txt") == {"ToPast": s.indices}


def test_build_condition_single():
    pair = SentencePair(("she", "travels", "to", "paris"), ("x",), ("ToFuture",))
    assert corpus.build_condition(pair) == ["<TOFUTURE>", "she", "travels", "to", "paris"]
    assert corpus.build_condition(pair, style_tokens=False) == ["she", "travels", "to", "paris"]


def test_build_condition_composition():
    pair = SentencePair(("a",), ("b",), ("ToPast", "ActiveToPassive"))
    assert corpus.build_condition(pair)[:2] == ["<TOPAST>", "<ACTIVETOPASSIVE>"]


def test_build_condition_extra_info():
    pair = SentencePair(("the", "stock"), ("x",), ("InformationAddition",), ("man", "lazy"))
    assert corpus.build_condition(pair) == ["<INFORMATIONADDITION>", SEP, "man", "lazy", SEP, "the", "stock"]


def test_build_condition_unregistered():
    pair = SentencePair(("a",), ("b",))
    object.__setattr__(pair, "transfers", ("Bogus",))
    with pytest.raises(CorpusError):
        corpus.build_condition(pair)


def test_extra_info_only_for_transfers_that_take_it():
    with pytest.raises(CorpusError):
        SentencePair(("a",), ("b",), ("ToPast",), ("x",))


@given(st.lists(st.sampled_from(list(corpus.TRANSFERS)), max_size=3, unique=True),
       st.lists(st.text("abc", min_size=1), min_size=1, max_size=6),
       st.lists(st.text("xyz", min_size=1), max_size=3))
def test_condition_length(transfers, source, extra):
    if extra and not any(corpus.TRANSFERS[t].needs_extra for t in transfers):
        extra = []
    pair = SentencePair(tuple(source), ("t",), tuple(transfers), tuple(extra))
    expected = len(transfers) + len(source) + (len(extra) + 2 if extra else 0)
    assert len(corpus.build_condition(pair)) == expected


def test_style_tokens_unique():
    tokens = [t.token for t in corpus.TRANSFERS.values()]
    assert len(set(tokens)) == len(tokens)
    # 13 single transfers, the composition identity members, the synthetic pair
    assert sum(t.group == "single" for t in corpus.TRANSFERS.values()) == 13
