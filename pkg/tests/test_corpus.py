"""Normalization, tokenization, vocabulary and batching tests."""

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcrg.corpus import (
    BOS,
    EOS,
    PAD,
    UNK,
    EncodedPair,
    RawPair,
    SplitSpec,
    Vocabulary,
    batches,
    build_vocabulary,
    corpus_statistics,
    encode_pair,
    make_batch,
    normalize,
    read_dataset,
    split_dataset,
    tokenize,
    write_dataset,
)

GAZ = frozenset({"Obama", "Barack", "Clinton"})


# ---------------------------------------------------------------- normalize


def test_normalize_url():
    assert normalize("see https://t.co/abc123 now") == "see url now"
    assert normalize("at www.snopes.com/fact") == "at url"


def test_normalize_mention():
    assert normalize("@realDonald said so") == "@user said so"


def test_normalize_person_run_collapses():
    assert normalize("Barack Obama spoke", GAZ) == "<person> spoke"


def test_normalize_person_requires_gazetteer_and_capital():
    assert normalize("Barack Obama spoke") == "barack obama spoke"
    assert normalize("obama spoke", GAZ) == "obama spoke"


def test_normalize_person_keeps_surrounding_punctuation():
    assert normalize('"Obama," they said', GAZ) == '"<person>," they said'.replace('"', "")


def test_normalize_numbers():
    assert normalize("over 1,000 people") == "over <number> people"
    assert normalize("3.5% rise in 2016.") == "<number> rise in <number>."


def test_normalize_strips_disallowed_chars():
    assert normalize("so cool ❤️ #tag") == "so cool tag"


def test_normalize_lowercases():
    assert normalize("FAKE News") == "fake news"


def test_normalize_idempotent_on_fixtures():
    samples = [
        "RT @user: Obama gave 150% https://t.co/x — FALSE!",
        "it's been debunked, see www.snopes.com",
        "100,000 shares?!",
    ]
    for s in samples:
        once = normalize(s, GAZ)
        assert normalize(once, GAZ) == once


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=80))
def test_normalize_idempotent(text):
    once = normalize(text, GAZ)
    assert normalize(once, GAZ) == once


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=80))
def test_normalize_output_alphabet(text):
    allowed = set("abcdefghijklmnopqrstuvwxyz0123456789 .,!?':;-@<>/")
    assert set(normalize(text)) <= allowed


# ---------------------------------------------------------------- tokenize


def test_tokenize_detaches_punctuation():
    assert tokenize("really? yes.") == ["really", "?", "yes", "."]


def test_tokenize_keeps_internal_apostrophe():
    assert tokenize("it's fake") == ["it's", "fake"]


def test_tokenize_placeholders_survive():
    text = normalize("@who shared https://x.co 42 times", frozenset())
    toks = tokenize(text)
    assert "@user" in toks and "url" in toks and "<number>" in toks


def test_tokenize_leading_and_trailing_runs():
    assert tokenize("...wow!!") == [".", ".", ".", "wow", "!", "!"]


def test_tokenize_empty():
    assert tokenize("") == []


# ---------------------------------------------------------------- vocabulary


def make_vocab():
    docs = [["a", "b", "a"], ["a", "b", "c"], ["a", "b", "c"], ["d"]]
    return build_vocabulary(docs, min_count=3)


def test_vocabulary_reserved_ids():
    v = make_vocab()
    assert v.id_to_token[:4] == ["<pad>", "<s>", "</s>", "<unk>"]
    assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)


def test_vocabulary_frequency_order():
    v = make_vocab()
    # a:4, b:3 kept; c:2, d:1 dropped
    assert v.id_to_token[4:] == ["a", "b"]


def test_vocabulary_tie_breaks_lexicographic():
    docs = [["z", "a"]] * 3
    v = build_vocabulary(docs, min_count=3)
    assert v.id_to_token[4:] == ["a", "z"]


def test_vocabulary_min_count_boundary():
    docs = [["x"], ["x"], ["x"]]
    assert "x" in build_vocabulary(docs, min_count=3)
    assert "x" not in build_vocabulary(docs + [["y"]], min_count=4)


def test_encode_unknown_maps_to_unk():
    v = make_vocab()
    assert v.encode(["a", "zzz"]) == [v.token_to_id["a"], UNK]


def test_vocabulary_roundtrip(tmp_path):
    v = make_vocab()
    path = tmp_path / "vocab.tsv"
    v.save(path)
    loaded = Vocabulary.load(path)
    assert loaded.token_to_id == v.token_to_id
    assert loaded.counts == v.counts


def test_vocabulary_load_rejects_sparse_ids(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("<pad>\t0\t0\n<s>\t5\t0\n")
    with pytest.raises(ValueError, match="line 2"):
        Vocabulary.load(path)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "c", "d", "e"]), min_size=1, max_size=20))
def test_encode_decode_roundtrip_in_vocab(tokens):
    v = build_vocabulary([tokens] * 3, min_count=3)
    assert v.decode(v.encode(tokens)) == tokens


# ---------------------------------------------------------------- pairs and encoding


def test_raw_pair_validation():
    with pytest.raises(ValueError):
        RawPair("", "reply")
    with pytest.raises(ValueError):
        RawPair("orig", "reply", share_count=-1)
    with pytest.raises(ValueError):
        RawPair("orig", "reply", label="maybe")


def test_encode_pair_wraps_target():
    v = build_vocabulary([["fake", "news", "debunked"]] * 3, min_count=3)
    pair = encode_pair(RawPair("fake news", "debunked"), v)
    assert pair.target_ids[0] == BOS and pair.target_ids[-1] == EOS
    assert pair.source_ids == v.encode(["fake", "news"])


def test_encode_pair_truncates():
    v = build_vocabulary([["w"]] * 3, min_count=3)
    raw = RawPair(" ".join(["w"] * 200), " ".join(["w"] * 200))
    pair = encode_pair(raw, v, max_source_len=89, max_target_len=64)
    assert len(pair.source_ids) == 89
    assert len(pair.target_ids) == 64 + 2


def test_encode_pair_rejects_empty_after_normalize():
    v = make_vocab()
    with pytest.raises(ValueError):
        encode_pair(RawPair("❤", "fine"), v)


# ---------------------------------------------------------------- splits


def test_split_sizes_and_disjointness():
    pairs = list(range(103))
    train, val, test = split_dataset(pairs, SplitSpec(seed=1))
    assert len(train) == 82 and len(val) == 10 and len(test) == 11
    assert sorted(train + val + test) == pairs


def test_split_deterministic():
    pairs = list(range(50))
    a = split_dataset(pairs, SplitSpec(seed=7))
    b = split_dataset(pairs, SplitSpec(seed=7))
    assert a == b
    c = split_dataset(pairs, SplitSpec(seed=8))
    assert a != c


def test_split_matches_stdlib_shuffle():
    pairs = list(range(20))
    order = list(range(20))
    random.Random(3).shuffle(order)
    train, val, test = split_dataset(pairs, SplitSpec(seed=3))
    assert train == order[:16] and val == order[16:18] and test == order[18:]


def test_split_ratio_validation():
    with pytest.raises(ValueError):
        SplitSpec(train=0.9, validation=0.2, test=0.1)


# ---------------------------------------------------------------- batching


def test_make_batch_pads_and_records_lengths():
    batch = make_batch([EncodedPair([4, 5, 6], [1, 7, 2]), EncodedPair([8], [1, 9, 10, 2])])
    assert batch.source.shape == (2, 3)
    assert batch.source[1].tolist() == [8, PAD, PAD]
    assert batch.source_lengths.tolist() == [3, 1]
    assert batch.target.shape == (2, 4)
    assert batch.target[0].tolist() == [1, 7, 2, PAD]


def test_batches_cover_every_pair_once():
    pairs = [EncodedPair([4 + i], [1, 4 + i, 2]) for i in range(10)]
    seen = []
    for batch in batches(pairs, batch_size=3, shuffle_seed=5):
        assert batch.source.shape[0] <= 3
        seen.extend(batch.source[:, 0].tolist())
    assert sorted(seen) == sorted(p.source_ids[0] for p in pairs)


def test_batches_deterministic_under_seed():
    pairs = [EncodedPair([4 + i], [1, 4 + i, 2]) for i in range(10)]
    a = [b.source.tolist() for b in batches(pairs, 4, shuffle_seed=2)]
    b = [b.source.tolist() for b in batches(pairs, 4, shuffle_seed=2)]
    assert a == b


# ---------------------------------------------------------------- io and statistics


def test_dataset_roundtrip(tmp_path):
    pairs = [
        RawPair("fake claim", "debunk reply", 12, "false"),
        RawPair("other claim", "reply two"),
        RawPair("third", "reply", None, "true"),
    ]
    path = tmp_path / "data.tsv"
    write_dataset(path, pairs)
    assert read_dataset(path) == pairs


def test_read_dataset_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("a\tb\nonly-one-field\n")
    with pytest.raises(ValueError, match="line 2"):
        read_dataset(path)


def test_read_dataset_bad_extra_field(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("a\tb\tnot-a-number\n")
    with pytest.raises(ValueError, match="line 1"):
        read_dataset(path)


def test_corpus_statistics():
    pairs = [
        RawPair("one two three", "a b"),
        RawPair("one two", "a b c d"),
        RawPair("one", "a"),
    ]
    stats = corpus_statistics(pairs, min_count=3)
    assert stats["source_tokens_min"] == 1
    assert stats["source_tokens_max"] == 3
    assert stats["source_tokens_mean"] == pytest.approx(2.0)
    assert stats["reply_tokens_mean"] == pytest.approx(7 / 3)
    # one:3 and a:3 meet min_count; 4 reserved + 2
    assert stats["vocab_size"] == 6
