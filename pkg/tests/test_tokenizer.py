"""Vocabulary, id framing, and masking corruption."""

import numpy as np
import pytest

from moldae.selfies import split_selfies
from moldae.tokenizer import (
    BOS, EOS, MASK, PAD, UNK, VocabularyError,
    build_vocab, corrupt, decode_ids, encode_ids, load_vocab, save_vocab,
)


def toks(text):
    return split_selfies(text)


def test_build_vocab_counts():
    vocab = build_vocab([toks("[C][C]")])
    assert len(vocab) == 6
    vocab = build_vocab([toks("[C][=O]"), toks("[C]")])
    assert len(vocab) == 7


def test_build_vocab_deterministic_order():
    corpus = [toks("[N][C]"), toks("[O][C]")]
    v1 = build_vocab(corpus)
    v2 = build_vocab(corpus)
    assert v1.texts == v2.texts
    assert v1.texts[:5] == ("<pad>", "<bos>", "<eos>", "<mask>", "<unk>")
    assert v1.texts[5:] == ("[N]", "[C]", "[O]")  # first-appearance order


def test_build_vocab_rejects_empty():
    with pytest.raises(VocabularyError):
        build_vocab([])


def test_encode_ids_layout():
    vocab = build_vocab([toks("[C]")])
    ids = encode_ids(toks("[C]"), vocab)
    assert ids.tolist() == [BOS, 5, EOS]
    assert encode_ids((), vocab).tolist() == [BOS, EOS]


def test_unknown_token_maps_to_unk():
    vocab = build_vocab([toks("[C]")])
    ids = encode_ids(toks("[C][N]"), vocab)
    assert ids.tolist() == [BOS, 5, UNK, EOS]


def test_decode_ids_inverse():
    vocab = build_vocab([toks("[C][=O][Branch1]")])
    for text in ("[C]", "[C][=O]", "[Branch1][C][=O]"):
        ids = encode_ids(toks(text), vocab)
        assert decode_ids(ids, vocab) == toks(text)


def test_decode_ids_stops_at_eos_and_strips_specials():
    vocab = build_vocab([toks("[C][N]")])
    ids = np.array([BOS, 5, MASK, 6, EOS, 5, 5])
    assert [t.text for t in decode_ids(ids, vocab)] == ["[C]", "[N]"]
    with pytest.raises(VocabularyError):
        decode_ids(np.array([BOS, 99, EOS]), vocab)


def test_vocab_file_roundtrip(tmp_path):
    vocab = build_vocab([toks("[C][=O][N]")])
    path = tmp_path / "vocab.txt"
    save_vocab(vocab, path)
    lines = path.read_text().splitlines()
    assert lines[:5] == ["<pad>", "<bos>", "<eos>", "<mask>", "<unk>"]
    assert load_vocab(path).texts == vocab.texts
    path.write_text("bad\n" + "\n".join(lines[1:]))
    with pytest.raises(VocabularyError):
        load_vocab(path)


def test_corrupt_rate_zero_and_one():
    vocab = build_vocab([toks("[C][C][C][C]")])
    ids = encode_ids(toks("[C][C][C][C]"), vocab)
    pair = corrupt(ids, 0.0, np.random.default_rng(0))
    assert pair.mask_positions == ()
    assert (pair.x_corrupt == pair.y).all()
    pair = corrupt(ids, 1.0, np.random.default_rng(0))
    assert pair.mask_positions == (1, 2, 3, 4)
    assert (pair.x_corrupt[1:-1] == MASK).all()
    assert pair.x_corrupt[0] == BOS and pair.x_corrupt[-1] == EOS


def test_corrupt_differs_exactly_at_mask_positions():
    vocab = build_vocab([toks("[C][N][O][S][P][B]")])
    ids = encode_ids(toks("[C][N][O][S][P][B]"), vocab)
    pair = corrupt(ids, 0.5, np.random.default_rng(3))
    for i in range(len(ids)):
        if i in pair.mask_positions:
            assert pair.x_corrupt[i] == MASK and pair.y[i] != MASK
        else:
            assert pair.x_corrupt[i] == pair.y[i]


def test_corrupt_binomial_concentration():
    """Masked fraction over 1e5 content tokens lands within 0.15 +/- 0.01."""
    vocab = build_vocab([toks("[C]" * 100)])
    ids = encode_ids(toks("[C]" * 100), vocab)
    rng = np.random.default_rng(12)
    masked = content = 0
    for _ in range(1000):
        pair = corrupt(ids, 0.15, rng)
        masked += len(pair.mask_positions)
        content += 100
    assert content == 100_000
    assert abs(masked / content - 0.15) < 0.01


def test_corrupt_rejects_bad_rate():
    vocab = build_vocab([toks("[C]")])
    ids = encode_ids(toks("[C]"), vocab)
    with pytest.raises(ValueError):
        corrupt(ids, 1.5, np.random.default_rng(0))
