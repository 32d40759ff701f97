import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from pfmalware.encoder import (
    OOV,
    PAD,
    SequenceEncoder,
    build_vocabulary,
    decode,
    encode,
    encode_batch,
    extend_vocabulary,
    load_vocabulary,
    save_vocabulary,
)
from pfmalware.exceptions import EmptyCorpus

CORPUS = [["A"] * 3 + ["B"] * 2, ["A", "A", "B", "B", "B", "C"]]      # A:5, B:5, C:1


def test_min_count_two():
    vocab = build_vocabulary(CORPUS, min_count=2)
    assert vocab.index_to_token == ["<PAD>", "<OOV>", "A", "B"]
    assert vocab.lookup("A") == 2 and vocab.lookup("B") == 3


def test_min_count_one_includes_rare():
    assert build_vocabulary(CORPUS, min_count=1).lookup("C") == 4


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        build_vocabulary([[], []])


def test_reserved_names_are_not_tokens():
    vocab = build_vocabulary([["<PAD>", "<OOV>"]])
    assert vocab.lookup("<OOV>") == 2 and vocab.lookup("<PAD>") == 3
    assert len(vocab) == 4


def test_encode_example():
    enc = encode(build_vocabulary(CORPUS, 2), ["A", "Z"], max_len=4)
    assert enc.indices.tolist() == [2, OOV, PAD, PAD] and enc.true_length == 2


def test_head_truncation():
    vocab = build_vocabulary([[f"T{i}" for i in range(300)]])
    seq = [f"T{i}" for i in range(300)]
    enc = encode(vocab, seq, max_len=256)
    assert enc.true_length == 256
    assert decode(vocab, enc) == tuple(seq[:256])


def test_empty_sequence():
    enc = encode(build_vocabulary(CORPUS), [], max_len=5)
    assert enc.indices.tolist() == [PAD] * 5 and enc.true_length == 0


token = st.text(alphabet="ABCDEFG\\.", min_size=1, max_size=6)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(token, max_size=30), min_size=1, max_size=8).filter(lambda c: any(c)),
       st.integers(1, 40), st.randoms())
def test_vocabulary_properties(corpus, max_len, rnd):
    vocab = build_vocabulary(corpus)
    shuffled = list(corpus)
    rnd.shuffle(shuffled)
    assert build_vocabulary(shuffled) == vocab
    idx, lengths = encode_batch(vocab, corpus + [["never-seen"]], max_len)
    assert idx.max() < len(vocab) and idx.min() >= 0
    for seq, row, n in zip(corpus, idx, lengths):
        assert (row[n:] == PAD).all()
        if len(seq) <= max_len:
            assert decode(vocab, encode(vocab, seq, max_len)) == tuple(seq)


def test_extend_keeps_existing_indices():
    vocab = build_vocabulary(CORPUS)
    wider = extend_vocabulary(vocab, [["D", "D", "A", "E"]])
    assert wider.index_to_token[:len(vocab)] == vocab.index_to_token
    assert wider.index_to_token[len(vocab):] == ["D", "E"]


def test_tsv_round_trip(tmp_path):
    vocab = build_vocabulary(CORPUS + [["\\WINDOWS\\Ä.DLL"]])
    save_vocabulary(vocab, tmp_path / "vocab.tsv")
    loaded = load_vocabulary(tmp_path / "vocab.tsv")
    assert loaded == vocab and loaded.digest() == vocab.digest()
    assert (tmp_path / "vocab.tsv").read_text(encoding="utf-8").splitlines()[2] == "2\tA\t5"


def test_sequence_encoder_estimator():
    enc = SequenceEncoder(max_len=3, min_count=2)
    assert clone(enc).get_params() == {"max_len": 3, "min_count": 2}
    out = enc.fit_transform(CORPUS)
    assert out.shape == (2, 3) and out.dtype == np.int32


def test_sequence_encoder_rejects_bare_string():
    with pytest.raises(TypeError):
        SequenceEncoder().fit("ABC")
