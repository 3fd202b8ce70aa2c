"""Activation file format: round-trip identity, located corruption
errors, synthetic-set properties."""

import struct
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metaprobe.apf import (ActivationHeader, ActivationRecord,
                           ActivationSetReader, SynthSpec, read_activation_set,
                           synth_activations, write_activation_set)
from metaprobe.errors import (CorruptionError, DimensionMismatchError,
                              FormatError)
from tests.conftest import make_synth, nearest_centroid_accuracy
from metaprobe.probe import ProbeDataset


def _random_set(rng, n, L, H, K, max_span=4):
    labels = rng.integers(0, K, size=n)
    records = [
        ActivationRecord(
            example_id=int(1000 + i), label=int(labels[i]),
            tensor=rng.standard_normal(
                (L, int(rng.integers(1, max_span + 1)), H)).astype(np.float32))
        for i in range(n)
    ]
    header = ActivationHeader(num_layers=L, hidden_dim=H, num_classes=K,
                              num_examples=n,
                              metadata={"encoder": "x", "lang": "en"})
    return header, records


@given(st.integers(1, 6), st.integers(1, 3), st.integers(1, 5),
       st.integers(2, 4), st.integers(0, 2 ** 31 - 1))
def test_round_trip_identity(tmp_path_factory, n, L, H, K, seed):
    rng = np.random.default_rng(seed)
    header, records = _random_set(rng, n, L, H, K)
    path = tmp_path_factory.mktemp("apf") / "set.apf"
    write_activation_set(header, records, path)
    with read_activation_set(path) as reader:
        assert reader.header.num_layers == L
        assert reader.header.hidden_dim == H
        assert reader.header.num_classes == K
        assert reader.header.num_examples == n
        assert reader.header.metadata == header.metadata
        got = list(reader)
    assert got == records


def test_write_is_deterministic(tmp_path):
    rng = np.random.default_rng(7)
    header, records = _random_set(rng, 5, 2, 4, 3)
    p1, p2 = tmp_path / "a.apf", tmp_path / "b.apf"
    write_activation_set(header, records, p1)
    write_activation_set(header, records, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_random_access_matches_iteration(tmp_path):
    rng = np.random.default_rng(3)
    header, records = _random_set(rng, 8, 2, 4, 2)
    path = tmp_path / "set.apf"
    write_activation_set(header, records, path)
    with read_activation_set(path) as reader:
        assert [reader[i] for i in range(len(reader))] == list(reader)
        assert reader.example_ids().tolist() == [r.example_id for r in records]
        assert reader.labels().tolist() == [r.label for r in records]
        with pytest.raises(IndexError):
            reader[len(reader)]


def test_concurrent_reads_are_consistent(tmp_path):
    rng = np.random.default_rng(11)
    header, records = _random_set(rng, 40, 3, 8, 2)
    path = tmp_path / "set.apf"
    write_activation_set(header, records, path)
    with read_activation_set(path) as reader:
        idx = list(range(len(reader))) * 4
        with ThreadPoolExecutor(max_workers=8) as pool:
            got = list(pool.map(lambda i: reader[i], idx))
    assert got == [records[i] for i in idx]


def test_corrupted_magic_rejected(tmp_path):
    rng = np.random.default_rng(5)
    header, records = _random_set(rng, 2, 1, 3, 2)
    path = tmp_path / "set.apf"
    write_activation_set(header, records, path)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="bad magic"):
        read_activation_set(path)


def test_truncation_rejected_with_offset(tmp_path):
    rng = np.random.default_rng(6)
    header, records = _random_set(rng, 3, 2, 4, 2)
    path = tmp_path / "set.apf"
    write_activation_set(header, records, path)
    raw = path.read_bytes()
    # header, metadata, offset table, and final tensor truncations
    for cut in (4, 20, len(raw) - 1):
        trunc = tmp_path / f"cut{cut}.apf"
        trunc.write_bytes(raw[:cut])
        with pytest.raises(CorruptionError) as err:
            with read_activation_set(trunc) as reader:
                reader[len(reader) - 1]
        assert err.value.offset == cut  # error locates the broken byte
        assert str(trunc) in str(err.value)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.apf"
    path.write_bytes(b"")
    with pytest.raises(CorruptionError):
        read_activation_set(path)


def test_nonmonotonic_offset_table_rejected(tmp_path):
    rng = np.random.default_rng(9)
    header, records = _random_set(rng, 3, 1, 2, 2)
    path = tmp_path / "set.apf"
    write_activation_set(header, records, path)
    raw = bytearray(path.read_bytes())
    meta_len = struct.unpack_from("<I", raw, 32)[0]  # last header field
    table = 36 + meta_len
    first = raw[table:table + 8]
    raw[table:table + 8] = raw[table + 8:table + 16]
    raw[table + 8:table + 16] = first
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptionError, match="strictly increasing"):
        read_activation_set(path)


def test_writer_validates_record_shape(tmp_path):
    header = ActivationHeader(num_layers=2, hidden_dim=3, num_classes=2,
                              num_examples=1)
    bad = ActivationRecord(example_id=0, label=0,
                           tensor=np.zeros((1, 2, 3), dtype=np.float32))
    with pytest.raises(DimensionMismatchError, match="record 0"):
        write_activation_set(header, [bad], tmp_path / "x.apf")


def test_writer_validates_record_count(tmp_path):
    rng = np.random.default_rng(2)
    header, records = _random_set(rng, 3, 1, 2, 2)
    with pytest.raises(DimensionMismatchError, match="3"):
        write_activation_set(header, records[:2], tmp_path / "x.apf")
    with pytest.raises(DimensionMismatchError):
        write_activation_set(header, records + records[:1],
                             tmp_path / "y.apf")


def test_writer_validates_label_range(tmp_path):
    header = ActivationHeader(num_layers=1, hidden_dim=2, num_classes=2,
                              num_examples=1)
    bad = ActivationRecord(example_id=0, label=2,
                           tensor=np.zeros((1, 1, 2), dtype=np.float32))
    with pytest.raises(DimensionMismatchError):
        write_activation_set(header, [bad], tmp_path / "x.apf")


def test_synth_determinism():
    a = make_synth(n=30, seed=42, signal_layer=1, strength=3.0)
    b = make_synth(n=30, seed=42, signal_layer=1, strength=3.0)
    assert list(a) == list(b)
    c = make_synth(n=30, seed=43, signal_layer=1, strength=3.0)
    assert list(a) != list(c)


def test_synth_signal_is_layer_local():
    """Nearest-centroid oracle: the planted layer separates the classes,
    every other layer stays near chance."""
    data = ProbeDataset.from_activation_set(
        make_synth(n=600, layers=4, hidden=16, seed=1, signal_layer=2,
                   strength=4.0))
    split_tr = data.subset(range(0, 400))
    split_te = data.subset(range(400, 600))
    assert nearest_centroid_accuracy(split_tr, split_te, 2) >= 0.95
    for layer in (0, 1, 3):
        assert nearest_centroid_accuracy(split_tr, split_te, layer) <= 0.65


def test_synth_zero_signal_is_chance():
    data = ProbeDataset.from_activation_set(
        make_synth(n=600, layers=3, hidden=16, seed=4))
    tr, te = data.subset(range(0, 400)), data.subset(range(400, 600))
    for layer in range(3):
        assert nearest_centroid_accuracy(tr, te, layer) <= 0.65


def test_synth_validates_spec():
    with pytest.raises(ValueError):
        SynthSpec(num_examples=10, num_layers=2, hidden_dim=4,
                  num_classes=2, seed=0, signal_layer=5,
                  signal_strength=1.0).validate()
    with pytest.raises(ValueError):
        SynthSpec(num_examples=10, num_layers=2, hidden_dim=4,
                  num_classes=1, seed=0).validate()
