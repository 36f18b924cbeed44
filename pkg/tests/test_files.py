import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bellsim import files
from bellsim.analysis import ConvexDecomposition
from bellsim.bell import behaviour_of, chsh_canonical, coins_correlated
from bellsim.cli import gallery_artifacts
from bellsim.files import FormatError, InvariantError
from bellsim.sampling import random_strategy
from bellsim.simulation import lemma49_convert, verify_causal, verify_local
from cases import lemma49_chsh_case, local_witness_gallery

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=12))
def test_complex_encoding_is_exact(pairs):
    a = np.array([complex(r, i) for r, i in pairs])
    back = files.decode_array(json.loads(json.dumps(files.encode_array(a))))
    assert np.array_equal(back.view(np.uint64), a.view(np.uint64))


@given(st.lists(finite, min_size=1, max_size=12))
def test_real_encoding_is_exact(values):
    a = np.array(values)
    back = files.decode_real(json.loads(json.dumps(files.encode_real(a))))
    assert np.array_equal(back, a)


@pytest.mark.parametrize("name", ["chsh_canonical", "coins_correlated", "coins_general"])
def test_gallery_artifacts_round_trip_bytes(name, tmp_path):
    for fname, doc in gallery_artifacts(name).items():
        first = tmp_path / fname
        files.write(first, doc)
        loaded = files.read(first)
        if loaded["schema"] == "bellsim.strategy":
            again = files.strategy_doc(files.strategy_from(loaded))
        else:
            again = files.witness_doc(files.witness_from(loaded))
        second = tmp_path / ("again-" + fname)
        files.write(second, again)
        assert first.read_bytes() == second.read_bytes()


def test_strategy_round_trip_values(tmp_path):
    s = random_strategy((2, 3), (3, 2), (2, 3), rng=5)
    files.save_strategy(s, tmp_path / "s.json")
    t = files.load_strategy(tmp_path / "s.json")
    assert np.array_equal(t.state, s.state)
    assert all(np.array_equal(a, b) for p, q in zip(s.povm_a, t.povm_a) for a, b in zip(p, q))


def test_witness_round_trips_still_verify(tmp_path):
    for name, s, s_t, w in local_witness_gallery():
        files.save_witness(w, tmp_path / f"{name}.json")
        assert verify_local(s, s_t, files.load_witness(tmp_path / f"{name}.json")).passed
    s, s_t, w = lemma49_chsh_case()
    w2, _, _ = lemma49_convert(w, s, s_t)
    files.save_witness(w2, tmp_path / "w2.json")
    back = files.load_witness(tmp_path / "w2.json")
    assert len(back.isometries["A"]) == 2


def test_coins_causal_witness_file(tmp_path):
    docs = gallery_artifacts("coins_correlated")
    c = files.strategy_from(docs["coins_correlated.strategy.json"])
    g = files.strategy_from(docs["coins_general.strategy.json"])
    w = files.witness_from(docs["coins_causal.witness.json"])
    assert verify_causal(c, g, w).passed


def test_behaviour_and_decomposition_docs():
    p = behaviour_of(chsh_canonical())
    back = files.behaviour_from(json.loads(files.dumps(files.behaviour_doc(p))))
    assert np.array_equal(back.table, p.table)
    k = behaviour_of(coins_correlated())
    d = files.decomposition_from(files.decomposition_doc([(1.0, k)]))
    assert isinstance(d, ConvexDecomposition) and d.is_trivial()


def test_malformed_json_has_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "schema": "bellsim.strategy",\n "version": 1,\n')
    with pytest.raises(FormatError, match=r"line \d+ column \d+"):
        files.read(path)


@pytest.mark.parametrize("mutate, error", [
    (lambda d: d.update(version=99), FormatError),
    (lambda d: d.update(schema="other"), FormatError),
    (lambda d: d.pop("state"), FormatError),
    (lambda d: d.update(dims=[2]), FormatError),
    (lambda d: d.update(state=[["x", "0"]]), FormatError),
    (lambda d: d.update(state=files.encode_array(np.eye(4) / 2)), InvariantError),
    (lambda d: d.update(povm_a=[[files.encode_array(np.eye(2)), files.encode_array(np.eye(2))]] * 2),
     InvariantError),
])
def test_strategy_errors(tmp_path, mutate, error):
    doc = files.strategy_doc(chsh_canonical())
    mutate(doc)
    path = tmp_path / "s.json"
    path.write_text(files.dumps(doc))
    with pytest.raises(error):
        files.load_strategy(path)


def test_invalid_behaviour_table():
    doc = files.behaviour_doc(behaviour_of(coins_correlated()))
    doc["table"] = files.encode_real(np.full((1, 1, 2, 2), 0.3))
    with pytest.raises(InvariantError):
        files.behaviour_from(doc)


def test_witness_errors():
    doc = files.witness_doc(local_witness_gallery()[0][3])
    doc["channels"]["A"]["choi"] = files.encode_array(np.eye(64))
    with pytest.raises(InvariantError):
        files.witness_from(doc)
    doc = files.witness_doc(local_witness_gallery()[0][3])
    doc["kind"] = "mystery"
    with pytest.raises(FormatError):
        files.witness_from(doc)
